"""
blendshape-diffusion command line.
"""
import logging
import click
from blendshape_diffusion import command
from blendshape_diffusion.shared.constants import PROFILE_NAMES
from blendshape_diffusion.shared.exceptions import BlendshapeDiffusionError

__version__ = "0.1.0"

logger = logging.getLogger(__name__)


class ExitCodeGroup(click.Group):
    """Maps errors to exit codes: 2 for a numerical abort, 1 for everything else, usage errors included"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as u_e:
            u_e.exit_code = 1
            raise
        except BlendshapeDiffusionError as error:
            logger.critical(error)
            ctx.exit(error.exit_code)


@click.group(cls=ExitCodeGroup)
@click.version_option(version=__version__)
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Run seed. Overrides the profile.")
@click.option("--precision", type=click.Choice(["32", "64"]), default=None, help="Float precision in bits")
@click.option("--profile", type=click.Choice(PROFILE_NAMES), default="tiny", show_default=True)
@click.pass_context
def blendshape_diffusion(ctx, seed, precision, profile):
    """
    Emotion-aware speech-driven blendshape animation with dual latent diffusion.
    """
    ctx.obj = {"seed": seed, "precision": int(precision) if precision else None, "profile": profile}


blendshape_diffusion.add_command(command.gen_data.gen_data)
blendshape_diffusion.add_command(command.train_vae.train_vae)
blendshape_diffusion.add_command(command.pretrain_adapter.pretrain_adapter)
blendshape_diffusion.add_command(command.train_diffusion.train_diffusion)
blendshape_diffusion.add_command(command.sample.sample)
blendshape_diffusion.add_command(command.evaluate.evaluate)
blendshape_diffusion.add_command(command.ablate.ablate)


def main():
    """Console script entry point"""
    blendshape_diffusion()  # pylint: disable=no-value-for-parameter


if __name__ == "__main__":
    main()
