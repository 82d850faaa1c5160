"""
Generate a blendshape sequence for an audio feature file.
"""
import logging
import click
from blendshape_diffusion.command.options import global_options, log_level_option
from blendshape_diffusion.models.diffusion import SAMPLERS
from blendshape_diffusion.shared.exceptions import ConfigurationError
from blendshape_diffusion.training.sampling import sample_to_file
from blendshape_diffusion.util.logging import configure_logging
from blendshape_diffusion.util.seeding import set_precision, seed_everything

logger = logging.getLogger(__name__)


@click.command(short_help="Sample a blendshape sequence for an audio feature file.")
@click.option("--audio", type=click.Path(exists=True, dir_okay=False), required=True, help="EDAF audio feature file")
@click.option("--upper-ckpt", type=click.Path(exists=True, dir_okay=False), help="Upper-face denoiser checkpoint")
@click.option("--mouth-ckpt", type=click.Path(exists=True, dir_okay=False), help="Mouth denoiser checkpoint")
@click.option(
    "--full-ckpt",
    type=click.Path(exists=True, dir_okay=False),
    help="Single-latent full-face denoiser checkpoint, instead of --upper-ckpt and --mouth-ckpt",
)
@click.option("--steps", type=int, default=50, show_default=True, help="Reverse diffusion steps")
@click.option("--sampler", type=click.Choice(SAMPLERS), default="ddpm", show_default=True)
@click.option("--seed", type=int, default=None, help="Sampling seed. Defaults to the global --seed, then 0.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output EDBS file")
@log_level_option
@click.pass_context
def sample(ctx, audio, upper_ckpt, mouth_ckpt, full_ckpt, steps, sampler, seed, out, log_level):
    """
    Embed the audio, sample both region latents, decode, merge, clamp to [0, 1] and write the sequence.
    """
    configure_logging(log_level)
    options = global_options(ctx)
    if seed is None:
        seed = options.get("seed") or 0
    sample_sequence_file(audio, out, upper_ckpt, mouth_ckpt, full_ckpt, steps, seed, sampler, options.get("precision"))
    print(out)


def sample_sequence_file(audio, out, upper_ckpt=None, mouth_ckpt=None, full_ckpt=None, steps=50, seed=0, sampler="ddpm", precision=None):
    """
    Library entry point for sample.

    :raises ConfigurationError: unless exactly one of (upper and mouth) or full is given
    """
    if full_ckpt and (upper_ckpt or mouth_ckpt):
        raise ConfigurationError("Pass either --full-ckpt or --upper-ckpt with --mouth-ckpt, not both")
    if not full_ckpt and not (upper_ckpt and mouth_ckpt):
        raise ConfigurationError("Sampling needs --upper-ckpt and --mouth-ckpt, or --full-ckpt")
    if precision:
        set_precision(precision)
    seed_everything(seed)
    bundles = [full_ckpt] if full_ckpt else [upper_ckpt, mouth_ckpt]
    return sample_to_file(bundles, audio, out, steps=steps, seed=seed, sampler=sampler)
