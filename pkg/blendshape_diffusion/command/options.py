"""
Options shared by several commands.
"""
import click
from blendshape_diffusion.util.logging import LOG_LEVELS

log_level_option = click.option(
    "--log-level",
    help="Set the logging level. Choices are CRITICAL, ERROR, WARNING, INFO, or DEBUG. Defaults to INFO.",
    type=click.Choice(LOG_LEVELS),
    default="INFO",
)
config_option = click.option(
    "--config",
    "config_file",
    type=click.Path(exists=True, dir_okay=False),
    required=False,
    help="YAML run configuration merged over the selected profile",
)
manifest_option = click.option(
    "--manifest",
    type=click.Path(exists=True, dir_okay=False),
    required=False,
    help="Dataset manifest. Overrides dataset.manifest from the configuration.",
)
region_option = click.option(
    "--region",
    type=click.Choice(["upper", "mouth", "full"]),
    required=True,
    help="Face region; 'full' is the single-latent ablation",
)


def global_options(ctx):
    """seed, precision and profile set on the command group, with defaults for direct invocation"""
    options = dict(ctx.obj or {})
    options.setdefault("profile", "tiny")
    return options
