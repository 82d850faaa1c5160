"""
Run one ablation axis and write its comparison table.
"""
import logging
import click
from blendshape_diffusion.analysis.ablation import ABLATION_AXES, run_ablation
from blendshape_diffusion.command.options import config_option, global_options, log_level_option, manifest_option
from blendshape_diffusion.configuration.run_config import cli_overrides, load_run_config
from blendshape_diffusion.util.logging import configure_logging

logger = logging.getLogger(__name__)


@click.command(short_help="Run the variants of one ablation axis with a shared seed and budget.")
@config_option
@manifest_option
@click.option("--axis", type=click.Choice(list(ABLATION_AXES)), required=True, help="Ablation axis")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory")
@click.option("--force", is_flag=True, default=False, help="Overwrite existing variant runs")
@log_level_option
@click.pass_context
def ablate(ctx, config_file, manifest, axis, out, force, log_level):
    """
    Train, sample and evaluate every variant of --axis, then write ablation-<axis>.md and .tsv.
    Without a manifest a synthetic dataset is generated once under --out/data.
    """
    configure_logging(log_level)
    options = global_options(ctx)
    run_config = load_run_config(
        config_file, options["profile"], cli_overrides(options, **{"dataset.manifest": manifest})
    )
    table = run_ablation(run_config, axis, out, profile=options["profile"], force=force)
    print(table.to_string(index=False))
