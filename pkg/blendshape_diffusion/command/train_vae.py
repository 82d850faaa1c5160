"""
Train a region VAE.
"""
import logging
import click
from blendshape_diffusion.command.options import (
    config_option,
    global_options,
    log_level_option,
    manifest_option,
    region_option,
)
from blendshape_diffusion.configuration.run_config import cli_overrides, load_run_config
from blendshape_diffusion.training.vae import train_vae as train_region_vae
from blendshape_diffusion.util.logging import configure_logging

logger = logging.getLogger(__name__)


@click.command(name="train-vae", short_help="Train the VAE of one face region.")
@region_option
@config_option
@manifest_option
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Checkpoint path")
@log_level_option
@click.pass_context
def train_vae(ctx, region, config_file, manifest, out, log_level):
    """
    Train a region VAE and save its best-validation checkpoint. The training log is written next to it.
    """
    configure_logging(log_level)
    options = global_options(ctx)
    run_config = load_run_config(
        config_file, options["profile"], cli_overrides(options, **{"dataset.manifest": manifest})
    )
    result = train_region_vae(run_config, region, run_config.manifest_path, out)
    print(f"{out}\tinitial_val_mse {result.initial_val_mse:.6f}\tbest_val_mse {result.best_val_mse:.6f}")
