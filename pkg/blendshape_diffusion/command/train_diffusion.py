"""
Train a region denoiser against a frozen VAE (and, for the upper face, the frozen emotion adapter).
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
from blendshape_diffusion.training.diffusion import train_diffusion as train_region_denoiser
from blendshape_diffusion.util.logging import configure_logging

logger = logging.getLogger(__name__)


@click.command(name="train-diff", short_help="Train the latent denoiser of one face region.")
@region_option
@config_option
@manifest_option
@click.option("--vae-ckpt", type=click.Path(exists=True, dir_okay=False), required=True, help="Region VAE checkpoint")
@click.option(
    "--adapter-ckpt",
    type=click.Path(exists=True, dir_okay=False),
    required=False,
    help="Emotion adapter checkpoint. Required for the upper face when lambda_adapter > 0.",
)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Checkpoint path")
@log_level_option
@click.pass_context
def train_diffusion(ctx, region, config_file, manifest, vae_ckpt, adapter_ckpt, out, log_level):
    """
    Freeze the VAE (and adapter), train the denoiser, and save a checkpoint that carries the
    VAE and the noise schedule so sampling needs nothing else.
    """
    configure_logging(log_level)
    options = global_options(ctx)
    run_config = load_run_config(
        config_file, options["profile"], cli_overrides(options, **{"dataset.manifest": manifest})
    )
    result = train_region_denoiser(run_config, region, run_config.manifest_path, vae_ckpt, out, adapter_ckpt)
    print(f"{out}\tfinal_l_lat {result.history[-1] if result.history else float('nan'):.6f}")
