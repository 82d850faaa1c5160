"""
Pretrain and freeze the emotion adapter.
"""
import logging
import click
from blendshape_diffusion.command.options import config_option, global_options, log_level_option, manifest_option
from blendshape_diffusion.configuration.run_config import cli_overrides, load_run_config
from blendshape_diffusion.training.adapter import pretrain_adapter as pretrain_emotion_adapter
from blendshape_diffusion.util.logging import configure_logging

logger = logging.getLogger(__name__)


@click.command(name="pretrain-adapter", short_help="Pretrain the emotion adapter on ground-truth upper faces.")
@config_option
@manifest_option
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Checkpoint path")
@log_level_option
@click.pass_context
def pretrain_adapter(ctx, config_file, manifest, out, log_level):
    """
    Train the emotion adapter with cross-entropy on the train split, freeze it and save it.
    """
    configure_logging(log_level)
    options = global_options(ctx)
    run_config = load_run_config(
        config_file, options["profile"], cli_overrides(options, **{"dataset.manifest": manifest})
    )
    result = pretrain_emotion_adapter(run_config, run_config.manifest_path, out)
    print(f"{out}\tval_accuracy {result.val_accuracy:.4f}")
