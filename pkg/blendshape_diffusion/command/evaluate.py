"""
Evaluate predicted sequences against ground truth.
"""
import logging
import click
from blendshape_diffusion.analysis.report import evaluate_dataset
from blendshape_diffusion.command.options import log_level_option
from blendshape_diffusion.util.logging import configure_logging

logger = logging.getLogger(__name__)


@click.command(name="eval", short_help="Compute FBE, EBE and FDD for a directory of predictions.")
@click.option("--pred", type=click.Path(exists=True, file_okay=False), required=True, help="Predicted EDBS directory")
@click.option("--gt", type=click.Path(exists=True, file_okay=False), required=True, help="Ground-truth EDBS directory")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Report file")
@click.option("--plot", type=click.Path(dir_okay=False), required=False, help="Optional image of per-sequence metrics")
@log_level_option
def evaluate(pred, gt, out, plot, log_level):
    """
    Pair sequences by id, write the tab-separated report, and print the headline numbers
    in presentation units.
    """
    configure_logging(log_level)
    report = evaluate_dataset(pred, gt, out_path=out, plot_path=plot)
    print(report.headline())
