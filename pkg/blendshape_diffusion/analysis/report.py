"""
Dataset evaluation: pair prediction and ground-truth EDBS files by id, compute per-sequence
metrics, and write the tab-separated report (header, rows, mean footer).
"""
import logging
from dataclasses import dataclass
from os.path import join
import pandas as pd
from blendshape_diffusion.analysis.metrics import sequence_metrics
from blendshape_diffusion.sequences.blendshapes import FacePartition
from blendshape_diffusion.sequences.io import load_sequence
from blendshape_diffusion.shared.constants import EBE_SCALE, FBE_SCALE, FDD_SCALE, SEQUENCE_SUFFIX
from blendshape_diffusion.shared.exceptions import MissingPairError
from blendshape_diffusion.util.file import list_files_in_directory
from blendshape_diffusion.util.workers import ordered_map

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["fbe", "ebe", "fdd", "fbe_mouth"]
FLOAT_FORMAT = "%.12g"


@dataclass
class EvalReport:
    """Dataset means of the raw metrics with the per-sequence breakdown, ordered by id"""

    fbe: float
    ebe: float
    fdd: float
    fbe_mouth: float
    per_sequence: pd.DataFrame

    @property
    def count(self):
        """Number of evaluated sequences"""
        return len(self.per_sequence)

    def scaled(self):
        """Headline values in presentation units: FBE and EBE ×10², FDD ×10⁴"""
        return {
            "fbe": self.fbe * FBE_SCALE,
            "ebe": self.ebe * EBE_SCALE,
            "fdd": self.fdd * FDD_SCALE,
            "fbe_mouth": self.fbe_mouth * FBE_SCALE,
        }

    def headline(self):
        """One line for the console"""
        scaled = self.scaled()
        return (
            f"FBE {scaled['fbe']:.4f}e-2  EBE {scaled['ebe']:.4f}e-2  FDD {scaled['fdd']:.4f}e-4  "
            f"(mouth FBE {scaled['fbe_mouth']:.4f}e-2, {self.count} sequences)"
        )


def _ids(directory):
    return {name[: -len(SEQUENCE_SUFFIX)] for name in list_files_in_directory(directory, SEQUENCE_SUFFIX)}


def pair_ids(pred_dir, gt_dir):
    """
    Sorted ids present in both directories.

    :raises MissingPairError: listing every id found on one side only
    """
    pred_ids, gt_ids = _ids(pred_dir), _ids(gt_dir)
    missing = pred_ids ^ gt_ids
    if missing:
        raise MissingPairError(
            f"Sequences without a counterpart: {', '.join(sorted(missing))}", missing_ids=missing
        )
    return sorted(pred_ids)


def summarize(rows):
    """Build an EvalReport from per-sequence metric dicts that carry an 'id' key"""
    table = pd.DataFrame(rows, columns=["id"] + METRIC_COLUMNS).sort_values("id").reset_index(drop=True)
    means = {column: float(table[column].mean()) if len(table) else 0.0 for column in METRIC_COLUMNS}
    return EvalReport(per_sequence=table, **means)


def write_report(report, path):
    """Header line, one tab-separated row per sequence, then a '#mean' footer row"""
    body = report.per_sequence.to_csv(sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    footer = "\t".join(["#mean"] + [FLOAT_FORMAT % getattr(report, column) for column in METRIC_COLUMNS])
    with open(path, "w", encoding="utf-8", newline="\n") as file_obj:
        file_obj.write(body + footer + "\n")
    logger.info("Wrote evaluation report %s", path)


def plot_report(report, path):
    """Line plot of the per-sequence metrics"""
    import matplotlib  # pylint: disable=import-outside-toplevel

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt  # pylint: disable=import-outside-toplevel

    fig, axes = plt.subplots(len(METRIC_COLUMNS), 1, figsize=(8, 2.2 * len(METRIC_COLUMNS)), sharex=True)
    positions = range(report.count)
    for axis, column in zip(axes, METRIC_COLUMNS):
        axis.plot(positions, report.per_sequence[column], marker="o", markersize=3)
        axis.axhline(getattr(report, column), linestyle="--", color="gray")
        axis.set_ylabel(column)
        axis.grid(linestyle="--")
    axes[-1].set_xlabel("sequence (sorted by id)")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    logger.info("Wrote metric plot %s", path)


def evaluate_dataset(pred_dir, gt_dir, part=None, out_path=None, plot_path=None):
    """
    Evaluate every prediction against its ground truth.

    :param pred_dir: directory of predicted .edbs files
    :param gt_dir: directory of ground-truth .edbs files with the same ids
    :param out_path: report file to write, optional
    :param plot_path: image file for the per-sequence plot, optional
    :rtype: EvalReport
    """
    part = part or FacePartition.default()
    ids = pair_ids(pred_dir, gt_dir)

    def _one(sequence_id):
        pred = load_sequence(join(pred_dir, sequence_id + SEQUENCE_SUFFIX))
        gt = load_sequence(join(gt_dir, sequence_id + SEQUENCE_SUFFIX))
        row = {"id": sequence_id}
        row.update(sequence_metrics(pred, gt, part))
        return row

    report = summarize(ordered_map(_one, ids))
    if out_path:
        write_report(report, out_path)
    if plot_path:
        plot_report(report, plot_path)
    logger.info(report.headline())
    return report
