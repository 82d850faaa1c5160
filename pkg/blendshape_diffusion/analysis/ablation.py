"""
Ablation runner: the same dataset, seed and budget for every variant of one axis, summarised
as a Markdown table and a tab-separated file.
"""
import logging
from collections import OrderedDict
from os.path import join, exists
import pandas as pd
from jinja2 import Environment, FileSystemLoader
from blendshape_diffusion.sequences.io import read_manifest
from blendshape_diffusion.sequences.synthetic import generate_synthetic_dataset
from blendshape_diffusion.shared.constants import MANIFEST_FILE_NAME, TEMPLATES_DIRECTORY
from blendshape_diffusion.shared.exceptions import ConfigurationError
from blendshape_diffusion.training.adapter import pretrain_adapter
from blendshape_diffusion.training.pipeline import run_pipeline
from blendshape_diffusion.util.file import create_directory_if_it_doesnt_exist, prepare_output_directory

logger = logging.getLogger(__name__)

ABLATION_DATASET_SIZE = 90
LAMBDA_RATIOS = (10.0, 1.0, 0.1)


def _lambda_variant(ratio):
    return {"loss.lambda_lat": 1.0, "loss.lambda_adapter": 1.0 / ratio}


# Each axis maps a variant label to section-prefixed overrides.
ABLATION_AXES = OrderedDict(
    [
        ("latent_shape", OrderedDict((f"n={n}", {"vae.latent_tokens": n}) for n in (1, 3, 5))),
        (
            "conditioning",
            OrderedDict(
                (mode, {"denoiser.conditioning": mode}) for mode in ("concat", "cross_attention")
            ),
        ),
        ("layers", OrderedDict((f"layers={n}", {"denoiser.layers": n}) for n in (7, 9, 11))),
        ("lambda", OrderedDict((f"ratio={ratio:g}", _lambda_variant(ratio)) for ratio in LAMBDA_RATIOS)),
        (
            "structure",
            OrderedDict(
                [("dual latent", {"ablation.single_latent": False}), ("single latent", {"ablation.single_latent": True})]
            ),
        ),
    ]
)


def axis_variants(axis):
    """Variant label → overrides for one axis"""
    if axis not in ABLATION_AXES:
        raise ConfigurationError(f"Unknown ablation axis {axis!r}; choose one of {list(ABLATION_AXES)}")
    return ABLATION_AXES[axis]


def render_table(axis, rows, profile, dataset_seed, run_seed):
    """Markdown comparison table from the bundled template"""
    env = Environment(loader=FileSystemLoader(TEMPLATES_DIRECTORY), keep_trailing_newline=True)
    template = env.get_template("ablation-table.md.j2")
    return template.render(axis=axis, rows=rows, profile=profile, dataset_seed=dataset_seed, run_seed=run_seed)


def ensure_dataset(run_config, out_dir):
    """The configured manifest, or a synthetic dataset generated once under out_dir/data"""
    if run_config.manifest_path:
        return read_manifest(run_config.manifest_path)
    data_dir = join(out_dir, "data")
    manifest_path = join(data_dir, MANIFEST_FILE_NAME)
    if exists(manifest_path):
        return read_manifest(manifest_path)
    return generate_synthetic_dataset(data_dir, ABLATION_DATASET_SIZE, run_config.seed)


def run_ablation(run_config, axis, out_dir, profile="tiny", force=False):
    """
    Run every variant of an axis and write ablation-<axis>.md and ablation-<axis>.tsv.

    The dataset and the emotion adapter are shared by all variants.

    :return: pandas DataFrame with one row per variant
    """
    variants = axis_variants(axis)
    create_directory_if_it_doesnt_exist(out_dir)
    manifest = ensure_dataset(run_config, out_dir)
    adapter_path = join(out_dir, "adapter.edck")
    if not exists(adapter_path) or force:
        pretrain_adapter(run_config, manifest, adapter_path)
    rows = []
    for label, overrides in variants.items():
        variant_config = run_config.with_overrides(overrides)
        run_dir = join(out_dir, axis, label.replace(" ", "_").replace("=", "-"))
        prepare_output_directory(run_dir, force=force)
        logger.info("Ablation %s variant %s: dataset seed %d, run seed %d", axis, label, manifest.seed, variant_config.seed)
        result = run_pipeline(variant_config, manifest, run_dir, adapter_path=adapter_path, force=True)
        scaled = result.report.scaled()
        rows.append(
            {
                "variant": label,
                "fbe": scaled["fbe"],
                "ebe": scaled["ebe"],
                "fdd": scaled["fdd"],
                "fbe_mouth": scaled["fbe_mouth"],
                "emotion_accuracy": result.emotion_accuracy,
                "dataset_seed": manifest.seed,
                "run_seed": variant_config.seed,
            }
        )
    table = pd.DataFrame(rows)
    table.to_csv(join(out_dir, f"ablation-{axis}.tsv"), sep="\t", index=False, float_format="%.12g", lineterminator="\n")
    markdown = render_table(axis, rows, profile, manifest.seed, run_config.seed)
    with open(join(out_dir, f"ablation-{axis}.md"), "w", encoding="utf-8", newline="\n") as file_obj:
        file_obj.write(markdown)
    logger.info("Wrote ablation table %s", join(out_dir, f"ablation-{axis}.md"))
    return table
