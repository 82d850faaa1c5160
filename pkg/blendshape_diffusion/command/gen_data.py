"""
Generate the synthetic paired audio-feature / blendshape dataset.
"""
import logging
import click
from blendshape_diffusion.command.options import global_options, log_level_option
from blendshape_diffusion.sequences.synthetic import emotion_counts, generate_synthetic_dataset
from blendshape_diffusion.shared.constants import DEFAULT_SEQUENCE_FRAMES, MANIFEST_FILE_NAME
from blendshape_diffusion.util.file import prepare_output_directory
from blendshape_diffusion.util.logging import configure_logging

logger = logging.getLogger(__name__)


@click.command(name="gen-data", short_help="Generate a synthetic dataset of paired audio features and blendshape sequences.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory")
@click.option("--n", "count", type=int, default=90, show_default=True, help="Number of sequences (at least 9)")
@click.option("--seed", type=int, default=None, help="Dataset seed. Defaults to the global --seed, then 0.")
@click.option("--frames", type=int, default=DEFAULT_SEQUENCE_FRAMES, show_default=True, help="Frames per sequence")
@click.option("--force", is_flag=True, default=False, help="Overwrite a non-empty output directory")
@log_level_option
@click.pass_context
def gen_data(ctx, out, count, seed, frames, force, log_level):
    """
    Write sequences/, audio/ and manifest.tsv under --out and print the per-emotion counts.
    """
    configure_logging(log_level)
    if seed is None:
        seed = global_options(ctx).get("seed") or 0
    manifest = generate_dataset(out, count, seed, frames, force)
    print(f"Manifest: {manifest.resolve(MANIFEST_FILE_NAME)}")
    for emotion, number in emotion_counts(manifest).items():
        print(f"{emotion}\t{number}")


def generate_dataset(out, count, seed, frames=DEFAULT_SEQUENCE_FRAMES, force=False):
    """
    Library entry point for gen-data.

    :raises ConfigurationError: for a non-empty --out without force, n < 9, or frames < 2
    :rtype: DatasetManifest
    """
    prepare_output_directory(out, force=force)
    return generate_synthetic_dataset(out, count, seed, length_frames=frames)
