"""
End-to-end run: train the VAEs, pretrain the emotion adapter, train the denoisers, sample the
test split and evaluate it. Everything lands in one run directory.
"""
import logging
import shutil
from dataclasses import dataclass, field
from os.path import join
import yaml
from blendshape_diffusion.analysis.report import evaluate_dataset
from blendshape_diffusion.models.adapter import emotion_accuracy
from blendshape_diffusion.models.checkpoint import load_model
from blendshape_diffusion.sequences.blendshapes import FacePartition, partition_face
from blendshape_diffusion.sequences.io import load_sequence
from blendshape_diffusion.shared.constants import SEQUENCE_SUFFIX
from blendshape_diffusion.training.adapter import pretrain_adapter
from blendshape_diffusion.training.common import load_manifest
from blendshape_diffusion.training.diffusion import train_diffusion
from blendshape_diffusion.training.sampling import sample_tracks
from blendshape_diffusion.training.vae import train_vae
from blendshape_diffusion.util.file import create_directory_if_it_doesnt_exist, prepare_output_directory

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    """Artifacts and headline numbers of one run"""

    run_dir: str
    report: object
    emotion_accuracy: float
    checkpoints: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)


def run_regions(run_config):
    """Face regions modelled by the run: one full-face latent, or upper face and mouth"""
    return ["full"] if run_config.single_latent else ["upper", "mouth"]


def write_config_snapshot(run_config, run_dir):
    """The user's config file byte for byte, plus the merged document as resolved.yml"""
    run_config.snapshot(run_dir)
    with open(join(run_dir, "resolved.yml"), "w", encoding="utf-8") as file_obj:
        yaml.safe_dump(run_config.document, file_obj, sort_keys=True)


def run_pipeline(run_config, manifest, run_dir, adapter_path=None, force=False, partition=None):
    """
    Run every stage on one configuration.

    :param manifest: DatasetManifest or manifest path
    :param run_dir: output directory; must be empty unless force is set
    :param adapter_path: reuse an already pretrained adapter instead of training one
    :rtype: PipelineResult
    """
    partition = partition or FacePartition.default()
    manifest = load_manifest(manifest)
    prepare_output_directory(run_dir, force=force)
    write_config_snapshot(run_config, run_dir)
    logger.info("Run %s: dataset seed %d, run seed %d", run_dir, manifest.seed, run_config.seed)

    checkpoints = {}
    if adapter_path is None:
        adapter_path = join(run_dir, "adapter.edck")
        pretrain_adapter(run_config, manifest, adapter_path, partition)
    checkpoints["adapter"] = adapter_path
    for region in run_regions(run_config):
        vae_path = join(run_dir, f"{region}_vae.edck")
        train_vae(run_config, region, manifest, vae_path, partition)
        checkpoints[f"{region}_vae"] = vae_path
        denoiser_path = join(run_dir, f"{region}_denoiser.edck")
        train_diffusion(run_config, region, manifest, vae_path, denoiser_path, adapter_path, partition)
        checkpoints[f"{region}_denoiser"] = denoiser_path

    test = manifest.split("test")
    gt_dir = join(run_dir, "gt")
    create_directory_if_it_doesnt_exist(gt_dir)
    for entry in test:
        shutil.copyfile(manifest.resolve(entry.seq_path), join(gt_dir, entry.id + SEQUENCE_SUFFIX))
    tracks = [track for _, track in manifest.load_split("test")]
    bundles = [checkpoints[f"{region}_denoiser"] for region in run_regions(run_config)]
    inference = run_config["inference"]
    samples = sample_tracks(
        bundles,
        tracks,
        join(run_dir, "samples"),
        steps=inference["steps"],
        seed=run_config.seed,
        sampler=inference["sampler"],
        partition=partition,
    )
    report = evaluate_dataset(join(run_dir, "samples"), gt_dir, partition, out_path=join(run_dir, "report.tsv"))

    adapter, _ = load_model(adapter_path, "adapter")
    generated = [load_sequence(path) for path in samples]
    accuracy = emotion_accuracy(
        adapter.eval(),
        [partition_face(seq, partition)[0] for seq in generated],
        [int(seq.emotion) for seq in generated],
    )
    logger.info("Emotion accuracy of generated upper faces: %.3f", accuracy)
    return PipelineResult(
        run_dir=run_dir, report=report, emotion_accuracy=accuracy, checkpoints=checkpoints, samples=samples
    )
