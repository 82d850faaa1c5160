import logging
import shutil
import tempfile
import unittest
from os.path import join
import pandas as pd
from blendshape_diffusion.analysis.ablation import ABLATION_AXES, axis_variants, render_table, run_ablation
from blendshape_diffusion.configuration.run_config import load_run_config
from blendshape_diffusion.sequences.synthetic import generate_synthetic_dataset
from blendshape_diffusion.shared.constants import MANIFEST_FILE_NAME
from blendshape_diffusion.shared.exceptions import ConfigurationError

SMALL = {
    "vae.layers": 1,
    "vae.heads": 2,
    "vae.width": 16,
    "vae.max_len": 64,
    "denoiser.layers": 1,
    "denoiser.heads": 2,
    "adapter.layers": 1,
    "adapter.heads": 2,
    "adapter.width": 16,
    "adapter.max_len": 64,
    "schedule.steps": 20,
    "inference.steps": 5,
    "optimizer.batch_size": 4,
    "budget.vae_steps": 2,
    "budget.diffusion_steps": 2,
    "budget.adapter_steps": 2,
    "training.log_every": 2,
}


class AblationAxesTestCase(unittest.TestCase):
    def test_axes(self):
        """analysis.ablation.ABLATION_AXES: the five axes and their variants"""
        self.assertEqual(list(ABLATION_AXES), ["latent_shape", "conditioning", "layers", "lambda", "structure"])
        self.assertEqual([v["vae.latent_tokens"] for v in axis_variants("latent_shape").values()], [1, 3, 5])
        self.assertEqual([v["denoiser.layers"] for v in axis_variants("layers").values()], [7, 9, 11])
        self.assertEqual(list(axis_variants("conditioning")), ["concat", "cross_attention"])

    def test_lambda_ratios(self):
        """analysis.ablation.axis_variants: ratios 10, 1 and 0.1 set λ_adapter to 0.1, 1 and 10"""
        lambdas = [v["loss.lambda_adapter"] for v in axis_variants("lambda").values()]
        self.assertEqual(list(axis_variants("lambda")), ["ratio=10", "ratio=1", "ratio=0.1"])
        for value, expected in zip(lambdas, (0.1, 1.0, 10.0)):
            self.assertAlmostEqual(value, expected)

    def test_unknown_axis(self):
        """analysis.ablation.axis_variants: unknown axes raise"""
        with self.assertRaises(ConfigurationError):
            axis_variants("dropout")

    def test_render_table(self):
        """analysis.ablation.render_table: one Markdown row per variant, labelled as desk-scale numbers"""
        rows = [
            {"variant": "dual latent", "fbe": 2.5, "ebe": 3.0, "fdd": 7.0, "fbe_mouth": 2.0, "emotion_accuracy": 0.9},
            {"variant": "single latent", "fbe": 2.75, "ebe": 3.5, "fdd": 8.0, "fbe_mouth": 2.1, "emotion_accuracy": 0.8},
        ]
        markdown = render_table("structure", rows, "tiny", 7, 0)
        self.assertIn("not published results", markdown)
        self.assertIn("| dual latent | 2.5000 | 3.0000 | 7.0000 | 2.0000 | 0.900 |", markdown)
        self.assertIn("dataset seed 7", markdown)


class RunAblationTestCase(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()
        generate_synthetic_dataset(join(self.directory, "data"), 18, 5, length_frames=20)

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_structure_axis(self):
        """analysis.ablation.run_ablation: every variant shares the dataset seed and lands in the table"""
        overrides = dict(SMALL)
        overrides["dataset.manifest"] = join(self.directory, "data", MANIFEST_FILE_NAME)
        run_config = load_run_config(overrides=overrides)
        out_dir = join(self.directory, "ablation")
        with self.assertLogs("blendshape_diffusion.analysis.ablation", level=logging.INFO) as logs:
            table = run_ablation(run_config, "structure", out_dir)
        self.assertEqual(table["variant"].tolist(), ["dual latent", "single latent"])
        self.assertEqual(set(table["dataset_seed"]), {5})
        seeded = [line for line in logs.output if "dataset seed 5" in line]
        self.assertEqual(len(seeded), 2)
        reread = pd.read_csv(join(out_dir, "ablation-structure.tsv"), sep="\t")
        self.assertEqual(len(reread), 2)
        with open(join(out_dir, "ablation-structure.md"), encoding="utf-8") as f:
            self.assertIn("| single latent |", f.read())
