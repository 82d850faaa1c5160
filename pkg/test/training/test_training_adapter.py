import tempfile
import unittest
from os.path import join
import numpy as np
import torch
from blendshape_diffusion.configuration.run_config import load_run_config
from blendshape_diffusion.models.adapter import AdapterConfig, EmotionAdapter
from blendshape_diffusion.models.checkpoint import load_model
from blendshape_diffusion.sequences.blendshapes import FacePartition, partition_face
from blendshape_diffusion.sequences.synthetic import generate_synthetic_dataset, mouth_map_for_seed, synthesize_item
from blendshape_diffusion.shared.exceptions import DataError
from blendshape_diffusion.training.adapter import fit_adapter, pretrain_adapter
from blendshape_diffusion.training.common import moving_average
from blendshape_diffusion.util.tensors import is_frozen

OPTIMIZER = {"lr": 3e-3, "batch_size": 9, "weight_decay": 0.01, "beta1": 0.9, "beta2": 0.999}


def small_adapter():
    torch.manual_seed(0)
    return EmotionAdapter(AdapterConfig(layers=1, heads=2, width=16, max_len=64))


def upper_faces(count, seed=0):
    mouth_map = mouth_map_for_seed(seed)
    part = FacePartition.default()
    arrays, labels = [], []
    for index in range(count):
        seq, _ = synthesize_item(seed, index, 20, mouth_map)
        arrays.append(partition_face(seq, part)[0])
        labels.append(int(seq.emotion))
    return arrays, labels


class FitAdapterTestCase(unittest.TestCase):
    def test_single_category_is_rejected(self):
        """training.adapter.fit_adapter: one category is not enough to pretrain on"""
        arrays = [np.zeros((10, 19))] * 4
        with self.assertRaises(DataError):
            fit_adapter(small_adapter(), arrays, [2, 2, 2, 2], arrays, [2, 2, 2, 2], OPTIMIZER, 5, 0)

    def test_loss_falls_and_model_is_frozen(self):
        """training.adapter.fit_adapter: cross-entropy falls on separable data; the adapter ends frozen"""
        arrays, labels = upper_faces(36)
        result = fit_adapter(small_adapter(), arrays, labels, arrays[:9], labels[:9], OPTIMIZER, 120, 0, log_every=40)
        self.assertEqual(len(result.losses), 120)
        self.assertLess(np.mean(result.losses[-10:]), np.mean(result.losses[:10]))
        self.assertTrue(is_frozen(result.model))
        self.assertGreaterEqual(result.val_accuracy, 0.0)
        self.assertLessEqual(result.val_accuracy, 1.0)

    def test_accuracy_trend_rises(self):
        """training.adapter.fit_adapter: the 50-step moving average of batch accuracy rises over 500 steps"""
        arrays, labels = upper_faces(36)
        result = fit_adapter(small_adapter(), arrays, labels, arrays[:9], labels[:9], OPTIMIZER, 500, 0, log_every=100)
        self.assertEqual(len(result.accuracies), 500)
        averages = moving_average(result.accuracies, 50)
        self.assertEqual(averages.size, 451)
        self.assertGreater(averages[-1], averages[0] + 0.2)
        # sampled once per window, no average drops more than 0.05 below the best before it
        sampled = averages[::50]
        for earlier, later in zip(np.maximum.accumulate(sampled)[:-1], sampled[1:]):
            self.assertGreaterEqual(later, earlier - 0.05)


class PretrainAdapterTestCase(unittest.TestCase):
    def test_checkpoint_records_categories(self):
        """training.adapter.pretrain_adapter: writes an adapter checkpoint with the category names"""
        with tempfile.TemporaryDirectory() as directory:
            manifest = generate_synthetic_dataset(join(directory, "data"), 18, 2, length_frames=20)
            run_config = load_run_config(
                overrides={
                    "adapter.layers": 1,
                    "adapter.heads": 2,
                    "adapter.width": 16,
                    "adapter.max_len": 64,
                    "budget.adapter_steps": 6,
                    "optimizer.batch_size": 4,
                    "training.log_every": 3,
                }
            )
            out_path = join(directory, "adapter.edck")
            result = pretrain_adapter(run_config, manifest, out_path)
            model, blob = load_model(out_path, "adapter")
            self.assertEqual(model.config.coefficients, 19)
            self.assertEqual(len(blob["adapter.categories"].split(",")), 9)
            self.assertEqual(len(result.losses), 6)
            with open(join(directory, "adapter.log")) as f:
                self.assertEqual(f.readline().strip().split("\t")[2:], ["loss", "accuracy", "val_accuracy"])
