import math
import unittest
import numpy as np
import torch
from torch.nn import functional as F
from blendshape_diffusion.models.adapter import (
    AdapterConfig,
    EmotionAdapter,
    LossWeights,
    adapter_forward,
    adapter_loss,
    emotion_accuracy,
    emotion_cross_entropy,
    mouth_objective,
    upper_objective,
)
from blendshape_diffusion.models.vae import RegionVae, VaeConfig
from blendshape_diffusion.shared.exceptions import ConfigurationError, ShapeError
from blendshape_diffusion.util.gradcheck import max_relative_gradient_error
from blendshape_diffusion.util.tensors import freeze


def small_adapter():
    torch.manual_seed(0)
    return EmotionAdapter(AdapterConfig(layers=1, heads=2, width=8, max_len=64))


class AdapterForwardTestCase(unittest.TestCase):
    def test_nine_logits_for_any_length(self):
        """models.adapter.adapter_forward: 9 logits for every sequence length"""
        model = small_adapter()
        with torch.no_grad():
            for length in (2, 17, 64):
                self.assertEqual(tuple(adapter_forward(model, torch.rand(length, 19)).shape), (9,))
            self.assertEqual(tuple(adapter_forward(model, torch.rand(3, 10, 19)).shape), (3, 9))

    def test_deterministic(self):
        """models.adapter.adapter_forward: same input, same logits"""
        model = small_adapter()
        x = torch.rand(12, 19)
        with torch.no_grad():
            self.assertTrue(torch.equal(adapter_forward(model, x), adapter_forward(model, x)))

    def test_wrong_width(self):
        """models.adapter.adapter_forward: 32 mouth columns are rejected"""
        with self.assertRaises(ShapeError):
            adapter_forward(small_adapter(), torch.rand(10, 32))

    def test_chance_accuracy(self):
        """models.adapter.emotion_accuracy: an untrained adapter is within 0.05 of chance on balanced data"""
        model = small_adapter()
        rng = np.random.default_rng(0)
        sequences = [rng.random((20, 19)) for _ in range(900)]
        labels = [i % 9 for i in range(900)]
        self.assertAlmostEqual(emotion_accuracy(model, sequences, labels), 1 / 9, delta=0.05)
        self.assertEqual(emotion_accuracy(model, [], []), 0.0)


class AdapterLossTestCase(unittest.TestCase):
    def test_uniform_logits(self):
        """models.adapter.emotion_cross_entropy: uniform logits give ln 9"""
        loss = emotion_cross_entropy(torch.zeros(9, dtype=torch.float64), 4)
        self.assertAlmostEqual(loss.item(), math.log(9), places=10)
        self.assertAlmostEqual(loss.item(), 2.19722, places=5)

    def test_matches_log_softmax(self):
        """models.adapter.emotion_cross_entropy: equals -log softmax at the target, batch-averaged"""
        logits = torch.randn(5, 9, dtype=torch.float64)
        target = torch.tensor([0, 3, 8, 8, 1])
        expected = -F.log_softmax(logits, dim=-1)[torch.arange(5), target].mean()
        self.assertAlmostEqual(emotion_cross_entropy(logits, target).item(), expected.item(), places=12)

    def test_confident_and_monotone(self):
        """models.adapter.emotion_cross_entropy: falls towards 0 as the target logit grows"""
        previous = None
        for margin in (0.0, 1.0, 5.0, 50.0):
            logits = torch.zeros(9, dtype=torch.float64)
            logits[2] = margin
            loss = emotion_cross_entropy(logits, 2).item()
            if previous is not None:
                self.assertLess(loss, previous)
            previous = loss
        self.assertLess(previous, 1e-12)

    def test_requires_frozen_models(self):
        """models.adapter.adapter_loss: an unfrozen adapter or VAE breaks the training contract"""
        torch.manual_seed(0)
        vae = RegionVae(VaeConfig(layers=1, heads=2, width=8, max_len=64))
        adapter = small_adapter()
        z = torch.randn(1, 1, 8)
        with self.assertRaises(ConfigurationError):
            adapter_loss(z, [0], freeze(vae), adapter, 20)
        with self.assertRaises(ConfigurationError):
            adapter_loss(z, [0], RegionVae(vae.config), freeze(adapter), 20)

    def test_gradient_reaches_latent_only(self):
        """models.adapter.adapter_loss: gradients flow to ẑ0 through the frozen decoder and adapter"""
        torch.manual_seed(0)
        vae = freeze(RegionVae(VaeConfig(region="full", coefficients=51, layers=1, heads=2, width=8, max_len=64)))
        adapter = freeze(small_adapter())
        z = torch.randn(2, 1, 8, requires_grad=True)
        loss = adapter_loss(z, [1, 2], vae, adapter, 20, columns=list(range(19)))
        loss.backward()
        self.assertIsNotNone(z.grad)
        self.assertGreater(z.grad.abs().sum().item(), 0.0)
        self.assertTrue(all(p.grad is None for p in adapter.parameters()))


class ObjectiveTestCase(unittest.TestCase):
    def test_upper_objective(self):
        """models.adapter.upper_objective: 0.5 + 10 * 0.2 = 2.5 at the default weights"""
        self.assertAlmostEqual(upper_objective(0.5, 0.2, LossWeights()), 2.5)
        self.assertEqual(upper_objective(0.5, 0.2, LossWeights(lambda_adapter=0.0)), 0.5)

    def test_upper_objective_is_linear(self):
        """models.adapter.upper_objective: scaling both weights by 4 scales the result by 4"""
        base = upper_objective(0.75, 0.25, LossWeights(1.0, 10.0))
        scaled = upper_objective(0.75, 0.25, LossWeights(4.0, 40.0))
        self.assertEqual(scaled, 4 * base)

    def test_mouth_objective(self):
        """models.adapter.mouth_objective: identity, equal to upper_objective without the adapter term"""
        self.assertEqual(mouth_objective(0.0), 0.0)
        self.assertEqual(mouth_objective(1.37), 1.37)
        self.assertEqual(mouth_objective(1.37), upper_objective(1.37, 9.0, LossWeights(1.0, 0.0)))

    def test_weights(self):
        """models.adapter.LossWeights: defaults 1 and 10, a ratio of 0.1 means λ_adapter = 10 λ_lat"""
        self.assertEqual((LossWeights().lambda_lat, LossWeights().lambda_adapter), (1.0, 10.0))
        self.assertAlmostEqual(LossWeights.from_ratio(0.1).lambda_adapter, 10.0)
        with self.assertRaises(ConfigurationError):
            LossWeights(lambda_adapter=-1.0)


class AdapterGradientTestCase(unittest.TestCase):
    def setUp(self):
        torch.set_default_dtype(torch.float64)

    def tearDown(self):
        torch.set_default_dtype(torch.float32)

    def test_gradients_match_finite_differences(self):
        """models.adapter.emotion_cross_entropy: adapter gradients agree with central differences in float64"""
        model = small_adapter()
        x = torch.rand(3, 6, 19, generator=torch.Generator().manual_seed(4))
        target = torch.tensor([0, 4, 8])
        error, _ = max_relative_gradient_error(
            lambda: emotion_cross_entropy(adapter_forward(model, x), target), model.named_parameters()
        )
        self.assertLess(error, 1e-4)
