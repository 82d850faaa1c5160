import math
import unittest
import numpy as np
import torch
from blendshape_diffusion.models.diffusion import (
    Denoiser,
    DenoiserConfig,
    ancestral_update,
    denoise,
    diffusion_loss,
    embed_audio,
    make_schedule,
    noise_prediction_loss,
    p_sample_step,
    posterior_variance,
    predict_z0,
    q_sample,
    q_step,
    sample,
    sample_latent,
    schedule_from_betas,
    strided_timesteps,
)
from blendshape_diffusion.models.vae import RegionVae, VaeConfig
from blendshape_diffusion.sequences.synthetic import mouth_map_for_seed, synthesize_item
from blendshape_diffusion.shared.exceptions import ConfigurationError, ShapeError, ValidationError
from blendshape_diffusion.util.gradcheck import max_relative_gradient_error


def small_denoiser(conditioning="concat", tokens=1):
    torch.manual_seed(0)
    return Denoiser(DenoiserConfig(layers=1, heads=2, width=8, latent_tokens=tokens, conditioning=conditioning))


class ScheduleTestCase(unittest.TestCase):
    def test_default_endpoints(self):
        """models.diffusion.make_schedule: β_1 = 8.5e-4 and β_1000 = 0.012 at defaults"""
        sched = make_schedule()
        self.assertEqual(sched.T, 1000)
        self.assertAlmostEqual(sched.betas[0].item(), 8.5e-4, places=12)
        self.assertAlmostEqual(sched.betas[-1].item(), 0.012, places=12)
        self.assertTrue(bool((sched.alpha_bars[1:] < sched.alpha_bars[:-1]).all()))

    def test_two_step_schedule(self):
        """models.diffusion.make_schedule: T=2 at 0.5 gives ᾱ = [0.5, 0.25]"""
        sched = make_schedule(2, 0.5, 0.5)
        self.assertEqual(sched.betas.tolist(), [0.5, 0.5])
        self.assertEqual(sched.alpha_bars.tolist(), [0.5, 0.25])

    def test_invalid_ranges(self):
        """models.diffusion.make_schedule: reversed or out-of-range betas raise"""
        for args in ((1000, 0.02, 0.01), (1000, 0.0, 0.01), (1000, 0.1, 1.0), (1, 0.1, 0.1)):
            with self.assertRaises(ConfigurationError):
                make_schedule(*args)


class ForwardProcessTestCase(unittest.TestCase):
    def test_noiseless_identity(self):
        """models.diffusion.q_sample: eps = 0 on a β = 0 schedule returns z0"""
        sched = schedule_from_betas([0.0] * 5)
        z0 = torch.randn(1, 8, dtype=torch.float64)
        self.assertTrue(torch.equal(q_sample(z0, 3, torch.zeros_like(z0), sched), z0))

    def test_first_step_scale(self):
        """models.diffusion.q_sample: z_1 = sqrt(1 - 8.5e-4) z0 at defaults"""
        z0 = torch.ones(1, 4, dtype=torch.float64)
        z1 = q_sample(z0, 1, torch.zeros_like(z0), make_schedule())
        self.assertAlmostEqual(z1[0, 0].item(), math.sqrt(1 - 8.5e-4), places=12)
        self.assertAlmostEqual(z1[0, 0].item(), 0.9995748, places=6)

    def test_step_range(self):
        """models.diffusion.q_sample: t = 0 and t = T + 1 are rejected"""
        sched = make_schedule(10, 0.01, 0.02)
        z0 = torch.zeros(1, 8)
        for t in (0, 11):
            with self.assertRaises(ValidationError):
                q_sample(z0, t, z0, sched)

    def test_closed_form_matches_iterated_steps(self):
        """models.diffusion.q_sample: closed form matches iterated q_step in mean and variance"""
        sched = make_schedule(10, 0.05, 0.2)
        generator = torch.Generator().manual_seed(0)
        count = 20000
        z0 = torch.full((count, 1), 1.5, dtype=torch.float64)
        iterated = z0
        for t in range(1, 11):
            iterated = q_step(iterated, t, torch.randn(count, 1, generator=generator, dtype=torch.float64), sched)
        closed = q_sample(z0, 10, torch.randn(count, 1, generator=generator, dtype=torch.float64), sched)
        self.assertAlmostEqual(iterated.mean().item(), closed.mean().item(), delta=0.04)
        self.assertAlmostEqual(iterated.var().item(), closed.var().item(), delta=0.04)
        self.assertAlmostEqual(closed.mean().item(), 1.5 * math.sqrt(sched.alpha_bars[-1].item()), delta=0.03)

    def test_predict_z0_inverts_q_sample(self):
        """models.diffusion.predict_z0: recovers z0 from z_t and the true noise"""
        sched = make_schedule(100, 1e-3, 0.05)
        z0, eps = torch.randn(3, 1, 8, dtype=torch.float64), torch.randn(3, 1, 8, dtype=torch.float64)
        t = torch.tensor([1, 50, 100])
        self.assertTrue(torch.allclose(predict_z0(q_sample(z0, t, eps, sched), t, eps, sched), z0))


class AudioEmbeddingTestCase(unittest.TestCase):
    def test_zero_track(self):
        """models.diffusion.embed_audio: all-zero track gives tanh(0) = 0, reproducibly"""
        first = embed_audio(np.zeros((10, 16)))
        self.assertEqual(first.shape, (256,))
        np.testing.assert_array_equal(first, embed_audio(np.zeros((10, 16))))

    def test_emotion_channels_move_embedding(self):
        """models.diffusion.embed_audio: tracks differing only in emotion channels embed differently"""
        _, track = synthesize_item(1, 0, 50, mouth_map_for_seed(1))
        altered = track.features.copy()
        altered[:, 8:] += 1.0
        self.assertGreater(np.linalg.norm(embed_audio(track) - embed_audio(altered)), 0.0)

    def test_wrong_width(self):
        """models.diffusion.embed_audio: 15 channels raise"""
        with self.assertRaises(ShapeError):
            embed_audio(np.zeros((10, 15)))


class DenoiserTestCase(unittest.TestCase):
    def test_default_shape(self):
        """models.diffusion.denoise: ε̂ is 1×256 at the default config"""
        torch.manual_seed(0)
        model = Denoiser(DenoiserConfig())
        with torch.no_grad():
            eps_hat = denoise(model, torch.randn(1, 256), 500, torch.zeros(256))
        self.assertEqual(tuple(eps_hat.shape), (1, 256))

    def test_conditioning_modes(self):
        """models.diffusion.denoise: both conditioning modes keep shapes and determinism"""
        z, cond = torch.randn(2, 3, 8), torch.zeros(2, 256)
        for mode in ("concat", "cross_attention"):
            model = small_denoiser(mode, tokens=3)
            with torch.no_grad():
                first, second = denoise(model, z, 7, cond), denoise(model, z, 7, cond)
            self.assertEqual(tuple(first.shape), (2, 3, 8))
            self.assertTrue(torch.equal(first, second))

    def test_shape_mismatch(self):
        """models.diffusion.denoise: wrong latent or condition shapes raise"""
        model = small_denoiser()
        with self.assertRaises(ShapeError):
            denoise(model, torch.randn(1, 2, 8), 1, torch.zeros(1, 256))
        with self.assertRaises(ShapeError):
            denoise(model, torch.randn(1, 1, 8), 1, torch.zeros(1, 128))

    def test_loss_is_zero_for_perfect_prediction(self):
        """models.diffusion.noise_prediction_loss: equal noise gives 0, otherwise positive"""
        eps = torch.randn(4, 1, 8)
        self.assertEqual(noise_prediction_loss(eps, eps).item(), 0.0)
        self.assertGreater(noise_prediction_loss(eps, torch.zeros_like(eps)).item(), 0.0)

    def test_loss_matches_monte_carlo(self):
        """models.diffusion.diffusion_loss: averaged batch loss equals a direct Monte-Carlo estimate"""
        model = small_denoiser()
        sched = make_schedule(100, 1e-3, 0.05)
        generator = torch.Generator().manual_seed(2)
        count = 1000
        z0 = torch.randn(count, 1, 8, generator=generator)
        eps = torch.randn(count, 1, 8, generator=generator)
        t = torch.randint(1, 101, (count,), generator=generator)
        cond = torch.zeros(count, 256)
        with torch.no_grad():
            batched = diffusion_loss(model, z0, t, eps, cond, sched).item()
            direct = np.mean(
                [
                    ((eps[i] - denoise(model, q_sample(z0[i], int(t[i]), eps[i], sched), int(t[i]), cond[i])) ** 2)
                    .sum()
                    .item()
                    for i in range(count)
                ]
            )
        self.assertAlmostEqual(batched / direct, 1.0, delta=0.05)


class DenoiserGradientTestCase(unittest.TestCase):
    def setUp(self):
        torch.set_default_dtype(torch.float64)

    def tearDown(self):
        torch.set_default_dtype(torch.float32)

    def test_gradients_match_finite_differences(self):
        """models.diffusion.diffusion_loss: autograd gradients agree with central differences in float64"""
        model = small_denoiser()
        sched = make_schedule(50, 1e-3, 0.05)
        generator = torch.Generator().manual_seed(3)
        z0, eps = torch.randn(2, 1, 8, generator=generator), torch.randn(2, 1, 8, generator=generator)
        cond = torch.rand(2, 256, generator=generator)
        t = torch.tensor([5, 40])
        error, _ = max_relative_gradient_error(
            lambda: diffusion_loss(model, z0, t, eps, cond, sched), model.named_parameters()
        )
        self.assertLess(error, 1e-4)


class ReverseProcessTestCase(unittest.TestCase):
    def test_last_step_has_no_noise(self):
        """models.diffusion.p_sample_step: t = 1 is deterministic regardless of the generator"""
        model = small_denoiser()
        sched = make_schedule(10, 0.01, 0.1)
        z, cond = torch.randn(1, 1, 8), torch.zeros(1, 256)
        with torch.no_grad():
            first = p_sample_step(model, z, 1, cond, sched, torch.Generator().manual_seed(1))
            second = p_sample_step(model, z, 1, cond, sched, torch.Generator().manual_seed(2))
        self.assertTrue(torch.equal(first, second))

    def test_degenerate_schedule(self):
        """models.diffusion.ancestral_update: β = 0 and ε̂ = 0 leave z unchanged"""
        sched = schedule_from_betas([0.0] * 4)
        z = torch.randn(1, 8, dtype=torch.float64)
        updated = ancestral_update(z, 3, torch.zeros_like(z), sched, torch.randn(1, 8, dtype=torch.float64))
        self.assertTrue(torch.equal(updated, z))

    def test_true_noise_gives_posterior_mean(self):
        """models.diffusion.ancestral_update: true ε at t = 2 recovers the closed-form posterior mean"""
        sched = schedule_from_betas([0.1, 0.2])
        z0, eps = torch.tensor([1.0], dtype=torch.float64), torch.tensor([0.5], dtype=torch.float64)
        z2 = q_sample(z0, 2, eps, sched)
        alpha_bar_1, alpha_bar_2 = 0.9, 0.72
        expected = (
            math.sqrt(alpha_bar_1) * 0.2 / (1 - alpha_bar_2) * 1.0
            + math.sqrt(0.8) * (1 - alpha_bar_1) / (1 - alpha_bar_2) * z2.item()
        )
        self.assertAlmostEqual(ancestral_update(z2, 2, eps, sched).item(), expected, places=12)
        self.assertAlmostEqual(posterior_variance(2, sched).item(), 0.2 * 0.1 / 0.28, places=12)

    def test_strided_timesteps(self):
        """models.diffusion.strided_timesteps: descending from T to 1; steps > T raises"""
        steps = strided_timesteps(1000, 50)
        self.assertEqual((len(steps), steps[0], steps[-1]), (50, 1000, 1))
        self.assertEqual(strided_timesteps(5, 5), [5, 4, 3, 2, 1])
        with self.assertRaises(ConfigurationError):
            strided_timesteps(10, 11)

    def test_full_chain_equivalence(self):
        """models.diffusion.sample_latent: steps = T equals the naive full chain bit for bit"""
        model = small_denoiser().eval()
        sched = make_schedule(12, 0.01, 0.2)
        cond = torch.rand(2, 256)
        strided = sample_latent(model, cond, sched, 12, torch.Generator().manual_seed(5))
        generator = torch.Generator().manual_seed(5)
        z = torch.randn((2, 1, 8), generator=generator, dtype=torch.get_default_dtype())
        with torch.no_grad():
            for t in range(12, 0, -1):
                z = p_sample_step(model, z, t, cond, sched, generator)
        self.assertTrue(torch.equal(strided, z))

    def test_sampling_is_reproducible(self):
        """models.diffusion.sample: a fixed seed gives a bit-identical decoded sequence"""
        model = small_denoiser().eval()
        torch.manual_seed(1)
        vae = RegionVae(VaeConfig(region="mouth", coefficients=32, layers=1, heads=2, width=8, max_len=64)).eval()
        sched = make_schedule(100, 1e-3, 0.05)
        cond = torch.rand(1, 256)
        outputs = [
            sample(model, cond, sched, 10, 30, vae, torch.Generator().manual_seed(9)) for _ in range(2)
        ]
        self.assertEqual(tuple(outputs[0].shape), (1, 30, 32))
        self.assertTrue(torch.equal(outputs[0], outputs[1]))
        for sampler in ("ddim",):
            self.assertEqual(
                tuple(sample(model, cond, sched, 10, 30, vae, torch.Generator(), sampler=sampler).shape), (1, 30, 32)
            )

    def test_unknown_sampler(self):
        """models.diffusion.sample_latent: only ddpm and ddim are accepted"""
        with self.assertRaises(ConfigurationError):
            sample_latent(small_denoiser(), torch.zeros(1, 256), make_schedule(10, 0.01, 0.1), 5, None, sampler="euler")
