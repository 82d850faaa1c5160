import os
import shutil
import tempfile
import unittest
from os.path import basename, join
from unittest import mock
import numpy as np
import torch
from blendshape_diffusion.configuration.run_config import load_run_config
from blendshape_diffusion.models.checkpoint import load_region_bundle
from blendshape_diffusion.models.diffusion import embed_audio, p_sample_step
from blendshape_diffusion.models.vae import decode
from blendshape_diffusion.sequences.blendshapes import FacePartition, merge_regions, validate_sequence
from blendshape_diffusion.sequences.io import load_sequence
from blendshape_diffusion.sequences.synthetic import generate_synthetic_dataset
from blendshape_diffusion.shared.exceptions import ConfigurationError
from blendshape_diffusion.training.common import REGION_CODES, SAMPLE_STREAM
from blendshape_diffusion.training.diffusion import train_diffusion
from blendshape_diffusion.training.sampling import sample_sequence, sample_to_file, sample_tracks
from blendshape_diffusion.training.vae import train_vae
from blendshape_diffusion.util.file import file_digest
from blendshape_diffusion.util.seeding import torch_generator

SMALL = {
    "vae.layers": 1,
    "vae.heads": 2,
    "vae.width": 16,
    "vae.max_len": 64,
    "denoiser.layers": 1,
    "denoiser.heads": 2,
    "loss.lambda_adapter": 0.0,
    "schedule.steps": 20,
    "inference.steps": 5,
    "optimizer.batch_size": 4,
    "budget.vae_steps": 4,
    "budget.diffusion_steps": 4,
    "training.log_every": 2,
}


class SamplingTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.directory = tempfile.mkdtemp()
        cls.manifest = generate_synthetic_dataset(join(cls.directory, "data"), 18, 6, length_frames=24)
        run_config = load_run_config(overrides=SMALL)
        cls.paths = {}
        for region in ("upper", "mouth"):
            vae_path = join(cls.directory, f"{region}_vae.edck")
            train_vae(run_config, region, cls.manifest, vae_path)
            cls.paths[region] = join(cls.directory, f"{region}_denoiser.edck")
            train_diffusion(run_config, region, cls.manifest, vae_path, cls.paths[region])
        cls.bundles = [load_region_bundle(cls.paths["upper"]), load_region_bundle(cls.paths["mouth"])]
        cls.tracks = [track for _, track in cls.manifest.load_split("test")]
        cls.entry = cls.manifest.split("test")[0]

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.directory)

    def test_output_is_a_valid_sequence(self):
        """training.sampling.sample_sequence: 51 columns in [0, 1] with the track's length, id and label"""
        track = self.tracks[0]
        seq = sample_sequence(self.bundles, track, steps=5, seed=3)
        self.assertEqual(seq.frames.shape, (track.length, 51))
        self.assertEqual((seq.id, seq.emotion), (track.id, track.emotion))
        self.assertTrue(validate_sequence(seq, value_range=(0.0, 1.0)).ok)

    def test_fixed_seed_is_reproducible(self):
        """training.sampling.sample_to_file: the same seed writes byte-identical files"""
        audio_path = self.manifest.resolve(self.entry.audio_path)
        first, second = join(self.directory, "a.edbs"), join(self.directory, "b.edbs")
        sample_to_file([self.paths["upper"], self.paths["mouth"]], audio_path, first, steps=5, seed=11)
        sample_to_file([self.paths["upper"], self.paths["mouth"]], audio_path, second, steps=5, seed=11)
        self.assertEqual(file_digest(first), file_digest(second))

    def test_full_step_count_matches_plain_chain(self):
        """training.sampling.sample_sequence: steps = T equals the naive per-region chain end to end"""
        track = self.tracks[0]
        seq = sample_sequence(self.bundles, track, steps=20, seed=2, index=0)
        cond = torch.as_tensor(embed_audio(track)).unsqueeze(0)
        regions = []
        for bundle in self.bundles:
            generator = torch_generator(2, SAMPLE_STREAM, 0, REGION_CODES[bundle.region])
            dtype = bundle.denoiser.latent_projection.weight.dtype
            z = torch.randn((1, 1, 16), generator=generator, dtype=dtype)
            with torch.no_grad():
                for t in range(20, 0, -1):
                    z = p_sample_step(bundle.denoiser, z, t, cond.to(dtype), bundle.schedule, generator)
                regions.append(decode(bundle.vae, z, track.length)[0].numpy())
        expected = np.clip(merge_regions(regions[0], regions[1], FacePartition.default()), 0.0, 1.0).astype(np.float32)
        np.testing.assert_array_equal(seq.frames, expected)

    def test_region_order_and_coverage(self):
        """training.sampling.check_bundles: [mouth, upper] and a lone upper checkpoint are rejected"""
        with self.assertRaises(ConfigurationError):
            sample_sequence(list(reversed(self.bundles)), self.tracks[0], steps=5)
        with self.assertRaises(ConfigurationError):
            sample_sequence(self.bundles[:1], self.tracks[0], steps=5)

    def test_steps_beyond_schedule(self):
        """training.sampling.sample_sequence: more steps than the schedule has is a configuration error"""
        with self.assertRaises(ConfigurationError):
            sample_sequence(self.bundles, self.tracks[0], steps=21)

    def test_parallel_sampling_matches_serial(self):
        """training.sampling.sample_tracks: worker count does not change the written bytes"""
        digests = []
        for threads in ("1", "3"):
            out_directory = join(self.directory, f"samples_{threads}")
            with mock.patch.dict(os.environ, {"EMODIFF_THREADS": threads}):
                paths = sample_tracks(self.bundles, self.tracks, out_directory, steps=5, seed=4)
            self.assertEqual([basename(p) for p in paths], [f"{t.id}.edbs" for t in self.tracks])
            digests.append([file_digest(p) for p in paths])
        self.assertEqual(digests[0], digests[1])
        self.assertEqual(load_sequence(paths[0]).id, self.tracks[0].id)
