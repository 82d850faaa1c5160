import unittest
import tempfile
from os.path import join
import numpy as np
from blendshape_diffusion.shared.constants import MANIFEST_FILE_NAME
from blendshape_diffusion.shared.exceptions import ConfigurationError
from blendshape_diffusion.sequences.blendshapes import Emotion, FacePartition, partition_face, validate_sequence
from blendshape_diffusion.sequences.io import load_sequence, read_manifest
from blendshape_diffusion.sequences.synthetic import (
    apply_mouth_map,
    assign_splits,
    emotion_counts,
    generate_synthetic_dataset,
    mouth_map_for_seed,
    mouth_map_from_manifest,
    synthesize_item,
)
from blendshape_diffusion.util.file import file_digest


class SynthesizeItemTestCase(unittest.TestCase):
    def test_item_shape_and_range(self):
        """sequences.synthetic.synthesize_item: L×51 in [0, 1], L×16 features, emotion = index mod 9"""
        seq, track = synthesize_item(7, 13, 100, mouth_map_for_seed(7))
        self.assertEqual(seq.frames.shape, (100, 51))
        self.assertEqual(track.features.shape, (100, 16))
        self.assertEqual(seq.emotion, Emotion(13 % 9))
        self.assertEqual(seq.id, "seq_00013")
        self.assertTrue(validate_sequence(seq, value_range=(0.0, 1.0)).ok)

    def test_item_is_deterministic(self):
        """sequences.synthetic.synthesize_item: the same (seed, index) gives identical arrays"""
        first, _ = synthesize_item(3, 4, 50, mouth_map_for_seed(3))
        second, _ = synthesize_item(3, 4, 50, mouth_map_for_seed(3))
        np.testing.assert_array_equal(first.frames, second.frames)

    def test_mouth_is_a_function_of_articulation(self):
        """sequences.synthetic.apply_mouth_map: mouth columns are exactly the map of the first 8 feature channels"""
        mouth_map = mouth_map_for_seed(11)
        seq, track = synthesize_item(11, 2, 60, mouth_map)
        _, mouth = partition_face(seq.frames, FacePartition.default())
        expected = apply_mouth_map(track.features[:, :8], mouth_map).astype(np.float32)
        np.testing.assert_array_equal(mouth, expected)

    def test_emotion_channels_signal_category(self):
        """sequences.synthetic.synthesize_item: a non-neutral item lights one emotion channel"""
        _, track = synthesize_item(5, 4, 200, mouth_map_for_seed(5))
        means = track.features[:, 8:].mean(axis=0)
        self.assertEqual(int(np.argmax(means)), 3)
        self.assertGreater(means[3], 0.8)


class DatasetTestCase(unittest.TestCase):
    def test_splits(self):
        """sequences.synthetic.assign_splits: 90 items split 72/9/9"""
        splits = assign_splits(90, 7)
        self.assertEqual((splits.count("train"), splits.count("val"), splits.count("test")), (72, 9, 9))

    def test_small_splits_are_nonempty(self):
        """sequences.synthetic.assign_splits: val and test get an item even for 9 items"""
        splits = assign_splits(9, 0)
        self.assertGreaterEqual(splits.count("val"), 1)
        self.assertGreaterEqual(splits.count("test"), 1)

    def test_too_few_items(self):
        """sequences.synthetic.generate_synthetic_dataset: fewer than 9 items is a configuration error"""
        with tempfile.TemporaryDirectory() as directory:
            with self.assertRaises(ConfigurationError):
                generate_synthetic_dataset(directory, 5, 7)

    def test_dataset_is_byte_identical(self):
        """sequences.synthetic.generate_synthetic_dataset: same seed gives identical files and manifest"""
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            manifest = generate_synthetic_dataset(first, 18, 7, length_frames=20)
            generate_synthetic_dataset(second, 18, 7, length_frames=20)
            for entry in manifest.entries:
                self.assertEqual(
                    file_digest(join(first, entry.seq_path)), file_digest(join(second, entry.seq_path))
                )
            self.assertEqual(
                file_digest(join(first, MANIFEST_FILE_NAME)), file_digest(join(second, MANIFEST_FILE_NAME))
            )
            reread = read_manifest(join(first, MANIFEST_FILE_NAME))
            self.assertEqual(emotion_counts(reread), {name: 2 for name in emotion_counts(reread)})
            self.assertEqual(mouth_map_from_manifest(reread).seed, 7)
            self.assertEqual(load_sequence(reread.resolve(reread.entries[0].seq_path)).length, 20)
