import unittest
import torch
from blendshape_diffusion.util.seeding import derive_seed, numpy_generator, set_precision, torch_generator


class SeedingTestCase(unittest.TestCase):
    def tearDown(self):
        torch.set_default_dtype(torch.float32)

    def test_streams_are_reproducible_and_distinct(self):
        """util.seeding: equal (seed, indices) give equal draws; different indices differ"""
        self.assertEqual(derive_seed(7, 1, 2), derive_seed(7, 1, 2))
        self.assertNotEqual(derive_seed(7, 1, 2), derive_seed(7, 2, 1))
        self.assertEqual(numpy_generator(3, 4).random(), numpy_generator(3, 4).random())
        a = torch.randn(5, generator=torch_generator(3, 4))
        b = torch.randn(5, generator=torch_generator(3, 4))
        self.assertTrue(torch.equal(a, b))

    def test_set_precision(self):
        """util.seeding.set_precision: 64 selects float64, anything else but 32 raises"""
        self.assertEqual(set_precision(64), torch.float64)
        self.assertEqual(torch.get_default_dtype(), torch.float64)
        with self.assertRaises(ValueError):
            set_precision(16)
