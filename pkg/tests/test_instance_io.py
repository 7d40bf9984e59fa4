import struct
import tempfile
import unittest
from pathlib import Path

from numpy.testing import assert_array_equal

from calamp_app.channels import FaultyChannel, GainChannel
from calamp_app.config import INSTANCE_MAGIC
from calamp_app.instance_io import ARRAY_NAMES, dump_instance, load_instance
from calamp_app.models import InstanceFormatError
from calamp_app.priors import GainPrior, SignalPrior
from calamp_app.synthgen import make_instance


class InstanceFileTests(unittest.TestCase):
    def test_real_instance_survives_dump(self) -> None:
        instance = make_instance(30, 20, 2, SignalPrior(rho=0.2), FaultyChannel(epsilon=0.2), seed=12)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = dump_instance(instance, Path(temp_dir) / "inst.bin")
            loaded = load_instance(path)
        for name in ARRAY_NAMES:
            assert_array_equal(getattr(loaded, name), getattr(instance, name))
        self.assertEqual(loaded.seed, 12)
        self.assertEqual(loaded.field, "real")
        self.assertEqual(loaded.params["channel"]["variant"], "faulty")

    def test_complex_arrays_keep_dtype(self) -> None:
        prior = SignalPrior(variant="complex-bernoulli-gauss", rho=0.2)
        channel = GainChannel(delta=1e-4, gain_prior=GainPrior(variant="complex-normal"))
        instance = make_instance(12, 10, 2, prior, channel, seed=3)
        with tempfile.TemporaryDirectory() as temp_dir:
            loaded = load_instance(dump_instance(instance, Path(temp_dir) / "c.bin"))
        self.assertEqual(loaded.F.dtype.kind, "c")
        assert_array_equal(loaded.y, instance.y)

    def test_bad_magic(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "bad.bin"
            path.write_bytes(struct.pack("<8sII", b"NOTMAGIC", 1, 2) + b"{}")
            with self.assertRaises(InstanceFormatError):
                load_instance(path)

    def test_unknown_version(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "v.bin"
            path.write_bytes(struct.pack("<8sII", INSTANCE_MAGIC, 99, 2) + b"{}")
            with self.assertRaisesRegex(InstanceFormatError, "version 99"):
                load_instance(path)

    def test_truncated_body(self) -> None:
        instance = make_instance(10, 8, 1, SignalPrior(rho=0.2), FaultyChannel(epsilon=0.1), seed=1)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = dump_instance(instance, Path(temp_dir) / "t.bin")
            path.write_bytes(path.read_bytes()[:-16])
            with self.assertRaisesRegex(InstanceFormatError, "truncated"):
                load_instance(path)

    def test_missing_file(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            with self.assertRaises(InstanceFormatError):
                load_instance(Path(temp_dir) / "nope.bin")


if __name__ == "__main__":
    unittest.main()
