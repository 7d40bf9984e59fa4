import json
import tempfile
import unittest
from pathlib import Path

from calamp_app.bounds import (
    alpha_cal_faulty,
    alpha_cal_gain,
    alpha_min,
    bisect_alpha_cs,
    bound_curves,
    interpolate_alpha_cs,
    load_alpha_cs_cache,
    save_alpha_cs_cache,
)
from calamp_app.models import DomainError


class ClosedFormBoundTests(unittest.TestCase):
    def test_alpha_min(self) -> None:
        self.assertAlmostEqual(alpha_min(0.2, 4), 0.8 / 3.0)
        self.assertAlmostEqual(alpha_min(0.5, 2), 1.0)

    def test_alpha_min_domain(self) -> None:
        with self.assertRaises(DomainError):
            alpha_min(0.2, 1)
        with self.assertRaises(DomainError):
            alpha_min(0.0, 4)

    def test_calibrated_references(self) -> None:
        self.assertAlmostEqual(alpha_cal_faulty(0.5, 0.2, 0.2), 0.625)
        self.assertAlmostEqual(alpha_cal_faulty(lambda rho: 2.0 * rho, 0.2, 0.5), 0.8)
        self.assertAlmostEqual(alpha_cal_gain(0.4, 0.3), 0.4)
        with self.assertRaises(DomainError):
            alpha_cal_faulty(0.5, 0.2, 1.0)

    def test_interpolation(self) -> None:
        curve = interpolate_alpha_cs([(0.3, 0.6), (0.1, 0.2)])
        self.assertAlmostEqual(curve(0.2), 0.4)
        self.assertAlmostEqual(curve(0.05), 0.2)
        with self.assertRaises(DomainError):
            interpolate_alpha_cs([])


class CurveTests(unittest.TestCase):
    def test_alpha_min_curves_skip_single_sample(self) -> None:
        curves = bound_curves([0.1, 0.4, 0.6], [1, 2])
        self.assertEqual([curve.kind for curve in curves], ["alpha_min"])
        self.assertEqual(curves[0].params, {"P": 2})
        self.assertEqual([rho for rho, _ in curves[0].samples], [0.1, 0.4])

    def test_reference_curves_with_alpha_cs(self) -> None:
        points = [(0.1, 0.25), (0.5, 0.75)]
        curves = bound_curves([0.1, 0.3, 0.5], [4], epsilon=0.2, alpha_cs_points=points)
        kinds = [curve.kind for curve in curves]
        self.assertEqual(kinds, ["alpha_min", "alpha_cs", "alpha_cal_gain", "alpha_cal_faulty"])
        faulty = curves[-1]
        self.assertEqual(faulty.params, {"epsilon": 0.2})
        self.assertAlmostEqual(faulty.samples[1][1], 0.5 / 0.8)


class AlphaCsTests(unittest.TestCase):
    def test_cache_round_trip_and_staleness(self) -> None:
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "alpha_cs.json"
            save_alpha_cs_cache(path, 500, 3, [(0.1, 0.22), (0.2, 0.35)])
            self.assertEqual(load_alpha_cs_cache(path), [(0.1, 0.22), (0.2, 0.35)])
            self.assertEqual(load_alpha_cs_cache(path, 500, 3), [(0.1, 0.22), (0.2, 0.35)])
            self.assertIsNone(load_alpha_cs_cache(path, 1000, 3))
            self.assertIsNone(load_alpha_cs_cache(path, 500, 5))

            payload = json.loads(path.read_text(encoding="utf-8"))
            payload["version"] = 99
            path.write_text(json.dumps(payload), encoding="utf-8")
            self.assertIsNone(load_alpha_cs_cache(path))
            self.assertIsNone(load_alpha_cs_cache(Path(temp_dir) / "missing.json"))

    def test_bisection_stays_in_range(self) -> None:
        alpha = bisect_alpha_cs(0.2, n=60, seeds=1, steps=3, master_seed=4)
        self.assertGreater(alpha, 0.2)
        self.assertLessEqual(alpha, 1.0)


if __name__ == "__main__":
    unittest.main()
