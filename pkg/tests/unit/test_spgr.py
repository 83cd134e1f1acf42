"""Unit tests for Laplace noise and the SPG-R search variants."""

import math
import unittest
from dataclasses import replace

import numpy as np

from src.core.errors import ModeMismatchError, ParameterError
from src.core.lrt import ReleaseState
from src.core.threat import ThreatModel, score_and_cover
from src.data.panel import AAF, DatasetConfig, GenotypePanel, generate_panel
from src.defenses.baselines import run_dp_laplace, run_mask_only
from src.defenses.spgr import (
    BINARY_SEARCH,
    BOUNDED,
    NOISELESS,
    SEQUENTIAL,
    SpgrCandidate,
    SpgrConfig,
    average_hamming,
    best_from_log,
    laplace_noise,
    spgr,
    spgr_search,
)


def aaf_panel(seed=5, m=40, n=20, n_ref=30):
    return generate_panel(DatasetConfig(m=m, n=n, n_ref=n_ref, mode=AAF, beta_a=1.0, beta_b=3.0, seed=seed))


def median_theta(panel):
    scores = score_and_cover(panel, ReleaseState.for_panel(panel), ThreatModel.fixed(0.0))[1]
    return float(np.median(scores))


class TestLaplaceNoise(unittest.TestCase):
    """Test noise scale and sensitivity modes."""

    def test_unbounded_scale(self):
        draw = laplace_noise(1000, 100, 10.0, seed=0, size=100_000)
        self.assertAlmostEqual(draw.scale, 1.0)
        self.assertAlmostEqual(float(np.abs(draw.delta).mean()), 1.0, delta=0.02)

    def test_bounded_to_unbounded_ratio(self):
        unbounded = laplace_noise(1338843, 100, 1.0, seed=0, size=10)
        bounded = laplace_noise(1338843, 100, 1.0, BOUNDED, seed=0, avg_hamming=148515, size=10)
        self.assertAlmostEqual(bounded.scale / unbounded.scale, 148515 / 1338843)

    def test_same_seed_same_draw(self):
        a = laplace_noise(50, 10, 1.0, seed=[1, 2, 3])
        b = laplace_noise(50, 10, 1.0, seed=[1, 2, 3])
        np.testing.assert_array_equal(a.delta, b.delta)

    def test_non_positive_epsilon_rejected(self):
        for eps in (0.0, -1.0):
            with self.assertRaises(ParameterError):
                laplace_noise(10, 10, eps)

    def test_infinite_epsilon_is_noise_free(self):
        draw = laplace_noise(10, 10, NOISELESS)
        self.assertEqual(draw.scale, 0.0)
        self.assertFalse(draw.delta.any())

    def test_bounded_needs_hamming(self):
        with self.assertRaises(ParameterError):
            laplace_noise(10, 10, 1.0, BOUNDED)

    def test_clipped_noise_respects_bounds(self):
        x = np.array([0.0001, 0.5, 0.9999])
        draw = laplace_noise(3, 1, 0.01, seed=4)
        delta = draw.clipped(x, np.array([True, True, False]))
        y = x + delta
        self.assertTrue(((y >= 0.0001) & (y <= 0.9999)).all())
        self.assertEqual(delta[2], 0.0)

    def test_average_hamming(self):
        panel = GenotypePanel(d=[[1, 0], [0, 0]], d_ref=[[1, 1], [0, 0]], mode=AAF)
        self.assertAlmostEqual(average_hamming(panel), 1.0)
        self.assertAlmostEqual(average_hamming(panel, np.array([False, True])), 0.5)


class TestSpgrConfig(unittest.TestCase):

    def test_epsilons_sorted_and_deduplicated(self):
        cfg = SpgrConfig(epsilons=(10.0, 1.0, 10.0))
        self.assertEqual(cfg.epsilons, (1.0, 10.0))
        self.assertEqual(cfg.worker_epsilons(), [1.0, 10.0, math.inf])

    def test_invalid(self):
        with self.assertRaises(ParameterError):
            SpgrConfig(epsilons=(0.0, 1.0))
        with self.assertRaises(ParameterError):
            SpgrConfig(t=0)
        with self.assertRaises(ParameterError):
            SpgrConfig(variant="random")
        with self.assertRaises(ParameterError):
            SpgrConfig(masking=False, noise=False)


class TestSpgrSearch(unittest.TestCase):
    """Test the search variants on a small AAF panel."""

    def setUp(self):
        self.panel = aaf_panel()
        self.model = ThreatModel.fixed(median_theta(self.panel))
        self.cfg = SpgrConfig(alpha=0.9, w=1.0, model=self.model, t=5, epsilons=(1.0, 10.0, 100.0), seed=11)

    def test_objective_matches_metrics(self):
        solution = spgr(self.panel, self.cfg)
        expected = 0.9 * solution.noise_l1 + 0.1 * solution.masks.size - 1.0 * solution.n_covered
        self.assertAlmostEqual(solution.objective, expected, places=9)

    def test_same_seed_reproducible(self):
        a = spgr(self.panel, self.cfg)
        b = spgr(self.panel, self.cfg)
        self.assertEqual(a.objective, b.objective)
        np.testing.assert_array_equal(a.delta, b.delta)

    def test_threads_do_not_change_result(self):
        serial = spgr_search(self.panel, self.cfg)
        threaded = spgr_search(self.panel, replace(self.cfg, threads=4))
        self.assertEqual(serial.solution.objective, threaded.solution.objective)
        self.assertEqual(serial.log, threaded.log)

    def test_two_snapshots_per_epsilon_when_t_is_m(self):
        result = spgr_search(self.panel, replace(self.cfg, t=self.panel.m))
        for eps in self.cfg.worker_epsilons():
            self.assertEqual(sum(1 for c in result.log if c.epsilon == eps), 2)

    def test_parallel_equals_sequential_for_one_epsilon(self):
        cfg = replace(self.cfg, epsilons=(10.0,), include_noiseless=False)
        parallel = spgr(self.panel, cfg)
        sequential = spgr(self.panel, replace(cfg, variant=SEQUENTIAL))
        self.assertAlmostEqual(parallel.objective, sequential.objective, places=12)
        np.testing.assert_array_equal(parallel.masks, sequential.masks)
        np.testing.assert_allclose(parallel.delta, sequential.delta)

    def test_binary_search_stays_in_range(self):
        result = spgr_search(self.panel, replace(self.cfg, variant=BINARY_SEARCH))
        noisy = [c.epsilon for c in result.log if not math.isinf(c.epsilon)]
        self.assertTrue(noisy)
        self.assertTrue(all(1.0 <= e <= 100.0 for e in noisy))

    def test_best_from_log_replays_other_weight(self):
        result = spgr_search(self.panel, self.cfg)
        for w in (0.01, 5.0, 100.0):
            rerun = spgr(self.panel, replace(self.cfg, w=w))
            replayed = best_from_log(result.log, self.cfg.alpha, w)
            self.assertAlmostEqual(replayed.objective(self.cfg.alpha, w), rerun.objective, places=9)

    def test_contains_noise_only_and_mask_only(self):
        for w in (0.1, 1.0, 10.0):
            cfg = replace(self.cfg, w=w)
            combined = spgr(self.panel, cfg).objective
            self.assertLessEqual(combined, run_dp_laplace(self.panel, cfg).objective + 1e-9)
            self.assertLessEqual(combined, run_mask_only(self.panel, cfg).objective + 1e-9)

    def test_mask_only_has_no_noise(self):
        solution = run_mask_only(self.panel, self.cfg)
        self.assertEqual(solution.noise_l1, 0.0)
        self.assertEqual(solution.method, "mask-only")

    def test_noise_only_has_no_masks(self):
        solution = run_dp_laplace(self.panel, self.cfg)
        self.assertEqual(solution.masks.size, 0)

    def test_noise_reuse_same_epoch_count(self):
        fresh = spgr_search(self.panel, self.cfg)
        reused = spgr_search(self.panel, replace(self.cfg, noise_reuse=True))
        self.assertEqual(len(fresh.log), len(reused.log))

    def test_adaptive_model(self):
        solution = spgr(self.panel, replace(self.cfg, model=ThreatModel.adaptive(20)))
        self.assertLessEqual(solution.objective, 0.0)
        self.assertEqual(solution.model.kind, "adaptive")

    def test_zero_weight_prefers_noise_free_release(self):
        solution = spgr(self.panel, replace(self.cfg, w=0.0))
        self.assertEqual(solution.objective, 0.0)
        self.assertEqual(solution.extra["epsilon"], NOISELESS)

    def test_beacon_panel_rejected(self):
        beacon = GenotypePanel(d=[[1]], d_ref=[[0], [1], [0]])
        with self.assertRaises(ModeMismatchError):
            spgr(beacon, self.cfg)


class TestCandidateOrder(unittest.TestCase):

    def test_ties_prefer_larger_epsilon_then_fewer_masks(self):
        log = [
            SpgrCandidate(epsilon=10.0, n_masked=0, noise_l1=0.0, n_covered=1, epoch=0),
            SpgrCandidate(epsilon=100.0, n_masked=0, noise_l1=0.0, n_covered=1, epoch=1),
            SpgrCandidate(epsilon=100.0, n_masked=0, noise_l1=0.0, n_covered=1, epoch=0),
        ]
        self.assertEqual(best_from_log(log, 0.5, 1.0), log[2])

    def test_empty_log(self):
        with self.assertRaises(ParameterError):
            best_from_log([], 0.5, 1.0)


if __name__ == '__main__':
    unittest.main()
