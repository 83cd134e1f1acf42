"""Unit tests for the Beacon and AAF likelihood-ratio scores."""

import unittest
from decimal import Decimal, getcontext

import numpy as np

from src.core.errors import ClipBoundError, ModeMismatchError, ParameterError
from src.core.lrt import (
    FLIP,
    MASK,
    ReleaseState,
    aaf_lrt,
    aaf_terms,
    beacon_contributions,
    beacon_lrt,
    marginal_contributions,
    precompute_beacon_constants,
)
from src.data.panel import AAF, BEACON, REFERENCE, GenotypePanel


def random_panel(rng, m, n, n_ref, mode=BEACON, max_ref=0.45):
    """Random binary panel; in beacon mode reference columns stay below 0.5."""
    q = rng.uniform(0.01, max_ref, size=m)
    d = (rng.random((n, m)) < q).astype(np.uint8)
    d_ref = (rng.random((n_ref, m)) < q).astype(np.uint8)
    if mode == BEACON:
        limit = (n_ref - 1) // 2
        for j in range(m):
            ones = np.flatnonzero(d_ref[:, j])
            d_ref[ones[limit:], j] = 0
    return GenotypePanel(d=d, d_ref=d_ref, mode=mode)


class TestBeaconConstants(unittest.TestCase):
    """Test A_j, B_j and degenerate handling."""

    def test_matches_high_precision_reference(self):
        getcontext().prec = 60
        d = [[1, 0], [0, 0], [1, 1], [0, 0]]
        d_ref = [[1, 0], [0, 0], [0, 0], [0, 1]]
        panel = GenotypePanel(d=d, d_ref=d_ref)
        gamma = 1e-3
        consts = precompute_beacon_constants(panel, gamma)

        n = 4
        for j, pbar in enumerate((Decimal(1) / 4, Decimal(1) / 4)):
            r_n = (1 - pbar) ** (2 * n)
            r_n1 = (1 - pbar) ** (2 * (n - 1))
            g = Decimal(gamma)
            a = ((1 - r_n) / (1 - g * r_n1)).ln()
            b = (r_n / (g * r_n1)).ln()
            self.assertAlmostEqual(consts.a[j], float(a), places=12)
            self.assertAlmostEqual(consts.b[j], float(b), places=12)

    def test_b_positive_on_random_panels(self):
        rng = np.random.default_rng(0)
        for trial in range(1000):
            panel = random_panel(rng, m=20, n=5, n_ref=7)
            gamma = (1e-6, 1e-3, 0.2)[trial % 3]
            consts = precompute_beacon_constants(panel, gamma)
            self.assertTrue((consts.b > 0).all())

    def test_masking_no_response_never_raises_dataset_score(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            panel = random_panel(rng, m=20, n=3, n_ref=7, max_ref=0.2)
            consts = precompute_beacon_constants(panel)
            base = ReleaseState.for_panel(panel)
            no_snvs = np.flatnonzero(base.x == 0)
            if no_snvs.size == 0:
                continue
            masked = ReleaseState.for_panel(panel, masks=no_snvs)
            before = beacon_lrt(panel, consts, base)
            after = beacon_lrt(panel, consts, masked)
            self.assertTrue((after <= before + 1e-12).all())

    def test_degenerate_snv(self):
        panel = GenotypePanel(d=[[1, 1]], d_ref=[[0, 1], [0, 0], [0, 0]])
        consts = precompute_beacon_constants(panel)
        self.assertTrue(consts.degenerate[0])
        self.assertFalse(consts.degenerate[1])
        self.assertEqual(consts.a[0], 0.0)
        self.assertEqual(consts.delta_flip[0], 0.0)
        self.assertEqual(consts.delta_mask[0], 0.0)

    def test_invalid_gamma(self):
        panel = GenotypePanel(d=[[1]], d_ref=[[0], [1], [0]])
        for gamma in (0.0, 0.25, -1.0):
            with self.assertRaises(ParameterError):
                precompute_beacon_constants(panel, gamma)

    def test_aaf_panel_rejected(self):
        panel = GenotypePanel(d=[[1]], d_ref=[[1]], mode=AAF)
        with self.assertRaises(ModeMismatchError):
            precompute_beacon_constants(panel)


class TestBeaconScores(unittest.TestCase):
    """Test the Beacon LRT and its marginal contributions."""

    def setUp(self):
        self.rng = np.random.default_rng(42)
        self.panel = random_panel(self.rng, m=60, n=12, n_ref=15)
        self.consts = precompute_beacon_constants(self.panel)

    def test_undefended_score_formula(self):
        state = ReleaseState.for_panel(self.panel)
        x = state.x
        expected = self.panel.d @ (x * self.consts.a + (1 - x) * self.consts.b)
        np.testing.assert_allclose(beacon_lrt(self.panel, self.consts, state), expected)

    def test_single_action_deltas(self):
        base = ReleaseState.for_panel(self.panel)
        yes = np.flatnonzero(base.x > 0)
        before = beacon_lrt(self.panel, self.consts, base)
        flip = marginal_contributions(self.panel, self.consts, base, FLIP).per_individual(self.panel.d)
        mask = marginal_contributions(self.panel, self.consts, base, MASK).per_individual(self.panel.d)
        for _ in range(200):
            j = int(self.rng.choice(yes))
            for kind, table in ((FLIP, flip), (MASK, mask)):
                if kind == FLIP:
                    state = ReleaseState.for_panel(self.panel, flips=[j])
                else:
                    state = ReleaseState.for_panel(self.panel, masks=[j])
                after = beacon_lrt(self.panel, self.consts, state)
                tol = 1e-9 * np.maximum(1.0, np.abs(before))
                self.assertTrue((np.abs((after - before) - table[:, j]) <= tol).all())

    def test_random_actions_from_defended_states(self):
        checked = 0
        for _ in range(100):
            yes = np.flatnonzero(ReleaseState.for_panel(self.panel).x > 0)
            picked = self.rng.permutation(self.panel.m)[:12]
            flips = [int(j) for j in picked[:6] if j in yes]
            masks = [int(j) for j in picked[6:]]
            base = ReleaseState.for_panel(self.panel, flips=flips, masks=masks)
            before = beacon_lrt(self.panel, self.consts, base)
            flip = marginal_contributions(self.panel, self.consts, base, FLIP).per_individual(self.panel.d)
            mask = marginal_contributions(self.panel, self.consts, base, MASK).per_individual(self.panel.d)
            free = np.setdiff1d(np.arange(self.panel.m), picked)
            free_yes = np.intersect1d(free, yes)
            for _ in range(100):
                if free_yes.size and self.rng.random() < 0.5:
                    j = int(self.rng.choice(free_yes))
                    state, table = ReleaseState.for_panel(self.panel, flips=flips + [j], masks=masks), flip
                else:
                    j = int(self.rng.choice(free))
                    state, table = ReleaseState.for_panel(self.panel, flips=flips, masks=masks + [j]), mask
                after = beacon_lrt(self.panel, self.consts, state)
                tol = 1e-9 * np.maximum(1.0, np.abs(before))
                self.assertTrue((np.abs((after - before) - table[:, j]) <= tol).all())
                checked += 1
        self.assertEqual(checked, 10_000)

    def test_actioned_snvs_have_zero_marginal(self):
        yes = np.flatnonzero((ReleaseState.for_panel(self.panel).x > 0) & ~self.consts.degenerate)
        base = ReleaseState.for_panel(self.panel, flips=yes[:2], masks=yes[2:4])
        flip = marginal_contributions(self.panel, self.consts, base, FLIP)
        mask = marginal_contributions(self.panel, self.consts, base, MASK)
        np.testing.assert_array_equal(flip.on_carrier[yes[:4]], 0.0)
        np.testing.assert_array_equal(mask.on_carrier[yes[2:4]], 0.0)
        np.testing.assert_allclose(mask.on_carrier[yes[:2]], -self.consts.b[yes[:2]])

    def test_masked_score_is_full_score_minus_masked_contributions(self):
        yes = np.flatnonzero(ReleaseState.for_panel(self.panel).x > 0)
        for _ in range(200):
            flips = self.rng.choice(yes, size=min(3, yes.size), replace=False)
            rest = np.setdiff1d(np.arange(self.panel.m), flips)
            masks = self.rng.choice(rest, size=int(self.rng.integers(1, 10)), replace=False)
            full = ReleaseState.for_panel(self.panel, flips=flips)
            contrib = beacon_contributions(self.consts, full)
            removed = self.panel.d[:, masks] @ contrib[masks]
            masked = ReleaseState.for_panel(self.panel, flips=flips, masks=masks)
            np.testing.assert_allclose(
                beacon_lrt(self.panel, self.consts, masked),
                beacon_lrt(self.panel, self.consts, full) - removed,
                rtol=1e-12, atol=1e-9,
            )

    def test_marginal_average_matches_rows(self):
        base = ReleaseState.for_panel(self.panel)
        marg = marginal_contributions(self.panel, self.consts, base, MASK)
        np.testing.assert_allclose(marg.average(self.panel.d), marg.per_individual(self.panel.d).mean(axis=0))

    def test_reference_scores(self):
        state = ReleaseState.for_panel(self.panel)
        scores = beacon_lrt(self.panel, self.consts, state, REFERENCE)
        self.assertEqual(scores.shape, (self.panel.n_ref,))

    def test_flipped_no_response_rejected(self):
        base = ReleaseState.for_panel(self.panel)
        no = np.flatnonzero(base.x == 0)
        if no.size:
            with self.assertRaises(ParameterError):
                ReleaseState.for_panel(self.panel, flips=[int(no[0])])

    def test_mask_and_flip_disjoint(self):
        yes = int(np.flatnonzero(ReleaseState.for_panel(self.panel).x > 0)[0])
        with self.assertRaises(ParameterError):
            ReleaseState.for_panel(self.panel, flips=[yes], masks=[yes])

    def test_noise_l1_counts_flips(self):
        yes = np.flatnonzero(ReleaseState.for_panel(self.panel).x > 0)[:3]
        state = ReleaseState.for_panel(self.panel, flips=yes)
        self.assertEqual(state.noise_l1(), 3.0)


class TestAafScores(unittest.TestCase):
    """Test the AAF LRT."""

    def setUp(self):
        self.panel = GenotypePanel(
            d=[[1, 0, 1], [0, 0, 1], [1, 1, 0]],
            d_ref=[[1, 0, 0], [0, 0, 0], [0, 1, 1], [0, 0, 1]],
            mode=AAF,
        )

    def _expected(self, y, masked=()):
        pbar = np.clip(self.panel.p_ref, 1e-4, 0.9999)
        d = self.panel.d.astype(float)
        terms = d * np.log(pbar / y) + (1 - d) * np.log((1 - pbar) / (1 - y))
        keep = np.ones(self.panel.m, dtype=bool)
        keep[list(masked)] = False
        return terms[:, keep].sum(axis=1)

    def test_score_without_noise(self):
        state = ReleaseState.for_panel(self.panel)
        expected = self._expected(self.panel.released_aaf())
        np.testing.assert_allclose(aaf_lrt(self.panel, state), expected)

    def test_score_with_noise_and_mask(self):
        delta = np.array([-0.1, 0.05, 0.0])
        state = ReleaseState.for_panel(self.panel, masks=[2], delta=delta)
        y = self.panel.released_aaf() + delta
        y[2] = 0.5
        np.testing.assert_allclose(aaf_lrt(self.panel, state), self._expected(y, masked=[2]))

    def test_mask_marginal(self):
        base = ReleaseState.for_panel(self.panel)
        table = marginal_contributions(self.panel, None, base, MASK).per_individual(self.panel.d)
        before = aaf_lrt(self.panel, base)
        for j in range(self.panel.m):
            after = aaf_lrt(self.panel, ReleaseState.for_panel(self.panel, masks=[j]))
            np.testing.assert_allclose(after - before, table[:, j], atol=1e-12)

    def test_clip_violation(self):
        delta = np.array([0.0, 0.0, 0.9])
        with self.assertRaises(ClipBoundError) as ctx:
            ReleaseState.for_panel(self.panel, delta=delta)
        self.assertEqual(ctx.exception.snv, 2)

    def test_clip_ignored_on_masked(self):
        delta = np.array([0.0, 0.0, 0.9])
        state = ReleaseState.for_panel(self.panel, masks=[2], delta=delta)
        self.assertEqual(state.noise_l1(), 0.0)

    def test_flip_marginal_rejected(self):
        with self.assertRaises(ModeMismatchError):
            marginal_contributions(self.panel, None, ReleaseState.for_panel(self.panel), FLIP)


class TestAafRandomPanels(unittest.TestCase):
    """AAF mask deltas and additivity on random panels with noise already applied."""

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.panel = random_panel(self.rng, m=40, n=10, n_ref=12, mode=AAF, max_ref=0.9)
        x = self.panel.released_aaf()
        target = np.clip(x + self.rng.uniform(-0.05, 0.05, size=self.panel.m), 0.001, 0.999)
        self.delta = target - x

    def test_mask_deltas_from_noised_state(self):
        for _ in range(50):
            masks = self.rng.choice(self.panel.m, size=int(self.rng.integers(0, 8)), replace=False)
            base = ReleaseState.for_panel(self.panel, masks=masks, delta=self.delta)
            before = aaf_lrt(self.panel, base)
            table = marginal_contributions(self.panel, None, base, MASK).per_individual(self.panel.d)
            np.testing.assert_array_equal(table[:, masks], 0.0)
            for j in np.setdiff1d(np.arange(self.panel.m), masks)[:10]:
                after = aaf_lrt(self.panel, ReleaseState.for_panel(self.panel, masks=list(masks) + [int(j)], delta=self.delta))
                np.testing.assert_allclose(after - before, table[:, j], rtol=1e-9, atol=1e-9)

    def test_masked_score_is_full_score_minus_masked_contributions(self):
        full = ReleaseState.for_panel(self.panel, delta=self.delta)
        a, b = aaf_terms(self.panel, full)
        d = self.panel.d.astype(np.float64)
        per_snv = d * a + (1.0 - d) * b
        for _ in range(200):
            masks = self.rng.choice(self.panel.m, size=int(self.rng.integers(1, 15)), replace=False)
            masked = ReleaseState.for_panel(self.panel, masks=masks, delta=self.delta)
            np.testing.assert_allclose(
                aaf_lrt(self.panel, masked),
                aaf_lrt(self.panel, full) - per_snv[:, masks].sum(axis=1),
                rtol=1e-9, atol=1e-9,
            )


if __name__ == '__main__':
    unittest.main()
