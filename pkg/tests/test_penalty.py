"""Difference penalties."""

import numpy as np
import pytest

from psderiv import build_difference_matrix, build_penalty, make_knots, penalty_for_knots
from psderiv.errors import InsufficientCoefficientsError


def power_iteration(a, iters=20000, seed=0):
    """Largest eigenvalue of a symmetric PSD matrix via the Rayleigh quotient."""
    v = np.random.default_rng(seed).standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = a @ v
        v = w / np.linalg.norm(w)
    return float(v @ a @ v)


class TestDifferenceMatrix:
    def test_first_order(self):
        np.testing.assert_array_equal(
            build_difference_matrix(4, 1),
            [[-1, 1, 0, 0], [0, -1, 1, 0], [0, 0, -1, 1]],
        )

    def test_second_order(self):
        np.testing.assert_array_equal(build_difference_matrix(4, 2), [[1, -2, 1, 0], [0, 1, -2, 1]])

    @pytest.mark.parametrize("size,m", [(5, 1), (9, 2), (12, 3), (20, 4)])
    def test_annihilates_constants(self, size, m):
        assert np.all(build_difference_matrix(size, m) @ np.full(size, 3.7) == 0)

    @pytest.mark.parametrize("size,m", [(2, 2), (3, 3), (1, 1), (5, 0)])
    def test_insufficient(self, size, m):
        with pytest.raises(InsufficientCoefficientsError):
            build_difference_matrix(size, m)


class TestPenalty:
    def test_hand_example(self):
        p = build_penalty(4, 2)
        np.testing.assert_array_equal(
            p.dense, [[1, -2, 1, 0], [-2, 5, -4, 1], [1, -4, 5, -2], [0, 1, -2, 1]]
        )
        assert p.bandwidth == 5

    def test_ramp_in_null_space(self):
        assert build_penalty(4, 2).quad(np.arange(4.0)) == 0.0

    def test_insufficient_propagates(self):
        with pytest.raises(InsufficientCoefficientsError):
            build_penalty(2, 2)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_symmetric_and_banded(self, m):
        p = build_penalty(30, m).dense
        assert np.array_equal(p, p.T)
        i, j = np.nonzero(p)
        assert np.max(np.abs(i - j)) == m

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_quadratic_form(self, rng, m):
        d = build_difference_matrix(25, m)
        p = build_penalty(25, m)
        for _ in range(100):
            a = rng.standard_normal(25)
            ref = np.sum((d @ a) ** 2)
            assert abs(a @ p.dense @ a - ref) <= 1e-12 * ref
            assert abs(p.quad(a) - ref) <= 1e-12 * ref

    @pytest.mark.parametrize("m", [1, 2, 3])
    @pytest.mark.parametrize("size", [5, 20, 80, 200])
    def test_psd(self, m, size):
        assert np.linalg.eigvalsh(build_penalty(size, m).dense)[0] >= -1e-10

    @pytest.mark.parametrize(
        "m,size", [(1, 10), (1, 200), (2, 10), (2, 200), (3, 10), (3, 60)]
    )
    def test_rank_deficiency(self, m, size):
        ev = np.linalg.eigvalsh(build_penalty(size, m).dense)
        assert np.all(np.abs(ev[:m]) < 1e-10)
        assert ev[m] >= 1e-10

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_polynomial_null_space(self, m):
        x = np.arange(12.0)
        p = build_penalty(12, m)
        for deg in range(m):
            a = x**deg
            assert np.max(np.abs(p.dense @ a)) < 1e-9 * max(1.0, np.abs(a).max())

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_spectral_growth(self, m):
        q = 4
        Ks = np.array([10, 20, 40, 80])
        norms = [power_iteration(penalty_for_knots(make_knots(K, q), m).dense) for K in Ks]
        # cross-check the iteration against a dense eigensolver
        ref = np.linalg.eigvalsh(penalty_for_knots(make_knots(80, q), m).dense)[-1]
        assert norms[-1] == pytest.approx(ref, rel=1e-6)
        inv_h = np.array([1.0 / make_knots(K, q).h_max for K in Ks])
        slope = np.polyfit(np.log(inv_h), np.log(norms), 1)[0]
        assert abs(slope - (2 * m - 1)) < 0.1

    def test_unscaled_norm_bounded(self):
        norms = [np.linalg.eigvalsh(penalty_for_knots(make_knots(K, 4), 2, scaled=False).dense)[-1]
                 for K in (10, 40, 160)]
        assert max(norms) <= 16.0
