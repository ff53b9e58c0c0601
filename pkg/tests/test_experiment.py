"""Monte-Carlo harness: test functions, data, losses, rates and gaps."""

import math

import numpy as np
import pytest

from psderiv import (
    ExperimentConfig,
    estimate_rate,
    generate_data,
    ise,
    run_sweep,
    minimax_rate,
    test_function,
)
from psderiv.errors import (
    AlignmentError,
    InsufficientDataError,
    NonFiniteEstimateError,
    UnknownFunctionError,
)
from psderiv.experiment import (
    ReplicateRecord,
    compare_oracle,
    gap_from_records,
    log_ise_gap,
    replicate_seed,
    run_replicate,
)


class TestFunctions:
    def test_f2_values(self):
        f2 = test_function("f2")
        assert f2.value(0.5) == 0.0
        assert f2.value(0.25) == pytest.approx(16 * math.exp(-2), rel=1e-14)
        assert f2.value(0.25) == pytest.approx(2.1654, abs=1e-4)

    def test_f1_origin(self):
        f1 = test_function("f1")
        assert f1.domain == (-1.0, 1.0)
        # u = 0.5 is x = 0 on the original interval
        assert f1.value(0.5) == pytest.approx(math.log(4 / 3), rel=1e-14)
        assert f1.value(0.5) == pytest.approx(0.28768, abs=1e-5)

    def test_f3_domain(self):
        f3 = test_function("f3")
        assert f3.domain == (0.25, 1.0)
        assert f3.value(1.0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("fn_id", ["f1", "f2", "f3"])
    def test_derivatives_match_finite_differences(self, rng, fn_id):
        fn = test_function(fn_id)
        xs = rng.uniform(0.01, 0.99, 500)
        h = 1e-5
        for r, (lower, ref) in enumerate([(fn.value, fn.d1), (fn.d1, fn.d2)], start=1):
            fd = (lower(xs + h) - lower(xs - h)) / (2 * h)
            exact = ref(xs)
            assert np.max(np.abs(fd - exact)) / np.max(np.abs(exact)) < 1e-6, r

    def test_range_span(self):
        assert test_function("f2").range_span == pytest.approx(2 * 32 * math.exp(-0.5) / 4, rel=1e-6)

    def test_unknown(self):
        with pytest.raises(UnknownFunctionError):
            test_function("f9")
        with pytest.raises(KeyError):
            test_function("f9")

    def test_derivative_accessor(self):
        fn = test_function("f1")
        assert fn.derivative(0) is fn.value and fn.derivative(2) is fn.d2


class TestData:
    def test_noiseless(self):
        fn = test_function("f2")
        xs, ys = generate_data(fn, 50, 0.0, 1)
        np.testing.assert_array_equal(ys, fn.value(xs))
        np.testing.assert_array_equal(xs, np.linspace(0, 1, 50))

    def test_deterministic(self):
        fn = test_function("f1")
        a = generate_data(fn, 300, 0.1, replicate_seed(7, 300, 4))
        b = generate_data(fn, 300, 0.1, replicate_seed(7, 300, 4))
        assert a[1].tobytes() == b[1].tobytes()
        c = generate_data(fn, 300, 0.1, replicate_seed(7, 300, 5))
        assert not np.array_equal(a[1], c[1])

    def test_noise_level(self):
        fn = test_function("f2")
        xs, ys = generate_data(fn, 10_000, 0.1, 123)
        assert np.std(ys - fn.value(xs), ddof=1) == pytest.approx(0.1, rel=0.03)

    def test_small_n(self):
        with pytest.raises(ValueError):
            generate_data(test_function("f2"), 1, 0.1, 0)


class TestISE:
    def test_identical(self):
        assert ise(np.sin, np.sin) == 0.0

    def test_unit_offset(self):
        assert ise(lambda x: x + 1.0, lambda x: x) == pytest.approx(1.0, rel=1e-14)

    def test_sine(self):
        val = ise(lambda x: np.sin(2 * np.pi * x), lambda x: np.zeros_like(x), 10_000)
        assert val == pytest.approx(0.5, abs=1e-6)

    def test_nan(self):
        def est(x):
            out = np.zeros_like(x)
            out[x > 0.5] = np.nan
            return out

        with pytest.raises(NonFiniteEstimateError, match="x=0.5"):
            ise(est, lambda x: x)

    def test_small_grid(self):
        with pytest.raises(ValueError):
            ise(np.sin, np.sin, 50)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.ns == (250, 500, 1000, 2000, 4000)
        assert cfg.noise_sd() == 0.1
        assert cfg.grid().count == 85

    def test_noise_fraction(self):
        cfg = ExperimentConfig(function="f3", sigma=0.3, noise_fraction=True)
        assert cfg.noise_sd() == pytest.approx(0.3 * test_function("f3").range_span)

    @pytest.mark.parametrize(
        "kwargs", [{"ns": (500, 250, 1000)}, {"reps": 0}, {"sigma": 0.0}, {"targets": (3,)}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)

    def test_knots_grow(self):
        cfg = ExperimentConfig(scenario="fast")
        ks = [cfg.n_knots(n) for n in cfg.ns]
        assert ks == sorted(ks) and ks[0] < ks[-1]


class TestReplicates:
    def test_deterministic_record(self):
        cfg = ExperimentConfig(seed=5)
        assert run_replicate(cfg, 500, 3) == run_replicate(cfg, 500, 3)

    def test_noiseless_bias_regime(self):
        cfg = ExperimentConfig(sigma=1e-9, ns=(4000,), reps=1)
        rec = run_replicate(cfg, 4000, 0)
        assert rec.ise[0] < 1e-6

    def test_noiseless_ise_decreases(self):
        cfg = ExperimentConfig(sigma=1e-9, ns=(250, 500, 1000, 2000, 4000), reps=1)
        ises = [run_replicate(cfg, n, 0).ise[0] for n in cfg.ns]
        assert all(b < a for a, b in zip(ises, ises[1:]))

    def test_sweep_order_and_parallel_equivalence(self):
        cfg = ExperimentConfig(ns=(250, 500, 1000), reps=3, seed=2)
        serial = run_sweep(cfg, ("gcv", "oracle"))
        assert [(r.n, r.rep) for r in serial["gcv"]] == [(n, k) for n in cfg.ns for k in range(3)]
        parallel = run_sweep(cfg, ("gcv", "oracle"), jobs=2)
        assert serial == parallel

    def test_failed_replicate_is_recorded(self, caplog):
        # far more coefficients than points and a negligible penalty: GCV is
        # saturated at every grid value, so each replicate fails
        cfg = ExperimentConfig(ns=(5, 6, 7), reps=1, lam_min=1e-300, lam_max=1e-299, lam_count=2,
                               c_slow=40.0)
        recs = run_sweep(cfg)["gcv"]
        assert all(r.failed and "undefined" in r.error for r in recs)
        assert "failed" in caplog.text
        with pytest.raises(InsufficientDataError):
            estimate_rate(recs, 0)


class TestRates:
    def test_minimax_rate(self):
        assert [minimax_rate(r) for r in (0, 1, 2)] == [-4 / 9, -3 / 9, -2 / 9]
        assert minimax_rate(2) == pytest.approx(-0.22, abs=0.003)

    def _records(self, mean_ise):
        return [
            ReplicateRecord(n, 0, "gcv", {0: mean_ise(n)}, {0: 1.0}, 10)
            for n in (250, 500, 1000, 2000, 4000)
        ]

    def test_exact_power_law(self):
        rep = estimate_rate(self._records(lambda n: n ** (-2 / 3)), 0)
        assert rep.slope == pytest.approx(-1 / 3, abs=1e-12)
        assert rep.ci_high - rep.ci_low == pytest.approx(0.0, abs=1e-7)
        assert rep.optimal_rate == minimax_rate(0)

    def test_ci_brackets_slope(self, rng):
        rep = estimate_rate(self._records(lambda n: n ** -0.9 * rng.uniform(0.5, 2)), 0)
        assert rep.ci_low <= rep.slope <= rep.ci_high

    def test_failed_dropped_and_counted(self):
        recs = self._records(lambda n: 1 / n)
        recs.append(ReplicateRecord(500, 1, "gcv", {}, {}, 10, failed=True, error="x"))
        rep = estimate_rate(recs, 0)
        assert rep.failed == 1
        assert rep.slope == pytest.approx(-0.5)
        assert dict(rep.per_n_count)[500] == 1

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            estimate_rate(self._records(lambda n: 1 / n)[:2], 0)

    def test_as_dict(self):
        d = estimate_rate(self._records(lambda n: 1 / n), 0).as_dict()
        assert {"slope", "ci_low", "ci_high", "optimal_rate", "per_n"} <= set(d)


class TestOracleGap:
    def test_definition(self):
        assert log_ise_gap(1.0, 1.0) == 0.0
        assert log_ise_gap(math.e**2, 1.0) == pytest.approx(100.0)

    def test_self_comparison(self):
        cfg = ExperimentConfig(ns=(300,), reps=4)
        recs = run_sweep(cfg, ("oracle",))["oracle"]
        gap = gap_from_records(recs, recs)
        assert all(v == 0.0 for v in gap.gaps.values())

    def test_misaligned(self):
        cfg = ExperimentConfig(ns=(300,), reps=3)
        recs = run_sweep(cfg)["gcv"]
        with pytest.raises(AlignmentError):
            gap_from_records(recs, recs[:2])

    def test_nonnegative_per_replicate(self):
        gap = compare_oracle(ExperimentConfig(ns=(500,), reps=8, seed=1))
        assert all(row[-1] >= 0.0 for row in gap.per_replicate)
        assert len(gap.per_replicate) == 8 * 3
