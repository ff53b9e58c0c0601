"""Monte-Carlo harness for L2 convergence rates of the naive estimator.

Data for replicate ``rep`` at sample size ``n`` comes from
``SeedSequence([seed, n, rep])``, so every replicate is reproducible on its
own and sweeps can run in any order or in parallel.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np
from scipy import stats

from .basis import design_matrix, make_knots
from .errors import (
    AlignmentError,
    InsufficientDataError,
    NonFiniteEstimateError,
    PSplineError,
    UnknownFunctionError,
)
from .model import knot_count
from .penalty import penalty_for_knots
from .selection import LambdaGrid, OracleTarget, oracle_matrix, select
from .solver import build_system, solve_grid

logger = logging.getLogger(__name__)

TARGETS = (0, 1, 2)


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A regression function mapped onto ``[0, 1]``.

    `value`, `d1` and `d2` take ``u`` in ``[0, 1]``; `domain` is the original
    interval and the derivatives include the chain-rule factor of the affine
    map ``x = a + (b - a) u``.
    """

    __test__ = False  # not a pytest class

    id: str
    domain: tuple
    value: object
    d1: object
    d2: object
    range_span: float = field(default=math.nan)

    def derivative(self, r):
        return (self.value, self.d1, self.d2)[r]


def _f1(x):
    return np.sin(2 * np.pi * x) ** 2 + np.log(4.0 / 3.0 + x)


def _f1_d1(x):
    return 2 * np.pi * np.sin(4 * np.pi * x) + 1.0 / (4.0 / 3.0 + x)


def _f1_d2(x):
    return 8 * np.pi**2 * np.cos(4 * np.pi * x) - 1.0 / (4.0 / 3.0 + x) ** 2


def _f2(x):
    u = 1 - 2 * x
    return 32 * np.exp(-8 * u**2) * u


def _f2_d1(x):
    u = 1 - 2 * x
    return -2 * 32 * np.exp(-8 * u**2) * (1 - 16 * u**2)


def _f2_d2(x):
    u = 1 - 2 * x
    return 4 * 32 * np.exp(-8 * u**2) * (256 * u**3 - 48 * u)


_A3 = 2.1 * np.pi
_B3 = 0.05


def _f3(x):
    return np.sqrt(x * (1 - x)) * np.sin(_A3 / (x + _B3))


def _f3_d1(x):
    w = np.sqrt(x * (1 - x))
    dw = (1 - 2 * x) / (2 * w)
    phi = _A3 / (x + _B3)
    dphi = -_A3 / (x + _B3) ** 2
    return dw * np.sin(phi) + w * np.cos(phi) * dphi


def _f3_d2(x):
    w = np.sqrt(x * (1 - x))
    dw = (1 - 2 * x) / (2 * w)
    d2w = -1.0 / (4 * w**3)
    phi = _A3 / (x + _B3)
    dphi = -_A3 / (x + _B3) ** 2
    d2phi = 2 * _A3 / (x + _B3) ** 3
    s, c = np.sin(phi), np.cos(phi)
    return d2w * s + 2 * dw * c * dphi + w * (c * d2phi - s * dphi**2)


_RAW = {
    "f1": ((-1.0, 1.0), _f1, _f1_d1, _f1_d2),
    "f2": ((0.0, 1.0), _f2, _f2_d1, _f2_d2),
    "f3": ((0.25, 1.0), _f3, _f3_d1, _f3_d2),
}


def test_function(fn_id):
    """Return f1, f2 or f3 rescaled to ``[0, 1]``."""
    try:
        (a, b), f, d1, d2 = _RAW[fn_id]
    except KeyError:
        raise UnknownFunctionError(f"unknown test function {fn_id!r}") from None
    s = b - a

    def value(u):
        return f(a + s * np.asarray(u, dtype=np.float64))

    def first(u):
        return s * d1(a + s * np.asarray(u, dtype=np.float64))

    def second(u):
        return s * s * d2(a + s * np.asarray(u, dtype=np.float64))

    grid = value(np.linspace(0.0, 1.0, 100_001))
    return TestFunction(fn_id, (a, b), value, first, second, float(grid.max() - grid.min()))


test_function.__test__ = False


def generate_data(fn, n, sigma, seed):
    """Equispaced design on ``[0, 1]`` plus Gaussian noise.

    `seed` may be an int, a sequence of ints or a ``SeedSequence``.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    xs = np.linspace(0.0, 1.0, int(n))
    ys = fn.value(xs)
    if sigma > 0:
        rng = np.random.default_rng(seed)
        ys = ys + sigma * rng.standard_normal(xs.shape[0])
    return xs, ys


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def ise(estimate, truth, grid_size=2001):
    """Trapezoid-rule ``int_0^1 (estimate - truth)^2``."""
    if grid_size < 100:
        raise ValueError(f"grid_size must be >= 100, got {grid_size}")
    xs = np.linspace(0.0, 1.0, int(grid_size))
    est = np.asarray(estimate(xs), dtype=np.float64)
    bad = ~np.isfinite(est)
    if bad.any():
        raise NonFiniteEstimateError(f"estimate is not finite at x={xs[np.argmax(bad)]:.6g}")
    err = est - np.asarray(truth(xs), dtype=np.float64)
    return float(np.trapezoid(err * err, xs))


# ---------------------------------------------------------------------------
# configuration and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte-Carlo sweep.

    `sigma` is the noise SD, or a fraction of the function's range when
    `noise_fraction` is true.
    """

    function: str = "f2"
    ns: tuple = (250, 500, 1000, 2000, 4000)
    reps: int = 100
    sigma: float = 0.1
    noise_fraction: bool = False
    scenario: str = "slow"
    selector: str = "gcv"
    seed: int = 0
    q: int = 4
    m: int = 2
    c_slow: float = 8.0
    c_fast: float = 4.0
    lam_min: float = 1e-12
    lam_max: float = 1e2
    lam_count: int = 85
    scaled_penalty: bool = True
    ise_grid: int = 2001
    targets: tuple = TARGETS

    def __post_init__(self):
        ns = tuple(int(v) for v in self.ns)
        object.__setattr__(self, "ns", ns)
        object.__setattr__(self, "targets", tuple(int(r) for r in self.targets))
        if len(ns) == 0 or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("ns must be strictly increasing")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if any(not 0 <= r <= self.q - 2 for r in self.targets):
            raise ValueError(f"targets must lie in 0..{self.q - 2}")

    def noise_sd(self, fn=None):
        if not self.noise_fraction:
            return self.sigma
        fn = fn or test_function(self.function)
        return self.sigma * fn.range_span

    def grid(self):
        return LambdaGrid.log_spaced(self.lam_min, self.lam_max, self.lam_count)

    def n_knots(self, n):
        return knot_count(n, self.scenario, self.q, self.m, self.c_slow, self.c_fast)

    def as_dict(self):
        d = asdict(self)
        d["ns"] = list(self.ns)
        d["targets"] = list(self.targets)
        return d


@dataclass(frozen=True)
class ReplicateRecord:
    n: int
    rep: int
    selector: str
    ise: dict  # r -> ISE
    lam: dict  # r -> chosen lambda (same for every r unless oracle)
    K: int
    failed: bool = False
    error: str = ""


def replicate_seed(seed, n, rep):
    return np.random.SeedSequence([int(seed), int(n), int(rep)])


def _run_selectors(config, n, rep, selectors, fn=None):
    """Fit one replicate's data once and score it under several selectors."""
    fn = fn or test_function(config.function)
    K = config.n_knots(n)
    try:
        xs, ys = generate_data(fn, n, config.noise_sd(fn), replicate_seed(config.seed, n, rep))
        knots = make_knots(K, config.q)
        basis = design_matrix(knots, config.q, xs)
        penalty = penalty_for_knots(knots, config.m, config.scaled_penalty)
        system = build_system(basis, penalty)
        grid = config.grid()
        sol = solve_grid(system, ys, grid.values)
        ugrid = np.linspace(0.0, 1.0, config.ise_grid)
        evals = {r: oracle_matrix(knots, config.q, r, ugrid) for r in config.targets}
        truths = {r: fn.derivative(r)(ugrid) for r in config.targets}

        def loss(r, alpha):
            est = evals[r] @ alpha
            if not np.all(np.isfinite(est)):
                bad = ugrid[np.argmax(~np.isfinite(est))]
                raise NonFiniteEstimateError(f"estimate is not finite at x={bad:.6g}")
            err = est - truths[r]
            return float(np.trapezoid(err * err, ugrid))

        out = {}
        for sel in selectors:
            if sel == "oracle":
                ises, lams = {}, {}
                for r in config.targets:
                    target = OracleTarget(r, fn.derivative(r), config.ise_grid)
                    choice = select("oracle", system, ys, grid, target, solution=sol)
                    ises[r] = loss(r, sol.alphas[choice.index])
                    lams[r] = choice.lambda_star
            else:
                choice = select(sel, system, ys, grid, solution=sol)
                alpha = sol.alphas[choice.index]
                ises = {r: loss(r, alpha) for r in config.targets}
                lams = {r: choice.lambda_star for r in config.targets}
            out[sel] = ReplicateRecord(n, rep, sel, ises, lams, K)
        return out
    except PSplineError as exc:
        logger.warning("replicate n=%d rep=%d failed: %s", n, rep, exc)
        return {
            sel: ReplicateRecord(n, rep, sel, {}, {}, K, failed=True, error=str(exc))
            for sel in selectors
        }


def run_replicate(config, n, rep_index):
    """ISE per target for one replicate under ``config.selector``."""
    return _run_selectors(config, n, rep_index, (config.selector,))[config.selector]


def _sweep_task(args):
    config, n, rep, selectors = args
    return _run_selectors(config, n, rep, selectors)


def run_sweep(config, selectors=None, jobs=1):
    """All replicates for every n, in ``(n, rep)`` order.

    Returns ``{selector: [ReplicateRecord, ...]}``.
    """
    selectors = tuple(selectors or (config.selector,))
    tasks = [(config, n, rep, selectors) for n in config.ns for rep in range(config.reps)]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        fn = test_function(config.function)
        results = [_run_selectors(c, n, rep, s, fn) for c, n, rep, s in tasks]
    return {sel: [res[sel] for res in results] for sel in selectors}


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------


def minimax_rate(r, p=4, d=1):
    """Optimal L2 rate exponent ``-(p - r) / (2p + d)``."""
    return -(p - r) / (2 * p + d)


@dataclass(frozen=True)
class RateReport:
    target_r: int
    slope: float
    ci_low: float
    ci_high: float
    intercept: float
    per_n_mean_ise: tuple  # ((n, mean ISE), ...)
    per_n_sd_ise: tuple
    per_n_count: tuple
    optimal_rate: float
    failed: int = 0

    def as_dict(self):
        return {
            "target_r": self.target_r,
            "slope": self.slope,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "intercept": self.intercept,
            "optimal_rate": self.optimal_rate,
            "failed": self.failed,
            "per_n": [
                {"n": n, "mean_ise": mu, "sd_ise": sd, "count": c}
                for (n, mu), (_, sd), (_, c) in zip(
                    self.per_n_mean_ise, self.per_n_sd_ise, self.per_n_count
                )
            ],
        }


def estimate_rate(records, target_r, p=4, level=0.95):
    """OLS slope of ``log sqrt(mean ISE)`` on ``log n``.

    Failed replicates are dropped and counted.
    """
    by_n = {}
    failed = 0
    for rec in records:
        if rec.failed or target_r not in rec.ise:
            failed += 1
            continue
        by_n.setdefault(rec.n, []).append(rec.ise[target_r])
    ns = sorted(by_n)
    if len(ns) < 3:
        raise InsufficientDataError(f"need at least 3 sample sizes with data, got {len(ns)}")
    means = np.array([np.mean(by_n[n]) for n in ns])
    sds = np.array([np.std(by_n[n], ddof=1) if len(by_n[n]) > 1 else 0.0 for n in ns])
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = 0.5 * np.log(means)
    fit = stats.linregress(x, y)
    half = stats.t.ppf(0.5 + level / 2, len(ns) - 2) * fit.stderr
    return RateReport(
        target_r=int(target_r),
        slope=float(fit.slope),
        ci_low=float(fit.slope - half),
        ci_high=float(fit.slope + half),
        intercept=float(fit.intercept),
        per_n_mean_ise=tuple((int(n), float(v)) for n, v in zip(ns, means)),
        per_n_sd_ise=tuple((int(n), float(v)) for n, v in zip(ns, sds)),
        per_n_count=tuple((int(n), len(by_n[n])) for n in ns),
        optimal_rate=minimax_rate(target_r, p),
        failed=failed,
    )


# ---------------------------------------------------------------------------
# naive vs oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleGap:
    """Mean percentage gap between naive and oracle log-ISE, per target."""

    gaps: dict  # r -> mean gap in percent
    per_replicate: tuple  # ((n, rep, r, ise_naive, ise_oracle, gap), ...)


def log_ise_gap(ise_naive, ise_oracle):
    """Percentage gap on the log L2-error scale.

    ``100 * (log sqrt(ISE_naive) - log sqrt(ISE_oracle))``; nonnegative
    whenever the oracle did at least as well, zero when they agree.
    """
    return 50.0 * (math.log(ise_naive) - math.log(ise_oracle))


def gap_from_records(naive, oracle, targets=TARGETS):
    """Pair replicate records by ``(n, rep)`` and average the log-ISE gap."""
    keyed_n = {(r.n, r.rep): r for r in naive if not r.failed}
    keyed_o = {(r.n, r.rep): r for r in oracle if not r.failed}
    if set(keyed_n) != set(keyed_o):
        raise AlignmentError("naive and oracle runs cover different replicates")
    if not keyed_n:
        raise InsufficientDataError("no successful replicates to compare")
    rows = []
    sums = {r: 0.0 for r in targets}
    for key in sorted(keyed_n):
        a, b = keyed_n[key], keyed_o[key]
        for r in targets:
            g = log_ise_gap(a.ise[r], b.ise[r])
            sums[r] += g
            rows.append((key[0], key[1], r, a.ise[r], b.ise[r], g))
    count = len(keyed_n)
    return OracleGap({r: sums[r] / count for r in targets}, tuple(rows))


def compare_oracle(config, jobs=1, naive="gcv"):
    """Naive (``naive`` selector) vs oracle on identical replicate data."""
    sweep = run_sweep(config, (naive, "oracle"), jobs=jobs)
    return gap_from_records(sweep[naive], sweep["oracle"], config.targets)
