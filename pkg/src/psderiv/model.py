"""P-spline fits and the naive derivative estimator."""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .basis import (
    derivative_coefficients,
    derivative_transform,
    design_matrix,
    make_knots,
)
from .errors import EmptyDesignError, ShapeError, UnsupportedDerivativeOrderError
from .penalty import penalty_for_knots
from .selection import LambdaGrid, SelectionResult, select
from .solver import build_system, solve_banded


class AssumptionWarning(UserWarning):
    """A fit was configured outside the conditions the rate theory needs."""


def knot_count(n, scenario, q=4, m=2, c_slow=8.0, c_fast=4.0):
    """Interior knot count for a knot-growth scenario.

    ``slow``: ``ceil(c_slow * n**(1/(2q+1)))``;
    ``fast``: ``ceil(c_fast * n**(1/(2m+1)))``.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if scenario == "slow":
        raw = c_slow * n ** (1.0 / (2 * q + 1))
    elif scenario == "fast":
        raw = c_fast * n ** (1.0 / (2 * m + 1))
    else:
        raise ValueError(f"unknown knot scenario {scenario!r}")
    # guard exact powers (512**(1/9) is 2.0000000000000004 in floating point)
    return max(1, int(math.ceil(round(raw, 9))))


@dataclass
class FitConfig:
    q: int = 4
    m: int = 2
    n_knots: int | None = None
    scenario: str | None = None
    c_slow: float = 8.0
    c_fast: float = 4.0
    knot_locations: np.ndarray | None = None
    selector: str = "gcv"
    grid: LambdaGrid | None = None
    lam: float | None = None
    scaled_penalty: bool = True
    mesh_bound: float = 10.0
    target: object = None

    def resolve_knots(self, n):
        if self.knot_locations is not None:
            return make_knots(None, self.q, "custom", self.knot_locations)
        if self.n_knots is not None:
            return make_knots(self.n_knots, self.q)
        if self.scenario is not None:
            K = knot_count(n, self.scenario, self.q, self.m, self.c_slow, self.c_fast)
            return make_knots(K, self.q)
        raise ValueError("FitConfig needs n_knots, scenario or knot_locations")


@dataclass(frozen=True, eq=False)
class PSplineFit:
    knots: object
    q: int
    m: int
    lam: float
    alpha_hat: np.ndarray
    selection: SelectionResult | None
    hat_trace: float
    rss: float
    n: int
    fitted: np.ndarray = field(repr=False)
    selector: str = "fixed"
    ridged: bool = False

    @property
    def K(self):
        return self.knots.K

    def predict(self, x):
        """``B(x) @ alpha_hat``; scalar in, scalar out."""
        x = np.asarray(x, dtype=np.float64)
        vals = design_matrix(self.knots, self.q, x.ravel()).values @ self.alpha_hat
        return float(vals[0]) if x.ndim == 0 else vals.reshape(x.shape)

    def derivative_coefficients(self, r, path="matrix"):
        self._check_r(r)
        if path == "matrix":
            return derivative_transform(self.knots, self.q, r).apply(self.alpha_hat)
        if path == "recursion":
            return derivative_coefficients(self.knots, self.q, self.alpha_hat, r)
        raise ValueError(f"unknown path {path!r}")

    def predict_derivative(self, r, x, path="matrix"):
        """Naive estimate of the r-th derivative, ``1 <= r <= q - 2``.

        Differentiates the fitted spline: the coefficients go through the
        derivative transform and are evaluated on the order ``q - r`` basis.
        ``r = 0`` is accepted and equals :meth:`predict`.
        """
        coef = self.derivative_coefficients(r, path)
        x = np.asarray(x, dtype=np.float64)
        vals = design_matrix(self.knots, self.q - r, x.ravel()).values @ coef
        return float(vals[0]) if x.ndim == 0 else vals.reshape(x.shape)

    def _check_r(self, r):
        if not 0 <= r <= self.q - 2:
            raise UnsupportedDerivativeOrderError(
                f"r={r} unsupported for q={self.q}; need 1 <= r <= q-2"
            )


def check_assumptions(knots, n, q, mesh_bound):
    """Warn about configurations outside the rate theory's assumptions."""
    if knots.K >= n:
        warnings.warn(
            f"K={knots.K} interior knots for n={n} points (needs K = o(n))",
            AssumptionWarning,
            stacklevel=3,
        )
    elif n < knots.dim(q):
        warnings.warn(
            f"n={n} is below the basis dimension K+q={knots.dim(q)}",
            AssumptionWarning,
            stacklevel=3,
        )
    if knots.mesh_ratio > mesh_bound:
        warnings.warn(
            f"mesh ratio {knots.mesh_ratio:.3g} exceeds bound {mesh_bound:g}",
            AssumptionWarning,
            stacklevel=3,
        )


def fit(xs, ys, config=None, **overrides):
    """Fit a P-spline and return a :class:`PSplineFit`.

    Parameters
    ----------
    xs, ys : array_like
        Design points in ``[0, 1]`` and responses.
    config : FitConfig, optional
        Defaults to cubic splines (``q=4``) with a second-order penalty.
        Keyword `overrides` replace individual fields.
    """
    if config is None:
        config = FitConfig()
    if overrides:
        config = FitConfig(**{**config.__dict__, **overrides})
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.size == 0:
        raise EmptyDesignError("no data")
    if xs.shape != ys.shape:
        raise ShapeError(f"xs has {xs.size} values, ys has {ys.size}")
    n = xs.shape[0]
    knots = config.resolve_knots(n)
    check_assumptions(knots, n, config.q, config.mesh_bound)
    basis = design_matrix(knots, config.q, xs)
    penalty = penalty_for_knots(knots, config.m, config.scaled_penalty)
    system = build_system(basis, penalty)

    if config.lam is not None:
        res = solve_banded(system, ys, config.lam)
        selection = None
        selector = "fixed"
    else:
        selection = select(config.selector, system, ys, config.grid, config.target)
        res = solve_banded(system, ys, selection.lambda_star)
        selector = config.selector
    return PSplineFit(
        knots=knots,
        q=config.q,
        m=config.m,
        lam=res.lam,
        alpha_hat=res.alpha_hat,
        selection=selection,
        hat_trace=res.hat_trace,
        rss=res.rss,
        n=n,
        fitted=res.fitted,
        selector=selector,
        ridged=res.ridged,
    )
