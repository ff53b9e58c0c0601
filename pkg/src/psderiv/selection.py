"""Smoothing-parameter selection on a fixed log-spaced grid.

Three selectors share one grid solve: GCV, REML (mixed-model form with the
error variance profiled out) and an oracle that needs the true target.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import derivative_transform, design_matrix
from .errors import InvalidLambdaError, NoValidLambdaError, SaturatedFitError
from .solver import solve_banded, solve_grid

SELECTORS = ("gcv", "reml", "oracle")


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size == 0 or np.any(~(v > 0)) or np.any(np.diff(v) <= 0):
            raise InvalidLambdaError("lambda grid must be positive and strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def log_spaced(cls, lo=1e-12, hi=1e2, count=85):
        return cls(np.logspace(np.log10(lo), np.log10(hi), int(count)))

    @property
    def count(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class SelectionResult:
    lambda_star: float
    criterion_curve: np.ndarray = field(repr=False)  # shape (count, 2): lambda, score
    selector: str
    index: int = -1
    solution: object = field(default=None, repr=False)

    @property
    def result(self):
        """SolveResult at the chosen lambda."""
        return self.solution.result(self.index)


@dataclass(frozen=True, eq=False)
class OracleTarget:
    """True r-th derivative on ``[0, 1]`` for the oracle selector."""

    r: int
    truth: object
    grid_size: int = 2001


def gcv_score(result, n):
    """``n * rss / (n - tr(H))**2``."""
    denom = n - result.hat_trace
    if not denom > 0:
        raise SaturatedFitError(f"n - tr(H) = {denom:g}; GCV undefined for a saturated fit")
    return n * result.rss / denom**2


def _gcv_curve(sol, n):
    denom = n - sol.traces
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = n * sol.rss / denom**2
    scores[~(denom > 0) | ~sol.valid] = np.nan
    return scores


def _log_pdet(penalty):
    ev = np.linalg.eigvalsh(penalty.dense)
    return float(np.log(ev[penalty.m :]).sum())


def _reml_terms(n, m, p, lam, rss, quad, logdet, log_pdet):
    # logdet is log|G_n + lam P|; B'B + n lam P = n (G_n + lam P)
    dp = rss + n * lam * quad
    nu = n - m
    return 0.5 * (
        nu * (np.log(2.0 * np.pi * dp / nu) + 1.0)
        + p * np.log(n)
        + logdet
        - (p - m) * np.log(n * lam)
        - log_pdet
    )


def reml_score(y, system, lam):
    """Negative restricted log-likelihood, error variance profiled out.

    The coefficients get the improper prior ``N(0, sigma^2 (n lam P)^-)``;
    the penalty null space (dimension ``m``) plays the fixed effects and
    ``|P|`` is a pseudo-determinant.
    """
    lam = float(lam)
    if not lam > 0:
        raise InvalidLambdaError(f"REML needs lambda > 0, got {lam}")
    res = solve_banded(system, y, lam)
    pen = system.penalty
    return float(
        _reml_terms(
            system.n, pen.m, system.size, lam, res.rss, pen.quad(res.alpha_hat),
            res.logdet, _log_pdet(pen),
        )
    )


def _reml_curve(system, sol):
    pen = system.penalty
    diffs = np.diff(sol.alphas, n=pen.m, axis=1)
    quad = pen.scale * np.einsum("ij,ij->i", diffs, diffs)
    scores = _reml_terms(
        system.n, pen.m, system.size, sol.lams, sol.rss, quad, sol.logdets, _log_pdet(pen)
    )
    scores[~sol.valid] = np.nan
    return scores


def oracle_matrix(knots, q, r, xs):
    """Rows map order-q coefficients to the r-th derivative at `xs`."""
    lower = design_matrix(knots, q - r, xs).values
    if r == 0:
        return lower
    return lower @ derivative_transform(knots, q, r).matrix.T


def _oracle_curve(system, sol, target):
    knots = system.basis.knots
    q = system.basis.order
    xs = np.linspace(0.0, 1.0, int(target.grid_size))
    ev = oracle_matrix(knots, q, target.r, xs)
    err = ev @ sol.alphas.T - np.asarray(target.truth(xs), dtype=np.float64)[:, None]
    scores = np.trapezoid(err**2, xs, axis=0)
    scores[~sol.valid] = np.nan
    return scores


def _pick(lams, scores, selector, sol):
    finite = np.isfinite(scores)
    if not finite.any():
        raise NoValidLambdaError(f"{selector}: criterion undefined at every grid point")
    # np.argmin returns the first minimum, i.e. the smallest lambda on ties
    idx = int(np.argmin(np.where(finite, scores, np.inf)))
    curve = np.column_stack((lams, scores))
    return SelectionResult(float(lams[idx]), curve, selector, idx, sol)


def select(selector, system, y, grid=None, target=None, solution=None):
    """Pick lambda on `grid` by minimizing the selector's criterion.

    `target` (an :class:`OracleTarget`) is required for ``"oracle"``. A
    precomputed `solution` from :func:`solve_grid` may be passed to share the
    solves across selectors.
    """
    if grid is None:
        grid = LambdaGrid.log_spaced()
    elif not isinstance(grid, LambdaGrid):
        grid = LambdaGrid(grid)
    sol = solution if solution is not None else solve_grid(system, y, grid.values)
    if selector == "gcv":
        scores = _gcv_curve(sol, system.n)
    elif selector == "reml":
        scores = _reml_curve(system, sol)
    elif selector == "oracle":
        if target is None:
            raise ValueError("oracle selector needs the true target function")
        scores = _oracle_curve(system, sol, target)
    else:
        raise ValueError(f"unknown selector {selector!r}; expected one of {SELECTORS}")
    return _pick(grid.values, scores, selector, sol)
