"""Penalized normal equations ``(B'B/n + lam P) a = B'y/n``.

:func:`solve` is the dense reference path; :func:`solve_banded` and
:func:`solve_grid` use the banded kernels and are what the model and the
experiment harness call.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import _kernels
from .errors import ShapeError, SingularSystemError

logger = logging.getLogger(__name__)

RIDGE = 1e-12


@dataclass(frozen=True, eq=False)
class PenalizedSystem:
    """Everything about the normal equations that does not depend on `y`.

    Attributes
    ----------
    basis : BasisMatrix
    gram : ndarray
        Dense ``B'B / n``.
    gram_banded : ndarray
        Lower band storage of `gram`, ``q`` rows.
    penalty : PenaltyMatrix
    n : int
    r_factor : ndarray
        Triangular ``R / sqrt(n)`` from ``B = Q R``; ``G = R'R / n``.
    """

    basis: object
    gram: np.ndarray = field(repr=False)
    gram_banded: np.ndarray = field(repr=False)
    penalty: object
    n: int
    r_factor: np.ndarray = field(default=None, repr=False)

    @property
    def size(self):
        return self.gram.shape[0]

    @property
    def bandwidth(self):
        """Half bandwidth of ``G + lam P``."""
        return max(self.gram_banded.shape[0], self.penalty.banded.shape[0]) - 1

    def rhs(self, y):
        y = _check_y(y, self.n)
        return self.basis.values.T @ y / self.n

    def structurally_singular(self):
        # at lam = 0 the system is singular when some column of B carries no data
        return self.n < self.size or bool(np.any(np.diag(self.gram) == 0.0))


def build_system(basis, penalty):
    vals = basis.values
    n, p = vals.shape
    if penalty.size != p:
        raise ShapeError(f"penalty has size {penalty.size}, basis has {p} columns")
    gram_banded = _kernels.banded_gram(basis.first, basis.compact, p) / n
    gram = vals.T @ vals / n
    return PenalizedSystem(basis, gram, gram_banded, penalty, n, _r_factor(vals, n))


def _r_factor(vals, n):
    # B = Q R; H depends on B only through R, so the trace can be taken on R
    return np.linalg.qr(vals, mode="r") / np.sqrt(n)


def _traces(system, lams):
    """``tr(H)`` from orthogonal factorizations of ``[R; sqrt(lam) D]``.

    Unlike ``tr((G + lam P)^-1 G)`` from a Cholesky factor, this stays
    accurate when ``lam P`` swamps ``G`` or ``G`` is nearly singular.
    """
    r = system.r_factor
    p = r.shape[1]
    pen = system.penalty
    d = np.sqrt(pen.scale) * np.diff(np.eye(p), n=pen.m, axis=0)
    stack = np.empty((lams.shape[0], r.shape[0] + d.shape[0], p))
    stack[:, : r.shape[0]] = r
    stack[:, r.shape[0] :] = np.sqrt(lams)[:, None, None] * d
    q = np.linalg.qr(stack, mode="reduced")[0]
    return np.einsum("kij,kij->k", q[:, : r.shape[0]], q[:, : r.shape[0]])


@dataclass(frozen=True, eq=False)
class SolveResult:
    alpha_hat: np.ndarray
    hat_trace: float
    rss: float
    lam: float
    fitted: np.ndarray = field(repr=False)
    logdet: float = field(default=np.nan, repr=False)
    ridged: bool = False


def _check_y(y, n):
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != n:
        raise ShapeError(f"y has {y.shape[0]} entries, design has {n} rows")
    return y


def _check_lam(lam):
    lam = float(lam)
    if not lam >= 0.0 or not np.isfinite(lam):
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")
    return lam


def _singular(system, lam):
    return SingularSystemError(
        f"G_n + lambda*P is singular (n={system.n}, K+q={system.size}, "
        f"m={system.penalty.m}, lambda={lam:g})"
    )


def _finish(system, y, lam, alpha, trace, logdet, ridged):
    if not np.all(np.isfinite(alpha)):
        raise _singular(system, lam)
    fitted = system.basis.values @ alpha
    resid = y - fitted
    if ridged:
        logger.warning("ridge %.0e added to factorize system at lambda=%g", RIDGE, lam)
    return SolveResult(alpha, float(trace), float(resid @ resid), lam, fitted, float(logdet), ridged)


def solve(system, y, lam):
    """Dense Cholesky solve; reference implementation."""
    y = _check_y(y, system.n)
    lam = _check_lam(lam)
    if lam == 0.0 and system.structurally_singular():
        raise _singular(system, lam)
    a = system.gram + lam * system.penalty.dense
    ridged = False
    try:
        cf = cho_factor(a, lower=True)
    except LinAlgError:
        try:
            cf = cho_factor(a + RIDGE * np.eye(a.shape[0]), lower=True)
            ridged = True
        except LinAlgError:
            raise _singular(system, lam) from None
    alpha = cho_solve(cf, system.rhs(y))
    trace = np.trace(cho_solve(cf, system.gram))
    logdet = 2.0 * np.log(np.diag(cf[0])).sum()
    return _finish(system, y, lam, alpha, trace, logdet, ridged)


@dataclass(frozen=True, eq=False)
class GridSolution:
    """Solutions of one system over a grid of smoothing parameters."""

    lams: np.ndarray
    alphas: np.ndarray = field(repr=False)
    traces: np.ndarray
    rss: np.ndarray
    logdets: np.ndarray = field(repr=False)
    ridged: np.ndarray = field(repr=False)

    @property
    def valid(self):
        return np.isfinite(self.traces) & np.all(np.isfinite(self.alphas), axis=1)

    def result(self, i):
        return SolveResult(
            self.alphas[i],
            float(self.traces[i]),
            float(self.rss[i]),
            float(self.lams[i]),
            None,
            float(self.logdets[i]),
            bool(self.ridged[i]),
        )


def solve_grid(system, y, lams):
    """Banded solves for every value in `lams`; failures come back as NaN."""
    y = _check_y(y, system.n)
    lams = np.asarray(lams, dtype=np.float64).ravel()
    if np.any(~(lams >= 0.0)):
        raise ValueError("lambda values must be >= 0")
    alphas, logdets, ridged = _kernels.grid_solve(
        system.gram_banded, system.penalty.banded, system.rhs(y), lams, RIDGE
    )
    traces = np.where(np.isfinite(logdets), _traces(system, lams), np.nan)
    if system.structurally_singular():
        bad = lams == 0.0
        alphas[bad] = np.nan
        traces[bad] = np.nan
    resid = y[:, None] - system.basis.values @ alphas.T
    rss = np.einsum("ij,ij->j", resid, resid)
    return GridSolution(lams, alphas, traces, rss, logdets, ridged)


def solve_banded(system, y, lam):
    """Same contract as :func:`solve`, using the banded factorization."""
    y = _check_y(y, system.n)
    lam = _check_lam(lam)
    if lam == 0.0 and system.structurally_singular():
        raise _singular(system, lam)
    alphas, logdets, ridged = _kernels.grid_solve(
        system.gram_banded, system.penalty.banded, system.rhs(y), np.array([lam]), RIDGE
    )
    if not np.isfinite(logdets[0]):
        raise _singular(system, lam)
    trace = _traces(system, np.array([lam]))[0]
    return _finish(system, y, lam, alphas[0], trace, logdets[0], bool(ridged[0]))


def objective(system, y, alpha, lam):
    """``(1/n) ||y - B a||^2 + lam a' P a``."""
    y = _check_y(y, system.n)
    resid = y - system.basis.values @ alpha
    return float(resid @ resid) / system.n + lam * system.penalty.quad(alpha)
