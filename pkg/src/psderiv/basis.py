"""Knot vectors, B-spline design matrices and derivative transforms.

Indexing convention: a :class:`KnotVector` stores the expanded knot sequence
once, with ``q`` exterior knots on each side of ``[0, 1]``. The order-``k``
basis (``k <= q``) uses the central slice that keeps ``k - 1`` exterior knots
per side; it has ``K + k`` functions, and function ``j`` is supported on
``[t[j], t[j + k]]`` of that slice. Every order shares the same array, so the
derivative recursion and the design matrices cannot drift apart.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    DegenerateMeshError,
    DomainError,
    EmptyDesignError,
    InvalidKnotsError,
    UnsupportedDerivativeOrderError,
)

_DOMAIN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Expanded knot sequence over ``[0, 1]``.

    Attributes
    ----------
    full : ndarray, shape (K + 2 + 2q,)
        ``q`` left exterior knots, ``0``, the ``K`` interior knots, ``1`` and
        ``q`` right exterior knots.
    q : int
        Spline order the vector was expanded for.
    """

    full: np.ndarray
    q: int

    def __post_init__(self):
        self.full.setflags(write=False)

    @property
    def K(self):
        return self.full.shape[0] - 2 - 2 * self.q

    @property
    def breakpoints(self):
        """``t_0 = 0, t_1, ..., t_K, t_{K+1} = 1``."""
        return self.full[self.q : self.q + self.K + 2]

    @property
    def interior(self):
        return self.full[self.q + 1 : self.q + 1 + self.K]

    @property
    def boundary_left(self):
        return self.full[: self.q]

    @property
    def boundary_right(self):
        return self.full[self.q + self.K + 2 :]

    @property
    def spacings(self):
        return np.diff(self.breakpoints)

    @property
    def h_max(self):
        return float(self.spacings.max())

    @property
    def h_min(self):
        return float(self.spacings.min())

    @property
    def mesh_ratio(self):
        return self.h_max / self.h_min

    @property
    def is_uniform(self):
        s = self.spacings
        return bool(np.allclose(s, s[0], rtol=1e-12, atol=0.0))

    def dim(self, k=None):
        """Number of order-`k` basis functions, ``K + k``."""
        return self.K + (self.q if k is None else k)

    def for_order(self, k):
        """Knot slice defining the order-`k` basis."""
        if not 1 <= k <= self.q:
            raise UnsupportedDerivativeOrderError(
                f"order {k} not available from knots expanded for q={self.q}"
            )
        cut = self.q - k + 1
        return self.full[cut : self.full.shape[0] - cut]


def make_knots(K, q, scheme="uniform", locations=None):
    """Build an expanded knot vector.

    Parameters
    ----------
    K : int
        Number of interior knots. Ignored (but checked) when `locations` is
        given.
    q : int
        Spline order, at least 2 (1 gives step functions and is accepted for
        completeness).
    scheme : {"uniform", "custom"}
    locations : array_like, optional
        Interior knot locations for the custom scheme, strictly increasing
        inside ``(0, 1)``.

    Exterior knots continue the spacing of the adjacent boundary interval.
    """
    q = int(q)
    if q < 1:
        raise InvalidKnotsError(f"spline order must be >= 1, got {q}")
    if scheme == "uniform":
        if K is None or int(K) < 1:
            raise DegenerateMeshError(f"need at least one interior knot, got K={K}")
        K = int(K)
        interior = np.arange(1, K + 1) / (K + 1)
    elif scheme == "custom":
        if locations is None:
            raise InvalidKnotsError("custom scheme needs knot locations")
        interior = np.asarray(locations, dtype=np.float64).ravel()
        if interior.size == 0:
            raise DegenerateMeshError("need at least one interior knot")
        if K is not None and int(K) != interior.size:
            raise InvalidKnotsError(f"K={K} but {interior.size} locations given")
        if not np.all(np.isfinite(interior)):
            raise InvalidKnotsError("knot locations must be finite")
        if interior[0] <= 0.0 or interior[-1] >= 1.0:
            raise InvalidKnotsError("interior knots must lie strictly inside (0, 1)")
        if np.any(np.diff(interior) <= 0.0):
            raise InvalidKnotsError("interior knots must be strictly increasing")
    else:
        raise InvalidKnotsError(f"unknown knot scheme {scheme!r}")

    bp = np.concatenate(([0.0], interior, [1.0]))
    h_left = bp[1] - bp[0]
    h_right = bp[-1] - bp[-2]
    left = -h_left * np.arange(q, 0, -1)
    right = 1.0 + h_right * np.arange(1, q + 1)
    return KnotVector(np.concatenate((left, bp, right)), q)


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    """Design matrix of order-`order` B-splines at the design points.

    ``first``/``compact`` hold the same values in local-support form:
    ``values[i, first[i] + a] == compact[i, a]``.
    """

    values: np.ndarray
    order: int
    knots: KnotVector
    first: np.ndarray = field(repr=False)
    compact: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.values.shape


def _check_domain(x):
    x = np.asarray(x, dtype=np.float64)
    bad = ~((x >= -_DOMAIN_TOL) & (x <= 1.0 + _DOMAIN_TOL))
    if np.any(bad):
        where = np.flatnonzero(bad.ravel())[0]
        raise DomainError(f"x={x.ravel()[where]!r} outside [0, 1]")
    return np.clip(x, 0.0, 1.0)


def _rows(knots, q, xs):
    t = knots.for_order(q)
    return _kernels.basis_rows(t, q, xs)


def eval_basis(knots, q, x):
    """Values of the ``K + q`` order-`q` B-splines at a single point."""
    x = _check_domain(x)
    if x.ndim != 0:
        raise DomainError("eval_basis takes a scalar; use design_matrix")
    first, vals = _rows(knots, q, x.reshape(1))
    out = np.zeros(knots.dim(q))
    out[first[0] : first[0] + q] = vals[0]
    return out


def design_matrix(knots, q, xs):
    """Evaluate the order-`q` basis at every design point."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    if xs.size == 0:
        raise EmptyDesignError("no design points")
    xs = _check_domain(xs)
    first, vals = _rows(knots, q, xs)
    n = xs.shape[0]
    dense = np.zeros((n, knots.dim(q)))
    cols = first[:, None] + np.arange(q)[None, :]
    dense[np.arange(n)[:, None], cols] = vals
    return BasisMatrix(dense, q, knots, first, vals)


@dataclass(frozen=True, eq=False)
class DerivativeTransform:
    """Linear map from order-q coefficients to r-th derivative coefficients.

    `matrix` has shape ``(K + q, K + q - r)`` and is the product of the
    bidiagonal factors ``M_1 @ M_2 @ ... @ M_r``; derivative coefficients are
    ``matrix.T @ alpha``.
    """

    r: int
    q: int
    matrix: np.ndarray
    factors: tuple = field(default=(), repr=False)

    def apply(self, alpha):
        return self.matrix.T @ np.asarray(alpha, dtype=np.float64)


def _check_r(q, r):
    if not 0 <= r <= q - 2:
        raise UnsupportedDerivativeOrderError(
            f"derivative order r={r} unsupported for q={q}; need 0 <= r <= q-2"
        )


def _step_weights(knots, q, l):
    # weights (q-l) / span for the l-th differentiation step, acting on the
    # order-(q-l+1) coefficients and producing order-(q-l) ones
    k = q - l + 1
    t = knots.for_order(k)
    nb = knots.dim(k)
    span = t[k : nb - 1 + k] - t[1:nb]
    return (k - 1) / span


def derivative_transform(knots, q, r):
    """Build ``D(r)`` as a product of lower-bidiagonal factors."""
    _check_r(q, r)
    nb = knots.dim(q)
    mat = np.eye(nb)
    factors = []
    for l in range(1, r + 1):
        w = _step_weights(knots, q, l)
        rows = w.shape[0] + 1
        m_l = np.zeros((rows, rows - 1))
        j = np.arange(rows - 1)
        m_l[j, j] = -w
        m_l[j + 1, j] = w
        factors.append(m_l)
        mat = mat @ m_l
    return DerivativeTransform(r, q, mat, tuple(factors))


def derivative_coefficients(knots, q, alpha, r):
    """Apply the coefficient-difference recursion `r` times."""
    _check_r(q, r)
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape[0] != knots.dim(q):
        raise ValueError(f"expected {knots.dim(q)} coefficients, got {a.shape[0]}")
    for l in range(1, r + 1):
        w = _step_weights(knots, q, l)
        a = w.reshape((-1,) + (1,) * (a.ndim - 1)) * np.diff(a, axis=0)
    return a
