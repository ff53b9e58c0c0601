"""Difference penalties ``P_m = D_m^T D_m``."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientCoefficientsError


def build_difference_matrix(size, m):
    """Dense ``(size - m, size)`` matrix of m-th order differences.

    Built by composing first differences: ``D_m = D_1 @ D_{m-1}`` where the
    left factor acts on ``size - m + 1`` entries.
    """
    size, m = int(size), int(m)
    if m < 1:
        raise InsufficientCoefficientsError(f"difference order must be >= 1, got {m}")
    if size <= m:
        raise InsufficientCoefficientsError(
            f"{size} coefficients cannot carry order-{m} differences"
        )
    d = np.eye(size)
    for j in range(1, m + 1):
        rows = size - j
        d1 = np.zeros((rows, rows + 1))
        i = np.arange(rows)
        d1[i, i] = -1.0
        d1[i, i + 1] = 1.0
        d = d1 @ d
    return d


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    """Symmetric banded penalty ``scale * D_m^T D_m``.

    `banded` is LAPACK-style lower storage: ``banded[d, j] = P[j + d, j]``.
    """

    m: int
    size: int
    banded: np.ndarray = field(repr=False)
    scale: float = 1.0

    @property
    def bandwidth(self):
        return 2 * self.m + 1

    @property
    def dense(self):
        out = np.zeros((self.size, self.size))
        for d in range(self.m + 1):
            idx = np.arange(self.size - d)
            out[idx + d, idx] = self.banded[d, : self.size - d]
            out[idx, idx + d] = self.banded[d, : self.size - d]
        return out

    def quad(self, alpha):
        """``alpha.T @ P @ alpha`` computed as ``scale * ||D_m alpha||^2``."""
        diff = np.diff(np.asarray(alpha, dtype=np.float64), n=self.m)
        return self.scale * float(diff @ diff)


def build_penalty(size, m, scale=1.0):
    d = build_difference_matrix(size, m)
    # D^T D has exact small-integer entries, so the product is exact
    full = scale * (d.T @ d)
    banded = np.zeros((m + 1, size))
    for k in range(m + 1):
        banded[k, : size - k] = np.diagonal(full, offset=-k)
    return PenaltyMatrix(int(m), int(size), banded, float(scale))


def penalty_scale(knots, m):
    """``h^(1 - 2m)`` with ``h`` the largest knot spacing."""
    return knots.h_max ** (1 - 2 * m)


def penalty_for_knots(knots, m, scaled=True):
    scale = penalty_scale(knots, m) if scaled else 1.0
    return build_penalty(knots.dim(), m, scale)
