"""Hot numeric kernels.

Each kernel has a numba implementation and a pure numpy/scipy implementation
with the same signature. The numba path is used when numba imports cleanly and
the environment variable ``PSDERIV_NO_NUMBA`` is unset or ``0``. Set it to ``1``
to force the fallback (useful for debugging and for the benchmark).
"""

import os

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded


def _numba_requested():
    flag = os.environ.get("PSDERIV_NO_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by PSDERIV_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# Cox-de Boor evaluation
# ---------------------------------------------------------------------------


def _spans(t, k, x):
    # t holds k-1 exterior knots per side, so t[k-1] == 0 and t[-k] == 1
    lo = k - 1
    hi = t.shape[0] - k  # index of the right domain endpoint
    idx = np.searchsorted(t[lo:hi + 1], x, side="right") - 1 + lo
    # closed last interval so x == 1 stays inside the domain
    return np.clip(idx, lo, hi - 1)


def _basis_rows_numpy(t, k, x):
    x = np.asarray(x, dtype=np.float64)
    span = _spans(t, k, x)
    n = x.shape[0]
    vals = np.zeros((n, k))
    vals[:, 0] = 1.0
    left = np.empty((n, k))
    right = np.empty((n, k))
    for j in range(1, k):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    return span - (k - 1), vals


def _banded_gram_numpy(first, vals, nb):
    n, k = vals.shape
    ab = np.zeros((k, nb))
    for d in range(k):
        prod = vals[:, d:] * vals[:, : k - d]
        cols = first[:, None] + np.arange(k - d)[None, :]
        np.add.at(ab[d], cols.ravel(), prod.ravel())
    return ab


def _factor(ab, ridge):
    try:
        return cholesky_banded(ab, lower=True), False
    except LinAlgError:
        pass
    ab = ab.copy()
    ab[0] += ridge
    return cholesky_banded(ab, lower=True), True


def _grid_solve_numpy(gram, penalty, rhs, lams, ridge):
    nb = gram.shape[1]
    bw = max(gram.shape[0], penalty.shape[0])
    g = np.zeros((bw, nb))
    p = np.zeros((bw, nb))
    g[: gram.shape[0]] = gram
    p[: penalty.shape[0]] = penalty
    nl = lams.shape[0]
    alphas = np.empty((nl, nb))
    logdets = np.empty(nl)
    flags = np.zeros(nl, dtype=np.bool_)
    for i in range(nl):
        try:
            cb, flags[i] = _factor(g + lams[i] * p, ridge)
        except LinAlgError:
            alphas[i] = np.nan
            logdets[i] = np.nan
            continue
        alphas[i] = cho_solve_banded((cb, True), rhs)
        logdets[i] = 2.0 * np.log(cb[0]).sum()
    return alphas, logdets, flags


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _basis_rows_numba(t, k, x):
        n = x.shape[0]
        lo = k - 1
        hi = t.shape[0] - k
        first = np.empty(n, dtype=np.int64)
        vals = np.zeros((n, k))
        left = np.empty(k)
        right = np.empty(k)
        for i in range(n):
            xi = x[i]
            # binary search over the domain breakpoints t[lo..hi]
            a = lo
            b = hi
            while b - a > 1:
                mid = (a + b) // 2
                if t[mid] <= xi:
                    a = mid
                else:
                    b = mid
            span = a
            vals[i, 0] = 1.0
            for j in range(1, k):
                left[j] = xi - t[span + 1 - j]
                right[j] = t[span + j] - xi
                saved = 0.0
                for r in range(j):
                    temp = vals[i, r] / (right[r + 1] + left[j - r])
                    vals[i, r] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                vals[i, j] = saved
            first[i] = span - (k - 1)
        return first, vals

    @njit(cache=True)
    def _banded_gram_numba(first, vals, nb):
        n, k = vals.shape
        ab = np.zeros((k, nb))
        for i in range(n):
            f = first[i]
            for a in range(k):
                va = vals[i, a]
                for d in range(k - a):
                    ab[d, f + a] += va * vals[i, a + d]
        return ab

    @njit(cache=True)
    def _chol_banded_inplace(ab):
        # lower band storage: ab[d, j] = A[j + d, j]
        bw, nb = ab.shape
        for j in range(nb):
            s = ab[0, j]
            for kk in range(max(0, j - bw + 1), j):
                lv = ab[j - kk, kk]
                s -= lv * lv
            if not s > 0.0:
                return False
            ljj = np.sqrt(s)
            ab[0, j] = ljj
            for i in range(j + 1, min(nb, j + bw)):
                s = ab[i - j, j]
                for kk in range(max(0, i - bw + 1), j):
                    s -= ab[i - kk, kk] * ab[j - kk, kk]
                ab[i - j, j] = s / ljj
        return True

    @njit(cache=True)
    def _chol_solve_banded(cb, b):
        bw, nb = cb.shape
        y = b.copy()
        for i in range(nb):
            s = y[i]
            for kk in range(max(0, i - bw + 1), i):
                s -= cb[i - kk, kk] * y[kk]
            y[i] = s / cb[0, i]
        for i in range(nb - 1, -1, -1):
            s = y[i]
            for kk in range(i + 1, min(nb, i + bw)):
                s -= cb[kk - i, i] * y[kk]
            y[i] = s / cb[0, i]
        return y

    @njit(cache=True)
    def _grid_solve_numba(gram, penalty, rhs, lams, ridge):
        nb = gram.shape[1]
        bw = max(gram.shape[0], penalty.shape[0])
        nl = lams.shape[0]
        alphas = np.empty((nl, nb))
        logdets = np.empty(nl)
        flags = np.zeros(nl, dtype=np.bool_)
        for li in range(nl):
            lam = lams[li]
            ab = np.zeros((bw, nb))
            for d in range(gram.shape[0]):
                for j in range(nb):
                    ab[d, j] += gram[d, j]
            for d in range(penalty.shape[0]):
                for j in range(nb):
                    ab[d, j] += lam * penalty[d, j]
            work = ab.copy()
            ok = _chol_banded_inplace(work)
            if not ok:
                work = ab.copy()
                for j in range(nb):
                    work[0, j] += ridge
                ok = _chol_banded_inplace(work)
                flags[li] = True
            if not ok:
                for j in range(nb):
                    alphas[li, j] = np.nan
                logdets[li] = np.nan
                continue
            alphas[li] = _chol_solve_banded(work, rhs)
            ld = 0.0
            for j in range(nb):
                ld += np.log(work[0, j])
            logdets[li] = 2.0 * ld
        return alphas, logdets, flags


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------


def basis_rows(t, k, x):
    """Nonzero order-`k` B-spline values at each point.

    Returns ``(first, vals)`` where ``vals[i, a]`` is the value of basis
    function ``first[i] + a`` at ``x[i]``.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if HAVE_NUMBA:
        return _basis_rows_numba(t, int(k), x)
    return _basis_rows_numpy(t, int(k), x)


def banded_gram(first, vals, nb):
    """Lower band storage of ``B.T @ B`` from compact basis rows."""
    first = np.ascontiguousarray(first, dtype=np.int64)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if HAVE_NUMBA:
        return _banded_gram_numba(first, vals, int(nb))
    return _banded_gram_numpy(first, vals, int(nb))


def grid_solve(gram, penalty, rhs, lams, ridge=1e-12):
    """Solve ``(G + lam P) a = rhs`` for every ``lam``.

    `gram` and `penalty` are symmetric matrices in lower band storage (they
    may have different bandwidths). Returns ``(alphas, logdets, ridged)``:
    coefficient rows, ``log det(G + lam P)`` and a flag per grid point
    marking a ridge retry. Rows that could not be factorized are NaN.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    penalty = np.ascontiguousarray(penalty, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    lams = np.ascontiguousarray(np.atleast_1d(lams), dtype=np.float64)
    if HAVE_NUMBA:
        return _grid_solve_numba(gram, penalty, rhs, lams, float(ridge))
    return _grid_solve_numpy(gram, penalty, rhs, lams, float(ridge))
