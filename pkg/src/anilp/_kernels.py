"""Hot numeric kernels with numba and pure-numpy implementations.

The backend is chosen once at import time: numba when it is importable and
the environment variable ``ANILP_NO_NUMBA`` is unset (or "0"), pure numpy
otherwise.  Both implementations are importable directly so the benchmark
suite can time them against each other.

Sentinel levels: ``LEVEL_ZERO`` marks the zero vector (quasi-norm 0) and
``LEVEL_INF`` marks points pushed past the float-representable clamp.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("ANILP_NO_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)

LEVEL_ZERO = np.int64(-(2**62))
LEVEL_INF = np.int64(2**62)


# ---------------------------------------------------------------------------
# Periodic morphological maximum: out(x) = max_{o in offsets} a(x + o).
# ---------------------------------------------------------------------------


def morph_max_numpy(a: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Pure-numpy morphological max via rolled copies."""
    out = np.full_like(a, -np.inf)
    for off in offsets:
        np.maximum(out, np.roll(a, shift=tuple(-off)), out=out)
    return out


if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _morph_max_1d(a, off, out):  # pragma: no cover - exercised via wrapper
        n0 = a.shape[0]
        for i in range(n0):
            m = -np.inf
            for t in range(off.shape[0]):
                v = a[(i + off[t, 0]) % n0]
                if v > m:
                    m = v
            out[i] = m

    @numba.njit(cache=True, nogil=True)
    def _morph_max_2d(a, off, out):  # pragma: no cover
        n0, n1 = a.shape
        for i in range(n0):
            for j in range(n1):
                m = -np.inf
                for t in range(off.shape[0]):
                    v = a[(i + off[t, 0]) % n0, (j + off[t, 1]) % n1]
                    if v > m:
                        m = v
                out[i, j] = m

    @numba.njit(cache=True, nogil=True)
    def _morph_max_3d(a, off, out):  # pragma: no cover
        n0, n1, n2 = a.shape
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    m = -np.inf
                    for t in range(off.shape[0]):
                        v = a[
                            (i + off[t, 0]) % n0,
                            (j + off[t, 1]) % n1,
                            (k + off[t, 2]) % n2,
                        ]
                        if v > m:
                            m = v
                    out[i, j, k] = m

    def morph_max_numba(a: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        a = np.ascontiguousarray(a, dtype=np.float64)
        off = np.ascontiguousarray(offsets, dtype=np.int64)
        out = np.empty_like(a)
        if a.ndim == 1:
            _morph_max_1d(a, off, out)
        elif a.ndim == 2:
            _morph_max_2d(a, off, out)
        elif a.ndim == 3:
            _morph_max_3d(a, off, out)
        else:
            raise ValueError(f"unsupported dimension {a.ndim}")
        return out


def morph_max(a: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Periodic grey dilation of `a` by an explicit offset list."""
    if a.ndim > 3:
        raise ValueError(f"unsupported dimension {a.ndim}")
    if USE_NUMBA:
        return morph_max_numba(a, offsets)
    return morph_max_numpy(np.asarray(a, dtype=np.float64), np.asarray(offsets))


# ---------------------------------------------------------------------------
# Quasi-norm level search: for each point x find the integer j such that
# <P A^{-j-1} x, A^{-j-1} x> < c <= <P A^{-j} x, A^{-j} x>, i.e. x lies in
# the open shell B_{j+1} \ B_j of the dilated-ball family.
# ---------------------------------------------------------------------------


def levels_numpy(
    X: np.ndarray,
    A: np.ndarray,
    Ainv: np.ndarray,
    P: np.ndarray,
    c: float,
    cap: int,
) -> np.ndarray:
    """Vectorized level sweep; masks shrink as points get bracketed."""
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    out = np.empty(m, dtype=np.int64)
    q0 = np.einsum("ij,jk,ik->i", X, P, X)
    zero = q0 == 0.0
    out[zero] = LEVEL_ZERO

    # k tracks the candidate "first k with x in B_k"; level is k - 1.
    # Upward pass: points not yet inside B_k.
    active = ~zero
    Y = X.copy()
    k = np.zeros(m, dtype=np.int64)
    up = active & (q0 >= c)
    steps = 0
    while np.any(up):
        Y[up] = Y[up] @ Ainv.T
        k[up] += 1
        q = np.einsum("ij,jk,ik->i", Y[up], P, Y[up])
        still = q >= c
        idx = np.flatnonzero(up)
        up[idx[~still]] = False
        steps += 1
        if steps > 2 * cap:
            out[up] = LEVEL_INF
            active &= ~up
            break

    # Downward pass: points that started inside B_0; push k down while the
    # membership persists one level lower.
    down = active & (q0 < c)
    steps = 0
    while np.any(down):
        Ynext = Y[down] @ A.T
        q = np.einsum("ij,jk,ik->i", Ynext, P, Ynext)
        still = q < c
        idx = np.flatnonzero(down)
        keep = idx[still]
        Y[keep] = Ynext[still]
        k[keep] -= 1
        down[idx[~still]] = False
        steps += 1
        if steps > 2 * cap:
            out[down] = LEVEL_ZERO
            active &= ~down
            break

    out[active] = k[active] - 1
    return out


if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _levels_nb(X, A, Ainv, P, c, cap, out):  # pragma: no cover
        m, n = X.shape
        y = np.empty(n)
        z = np.empty(n)
        for idx in range(m):
            q = 0.0
            for a in range(n):
                y[a] = X[idx, a]
            for a in range(n):
                acc = 0.0
                for b in range(n):
                    acc += P[a, b] * y[b]
                q += acc * y[a]
            if q == 0.0:
                out[idx] = LEVEL_ZERO
                continue
            k = 0
            if q >= c:
                # walk up: y <- Ainv y until inside
                while q >= c and k <= 2 * cap:
                    for a in range(n):
                        acc = 0.0
                        for b in range(n):
                            acc += Ainv[a, b] * y[b]
                        z[a] = acc
                    for a in range(n):
                        y[a] = z[a]
                    k += 1
                    q = 0.0
                    for a in range(n):
                        acc = 0.0
                        for b in range(n):
                            acc += P[a, b] * y[b]
                        q += acc * y[a]
                if q >= c:
                    out[idx] = LEVEL_INF
                    continue
            else:
                # walk down while membership persists one level lower
                while k >= -2 * cap:
                    for a in range(n):
                        acc = 0.0
                        for b in range(n):
                            acc += A[a, b] * y[b]
                        z[a] = acc
                    q = 0.0
                    for a in range(n):
                        acc = 0.0
                        for b in range(n):
                            acc += P[a, b] * z[b]
                        q += acc * z[a]
                    if q < c:
                        for a in range(n):
                            y[a] = z[a]
                        k -= 1
                    else:
                        break
                if k < -2 * cap:
                    out[idx] = LEVEL_ZERO
                    continue
            out[idx] = k - 1

    def levels_numba(X, A, Ainv, P, c, cap):
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.int64)
        _levels_nb(
            X,
            np.ascontiguousarray(A, dtype=np.float64),
            np.ascontiguousarray(Ainv, dtype=np.float64),
            np.ascontiguousarray(P, dtype=np.float64),
            float(c),
            int(cap),
            out,
        )
        return out


def quasi_levels(X, A, Ainv, P, c, cap):
    """Shell indices of the step quasi-norm for a batch of points."""
    if USE_NUMBA:
        return levels_numba(X, A, Ainv, P, c, cap)
    return levels_numpy(X, A, Ainv, P, c, cap)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
