"""Expansive matrices, canonical ellipsoids and the step quasi-norm.

An expansive matrix ``A`` (all eigenvalue moduli > 1) generates a family of
dilated balls ``B_k = A^k Delta`` where ``Delta`` is an ellipsoid of unit
volume chosen so that ``Delta ⊂ r·Delta ⊂ A·Delta`` for some ``r > 1``.
The step quasi-norm takes the value ``b^j`` (``b = |det A|``) on the shell
``B_{j+1} \\ B_j`` and satisfies ``rho(A x) = b * rho(x)`` exactly at the
level of shell indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import LEVEL_INF, LEVEL_ZERO
from .errors import NotExpansive, Singular, TruncationTooSmall

_DIAGONALIZABLE_COND_MAX = 1e8
_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class Dilation:
    """Validated expansive matrix with spectral metadata."""

    n: int
    entries: np.ndarray
    b: float
    lambda_minus: float
    lambda_plus: float
    zeta_minus: float

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.entries)

    @property
    def adjoint(self) -> "Dilation":
        """Dilation for the transpose matrix (same spectrum, same b)."""
        return Dilation(
            n=self.n,
            entries=self.entries.T.copy(),
            b=self.b,
            lambda_minus=self.lambda_minus,
            lambda_plus=self.lambda_plus,
            zeta_minus=self.zeta_minus,
        )

    def is_diagonal_integer(self) -> bool:
        off = self.entries - np.diag(np.diag(self.entries))
        if np.any(off != 0.0):
            return False
        diag = np.diag(self.entries)
        return bool(np.all(diag == np.round(diag)) and np.all(diag >= 2))


def validate_dilation(matrix) -> Dilation:
    """Check expansiveness and compute (b, lambda_-, lambda_+, zeta_-)."""
    A = np.asarray(matrix, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotExpansive(f"matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotExpansive("matrix entries must be finite")
    n = A.shape[0]
    det = np.linalg.det(A)
    if det == 0.0:
        raise Singular("matrix is singular")
    eigvals, eigvecs = np.linalg.eig(A)
    moduli = np.abs(eigvals)
    if np.any(moduli <= 1.0):
        raise NotExpansive(
            f"eigenvalue moduli {sorted(moduli)} must all exceed 1"
        )
    b = abs(det)

    # Diagonalizable (well-conditioned eigenbasis): the extreme moduli are
    # admissible; otherwise pad them inward, keeping lambda_minus > 1.
    cond = np.linalg.cond(eigvecs)
    lam_lo = float(moduli.min())
    lam_hi = float(moduli.max())
    if cond < _DIAGONALIZABLE_COND_MAX:
        lam_minus, lam_plus = lam_lo, lam_hi
    else:
        lam_minus = 0.99 * lam_lo
        if lam_minus <= 1.0:
            lam_minus = 0.5 * (1.0 + lam_lo)
        lam_plus = 1.01 * lam_hi

    return Dilation(
        n=n,
        entries=A,
        b=float(b),
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        zeta_minus=math.log(lam_minus) / math.log(b),
    )


@dataclass(frozen=True)
class QuasiNormEngine:
    """Ellipsoid quadratic form and normalization defining B_k and rho."""

    dilation: Dilation
    P: np.ndarray
    c: float
    r_exp: float
    tau: int
    H_est: float
    level_cap: int
    _powers: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def quasi_triangle_bound(self) -> float:
        """Certified bound b^tau for the quasi-triangle constant H."""
        return self.dilation.b**self.tau

    def matrix_power(self, k: int) -> np.ndarray:
        """A^k with memoization (k may be negative)."""
        cached = self._powers.get(k)
        if cached is None:
            A = self.dilation.entries
            cached = np.linalg.matrix_power(A if k >= 0 else np.linalg.inv(A), abs(k))
            self._powers[k] = cached
        return cached

    def quad(self, X: np.ndarray) -> np.ndarray:
        """<P x, x> row-wise for an (m, n) batch."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.einsum("ij,jk,ik->i", X, self.P, X)

    def ball_extent(self, k: int) -> np.ndarray:
        """Per-axis half-widths of the bounding box of B_k."""
        Ak = self.matrix_power(-k)
        Pk = Ak.T @ self.P @ Ak
        return np.sqrt(self.c * np.diag(np.linalg.inv(Pk)))


def build_quasi_norm(d: Dilation, series_truncation: int = 200) -> QuasiNormEngine:
    """Construct the ellipsoid form P, its normalization and (r, tau, H).

    P is the truncated series sum_{j=0..J} (A^-j)^T (A^-j); the truncation
    must make the remaining tail smaller than 1e-12.
    """
    if series_truncation < 1:
        raise TruncationTooSmall("series_truncation must be >= 1")
    A = d.entries
    Ainv = np.linalg.inv(A)
    lam = d.lambda_minus

    # a-priori tail check: ||(A^-j)^T A^-j|| <= C^2 lam^-2j with C fitted
    # over the computed prefix.
    J = series_truncation
    M = np.eye(d.n)
    P = np.zeros((d.n, d.n))
    C_fit = 1.0
    for j in range(J + 1):
        P += M
        C_fit = max(C_fit, np.linalg.norm(M, 2) ** 0.5 * lam**j)
        M = Ainv.T @ M @ Ainv
    tail = C_fit**2 * lam ** (-2.0 * (J + 1)) / (1.0 - lam**-2.0)
    if not tail < _TAIL_TOL:
        raise TruncationTooSmall(
            f"series tail bound {tail:.3e} exceeds {_TAIL_TOL:.0e}; "
            f"increase series_truncation (J={J})"
        )

    # Normalize so the ellipsoid {x: <Px,x> < c} has unit volume.
    n = d.n
    omega_n = math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)
    c = (math.sqrt(np.linalg.det(P)) / omega_n) ** (2.0 / n)

    # Largest r with r*Delta inside A*Delta, via the generalized eigenvalue
    # problem for P_A = A^-T P A^-1 relative to P.
    P_A = Ainv.T @ P @ Ainv
    L = np.linalg.cholesky(P)
    Linv = np.linalg.inv(L)
    lam_max = float(np.linalg.eigvalsh(Linv @ P_A @ Linv.T).max())
    r_exp = 1.0 / math.sqrt(lam_max)
    if not r_exp > 1.0:
        raise TruncationTooSmall(
            f"expansion factor r={r_exp} not > 1; series too short"
        )

    tau = max(1, math.ceil(math.log(2.0) / math.log(r_exp)))
    while r_exp**tau < 2.0:
        tau += 1
    while tau > 1 and r_exp ** (tau - 1) >= 2.0:
        tau -= 1

    cap = int(1074 * math.log(2.0) / math.log(d.b))
    engine = QuasiNormEngine(
        dilation=d,
        P=P,
        c=c,
        r_exp=r_exp,
        tau=tau,
        H_est=1.0,
        level_cap=cap,
    )
    object.__setattr__(engine, "H_est", estimate_H(engine, 512, seed=0))
    return engine


def level_indices(engine: QuasiNormEngine, X) -> np.ndarray:
    """Shell index j (x in B_{j+1} \\ B_j) per row; sentinels for 0 / clamp."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    A = engine.dilation.entries
    return _kernels.quasi_levels(
        X, A, np.linalg.inv(A), engine.P, engine.c, engine.level_cap
    )


def rho(engine: QuasiNormEngine, x) -> float | np.ndarray:
    """Step quasi-norm: 0 at the origin, b^j on the shell B_{j+1} \\ B_j."""
    X = np.asarray(x, dtype=np.float64)
    scalar = X.ndim == 1
    lev = level_indices(engine, X)
    vals = _levels_to_values(engine.dilation.b, lev)
    return float(vals[0]) if scalar else vals


def _levels_to_values(b: float, lev: np.ndarray) -> np.ndarray:
    vals = np.empty(lev.shape, dtype=np.float64)
    zero = lev == LEVEL_ZERO
    inf = lev == LEVEL_INF
    ok = ~(zero | inf)
    with np.errstate(over="ignore"):
        vals[ok] = np.power(b, lev[ok].astype(np.float64))
    vals[zero] = 0.0
    vals[inf] = np.inf
    return vals


def ball_membership(engine: QuasiNormEngine, k: int, x) -> bool | np.ndarray:
    """True iff x lies in the open ball B_k = A^k Delta."""
    X = np.asarray(x, dtype=np.float64)
    scalar = X.ndim == 1
    Ak = engine.matrix_power(-k)
    q = engine.quad(np.atleast_2d(X) @ Ak.T)
    inside = q < engine.c
    return bool(inside[0]) if scalar else inside


def estimate_H(engine: QuasiNormEngine, sample_count: int, seed: int = 0) -> float:
    """Measured quasi-triangle constant max rho(x+y)/(rho(x)+rho(y)).

    A slice of the sample uses y = 0, which pins the estimate at >= 1; the
    certified bound b^tau is available as `engine.quasi_triangle_bound`.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    n = engine.dilation.n
    m = int(sample_count)
    scales = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), size=(m, 1)))
    X = rng.standard_normal((m, n)) * scales
    Y = rng.standard_normal((m, n)) * np.roll(scales, m // 3)
    Y[: max(1, m // 8)] = 0.0

    rx = rho(engine, X)
    ry = rho(engine, Y)
    rs = rho(engine, X + Y)
    denom = rx + ry
    good = denom > 0
    return float(np.max(rs[good] / denom[good]))
