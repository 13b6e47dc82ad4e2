"""Anisotropic maximal operators over dilated balls.

Ball averages are spectral convolutions with rasterized indicator kernels;
the translation suprema are morphological maxima with the rasterized ball
as structuring element (see `_kernels` for the hot loops).  The sup over
all scales is truncated to an explicit ScaleRange.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._kernels import morph_max
from .dilation import Dilation, QuasiNormEngine, level_indices
from .errors import GridMismatch, ScaleUnresolvable
from .lattice import (
    FilterSpec,
    Grid,
    SampledField,
    dilate_filter,
    filter_profile,
    gaussian_spec,
    sample_filter,
    spatial_level_field,
)
from .lorentz import LorentzParams, lorentz_norm_values


@dataclass(frozen=True)
class ScaleRange:
    """Closed integer scale window [k_min, k_max] truncating sup over k."""

    k_min: int
    k_max: int

    def __post_init__(self):
        if self.k_min > self.k_max:
            raise ValueError("k_min must not exceed k_max")

    def __iter__(self):
        return iter(range(self.k_min, self.k_max + 1))


def ball_offsets(engine: QuasiNormEngine, grid: Grid, k: int) -> np.ndarray:
    """Signed cell offsets whose centers lie in B_k; origin cell if none.

    Raises ScaleUnresolvable when the ball does not fit in the period.
    """
    if not np.all(engine.ball_extent(k) < grid.L / 2.0):
        raise ScaleUnresolvable(
            f"ball B_{k} extends past the half-period {grid.L / 2}"
        )
    Ak = engine.matrix_power(-k)
    pts = grid.coordinates() @ Ak.T
    inside = engine.quad(pts) < engine.c
    if not np.any(inside):
        return np.zeros((1, grid.n), dtype=np.int64)
    idx = grid.signed_indices()
    mesh = np.meshgrid(*([idx] * grid.n), indexing="ij")
    cells = np.stack([m.ravel() for m in mesh], axis=-1)
    return np.ascontiguousarray(cells[inside], dtype=np.int64)


def _indicator_kernel(grid: Grid, offsets: np.ndarray, weight: float) -> np.ndarray:
    ker = np.zeros(grid.shape, dtype=np.float64)
    ker[tuple(offsets.T % grid.N)] = weight
    return ker


def ball_average(f_abs: np.ndarray, grid: Grid, offsets: np.ndarray) -> np.ndarray:
    """Mean of |f| over the rasterized ball around each sample (spectral)."""
    ker = _indicator_kernel(grid, offsets, 1.0 / offsets.shape[0])
    out = np.fft.ifftn(np.fft.fftn(f_abs) * np.fft.fftn(ker)).real
    np.maximum(out, 0.0, out=out)
    return out


def hl_maximal(
    f: SampledField, engine: QuasiNormEngine, scales: ScaleRange
) -> SampledField:
    """Hardy-Littlewood maximal function over dilated balls in the range."""
    grid = f.grid
    absf = np.abs(f.data)
    out = np.zeros(grid.shape, dtype=np.float64)
    for k in scales:
        off = ball_offsets(engine, grid, k)
        avg = ball_average(absf, grid, off)
        np.maximum(out, morph_max(avg, off), out=out)
    return SampledField(grid=grid, data=out)


def nontangential_maximal(
    f: SampledField,
    phi: SampledField,
    d: Dilation,
    scales: ScaleRange,
    engine: QuasiNormEngine,
) -> SampledField:
    """sup over k and y in x + B_k of |f * phi_k(y)|."""
    if f.grid != phi.grid:
        raise GridMismatch("field and filter grids differ")
    grid = f.grid
    F = np.fft.fftn(f.data)
    out = np.zeros(grid.shape, dtype=np.float64)
    for k in scales:
        phik = dilate_filter(phi, k - phi.level, d)
        u = np.abs(np.fft.ifftn(F * np.fft.fftn(phik.data)) * grid.h**grid.n)
        off = ball_offsets(engine, grid, k)
        np.maximum(out, morph_max(u, off), out=out)
    return SampledField(grid=grid, data=out)


# ---------------------------------------------------------------------------
# Grand maximal approximation from a finite normalized dictionary.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterDictionary:
    """Finite stand-in for the unit ball of the S_N normalization.

    Each filter is divided by its estimated S_N norm, so the pointwise max
    of non-tangential maximal functions over the dictionary is a certified
    lower bound for the grand maximal function.
    """

    filters: tuple
    s_norm_estimates: tuple
    N_order: int


def multi_indices(n: int, max_total: int):
    """All multi-indices alpha with |alpha| <= max_total."""
    if n == 1:
        return [(a,) for a in range(max_total + 1)]
    out = []
    for a in range(max_total + 1):
        for rest in multi_indices(n - 1, max_total - a):
            out.append((a,) + rest)
    return out


def estimate_schwartz_norm(
    spec: FilterSpec,
    engine: QuasiNormEngine,
    grid: Grid,
    N_order: int,
    refine: int = 2,
) -> float:
    """sup_{|alpha|<=N} sup_x |d^alpha phi(x)| max(1, rho(x)^N), sampled.

    Derivatives are spectral (exact for the analytic profiles); the sup is
    taken over a refined grid, so the value is a dense lower estimate.
    """
    fine = Grid(n=grid.n, N=min(grid.N * refine, 512), L=grid.L)
    xi = fine.frequencies()
    prof = filter_profile(spec, xi)
    lev = spatial_level_field(engine, fine).reshape(-1)
    b = engine.dilation.b
    weight = np.ones(lev.shape, dtype=np.float64)
    pos = (lev >= 0) & (lev < 2**60)
    weight[pos] = b ** (lev[pos].astype(np.float64) * N_order)
    hn = fine.h**fine.n
    best = 0.0
    for alpha in multi_indices(grid.n, N_order):
        mult = np.ones(xi.shape[0], dtype=np.complex128)
        for axis, a in enumerate(alpha):
            if a:
                mult *= (1j * xi[:, axis]) ** a
        deriv = np.fft.ifftn((prof * mult).reshape(fine.shape)) / hn
        best = max(best, float(np.max(np.abs(deriv).reshape(-1) * weight)))
    return best


def build_filter_dictionary(
    engine: QuasiNormEngine,
    grid: Grid,
    N_order: int,
    size: int = 8,
    base_sigma: float | None = None,
) -> FilterDictionary:
    """Gaussian family at several anisotropic eccentricities, normalized."""
    if size < 1:
        raise ValueError("size must be >= 1")
    if base_sigma is None:
        base_sigma = grid.L / 32.0
    shapes = []
    aspects = [None, (1.0, 2.0), (2.0, 1.0), (1.0, 1.5)]
    angles = [0.0, math.pi / 4.0, math.pi / 3.0, math.pi / 6.0]
    widths = [1.0, 1.5, 0.75, 1.25]
    i = 0
    while len(shapes) < size:
        aspect = aspects[i % len(aspects)] if engine.dilation.n == 2 else None
        angle = angles[(i // len(aspects)) % len(angles)] if aspect else 0.0
        width = widths[i % len(widths)]
        shapes.append(
            gaussian_spec(
                sigma=base_sigma * width,
                order=0,
                aspect=aspect,
                angle=angle,
            )
        )
        i += 1
    filters = []
    estimates = []
    for spec in shapes:
        est = estimate_schwartz_norm(spec, engine, grid, N_order)
        raw = sample_filter(spec, grid)
        filters.append(
            SampledField(
                grid=grid,
                data=raw.data / est,
                spec=spec,
                meta={"s_norm_estimate": est},
            )
        )
        estimates.append(est)
    return FilterDictionary(
        filters=tuple(filters),
        s_norm_estimates=tuple(estimates),
        N_order=N_order,
    )


def grand_maximal_approx(
    f: SampledField,
    dictionary: FilterDictionary,
    d: Dilation,
    scales: ScaleRange,
    engine: QuasiNormEngine,
) -> SampledField:
    """Pointwise max of non-tangential maxima over the dictionary."""
    if not dictionary.filters:
        raise ValueError("dictionary must be nonempty")
    out = np.zeros(f.grid.shape, dtype=np.float64)
    for phi, est in zip(dictionary.filters, dictionary.s_norm_estimates):
        nt = nontangential_maximal(f, phi, d, scales, engine)
        np.maximum(out, nt.data.real, out=out)
    return SampledField(grid=f.grid, data=out)


# ---------------------------------------------------------------------------
# Fefferman-Stein vector-valued ratio.
# ---------------------------------------------------------------------------


class FsRatio(NamedTuple):
    value: float
    degenerate: bool


def _ell_r(stack: np.ndarray, r: float) -> np.ndarray:
    if math.isinf(r):
        return np.max(stack, axis=0)
    return np.sum(stack**r, axis=0) ** (1.0 / r)


def fs_ratio(
    fields: list,
    r: float,
    lp: LorentzParams,
    engine: QuasiNormEngine,
    scales: ScaleRange,
) -> FsRatio:
    """Vector-valued maximal ratio ||l^r of M_HL f_j|| / ||l^r of f_j||."""
    if not fields:
        raise ValueError("need at least one field")
    grid = fields[0].grid
    for g in fields[1:]:
        if g.grid != grid:
            raise GridMismatch("fields must share one grid")
    if not (r > 1):
        raise ValueError("r must lie in (1, inf]")
    maxed = np.stack(
        [hl_maximal(g, engine, scales).data.real for g in fields], axis=0
    )
    plain = np.stack([np.abs(g.data) for g in fields], axis=0)
    cell = grid.h**grid.n
    denom = lorentz_norm_values(_ell_r(plain, r), cell, lp)
    if denom == 0.0:
        return FsRatio(value=0.0, degenerate=True)
    numer = lorentz_norm_values(_ell_r(maxed, r), cell, lp)
    return FsRatio(value=numer / denom, degenerate=False)


def dyadic_maximal(f: SampledField, family, levels: ScaleRange | None = None):
    """Dyadic maximal function over a nested cube family (see `cubes`)."""
    from .cubes import dyadic_maximal as _impl

    return _impl(f, family, levels)
