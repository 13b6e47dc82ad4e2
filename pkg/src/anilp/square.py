"""Littlewood-Paley square functions: Lusin area, g, g*_lambda, S_k0.

Every operator is assembled per scale from |f * phi_k|^2 fields; the local
integrals over dilated balls (and the rho-decay weights of g*_lambda) are
spectral convolutions, so runtime is FFT-bound.  Scale sums run in
ascending k for deterministic output.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .cubes import min_moment_order
from .dilation import Dilation, QuasiNormEngine
from .errors import ScaleUnresolvable
from .lattice import (
    ALL_MOMENTS,
    FilterSpec,
    Grid,
    SampledField,
    dilate_filter,
    sample_filter,
    spatial_level_field,
)
from .maximal import ScaleRange, ball_offsets
from ._kernels import LEVEL_ZERO


@dataclass(frozen=True)
class SquareFunctionRequest:
    """Filter, scale window and the g*_lambda / S_k0 parameters."""

    filter: FilterSpec
    scales: ScaleRange
    lam: float | None = None
    k0: int = 0

    def __post_init__(self):
        if self.k0 < 0:
            raise ValueError("k0 must be >= 0")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")


def admissibility_warnings(req: SquareFunctionRequest, p: float, d: Dilation):
    """Moment-order and lambda-range advisories for the exponent in force."""
    notes = []
    if p <= 1 and req.filter.moment_order != ALL_MOMENTS:
        need = min_moment_order(p, d)
        if req.filter.moment_order < need:
            notes.append(
                f"filter moment order {req.filter.moment_order} below the "
                f"admissible bound {need} for p={p}"
            )
    if req.lam is not None and req.lam <= 2.0 / p:
        notes.append(f"lambda={req.lam} not above 2/p={2.0 / p}")
    for msg in notes:
        warnings.warn(msg, stacklevel=3)
    return notes


def _scale_pieces(f: SampledField, req: SquareFunctionRequest, d: Dilation):
    """|f * phi_k|^2 per scale, common to all four operators."""
    grid = f.grid
    F = np.fft.fftn(f.data)
    phi = sample_filter(req.filter, grid)
    hn = grid.h**grid.n
    for k in req.scales:
        phik = dilate_filter(phi, k - phi.level, d)
        u = np.abs(np.fft.ifftn(F * np.fft.fftn(phik.data)) * hn) ** 2
        yield k, u


def _ball_integral(u: np.ndarray, grid: Grid, offsets: np.ndarray) -> np.ndarray:
    """h^n sum of u over the rasterized ball around each sample."""
    ker = np.zeros(grid.shape, dtype=np.float64)
    ker[tuple(offsets.T % grid.N)] = 1.0
    out = np.fft.ifftn(np.fft.fftn(u) * np.fft.fftn(ker)).real * grid.h**grid.n
    np.maximum(out, 0.0, out=out)
    return out


def lusin_area_variant(
    f: SampledField,
    req: SquareFunctionRequest,
    engine: QuasiNormEngine,
) -> SampledField:
    """Enlarged-aperture area function S_k0 (S itself is k0 = 0)."""
    grid = f.grid
    b = engine.dilation.b
    k0 = req.k0
    acc = np.zeros(grid.shape, dtype=np.float64)
    for k, u in _scale_pieces(f, req, engine.dilation):
        off = ball_offsets(engine, grid, k + k0)
        acc += b ** (-(k + k0)) * _ball_integral(u, grid, off)
    return SampledField(grid=grid, data=np.sqrt(acc))


def lusin_area(
    f: SampledField, req: SquareFunctionRequest, engine: QuasiNormEngine
) -> SampledField:
    """Anisotropic Lusin area function S(f)."""
    if req.k0 != 0:
        req = replace(req, k0=0)
    return lusin_area_variant(f, req, engine)


def lp_g(f: SampledField, req: SquareFunctionRequest, d: Dilation) -> SampledField:
    """Littlewood-Paley g-function: pointwise l^2 over scales."""
    acc = np.zeros(f.grid.shape, dtype=np.float64)
    for _k, u in _scale_pieces(f, req, d):
        acc += u
    return SampledField(grid=f.grid, data=np.sqrt(acc))


_rho_cache: dict = {}


def _rho_field(engine: QuasiNormEngine, grid: Grid) -> np.ndarray:
    """rho at every sample; cached per (engine form, grid)."""
    key = (engine.P.tobytes(), engine.c, grid.n, grid.N, grid.L)
    val = _rho_cache.get(key)
    if val is None:
        lev = spatial_level_field(engine, grid)
        val = np.zeros(grid.shape, dtype=np.float64)
        ok = lev != LEVEL_ZERO
        with np.errstate(over="ignore"):
            val[ok] = engine.dilation.b ** lev[ok].astype(np.float64)
        _rho_cache[key] = val
    return val


def g_lambda_weight(
    engine: QuasiNormEngine, grid: Grid, k: int, lam: float
) -> np.ndarray:
    """Rasterized decay kernel (b^k / (b^k + rho(z)))^lambda on the torus."""
    rho = _rho_field(engine, grid)
    bk = engine.dilation.b ** float(k)
    return (bk / (bk + rho)) ** lam


def g_lambda_star(
    f: SampledField,
    req: SquareFunctionRequest,
    engine: QuasiNormEngine,
) -> SampledField:
    """Littlewood-Paley g*_lambda with the rho-decay weight kernel."""
    if req.lam is None:
        raise ValueError("request carries no lambda")
    grid = f.grid
    b = engine.dilation.b
    hn = grid.h**grid.n
    acc = np.zeros(grid.shape, dtype=np.float64)
    for k, u in _scale_pieces(f, req, engine.dilation):
        W = g_lambda_weight(engine, grid, k, req.lam)
        term = np.fft.ifftn(np.fft.fftn(u) * np.fft.fftn(W)).real * hn
        np.maximum(term, 0.0, out=term)
        acc += b ** (-k) * term
    return SampledField(grid=grid, data=np.sqrt(acc))


def out_of_band_energy_fraction(
    f: SampledField, req: SquareFunctionRequest, d: Dilation
) -> float:
    """Energy fraction of f the truncated scale range cannot see.

    Fraction of spectral energy where every filter band in the range is
    zero; reported as the truncation-error witness for band-limited
    filters.
    """
    grid = f.grid
    F = np.abs(np.fft.fftn(f.data)) ** 2
    total = float(F.sum())
    if total == 0.0:
        return 0.0
    phi = sample_filter(req.filter, grid)
    covered = np.zeros(grid.shape, dtype=bool)
    for k in req.scales:
        phik = dilate_filter(phi, k - phi.level, d)
        covered |= np.abs(np.fft.fftn(phik.data)) > 1e-12
    return float(F[~covered].sum()) / total
