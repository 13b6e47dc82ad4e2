"""Cube-indexed sequences: majorants and the sup/inf comparison machinery.

Sequences live on the level-j dilated-cube lattice of a periodic grid (so
diagonal integer dilations only).  The majorant kernel is translation
invariant on the periodized index set, which turns every majorant into a
circular convolution; lattice images beyond the period are accumulated in
rings until they stop contributing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dilation import Dilation, QuasiNormEngine, level_indices
from .errors import LatticeMisaligned, ParameterInadmissible, ScaleUnresolvable
from .frames import FramePair, _lattice_stride
from .lattice import Grid, SampledField, dilate_filter
from .lorentz import LorentzParams, lorentz_norm_values
from .maximal import ScaleRange, hl_maximal
from ._kernels import LEVEL_ZERO


@dataclass(frozen=True)
class CubeSequence:
    """Complex values indexed by the level-j cubes of one period."""

    level: int
    values: np.ndarray  # shape = cube counts per axis

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.complex128)
        )


def cube_lattice(d: Dilation, grid: Grid, j: int) -> tuple:
    """(strides, counts) of the level-j cube lattice on the grid."""
    strides = _lattice_stride(d, grid, j)
    counts = tuple(grid.N // s for s in strides)
    return strides, counts


def _rho_on_offsets(
    engine: QuasiNormEngine, pts: np.ndarray, b: float
) -> np.ndarray:
    lev = level_indices(engine, pts)
    rho = np.zeros(lev.shape, dtype=np.float64)
    ok = lev != LEVEL_ZERO
    with np.errstate(over="ignore"):
        rho[ok] = b ** lev[ok].astype(np.float64)
    return rho


def majorant_kernel(
    engine: QuasiNormEngine,
    grid: Grid,
    j: int,
    r: float,
    lam: float,
    max_rings: int = 8,
    rel_tol: float = 1e-14,
) -> np.ndarray:
    """Periodized kernel [1 + |Q|^-1 rho(x_Q - x_P)]^-lambda on index offsets."""
    d = engine.dilation
    strides, counts = cube_lattice(d, grid, j)
    # signed index offsets of the cube lattice, then corner differences
    axes = [((np.arange(m) + m // 2) % m) - m // 2 for m in counts]
    mesh = np.meshgrid(*axes, indexing="ij")
    dk = np.stack([g.ravel() for g in mesh], axis=-1).astype(np.float64)
    dk *= np.asarray(strides, dtype=np.float64) * grid.h  # corner offsets
    inv_measure = d.b ** float(j)
    ker = (1.0 + inv_measure * _rho_on_offsets(engine, dk, d.b)) ** (-lam)
    for ring in range(1, max_rings + 1):
        added = np.zeros_like(ker)
        for nu in _ring_images(grid.n, ring):
            shift = np.asarray(nu, dtype=np.float64) * grid.L
            added += (
                1.0 + inv_measure * _rho_on_offsets(engine, dk + shift, d.b)
            ) ** (-lam)
        ker += added
        if float(np.max(added / ker)) < rel_tol:
            break
    return ker.reshape(counts)


def _ring_images(n: int, ring: int):
    """Integer vectors with max-norm exactly `ring`, deterministic order."""
    rng = range(-ring, ring + 1)
    out = []
    if n == 1:
        return [(-ring,), (ring,)]
    if n == 2:
        for a in rng:
            for b in rng:
                if max(abs(a), abs(b)) == ring:
                    out.append((a, b))
        return out
    for a in rng:
        for b in rng:
            for c in rng:
                if max(abs(a), abs(b), abs(c)) == ring:
                    out.append((a, b, c))
    return out


def majorant(
    s: CubeSequence,
    r: float,
    lam: float,
    engine: QuasiNormEngine,
    grid: Grid,
) -> CubeSequence:
    """Majorant sequence: l^r average against the rho-decay kernel."""
    if not (r > 0 and lam > 0):
        raise ParameterInadmissible("need r > 0 and lambda > 0")
    ker = majorant_kernel(engine, grid, s.level, r, lam)
    power = np.abs(s.values) ** r
    conv = np.fft.ifftn(np.fft.fftn(power) * np.fft.fftn(ker)).real
    np.maximum(conv, 0.0, out=conv)
    return CubeSequence(level=s.level, values=conv ** (1.0 / r))


def _block_reduce(u: np.ndarray, blocks: tuple, op) -> np.ndarray:
    shape = []
    for m, c in zip([s // c for s, c in zip(u.shape, blocks)], blocks):
        shape.extend([m, c])
    arr = u.reshape(shape)
    return op(arr, axis=tuple(range(1, 2 * len(blocks), 2)))


def sup_inf_sequences(
    f: SampledField,
    pair: FramePair,
    gamma: int,
    j: int,
    d: Dilation,
) -> tuple:
    """Per-cube sup of |f * Phi~_{-j}| and the fine-cube inf-sup variant."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    grid = f.grid
    strides_j, _ = cube_lattice(d, grid, j)
    strides_fine, _ = cube_lattice(d, grid, j + gamma)  # raises if unresolvable
    Phij = dilate_filter(pair.Phi, -j - pair.Phi.level, d)
    hn = grid.h**grid.n
    u = np.abs(
        np.fft.ifftn(np.fft.fftn(f.data) * np.conj(np.fft.fftn(Phij.data))) * hn
    )
    sup_vals = _block_reduce(u, strides_j, np.max)
    fine_min = _block_reduce(u, strides_fine, np.min)
    ratio = tuple(sj // sf for sj, sf in zip(strides_j, strides_fine))
    inf_vals = _block_reduce(fine_min, ratio, np.max)
    return (
        CubeSequence(level=j, values=sup_vals),
        CubeSequence(level=j, values=inf_vals),
    )


def check_lemma_4_9(
    f: SampledField,
    pair: FramePair,
    gamma: int,
    r: float,
    lam: float,
    levels,
    engine: QuasiNormEngine,
) -> dict:
    """max over cubes of (sup*)_Q / (inf*)_Q per level; degenerates flagged."""
    d = engine.dilation
    out = {"ratios": {}, "degenerate_cubes": 0}
    worst = 0.0
    for j in levels:
        sup_s, inf_s = sup_inf_sequences(f, pair, gamma, j, d)
        sup_m = majorant(sup_s, r, lam, engine, f.grid).values.real
        inf_m = majorant(inf_s, r, lam, engine, f.grid).values.real
        bad = (inf_m == 0.0) & (sup_m > 0.0)
        out["degenerate_cubes"] += int(np.count_nonzero(bad))
        ok = inf_m > 0.0
        if np.any(ok):
            ratio = float(np.max(sup_m[ok] / inf_m[ok]))
            out["ratios"][j] = ratio
            worst = max(worst, ratio)
    out["max_ratio"] = worst
    return out


def check_lemma_4_7(
    s: CubeSequence,
    a: float,
    r: float,
    lam: float,
    i: int,
    j: int,
    engine: QuasiNormEngine,
    grid: Grid,
    scales: ScaleRange,
) -> float:
    """Empirical constant in the cross-level majorant bound.

    LHS per level-j cube: sum over level-i cubes P of
    |s_P|^r [1 + rho(x_Q - x_P)/max(|P|,|Q|)]^-lambda, compared against
    b^{max(0,i-j)/a} (M_HL(sum |s_P|^a chi_P))^{1/a} minimized over the cube.
    """
    if not (0 < a <= r):
        raise ParameterInadmissible("need 0 < a <= r")
    if not lam > r / a:
        raise ParameterInadmissible(f"need lambda > r/a = {r / a}")
    if s.level != i:
        raise ValueError("sequence level must equal i")
    d = engine.dilation
    m = max(i, j)
    strides_m, counts_m = cube_lattice(d, grid, m)
    strides_i, _ = cube_lattice(d, grid, i)
    strides_j, _ = cube_lattice(d, grid, j)

    # embed |s|^r on the fine lattice
    fine = np.zeros(counts_m, dtype=np.float64)
    emb = tuple(slice(None, None, si // sm) for si, sm in zip(strides_i, strides_m))
    fine[emb] = np.abs(s.values) ** r

    # kernel on fine corner offsets with the max(|P|,|Q|) normalization
    axes = [((np.arange(c) + c // 2) % c) - c // 2 for c in counts_m]
    mesh = np.meshgrid(*axes, indexing="ij")
    dk = np.stack([g.ravel() for g in mesh], axis=-1).astype(np.float64)
    dk *= np.asarray(strides_m, dtype=np.float64) * grid.h
    inv_meas = d.b ** float(min(i, j))  # 1/max(|P|,|Q|) = b^min(i,j)
    ker = (1.0 + inv_meas * _rho_on_offsets(engine, dk, d.b)) ** (-lam)
    ker = ker.reshape(counts_m)
    conv = np.fft.ifftn(np.fft.fftn(fine) * np.fft.fftn(ker)).real
    np.maximum(conv, 0.0, out=conv)
    lhs_fine = conv ** (1.0 / r)
    sel = tuple(slice(None, None, sj // sm) for sj, sm in zip(strides_j, strides_m))
    lhs = lhs_fine[sel]

    # RHS: block fill |s|^a to the grid, maximal function, min over cubes
    cell_field = np.zeros(grid.shape, dtype=np.float64)
    blocks_i = strides_i
    filled = np.abs(s.values) ** a
    for axis, c in enumerate(blocks_i):
        filled = np.repeat(filled, c, axis=axis)
    cell_field[...] = filled
    mhl = hl_maximal(
        SampledField(grid=grid, data=cell_field), engine, scales
    ).data.real
    rhs_grid = d.b ** (max(0, i - j) / a) * mhl ** (1.0 / a)
    rhs = _block_reduce(rhs_grid, strides_j, np.min)
    ok = rhs > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(lhs[ok] / rhs[ok]))


def check_lemma_4_8(
    seqs: dict,
    r: float,
    lam: float,
    lp: LorentzParams,
    engine: QuasiNormEngine,
    grid: Grid,
) -> float:
    """Norm ratio of the stacked majorant square field to the raw one."""
    bound = max(1.0, r / 2.0, r / lp.p)
    if not lam > bound:
        raise ParameterInadmissible(f"need lambda > {bound}")
    d = engine.dilation
    num_field = np.zeros(grid.shape, dtype=np.float64)
    den_field = np.zeros(grid.shape, dtype=np.float64)
    for j, seq in sorted(seqs.items()):
        strides, _ = cube_lattice(d, grid, j)
        maj = majorant(seq, r, lam, engine, grid).values.real
        raw = np.abs(seq.values)
        m2, r2 = maj**2, raw**2
        for axis, c in enumerate(strides):
            m2 = np.repeat(m2, c, axis=axis)
            r2 = np.repeat(r2, c, axis=axis)
        num_field += m2
        den_field += r2
    cell = grid.h**grid.n
    den = lorentz_norm_values(np.sqrt(den_field), cell, lp)
    if den == 0.0:
        return 0.0
    num = lorentz_norm_values(np.sqrt(num_field), cell, lp)
    return num / den
