"""Calderon reproducing filter pairs and the reproduction residuals.

The pair is built in frequency from a profile in t = log_b rho*(xi); with
the step dual quasi-norm, t is the integer shell index, so the normalized
profile collapses to the indicator of a single dual shell and the partition
of unity over dilation shifts is exact wherever shells are resolvable.
Reproduction then fails only by out-of-band truncation, which is what the
residual reports measure.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dilation import Dilation, QuasiNormEngine, level_indices
from .errors import CoverageGap, LatticeMisaligned, ScaleUnresolvable, SpectrumUncovered
from .lattice import (
    Grid,
    SampledField,
    annulus_spec,
    dilate_filter,
    dual_engine,
    dual_level_field,
    field_from_spectrum,
    filter_profile,
    load_field,
    resolvable_dual_levels,
    sample_filter,
    save_field,
)


@dataclass(frozen=True)
class FramePair:
    """Band-limited pair with an exact shell partition of unity."""

    Phi: SampledField
    Psi: SampledField
    annulus: tuple  # (base shell, base shell) in dual-level coordinates
    partition_defect: float
    box_scale: float  # outer-band extent relative to the Nyquist box
    dilation: Dilation
    grid: Grid

    @property
    def base_level(self) -> int:
        return self.annulus[0]


def eta_bump(t: np.ndarray) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1-t^2)) on (-1, 1)."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def covered_levels(pair: FramePair, J: int) -> range:
    base = pair.base_level
    return range(base - J, base + J + 1)


def build_frame_pair(
    d: Dilation, grid: Grid, base_level: int | None = None
) -> FramePair:
    """Construct Phi = Psi supported on one dual shell, partition exact.

    The profile eta(log_b rho*(xi) - base) / sqrt(sum_j eta(...+j)^2)
    evaluates, on the integer-valued step quasi-norm, to the indicator of
    the base shell (eta(0) = 1, eta(+-1) = 0), so the partition sum is 1 at
    every frequency whose shell the grid resolves.
    """
    lo, hi = resolvable_dual_levels(d, grid)
    if base_level is None:
        base_level = (lo + hi) // 2
    if not lo <= base_level <= hi:
        raise ScaleUnresolvable(
            f"base level {base_level} outside resolvable dual shells [{lo},{hi}]"
        )
    # overlap check of the fixed profile at integer offsets
    denom = np.sum(eta_bump(np.arange(-3, 4, dtype=np.float64)) ** 2)
    if not denom > 0:
        raise CoverageGap("profile has no mass on integer shell offsets")

    spec = annulus_spec(d, base_level, base_level)
    Phi = sample_filter(spec, grid)
    Psi = Phi

    # measured partition defect over nonzero resolvable frequencies
    lev = dual_level_field(d, grid)
    xi = grid.frequencies()
    acc = np.zeros(grid.cell_count, dtype=np.float64)
    AT = d.entries.T
    for j in range(base_level - hi, base_level - lo + 1):
        Mj = np.linalg.matrix_power(AT, j) if j >= 0 else np.linalg.inv(
            np.linalg.matrix_power(AT, -j)
        )
        acc += filter_profile(spec, xi @ Mj.T) ** 2
    flat_lev = lev.reshape(-1)
    relevant = (flat_lev >= lo) & (flat_lev <= hi)
    defect = float(np.max(np.abs(acc[relevant] - 1.0))) if np.any(relevant) else 0.0
    if defect > 1e-10:
        raise CoverageGap(f"partition defect {defect:.3e} exceeds 1e-10")

    deng = dual_engine(d)
    box_scale = float(np.max(deng.ball_extent(base_level + 1)) / grid.nyquist)
    return FramePair(
        Phi=Phi,
        Psi=Psi,
        annulus=(base_level, base_level),
        partition_defect=defect,
        box_scale=box_scale,
        dilation=d,
        grid=grid,
    )


class ResidualReport(NamedTuple):
    residual_l2: float
    residual_energy: float
    out_of_band_energy: float
    degenerate: bool


def _band_multiplier(pair: FramePair, J: int) -> np.ndarray:
    """sum_{|j|<=J} conj(Phi^((A*)^j xi)) Psi^((A*)^j xi) on the grid."""
    grid = pair.grid
    xi = grid.frequencies()
    spec = pair.Phi.spec
    AT = pair.dilation.entries.T
    acc = np.zeros(grid.cell_count, dtype=np.float64)
    for j in range(-J, J + 1):
        Mj = np.linalg.matrix_power(AT, j) if j >= 0 else np.linalg.inv(
            np.linalg.matrix_power(AT, -j)
        )
        prof = filter_profile(spec, xi @ Mj.T)
        acc += prof * prof  # real profiles: conj(Phi^) Psi^ = profile^2
    return acc.reshape(grid.shape)


def reproduce_continuous(f: SampledField, pair: FramePair, J: int) -> ResidualReport:
    """Relative L2 residual of f - sum_{|j|<=J} f * Phi~_j * Psi_j."""
    F = np.fft.fftn(f.data)
    total = float(np.sum(np.abs(F) ** 2))
    if total == 0.0:
        return ResidualReport(0.0, 0.0, 0.0, True)
    M = _band_multiplier(pair, J)
    covered = M > 0.5  # partition is 0/1 up to the measured defect
    in_band = float(np.sum(np.abs(F[covered]) ** 2))
    if in_band == 0.0:
        raise SpectrumUncovered("field carries no energy in the covered band")
    res_energy = float(np.sum(np.abs(F * (1.0 - M)) ** 2)) / total
    return ResidualReport(
        residual_l2=math.sqrt(res_energy),
        residual_energy=res_energy,
        out_of_band_energy=1.0 - in_band / total,
        degenerate=False,
    )


def _lattice_stride(d: Dilation, grid: Grid, j: int) -> tuple:
    """Cells between level-j cube corners; LatticeMisaligned if fractional."""
    if not d.is_diagonal_integer():
        raise LatticeMisaligned("discrete formula needs a diagonal integer dilation")
    diag = np.diag(d.entries)
    strides = []
    for a in diag:
        s = float(a) ** (-j) / grid.h
        if abs(s - round(s)) > 1e-9 or round(s) < 1:
            raise LatticeMisaligned(
                f"level {j} corners have stride {s} cells (axis scale {a})"
            )
        if grid.N % round(s):
            raise LatticeMisaligned(
                f"level {j} stride {round(s)} does not divide N={grid.N}"
            )
        strides.append(int(round(s)))
    return tuple(strides)


def lattice_cube_count(d: Dilation, grid: Grid, j: int) -> int:
    """Number of level-j cubes per period (exact lattice count)."""
    return int(np.prod([grid.N // s for s in _lattice_stride(d, grid, j)]))


def reproduce_discrete(
    f: SampledField, pair: FramePair, J: int
) -> ResidualReport:
    """Residual of the sampled reproducing sum over dilated-cube corners.

    Level-j cubes contribute b^-j (f * Phi~_{-j})(x_Q) Psi_{-j}(. - x_Q)
    summed over corners x_Q = A^-j k, evaluated via comb convolutions.
    """
    grid = pair.grid
    d = pair.dilation
    F = np.fft.fftn(f.data)
    total = float(np.sum(np.abs(F) ** 2))
    if total == 0.0:
        return ResidualReport(0.0, 0.0, 0.0, True)
    b = d.b
    hn = grid.h**grid.n
    recon = np.zeros(grid.shape, dtype=np.complex128)
    for j in range(-J, J + 1):
        strides = _lattice_stride(d, grid, j)
        Phij = dilate_filter(pair.Phi, -j - pair.Phi.level, d)
        Psij = dilate_filter(pair.Psi, -j - pair.Psi.level, d)
        # f * Phi~_{-j} with Phi~ = conj(Phi(-.)): spectrum conj(Phi^)
        conv = np.fft.ifftn(F * np.conj(np.fft.fftn(Phij.data))) * hn
        comb = np.zeros(grid.shape, dtype=np.complex128)
        sel = tuple(slice(None, None, s) for s in strides)
        comb[sel] = conv[sel] * (b ** (-float(j)) / hn)
        recon += np.fft.ifftn(np.fft.fftn(comb) * np.fft.fftn(Psij.data)) * hn
    res_energy = float(np.sum(np.abs(f.data - recon) ** 2)) / float(
        np.sum(np.abs(f.data) ** 2)
    )
    M = _band_multiplier(pair, J)
    in_band = float(np.sum(np.abs(F[M > 0.5]) ** 2))
    if in_band == 0.0:
        raise SpectrumUncovered("field carries no energy in the covered band")
    return ResidualReport(
        residual_l2=math.sqrt(res_energy),
        residual_energy=res_energy,
        out_of_band_energy=1.0 - in_band / total,
        degenerate=False,
    )


def phi_Q(
    phi: SampledField, d: Dilation, j: int, k, grid: Grid | None = None
) -> SampledField:
    """L2-normalized translate-dilate |Q|^(1/2) phi_{-j}(x - x_Q)."""
    grid = grid or phi.grid
    strides = _lattice_stride(d, grid, j)
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    shift = tuple(int(kv * s) for kv, s in zip(k, strides))
    phij = dilate_filter(phi, -j - phi.level, d)
    scale = d.b ** (-float(j) / 2.0)
    return SampledField(grid=grid, data=np.roll(phij.data * scale, shift, axis=tuple(range(grid.n))))


def check_lemma_4_2(
    phi_spec,
    psi_spec,
    d: Dilation,
    engine: QuasiNormEngine,
    grid: Grid,
    ell: int,
    M: int,
    level_pairs,
) -> dict:
    """Cross-scale convolution decay ratios against b^{j-(i-j)(ell+1)zeta}.

    For each (i, j) with i >= j, reports
    max_x |phi_{-i} * psi_{-j}(x)| [1 + rho(A^j x)]^M / b^{j-(i-j)(ell+1)zeta_-}.
    """
    from .lattice import spatial_level_field

    phi = sample_filter(phi_spec, grid)
    psi = sample_filter(psi_spec, grid)
    lev = spatial_level_field(engine, grid).astype(np.float64)
    zero_mask = lev < -(2.0**61)
    b = d.b
    out = {}
    hn = grid.h**grid.n
    for (i, j) in level_pairs:
        if i < j:
            raise ValueError(f"need i >= j, got {(i, j)}")
        phii = dilate_filter(phi, -i - phi.level, d)
        psij = dilate_filter(psi, -j - psi.level, d)
        conv = np.abs(
            np.fft.ifftn(np.fft.fftn(phii.data) * np.fft.fftn(psij.data)) * hn
        )
        rho_j = np.where(zero_mask, 0.0, b ** (lev + j))
        weight = (1.0 + rho_j) ** M
        bound = b ** (j - (i - j) * (ell + 1) * d.zeta_minus)
        out[(i, j)] = float(np.max(conv * weight) / bound)
    return out


def weak_vanishing_profile(
    f: SampledField, psi_spec, d: Dilation, ks
) -> list:
    """sup_x |f * psi_k(x)| per scale k: the vanishing-at-infinity witness."""
    psi = sample_filter(psi_spec, f.grid)
    F = np.fft.fftn(f.data)
    hn = f.grid.h**f.grid.n
    out = []
    for k in ks:
        psik = dilate_filter(psi, k - psi.level, d)
        conv = np.fft.ifftn(F * np.fft.fftn(psik.data)) * hn
        out.append(float(np.abs(conv).max()))
    return out


def save_frame_pair(pair: FramePair, out_dir) -> str:
    """Spectra in the lattice field format plus a JSON descriptor."""
    os.makedirs(out_dir, exist_ok=True)
    for name, fld in (("phi", pair.Phi), ("psi", pair.Psi)):
        spec_field = SampledField(
            grid=pair.grid, data=np.fft.fftn(fld.data) * pair.grid.h**pair.grid.n
        )
        save_field(spec_field, os.path.join(out_dir, f"{name}_spectrum.anlp"))
    doc = {
        "schema": "anilp-frame v1",
        "annulus": list(pair.annulus),
        "partition_defect": pair.partition_defect,
        "box_scale": pair.box_scale,
        "dilation": pair.dilation.entries.tolist(),
    }
    path = os.path.join(out_dir, "frame.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_frame_pair(path) -> dict:
    """Descriptor plus spectrum fields (raw, without rebuilding specs)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "anilp-frame v1":
        raise ValueError(f"unknown frame schema {doc.get('schema')!r}")
    base = os.path.dirname(os.path.abspath(path))
    doc["phi_spectrum"] = load_field(os.path.join(base, "phi_spectrum.anlp"))
    doc["psi_spectrum"] = load_field(os.path.join(base, "psi_spectrum.anlp"))
    return doc
