"""Dilated cubes, nested families, Calderon-Zygmund stoppings and atoms.

Nested ("dyadic") structure is available only for diagonal integer
dilations, where A([0,1]^n + k) splits into exactly b unit cubes; general
expansive matrices get single-level dilated cubes.  On a grid, a level-j
cube is a contiguous block of cells, so per-level averaging is a reshape.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dilation import Dilation, QuasiNormEngine, level_indices
from .errors import NotNested
from .lattice import Grid, SampledField, load_field, save_field
from .lorentz import LorentzParams


@dataclass(frozen=True)
class DilatedCube:
    """Level-j anisotropic cube A^-j([0,1]^n + k)."""

    j: int
    k: tuple
    corner: np.ndarray
    center: np.ndarray
    measure: float


def dilated_cube(d: Dilation, j: int, k) -> DilatedCube:
    k = tuple(int(v) for v in np.atleast_1d(k))
    Ainv_j = np.linalg.matrix_power(d.entries, -j) if j <= 0 else None
    if Ainv_j is None:
        Ainv_j = np.linalg.inv(np.linalg.matrix_power(d.entries, j))
    kv = np.asarray(k, dtype=np.float64)
    corner = Ainv_j @ kv
    center = Ainv_j @ (kv + 0.5)
    return DilatedCube(
        j=int(j), k=k, corner=corner, center=center, measure=d.b ** (-float(j))
    )


def cube_contains(d: Dilation, cube: DilatedCube, pts: np.ndarray) -> np.ndarray:
    """Membership test: A^j y - k in [0,1)^n."""
    Aj = np.linalg.matrix_power(d.entries, cube.j) if cube.j >= 0 else None
    if Aj is None:
        Aj = np.linalg.inv(np.linalg.matrix_power(d.entries, -cube.j))
    z = np.atleast_2d(pts) @ Aj.T - np.asarray(cube.k, dtype=np.float64)
    return np.all((z >= 0.0) & (z < 1.0), axis=-1)


# ---------------------------------------------------------------------------
# Nested family on the grid (diagonal integer dilations only).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NestedCubeFamily:
    """Grid-aligned nested dilated cubes for a diagonal integer dilation."""

    dilation: Dilation
    grid: Grid
    j_min: int
    j_max: int

    def levels(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def blocks(self, j: int) -> tuple:
        """Cells per cube side along each axis at level j."""
        diag = np.diag(self.dilation.entries)
        out = []
        for a in diag:
            cells = self.grid.N / (self.grid.L * float(a) ** j)
            out.append(int(round(cells)))
        return tuple(out)

    def cube_counts(self, j: int) -> tuple:
        return tuple(self.grid.N // c for c in self.blocks(j))


def nested_family(d: Dilation, grid: Grid) -> NestedCubeFamily:
    """Largest level window with integer cube counts and cell-aligned cubes."""
    if not d.is_diagonal_integer():
        raise NotNested("nested cube families need a diagonal integer dilation")
    diag = np.diag(d.entries)

    def ok(j: int) -> bool:
        for a in diag:
            cubes = grid.L * float(a) ** j
            if abs(cubes - round(cubes)) > 1e-9 or round(cubes) < 1:
                return False
            cells = grid.N / round(cubes)
            if abs(cells - round(cells)) > 1e-9 or round(cells) < 1:
                return False
        return True

    if not ok(0):
        raise NotNested(
            f"period {grid.L} / size {grid.N} do not align with unit cubes"
        )
    j_min = 0
    while ok(j_min - 1):
        j_min -= 1
    j_max = 0
    while ok(j_max + 1):
        j_max += 1
    return NestedCubeFamily(dilation=d, grid=grid, j_min=j_min, j_max=j_max)


def level_averages(
    family: NestedCubeFamily, values: np.ndarray, j: int
) -> np.ndarray:
    """E_j: average of `values` over the level-j cube containing each cell."""
    grid = family.grid
    blocks = family.blocks(j)
    counts = family.cube_counts(j)
    shape = []
    for m, c in zip(counts, blocks):
        shape.extend([m, c])
    arr = values.reshape(shape)
    axes = tuple(range(1, 2 * grid.n, 2))
    means = arr.mean(axis=axes)
    for axis, c in enumerate(blocks):
        means = np.repeat(means, c, axis=axis)
    return means


def dyadic_maximal(f: SampledField, family: NestedCubeFamily, levels=None):
    """sup over levels of the cube-average operator E_j applied to |f|."""
    absf = np.abs(f.data)
    out = np.zeros(f.grid.shape, dtype=np.float64)
    js = family.levels() if levels is None else range(levels.k_min, levels.k_max + 1)
    for j in js:
        if j < family.j_min or j > family.j_max:
            raise NotNested(f"level {j} outside family [{family.j_min},{family.j_max}]")
        np.maximum(out, level_averages(family, absf, j), out=out)
    return SampledField(grid=f.grid, data=out)


# ---------------------------------------------------------------------------
# Calderon-Zygmund stopping-time decomposition.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CzCube:
    j: int
    block_index: tuple
    k: tuple
    average: float


@dataclass(frozen=True)
class CzReport:
    cubes: tuple
    union_matches_superlevel: bool
    off_union_max: float
    off_union_ok: bool
    max_average_ratio: float
    averages_in_window: bool
    parents_below_lambda: bool
    root_selected: int
    window_constant: float


def _block_corner_k(family: NestedCubeFamily, j: int, block_index: tuple) -> tuple:
    # array block -> integer cube index k with corner A^-j k
    grid = family.grid
    ks = []
    for axis, bi in enumerate(block_index):
        c = family.blocks(j)[axis]
        start = bi * c
        signed = ((start + grid.N // 2) % grid.N) - grid.N // 2
        ks.append(int(signed))  # corner coordinate = signed * h = k * a^-j
    return tuple(ks)


def cz_decompose(f: SampledField, lam: float, family: NestedCubeFamily):
    """Maximal dyadic cubes where the dyadic averages exceed lam.

    Returns (cubes, report).  The report certifies the stopping-time
    properties exactly on the sample set: the selected cubes are disjoint,
    their union equals {M_d f > lam}, |f| <= lam off the union (exact when
    the finest family level is a single cell), averages sit in
    (lam, C*lam] with C = b, and every non-root parent average is < lam.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    grid = family.grid
    absf = np.abs(f.data)
    covered = np.zeros(grid.shape, dtype=bool)
    cubes = []
    parents_ok = True
    root_selected = 0
    max_ratio = 0.0
    avg_cache = {}
    for j in family.levels():
        counts = family.cube_counts(j)
        blocks = family.blocks(j)
        shape = []
        for m, c in zip(counts, blocks):
            shape.extend([m, c])
        arr = absf.reshape(shape)
        means = arr.mean(axis=tuple(range(1, 2 * grid.n, 2)))
        avg_cache[j] = means
        cov = covered.reshape(shape)
        cov_blocks = cov.any(axis=tuple(range(1, 2 * grid.n, 2)))
        pick = (means > lam) & ~cov_blocks
        if np.any(pick):
            for block_index in zip(*np.nonzero(pick)):
                avg = float(means[block_index])
                max_ratio = max(max_ratio, avg / lam)
                if j == family.j_min:
                    root_selected += 1
                else:
                    parent_idx = tuple(
                        bi * family.blocks(j)[a] // family.blocks(j - 1)[a]
                        for a, bi in enumerate(block_index)
                    )
                    if not avg_cache[j - 1][parent_idx] < lam:
                        parents_ok = False
                cubes.append(
                    CzCube(
                        j=j,
                        block_index=tuple(int(v) for v in block_index),
                        k=_block_corner_k(family, j, block_index),
                        average=avg,
                    )
                )
            sel = np.zeros(counts, dtype=bool)
            sel[tuple(np.array([c.block_index for c in cubes if c.j == j]).T)] = True
            grown = sel
            for axis, c in enumerate(blocks):
                grown = np.repeat(grown, c, axis=axis)
            covered |= grown
    md = dyadic_maximal(f, family).data.real
    union_ok = bool(np.array_equal(covered, md > lam))
    off = absf[~covered]
    off_max = float(off.max()) if off.size else 0.0
    report = CzReport(
        cubes=tuple(cubes),
        union_matches_superlevel=union_ok,
        off_union_max=off_max,
        off_union_ok=bool(off_max <= lam),
        max_average_ratio=max_ratio,
        averages_in_window=bool(max_ratio <= family.dilation.b),
        parents_below_lambda=parents_ok,
        root_selected=root_selected,
        window_constant=family.dilation.b,
    )
    return cubes, report


# ---------------------------------------------------------------------------
# Admissibility indices.
# ---------------------------------------------------------------------------


def _log_ratio(d: Dilation):
    """ln b / ln lambda_-, exact when lambda_-^k == b for an integer k."""
    k = round(math.log(d.b) / math.log(d.lambda_minus))
    if k >= 1 and abs(d.lambda_minus**k - d.b) <= 1e-9 * d.b:
        return Fraction(k)
    return math.log(d.b) / math.log(d.lambda_minus)


def min_moment_order(p: float, d: Dilation) -> int:
    """floor((1/p - 1) ln b / ln lambda_-) with exact rational handling."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    ratio = _log_ratio(d)
    if isinstance(ratio, Fraction):
        pf = Fraction(p).limit_denominator(10**9)
        val = (1 / pf - 1) * ratio
        return int(math.floor(val))
    v = (1.0 / p - 1.0) * ratio
    if abs(v - round(v)) < 1e-9:
        return int(round(v))
    return int(math.floor(v))


def grand_N(p: float, d: Dilation) -> int:
    """Grand-maximal regularity index: moment floor + 2 for p <= 1, else 2."""
    if not p > 0:
        raise ValueError("p must be positive")
    if p > 1:
        return 2
    return min_moment_order(p, d) + 2


# ---------------------------------------------------------------------------
# j0 estimate: ball-in-cube and cube-in-ball inclusion radii.
# ---------------------------------------------------------------------------


def estimate_j0(
    d: Dilation,
    engine: QuasiNormEngine,
    grid: Grid,
    sample_levels=(0, 1),
    j0_max: int = 12,
) -> int:
    """Smallest grid-certified j0 with B(c_Q, b^-j0-j) in Q in B(x, b^j0-j).

    Inclusions are tested on rasterized cubes at the sampled levels for the
    base cube k = 0 and a shifted one.
    """
    pts = grid.coordinates()

    def holds(j0: int) -> bool:
        for j in sample_levels:
            for kvec in ((0,) * d.n, (1,) + (0,) * (d.n - 1)):
                cube = dilated_cube(d, j, kvec)
                inside = cube_contains(d, cube, pts)
                if not np.any(inside):
                    continue
                lev_c = level_indices(engine, pts - cube.center)
                inner = lev_c < (-j0 - j)
                if np.any(inner & ~inside):
                    return False
                cube_pts = pts[inside]
                # rho-diameter over anchor points (extremes plus a spread)
                anchors = cube_pts
                if anchors.shape[0] > 32:
                    sel = np.linspace(0, anchors.shape[0] - 1, 32).astype(int)
                    anchors = anchors[sel]
                for x in anchors:
                    rel = cube_pts - x
                    rel = rel[np.any(rel != 0, axis=1)]
                    if rel.size:
                        lev = level_indices(engine, rel)
                        if int(lev.max()) >= (j0 - j):
                            return False
        return True

    for j0 in range(1, j0_max + 1):
        if holds(j0):
            return j0
    raise ValueError(f"no j0 <= {j0_max} certified on this grid")


# ---------------------------------------------------------------------------
# Atoms.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomCandidate:
    field: SampledField
    ball_center: np.ndarray
    ball_level: int
    p: float
    r: float
    s: int

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if not self.r > 1:
            raise ValueError("r must lie in (1, inf]")
        if self.s < 0:
            raise ValueError("s must be >= 0")


@dataclass(frozen=True)
class AtomReport:
    support_ok: bool
    size_ok: bool
    moments_ok: bool
    degenerate: bool
    size_value: float
    size_bound: float
    worst_moment: float
    moment_scale: float

    @property
    def all_ok(self) -> bool:
        return self.support_ok and self.size_ok and self.moments_ok


def _ball_mask(engine: QuasiNormEngine, grid: Grid, center, level: int):
    pts = grid.coordinates() - np.asarray(center, dtype=np.float64)
    Ak = engine.matrix_power(-level)
    q = engine.quad(pts @ Ak.T)
    return (q < engine.c).reshape(grid.shape)


def validate_atom(
    cand: AtomCandidate,
    engine: QuasiNormEngine,
    size_tol: float = 1e-9,
    moment_tol: float = 1e-8,
) -> AtomReport:
    """Three verdicts: support containment, L^r size bound, moment decay."""
    grid = cand.field.grid
    vals = cand.field.data
    cell = grid.h**grid.n
    mask = _ball_mask(engine, grid, cand.ball_center, cand.ball_level)
    nz = np.abs(vals) > 0.0
    if not np.any(nz):
        return AtomReport(
            support_ok=True,
            size_ok=True,
            moments_ok=True,
            degenerate=True,
            size_value=0.0,
            size_bound=0.0,
            worst_moment=0.0,
            moment_scale=0.0,
        )
    support_ok = bool(not np.any(nz & ~mask))

    measure = engine.dilation.b ** float(cand.ball_level)
    if math.isinf(cand.r):
        size_value = float(np.abs(vals).max())
        size_bound = measure ** (-1.0 / cand.p)
    else:
        size_value = float(
            (np.sum(np.abs(vals) ** cand.r) * cell) ** (1.0 / cand.r)
        )
        size_bound = measure ** (1.0 / cand.r - 1.0 / cand.p)
    size_ok = bool(size_value <= size_bound * (1.0 + size_tol))

    # moments about the ball center, scale-aware threshold
    pts = grid.coordinates() - np.asarray(cand.ball_center, dtype=np.float64)
    in_ball = pts[mask.reshape(-1)]
    radius = (
        float(np.sqrt(np.max(np.sum(in_ball**2, axis=-1))))
        if in_ball.size
        else grid.h
    )
    l1 = float(np.sum(np.abs(vals)) * cell)
    worst = 0.0
    worst_scale = l1
    flat = vals.reshape(-1)
    from .maximal import multi_indices

    for alpha in multi_indices(grid.n, cand.s):
        mono = np.ones(pts.shape[0])
        for axis, a in enumerate(alpha):
            if a:
                mono = mono * pts[:, axis] ** a
        mom = abs(np.sum(flat * mono) * cell)
        scale = l1 * radius ** sum(alpha) if sum(alpha) else l1
        if mom / max(scale, 1e-300) > worst / max(worst_scale, 1e-300):
            worst, worst_scale = mom, scale
    moments_ok = bool(worst <= moment_tol * max(worst_scale, 1e-300))
    return AtomReport(
        support_ok=support_ok,
        size_ok=size_ok,
        moments_ok=moments_ok,
        degenerate=False,
        size_value=size_value,
        size_bound=size_bound,
        worst_moment=worst,
        moment_scale=worst_scale,
    )


def canonical_atom(
    engine: QuasiNormEngine,
    grid: Grid,
    center,
    level: int,
    p: float,
    split_axis: int = 0,
) -> AtomCandidate:
    """Two-valued mean-zero atom on equal halves of a rasterized ball."""
    mask = _ball_mask(engine, grid, center, level)
    idx = np.flatnonzero(mask.reshape(-1))
    if idx.size < 2:
        raise ValueError("ball rasterizes to fewer than 2 cells")
    pts = grid.coordinates()[idx]
    order = np.lexsort(tuple(pts[:, a] for a in range(grid.n - 1, -1, -1) if a != split_axis) + (pts[:, split_axis],))
    idx = idx[order]
    half = idx.size // 2
    cell = grid.h**grid.n
    raster_measure = idx.size * cell
    amp = 0.5 * raster_measure ** (-1.0 / p)
    vals = np.zeros(grid.cell_count, dtype=np.complex128)
    vals[idx[:half]] = amp
    vals[idx[idx.size - half :]] = -amp
    return AtomCandidate(
        field=SampledField(grid=grid, data=vals.reshape(grid.shape)),
        ball_center=np.asarray(center, dtype=np.float64),
        ball_level=int(level),
        p=p,
        r=2.0,
        s=0,
    )


def moment_killed_atom(
    engine: QuasiNormEngine,
    grid: Grid,
    center,
    level: int,
    p: float,
    s: int,
    rng: np.random.Generator,
    r: float = 2.0,
) -> AtomCandidate:
    """Random ball-supported atom with discrete moments killed through s.

    A random bump on the rasterized ball is orthogonalized against all
    monomials of degree <= s, then scaled to half the L^r size bound.
    """
    mask = _ball_mask(engine, grid, center, level).reshape(-1)
    idx = np.flatnonzero(mask)
    from .maximal import multi_indices

    monos = multi_indices(grid.n, s)
    if idx.size <= len(monos) + 1:
        raise ValueError("ball raster too small to kill the requested moments")
    pts = grid.coordinates()[idx] - np.asarray(center, dtype=np.float64)
    V = np.stack(
        [np.prod(pts ** np.asarray(a, dtype=np.float64), axis=-1) for a in monos],
        axis=1,
    )
    v = rng.standard_normal(idx.size)
    coef, *_ = np.linalg.lstsq(V, v, rcond=None)
    v = v - V @ coef
    cell = grid.h**grid.n
    measure = engine.dilation.b ** float(level)
    if math.isinf(r):
        norm = float(np.abs(v).max())
    else:
        norm = float((np.sum(np.abs(v) ** r) * cell) ** (1.0 / r))
    bound = measure ** ((1.0 / r if not math.isinf(r) else 0.0) - 1.0 / p)
    v *= 0.5 * bound / norm
    vals = np.zeros(grid.cell_count, dtype=np.complex128)
    vals[idx] = v
    return AtomCandidate(
        field=SampledField(grid=grid, data=vals.reshape(grid.shape)),
        ball_center=np.asarray(center, dtype=np.float64),
        ball_level=int(level),
        p=p,
        r=r,
        s=s,
    )


# ---------------------------------------------------------------------------
# Atomic decompositions.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomicDecomposition:
    """One explicit decomposition: (k, i) indexed coefficients and atoms."""

    records: tuple  # of (k, i, lam)
    atoms: tuple  # of AtomCandidate, aligned with records


def atomic_norm(decomp: AtomicDecomposition, lp: LorentzParams) -> float:
    """[sum_k (sum_i |lam_i^k|^p)^{q/p}]^{1/q} with the q = inf sup form."""
    by_k: dict = {}
    for (k, _i, lam) in decomp.records:
        by_k.setdefault(int(k), []).append(abs(lam))
    inner = {
        k: float(np.sum(np.asarray(v) ** lp.p) ** (1.0 / lp.p))
        for k, v in by_k.items()
    }
    if lp.weak:
        return max(inner.values(), default=0.0)
    total = sum(v**lp.q for v in inner.values())
    return float(total ** (1.0 / lp.q))


def check_decomposition_invariants(
    decomp: AtomicDecomposition,
    engine: QuasiNormEngine,
    overlap_bound: int = 8,
) -> dict:
    """Bounded overlap per k and the coefficient window [1/4, 4]*2^k|B|^1/p."""
    grid = decomp.atoms[0].field.grid if decomp.atoms else None
    overlaps_ok = True
    window_ok = True
    for k in {int(r[0]) for r in decomp.records}:
        acc = np.zeros(grid.shape, dtype=np.int64) if grid else None
        for (kk, _i, lam), atom in zip(decomp.records, decomp.atoms):
            if int(kk) != k:
                continue
            mask = _ball_mask(engine, grid, atom.ball_center, atom.ball_level)
            acc += mask.astype(np.int64)
            target = 2.0**k * (engine.dilation.b ** atom.ball_level) ** (
                1.0 / atom.p
            )
            if not (0.25 * target <= abs(lam) <= 4.0 * target):
                window_ok = False
        if acc is not None and int(acc.max()) > overlap_bound:
            overlaps_ok = False
    return {"overlap_ok": overlaps_ok, "window_ok": window_ok}


def export_decomposition(
    decomp: AtomicDecomposition, engine: QuasiNormEngine, out_dir
) -> str:
    """Write decomposition JSON plus per-atom field binaries; returns path."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i, ((k, idx, lam), atom) in enumerate(zip(decomp.records, decomp.atoms)):
        fname = f"atom_{i:04d}.anlp"
        fpath = os.path.join(out_dir, fname)
        save_field(atom.field, fpath)
        digest = hashlib.sha256(atom.field.values.tobytes()).hexdigest()
        records.append(
            {
                "k": int(k),
                "i": int(idx),
                "lam": float(lam),
                "center": [float(v) for v in atom.ball_center],
                "level": int(atom.ball_level),
                "p": atom.p,
                "r": atom.r if not math.isinf(atom.r) else "inf",
                "s": atom.s,
                "field": fname,
                "sha256": digest,
            }
        )
    doc = {"schema": "anilp-atoms v1", "records": records}
    path = os.path.join(out_dir, "decomposition.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def import_decomposition(path) -> AtomicDecomposition:
    import os

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "anilp-atoms v1":
        raise ValueError(f"unknown decomposition schema {doc.get('schema')!r}")
    base = os.path.dirname(os.path.abspath(path))
    records = []
    atoms = []
    for rec in doc["records"]:
        field = load_field(os.path.join(base, rec["field"]))
        digest = hashlib.sha256(field.values.tobytes()).hexdigest()
        if digest != rec["sha256"]:
            raise ValueError(f"content hash mismatch for {rec['field']}")
        records.append((rec["k"], rec["i"], rec["lam"]))
        r = math.inf if rec["r"] == "inf" else float(rec["r"])
        atoms.append(
            AtomCandidate(
                field=field,
                ball_center=np.asarray(rec["center"], dtype=np.float64),
                ball_level=int(rec["level"]),
                p=float(rec["p"]),
                r=r,
                s=int(rec["s"]),
            )
        )
    return AtomicDecomposition(records=tuple(records), atoms=tuple(atoms))
