"""Lorentz quasi-norms of sampled fields, evaluated in closed form.

A sampled field is a simple function, so its non-increasing rearrangement
is a finite step function and every L^{p,q} quasi-norm reduces to an exact
sum: each step contributes (p/q-free) closed-form integrals of t^{q/p-1}.
No quadrature is involved anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import SampledField


@dataclass(frozen=True)
class LorentzParams:
    """Exponent pair (p, q); q = inf encoded as math.inf."""

    p: float
    q: float

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not (self.q > 0 or math.isinf(self.q)):
            raise ValueError("q must be positive or inf")

    @property
    def weak(self) -> bool:
        return math.isinf(self.q)


@dataclass(frozen=True)
class Rearrangement:
    """Step representation of the non-increasing rearrangement.

    `levels` are the distinct nonzero values of |f| in decreasing order and
    `weights` the measure (h^n times sample count) each value occupies.
    """

    levels: np.ndarray
    weights: np.ndarray

    @property
    def support_measure(self) -> float:
        return float(self.weights.sum())


def distribution_function(f: SampledField, alpha: float) -> float:
    """Measure of {|f| > alpha}: h^n times the sample count."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    count = int(np.count_nonzero(np.abs(f.data) > alpha))
    return count * f.grid.h**f.grid.n


def rearrange(f: SampledField) -> Rearrangement:
    """Sorted-by-magnitude step form; ties merge into one step."""
    mags = np.abs(f.values)
    mags = mags[mags > 0.0]
    cell = f.grid.h**f.grid.n
    if mags.size == 0:
        return Rearrangement(levels=np.empty(0), weights=np.empty(0))
    levels, counts = np.unique(mags, return_counts=True)
    return Rearrangement(levels=levels[::-1], weights=counts[::-1] * cell)


def lorentz_norm_from_steps(r: Rearrangement, lp: LorentzParams) -> float:
    """Exact L^{p,q} quasi-norm of a step rearrangement."""
    if r.levels.size == 0:
        return 0.0
    T = np.cumsum(r.weights)
    if lp.weak:
        return float(np.max(T ** (1.0 / lp.p) * r.levels))
    qp = lp.q / lp.p
    Tq = T**qp
    prev = np.concatenate(([0.0], Tq[:-1]))
    return float(np.sum(r.levels**lp.q * (Tq - prev)) ** (1.0 / lp.q))


def lorentz_norm(f: SampledField, lp: LorentzParams) -> float:
    """L^{p,q} quasi-norm of a sampled field (exact step evaluation)."""
    return lorentz_norm_from_steps(rearrange(f), lp)


def lorentz_norm_values(values: np.ndarray, cell: float, lp: LorentzParams) -> float:
    """Quasi-norm of raw magnitudes with a given cell measure."""
    mags = np.abs(np.asarray(values)).reshape(-1)
    mags = mags[mags > 0.0]
    if mags.size == 0:
        return 0.0
    levels, counts = np.unique(mags, return_counts=True)
    r = Rearrangement(levels=levels[::-1], weights=counts[::-1] * cell)
    return lorentz_norm_from_steps(r, lp)


def dyadic_sum_norm(f: SampledField, lp: LorentzParams) -> float:
    """Dyadic distribution-function form of the quasi-norm.

    Equivalent (not equal) to `lorentz_norm`; used as a cross-check with a
    bounded-ratio acceptance window.
    """
    mags = np.abs(f.values)
    top = float(mags.max(initial=0.0))
    if top == 0.0:
        return 0.0
    lo = float(mags[mags > 0].min())
    k_hi = math.ceil(math.log2(top)) + 1
    k_lo = math.floor(math.log2(lo)) - 1
    cell = f.grid.h**f.grid.n
    ks = np.arange(k_lo, k_hi + 1, dtype=np.float64)
    counts = np.array([np.count_nonzero(mags > 2.0**k) for k in ks])
    d = counts * cell
    if lp.weak:
        return float(np.max(2.0**ks * d ** (1.0 / lp.p)))
    terms = (2.0**ks * d ** (1.0 / lp.p)) ** lp.q
    return float(np.sum(terms) ** (1.0 / lp.q))


def check_power_identity(g: SampledField, r: float, lp: LorentzParams) -> bool:
    """Verify || |g|^r ||_{p,q} = (||g||_{pr,qr})^r to 1e-10 relative."""
    if not r > 0:
        raise ValueError("r must be positive")
    lhs = lorentz_norm_values(np.abs(g.values) ** r, g.grid.h**g.grid.n, lp)
    scaled = LorentzParams(p=lp.p * r, q=lp.q * r if not lp.weak else math.inf)
    rhs = lorentz_norm(g, scaled) ** r
    if lhs == rhs:
        return True
    denom = max(abs(lhs), abs(rhs))
    return abs(lhs - rhs) <= 1e-10 * denom
