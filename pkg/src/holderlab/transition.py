"""Transition operator of the random orbit and its limit profile.

The operator averages a bounded function over one random branch step,
(M h)(x) = sum_i p_i h(f_i(x)).  Iterating it on any bounded h with limits
at minus/plus infinity converges to an affine image of a single profile:
the probability, as a function of the start point, that the random orbit
drifts to plus infinity.  That profile is the distribution function of the
stationary measure of the backward walk, so this module calls it the cdf.
It is also the unique bounded fixed point of M with boundary values 0 and 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .ifs import (
    IFSystem,
    ProbVector,
    attractor_hull,
    compactified_distance,
    compactify,
    compactified_gap_factor,
    cylinder,
    hull_preimages,
)

# ---------------------------------------------------------------------------
# grid functions


@dataclass(frozen=True)
class GridFunction:
    """Piecewise-linear function on a strictly increasing node grid.

    Outside the node span the function takes the boundary constants, which
    stand for the values at minus and plus infinity.
    """

    nodes: np.ndarray
    values: np.ndarray
    boundary_left: float = 0.0
    boundary_right: float = 0.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape:
            raise ValueError("nodes and values must be 1-d arrays of equal length")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values,
                         left=self.boundary_left, right=self.boundary_right)

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(self.values)),
                         abs(self.boundary_left), abs(self.boundary_right)))

    def cell_oscillation(self) -> float:
        """Max jump between adjacent nodes; a bound scale for interpolation
        error of monotone-structured data read through this grid."""
        return float(np.max(np.abs(np.diff(self.values))))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.nodes, values, self.boundary_left,
                            self.boundary_right)


def uniform_grid(system: IFSystem, size: int = 4097,
                 margin: float = 0.25) -> np.ndarray:
    """Uniform nodes spanning the attractor hull plus a margin on each side,
    the margin given as a fraction of the hull diameter."""
    a, b = attractor_hull(system)
    a, b = float(a), float(b)
    pad = margin * (b - a)
    return np.linspace(a - pad, b + pad, size)


# ---------------------------------------------------------------------------
# cdf evaluation by cylinder mass accumulation


def eval_cdf(system: IFSystem, p: ProbVector, x, tol: float = 1e-12,
             max_depth: int = 100_000):
    """Value of the limit cdf at x with a guaranteed error bound.

    Walks the coding of x, accumulating the mass of branch choices whose
    orbit escapes to plus infinity before the orbit of x leaves resolution.
    Stops once the undecided cylinder mass drops to tol, or exactly when the
    orbit parks on a hull endpoint, which happens at every cylinder endpoint
    in rational arithmetic.  Returns (value, error_bound).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b = attractor_hull(system)
    if x <= a:
        return (Fraction(0) if p.is_rational else 0.0), 0.0
    if x >= b:
        return (Fraction(1) if p.is_rational else 1.0), 0.0
    pre = hull_preimages(system)
    exact = p.is_rational and system.is_rational
    acc = Fraction(0) if exact else 0.0
    mass = Fraction(1) if exact else 1.0
    y = x
    depth = 0
    while float(mass) > tol and depth < max_depth:
        if y == a:
            return acc, 0.0
        if y == b:
            return acc + mass, 0.0
        sym = None
        for i, (u, v) in enumerate(pre, start=1):
            if u <= y <= v:
                sym = i
                break
        if sym is None:
            # gap: branches whose preimage window lies left of y escape up
            up = sum(p[i] for i, (_, v) in enumerate(pre, start=1) if v < y)
            return acc + mass * up, 0.0
        acc += mass * p.left_mass(sym)
        mass *= p[sym]
        y = system.branch(sym)(y)
        depth += 1
    return acc, float(mass)


def cdf_values(system: IFSystem, p: ProbVector, xs, tol: float = 1e-12,
               max_depth: int = 100_000) -> np.ndarray:
    """Vectorised eval_cdf over an array of points (affine fast path)."""
    xs = np.asarray(xs, dtype=float)
    if not system.is_affine:
        return np.array([float(eval_cdf(system, p, float(x), tol)[0])
                         for x in xs.ravel()]).reshape(xs.shape)
    out, _, _, _ = _orbit_tables(system, p, xs.ravel(), tol=tol,
                                 max_depth=max_depth, keep_steps=False)
    return out.reshape(xs.shape)


def _orbit_tables(system: IFSystem, p: ProbVector, xs: np.ndarray,
                  tol: float, max_depth: int, keep_steps: bool,
                  n_steps: Optional[int] = None):
    """Shared vectorised coding walk for affine systems.

    Returns (acc, mass, y, snapshots); acc accumulates the escaping-up mass,
    mass the undecided cylinder mass, y the current orbit positions.  With
    keep_steps=True, snapshots is a list of (acc, mass, y) copies after each
    of n_steps steps, which lets callers reconstruct every operator iterate
    of a ramp function exactly.
    """
    a, b = attractor_hull(system)
    a, b = float(a), float(b)
    slopes = np.array([float(br.slope) for br in system.branches])
    intercepts = np.array([float(br.intercept) for br in system.branches])
    pre = hull_preimages(system)
    u = np.array([float(lo) for lo, _ in pre])
    v = np.array([float(hi) for _, hi in pre])
    weights = np.array([float(w) for w in p.weights])
    left_mass = np.concatenate([[0.0], np.cumsum(weights)[:-1]])

    y = xs.astype(float).copy()
    acc = np.zeros_like(y)
    mass = np.ones_like(y)
    acc[y <= a] = 0.0
    mass[y <= a] = 0.0
    acc[y >= b] = 1.0
    mass[y >= b] = 0.0

    snapshots = []
    steps = n_steps if n_steps is not None else max_depth
    for _ in range(steps):
        # orbits parked on a hull endpoint are fully decided: everything
        # below a drifts down, everything at b drifts up with the remaining
        # mass (ramp values there are exactly 0 and 1, so snapshots agree)
        park_lo = mass > 0
        np.logical_and(park_lo, y == a, out=park_lo)
        mass[park_lo] = 0.0
        park_hi = mass > 0
        np.logical_and(park_hi, y == b, out=park_hi)
        acc[park_hi] += mass[park_hi]
        mass[park_hi] = 0.0

        active = mass > (0.0 if keep_steps else tol)
        if not active.any() and not keep_steps:
            break
        ya = y[active]
        if ya.size:
            inside = (u[:, None] <= ya) & (ya <= v[:, None])
            has = inside.any(axis=0)
            sym = np.argmax(inside, axis=0)  # min index wins at ties
            escaped_up = (v[:, None] < ya).sum(axis=0)

            add = np.where(has, left_mass[sym], np.cumsum(weights)[
                np.maximum(escaped_up - 1, 0)] * (escaped_up > 0))
            acc_a = acc[active] + mass[active] * add
            mass_a = mass[active] * np.where(has, weights[sym], 0.0)
            y_a = np.where(has, slopes[sym] * ya + intercepts[sym], ya)
            acc[active] = acc_a
            mass[active] = mass_a
            y[active] = y_a
        if keep_steps:
            snapshots.append((acc.copy(), mass.copy(), y.copy()))
        if not keep_steps and not (mass > tol).any():
            break
    return acc, mass, y, snapshots


def cdf_grid(system: IFSystem, p: ProbVector, size: int = 4097,
             margin: float = 0.25, tol: float = 1e-13) -> GridFunction:
    nodes = uniform_grid(system, size, margin)
    return GridFunction(nodes, cdf_values(system, p, nodes, tol=tol),
                        boundary_left=0.0, boundary_right=1.0)


# ---------------------------------------------------------------------------
# operator application and iteration


def apply_transition(system: IFSystem, p: ProbVector,
                     h: GridFunction) -> GridFunction:
    """One averaging step (M h)(x) = sum_i p_i h(f_i(x)) on the grid."""
    new = np.zeros_like(h.values)
    for i in system.symbols():
        br = system.branch(i)
        if br.is_affine:
            fx = float(br.slope) * h.nodes + float(br.intercept)
        else:
            fx = np.array([br(x) for x in h.nodes])
        new += float(p[i]) * h(fx)
    return h.with_values(new)


@dataclass(frozen=True)
class ConvergenceDiagnostics:
    residuals: np.ndarray      # sup distance to the predicted limit per step
    rate: float                # fitted geometric decay factor
    r_squared: float
    floor: float               # residual plateau set by grid resolution
    n_fit: int                 # number of leading steps used in the fit
    diverged: bool


def iterate_transition(system: IFSystem, p: ProbVector, h0: GridFunction,
                       n_max: int = 80,
                       limit: Optional[GridFunction] = None) -> ConvergenceDiagnostics:
    """Iterate the operator from h0 and compare against the predicted limit
    (h0(+inf) - h0(-inf)) * cdf + h0(-inf).

    The residual sequence decays geometrically until it hits the resolution
    floor of the grid; the decay factor is fitted on the pre-floor segment.
    """
    if limit is None:
        limit = GridFunction(h0.nodes, cdf_values(system, p, h0.nodes, tol=1e-14),
                             boundary_left=0.0, boundary_right=1.0)
    lim_vals = (h0.boundary_right - h0.boundary_left) * limit.values \
        + h0.boundary_left
    h = h0
    residuals = []
    for _ in range(n_max):
        h = apply_transition(system, p, h)
        residuals.append(float(np.max(np.abs(h.values - lim_vals))))
    residuals = np.array(residuals)

    floor = float(residuals.min())
    above = residuals > max(10 * floor, 1e-300)
    n_fit = int(np.argmin(above)) if not above.all() else len(residuals)
    n_fit = max(n_fit, 2)
    ns = np.arange(1, n_fit + 1)
    logr = np.log(residuals[:n_fit])
    slope, intercept = np.polyfit(ns, logr, 1)
    pred = slope * ns + intercept
    ss_res = float(np.sum((logr - pred) ** 2))
    ss_tot = float(np.sum((logr - logr.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    diverged = bool(residuals[-1] > residuals[0] * 10)
    return ConvergenceDiagnostics(residuals=residuals, rate=float(math.exp(slope)),
                                  r_squared=r2, floor=floor, n_fit=n_fit,
                                  diverged=diverged)


# ---------------------------------------------------------------------------
# Hoelder seminorm over grids


def holder_seminorm(h: GridFunction, alpha: float, mode: str = "pairs",
                    include_boundary: bool = True, block: int = 512) -> float:
    """Largest ratio |h(x) - h(y)| / d(x, y)^alpha over grid node pairs.

    mode "pairs" scans all pairs in blocks, mode "adjacent" only neighbours
    (a fast lower bound).  The two virtual boundary points at plus/minus
    infinity join the scan unless include_boundary is False.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    pos = np.array([compactify(x) for x in h.nodes])
    vals = h.values
    if include_boundary:
        pos = np.concatenate([[-1.0], pos, [1.0]])
        vals = np.concatenate([[h.boundary_left], h.values, [h.boundary_right]])
    best = 0.0
    if mode == "adjacent":
        dv = np.abs(np.diff(vals))
        dd = np.diff(pos)
        good = dd > 0
        if good.any():
            best = float(np.max(dv[good] / dd[good] ** alpha))
        return best
    if mode != "pairs":
        raise ValueError(f"unknown mode {mode!r}")
    n = pos.size
    for start in range(0, n - 1, block):
        stop = min(start + block, n - 1)
        # pairs (i, j) with i in [start, stop), j > i
        pi = pos[start:stop, None]
        vi = vals[start:stop, None]
        dd = pos[None, :] - pi
        dv = np.abs(vals[None, :] - vi)
        mask = dd > 0
        if mask.any():
            ratios = dv[mask] / dd[mask] ** alpha
            m = float(ratios.max())
            if m > best:
                best = m
    return best


# ---------------------------------------------------------------------------
# spectral gap probe


@dataclass(frozen=True)
class GapProbeReport:
    alpha: float
    norms: np.ndarray          # seminorm estimates of the iterates, per step
    sup_norms: np.ndarray
    slope: float               # fitted slope of log norms over the last half
    slope_stderr: float
    verdict: str               # "bounded" | "growing" | "inconclusive"
    alpha_minus_hint: Optional[float] = None


def _ramp(nodes: np.ndarray, a: float, b: float) -> np.ndarray:
    u = np.clip((nodes - a) / (b - a), 0.0, 1.0)
    return 0.5 * (1 - np.cos(np.pi * u))


def gap_probe(system: IFSystem, p: ProbVector, alpha: float, n_max: int = 60,
              grid_size: int = 8193, margin: float = 0.25,
              probe_words: int = 64, seed: int = 0) -> GapProbeReport:
    """Track the alpha-seminorm of operator iterates of a smooth ramp.

    The iterates of the ramp are evaluated exactly through the coding walk
    (no interpolation), so the seminorm estimate combines three probe
    families: adjacent and subsampled node pairs of the grid, and endpoint
    pairs of depth-n cylinders whose scale shrinks with the iterate, picked
    per step as the heaviest mass-to-diameter words among constant and
    seeded random words.  On a fixed grid alone the estimate would stall at
    the grid scale and growth beyond it would be invisible.

    The verdict comes from the fitted slope of log(seminorm) against n over
    the last half of the run: bounded when |slope| < 1e-3, growing when
    slope > 5e-3 with a positive margin over its standard error.
    """
    if not system.is_affine:
        raise NotImplementedError("gap probe requires affine branches")
    rng = np.random.default_rng(np.random.Philox(key=seed))
    a, b = attractor_hull(system)
    a, b = float(a), float(b)
    nodes = uniform_grid(system, grid_size, margin)
    ramp0 = _ramp(nodes, a, b)

    # exact iterate values at the nodes via the coding walk
    acc0, mass0, y0, snaps = _orbit_tables(
        system, p, nodes, tol=0.0, max_depth=n_max, keep_steps=True,
        n_steps=n_max)

    pos = np.array([compactify(x) for x in nodes])
    sub = np.linspace(0, nodes.size - 1, 257).astype(int)
    log_weights = np.log(np.array([float(w) for w in p.weights]))
    log_slopes = np.log(np.array([float(br.slope) for br in system.branches]))
    s_count = system.branch_count

    words = None
    if probe_words > 0:
        words = rng.integers(1, s_count + 1, size=(probe_words, n_max))

    norms = np.zeros(n_max)
    sups = np.zeros(n_max)
    for n in range(1, n_max + 1):
        acc, mass, y = snaps[n - 1]
        vals = acc + mass * _ramp(y, a, b)
        sups[n - 1] = float(np.max(np.abs(vals)))

        best = _pair_scan(pos, vals, alpha, sub)
        best = max(best, _cylinder_probe_max(
            system, p, alpha, n, log_weights, log_slopes, words))
        norms[n - 1] = best

    half = n_max // 2
    ns = np.arange(half + 1, n_max + 1)
    logv = np.log(norms[half:])
    slope, stderr = _ls_slope(ns, logv)
    if abs(slope) < 1e-3:
        verdict = "bounded"
    elif slope > 5e-3 and slope - 2 * stderr > 0:
        verdict = "growing"
    else:
        verdict = "inconclusive"
    return GapProbeReport(alpha=alpha, norms=norms, sup_norms=sups,
                          slope=float(slope), slope_stderr=float(stderr),
                          verdict=verdict)


def _pair_scan(pos, vals, alpha, sub):
    dv = np.abs(np.diff(vals))
    dd = np.diff(pos)
    good = dd > 0
    best = float(np.max(dv[good] / dd[good] ** alpha)) if good.any() else 0.0
    ps, vs = pos[sub], vals[sub]
    dd = ps[None, :] - ps[:, None]
    dv = np.abs(vs[None, :] - vs[:, None])
    mask = dd > 0
    if mask.any():
        best = max(best, float((dv[mask] / dd[mask] ** alpha).max()))
    # virtual boundary points at minus/plus infinity
    left = np.abs(vs - 0.0) / (ps + 1.0) ** alpha
    right = np.abs(1.0 - vs) / (1.0 - ps) ** alpha
    best = max(best, float(left.max()), float(right.max()))
    return best


def _cylinder_probe_max(system, p, alpha, n, log_weights, log_slopes, words):
    """Largest mass/diameter^alpha ratio over probe words of length n.

    The operator iterate changes across the cylinder of a depth-n word by
    exactly the word's mass, so each word gives a certified pair ratio.
    Logs keep deep cylinders alive long after their endpoints collide in
    float arithmetic.
    """
    diam_o = math.log(float(system.open_set[1] - system.open_set[0]))
    best = -math.inf
    candidates = []
    for i in system.symbols():
        candidates.append([i] * n)
    if words is not None:
        candidates.extend(words[:, :n].tolist())
    for w in candidates:
        idx = np.asarray(w) - 1
        log_mass = float(log_weights[idx].sum())
        log_diam = float(-log_slopes[idx].sum()) + diam_o
        lo, hi = cylinder(system, w)
        factor = compactified_gap_factor(float(lo), float(hi))
        log_ratio = log_mass - alpha * (log_diam + math.log(factor))
        best = max(best, log_ratio)
    return math.exp(best)


def _ls_slope(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = xs.size
    xm, ym = xs.mean(), ys.mean()
    sxx = float(np.sum((xs - xm) ** 2))
    slope = float(np.sum((xs - xm) * (ys - ym)) / sxx)
    resid = ys - (ym + slope * (xs - xm))
    var = float(np.sum(resid ** 2)) / max(n - 2, 1)
    stderr = math.sqrt(var / sxx) if sxx > 0 else math.inf
    return slope, stderr


def seminorm_refinement_sweep(make_grid, alpha: float, sizes) -> list:
    """Seminorm of the same function sampled at a ladder of grid sizes.

    make_grid maps a node count to a GridFunction.  A bounded seminorm shows
    up as a stabilising sweep; unbounded growth keeps climbing with each
    refinement.
    """
    return [holder_seminorm(make_grid(size), alpha) for size in sizes]
