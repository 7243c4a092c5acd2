"""Pointwise regularity probes for the limit cdf.

Two estimators for the local exponent at a coded point: the dynamical one,
a ratio of Birkhoff sums along the coding (exact for affine branches), and
the empirical one, a log-log oscillation fit over shrinking balls around
the point.  A sampler draws codings from an equilibrium weight vector so
the two estimators can be compared against the Legendre prediction across
inverse temperatures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .ifs import IFSystem, ProbVector, compactified_distance, cylinder, \
    ergodic_sums, pi_approx
from .thermo import PressureCurve, gibbs_weights, spectrum_point


@dataclass(frozen=True)
class ExponentTrace:
    word: tuple
    ratios: tuple               # Birkhoff-sum ratios, one per prefix length
    boundary_distances: tuple   # orbit-point distance to the open-set boundary
    liminf_estimate: float      # min ratio over the back half of the prefixes


def dyn_exponent(system: IFSystem, p: ProbVector, word) -> ExponentTrace:
    """Dynamical exponent estimate along a finite coding.

    The k-th ratio divides the weight sum by the log-derivative sum over the
    first k symbols; the liminf estimate takes the worst ratio over prefix
    lengths in [n/2, n].  Orbit points are recovered from tail cylinders
    (stable under the contractions) rather than by iterating the expanding
    map forward, and their distances to the open-set boundary are reported
    as an overlap diagnostic.
    """
    word = tuple(int(w) for w in word)
    n = len(word)
    if n == 0:
        raise ValueError("empty coding")
    s_phi, s_psi = ergodic_sums(system, p, word)
    ratios = tuple(sp / sf for sf, sp in zip(s_phi, s_psi))

    lo, hi = system.open_set
    dists = []
    for k in range(n):
        tail = word[k:]
        y, _ = pi_approx(system, tail)
        dists.append(min(compactified_distance(y, lo),
                         compactified_distance(y, hi)))

    back = range(max(1, math.ceil(n / 2)), n + 1)
    liminf = min(ratios[k - 1] for k in back)
    return ExponentTrace(word=word, ratios=ratios,
                         boundary_distances=tuple(dists),
                         liminf_estimate=liminf)


@dataclass(frozen=True)
class EmpiricalExponent:
    x: float
    scales: tuple
    oscillations: tuple
    ratios: tuple       # log osc / log r per retained scale
    slope: float        # least-squares slope of log osc against log r
    window_min: float   # min ratio over the finest half of the scales
    dropped: tuple      # scales whose oscillation fell at or below the floor


def emp_exponent(evaluate: Callable, x: float, scales: Sequence[float],
                 points_per_scale: int = 33,
                 floor: float = 1e-13) -> EmpiricalExponent:
    """Empirical exponent from oscillations of `evaluate` near x.

    Each ball of radius r is probed with a two-sided geometric cloud of at
    least `points_per_scale` points spanning three decades below r; the
    oscillation is the largest deviation from the centre value.  Scales
    whose oscillation cannot be distinguished from the evaluator's error
    floor are dropped before fitting.
    """
    scales = sorted((float(r) for r in scales), reverse=True)
    if not scales:
        raise ValueError("no scales given")
    m = max(2, points_per_scale // 2)
    fx = float(np.asarray(evaluate(np.array([x])))[0])

    used, oscs, dropped = [], [], []
    for r in scales:
        offs = np.geomspace(r * 1e-3, r, m)
        cloud = np.concatenate((x - offs, x + offs))
        vals = np.asarray(evaluate(cloud), dtype=float)
        osc = float(np.max(np.abs(vals - fx)))
        if osc <= floor:
            dropped.append(r)
            continue
        used.append(r)
        oscs.append(osc)

    if len(used) < 2:
        raise ValueError("fewer than two scales survive the error floor; "
                         "raise the scales or lower the floor")
    logs_r = np.log(used)
    logs_o = np.log(oscs)
    slope = float(np.polyfit(logs_r, logs_o, 1)[0])
    ratios = tuple(lo / lr for lr, lo in zip(logs_r, logs_o))
    fine = ratios[len(ratios) // 2:]
    return EmpiricalExponent(x=float(x), scales=tuple(used),
                             oscillations=tuple(oscs), ratios=ratios,
                             slope=slope, window_min=min(fine),
                             dropped=tuple(dropped))


@dataclass(frozen=True)
class TypicalSamples:
    beta: float
    alpha_predicted: float
    words: tuple
    points: tuple
    seed: int


def sample_typical(system: IFSystem, p: ProbVector, beta: float,
                   word_len: int = 60, count: int = 32,
                   seed: int = 0) -> TypicalSamples:
    """Draw codings from the equilibrium weights at this temperature.

    Symbols are iid under the Gibbs branch weights, so the drawn points are
    typical for the corresponding exponent level set; the predicted
    exponent is the negated pressure slope.  The generator is a counter
    based Philox keyed by `seed`, echoed back for reproducibility.
    """
    q, t_prime = gibbs_weights(system, p, beta)
    rng = np.random.Generator(np.random.Philox(seed))
    syms = np.array(system.symbols())
    draws = rng.choice(syms, size=(count, word_len), p=q)
    words = tuple(tuple(int(s) for s in row) for row in draws)
    points = tuple(pi_approx(system, w)[0] for w in words)
    return TypicalSamples(beta=float(beta), alpha_predicted=-t_prime,
                          words=words, points=points, seed=int(seed))


def spectrum_experiment(system: IFSystem, p: ProbVector,
                        betas: Sequence[float], word_len: int = 60,
                        count: int = 32, seed: int = 0,
                        curve: Optional[PressureCurve] = None,
                        evaluate: Optional[Callable] = None,
                        scales: Optional[Sequence[float]] = None) -> list:
    """Compare predicted exponents with sampled estimates per temperature.

    Returns one row per beta with the Legendre prediction, dynamical
    statistics over the sampled codings, and (when an evaluator is given)
    empirical statistics at the sampled points.  Rows are plain dicts ready
    for CSV serialisation.
    """
    if curve is None:
        curve = PressureCurve(system, p)
    if scales is None:
        scales = np.geomspace(1e-6, 1e-2, 9)
    rows = []
    for i, beta in enumerate(betas):
        samples = sample_typical(system, p, float(beta), word_len=word_len,
                                 count=count, seed=seed + i)
        dyn = np.array([dyn_exponent(system, p, w).liminf_estimate
                        for w in samples.words])
        if evaluate is not None:
            emp = np.array([emp_exponent(evaluate, x, scales).slope
                            for x in samples.points])
            emp_mean, emp_sigma = float(emp.mean()), float(emp.std())
        else:
            emp_mean = emp_sigma = float("nan")
        g = spectrum_point(curve, samples.alpha_predicted).g
        rows.append({
            "beta": float(beta),
            "alpha_pred": samples.alpha_predicted,
            "g": g,
            "dyn_mean": float(dyn.mean()),
            "dyn_sigma": float(dyn.std()),
            "emp_mean": emp_mean,
            "emp_sigma": emp_sigma,
            "count": int(count),
            "seed": int(seed + i),
        })
    return rows
