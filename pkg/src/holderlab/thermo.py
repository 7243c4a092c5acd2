"""Pressure curve and Legendre spectrum of the weight/geometry pair.

Two Birkhoff potentials drive the multifractal analysis: phi, minus the log
branch derivative along the orbit, and psi, the log branch weight.  For each
inverse-temperature beta there is a unique t with vanishing topological
pressure for t*phi + beta*psi; the map beta -> t(beta) is convex and
decreasing, its value at 0 is the attractor dimension, and the Legendre
transform of its negative gives the dimension spectrum of pointwise
regularity exponents of the limit cdf.

Affine systems evaluate the pressure in closed form (the potentials depend
only on the first symbol); other systems fall back to a cylinder sandwich.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .ifs import IFSystem, ProbVector, cylinder

_BETA_BRACKET = 60.0


def _log_weights_slopes(system: IFSystem, p: ProbVector):
    lw = np.array([math.log(float(w)) for w in p.weights])
    ls = np.array([math.log(float(b.slope)) for b in system.branches])
    return lw, ls


def pressure(system: IFSystem, p: ProbVector, t: float, beta: float,
             level: int = 12):
    """Topological pressure of t*phi + beta*psi, as a (lower, upper) pair.

    Affine systems are exact and return equal bounds.  Otherwise the
    pressure is sandwiched through cylinder sums at the given depth
    (capped at 18), using the derivative range over each cylinder.
    """
    if system.is_affine:
        lw, ls = _log_weights_slopes(system, p)
        val = _logsumexp(beta * lw - t * ls)
        return val, val
    level = min(int(level), 18)
    lo, hi = _sandwich(system, p, t, beta, level)
    return lo, hi


def _logsumexp(v):
    m = float(np.max(v))
    return m + math.log(float(np.sum(np.exp(v - m))))


def _sandwich(system, p, t, beta, level):
    logp = [math.log(float(p[i])) for i in system.symbols()]
    sup_terms, inf_terms = [], []

    def walk(word, lo_sum, hi_sum, psi_sum):
        if len(word) == level:
            sup_terms.append(t * hi_sum + beta * psi_sum)
            inf_terms.append(t * lo_sum + beta * psi_sum)
            return
        for i in system.symbols():
            w = word + (i,)
            clo, chi = cylinder(system, w)
            br = system.branch(i)
            pts = (clo, 0.5 * (clo + chi), chi)
            dmin = min(br.derivative(x) for x in pts)
            dmax = max(br.derivative(x) for x in pts)
            walk(w, lo_sum - math.log(dmax), hi_sum - math.log(dmin),
                 psi_sum + logp[i - 1])

    walk((), 0.0, 0.0, 0.0)
    # phi < 0, so t >= 0 widens one way and t < 0 the other; the walk above
    # already folded t into the sums, so just aggregate
    up = _logsumexp(np.array(sup_terms)) / level
    dn = _logsumexp(np.array(inf_terms)) / level
    return min(dn, up), max(dn, up)


def solve_pressure_root(system: IFSystem, p: ProbVector, beta: float,
                        tol: float = 1e-15, level: int = 12) -> float:
    """The unique t with zero pressure at this beta.

    The pressure strictly decreases in t, so the root is found by bracketed
    root finding; for affine systems the bracket comes from per-branch
    ratios and the result is limited only by float resolution.
    """
    if system.is_affine:
        lw, ls = _log_weights_slopes(system, p)
        ratios = beta * lw / ls
        lo = float(np.min(ratios)) - 1e-9
        hi = float(np.max(ratios)) + math.log(len(lw)) / float(np.min(ls)) + 1e-9
        f = lambda t: pressure(system, p, t, beta)[0]
    else:
        f = lambda t: 0.5 * sum(pressure(system, p, t, beta, level))
        lo, hi = -64.0, 64.0
        while f(lo) < 0:
            lo *= 2
        while f(hi) > 0:
            hi *= 2
    return float(brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps))


def gibbs_weights(system: IFSystem, p: ProbVector, beta: float,
                  t: Optional[float] = None):
    """Equilibrium branch weights at beta and the slope t'(beta).

    Affine only: the equilibrium state is the Bernoulli measure with weights
    proportional to p_i^beta / a_i^t(beta), and the derivative of the
    pressure root is the ratio of the potential averages under it.
    """
    if not system.is_affine:
        raise NotImplementedError("equilibrium weights need affine branches")
    if t is None:
        t = solve_pressure_root(system, p, beta)
    lw, ls = _log_weights_slopes(system, p)
    logq = beta * lw - t * ls
    logq -= _logsumexp(logq)
    q = np.exp(logq)
    q /= q.sum()
    t_prime = float(np.dot(q, lw) / np.dot(q, ls))
    return q, t_prime


@dataclass(frozen=True)
class Endpoints:
    alpha_minus: float
    alpha_plus: float
    alpha_zero: float
    delta: float
    surrogate_spread: float = 0.0  # disagreement of the large-beta probes


def alpha_endpoints(system: IFSystem, p: ProbVector) -> Endpoints:
    """Extremal and typical regularity exponents plus the attractor dimension.

    For affine systems the endpoints are the extreme per-branch ratios
    log(1/p_i)/log(slope_i); the pressure-slope probes at beta = +-50 and
    +-100 are still evaluated and their spread reported as a sanity check.
    """
    delta = solve_pressure_root(system, p, 0.0)
    _, tp0 = gibbs_weights(system, p, 0.0, t=delta)
    alpha_zero = -tp0

    probes = {}
    for b in (50.0, 100.0):
        _, tp = gibbs_weights(system, p, b)
        probes[b] = -tp
        _, tp = gibbs_weights(system, p, -b)
        probes[-b] = -tp
    spread = max(abs(probes[50.0] - probes[100.0]),
                 abs(probes[-50.0] - probes[-100.0]))

    lw, ls = _log_weights_slopes(system, p)
    ratios = -lw / ls
    return Endpoints(alpha_minus=float(np.min(ratios)),
                     alpha_plus=float(np.max(ratios)),
                     alpha_zero=alpha_zero, delta=delta,
                     surrogate_spread=spread)


class PressureCurve:
    """Memoising wrapper around the pressure root and its slope.

    The cache is append-only; concurrent readers are safe under the usual
    single-interpreter dict guarantees.
    """

    def __init__(self, system: IFSystem, p: ProbVector):
        self.system = system
        self.p = p
        self._t: dict = {}
        self._tp: dict = {}
        self._endpoints: Optional[Endpoints] = None

    def t(self, beta: float) -> float:
        b = float(beta)
        if b not in self._t:
            self._t[b] = solve_pressure_root(self.system, self.p, b)
        return self._t[b]

    def t_prime(self, beta: float) -> float:
        b = float(beta)
        if b not in self._tp:
            _, tp = gibbs_weights(self.system, self.p, b, t=self.t(b))
            self._tp[b] = tp
        return self._tp[b]

    @property
    def endpoints(self) -> Endpoints:
        if self._endpoints is None:
            self._endpoints = alpha_endpoints(self.system, self.p)
        return self._endpoints

    def samples(self, betas: Sequence[float]):
        return [(float(b), self.t(b), self.t_prime(b)) for b in betas]


@dataclass(frozen=True)
class SpectrumPoint:
    alpha: float
    g: float
    beta_argmin: float
    empty: bool = False       # level set provably empty at this exponent
    clamped: bool = False     # solver hit the beta bracket


def spectrum_point(curve: PressureCurve, alpha: float,
                   out_tol: float = 1e-9) -> SpectrumPoint:
    """One Legendre point g(alpha) = inf over beta of t(beta) + beta*alpha.

    The minimiser solves t'(beta) = -alpha; t' increases with beta, so the
    root is bracketed in [-60, 60] and clamped to the bracket when alpha
    sits within out_tol of an endpoint.  Exponents strictly outside the
    attainable band give an empty-level-set marker.  Rigid systems (t'
    constant) tie-break to beta = 0.
    """
    ep = curve.endpoints
    a = float(alpha)
    if a < ep.alpha_minus - out_tol or a > ep.alpha_plus + out_tol:
        return SpectrumPoint(alpha=a, g=float("nan"), beta_argmin=float("nan"),
                             empty=True)
    B = _BETA_BRACKET
    f = lambda b: curve.t_prime(b) + a
    f0 = f(0.0)
    if abs(f0) <= 1e-13:
        return SpectrumPoint(alpha=a, g=curve.t(0.0), beta_argmin=0.0)
    flo, fhi = f(-B), f(B)
    if fhi <= 0:  # alpha at or below the reachable slope at +B
        return SpectrumPoint(alpha=a, g=curve.t(B) + B * a, beta_argmin=B,
                             clamped=True)
    if flo >= 0:
        return SpectrumPoint(alpha=a, g=curve.t(-B) - B * a, beta_argmin=-B,
                             clamped=True)
    beta = float(brentq(f, -B, B, xtol=1e-12, rtol=4 * np.finfo(float).eps))
    return SpectrumPoint(alpha=a, g=curve.t(beta) + beta * a, beta_argmin=beta)


def spectrum(system: IFSystem, p: ProbVector, alphas: Sequence[float],
             curve: Optional[PressureCurve] = None) -> list:
    """Legendre spectrum over a grid of exponents."""
    if curve is None:
        curve = PressureCurve(system, p)
    return [spectrum_point(curve, a) for a in alphas]
