"""Weight-parameter derivatives of the limit cdf and their matrix cocycle.

The limit cdf depends on the free branch weights p_1 .. p_s (the last weight
is 1 minus their sum).  Differentiating the self-consistency of the cdf in
those weights produces a family of fractal profiles indexed by a multi-index
over the free weights; the first-order one is a generalised Takagi curve.
Increments of the whole family across a cylinder are carried by a product of
sparse step matrices along the word, one matrix per symbol, which is what
this module assembles.

Row and column indices of the matrices are multi-indices m with m <= n_max
componentwise, sorted by total order then lexicographically, which makes
every step matrix lower triangular with the bare weight on the diagonal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .ifs import IFSystem, ProbVector, attractor_hull, hull_preimages
from .transition import GridFunction, apply_transition, cdf_values, eval_cdf

# ---------------------------------------------------------------------------
# multi-index bookkeeping


def index_set(n_max: Sequence[int]) -> list:
    """Downward-closed box of multi-indices below n_max, sorted by weight."""
    ranges = [range(int(v) + 1) for v in n_max]
    idx = [tuple(t) for t in itertools.product(*ranges)]
    idx.sort(key=lambda t: (sum(t), t))
    return idx


def _positions(indices):
    return {m: k for k, m in enumerate(indices)}


# ---------------------------------------------------------------------------
# step matrices and their products


@dataclass(frozen=True)
class Cocycle:
    """Product of step matrices along a word, plus its index bookkeeping."""

    indices: tuple
    matrix: np.ndarray
    word: tuple
    normalized: bool

    def entry(self, row, col):
        pos = _positions(self.indices)
        return self.matrix[pos[tuple(row)], pos[tuple(col)]]


def step_matrix(symbol: int, p: ProbVector, n_max: Sequence[int]) -> np.ndarray:
    """One-symbol step matrix over the index box of n_max.

    For a free symbol i the rule is diag(p_i) plus n_i in column n - e_i;
    the last symbol gets diag(p_last) minus n_j in every column n - e_j,
    reflecting that the last weight moves opposite to each free one.
    """
    s = len(n_max)
    if not 1 <= symbol <= s + 1:
        raise ValueError(f"symbol {symbol} out of range for {s} free weights")
    indices = index_set(n_max)
    pos = _positions(indices)
    rational = p.is_rational
    d = len(indices)
    mat = np.zeros((d, d), dtype=object if rational else float)
    w = p[symbol] if rational else float(p[symbol])
    for n in indices:
        i = pos[n]
        mat[i, i] = w
        if symbol <= s:
            j = symbol - 1
            if n[j] >= 1:
                below = n[:j] + (n[j] - 1,) + n[j + 1:]
                mat[i, pos[below]] = (Fraction(n[j]) if rational else float(n[j]))
        else:
            for j in range(s):
                if n[j] >= 1:
                    below = n[:j] + (n[j] - 1,) + n[j + 1:]
                    mat[i, pos[below]] = (-Fraction(n[j]) if rational
                                          else -float(n[j]))
    return mat


def cocycle_matrix(word: Sequence[int], p: ProbVector, n_max: Sequence[int],
                   normalized: bool = False) -> Cocycle:
    """Ordered product of step matrices along the word.

    The normalized variant divides each factor by its weight, keeping unit
    diagonal; entries then grow only polynomially in the word length, so
    long products stay finite where the raw product would underflow.
    """
    word = tuple(word)
    if not word:
        raise ValueError("empty word")
    steps = {}
    for sym in set(word):
        m = step_matrix(sym, p, n_max)
        if normalized:
            w = p[sym] if p.is_rational else float(p[sym])
            m = m / w if not p.is_rational else _divide_object(m, w)
        steps[sym] = m
    out = steps[word[0]]
    for sym in word[1:]:
        out = np.dot(out, steps[sym])
    return Cocycle(indices=tuple(index_set(n_max)), matrix=out, word=word,
                   normalized=normalized)


def _divide_object(mat, w):
    out = mat.copy()
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            if out[i, j]:
                out[i, j] = out[i, j] / w
    return out


# ---------------------------------------------------------------------------
# cylinder increments


@dataclass(frozen=True)
class IncrementVector:
    """Differences across one cylinder for the whole derivative family.

    entry(n) is value(left endpoint) - value(right endpoint) of the order-n
    profile; rise(n) the opposite sign.  For the zero order the rise is the
    cylinder mass.
    """

    indices: tuple
    entries: np.ndarray
    word: tuple

    def entry(self, n):
        return self.entries[_positions(self.indices)[tuple(n)]]

    def rise(self, n):
        return -self.entry(n)


def cylinder_increment(system: IFSystem, p: ProbVector, word: Sequence[int],
                       n_max: Optional[Sequence[int]] = None) -> IncrementVector:
    """Increment vector of the derivative family across the word's cylinder.

    The base difference vector at the hull endpoints has -1 in the zero
    slot and 0 elsewhere (cdf drops from 1 to 0 going left), so the cylinder
    vector is minus the zero column of the word's step-matrix product.
    """
    if n_max is None:
        n_max = (2,) * (system.branch_count - 1)
    coc = cocycle_matrix(word, p, n_max, normalized=False)
    return IncrementVector(indices=coc.indices, entries=-coc.matrix[:, 0],
                           word=tuple(word))


# ---------------------------------------------------------------------------
# pointwise evaluation by telescoping cylinder rises


def eval_derivative_point(system: IFSystem, p: ProbVector, order: Sequence[int],
                          x, depth: int = 80, tol: float = 0.0,
                          growth_bound: Optional[float] = None):
    """Value of the order-n weight derivative of the cdf at x, with an error
    bound.

    Telescopes cylinder rises of all same-depth siblings left of the coding
    of x; the tail over the unresolved cylinder is bounded through the
    measured polynomial growth of normalized step products.  Points that
    land in a gap or park on a hull endpoint resolve exactly (the remaining
    contribution has closed form); otherwise the walk stops at ``depth`` or
    when the undecided mass falls below ``tol``.
    """
    order = tuple(int(v) for v in order)
    s = system.branch_count - 1
    if len(order) != s:
        raise ValueError(f"order needs {s} components, got {len(order)}")
    if sum(order) == 0:
        raise ValueError("zero order is the cdf itself; use eval_cdf")

    a, b = attractor_hull(system)
    rational = p.is_rational and system.is_rational
    zero = Fraction(0) if rational else 0.0
    if x <= a or x >= b:
        return zero, 0.0

    indices = index_set(order)
    pos = _positions(indices)
    row = pos[order]
    d = len(indices)
    steps = {i: step_matrix(i, p, order) for i in range(1, s + 2)}
    cols = {i: steps[i][:, 0].copy() for i in range(1, s + 2)}
    pre = hull_preimages(system)

    prefix = np.zeros((d, d), dtype=object if rational else float)
    for i in range(d):
        prefix[i, i] = Fraction(1) if rational else 1.0
    value = zero
    mass = Fraction(1) if rational else 1.0
    y = x
    for _ in range(depth):
        if y == a:
            return value, 0.0
        if y == b:
            tail = _parked_tail(steps[s + 1], cols, s, rational)
            return value + np.dot(prefix, tail)[row], 0.0
        sym = None
        for i, (u, v) in enumerate(pre, start=1):
            if u <= y <= v:
                sym = i
                break
        if sym is None:
            for i, (_, v) in enumerate(pre, start=1):
                if v < y:
                    value = value + np.dot(prefix, cols[i])[row]
            return value, 0.0
        for j in range(1, sym):
            value = value + np.dot(prefix, cols[j])[row]
        prefix = np.dot(prefix, steps[sym])
        mass *= p[sym]
        y = system.branch(sym)(y)
        if tol and float(mass) <= tol:
            break
    if growth_bound is None:
        growth_bound = growth_constant(system, p, order)
    err = growth_bound * float(mass) * max(depth, 1) ** sum(order)
    return value, err


def _parked_tail(step_last, cols, s, rational):
    """Solve (I - S) w = sum of free-symbol zero columns, S the last-symbol
    step; the remaining contribution of an orbit parked on the right hull
    endpoint is prefix @ w."""
    d = step_last.shape[0]
    c = np.zeros(d, dtype=object if rational else float)
    for j in range(1, s + 1):
        c = c + cols[j]
    m = -step_last.copy()
    for i in range(d):
        m[i, i] = m[i, i] + (Fraction(1) if rational else 1.0)
    # lower triangular in the sorted index order: forward substitution
    w = np.zeros(d, dtype=object if rational else float)
    for i in range(d):
        acc = c[i]
        for j in range(i):
            if m[i, j]:
                acc = acc - m[i, j] * w[j]
        w[i] = acc / m[i, i]
    return w


_GROWTH_CACHE: dict = {}


def growth_constant(system: IFSystem, p: ProbVector, n_max: Sequence[int],
                    words: int = 64, length: int = 64, seed: int = 11) -> float:
    """Measured constant K with |normalized product entries| <= K * k^|row|
    over an ensemble of random words of each length k.

    The polynomial envelope is a structural property of the normalized
    products; the constant itself is empirical and cached per system and
    weight vector.
    """
    key = (tuple(float(w) for w in p.weights), tuple(n_max),
           tuple((float(b.slope), float(b.intercept)) if b.is_affine else id(b)
                 for b in system.branches))
    if key in _GROWTH_CACHE:
        return _GROWTH_CACHE[key]
    rng = np.random.default_rng(np.random.Philox(key=seed))
    pf = p.as_floats()
    indices = index_set(n_max)
    weights = np.array([sum(m) for m in indices])
    s = len(n_max)
    steps = {i: step_matrix(i, pf, n_max) / float(pf[i]) for i in range(1, s + 2)}
    best = 1.0
    draws = rng.integers(1, s + 2, size=(words, length))
    for w in draws:
        prod = steps[int(w[0])]
        for k in range(1, length):
            ratios = np.abs(prod) / (k ** weights)[:, None]
            best = max(best, float(ratios.max()))
            prod = np.dot(prod, steps[int(w[k])])
        ratios = np.abs(prod) / (length ** weights)[:, None]
        best = max(best, float(ratios.max()))
    _GROWTH_CACHE[key] = best
    return best


# ---------------------------------------------------------------------------
# grid evaluation through the self-consistency equation


@dataclass(frozen=True)
class DerivativeGrid:
    grid: GridFunction
    order: tuple
    terms: int
    tail_estimate: float
    converged: bool


def derivative_grids(system: IFSystem, p: ProbVector, order: Sequence[int],
                     nodes: np.ndarray, terms: int = 80, tol: float = 1e-12,
                     cdf_tol: float = 1e-14) -> dict:
    """Grids of every derivative up to ``order`` via the averaged series.

    Each order-n profile solves profile = M profile + source, where M is the
    branch-averaging operator and the source couples one order lower through
    compositions with the branches.  The Neumann series of that equation is
    summed on the grid until terms die below tol or the budget runs out; the
    tail estimate extrapolates the last term geometrically.  Non-decaying
    terms mark the result as not converged.
    """
    order = tuple(int(v) for v in order)
    s = system.branch_count - 1
    if len(order) != s:
        raise ValueError(f"order needs {s} components, got {len(order)}")
    nodes = np.asarray(nodes, dtype=float)
    pf = p.as_floats()

    out = {}
    base = GridFunction(nodes, cdf_values(system, pf, nodes, tol=cdf_tol),
                        boundary_left=0.0, boundary_right=1.0)
    zero_order = (0,) * s
    out[zero_order] = DerivativeGrid(grid=base, order=zero_order, terms=0,
                                     tail_estimate=0.0, converged=True)
    for m in index_set(order):
        if m == zero_order:
            continue
        source = _source_grid(system, pf, m, out)
        total = source.values.copy()
        term = source
        sups = [float(np.max(np.abs(term.values)))]
        used = 1
        for _ in range(terms - 1):
            term = apply_transition(system, pf, term)
            total += term.values
            sups.append(float(np.max(np.abs(term.values))))
            used += 1
            if sups[-1] < tol:
                break
        tail, converged = _tail_estimate(sups, tol)
        out[m] = DerivativeGrid(
            grid=GridFunction(nodes, total, 0.0, 0.0), order=m, terms=used,
            tail_estimate=tail, converged=converged)
    return out


def eval_derivative_grid(system: IFSystem, p: ProbVector, order, nodes,
                         terms: int = 80, tol: float = 1e-12) -> DerivativeGrid:
    """Grid of the order-n weight derivative of the cdf (averaged series)."""
    return derivative_grids(system, p, order, nodes, terms, tol)[
        tuple(int(v) for v in order)]


def _source_grid(system, p, m, grids) -> GridFunction:
    s = system.branch_count - 1
    nodes = grids[(0,) * s].grid.nodes
    vals = np.zeros_like(nodes)
    last = system.branch(s + 1)
    for j in range(s):
        if m[j] == 0:
            continue
        below = grids[m[:j] + (m[j] - 1,) + m[j + 1:]].grid
        bj = system.branch(j + 1)
        if bj.is_affine:
            fj = float(bj.slope) * nodes + float(bj.intercept)
            fl = float(last.slope) * nodes + float(last.intercept)
        else:
            fj = np.array([bj(t) for t in nodes])
            fl = np.array([last(t) for t in nodes])
        vals += m[j] * (below(fj) - below(fl))
    return GridFunction(nodes, vals, 0.0, 0.0)


def _tail_estimate(sups, tol):
    if len(sups) < 3:
        return float("inf"), False
    r = max(sups[-1] / sups[-2] if sups[-2] > 0 else 0.0,
            sups[-2] / sups[-3] if sups[-3] > 0 else 0.0)
    if r >= 1.0:
        return float("inf"), False
    return sups[-1] * r / (1.0 - r), True


# ---------------------------------------------------------------------------
# finite-difference cross check


def fd_derivative(system: IFSystem, p: ProbVector, order: Sequence[int], xs,
                  h: float = 1e-4, tol: Optional[float] = None):
    """Central finite differences of the cdf in the free weights.

    Supports total order one and two (including mixed).  The evaluation
    tolerance defaults to a small multiple of h^(|order|+1) so stencil
    cancellation keeps clear of evaluator noise.
    """
    order = tuple(int(v) for v in order)
    s = system.branch_count - 1
    if len(order) != s:
        raise ValueError(f"order needs {s} components, got {len(order)}")
    total = sum(order)
    if tol is None:
        tol = min(1e-13, h ** (total + 1) * 1e-3)
    xs = np.asarray(xs, dtype=float)
    free = [float(w) for w in p.free]

    def T(shift):
        moved = [f + d for f, d in zip(free, shift)]
        return cdf_values(system, ProbVector.of(*moved), xs, tol=tol)

    if total == 1:
        k = order.index(1)
        e = [h if i == k else 0.0 for i in range(s)]
        ne = [-v for v in e]
        return (T(e) - T(ne)) / (2 * h)
    if total == 2 and 2 in order:
        k = order.index(2)
        e = [h if i == k else 0.0 for i in range(s)]
        ne = [-v for v in e]
        return (T(e) - 2 * T([0.0] * s) + T(ne)) / h ** 2
    if total == 2:
        k, l = [i for i, v in enumerate(order) if v == 1]
        def shift(sk, sl):
            return [sk * h if i == k else (sl * h if i == l else 0.0)
                    for i in range(s)]
        return (T(shift(1, 1)) - T(shift(1, -1))
                - T(shift(-1, 1)) + T(shift(-1, -1))) / (4 * h ** 2)
    raise NotImplementedError("finite differences cover total order <= 2")
