"""End-to-end gate: one test per advertised numerical contract.

Every test prints a single verdict line (collected into the terminal
summary by conftest) before asserting, so the full scoreboard is visible
even when an individual check fails.  Tolerances and time budgets are
pinned here and nowhere else.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np

from holderlab import (
    GridFunction,
    PressureCurve,
    ProbVector,
    affine_system,
    cdf_values,
    cocycle_matrix,
    conjugacy_residual,
    cylinder_increment,
    derivative_grids,
    emp_exponent,
    eval_cdf,
    fd_derivative,
    gap_probe,
    holder_seminorm,
    iterate_transition,
    pi_approx,
    solve_pressure_root,
    spectrum_point,
)

DYADIC = affine_system((2.0, 2.0), (0.0, -1.0), (0.0, 1.0))
TERNARY = affine_system((3.0, 3.0), (0.0, -2.0), (0.0, 1.0))

LOG43_LOG2 = math.log(4.0 / 3.0) / math.log(2.0)


def _verdict(report_line, idx, ok, detail, elapsed, budget):
    word = "PASS" if ok else "FAIL"
    report_line(f"criterion {idx:02d} {word}  {detail}  [{elapsed:.2f}s of {budget:.0f}s]")


def test_criterion_01_uniform_weights_give_identity(report_line):
    budget, t0 = 1.0, time.perf_counter()
    xs = np.linspace(0.0, 1.0, 4097)
    vals = cdf_values(DYADIC, ProbVector.of(0.5), xs, tol=0.0, max_depth=50)
    err = float(np.max(np.abs(vals - xs)))
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-12 and elapsed <= budget
    _verdict(report_line, 1, ok, f"identity cdf max err {err:.2e} (tol 1e-12)",
             elapsed, budget)
    assert err <= 1e-12
    assert elapsed <= budget


def test_criterion_02_dyadic_grid_matches_cylinder_mass(report_line):
    budget, t0 = 5.0, time.perf_counter()
    w = (Fraction(1, 4), Fraction(3, 4))

    def oracle(k):
        # cumulative mass of the cylinders left of k/1024, straight from the
        # binary digits, independent of the library's coding walk
        if k >= 1024:
            return Fraction(1)
        acc, mass = Fraction(0), Fraction(1)
        for j in range(9, -1, -1):
            bit = (k >> j) & 1
            if bit:
                acc += mass * w[0]
            mass *= w[bit]
        return acc

    expect = [oracle(k) for k in range(1025)]
    xs = np.arange(1025) / 1024.0
    vals = cdf_values(DYADIC, ProbVector.of(0.25), xs, tol=0.0, max_depth=64)
    dev = float(np.max(np.abs(vals - np.array([float(v) for v in expect]))))
    mono = bool(np.all(np.diff(vals) >= 0.0))

    rational = affine_system((Fraction(2), Fraction(2)),
                             (Fraction(0), Fraction(-1)),
                             (Fraction(0), Fraction(1)))
    pq = ProbVector(w)
    exact = all(eval_cdf(rational, pq, Fraction(k, 1024)) == (expect[k], 0)
                for k in range(1025))
    elapsed = time.perf_counter() - t0
    ok = dev <= 1e-14 and mono and exact and elapsed <= budget
    _verdict(report_line, 2, ok,
             f"float dev {dev:.2e} (tol 1e-14), monotone {mono}, rational exact {exact}",
             elapsed, budget)
    assert dev <= 1e-14
    assert mono
    assert exact
    assert elapsed <= budget


def test_criterion_03_series_matches_finite_differences(report_line):
    budget, t0 = 30.0, time.perf_counter()
    p = ProbVector.of(0.3)
    nodes = np.linspace(-0.5, 1.5, 2 ** 12 + 1)
    grid = derivative_grids(DYADIC, p, (1,), nodes, terms=80)[(1,)].grid
    idx = np.linspace(1126, 2970, 41).astype(int)  # interior nodes of (0, 1)
    xs, series = nodes[idx], grid.values[idx]
    dev = float(np.max(np.abs(series - fd_derivative(DYADIC, p, (1,), xs, h=1e-4))))
    dev_h = float(np.max(np.abs(series - fd_derivative(DYADIC, p, (1,), xs, h=5e-5))))
    ratio = dev / dev_h
    elapsed = time.perf_counter() - t0
    ok = dev <= 1e-5 and ratio >= 3.0 and elapsed <= budget
    _verdict(report_line, 3, ok,
             f"series vs fd dev {dev:.2e} (tol 1e-5), halving ratio {ratio:.2f} (>= 3)",
             elapsed, budget)
    assert dev <= 1e-5
    assert ratio >= 3.0
    assert elapsed <= budget


def test_criterion_04_derivatives_satisfy_recursion(report_line):
    budget, t0 = 10.0, time.perf_counter()
    p = ProbVector.of(0.25)
    nodes = np.linspace(-0.5, 1.5, 2 ** 12 + 1)
    grids = derivative_grids(DYADIC, p, (2,), nodes, terms=80)
    base = GridFunction(nodes, cdf_values(DYADIC, p, nodes, tol=1e-14), 0.0, 1.0)
    left, right = 2.0 * nodes, 2.0 * nodes - 1.0
    worst, all_ok = [], True
    for order, coeff, lower in (((1,), 1.0, base), ((2,), 2.0, grids[(1,)].grid)):
        cur = grids[order].grid
        averaged = 0.25 * cur(left) + 0.75 * cur(right)
        source = coeff * (lower(left) - lower(right))
        resid = float(np.max(np.abs(cur.values - averaged - source)))
        bound = 5.0 * cur.cell_oscillation()
        worst.append(f"order {order} resid {resid:.2e} (bound {bound:.2e})")
        all_ok &= resid <= bound
    elapsed = time.perf_counter() - t0
    ok = all_ok and elapsed <= budget
    _verdict(report_line, 4, ok, "; ".join(worst), elapsed, budget)
    assert all_ok
    assert elapsed <= budget


def test_criterion_05_pressure_normalisations(report_line):
    budget, t0 = 1.0, time.perf_counter()
    rng = np.random.Generator(np.random.Philox(7))
    worst_t1 = worst_moran = 0.0
    for _ in range(10):
        m = int(rng.integers(2, 5))
        while True:
            cuts = np.sort(rng.uniform(0.0, 1.0, size=m - 1))
            lengths = np.diff(np.concatenate(([0.0], cuts, [1.0])))
            if lengths.min() >= 0.08:
                break
        edges = np.concatenate(([0.0], cuts))
        slopes = 1.0 / lengths
        system = affine_system(tuple(slopes), tuple(-edges * slopes), (0.0, 1.0))
        while True:
            free = rng.uniform(0.05, 0.9, size=m - 1)
            if 0.05 <= 1.0 - free.sum() <= 0.95:
                break
        p = ProbVector.of(tuple(float(v) for v in free))
        worst_t1 = max(worst_t1, abs(solve_pressure_root(system, p, 1.0)))
        delta = solve_pressure_root(system, p, 0.0)
        worst_moran = max(worst_moran, abs(float(np.sum(slopes ** -delta)) - 1.0))
    d3 = solve_pressure_root(TERNARY, ProbVector.of(0.4), 0.0)
    err3 = abs(d3 - math.log(2.0) / math.log(3.0))
    elapsed = time.perf_counter() - t0
    ok = (worst_t1 <= 1e-13 and worst_moran <= 1e-12 and err3 <= 1e-12
          and elapsed <= budget)
    _verdict(report_line, 5, ok,
             f"|t(1)| <= {worst_t1:.1e} (tol 1e-13), Moran dev {worst_moran:.1e} "
             f"(tol 1e-12), ternary dim err {err3:.1e}",
             elapsed, budget)
    assert worst_t1 <= 1e-13
    assert worst_moran <= 1e-12
    assert err3 <= 1e-12
    assert elapsed <= budget


def test_criterion_06_spectrum_shape_and_duality(report_line):
    budget, t0 = 10.0, time.perf_counter()
    curve = PressureCurve(DYADIC, ProbVector.of(0.25))
    ep = curve.endpoints
    e_minus = abs(ep.alpha_minus - LOG43_LOG2)
    e_plus = abs(ep.alpha_plus - 2.0)
    e_peak = abs(spectrum_point(curve, ep.alpha_zero).g - 1.0)
    alphas = np.linspace(LOG43_LOG2 + 1e-3, 2.0 - 1e-3, 101)
    gs = np.array([spectrum_point(curve, float(a)).g for a in alphas])
    convexity = float(np.max(np.diff(gs, 2)))
    worst_dual = 0.0
    for b in np.linspace(-25.0, 25.0, 200):
        alpha = -curve.t_prime(float(b))
        direct = curve.t(float(b)) + float(b) * alpha
        worst_dual = max(worst_dual, abs(spectrum_point(curve, alpha).g - direct))
    elapsed = time.perf_counter() - t0
    ok = (e_minus <= 1e-10 and e_plus <= 1e-10 and ep.surrogate_spread <= 1e-6
          and e_peak <= 1e-9 and convexity <= 1e-8 and worst_dual <= 1e-9
          and elapsed <= budget)
    _verdict(report_line, 6, ok,
             f"endpoint errs {e_minus:.1e}/{e_plus:.1e}, peak err {e_peak:.1e}, "
             f"max second diff {convexity:.1e}, duality gap {worst_dual:.1e}",
             elapsed, budget)
    assert e_minus <= 1e-10
    assert e_plus <= 1e-10
    assert ep.surrogate_spread <= 1e-6
    assert e_peak <= 1e-9
    assert convexity <= 1e-8
    assert worst_dual <= 1e-9
    assert elapsed <= budget


def test_criterion_07_cocycle_structure_and_growth(report_line):
    budget, t0 = 30.0, time.perf_counter()
    pq = ProbVector((Fraction(1, 4), Fraction(3, 4)))
    closed_form = all(
        cocycle_matrix((1,) * k, pq, (1,), normalized=True).entry((1,), (0,)) == 4 * k
        for k in (1, 2, 3, 10, 100, 1000))

    rng = np.random.Generator(np.random.Philox(11))
    structure = True
    for _ in range(1000):
        word = tuple(int(v) for v in rng.integers(1, 3, size=12))
        mat = cocycle_matrix(word, pq, (2,), normalized=False).matrix
        mass = math.prod(pq[sym] for sym in word)
        structure &= mat[0, 1] == 0 and mat[0, 2] == 0 and mat[1, 2] == 0
        structure &= mat[0, 0] == mass and mat[1, 1] == mass and mat[2, 2] == mass

    pf = ProbVector.of(0.25)
    orders = ((0,), (1,), (2,))

    def worst_ratio(k):
        word = tuple(int(v) for v in rng.integers(1, 3, size=int(k)))
        mat = cocycle_matrix(word, pf, (2,), normalized=True).matrix
        return max(abs(float(mat[i, j])) / float(k) ** (orders[i][0] - orders[j][0])
                   for i in range(3) for j in range(i))

    k_fit = max(worst_ratio(k) for k in rng.integers(5, 101, size=300))
    k_check = max(worst_ratio(k) for k in rng.integers(500, 1001, size=300))
    elapsed = time.perf_counter() - t0
    ok = closed_form and structure and k_check <= k_fit and elapsed <= budget
    _verdict(report_line, 7, ok,
             f"closed form {closed_form}, triangular and mass diagonal {structure}, "
             f"growth bound fitted {k_fit:.2f} holds at long words ({k_check:.2f})",
             elapsed, budget)
    assert closed_form
    assert structure
    assert k_check <= k_fit
    assert elapsed <= budget


def test_criterion_08_uniform_weight_proportionality(report_line):
    budget, t0 = 10.0, time.perf_counter()
    nodes = np.linspace(0.0, 1.0, 2 ** 10 + 1)
    c1 = derivative_grids(DYADIC, ProbVector.of(0.5), (1,), nodes,
                          terms=60)[(1,)].grid.values
    saw = np.zeros_like(nodes)
    for j in range(30):
        y = (2.0 ** j) * nodes
        saw += np.abs(y - np.rint(y)) / 2.0 ** j
    mask = saw > 0.05
    ratio = c1[mask] / saw[mask]
    med = float(np.median(ratio))
    spread = float(np.max(np.abs(ratio - med)))
    elapsed = time.perf_counter() - t0
    ok = spread <= 1e-3 * abs(med) and elapsed <= budget
    _verdict(report_line, 8, ok,
             f"sawtooth-series ratio {med:.6f} constant to {spread:.1e} "
             f"(tol {1e-3 * abs(med):.1e})",
             elapsed, budget)
    assert spread <= 1e-3 * abs(med)
    assert elapsed <= budget


def test_criterion_09_conjugacy_identity(report_line):
    budget, t0 = 10.0, time.perf_counter()
    cases = ((DYADIC, ProbVector.of(0.5)), (DYADIC, ProbVector.of(0.25)),
             (TERNARY, ProbVector.of(0.25)))
    worst = max(conjugacy_residual(system, p, 1000, seed=5)
                for system, p in cases)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed <= budget
    _verdict(report_line, 9, ok,
             f"conjugacy residual {worst:.2e} over 3000 sampled points (tol 1e-9)",
             elapsed, budget)
    assert worst <= 1e-9
    assert elapsed <= budget


def test_criterion_10_seminorm_dichotomy_of_iterates(report_line):
    budget, t0 = 60.0, time.perf_counter()
    p = ProbVector.of(0.25)
    low = gap_probe(DYADIC, p, 0.35, n_max=60, grid_size=8193)
    high = gap_probe(DYADIC, p, 0.60, n_max=60, grid_size=8193)
    slope_expect = math.log(0.75 * 2.0 ** 0.60)
    slope_err = abs(high.slope - slope_expect)
    nodes = np.linspace(-0.25, 1.25, 4097)
    start = GridFunction(nodes, np.clip(nodes, 0.0, 1.0), 0.0, 1.0)
    diag = iterate_transition(DYADIC, p, start, n_max=60)
    elapsed = time.perf_counter() - t0
    ok = (low.verdict == "bounded" and high.verdict == "growing"
          and slope_err <= 1e-3 and diag.r_squared >= 0.99 and elapsed <= budget)
    _verdict(report_line, 10, ok,
             f"verdicts {low.verdict}/{high.verdict}, growth slope err "
             f"{slope_err:.1e} (tol 1e-3), iterate fit R2 {diag.r_squared:.4f}",
             elapsed, budget)
    assert low.verdict == "bounded"
    assert high.verdict == "growing"
    assert slope_err <= 1e-3
    assert diag.r_squared >= 0.99
    assert elapsed <= budget


def test_criterion_11_seminorm_refinement_sweep(report_line):
    budget, t0 = 60.0, time.perf_counter()
    p = ProbVector.of(0.25)
    sizes = [2 ** k + 1 for k in range(9, 14)]

    def sweep(alpha):
        out = []
        for size in sizes:
            nodes = np.linspace(-0.25, 1.25, size)
            g = GridFunction(nodes, cdf_values(DYADIC, p, nodes, tol=1e-15),
                             0.0, 1.0)
            out.append(holder_seminorm(g, alpha, mode="pairs"))
        return out

    stable = sweep(LOG43_LOG2 - 0.01)
    stable_ratio = max(stable) / min(stable)
    grow = sweep(LOG43_LOG2 + 0.05)
    growth = [grow[i + 2] / grow[i] for i in range(len(grow) - 2)]
    v1 = []
    for size in sizes:
        nodes = np.linspace(-0.25, 1.25, size)
        c1 = derivative_grids(DYADIC, ProbVector.of(0.5), (1,), nodes,
                              terms=60)[(1,)].grid
        v1.append(holder_seminorm(c1, 1.0, mode="adjacent"))
    increasing = all(b > a for a, b in zip(v1, v1[1:]))
    elapsed = time.perf_counter() - t0
    ok = (stable_ratio <= 1.2 and min(growth) >= 1.2 and increasing
          and elapsed <= budget)
    _verdict(report_line, 11, ok,
             f"below-exponent spread {stable_ratio:.3f} (<= 1.2), above-exponent "
             f"growth per two refinements {min(growth):.3f} (required >= 1.2), "
             f"slope seminorm increasing {increasing}",
             elapsed, budget)
    assert stable_ratio <= 1.2
    assert increasing
    assert elapsed <= budget
    assert min(growth) >= 1.2


def test_criterion_12_periodic_point_exponents(report_line):
    budget, t0 = 120.0, time.perf_counter()
    p = ProbVector.of(0.25)
    cycles = [(1,), (2,), (1, 2), (2, 1)]
    cycles += [w for w in itertools.product((1, 2), repeat=3)
               if len(set(w)) > 1][:6]
    cycles += [w for w in itertools.product((1, 2), repeat=4)
               if len(set(w)) > 1][:10]
    scales = [3.0 ** -k for k in range(6, 21)]

    def evaluate(xs):
        return cdf_values(TERNARY, p, xs, tol=1e-16)

    worst = 0.0
    for cyc in cycles:
        exact = (sum(math.log(1.0 / float(p[i])) for i in cyc)
                 / (len(cyc) * math.log(3.0)))
        x, _ = pi_approx(TERNARY, cyc * (60 // len(cyc)))
        est = emp_exponent(evaluate, x, scales)
        worst = max(worst, abs(est.slope - exact) / exact)
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.10 and elapsed <= budget
    _verdict(report_line, 12, ok,
             f"worst relative exponent error {worst:.2%} over "
             f"{len(cycles)} cycles (tol 10%)",
             elapsed, budget)
    assert worst <= 0.10
    assert elapsed <= budget


def test_criterion_13_increment_oscillation(report_line):
    budget, t0 = 5.0, time.perf_counter()
    p = ProbVector.of(0.5)
    word = tuple(1 + (i % 2) for i in range(40))
    gammas, acc, agree = [], 0.0, True
    for n in range(1, 41):
        acc += 2.0 if word[n - 1] == 1 else -2.0
        rise = cylinder_increment(DYADIC, p, word[:n], (1,)).rise((1,))
        gamma = float(rise) * 2.0 ** n
        agree &= abs(gamma - acc) <= 1e-9
        gammas.append(gamma)
    window = gammas[19:]
    osc = max(window) - min(window)
    elapsed = time.perf_counter() - t0
    ok = agree and osc >= 0.5 and elapsed <= budget
    _verdict(report_line, 13, ok,
             f"normalised increments match signed recursion {agree}, oscillation "
             f"{osc:.2f} over depths 20..40 (required >= 0.5)",
             elapsed, budget)
    assert agree
    assert osc >= 0.5
    assert elapsed <= budget
