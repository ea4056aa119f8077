"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line (printed in the terminal summary)
before asserting. Reference iteration counts are the published tables; a cell
passes when it is within 20% of the reference, or within 3 for references of
at most 25.
"""
import time

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from patchmg.assembly import GlobalOperator, assemble_rhs, patch_operators
from patchmg.bspline import SplineSpace, univariate_mass_stiffness
from patchmg.geometry import GeometryMap
from patchmg.multigrid import ConvergenceError, MGConfig, build_hierarchy, solve_mg, solve_pcg
from patchmg.projectors import (FunctionSample, error_1d, error_2d, error_norms, eval_tensor, project_1d,
                                project_2d_sequential, project_2d_tensor, seminorm_1d, seminorm_h2_2d,
                                sine_sample, boundary_trace)
from patchmg.scenarios import scenario_l_shape, scenario_unit_square
from patchmg.smoothers import AdditiveSmoother, BoostedSmoother

from conftest import ACCEPTANCE_LINES, discretize

DEGREES = range(2, 9)

TABLE1 = {4: [39, 32, 22, 24, 21, 20, 21], 5: [56, 40, 32, 28, 28, 32, 33], 6: [60, 44, 37, 31, 31, 34, 37],
          7: [61, 45, 37, 32, 31, 35, 37], 8: [63, 45, 38, 32, 31, 35, 37]}
TABLE2 = {4: [14, 12, 11, 11, 10, 11, 10], 5: [16, 15, 14, 14, 13, 13, 12], 6: [18, 16, 15, 15, 14, 14, 14],
          7: [18, 16, 16, 15, 14, 14, 14], 8: [19, 16, 16, 15, 15, 15, 14]}
TABLE3 = {4: [29, 11, 8, 7, 6, 5, 5], 5: [48, 13, 10, 8, 7, 7, 6], 6: [55, 14, 12, 9, 8, 7, 7],
          7: [56, 14, 12, 9, 8, 8, 7], 8: [59, 15, 13, 9, 8, 8, 7]}
TABLE4 = {4: [37, 33, 22, 24, 18, 21, 19], 5: [56, 39, 32, 28, 26, 31, 31], 6: [60, 44, 37, 31, 29, 34, 35],
          7: [61, 45, 37, 32, 31, 35, 37], 8: [63, 45, 38, 32, 31, 35, 35]}
TABLE5 = {4: [13, 12, 11, 11, 10, 11, 10], 5: [16, 15, 14, 14, 13, 13, 12], 6: [18, 16, 15, 15, 14, 14, 13],
          7: [18, 16, 16, 15, 15, 14, 14], 8: [18, 16, 16, 15, 15, 15, 14]}

# no reproduction run needs more than 1.2 * 63 + 3 iterations to be judged
CAP = 200


def record(key, ok, detail):
    ACCEPTANCE_LINES[key] = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[key])


def within(count, ref):
    if not isinstance(count, int):
        return False
    return abs(count - ref) <= 0.2 * ref or (ref <= 25 and abs(count - ref) <= 3)


_RUNS = {}


def iterations(scenario, p, ell, mode="mg", smoother="additive", sigma_scale=5.0):
    """Iteration count of one configuration (cached); ``"div"`` when it fails to converge."""
    key = (scenario, p, ell, mode, smoother, sigma_scale)
    if key not in _RUNS:
        sc = {"unit_square": scenario_unit_square, "l_shape": scenario_l_shape}[scenario]()
        tau = 1.0 if smoother == "boosted" else 0.95
        H = build_hierarchy(sc.patches, p, ell, MGConfig(smoother=smoother, tau=tau, sigma_scale=sigma_scale,
                                                         rho=0.95))
        f = H.system(sc.f, sc.g).f
        try:
            _RUNS[key] = (solve_pcg if mode == "pcg" else solve_mg)(H, f, 1e-8, CAP).iterations
        except ConvergenceError:
            _RUNS[key] = "div"
    return _RUNS[key]


def compare(table, cells, **kw):
    """Run the cells, return (all within tolerance, misses, rendered rows)."""
    got = {}
    for ell, p in cells:
        got[ell, p] = iterations(p=p, ell=ell, **kw)
    misses = [(ell, p, got[ell, p], table[ell][p - 2]) for ell, p in cells
              if not within(got[ell, p], table[ell][p - 2])]
    rows = sorted({ell for ell, _ in cells})
    text = "; ".join(f"l={ell}: " + " ".join(str(got[ell, p]) for p in DEGREES if (ell, p) in got) for ell in rows)
    return not misses, misses, got, text


# ---------------------------------------------------------------------------------------------

def test_criterion_1_closed_form_entries():
    t0 = time.perf_counter()
    worst = 0.0
    for p in range(1, 9):
        for m in (4, 8, 16):
            M, K = univariate_mass_stiffness(SplineSpace(p, m))
            h = 1.0 / m
            worst = max(worst, abs(M[0, 0] / (h / (2 * p + 1)) - 1), abs(K[0, 0] / (p ** 2 / (h * (2 * p - 1))) - 1))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 1.0
    record("1", ok, f"max relative error {worst:.1e}, {dt:.2f} s")
    assert ok


def _univariate_samples():
    sin = FunctionSample(lambda x: np.sin(np.pi * x), lambda x: np.pi * np.cos(np.pi * x),
                         dxx=lambda x: -np.pi ** 2 * np.sin(np.pi * x))
    expsin = FunctionSample(lambda x: np.exp(x) * np.sin(3 * x),
                            lambda x: np.exp(x) * (np.sin(3 * x) + 3 * np.cos(3 * x)),
                            dxx=lambda x: np.exp(x) * (6 * np.cos(3 * x) - 8 * np.sin(3 * x)))
    return {"sin(pi x)": sin, "exp(x) sin(3x)": expsin}


def test_criterion_2_univariate_bounds():
    t0 = time.perf_counter()
    worst_h1 = worst_l2 = 0.0
    for f in _univariate_samples().values():
        s1, s2 = seminorm_1d(f, 1), seminorm_1d(f, 2)
        for p in range(1, 7):
            for ell in range(2, 9):
                space = SplineSpace(p, 2 ** ell)
                l2, h1 = error_1d(space, project_1d(space, f), f)
                worst_h1 = max(worst_h1, h1 / (np.sqrt(2) * space.h * s2))
                worst_l2 = max(worst_l2, l2 / (np.sqrt(2) * space.h * s1))
                assert h1 <= np.sqrt(2) * space.h * s2 + 1e-8
                assert l2 <= np.sqrt(2) * space.h * s1 + 1e-8
    dt = time.perf_counter() - t0
    ok = worst_h1 <= 1 and worst_l2 <= 1 and dt < 10
    record("2", ok, f"max error/bound: H1 {worst_h1:.3f}, L2 {worst_l2:.3f}; {dt:.1f} s")
    assert ok


def test_criterion_3_tensor_projector():
    t0 = time.perf_counter()
    f = sine_sample()
    semi = seminorm_h2_2d(f)
    worst = corner = trace = comm = 0.0
    for p in range(1, 7):
        for ell in range(2, 9):
            space = SplineSpace(p, 2 ** ell)
            C = project_2d_tensor(space, f)
            _, h1 = error_2d(space, C, f)
            worst = max(worst, h1 / (2 * space.h * semi))
            ends = np.array([0.0, 1.0])
            corner = max(corner, np.abs(eval_tensor(space, C, ends, ends) - f.u(*np.meshgrid(ends, ends))).max())
            for side, (ux, uy) in enumerate([(0.0, None), (1.0, None), (None, 0.0), (None, 1.0)]):
                if ux is not None:
                    edge = FunctionSample(lambda t, a=ux: f.u(0 * t + a, t), lambda t, a=ux: f.dy(0 * t + a, t))
                else:
                    edge = FunctionSample(lambda t, b=uy: f.u(t, 0 * t + b), lambda t, b=uy: f.dx(t, 0 * t + b))
                trace = max(trace, np.abs(boundary_trace(space, C, side) - project_1d(space, edge)).max())
            comm = max(comm, np.abs(project_2d_sequential(space, f, "xy")
                                    - project_2d_sequential(space, f, "yx")).max())
    dt = time.perf_counter() - t0
    ok = worst <= 1 and corner <= 1e-10 and trace <= 1e-10 and comm <= 1e-10 and dt < 30
    record("3", ok, f"max error/bound {worst:.3f}; corner {corner:.1e}, edge trace {trace:.1e}, "
                    f"commutation {comm:.1e}; {dt:.1f} s")
    assert ok


def test_criterion_4_table1():
    cells = [(ell, p) for ell in range(4, 8) for p in DEGREES]
    ok, misses, got, text = compare(TABLE1, cells, scenario="unit_square")
    bounded = all(isinstance(got[7, p], int) and isinstance(got[6, p], int)
                  and abs(got[7, p] - got[6, p]) <= max(2, 0.1 * got[6, p]) for p in DEGREES)
    record("4", ok and bounded, f"{len(cells) - len(misses)}/{len(cells)} cells within tolerance, "
                                f"bounded in l: {bounded}; {text}")
    assert bounded, "iteration counts not bounded in the level"
    assert ok, f"cells outside tolerance (l, p, got, reference): {misses}"


def test_criterion_5_table2():
    cells = [(7, 2), (7, 8)]
    ok, misses, got, text = compare(TABLE2, cells, scenario="unit_square", mode="pcg")
    record("5", ok, f"(l=7, p=2) -> {got[7, 2]} [18], (l=7, p=8) -> {got[7, 8]} [14]")
    assert ok, misses


def test_criterion_6_lshape_tables():
    cells4 = [(ell, p) for ell in range(4, 8) for p in DEGREES] + [(8, 2)]
    ok4, miss4, got4, text4 = compare(TABLE4, cells4, scenario="l_shape")
    cells5 = [(7, 2), (7, 8), (8, 2)]
    ok5, miss5, got5, _ = compare(TABLE5, cells5, scenario="l_shape", mode="pcg")
    record("6", ok4 and ok5, f"iterative {len(cells4) - len(miss4)}/{len(cells4)} cells "
                             f"((l=8, p=2) -> {got4[8, 2]} [63]); PCG {len(cells5) - len(miss5)}/{len(cells5)} "
                             f"((l=8, p=2) -> {got5[8, 2]} [18]); {text4}")
    assert ok5, f"PCG cells outside tolerance: {miss5}"
    assert ok4, f"iterative cells outside tolerance: {miss4}"


def test_criterion_7_table3():
    # the published setting: σ-scale 5, ϱ = 0.95, τ = 1
    row = {p: iterations("unit_square", p, 8, smoother="boosted") for p in range(3, 9)}
    cited = within(row[5], 9) and within(row[8], 7)
    counts = [row[p] for p in range(3, 9)]
    trend = all(isinstance(c, int) for c in counts) and all(a >= b for a, b in zip(counts, counts[1:]))
    record("7", cited and trend, f"l=8, p=3..8: {counts} (reference 15 13 9 8 8 7); cited cells ok: {cited}, "
                                 f"non-increasing in p: {trend}")
    assert cited and trend


def _layouts():
    return {"single patch": [GeometryMap.identity()],
            "2x1 patches": [GeometryMap.rectangle(0.0, 0.0), GeometryMap.rectangle(1.0, 0.0)]}


@pytest.fixture(scope="module")
def spectra():
    """Generalized eigenvalue data for criterion 8 (σ = 12 h^-2, ϱ = 0.95)."""
    out = {}
    for name, patches in _layouts().items():
        for p in (2, 3, 4):
            for m in (8, 16):
                space, topo, dm, A = discretize(patches, p, m)
                Ad = A.to_dense()
                M = GlobalOperator([patch_operators(G, space)[1] for G in patches], dm).to_dense()
                X = Ad + M / space.h ** 2
                B = BoostedSmoother.build(A, dm, space, sigma_scale=12.0, rho=0.95)
                L = B.inner.to_dense()
                Lt = np.linalg.inv(B.inverse_dense())
                Lt = (Lt + Lt.T) / 2
                ev_t = sla.eigh(Lt, X, eigvals_only=True)
                out[name, p, m] = dict(
                    a=sla.eigh(Ad, L, eigvals_only=True).max(),
                    b=sla.eigh(L, X, eigvals_only=True).max() / p,
                    c=sla.eigh(Lt, L, eigvals_only=True).min(),
                    d=ev_t.max() / ev_t.min())
    return out


def _grows_boundedly(spectra, key, factor=1.25):
    """Doubling m changes the quantity by at most ``factor`` for every layout and degree."""
    return all(spectra[n, p, 16][key] <= factor * spectra[n, p, 8][key]
               for n in _layouts() for p in (2, 3, 4))


def test_criterion_8a_smoother_dominates(spectra):
    worst = max(v["a"] for v in spectra.values())
    where = max(spectra, key=lambda k: spectra[k]["a"])
    ok = worst <= 1 / 0.95 + 1e-6
    record("8a", ok, f"max lambda_max(A, L) = {worst:.4f} at {where} (limit {1 / 0.95:.4f})")
    assert ok


def test_criterion_8b_smoother_upper_bound(spectra):
    worst = max(v["b"] for v in spectra.values())
    ok = _grows_boundedly(spectra, "b")
    record("8b", ok, f"max lambda_max(L, A + h^-2 M) / p = {worst:.3f}; bounded under refinement: {ok}")
    assert ok


def test_criterion_8c_boosted_dominates(spectra):
    worst = min(v["c"] for v in spectra.values())
    ok = worst >= 1 - 1e-8
    record("8c", ok, f"min lambda_min(L~, L) = {worst:.4f} (required >= 1)")
    assert ok


def test_criterion_8d_boosted_condition(spectra):
    worst = max(v["d"] for v in spectra.values())
    ok = _grows_boundedly(spectra, "d")
    record("8d", ok, f"max cond(L~, A + h^-2 M) = {worst:.2f}; bounded under refinement: {ok}")
    assert ok


def test_criterion_9_structural_invariants():
    t0 = time.perf_counter()
    checks = {}
    # partition of unity
    x = np.linspace(0, 1, 101)
    checks["partition of unity"] = all(
        np.allclose(SplineSpace(p, m).collocation(x).sum(axis=1), 1.0, atol=1e-13)
        for p in range(1, 9) for m in (1, 3, 8))
    # Galerkin identity
    worst = 0.0
    for sc in (scenario_unit_square(), scenario_l_shape()):
        H = build_hierarchy(sc.patches, 3, 4)
        for i in range(1, H.n_levels):
            P = H.prolongation_matrix(i)
            AH = H.levels[i - 1].A.to_dense()
            worst = max(worst, np.abs(P.T @ H.levels[i].A.to_dense() @ P - AH).max() / np.abs(AH).max())
    checks["Galerkin identity"] = worst <= 1e-10
    # projector idempotency: project a spline
    s = SplineSpace(3, 8)
    c = np.random.default_rng(1).normal(size=s.n)
    fs = FunctionSample(lambda t: s.evaluate(c, np.atleast_1d(t)), lambda t: s.evaluate(c, np.atleast_1d(t), 1))
    checks["projector idempotency"] = np.allclose(project_1d(s, fs), c, atol=1e-10)
    # DOF partition
    ok = True
    for sc in (scenario_unit_square(), scenario_l_shape()):
        space, topo, dm, A = discretize(sc.patches, 3, 8)
        allp = np.concatenate([T.dofs for T in dm.pieces])
        ok &= np.array_equal(np.sort(allp), np.arange(dm.N))
    checks["DOF partition"] = bool(ok)
    # permutation invariance of the additive smoother
    patches = scenario_unit_square().patches
    spectra = []
    for order in ([0, 1, 2, 3], [3, 1, 0, 2]):
        space, topo, dm, A = discretize([patches[k] for k in order], 2, 8)
        L = AdditiveSmoother.build(A, dm, space).to_dense()
        spectra.append(np.sort(sla.eigh(A.to_dense(), L, eigvals_only=True)))
    checks["smoother permutation invariance"] = np.allclose(*spectra, rtol=1e-9)
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 60
    record("9", ok, ", ".join(f"{k}: {'ok' if v else 'broken'}" for k, v in checks.items()) + f"; {dt:.1f} s")
    assert ok, checks


def test_criterion_10_discretization_order():
    sc = scenario_unit_square()
    grad = sc.grad_g
    f = FunctionSample(sc.g, lambda x, y: grad(x, y)[0], lambda x, y: grad(x, y)[1])
    orders = {}
    for p in (1, 2, 3):
        errs = []
        for ell in (3, 4, 5):
            space, topo, dm, A = discretize(sc.patches, p, 2 ** ell)
            system = assemble_rhs(sc.f, sc.g, sc.patches, space, dm, topo, A)
            u = spla.spsolve(A.to_sparse().tocsc(), system.f)
            l2, h1 = error_norms(sc.patches, space, dm, system.extend(u), f)
            errs.append(np.hypot(l2, h1))
        orders[p] = np.log2(errs[-2] / errs[-1])
    ok = all(orders[p] >= min(p, 1.9) for p in orders)
    record("10", ok, "observed H1 orders " + ", ".join(f"p={p}: {o:.2f}" for p, o in orders.items()))
    assert ok


def test_scaling_linear_in_unknowns():
    sc = scenario_unit_square()
    times = {}
    for ell in (5, 6, 7):
        H = build_hierarchy(sc.patches, 3, ell)
        f = H.system(sc.f, sc.g).f
        i = H.n_levels - 1
        H.cycle(i, np.zeros_like(f), f)  # warm up caches
        samples = []
        for _ in range(5):
            t0 = time.perf_counter()
            H.cycle(i, np.zeros_like(f), f)
            samples.append(time.perf_counter() - t0)
        times[ell] = float(np.median(samples))
    ratios = [times[6] / times[5], times[7] / times[6]]
    ok = max(ratios) <= 4.6
    ACCEPTANCE_LINES["scaling"] = (f"O(N) scaling: {'PASS' if ok else 'FAIL'}  W-cycle time ratio per level "
                                   f"{ratios[0]:.2f}, {ratios[1]:.2f} (limit 4.6)")
    print(ACCEPTANCE_LINES["scaling"])
    assert ok
