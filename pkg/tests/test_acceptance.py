"""Acceptance criteria 1-10.

Each test records a one-line verdict that the terminal summary prints as
``criterion N: PASS|FAIL ...`` (see conftest.py); the test then asserts.
"""

import math
import time
from fractions import Fraction

import numpy as np

from _helpers import brute_max_deviation, brute_seq_dist, cat_pseudo_orbit, shift_pseudo_orbit
from conftest import ACCEPTANCE
from shadowdyn.cantor import build, verify_membership
from shadowdyn.chain_recurrence import (
    BoxGrid, basin_assign, build_graph, chain_classes,
    strongly_connected_components,
)
from shadowdyn.cli import main
from shadowdyn.expansivity import (
    countable_expansivity_refuter, cube_box_witness, cw_witness_check, product_arc_witness,
    sensitivity_lower_bound,
)
from shadowdyn.certificates import RefutationError
from shadowdyn.pseudo_orbit import PseudoOrbit, defect, splice_limit
from shadowdyn.shadowing import modulus, shadow, shadow_cat, shadow_shift, verify_shadowing
from shadowdyn.systems import (
    CatMap, CirclePoint, CubeSeq, ProductPoint, SymbolSeq, TorusPoint, make_system, shift_by,
)


def record(n, checks: dict, detail: str):
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = detail + ("" if ok else f"  [failed: {', '.join(failed)}]")
    ACCEPTANCE[n] = (ok, line)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {line}")
    assert ok, line


def test_criterion_01_shift_cantor():
    shift = make_system("shift")
    x = SymbolSeq.constant(0)
    t0 = time.perf_counter()
    C = build(shift, x, 0.5, 6)
    elapsed = time.perf_counter() - t0
    pts = C.top
    distinct = all(brute_seq_dist(p, q) > 0 for i, p in enumerate(pts) for q in pts[i + 1:])
    cert = verify_membership(C)
    H = cert.details["horizon"]
    # independent coordinate-wise check of every backward iterate up to the exact horizon
    brute_ok = all(brute_seq_dist(shift_by(p, -n), shift_by(x, -n), 2 * H) <= 0.5
                   for p in pts for n in range(0, H + 1))
    spacing_ok = True
    for k in range(1, C.depth + 1):
        n_old = len(C.levels[k - 1])
        for j in range(n_old):
            spacing_ok &= shift.dist(C.levels[k][n_old + j], C.levels[k][j]) < 0.5 / 2 ** k
    record(1, {
        "64 points": len(pts) == 64,
        "pairwise distinct": distinct,
        "membership": cert.passed and cert.details["tail_exact"],
        "brute-force backward check": brute_ok,
        "spacing": spacing_ok,
        "runtime < 5 s": elapsed < 5.0,
    }, f"{len(pts)} sequences, exact horizon {H}, build {elapsed:.2f}s")


def test_criterion_02_cat_cantor():
    cat = CatMap()
    t0 = time.perf_counter()
    C = build(cat, TorusPoint(0.0, 0.0), 0.2, 5, horizon=50)
    cert = verify_membership(C, 50)
    elapsed = time.perf_counter() - t0
    pts = C.top
    gap = min(cat.dist(p, q) for i, p in enumerate(pts) for q in pts[i + 1:])
    level_certs = all(c["pass"] for c in C.certificates)
    tail = cert.details["tail_bound"]
    record(2, {
        "32 points": len(pts) == 32,
        "membership": cert.passed and cert.details["worst_value"] <= 0.2,
        "tail bound recorded": math.isfinite(tail) and tail >= 0,
        "min gap > 0 with certificate": gap > 0 and C.gaps[-1] == gap and level_certs,
        "runtime < 10 s": elapsed < 10.0,
    }, f"worst backward deviation {cert.details['worst_value']:.4f}, min gap {gap:.3e}, "
       f"tail bound {tail:.1e}, {elapsed:.2f}s")


def test_criterion_03_cat_shadowing_oracle():
    cat = CatMap()
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, worst_defect, verified = 0.0, 0.0, True
    for _ in range(1000):
        po = cat_pseudo_orbit(cat, 1e-6, 100, rng, lo=-50)
        worst_defect = max(worst_defect, defect(po))
        res = shadow_cat(po)
        verified &= verify_shadowing(po, res.point, res.achieved_eps, 50).passed
        worst = max(worst, res.achieved_eps)
    elapsed = time.perf_counter() - t0
    record(3, {
        "defect <= 1e-6": worst_defect <= 1e-6,
        "achieved <= 1e-4": worst <= 1e-4,
        "verified": verified,
        "runtime < 10 s": elapsed < 10.0,
    }, f"1000 orbits, worst achieved_eps {worst:.3e}, {elapsed:.2f}s")


def test_criterion_04_shift_shadowing_exact():
    shift = make_system("shift")
    checks, worst = {}, []
    for m in range(3, 11):
        rng = np.random.default_rng(m)
        po = shift_pseudo_orbit(shift, m, 21, rng)
        res = shadow_shift(po)
        lo, hi = po.lo - 30, po.hi + 30
        brute = brute_max_deviation(shift, res.point, po, lo, hi)
        cert = verify_shadowing(po, res.point, 2.0 ** -(m - 1), max(-lo, hi))
        checks[f"m={m}"] = (defect(po) == 2.0 ** -m and brute <= 2.0 ** -(m - 1)
                           and cert.details["worst_value"] == brute and cert.passed
                           and res.achieved_eps <= 2.0 ** -(m - 1))
        worst.append(brute)
    record(4, checks, "window maxima " + ", ".join(f"2^{int(math.log2(w))}" for w in worst))


def test_criterion_05_cube_witness():
    cube = make_system("cube")
    x = CubeSeq.constant(0.5)
    checks = {}
    for eps in (0.05, 0.1, 0.2):
        w = cube_box_witness(x, eps, horizon=50)
        cert = cw_witness_check(cube, w)
        # rational sup formula on a sample of members: d(s^n y, s^n x) <= eps, zero slack
        exact = all(max(abs(Fraction(y.coord(j)) - Fraction(x.coord(j))) / 2 ** abs(j - n)
                        for j in range(n - 60, n + 61)) <= Fraction(eps)
                    for y in w.points[::50] for n in (-50, -1, 0, 1, 50))
        checks[f"eps={eps}"] = (cert.passed and cert.details["member_worst"] <= eps
                                and cert.details["exact_bound_ok"] and exact)
    record(5, checks, "box continuum passes for |n| <= 50 at eps 0.05, 0.1, 0.2")


def test_criterion_06_product():
    prod = make_system("product")
    cat = CatMap()
    kwargs = dict(sample_count=16, deltas=(1e-3,), horizon=30, seed=0)
    sp = sensitivity_lower_bound(prod, **kwargs)
    sc = sensitivity_lower_bound(cat, **kwargs)
    samplewise = all(p["max_diam"] >= c["max_diam"] for p, c in zip(sp.per_sample, sc.per_sample))
    rng = np.random.default_rng(6)
    arcs = True
    for _ in range(3):
        x = ProductPoint(cat.random_point(rng), CirclePoint(0.25))
        arcs &= cw_witness_check(prod, product_arc_witness(x, 0.25, 0.01, 0.1, 50)).passed
    # shadowing of product pseudo-orbits, componentwise
    shadow_ok = True
    for _ in range(10):
        p = prod.random_point(rng)
        pts = [p]
        for _ in range(40):
            q = prod.apply(pts[-1])
            d = rng.uniform(-1e-6, 1e-6, 3)
            pts.append(ProductPoint(TorusPoint(q.left.u + d[0], q.left.v + d[1]),
                                    CirclePoint(q.right.t + d[2])))
        po = PseudoOrbit(prod, pts, -20)
        res = shadow(po)
        shadow_ok &= res.achieved_eps <= 1e-4 and verify_shadowing(
            po, res.point, res.achieved_eps, 20).passed
    record(6, {
        "product >= cat sample-wise": samplewise and sp.eps_lower >= sc.eps_lower,
        "arc witnesses": arcs,
        "product shadowing": shadow_ok,
    }, f"eps_lower product {sp.eps_lower:.4f} >= cat {sc.eps_lower:.4f}")


def _closure_oracle(g):
    n = g.n_nodes
    a = np.zeros((n, n), dtype=np.float32)
    e = g.edges()
    a[e[:, 0], e[:, 1]] = 1.0
    r = ((a + np.eye(n, dtype=np.float32)) > 0).astype(np.float32)
    while True:
        nxt = ((r @ r) > 0).astype(np.float32)
        if np.array_equal(nxt, r):
            break
        r = nxt
    r = r > 0
    comp = strongly_connected_components(g)
    return np.array_equal(comp[:, None] == comp[None, :], r & r.T)


def test_criterion_07_chain_classes():
    ns, cat, prod = make_system("ns"), CatMap(), make_system("product")
    g_ns = build_graph(ns, BoxGrid((512,)))
    n_ns = chain_classes(g_ns).n_classes
    n_cat = chain_classes(build_graph(cat, BoxGrid((64, 64)))).n_classes
    n_prod = chain_classes(build_graph(prod, BoxGrid((8, 8, 64)))).n_classes
    oracle = (_closure_oracle(g_ns)
              and _closure_oracle(build_graph(cat, BoxGrid((32, 32))))
              and _closure_oracle(build_graph(prod, BoxGrid((4, 4, 64)))))
    record(7, {
        "north-south 2": n_ns == 2, "cat 1": n_cat == 1, "product 2": n_prod == 2,
        "SCC oracle": oracle,
    }, f"classes ns={n_ns} cat={n_cat} product={n_prod}; oracle on 512, 1024, 1024 nodes")


def test_criterion_08_limit_shadowing_surrogate():
    prod = make_system("product")
    classes = chain_classes(build_graph(prod, BoxGrid((8, 8, 64))))
    mod = modulus(prod, 0.1)
    rng = np.random.default_rng(8)
    H = 500
    assigned, monotone, tracks = 0, True, True
    worst_ratio = 0.0
    for _ in range(100):
        p = prod.random_point(rng)
        a = basin_assign(prod, p, classes, H)
        assigned += 1
        env = a.envelope
        monotone &= all(u >= v for u, v in zip(env, env[1:])) and env[-1] == 0.0
        po = splice_limit(a.limit_orbit, mod.delta)
        N = po.offset
        res = shadow(po)
        z = prod.iterate(res.point, -N)
        bound = env[N] if N < len(env) else 0.0
        orbit = prod.orbit(res.point, 0, H - N)
        # f^k(f^{-N} z) = f^{k-N}(z) against the projected sequence x_k, k in [N, H]
        for k in range(N, H + 1):
            d = prod.dist(orbit[k - N], a.limit_orbit.points[k])
            tracks &= d <= bound + 1e-12
            if bound > 0:
                worst_ratio = max(worst_ratio, d / bound)
        tracks &= prod.dist(prod.iterate(z, N), res.point) <= 1e-9
    record(8, {
        "100 points assigned": assigned == 100,
        "envelope monotone to 0": monotone,
        "pullback tracks within envelope": tracks,
    }, f"horizon {H}, splice delta {mod.delta:.4f}, worst deviation/envelope {worst_ratio:.3f}")


def test_criterion_09_refuter():
    cat = CatMap()
    C = countable_expansivity_refuter(cat, TorusPoint(0.0, 0.0), 0.2, 4)
    x = C.base_point
    forward = all(cat.dist(cat.iterate(p, n), cat.iterate(x, n)) <= 0.2
                  for p in C.top for n in range(0, 51))
    try:
        countable_expansivity_refuter(make_system("ns"), CirclePoint(0.0), 0.1, 4)
        ns_cert = None
    except RefutationError as exc:
        ns_cert = exc.certificate
    record(9, {
        "16 points": len(C.top) == 16,
        "certified in W^s": C.membership.passed and forward,
        "north-south precondition fails": ns_cert is not None and not ns_cert.passed,
    }, f"cat: {len(C.top)} points; north-south: "
       f"{'inverse eps_lower %.4f' % ns_cert.details['eps_lower'] if ns_cert is not None else 'no failure'}")


def test_criterion_10_determinism(tmp_path):
    runs = {
        "shadow": ["shadow", "--system", "cat", "--delta", "1e-6", "--seed", "5"],
        "cantor": ["cantor", "--system", "cat", "--kmax", "3", "--seed", "5", "--threads", "4"],
        "chainrec": ["chainrec", "--system", "ns", "--resolution", "256", "--basin-samples", "4"],
        "sensitivity": ["sensitivity", "--system", "product", "--samples", "4", "--seed", "5"],
        "cwx": ["cwx", "--system", "cube", "--eps", "0.1"],
        "refute": ["refute", "--system", "shift", "--kmax", "3", "--seed", "5"],
    }
    checks = {}
    for name, argv in runs.items():
        a, b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        codes = (main(argv + ["--out", str(a)]), main(argv + ["--out", str(b)]))
        fa = sorted(p.name for p in a.iterdir())
        fb = sorted(p.name for p in b.iterdir())
        same = fa == fb and "summary.json" in fa and all(
            (a / f).read_bytes() == (b / f).read_bytes() for f in fa)
        checks[name] = same and codes[0] == codes[1] == 0
    record(10, checks, "byte-identical summary.json and CSVs for all six commands")
