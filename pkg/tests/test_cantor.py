import math

import numpy as np
import pytest

from _helpers import brute_seq_dist, circ
from shadowdyn.cantor import (
    CantorApprox, Direction, build, refine, sensitivity_witness, verify_membership,
)
from shadowdyn.certificates import WitnessError
from shadowdyn.systems import (
    CatMap, CirclePoint, DyadicTorusPoint, SymbolSeq, TorusPoint, make_system, shift_by,
)


def exact_cat_backward(p: DyadicTorusPoint, n: int) -> tuple:
    mod = 1 << p.bits
    u, v = p.num_u, p.num_v
    for _ in range(n):
        u, v = (u - v) % mod, (2 * v - u) % mod
    return u, v


def fixed_dist(a, b, bits):
    mod = 1 << bits
    return max(min((x - y) % mod, (y - x) % mod) for x, y in zip(a, b)) / mod


# --- witnesses ---------------------------------------------------------------

def test_cat_witness_example():
    cat = CatMap()
    y = TorusPoint(0.3, 0.3)
    w = sensitivity_witness(cat, y, 1e-4, 0.2, 50)
    assert w.distance == pytest.approx(5e-5, rel=1e-9)
    assert w.n <= 9
    # independent float iteration of both points (short horizon, well conditioned)
    a = np.array([0.3, 0.3])
    b = np.array([w.point.u, w.point.v])
    first = None
    for n in range(0, 12):
        if max(circ(a - b)) > 0.2:
            first = n
            break
        a = np.mod(np.array([2 * a[0] + a[1], a[0] + a[1]]), 1.0)
        b = np.mod(np.array([2 * b[0] + b[1], b[0] + b[1]]), 1.0)
    assert first == w.n


def test_shift_witness_example():
    shift = make_system("shift")
    y = SymbolSeq([1, 0, 0, 1, 1], -2, (0, 1), (1,))
    w = sensitivity_witness(shift, y, 2.0 ** -5, 0.5, 50)
    diff = [i for i in range(-40, 41) if w.point[i] != y[i]]
    assert diff == [6]
    assert w.n == 6
    assert w.separation == 1.0
    assert shift.dist(w.point, y) < 2.0 ** -5


def test_ns_witness_fails():
    ns = make_system("ns")
    y = CirclePoint(0.05)
    delta, eps, horizon = 0.05, 0.1, 50
    with pytest.raises(WitnessError) as info:
        sensitivity_witness(ns, y, delta, eps, horizon)
    details = info.value.certificate.details
    assert details["reason"] == "not_sensitive"
    # scan oracle: no point of the delta-ball separates beyond eps
    s = 0.05 + np.arange(-99, 100) * delta / 100
    t = np.full_like(s, 0.05)
    worst = 0.0
    for _ in range(horizon + 1):
        worst = max(worst, float(circ(s - t).max()))
        s = np.mod(s - 0.1 * np.sin(2 * np.pi * s), 1.0)
        t = np.mod(t - 0.1 * np.sin(2 * np.pi * t), 1.0)
    assert worst <= eps


def test_product_witness_uses_sensitive_factor():
    prod = make_system("product")
    y = prod.decode({"left": {"u": 0.3, "v": 0.3}, "right": {"t": 0.1}})
    w = sensitivity_witness(prod, y, 1e-3, 0.2, 50)
    assert w.strategy.startswith("left")
    assert w.point.right == y.right


# --- refinement --------------------------------------------------------------

def test_level_one_membership():
    cat = CatMap()
    C = build(cat, TorusPoint(0.2, 0.7), 0.2, 1)
    assert len(C.top) == 2
    cert = C.certificates[0]["points"][0]
    # c_1(x) lies in W^u_{eps/2}(x) and W^s_{eps/2}(x_1)
    assert cert["dev_from_parent"] <= 0.1
    assert cert["dev_from_witness"] <= 0.1
    assert C.schedule.eps_k[0] < 0.2 / 2


def test_shift_two_refinements_exhaustive():
    shift = make_system("shift")
    x = SymbolSeq.constant(0)
    C = build(shift, x, 0.5, 2)
    pts = C.top
    assert len(pts) == 4
    for i in range(4):
        for j in range(i + 1, 4):
            assert brute_seq_dist(pts[i], pts[j]) > 0
    for p in pts:
        for n in range(0, 120):
            assert brute_seq_dist(shift_by(p, -n), shift_by(x, -n)) <= 0.5


def test_refine_twice_spacing():
    for kind, x in (("cat", TorusPoint(0.41, 0.13)), ("shift", SymbolSeq([1, 0, 1], -1))):
        system = make_system(kind)
        C = build(system, x, 0.2 if kind == "cat" else 0.5, 0)
        refine(C)
        refine(C)
        assert len(C.top) == 4
        for j, y in enumerate(C.levels[1]):
            assert system.dist(C.levels[2][2 + j], y) < C.eps / 4


def test_k_max_zero():
    cat = CatMap()
    C = build(cat, TorusPoint(0.0, 0.0), 0.2, 0)
    assert C.depth == 0 and len(C.top) == 1
    assert C.membership.passed


def test_cat_build_backward_iteration_oracle():
    cat = CatMap()
    C = build(cat, TorusPoint(0.0, 0.0), 0.2, 3, horizon=40)
    x = C.base_point
    assert len(C.top) == 8
    for p in C.top:
        bits = p.bits
        xs = DyadicTorusPoint.from_point(x, bits)
        for n in range(0, 41, 5):
            a = exact_cat_backward(p, n)
            b = exact_cat_backward(xs, n)
            assert fixed_dist(a, b, bits) <= 0.2


def test_cat_stable_direction():
    cat = CatMap()
    C = build(cat, TorusPoint(0.37, 0.61), 0.2, 3, direction=Direction.STABLE)
    assert len(C.top) == 8
    assert C.membership.passed
    assert C.membership.details["direction"] == "STABLE"
    x = C.base_point
    for p in C.top:
        for n in range(0, 51):
            assert cat.dist(cat.iterate(p, n), cat.iterate(x, n)) <= 0.2


def test_cube_build():
    cube = make_system("cube")
    x = cube.decode({"window": [0.5], "lo": 0, "left_tail_value": 0.5, "right_tail_value": 0.5})
    C = build(cube, x, 0.25, 2)
    assert len(C.top) == 4
    assert C.membership.passed
    # from the midpoint no coordinate can move by more than 1/2
    with pytest.raises(WitnessError):
        build(cube, x, 0.5, 1)


# --- invariants --------------------------------------------------------------

@pytest.fixture(scope="module")
def cat_build():
    return build(CatMap(), TorusPoint(0.0, 0.0), 0.2, 4, horizon=50, seed=3)


def test_cardinality_and_nesting(cat_build):
    C = cat_build
    for k, level in enumerate(C.levels):
        assert len(level) == 2 ** k
        if k:
            assert level[:len(C.levels[k - 1])] == C.levels[k - 1]


def test_schedule_invariants(cat_build):
    S = cat_build.schedule
    assert all(a > b for a, b in zip(S.eps_k, S.eps_k[1:]))
    assert all(0 < d < e for d, e in zip(S.delta_k, S.eps_k))
    # the constraint on the second-level scale, from the first child
    gap1 = CatMap().dist(cat_build.levels[1][0], cat_build.levels[1][1])
    assert S.eps_k[1] < min(cat_build.eps / 4, gap1 / 2)


def test_spacing_and_separation(cat_build):
    C = cat_build
    f = C.system
    for k in range(1, C.depth + 1):
        cert = C.certificates[k - 1]
        assert cert["pass"]
        n_old = len(C.levels[k - 1])
        for j in range(n_old):
            assert f.dist(C.levels[k][n_old + j], C.levels[k][j]) < C.eps / 2 ** k
        pts = C.levels[k]
        gap = min(f.dist(p, q) for i, p in enumerate(pts) for q in pts[i + 1:])
        assert gap > 0
        assert gap == pytest.approx(C.gaps[k], rel=0, abs=0)
        if cert["guaranteed_other_pairs"] is not None:
            assert cert["guaranteed_other_pairs"] > 0
            assert cert["min_other_pairs"] >= cert["guaranteed_other_pairs"]


def test_membership_replay(cat_build):
    assert cat_build.membership.passed
    assert verify_membership(cat_build).passed


def test_membership_negative_control(cat_build):
    C = cat_build
    bad = CantorApprox(C.system, C.base_point, C.eps, C.direction, C.horizon, C.seed,
                       C.levels[:-1] + [C.top[:-1] + [TorusPoint(0.5, 0.5)]], C.parents,
                       C.schedule, C.certificates, C.gaps)
    cert = verify_membership(bad)
    assert not cert.passed
    assert cert.details["worst_point"] == len(C.top) - 1


def test_determinism_and_threads():
    a = build(CatMap(), TorusPoint(0.1, 0.2), 0.2, 3, seed=5)
    b = build(CatMap(), TorusPoint(0.1, 0.2), 0.2, 3, seed=5)
    c = build(CatMap(), TorusPoint(0.1, 0.2), 0.2, 3, seed=5, threads=4)
    assert a.to_json() == b.to_json() == c.to_json()
    assert a.to_csv() == c.to_csv()


def test_csv_header():
    C = build(CatMap(), TorusPoint(0.1, 0.2), 0.2, 1)
    lines = C.to_csv(1).splitlines()
    assert lines[0] == "index,parent,u,v"
    assert len(lines) == 3


def test_build_rejects_bad_eps():
    with pytest.raises(ValueError):
        build(CatMap(), TorusPoint(0.1, 0.2), 0.7, 1)
    assert math.isfinite(0.2)
