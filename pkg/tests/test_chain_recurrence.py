import numpy as np
import pytest

from shadowdyn.certificates import GridTooLargeError, StabilizationError
from shadowdyn.chain_recurrence import (
    BoxGrid, TransitionGraph, basin_assign, build_graph, chain_classes, chain_recurrent_boxes,
    class_of_point, strongly_connected_components,
)
from shadowdyn.pseudo_orbit import splice_limit
from shadowdyn.systems import CirclePoint, ProductPoint, TorusPoint, make_system


def graph_from_edges(n, edges):
    edges = np.unique(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=0)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, edges[:, 0] + 1, 1)
    return TransitionGraph(BoxGrid((n,)), (1.0 / n,), np.cumsum(indptr), edges[:, 1].copy(),
                           {"corners": 2, "extra": 0, "seed": 0})


def closure(g):
    """Reachability in one or more steps, by repeated squaring of the adjacency matrix."""
    n = g.n_nodes
    a = np.zeros((n, n), dtype=np.float32)
    e = g.edges()
    a[e[:, 0], e[:, 1]] = 1.0
    r = a.copy()
    while True:
        nxt = ((r + r @ r) > 0).astype(np.float32)
        if np.array_equal(nxt, r):
            return r > 0
        r = nxt


def assert_scc_matches_oracle(g):
    comp = strongly_connected_components(g)
    r = closure(g) | np.eye(g.n_nodes, dtype=bool)
    same = r & r.T
    assert np.array_equal(comp[:, None] == comp[None, :], same)
    on_cycle = np.diag(closure(g))
    assert np.array_equal(np.flatnonzero(on_cycle), chain_recurrent_boxes(g))


@pytest.fixture(scope="module")
def ns():
    return make_system("ns")


# --- SCC oracle ---------------------------------------------------------------

@pytest.mark.parametrize("seed", range(4))
def test_scc_random_graphs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(50, 400))
    m = int(rng.integers(n // 2, 2 * n))
    assert_scc_matches_oracle(graph_from_edges(n, rng.integers(0, n, (m, 2))))


def test_scc_large_random_graph():
    rng = np.random.default_rng(9)
    n = 2000
    edges = rng.integers(0, n, (2200, 2))
    assert_scc_matches_oracle(graph_from_edges(n, edges))


def test_scc_system_graphs(ns):
    assert_scc_matches_oracle(build_graph(ns, BoxGrid((1000,))))
    cat = make_system("cat")
    assert_scc_matches_oracle(build_graph(cat, BoxGrid((32, 32))))
    prod = make_system("product")
    assert_scc_matches_oracle(build_graph(prod, BoxGrid((4, 4, 64))))


# --- graph construction --------------------------------------------------------

def test_ns_edges_follow_box_centers(ns):
    grid = BoxGrid((512,))
    g = build_graph(ns, grid)
    centers = grid.centers()
    images = ns.apply_array(centers)
    targets = grid.box_of(images)
    for b in range(0, 512, 7):
        assert g.has_edge(b, int(targets[b]))
    assert np.all(np.diff(g.indptr) >= 1)


def test_identity_self_loops():
    ident = make_system("identity")
    g = build_graph(ident, BoxGrid((100,)))
    assert all(g.has_edge(b, b) for b in range(100))
    assert chain_recurrent_boxes(g).size == 100
    assert chain_classes(g).n_classes == 1


def test_cat_strongly_connected():
    g = build_graph(make_system("cat"), BoxGrid((64, 64)))
    comp = strongly_connected_components(g)
    assert np.unique(comp).size == 1
    assert chain_recurrent_boxes(g).size == 64 * 64
    assert chain_classes(g).n_classes == 1


def test_ns_recurrent_boxes_near_fixed_points(ns):
    grid = BoxGrid((128,))
    g = build_graph(ns, grid)
    rec = chain_recurrent_boxes(g)
    on_cycle = np.flatnonzero(np.diag(closure(g)))
    assert np.array_equal(rec, on_cycle)
    c = grid.centers(rec)[:, 0]
    dist = np.minimum(np.minimum(c, 1 - c), np.abs(c - 0.5))
    assert dist.max() < 0.1
    assert np.any(np.abs(c - 0.5) < 0.02) and np.any(np.minimum(c, 1 - c) < 0.02)


@pytest.mark.parametrize("res", [256, 512, 1000, 2048])
def test_ns_two_classes(ns, res):
    g = build_graph(ns, BoxGrid((res,)))
    classes = chain_classes(g)
    assert classes.n_classes == 2
    labels = {class_of_point(ns, CirclePoint(0.0), classes),
              class_of_point(ns, CirclePoint(0.5), classes)}
    assert labels == {0, 1}


def test_product_two_classes():
    prod = make_system("product")
    classes = chain_classes(build_graph(prod, BoxGrid((8, 8, 64))))
    assert classes.n_classes == 2
    for cid in range(2):
        t = classes.grid.centers(classes.boxes(cid))[:, 2]
        near = np.minimum(np.minimum(t, 1 - t), np.abs(t - 0.5))
        assert near.max() < 0.1


def test_soundness_true_orbits():
    rng = np.random.default_rng(4)
    cases = [("ns", BoxGrid((256,))), ("cat", BoxGrid((32, 32))),
             ("identity", BoxGrid((64,))), ("product", BoxGrid((8, 8, 32)))]
    for kind, grid in cases:
        system = make_system(kind)
        g = build_graph(system, grid, samples_per_box=2)
        for _ in range(100):
            orbit = system.orbit(system.random_point(rng), 0, 20)
            boxes = grid.box_of(system.coords(orbit))
            assert all(g.has_edge(int(a), int(b)) for a, b in zip(boxes, boxes[1:]))


def test_delta_monotonicity(ns):
    grid = BoxGrid((256,))
    small = build_graph(ns, grid, delta=grid.mesh)
    large = build_graph(ns, grid, delta=3 * grid.mesh)
    e_small = {tuple(e) for e in small.edges().tolist()}
    e_large = {tuple(e) for e in large.edges().tolist()}
    assert e_small <= e_large
    assert set(chain_recurrent_boxes(small)) <= set(chain_recurrent_boxes(large))


def test_graph_errors(ns):
    with pytest.raises(GridTooLargeError) as info:
        build_graph(ns, BoxGrid((1000,)), max_boxes=100)
    assert info.value.certificate.details["boxes"] == 1000
    with pytest.raises(ValueError):
        build_graph(ns, BoxGrid((100,)), delta=0.001)


def test_deterministic_export(ns):
    grid = BoxGrid((64,))
    a = build_graph(ns, grid, seed=3)
    b = build_graph(ns, grid, seed=3)
    assert a.to_edge_list() == b.to_edge_list()
    text = a.to_edge_list().splitlines()
    assert text[0] == "# divisions 64"
    body = [line for line in text if not line.startswith("#")]
    assert len(body) == a.n_edges
    csv = chain_classes(a).to_csv().splitlines()
    assert csv[0] == "box_index,class_id"


# --- basins --------------------------------------------------------------------

@pytest.fixture(scope="module")
def ns_classes(ns):
    return chain_classes(build_graph(ns, BoxGrid((512,))))


def test_basin_point_in_class(ns, ns_classes):
    res = basin_assign(ns, CirclePoint(0.0), ns_classes, horizon=40)
    assert res.entry_index == 0
    assert res.class_id == class_of_point(ns, CirclePoint(0.0), ns_classes)
    assert max(res.envelope) == 0.0


def test_basin_ns_quarter(ns, ns_classes):
    res = basin_assign(ns, CirclePoint(0.25), ns_classes, horizon=500)
    assert res.class_id == class_of_point(ns, CirclePoint(0.0), ns_classes)
    assert res.entry_index <= 200
    # direct iteration oracle: the orbit itself is in the class from entry on
    t = 0.25
    for _ in range(res.entry_index):
        t = (t - 0.1 * np.sin(2 * np.pi * t)) % 1.0
    assert class_of_point(ns, CirclePoint(t), ns_classes) == res.class_id
    env = res.envelope
    assert all(a >= b for a, b in zip(env, env[1:]))
    assert env[-1] == 0.0
    po = splice_limit(res.limit_orbit, 1e-3)
    assert po.offset <= res.entry_index


def test_basin_product():
    prod = make_system("product")
    classes = chain_classes(build_graph(prod, BoxGrid((8, 8, 64))))
    rng = np.random.default_rng(2)
    zero = class_of_point(prod, ProductPoint(TorusPoint(0.5, 0.5), CirclePoint(0.0)), classes)
    for _ in range(5):
        p = ProductPoint(prod.left.random_point(rng), CirclePoint(0.25))
        assert basin_assign(prod, p, classes, horizon=500).class_id == zero


def test_basin_stabilization_failure(ns, ns_classes):
    # halfway between the fixed points, 8 steps stay in transient boxes
    with pytest.raises(StabilizationError) as info:
        basin_assign(ns, CirclePoint(0.45), ns_classes, horizon=8)
    assert -1 in info.value.certificate.details["final_labels"]
