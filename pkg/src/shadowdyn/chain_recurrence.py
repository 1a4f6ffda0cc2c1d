"""Box-grid outer approximation of the chain-recurrent set and its classes.

Phase space is a product of circles ``[0, 1)`` (torus = 2 axes, circle = 1
axis, cat x north-south = 3 axes).  Box ``b`` has an edge to ``b'`` when the
image of some sample of ``b``, inflated by ``delta`` (per axis), meets ``b'``.

Soundness: for any ``p`` in box ``b`` with center ``c``, ``|f(p) - f(c)|_i``
is at most ``L * mesh / 2`` on each axis, where ``L`` is the max-norm
Lipschitz constant (3 for the cat map, ``1 + 0.2 pi`` for the north-south
map).  The default ``delta_i = 2 * mesh_i`` exceeds that, so the center
sample alone already makes every true orbit a path in the graph.

Classes are strongly connected components restricted to boxes on a cycle.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .certificates import Certificate, GridTooLargeError, StabilizationError
from .pseudo_orbit import LimitPseudoOrbit
from .systems import ProductPoint, ProductSystem, System

DEFAULT_MAX_BOXES = 1 << 21
DEFAULT_MAX_EDGES = 1 << 26


@dataclass(frozen=True)
class BoxGrid:
    """Uniform grid on ``[0, 1)^dim`` with ``divisions[i]`` boxes along axis ``i``."""

    divisions: tuple

    def __post_init__(self):
        divs = tuple(int(d) for d in np.atleast_1d(self.divisions))
        if not divs or min(divs) < 1:
            raise ValueError("divisions must be positive")
        object.__setattr__(self, "divisions", divs)

    @classmethod
    def for_system(cls, system: System, resolution) -> "BoxGrid":
        res = list(np.atleast_1d(resolution))
        if len(res) == 1:
            res = res * system.dim
        if len(res) != system.dim:
            raise ValueError(f"{system.name} needs {system.dim} resolutions, got {len(res)}")
        return cls(tuple(res))

    @property
    def dim(self) -> int:
        return len(self.divisions)

    @property
    def size(self) -> int:
        return int(np.prod(self.divisions, dtype=np.int64))

    @property
    def widths(self) -> np.ndarray:
        return 1.0 / np.asarray(self.divisions, dtype=float)

    @property
    def mesh(self) -> float:
        """Largest box side, which is the box diameter in the max metric."""
        return float(self.widths.max())

    def lower_corners(self, boxes=None) -> np.ndarray:
        boxes = np.arange(self.size) if boxes is None else np.asarray(boxes)
        idx = np.stack(np.unravel_index(boxes, self.divisions), axis=-1)
        return idx * self.widths

    def centers(self, boxes=None) -> np.ndarray:
        return self.lower_corners(boxes) + 0.5 * self.widths

    def box_of(self, coords) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float)) % 1.0
        idx = np.floor(coords * np.asarray(self.divisions)).astype(np.int64)
        idx = np.minimum(idx, np.asarray(self.divisions) - 1)
        return np.ravel_multi_index(tuple(idx.T), self.divisions)

    def to_dict(self) -> dict:
        return {"divisions": list(self.divisions), "size": self.size, "mesh": self.mesh}


@dataclass
class TransitionGraph:
    grid: BoxGrid
    delta: tuple
    indptr: np.ndarray
    indices: np.ndarray
    scheme: dict
    system: System | None = None

    @property
    def n_nodes(self) -> int:
        return self.grid.size

    @property
    def n_edges(self) -> int:
        return int(self.indices.size)

    def successors(self, b: int) -> np.ndarray:
        return self.indices[self.indptr[b]:self.indptr[b + 1]]

    def has_edge(self, a: int, b: int) -> bool:
        s = self.successors(a)
        i = np.searchsorted(s, b)
        return bool(i < s.size and s[i] == b)

    def restricted(self, keep: np.ndarray) -> "TransitionGraph":
        """Induced subgraph on the boxes where ``keep`` is true (others lose all edges)."""
        e = self.edges()
        e = e[keep[e[:, 0]] & keep[e[:, 1]]]
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(indptr, e[:, 0] + 1, 1)
        return TransitionGraph(self.grid, self.delta, np.cumsum(indptr), e[:, 1].copy(),
                               self.scheme, self.system)

    def edges(self) -> np.ndarray:
        src = np.repeat(np.arange(self.n_nodes), np.diff(self.indptr))
        return np.stack([src, self.indices], axis=1)

    def to_edge_list(self) -> str:
        buf = io.StringIO()
        buf.write(f"# divisions {' '.join(map(str, self.grid.divisions))}\n")
        buf.write(f"# delta {' '.join(repr(float(d)) for d in self.delta)}\n")
        buf.write(f"# scheme {self.scheme['corners']} corners, center, "
                  f"{self.scheme['extra']} seeded samples, seed {self.scheme['seed']}\n")
        buf.write(f"# nodes {self.n_nodes} edges {self.n_edges}\n")
        for a, b in self.edges():
            buf.write(f"{a} {b}\n")
        return buf.getvalue()


def _sample_offsets(dim: int, extra: int, seed: int) -> np.ndarray:
    """Sample positions inside the unit box: corners, center, seeded extras."""
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * dim, indexing="ij")).reshape(dim, -1).T
    rng = np.random.default_rng([seed, 0xB0C5])
    return np.vstack([corners, np.full((1, dim), 0.5), rng.random((extra, dim))])


def build_graph(system: System, grid: BoxGrid, delta=None, samples_per_box: int = 4,
                seed: int = 0, max_boxes: int = DEFAULT_MAX_BOXES,
                max_edges: int = DEFAULT_MAX_EDGES) -> TransitionGraph:
    """Transition graph of ``system`` on ``grid``.

    ``delta`` is a scalar or one value per axis (default ``2 * mesh_i``); it
    must be at least the box side on every axis.  ``samples_per_box`` counts
    the seeded samples added to the corners and the center.
    """
    if not system.vectorized or system.dim != grid.dim:
        raise ValueError("system must be vectorized with one axis per grid axis")
    if grid.size > max_boxes:
        raise GridTooLargeError(f"{grid.size} boxes exceed the budget of {max_boxes}", Certificate(
            "grid", False, {"boxes": grid.size, "max_boxes": max_boxes}))
    widths = grid.widths
    delta = 2.0 * widths if delta is None else np.broadcast_to(
        np.asarray(delta, dtype=float), widths.shape).copy()
    if np.any(delta < widths * (1 - 1e-12)):
        raise ValueError("delta must be at least the box side on every axis")
    divs = np.asarray(grid.divisions)
    spans = np.floor(2.0 * delta * divs).astype(np.int64) + 2
    if grid.size * int(np.prod(spans)) > max_edges * 8:
        raise GridTooLargeError("edge budget exceeded", Certificate(
            "grid", False, {"boxes": grid.size, "max_edges": max_edges}))

    offsets = _sample_offsets(grid.dim, samples_per_box, seed)
    corners = grid.lower_corners()
    n = grid.size
    sources = np.arange(n, dtype=np.int64)
    keys = []
    for off in offsets:
        img = system.apply_array(corners + off * widths)
        lo = np.floor((img - delta) * divs).astype(np.int64)
        hi = np.floor((img + delta) * divs).astype(np.int64)
        # enumerate the cells of each inflated image, one axis at a time
        cells = np.zeros((n, 1), dtype=np.int64)
        width = hi - lo + 1
        for ax in range(grid.dim):
            steps = np.arange(min(int(width[:, ax].max()), int(divs[ax])))
            axis_idx = (lo[:, ax:ax + 1] + steps) % divs[ax]
            valid = steps[None, :] < width[:, ax:ax + 1]
            axis_idx = np.where(valid, axis_idx, axis_idx[:, :1])
            cells = (cells[:, :, None] * divs[ax] + axis_idx[:, None, :]).reshape(n, -1)
        keys.append(np.unique(sources[:, None] * n + cells))
    keys = np.unique(np.concatenate(keys))
    src, dst = np.divmod(keys, n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    scheme = {"corners": 2 ** grid.dim, "center": 1, "extra": samples_per_box, "seed": seed}
    return TransitionGraph(grid, tuple(float(d) for d in delta), indptr, dst.astype(np.int64), scheme,
                           system)


def strongly_connected_components(g: TransitionGraph) -> np.ndarray:
    """Component label per node, by an iterative Tarjan pass (linear time).

    Labels are renumbered so that components are ordered by their smallest node.
    """
    n = g.n_nodes
    indptr, indices = g.indptr.tolist(), g.indices.tolist()
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    comp = [-1] * n
    stack = []
    counter = 0
    n_comp = 0
    for root in range(n):
        if index[root] >= 0:
            continue
        work = [(root, indptr[root])]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, pos = work[-1]
            end = indptr[v + 1]
            while pos < end:
                w = indices[pos]
                pos += 1
                if index[w] < 0:
                    work[-1] = (v, pos)
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, indptr[w]))
                    break
                if on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            else:
                work.pop()
                if low[v] == index[v]:
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        comp[w] = n_comp
                        if w == v:
                            break
                    n_comp += 1
                if work:
                    u = work[-1][0]
                    if low[v] < low[u]:
                        low[u] = low[v]
    comp = np.asarray(comp, dtype=np.int64)
    first = np.full(n_comp, n, dtype=np.int64)
    np.minimum.at(first, comp, np.arange(n))
    order = np.empty(n_comp, dtype=np.int64)
    order[np.argsort(first, kind="stable")] = np.arange(n_comp)
    return order[comp]


def chain_recurrent_boxes(g: TransitionGraph) -> np.ndarray:
    """Sorted boxes lying on a cycle: nontrivial components plus self-loops."""
    comp = strongly_connected_components(g)
    sizes = np.bincount(comp)
    edges = g.edges()
    loops = np.zeros(g.n_nodes, dtype=bool)
    loops[edges[edges[:, 0] == edges[:, 1], 0]] = True
    return np.flatnonzero((sizes[comp] > 1) | loops)


@dataclass
class ClassDecomposition:
    """Chain classes on a grid.

    ``recurrent`` is every box on a cycle of the graph at ``delta``.  A class
    is a strongly connected component of the graph restricted to boxes that
    are also on a cycle at the finer scale ``confirm_delta``.  The boxes
    dropped by that confirmation (``unconfirmed``) sit on the rim of a fixed
    point's neighbourhood, where box width plus inflation creates a cycle
    that shrinking the inflation removes.
    """

    grid: BoxGrid
    recurrent: np.ndarray
    class_of: np.ndarray
    n_classes: int
    unconfirmed: np.ndarray
    delta: tuple = ()
    confirm_delta: tuple = ()

    def boxes(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.class_of == class_id)

    def to_csv(self) -> str:
        lines = ["box_index,class_id"]
        lines += [f"{b},{self.class_of[b]}" for b in self.recurrent]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "delta": list(self.delta),
                "confirm_delta": list(self.confirm_delta),
                "n_classes": self.n_classes, "n_recurrent": int(self.recurrent.size),
                "unconfirmed": self.unconfirmed.tolist(),
                "class_sizes": [int((self.class_of == c).sum()) for c in range(self.n_classes)]}


def chain_classes(g: TransitionGraph, confirm: TransitionGraph | float | None = 0.5) -> ClassDecomposition:
    """Classes of ``g``.

    ``confirm`` is a second graph on the same grid, or a factor applied to
    ``g.delta`` (clipped at the box side) to build one from ``g.system``;
    ``None`` skips confirmation.
    """
    rec = chain_recurrent_boxes(g)
    keep = np.zeros(g.n_nodes, dtype=bool)
    keep[rec] = True
    confirm_delta = g.delta
    if isinstance(confirm, (int, float)) and g.system is not None:
        fine = np.maximum(np.asarray(g.delta) * confirm, g.grid.widths)
        if np.any(fine < np.asarray(g.delta)):
            confirm = build_graph(g.system, g.grid, fine, g.scheme["extra"], g.scheme["seed"])
    if isinstance(confirm, TransitionGraph):
        confirm_delta = confirm.delta
        keep_fine = np.zeros(g.n_nodes, dtype=bool)
        keep_fine[chain_recurrent_boxes(confirm)] = True
        keep &= keep_fine
    sub = g.restricted(keep)
    members = chain_recurrent_boxes(sub)
    comp = strongly_connected_components(sub)
    class_of = np.full(g.n_nodes, -1, dtype=np.int64)
    uniq = np.unique(comp[members])  # already ordered by smallest box
    class_of[members] = np.searchsorted(uniq, comp[members])
    return ClassDecomposition(g.grid, rec, class_of, int(uniq.size), np.setdiff1d(rec, members),
                              g.delta, tuple(confirm_delta))


# ---------------------------------------------------------------------------
# basin assignment
# ---------------------------------------------------------------------------


@dataclass
class BasinAssignment:
    class_id: int
    entry_index: int
    limit_orbit: LimitPseudoOrbit
    envelope: list
    projection_dist: list
    horizon: int

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "entry_index": self.entry_index,
                "horizon": self.horizon, "envelope": self.envelope,
                "projection_dist": self.projection_dist,
                "defects": list(self.limit_orbit.defects)}


def _project(grid: BoxGrid, boxes: np.ndarray, coords: np.ndarray):
    """Nearest point of the union of ``boxes`` (periodic, max metric) to each row."""
    lo = grid.lower_corners(boxes)
    w = grid.widths
    off = (coords[:, None, :] - lo[None, :, :]) % 1.0
    inside = off <= w
    to_hi = off - w
    to_lo = 1.0 - off
    axis_dist = np.where(inside, 0.0, np.minimum(to_hi, to_lo))
    dist = axis_dist.max(axis=2)
    best = np.argmin(dist, axis=1)
    rows = np.arange(coords.shape[0])
    ad = axis_dist[rows, best]
    snapped = np.where(ad == 0.0, coords, np.where(to_hi[rows, best] <= to_lo[rows, best],
                                                   lo[best] + w, lo[best]))
    return snapped % 1.0, dist[rows, best]


def _from_coords_keep(system: System, p, coords: np.ndarray):
    """Point at ``coords``, reusing the factors of ``p`` that did not move."""
    if isinstance(system, ProductSystem):
        k = system.left.dim
        old = np.asarray(p.coords(), dtype=float)
        left = p.left if np.array_equal(old[:k], coords[:k]) else \
            system.left.from_coords(coords[None, :k])[0]
        right = p.right if np.array_equal(old[k:], coords[k:]) else \
            system.right.from_coords(coords[None, k:])[0]
        return ProductPoint(left, right)
    return system.from_coords(coords[None, :])[0]


def basin_assign(system: System, p, classes: ClassDecomposition, horizon: int = 500) -> BasinAssignment:
    """Class whose boxes the orbit of ``p`` settles in, with a projected limit pseudo-orbit.

    The class is the one containing the orbit for the whole final quarter of
    the horizon.  ``x_k`` is the nearest point of that class's box union to
    ``f^k(p)``; once the orbit is inside the union ``x_k = f^k(p)`` exactly,
    so the defect envelope reaches 0.
    """
    if horizon < 4:
        raise ValueError("horizon must be at least 4")
    grid = classes.grid
    orbit = system.orbit(p, 0, horizon)
    coords = system.coords(orbit)
    labels = classes.class_of[grid.box_of(coords)]
    tail = labels[horizon - horizon // 4:]
    if tail[0] < 0 or np.any(tail != tail[0]):
        raise StabilizationError("no class stabilizes within the horizon", Certificate(
            "basin", False, {"horizon": horizon, "final_labels": tail.tolist()}))
    cid = int(tail[0])
    moved = np.flatnonzero(labels != cid)
    entry = int(moved[-1] + 1) if moved.size else 0
    snapped, dist = coords.copy(), np.zeros(len(orbit))
    if moved.size:
        # only points outside the class union need projecting
        snapped[moved], dist[moved] = _project(grid, classes.boxes(cid), coords[moved])
    points = [q if d == 0.0 else _from_coords_keep(system, q, c)
              for q, c, d in zip(orbit, snapped, dist)]
    lpo = LimitPseudoOrbit(system, points)
    return BasinAssignment(cid, entry, lpo, lpo.envelope(), dist.tolist(), horizon)


def class_of_point(system: System, p, classes: ClassDecomposition) -> int:
    """Class id of the box containing ``p`` (-1 when transient)."""
    return int(classes.class_of[classes.grid.box_of(system.coords([p]))[0]])
