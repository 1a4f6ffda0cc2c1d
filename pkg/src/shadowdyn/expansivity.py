"""Sensitivity and equicontinuity probes, continuum witnesses and the refuter.

Ball images are represented by boundary rings (``System.ring``): 32 max-norm
directions on the torus, the two endpoints on the circle, coordinate
extremes for sequences.  The diameter of a ring image is a lower bound for
the diameter of the ball image, so ``eps_lower`` is a lower bound up to the
choice of sampled centers.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cantor import CantorApprox, Direction, build
from .certificates import Certificate, RefutationError
from .systems import CatMap, CubeSeq, CubeShift, InverseSystem, ProductPoint, System, coord_names


def circle_diameter(values) -> float:
    """Largest pairwise circle distance among ``values`` (O(m log m)).

    The farthest point from ``v`` is the one nearest the antipode ``v + 1/2``.
    """
    v = np.sort(np.asarray(values, dtype=float) % 1.0)
    if v.size < 2:
        return 0.0
    anti = (v + 0.5) % 1.0
    idx = np.searchsorted(v, anti)
    best = 0.0
    for cand in (idx % v.size, (idx - 1) % v.size):
        d = np.abs(v[cand] - v) % 1.0
        best = max(best, float(np.minimum(d, 1.0 - d).max()))
    return best


def _set_diameters(system: System, orbits) -> np.ndarray:
    """``diam {orbit[n] for orbit in orbits}`` for every time index ``n``."""
    m, steps = len(orbits), len(orbits[0])
    if system.vectorized:
        # every real axis is a circle and the metric is the max over axes
        arr = np.stack([system.coords(o) for o in orbits])  # (m, steps, dim)
        return np.array([max(circle_diameter(arr[:, n, a]) for a in range(arr.shape[2]))
                         for n in range(steps)])
    out = np.zeros(steps)
    for n in range(steps):
        for i in range(m):
            for j in range(i + 1, m):
                out[n] = max(out[n], system.dist(orbits[i][n], orbits[j][n]))
    return out


@dataclass
class SensitivityEstimate:
    eps_lower: float
    sample_count: int
    deltas: list
    horizon: int
    per_sample: list
    seed: int = 0
    scheme: str = "ring"

    def to_dict(self) -> dict:
        return {"eps_lower": self.eps_lower, "sample_count": self.sample_count,
                "deltas": list(self.deltas), "horizon": self.horizon, "seed": self.seed,
                "scheme": self.scheme, "per_sample": self.per_sample}


def _sample_growth(system: System, x, deltas, horizon: int) -> dict:
    best = {"max_diam": 0.0, "delta": deltas[0], "n": 0}
    for delta in deltas:
        pts = [x] + list(system.ring(x, delta))
        diams = _set_diameters(system, [system.orbit(p, 0, horizon) for p in pts])
        n = int(np.argmax(diams))
        if diams[n] > best["max_diam"]:
            best = {"max_diam": float(diams[n]), "delta": delta, "n": n}
    return best


def sensitivity_lower_bound(system: System, sample_count: int = 16, deltas=(1e-3,),
                            horizon: int = 30, seed: int = 0) -> SensitivityEstimate:
    """``eps_lower = min_x max_{delta, n <= horizon} diam f^n(ring(x, delta))``.

    Sample ``i`` is drawn from ``default_rng([seed, i])``, so a product system
    sees the same left-factor samples as the factor alone.
    """
    deltas = sorted(float(d) for d in deltas)
    if not deltas or horizon < 0:
        raise ValueError("need a nonempty delta list and horizon >= 0")
    per = []
    for i in range(sample_count):
        x = system.random_point(np.random.default_rng([seed, i]))
        g = _sample_growth(system, x, deltas, horizon)
        g["point"] = x.to_dict()
        per.append(g)
    eps_lower = min((g["max_diam"] for g in per), default=0.0)
    return SensitivityEstimate(eps_lower, sample_count, deltas, horizon, per, seed)


def equicontinuity_probe(system: System, eps: float, horizon: int = 50, grid=None,
                         sample_count: int = 16, seed: int = 0, points=None) -> Certificate:
    """Largest tested delta for which no sampled pair separates beyond ``eps``.

    Pairs are ``(x, y)`` with ``y`` on the ring of radius ``delta (1 - 1e-9)``
    around sampled ``x`` (or around the given ``points``).  ``grid`` is the
    decreasing list of deltas to try (default ``eps / 2^j``, ``j = 0..20``).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    grid = sorted((eps * 2.0 ** -j for j in range(21)) if grid is None else grid, reverse=True)
    if points is None:
        points = [system.random_point(np.random.default_rng([seed, i])) for i in range(sample_count)]
    tried = []
    for delta in grid:
        worst = 0.0
        for x in points:
            ox = system.orbit(x, 0, horizon)
            for y in system.ring(x, delta * (1 - 1e-9)):
                oy = system.orbit(y, 0, horizon)
                worst = max(worst, max(system.dist(a, b) for a, b in zip(ox, oy)))
        tried.append({"delta": delta, "max_separation": worst})
        if worst <= eps:
            return Certificate("equicontinuity", True, {
                "eps": eps, "delta": delta, "horizon": horizon, "samples": len(points),
                "tried": tried})
    return Certificate("equicontinuity", False, {
        "eps": eps, "delta": None, "horizon": horizon, "samples": len(points), "tried": tried,
        "smallest_delta": grid[-1]})


# ---------------------------------------------------------------------------
# continuum witnesses
# ---------------------------------------------------------------------------


@dataclass
class ContinuumWitness:
    kind: str
    params: np.ndarray
    points: list
    eps: float
    horizon: int
    base: object = None
    info: dict = field(default_factory=dict)

    def to_csv(self, system: System) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter"] + coord_names(system))
        for s, p in zip(self.params, self.points):
            w.writerow([repr(float(s))] + [repr(float(c)) for c in p.coords()])
        return buf.getvalue()


def _within(x: float, y: float, eps: float) -> float:
    # nudge y toward x until |y - x| <= eps holds in floating point
    while abs(y - x) > eps:
        y = np.nextafter(y, x)
    return float(y)


def cube_box_witness(x: CubeSeq, eps: float, horizon: int = 50,
                     resolution: float = 1e-3) -> ContinuumWitness:
    """The arc ``s -> (clamp(x_j + (2s - 1) eps))_j`` inside ``C_x = prod [x_j - eps, x_j + eps] & [0, 1]``."""
    params = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)

    def member(s):
        shift = (2.0 * s - 1.0) * eps

        def val(v):
            return _within(v, min(1.0, max(0.0, v + shift)), eps)

        return CubeSeq([val(v) for v in x.window], x.lo, val(x.left_tail_value),
                       val(x.right_tail_value))

    return ContinuumWitness("cube_box", params, [member(s) for s in params], eps, horizon, x,
                            {"resolution": resolution})


def product_arc_witness(x: ProductPoint, center: float, length: float, eps: float,
                        horizon: int = 50, resolution: float = 1e-3) -> ContinuumWitness:
    """``{x.left} x [center - length/2, center + length/2]`` on the circle factor."""
    from .systems import CirclePoint

    params = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    pts = [ProductPoint(x.left, CirclePoint(center + (s - 0.5) * length)) for s in params]
    return ContinuumWitness("product_arc", params, pts, eps, horizon, x,
                            {"center": center, "length": length, "resolution": resolution})


def cat_segment_witness(x, length: float, eps: float, horizon: int = 50,
                        direction=(1.0, 0.0), resolution: float = 1e-3) -> ContinuumWitness:
    """Straight segment of max-norm length ``length`` through ``x``."""
    params = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    f = CatMap()
    du, dv = direction
    scale = length / max(abs(du), abs(dv))
    pts = [f._displace(x, (s - 0.5) * scale * du, (s - 0.5) * scale * dv) for s in params]
    return ContinuumWitness("cat_segment", params, pts, eps, horizon, x,
                            {"length": length, "direction": list(direction), "resolution": resolution})


def _cube_check(w: ContinuumWitness) -> dict:
    """Exact checks for cube families.

    ``d(sigma^n y, sigma^n x) = sup_j 2^{-|j-n|} |y_j - x_j|`` and the family
    diameter at time ``n`` is ``sup_j 2^{-|j-n|} range_j``.  Both are
    evaluated in floating point (exact: ldexp and subtraction of values in
    [0, 1] with equal exponent ranges are checked again in rationals).
    """
    x, H, eps = w.base, w.horizon, w.eps
    pts = w.points
    for p in pts:
        vals = list(p.window) + [p.left_tail_value, p.right_tail_value]
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError("family leaves [0, 1]^Z")
    lo = min([x.lo] + [p.lo for p in pts]) - 1
    hi = max([x.hi] + [p.hi for p in pts]) + 1
    js = range(min(lo, -H) - 1, max(hi, H) + 2)
    cols = np.array([[p.coord(j) for j in js] for p in pts])
    base = np.array([x.coord(j) for j in js])
    dev = np.abs(cols - base).max(axis=0)
    rng = cols.max(axis=0) - cols.min(axis=0)
    member_worst, diam_worst, exact_ok = 0.0, 0.0, True
    feps = Fraction(eps)
    jarr = np.array(list(js))
    for n in range(-H, H + 1):
        weights = np.ldexp(1.0, -np.abs(jarr - n))
        member_worst = max(member_worst, float((weights * dev).max()))
        diam_worst = max(diam_worst, float((weights * rng).max()))
    for j, d in zip(js, dev):
        # the closed form: sup_i eps / 2^|i| <= eps, checked in rationals
        if Fraction(float(d)) > feps:
            exact_ok = False
    return {"member_worst": member_worst, "diam_worst": diam_worst, "exact_bound_ok": exact_ok}


def cw_witness_check(system: System, w: ContinuumWitness) -> Certificate:
    """Check that the family stays small under ``f^n`` for every ``|n| <= horizon``.

    Cube families: every member satisfies ``d(sigma^n y, sigma^n x) <= eps``
    (exact) and the family diameter is at most ``2 eps``.  Other families:
    ``diam f^n(family) <= eps``.
    """
    H = w.horizon
    if isinstance(system, CubeShift):
        r = _cube_check(w)
        ok = r["member_worst"] <= w.eps and r["diam_worst"] <= 2 * w.eps and r["exact_bound_ok"]
        return Certificate("cw_witness", ok, {"kind": w.kind, "eps": w.eps, "horizon": H,
                                              "points": len(w.points), **r})
    orbits = [system.orbit(p, -H, H) for p in w.points]
    diams = _set_diameters(system, orbits)
    bad = np.flatnonzero(diams > w.eps)
    first = None
    if bad.size:
        ns = bad - H
        first = int(ns[np.argmin(np.abs(ns))])
    return Certificate("cw_witness", not bad.size, {
        "kind": w.kind, "eps": w.eps, "horizon": H, "points": len(w.points),
        "diam_worst": float(diams.max()), "worst_n": int(np.argmax(diams)) - H,
        "first_failure_n": first})


def countable_expansivity_refuter(system: System, x, eps: float, k: int, horizon: int = 50,
                                  seed: int = 0, probe_samples: int = 16, probe_deltas=(1e-3,),
                                  probe_horizon: int = 30, threads: int | None = None) -> CantorApprox:
    """``2^k`` separated points inside the local stable set ``W^s_eps(x)``.

    The precondition (``f^{-1}`` sensitive at ``eps``) is checked first with
    ``sensitivity_lower_bound`` on the inverse system.  The output is a
    finite separated subset; it exhibits growth, not uncountability.
    """
    est = sensitivity_lower_bound(InverseSystem(system), probe_samples, probe_deltas,
                                  probe_horizon, seed)
    summary = {k_: v for k_, v in est.to_dict().items() if k_ != "per_sample"}
    if not est.eps_lower > eps:
        worst = min(est.per_sample, key=lambda g: g["max_diam"])
        raise RefutationError("inverse system not sensitive at eps on the sampled points",
                              Certificate("refuter_precondition", False, {
                                  "eps": eps, **summary, "worst_sample": worst}))
    C = build(system, x, eps, k, horizon, seed, Direction.STABLE, threads)
    C.extra["precondition"] = Certificate("refuter_precondition", True, {"eps": eps, **summary}).to_dict()
    return C
