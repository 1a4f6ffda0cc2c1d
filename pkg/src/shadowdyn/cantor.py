"""Level-by-level construction of Cantor sets inside local unstable sets.

Starting from ``C_0 = {x}``, each level adds one child ``c(y)`` per point
``y``: a sensitivity witness ``y1`` near ``y`` is spliced after the past of
``y`` and the resulting pseudo-orbit is shadowed.  The child follows ``y`` in
backward time and ``y1`` in forward time, so it lies in the local unstable set
of ``y`` but is a different point.  ``C_k`` has ``2^k`` points.

For ``Direction.STABLE`` time is reversed: the past of ``y1`` is spliced
before the future of ``y`` and the witness separates under ``f^{-1}``.  The
result lies in the local stable set of ``x``.

Schedule: level ``k`` shadows at ``eps_k = 0.999 * min(eps / 2^{k+1}, gap_{k-1} / 8,
eps_{k-1} / 2)`` where ``gap_{k-1}`` is the minimum pairwise distance of the
previous level.  The child then satisfies ``d(c(y), y) <= eps_k + delta_k < eps / 2^k``
and pairs not of the form ``(c(y), y)`` keep at least half the previous gap.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certificates import Certificate, SeparationError, ShadowingError, WitnessError
from .pseudo_orbit import splice
from .shadowing import modulus, shadow
from .systems import (
    CatMap, CubeSeq, CubeShift, DyadicTorusPoint, FullShift, ProductPoint, ProductSystem,
    SymbolSeq, System, _lcm, _sequence_depth,
)

SCHEDULE_SLACK = 0.999


class Direction(str, enum.Enum):
    UNSTABLE = "UNSTABLE"
    STABLE = "STABLE"


@dataclass(frozen=True)
class Witness:
    point: object
    n: int
    separation: float
    distance: float
    strategy: str

    def to_dict(self) -> dict:
        return {"point": self.point.to_dict(), "n": self.n, "separation": self.separation,
                "distance": self.distance, "strategy": self.strategy}


def _first_escape(system: System, y, y1, eps: float, horizon: int, backward: bool):
    """First ``n <= horizon`` with ``d(f^{+-n} y, f^{+-n} y1) > eps``."""
    lo, hi = (-horizon, 0) if backward else (0, horizon)
    a, b = system.orbit(y, lo, hi), system.orbit(y1, lo, hi)
    if backward:
        a, b = a[::-1], b[::-1]
    best = (0, 0.0)
    for n, (p, q) in enumerate(zip(a, b)):
        d = system.dist(p, q)
        if d > eps:
            return n, d
        if d > best[1]:
            best = (n, d)
    return None, best


def _cat_candidate(f: CatMap, y, delta: float, horizon: int, backward: bool):
    bits = f.bits_for(horizon) + 64 + max(0, math.ceil(-math.log2(delta)))
    if isinstance(y, DyadicTorusPoint):
        bits = max(bits, y.bits)
    y = DyadicTorusPoint.from_point(y, bits)
    du, dv = f.stable_direction if backward else f.unstable_direction
    return f._displace(y, 0.5 * delta * du, 0.5 * delta * dv), y


def _symbolic_candidate(f, y, delta: float, backward: bool):
    m = _sequence_depth(delta)
    i = -m if backward else m
    if isinstance(f, FullShift):
        return y.with_coord(i, (y.coord(i) + 1) % f.alphabet_size)
    val = 0.0 if y.coord(i) >= 0.5 else 1.0
    out = y.with_coord(i, val)
    while not f.dist(y, out) < delta:
        i += -1 if backward else 1
        out = y.with_coord(i, val if y.coord(i) < 0.5 else 0.0)
    return out


def _scan_witness(f: System, y, delta, eps, horizon, backward):
    """Scan the delta-ball on rings of radius ``j * delta / 100``."""
    best_sep, growing = 0.0, False
    for j in range(99, 0, -1):
        for cand in f.ring(y, j * delta / 100.0):
            if not f.dist(y, cand) < delta:
                continue
            n, info = _first_escape(f, y, cand, eps, horizon, backward)
            if n is not None:
                return Witness(cand, n, info, f.dist(y, cand), "scan")
            if info[1] > best_sep:
                best_sep = info[1]
                growing = info[0] >= horizon - max(1, horizon // 4)
    return best_sep, growing


def sensitivity_witness(system: System, y, delta: float, eps: float, horizon: int,
                        seed: int = 0, backward: bool = False) -> Witness:
    """Point ``y1`` with ``d(y, y1) < delta`` whose orbit leaves the eps-ball of ``y``'s.

    With ``backward=True`` separation is sought under ``f^{-1}``.  The
    displacement is deterministic per system; a seeded random search inside
    the delta-ball is the fallback.  Raises ``WitnessError`` if the horizon is
    exhausted; the certificate records the largest separation seen and
    whether separations were still growing at the end of the horizon.
    """
    if not delta > 0 or not eps > 0 or horizon < 1:
        raise ValueError("need delta > 0, eps > 0, horizon >= 1")
    f = system
    if isinstance(f, ProductSystem):
        errors = []
        for side in ("left", "right"):
            sub = getattr(f, side)
            try:
                w = sensitivity_witness(sub, getattr(y, side), delta, eps, horizon, seed, backward)
            except WitnessError as exc:
                errors.append(exc.certificate.to_dict())
                continue
            p = ProductPoint(w.point, y.right) if side == "left" else ProductPoint(y.left, w.point)
            return Witness(p, w.n, w.separation, f.dist(y, p), f"{side}:{w.strategy}")
        raise WitnessError("no factor produced a witness", Certificate(
            "witness", False, {"factors": errors, "delta": delta, "eps": eps, "horizon": horizon}))

    cand = None
    if isinstance(f, CatMap):
        cand, y = _cat_candidate(f, y, delta, horizon, backward)
        strategy = "stable_direction" if backward else "unstable_direction"
    elif isinstance(f, (FullShift, CubeShift)):
        cand = _symbolic_candidate(f, y, delta, backward)
        strategy = "coordinate"
    if cand is not None:
        n, info = _first_escape(f, y, cand, eps, horizon, backward)
        if n is not None:
            return Witness(cand, n, info, f.dist(y, cand), strategy)
        rng = np.random.default_rng(seed)
        for _ in range(64):
            c = f.sample_near(y, 0.99 * delta, rng)
            if f.dist(y, c) < delta:
                n, info = _first_escape(f, y, c, eps, horizon, backward)
                if n is not None:
                    return Witness(c, n, info, f.dist(y, c), "random")
    found = _scan_witness(f, y, delta, eps, horizon, backward)
    if isinstance(found, Witness):
        return found
    best_sep, growing = found
    reason = "insufficient_horizon" if growing else "not_sensitive"
    raise WitnessError(f"horizon exhausted without separation ({reason})", Certificate(
        "witness", False, {"delta": delta, "eps": eps, "horizon": horizon, "backward": backward,
                           "max_separation": best_sep, "still_growing": growing,
                           "reason": reason}))


@dataclass
class EpsSchedule:
    eps: float
    eps_k: list = field(default_factory=list)
    delta_k: list = field(default_factory=list)

    def next_eps(self, gap: float) -> float:
        k = len(self.eps_k) + 1
        bound = self.eps / 2 ** (k + 1)
        if math.isfinite(gap):
            bound = min(bound, gap / 8.0)
        if self.eps_k:
            bound = min(bound, self.eps_k[-1] / 2.0)
        return SCHEDULE_SLACK * bound

    def to_dict(self) -> dict:
        return {"eps": self.eps, "eps_k": list(self.eps_k), "delta_k": list(self.delta_k)}


@dataclass
class CantorApprox:
    system: System
    base_point: object
    eps: float
    direction: Direction
    horizon: int
    seed: int
    levels: list
    parents: list
    schedule: EpsSchedule
    certificates: list
    gaps: list
    tail_bound: float = 0.0
    membership: Certificate | None = None
    extra: dict = field(default_factory=dict)

    @property
    def top(self) -> list:
        return self.levels[-1]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def to_dict(self) -> dict:
        return {
            "system": self.system.name,
            "base_point": self.base_point.to_dict(),
            "eps": self.eps,
            "direction": self.direction.value,
            "horizon": self.horizon,
            "seed": self.seed,
            "schedule": self.schedule.to_dict(),
            "levels": [[p.to_dict() for p in level] for level in self.levels],
            "parents": self.parents,
            "gaps": [g if math.isfinite(g) else None for g in self.gaps],
            "tail_bound": self.tail_bound,
            "certificates": self.certificates,
            "membership": self.membership.to_dict() if self.membership else None,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def to_csv(self, level: int | None = None) -> str:
        from .systems import coord_names

        level = self.depth if level is None else level
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "parent"] + coord_names(self.system))
        pts = self.levels[level]
        par = [-1] * len(self.levels[level - 1]) + self.parents[level - 1] if level else [-1]
        for i, p in enumerate(pts):
            w.writerow([i, par[i]] + [repr(float(c)) for c in p.coords()])
        return buf.getvalue()


def _point_seed(seed: int, level: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, level, index]).generate_state(1)[0])


def _max_dev(f, a, b) -> float:
    return max((f.dist(p, q) for p, q in zip(a, b)), default=0.0)


def _child(C: CantorApprox, level: int, index: int, y, eps_k: float, delta_k: float):
    f, H = C.system, C.horizon
    stable = C.direction is Direction.STABLE
    w = sensitivity_witness(f, y, delta_k, C.eps, H, _point_seed(C.seed, level, index),
                            backward=stable)
    y1 = w.point
    po = splice(f, y1, y, H, H) if stable else splice(f, y, y1, H, H)
    try:
        r = shadow(po, eps_k)
    except ShadowingError as exc:
        exc.certificate.details.update(level=level, index=index)
        raise
    c = r.point
    oc, oy, oy1 = f.orbit(c, -H, H), f.orbit(y, -H, H), f.orbit(y1, -H, H)
    past, future = slice(0, H), slice(H, 2 * H + 1)
    if stable:
        near_y, near_y1 = _max_dev(f, oc[future], oy[future]), _max_dev(f, oc[past], oy1[past])
    else:
        near_y, near_y1 = _max_dev(f, oc[past], oy[past]), _max_dev(f, oc[future], oy1[future])
    spacing = f.dist(c, y)
    escape = f.dist(oc[H - w.n], oy[H - w.n]) if stable else f.dist(oc[H + w.n], oy[H + w.n])
    cert = {
        "level": level, "index": index, "parent": index,
        "witness_n": w.n, "witness_distance": w.distance, "witness_strategy": w.strategy,
        "shadow_achieved_eps": r.achieved_eps, "shadow_tail_bound": r.tail_bound,
        "dev_from_parent": near_y, "dev_from_witness": near_y1,
        "spacing": spacing, "spacing_bound": C.eps / 2 ** level, "escape_separation": escape,
    }
    ok = (near_y <= eps_k and near_y1 <= eps_k and spacing < C.eps / 2 ** level and escape > 0)
    cert["pass"] = ok
    if not ok:
        raise SeparationError(f"child of point {index} at level {level} failed verification",
                              Certificate("cantor_child", False, cert))
    return c, cert, r.tail_bound


def refine(C: CantorApprox, threads: int | None = None) -> CantorApprox:
    """Add one child per top-level point; returns ``C`` extended in place."""
    f = C.system
    level = C.depth + 1
    gap_prev = C.gaps[-1]
    eps_k = C.schedule.next_eps(gap_prev)
    delta_k = min(modulus(f, eps_k).delta, SCHEDULE_SLACK * eps_k)
    top = list(C.top)

    def job(item):
        return _child(C, level, item[0], item[1], eps_k, delta_k)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, enumerate(top)))
    else:
        results = [job(item) for item in enumerate(top)]
    children = [r[0] for r in results]

    pts = top + children
    n_old = len(top)
    min_gap, min_other, min_parent = math.inf, math.inf, math.inf
    for j, c in enumerate(children):
        for i, p in enumerate(pts):
            if i == n_old + j or (i >= n_old and i < n_old + j):
                continue
            d = f.dist(c, p)
            min_gap = min(min_gap, d)
            if i == j:
                min_parent = min(min_parent, d)
            else:
                min_other = min(min_other, d)
    min_gap = min(min_gap, gap_prev)
    max_spacing = max(r[1]["spacing"] for r in results)
    guaranteed = gap_prev - 2.0 * max_spacing if math.isfinite(gap_prev) else None
    level_cert = {
        "level": level, "eps_k": eps_k, "delta_k": delta_k, "min_gap": min_gap,
        "min_parent_child": min_parent, "min_other_pairs": min_other if n_old > 1 or level > 1 else None,
        "guaranteed_other_pairs": guaranteed, "max_spacing": max_spacing,
        "points": [r[1] for r in results],
    }
    ok = min_gap > 0 and (guaranteed is None or (guaranteed > 0 and min_other >= guaranteed))
    level_cert["pass"] = ok
    if not ok:
        raise SeparationError(f"level {level} separation failed",
                              Certificate("cantor_level", False, level_cert))
    C.schedule.eps_k.append(eps_k)
    C.schedule.delta_k.append(delta_k)
    C.levels.append(pts)
    C.parents.append(list(range(n_old)))
    C.gaps.append(min_gap)
    C.certificates.append(level_cert)
    C.tail_bound += max(r[2] for r in results)
    return C


def build(system: System, x, eps: float, k_max: int, horizon: int = 50, seed: int = 0,
          direction: Direction | str = Direction.UNSTABLE, threads: int | None = None) -> CantorApprox:
    """``2^k_max`` points of a Cantor set in the local unstable (or stable) set of ``x``."""
    if k_max < 0 or horizon < 1:
        raise ValueError("need k_max >= 0 and horizon >= 1")
    if not 0 < eps <= system.diameter_bound:
        raise ValueError(f"eps={eps} outside (0, {system.diameter_bound}]")
    direction = Direction(direction)
    if isinstance(system, CatMap) and not isinstance(x, DyadicTorusPoint):
        x = DyadicTorusPoint.from_point(x, system.bits_for(horizon) + 64)
    C = CantorApprox(system, x, eps, direction, horizon, seed, [[x]], [], EpsSchedule(eps),
                     [], [math.inf])
    for _ in range(k_max):
        refine(C, threads)
    C.membership = verify_membership(C, horizon)
    return C


def _symbolic_exact_horizon(points) -> int:
    span = max(max(abs(p.lo), abs(p.hi)) for p in points)
    if isinstance(points[0], SymbolSeq):
        period = _lcm(*[len(p.left_tail) for p in points], *[len(p.right_tail) for p in points])
    else:
        period = 1
    return span + 64 + period


def verify_membership(C: CantorApprox, horizon: int | None = None) -> Certificate:
    """``d(f^{-n} p, f^{-n} x) <= eps`` for every top-level ``p`` and ``0 <= n <= horizon``.

    For ``STABLE`` forward iterates are used.  For symbolic systems the check
    is extended past the point where every shifted window has left the
    coordinates that matter (to 2**-64), so it covers all ``n``.
    """
    f, x = C.system, C.base_point
    H = C.horizon if horizon is None else horizon
    exact = isinstance(x, (SymbolSeq, CubeSeq))
    if exact:
        H = max(H, _symbolic_exact_horizon(list(C.top) + [x]))
    lo, hi = (0, H) if C.direction is Direction.STABLE else (-H, 0)
    ox = f.orbit(x, lo, hi)
    worst = (0.0, 0, 0)
    for i, p in enumerate(C.top):
        for j, (a, b) in enumerate(zip(f.orbit(p, lo, hi), ox)):
            d = f.dist(a, b)
            if d > worst[0]:
                worst = (d, i, lo + j)
    return Certificate("membership", worst[0] <= C.eps, {
        "eps": C.eps, "horizon": H, "direction": C.direction.value,
        "worst_value": worst[0], "worst_point": worst[1], "worst_index": worst[2],
        "tail_exact": exact, "tail_bound": 2.0 ** -64 if exact else C.tail_bound,
    })
