"""Shadowing oracles, shadowing moduli and shadow verification.

Each model system gets a constructive oracle that returns a point ``z`` whose
orbit stays close to a given pseudo-orbit, together with the bound it
actually achieved (``achieved_eps``), verified by iterating ``z``.

Cat map
    Write the pseudo-orbit as ``x_k`` and the per-step errors as
    ``e_k = A x_k - x_{k+1}`` (lifted to ``[-1/2, 1/2)^2``).  The corrections
    ``w_k`` with ``x_k + w_k`` a true orbit satisfy ``w_{k+1} = A w_k + e_k``.
    In the eigenbasis the unique bounded solution sums the unstable part
    backward from the future and the stable part forward from the past.  Under
    the true-orbit extension ``e_k = 0`` outside the window, so both sums are
    finite and there is no truncation error.  Everything runs in fixed point
    at ``bits`` of precision and the returned point is a ``DyadicTorusPoint``
    whose orbit is then checked exactly.

Shifts
    ``z_n = (x_n)_0``: read coordinate 0 off every element of the extended
    pseudo-orbit.

North-south map
    Coarse scan plus golden-section refinement of ``max_n d(g^n(s), x_n)``.
    Failure to reach the requested bound is reported, not hidden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .certificates import Certificate, ShadowingError
from .pseudo_orbit import PseudoOrbit, defect
from .systems import (
    CAT_LAMBDA_S, CAT_LAMBDA_U, GOLDEN, CatMap, CirclePoint, CubeSeq, CubeShift,
    DyadicTorusPoint, FullShift, NorthSouth, ProductPoint, ProductSystem, SymbolSeq,
    System, _circ, _ns_lift_inverse, _wrap, shift_by, torus_dist_fixed,
)

# sum of the two geometric series: 1/(lambda_u - 1) + 1/(1 - lambda_s) = sqrt(5)
CAT_SERIES_BOUND = 1.0 / (CAT_LAMBDA_U - 1.0) + 1.0 / (1.0 - CAT_LAMBDA_S)
CAT_LIFT_LIMIT = 0.25
SYMBOLIC_TAIL_MARGIN = 64
NS_TAIL_MARGIN = 50


@dataclass(frozen=True)
class ShadowResult:
    point: object
    achieved_eps: float
    window: tuple
    tail_bound: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "point": self.point.to_dict(),
            "achieved_eps": self.achieved_eps,
            "window": list(self.window),
            "tail_bound": self.tail_bound,
            **self.details,
        }


@dataclass(frozen=True)
class ShadowingModulus:
    eps: float
    delta: float
    system: str
    constants: dict = field(default_factory=dict)
    certificate: Certificate | None = None

    def to_dict(self) -> dict:
        out = {"eps": self.eps, "delta": self.delta, "system": self.system,
               "constants": self.constants}
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_dict()
        return out


def _fail(message: str, **details):
    raise ShadowingError(message, Certificate("shadowing", False, details))


# ---------------------------------------------------------------------------
# cat map
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _cat_constants(bits: int) -> tuple:
    one = 1 << bits
    sqrt5 = math.isqrt(5 << (2 * bits))
    phi = (one + sqrt5) >> 1
    lam_s = (3 * one - sqrt5) >> 1
    norm2 = one + ((phi * phi) >> bits)  # (1 + phi^2) scaled
    return one, phi, lam_s, norm2


def _lift(x: int, bits: int) -> int:
    half = 1 << (bits - 1)
    return ((x + half) & ((1 << bits) - 1)) - half


def shadow_cat(po: PseudoOrbit, eps: float | None = None) -> ShadowResult:
    f = po.system
    d0 = defect(po)
    bound = d0 * CAT_SERIES_BOUND * CatMap.basis_constant
    if not bound < CAT_LIFT_LIMIT:
        _fail("defect too large for unambiguous lifts", defect=d0, correction_bound=bound,
              limit=CAT_LIFT_LIMIT)
    bits = CatMap.bits_for(max(-po.lo, po.hi) + 2)
    bits = max([bits] + [p.bits for p in po.points if isinstance(p, DyadicTorusPoint)])
    one, phi, lam_s, norm2 = _cat_constants(bits)
    pts = [DyadicTorusPoint.from_point(p, bits) for p in po.points]
    n = len(pts)

    # eigen-coordinates of the lifted errors: e = a_u (phi, 1) + a_s (1, -phi)
    err_u, err_s = [], []
    for a, b in zip(pts, pts[1:]):
        e1 = _lift(2 * a.num_u + a.num_v - b.num_u, bits)
        e2 = _lift(a.num_u + a.num_v - b.num_v, bits)
        err_u.append(((((e1 * phi) >> bits) + e2) << bits) // norm2)
        err_s.append(((e1 - ((e2 * phi) >> bits)) << bits) // norm2)

    w_s = [0] * n
    for k in range(n - 1):
        w_s[k + 1] = ((lam_s * w_s[k]) >> bits) + err_s[k]
    w_u = [0] * n
    for k in range(n - 2, -1, -1):
        w_u[k] = (lam_s * (w_u[k + 1] - err_u[k])) >> bits

    i0 = -po.lo
    au, as_ = w_u[i0], w_s[i0]
    x0 = pts[i0]
    z = DyadicTorusPoint(x0.num_u + ((au * phi) >> bits) + as_,
                         x0.num_v + au - ((as_ * phi) >> bits), bits)

    orbit = f.orbit(z, po.lo, po.hi)
    devs = [torus_dist_fixed(p, q) for p, q in zip(orbit, pts)]
    worst = max(range(n), key=devs.__getitem__)
    worst_value = devs[worst] / one
    # past the window the deviation is a pure decaying eigen-component
    eig_norm = math.sqrt(1.0 + GOLDEN * GOLDEN)
    tail_bound = max(abs(w_s[-1]), abs(w_u[0])) / one * eig_norm
    achieved = max(worst_value, tail_bound)
    details = {"bits": bits, "defect": d0, "worst_index": po.lo + worst,
               "window_worst": worst_value}
    if eps is not None and not achieved <= eps:
        _fail("achieved bound exceeds requested eps", eps=eps, achieved_eps=achieved, **details)
    return ShadowResult(z, achieved, (po.lo, po.hi), tail_bound, details)


# ---------------------------------------------------------------------------
# shifts
# ---------------------------------------------------------------------------


def _read_off(po: PseudoOrbit):
    first, last = po.points[0], po.points[-1]
    lo, hi = po.lo, po.hi

    def coord(n):
        if n < lo:
            return first.coord(n - lo)
        if n > hi:
            return last.coord(n - hi)
        return po.points[n - lo].coord(0)

    L = min(lo, lo + first.lo)
    H = max(hi, hi + last.hi)
    if isinstance(first, SymbolSeq):
        return SymbolSeq.assemble(coord, L, H, len(first.left_tail), len(last.right_tail),
                                  first.alphabet_size)
    return CubeSeq.assemble(coord, L, H)


def _shadow_symbolic(po: PseudoOrbit, eps: float | None) -> ShadowResult:
    f = po.system
    d0 = defect(po)
    if not d0 < 0.5:
        _fail("defect must be below 1/2 for the read-off construction", defect=d0)
    z = _read_off(po)
    m = SYMBOLIC_TAIL_MARGIN
    lo, hi = po.lo - m, po.hi + m
    targets = po.extended(lo, hi)
    devs = [f.dist(shift_by(z, k), x) for k, x in zip(range(lo, hi + 1), targets)]
    worst = max(range(len(devs)), key=devs.__getitem__)
    # beyond the checked range z and x_n agree on |i| <= margin
    tail_bound = 2.0 ** -(m + 1)
    achieved = max(devs[worst], tail_bound)
    details = {"defect": d0, "worst_index": lo + worst, "window_worst": devs[worst],
               "checked_range": [lo, hi], "exact": True}
    if eps is not None and not achieved <= eps:
        _fail("achieved bound exceeds requested eps", eps=eps, achieved_eps=achieved, **details)
    return ShadowResult(z, achieved, (po.lo, po.hi), tail_bound, details)


def shadow_shift(po: PseudoOrbit, eps: float | None = None) -> ShadowResult:
    return _shadow_symbolic(po, eps)


def shadow_cube(po: PseudoOrbit, eps: float | None = None) -> ShadowResult:
    return _shadow_symbolic(po, eps)


# ---------------------------------------------------------------------------
# north-south map
# ---------------------------------------------------------------------------


def _ns_max_deviation(f: NorthSouth, s: float, targets, lo: int) -> float:
    """``max_n d(g^n(s), targets[n - lo])``; same arithmetic as ``f.apply``/``f.inverse``."""
    a = f.amplitude
    sin, two_pi = math.sin, 2.0 * math.pi
    t0 = _wrap(s)
    worst = _circ(t0 - targets[-lo])
    t = t0
    for k in range(-lo + 1, len(targets)):
        t = _wrap(t - a * sin(two_pi * t))
        d = _circ(t - targets[k])
        if d > worst:
            worst = d
    t = t0
    for k in range(-lo - 1, -1, -1):
        t = _wrap(_ns_lift_inverse(t, a))
        d = _circ(t - targets[k])
        if d > worst:
            worst = d
    return worst


def _ns_scan(f: NorthSouth, cands, targets, lo: int):
    cur = (np.asarray(cands, dtype=float) % 1.0)[:, None]
    worst = _circ_np(cur[:, 0] - targets[-lo])
    q = cur
    for k in range(-lo + 1, len(targets)):
        q = f.apply_array(q)
        worst = np.maximum(worst, _circ_np(q[:, 0] - targets[k]))
    q = cur
    for k in range(-lo - 1, -1, -1):
        q = f.inverse_array(q)
        worst = np.maximum(worst, _circ_np(q[:, 0] - targets[k]))
    return worst


def _circ_np(d):
    d = np.abs(d) % 1.0
    return np.minimum(d, 1.0 - d)


def _golden_min(fun, a: float, b: float, iterations: int = 80):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iterations):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def shadow_ns(po: PseudoOrbit, eps: float | None = None, scan: int = 401) -> ShadowResult:
    f = po.system
    d0 = defect(po)
    m = NS_TAIL_MARGIN
    lo = po.lo - m
    targets = [p.t for p in po.extended(lo, po.hi + m)]
    x0 = targets[-lo]

    def objective(s):
        return _ns_max_deviation(f, s, targets, lo)

    best_s, best_val = x0, objective(x0)
    if best_val > 1e-15:
        radius = min(0.5, eps if eps is not None else max(8.0 * d0, 1e-9))
        cands = x0 + np.linspace(-radius, radius, scan)
        vals = _ns_scan(f, cands, np.asarray(targets), lo)
        j = int(np.argmin(vals))
        h = 2.0 * radius / (scan - 1)
        s, val = _golden_min(objective, float(cands[j]) - h, float(cands[j]) + h)
        for cand in (s, float(cands[j])):
            v = objective(cand)
            if v < best_val:
                best_s, best_val = cand, v
    z = CirclePoint(best_s)
    details = {"defect": d0, "checked_range": [lo, po.hi + m], "search": "scan+golden"}
    if eps is not None and not best_val <= eps:
        _fail("search did not reach the requested eps", eps=eps, achieved_eps=best_val, **details)
    tail = max(_circ(a.t - b.t) for a, b in zip(
        [f.iterate(z, lo), f.iterate(z, po.hi + m)], [po.point_at(lo), po.point_at(po.hi + m)]))
    return ShadowResult(z, best_val, (po.lo, po.hi), tail, details)


# ---------------------------------------------------------------------------
# products and dispatch
# ---------------------------------------------------------------------------


def shadow_product(po: PseudoOrbit, eps: float | None = None) -> ShadowResult:
    f = po.system
    left = shadow(PseudoOrbit(f.left, [p.left for p in po.points], po.lo), eps)
    right = shadow(PseudoOrbit(f.right, [p.right for p in po.points], po.lo), eps)
    return ShadowResult(
        ProductPoint(left.point, right.point),
        max(left.achieved_eps, right.achieved_eps),
        (po.lo, po.hi),
        max(left.tail_bound, right.tail_bound),
        {"left_achieved_eps": left.achieved_eps, "right_achieved_eps": right.achieved_eps},
    )


def shadow(po: PseudoOrbit, eps: float | None = None) -> ShadowResult:
    """Dispatch to the oracle for ``po.system``."""
    f = po.system
    if isinstance(f, CatMap):
        return shadow_cat(po, eps)
    if isinstance(f, FullShift):
        return shadow_shift(po, eps)
    if isinstance(f, CubeShift):
        return shadow_cube(po, eps)
    if isinstance(f, NorthSouth):
        return shadow_ns(po, eps)
    if isinstance(f, ProductSystem):
        return shadow_product(po, eps)
    raise TypeError(f"no shadowing oracle for {f!r}")


# ---------------------------------------------------------------------------
# moduli
# ---------------------------------------------------------------------------


def _random_ns_pseudo_orbit(f, delta, length, rng):
    pts = [f.random_point(rng)]
    for _ in range(length - 1):
        nxt = f.apply(pts[-1])
        pts.append(CirclePoint(nxt.t + 0.999 * delta * rng.uniform(-1.0, 1.0)))
    return PseudoOrbit(f, pts, 0)


@lru_cache(maxsize=128)
def _ns_modulus(amplitude: float, eps: float, trials: int, length: int, seed: int):
    f = NorthSouth(amplitude)
    delta = eps / 4.0
    tried = []
    for _ in range(30):
        rng = np.random.default_rng([seed, 0x5AD0])
        worst = 0.0
        ok = True
        for _ in range(trials):
            po = _random_ns_pseudo_orbit(f, delta, length, rng)
            try:
                worst = max(worst, shadow_ns(po, eps).achieved_eps)
            except ShadowingError:
                ok = False
                break
        tried.append({"delta": delta, "pass": ok, "worst_achieved": worst})
        if ok:
            cert = Certificate("modulus", True, {"trials": trials, "length": length, "seed": seed,
                                                 "tried": tried, "empirical": True})
            return delta, cert
        delta /= 2.0
    raise ShadowingError("no delta certified", Certificate("modulus", False, {"tried": tried}))


def modulus(system: System, eps: float, *, trials: int = 24, length: int = 30,
            seed: int = 0) -> ShadowingModulus:
    """``delta`` such that every delta-pseudo-orbit is eps-shadowed."""
    if not 0 < eps <= system.diameter_bound:
        raise ValueError(f"eps={eps} outside (0, {system.diameter_bound}]")
    if isinstance(system, CatMap):
        c = CatMap.basis_constant
        rate = max(1.0 / CAT_LAMBDA_U, CAT_LAMBDA_S)
        delta = eps * (1.0 - rate) / (2.0 * c)
        delta = min(delta, 0.999 * CAT_LIFT_LIMIT / (CAT_SERIES_BOUND * c))
        return ShadowingModulus(eps, delta, system.name, {
            "lambda_u": CAT_LAMBDA_U, "lambda_s": CAT_LAMBDA_S, "basis_constant": c})
    if isinstance(system, (FullShift, CubeShift)):
        return ShadowingModulus(eps, eps / 2.0, system.name, {})
    if isinstance(system, NorthSouth):
        delta, cert = _ns_modulus(system.amplitude, eps, trials, length, seed)
        return ShadowingModulus(eps, delta, system.name, {"amplitude": system.amplitude}, cert)
    if isinstance(system, ProductSystem):
        left = modulus(system.left, min(eps, system.left.diameter_bound),
                       trials=trials, length=length, seed=seed)
        right = modulus(system.right, min(eps, system.right.diameter_bound),
                        trials=trials, length=length, seed=seed)
        return ShadowingModulus(eps, min(left.delta, right.delta), system.name,
                                {"left": left.to_dict(), "right": right.to_dict()})
    raise TypeError(f"no shadowing modulus for {system!r}")


def verify_shadowing(po: PseudoOrbit, z, eps: float, horizon: int) -> Certificate:
    """Check ``d(f^n(z), x_n) <= eps`` for every ``|n| <= horizon``.

    The comparison is non-strict so that a ``ShadowResult`` replays at its own
    ``achieved_eps``.
    """
    f = po.system
    orbit = f.orbit(z, -horizon, horizon)
    targets = po.extended(-horizon, horizon)
    devs = [f.dist(a, b) for a, b in zip(orbit, targets)]
    worst = max(range(len(devs)), key=devs.__getitem__)
    return Certificate("shadowing", devs[worst] <= eps, {
        "eps": eps, "horizon": horizon, "worst_index": worst - horizon,
        "worst_value": devs[worst],
    })
