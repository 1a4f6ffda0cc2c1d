"""Finite representations of delta-pseudo-orbits and limit pseudo-orbits.

A ``PseudoOrbit`` stores points for indices ``lo .. hi``.  Outside the window
it is extended by true orbits (``BY_TRUE_ORBIT``): indices below ``lo`` follow
the backward orbit of ``points[lo]`` and indices above ``hi`` the forward orbit
of ``points[hi]``.  The extension has zero jumps, so the windowed defect is
the defect of the whole bi-infinite sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .certificates import Certificate, PseudoOrbitError
from .systems import System

BY_TRUE_ORBIT = "BY_TRUE_ORBIT"


@dataclass(frozen=True)
class PseudoOrbit:
    system: System
    points: tuple
    lo: int = 0
    offset: int = 0
    extension: str = BY_TRUE_ORBIT

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise ValueError("a pseudo-orbit needs at least one point")
        if self.lo > 0 or self.hi < 0:
            raise ValueError("window must contain index 0")

    @property
    def hi(self) -> int:
        return self.lo + len(self.points) - 1

    def __len__(self) -> int:
        return len(self.points)

    def point_at(self, n: int):
        if n < self.lo:
            return self.system.iterate(self.points[0], n - self.lo)
        if n > self.hi:
            return self.system.iterate(self.points[-1], n - self.hi)
        return self.points[n - self.lo]

    def extended(self, lo: int, hi: int) -> list:
        """Points for indices ``lo .. hi`` under the extension convention."""
        f = self.system
        out = []
        if lo < self.lo:
            out.extend(f.orbit(self.points[0], lo - self.lo, 0)[:-1])
        a, b = max(lo, self.lo), min(hi, self.hi)
        out.extend(self.points[a - self.lo:b - self.lo + 1])
        if hi > self.hi:
            out.extend(f.orbit(self.points[-1], 0, hi - self.hi)[1:])
        return out

    def jumps(self) -> list:
        """``[(k, d(f(x_k), x_{k+1})) for k in lo .. hi-1]``."""
        f = self.system
        return [(self.lo + j, f.dist(f.apply(a), b))
                for j, (a, b) in enumerate(zip(self.points, self.points[1:]))]

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "offset": self.offset,
            "system": self.system.name,
            "extension": self.extension,
            "points": [p.to_dict() for p in self.points],
        }

    @classmethod
    def from_dict(cls, system: System, d: dict) -> "PseudoOrbit":
        return cls(system, [system.decode(p) for p in d["points"]], d["lo"], d.get("offset", 0))


@dataclass(frozen=True)
class LimitPseudoOrbit:
    """Forward sequence ``x_0 .. x_hi`` with its recorded defect profile.

    ``defects[k] = d(f(x_k), x_{k+1})``.  Decay to 0 is only ever claimed over
    the recorded prefix.
    """

    system: System
    points: tuple
    defects: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise ValueError("a limit pseudo-orbit needs at least one point")
        if self.defects is None:
            f = self.system
            object.__setattr__(self, "defects", tuple(
                f.dist(f.apply(a), b) for a, b in zip(self.points, self.points[1:])))
        else:
            object.__setattr__(self, "defects", tuple(float(d) for d in self.defects))
        if any(d < 0 for d in self.defects):
            raise ValueError("defects must be non-negative")

    @property
    def hi(self) -> int:
        return len(self.points) - 1

    def envelope(self) -> list:
        """Suffix maxima of the defects: ``E_k = max_{j >= k} defects[j]``."""
        out = [0.0] * len(self.defects)
        run = 0.0
        for k in range(len(self.defects) - 1, -1, -1):
            run = max(run, self.defects[k])
            out[k] = run
        return out


def defect(po: PseudoOrbit) -> float:
    return max((d for _, d in po.jumps()), default=0.0)


def splice(system: System, x, x1, back: int, fwd: int) -> PseudoOrbit:
    """Past of ``x`` joined to the future of ``x1``.

    ``points[k] = f^k(x)`` for ``k in [-back, -1]`` and ``f^k(x1)`` for
    ``k in [0, fwd]``.  The only nonzero jump is ``d(f(f^{-1} x), x1)``.
    """
    if back < 1 or fwd < 1:
        raise ValueError("back and fwd must be at least 1")
    past = system.orbit(x, -back, 0)[:-1]
    future = system.orbit(x1, 0, fwd)
    return PseudoOrbit(system, past + future, -back)


def first_valid_index(defects, delta: float):
    """Smallest ``N`` with ``defects[k] < delta`` for every ``k >= N``, or ``None``."""
    n = len(defects)
    while n > 0 and defects[n - 1] < delta:
        n -= 1
    return n if n < len(defects) or not defects else None


def splice_limit(lpo: LimitPseudoOrbit, delta: float, N: int | None = None) -> PseudoOrbit:
    """Drop the first ``N`` points and let the past be the backward orbit of ``x_N``.

    The result has windowed defect ``< delta`` and ``offset = N``; if ``z``
    shadows it, ``f^{-N}(z)`` tracks the original sequence.
    """
    if N is None:
        N = first_valid_index(lpo.defects, delta)
        if N is None or N > lpo.hi:
            cert = Certificate("splice_limit", False, {
                "delta": delta, "horizon": lpo.hi,
                "min_tail_defect": min(lpo.defects) if lpo.defects else 0.0,
            })
            raise PseudoOrbitError("defects never fall below delta in the recorded prefix", cert)
    if not 0 <= N <= lpo.hi:
        raise ValueError(f"N={N} outside [0, {lpo.hi}]")
    bad = [k for k in range(N, len(lpo.defects)) if not lpo.defects[k] < delta]
    if bad:
        cert = Certificate("splice_limit", False, {"delta": delta, "N": N, "first_bad_index": bad[0]})
        raise PseudoOrbitError(f"defect at index {bad[0]} is not below delta", cert)
    return PseudoOrbit(lpo.system, lpo.points[N:], 0, offset=N)


def validate(po: PseudoOrbit, delta: float) -> Certificate:
    """Strict check ``defect(po) < delta``; a jump equal to delta fails."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    jumps = po.jumps()
    worst_index, worst_value = max(jumps, key=lambda kv: kv[1], default=(po.lo, 0.0))
    failing = [k for k, d in jumps if not d < delta]
    return Certificate("pseudo_orbit", not failing, {
        "delta": delta,
        "lo": po.lo,
        "hi": po.hi,
        "worst_index": worst_index,
        "worst_value": worst_value,
        "failing_indices": failing,
    })
