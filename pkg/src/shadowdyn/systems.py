"""Model systems: points, homeomorphisms, inverses and metrics.

Four concrete systems live here:

* ``CatMap`` -- the hyperbolic toral automorphism ``(u, v) -> (2u+v, u+v) mod 1``
  with the max of the two circle distances as metric.
* ``NorthSouth`` -- the circle map ``t -> t - 0.1 sin(2 pi t) mod 1``, attracting
  fixed point at 0 and repelling fixed point at 1/2.
* ``FullShift`` / ``CubeShift`` -- the shift on bi-infinite symbol sequences and on
  ``[0,1]^Z``.  Sequences are a finite window plus periodic (symbols) or
  constant (cube) tails, which keeps every metric exactly computable.
* ``ProductSystem`` -- componentwise product with the max metric.

Torus points come in two flavours.  ``TorusPoint`` holds doubles and is what
users pass around.  ``DyadicTorusPoint`` holds integers scaled by ``2**bits``;
the cat matrix and its inverse are integer matrices, so iterating a dyadic
point is exact.  Anything that follows an orbit for more than a handful of
steps (shadowing, the Cantor engine, membership checks) works on dyadic
points, because double rounding is amplified by ``2.618**n`` along orbits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
CAT_LAMBDA_U = (3.0 + math.sqrt(5.0)) / 2.0
CAT_LAMBDA_S = 1.0 / CAT_LAMBDA_U
NS_AMPLITUDE = 0.1
TWO_PI = 2.0 * math.pi


def _wrap(x: float) -> float:
    y = x % 1.0
    # (-tiny) % 1.0 rounds to 1.0
    return 0.0 if y >= 1.0 else y


def _circ(t: float) -> float:
    t = abs(t) % 1.0
    return min(t, 1.0 - t)


def _lcm(*values: int) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), values, 1)


# ---------------------------------------------------------------------------
# Points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusPoint:
    u: float
    v: float

    def __post_init__(self):
        object.__setattr__(self, "u", _wrap(float(self.u)))
        object.__setattr__(self, "v", _wrap(float(self.v)))

    def to_dict(self) -> dict:
        return {"u": self.u, "v": self.v}

    def coords(self) -> tuple:
        return (self.u, self.v)


def _float_to_fixed(x: float, bits: int) -> int:
    num, den = float(x).as_integer_ratio()
    k = den.bit_length() - 1
    if k <= bits:
        val = num << (bits - k)
    else:
        shift = k - bits
        val = (num + (1 << (shift - 1))) >> shift
    return val & ((1 << bits) - 1)


@dataclass(frozen=True)
class DyadicTorusPoint:
    """Torus point ``(num_u / 2**bits, num_v / 2**bits)``, exact under the cat map."""

    num_u: int
    num_v: int
    bits: int

    def __post_init__(self):
        mask = (1 << self.bits) - 1
        object.__setattr__(self, "num_u", self.num_u & mask)
        object.__setattr__(self, "num_v", self.num_v & mask)

    @classmethod
    def from_point(cls, p, bits: int) -> "DyadicTorusPoint":
        if isinstance(p, DyadicTorusPoint):
            if p.bits == bits:
                return p
            if p.bits < bits:
                return cls(p.num_u << (bits - p.bits), p.num_v << (bits - p.bits), bits)
            shift = p.bits - bits
            half = 1 << (shift - 1)
            return cls((p.num_u + half) >> shift, (p.num_v + half) >> shift, bits)
        return cls(_float_to_fixed(p.u, bits), _float_to_fixed(p.v, bits), bits)

    @property
    def u(self) -> float:
        return self.num_u / (1 << self.bits)

    @property
    def v(self) -> float:
        return self.num_v / (1 << self.bits)

    def to_float(self) -> TorusPoint:
        return TorusPoint(self.u, self.v)

    def coords(self) -> tuple:
        return (self.u, self.v)

    def to_dict(self) -> dict:
        return {
            "u": self.u,
            "v": self.v,
            "bits": self.bits,
            "u_num": format(self.num_u, "x"),
            "v_num": format(self.num_v, "x"),
        }


@dataclass(frozen=True)
class CirclePoint:
    t: float

    def __post_init__(self):
        object.__setattr__(self, "t", _wrap(float(self.t)))

    def to_dict(self) -> dict:
        return {"t": self.t}

    def coords(self) -> tuple:
        return (self.t,)


@dataclass(frozen=True)
class ProductPoint:
    left: object
    right: object

    def to_dict(self) -> dict:
        return {"left": self.left.to_dict(), "right": self.right.to_dict()}

    def coords(self) -> tuple:
        return tuple(self.left.coords()) + tuple(self.right.coords())


def _primitive_canonical(word: tuple) -> tuple:
    n = len(word)
    for d in range(1, n + 1):
        if n % d == 0 and word == word[d:] + word[:d]:
            root = word[:d]
            return min(root[i:] + root[:i] for i in range(d))
    return word


class SymbolSeq:
    """Bi-infinite sequence over ``{0, ..., alphabet_size-1}``.

    Coordinates ``lo .. hi`` are stored in ``window``.  Below ``lo`` the
    sequence repeats ``left_tail`` with ``left_tail[-1]`` at index ``lo-1``;
    above ``hi`` it repeats ``right_tail`` with ``right_tail[0]`` at ``hi+1``.
    Equality and hashing depend only on the logical sequence.
    """

    __slots__ = ("window", "lo", "left_tail", "right_tail", "alphabet_size")

    def __init__(self, window, lo=None, left_tail=(0,), right_tail=(0,), alphabet_size=2):
        window = tuple(int(s) for s in window)
        left_tail = tuple(int(s) for s in left_tail)
        right_tail = tuple(int(s) for s in right_tail)
        if alphabet_size < 1:
            raise ValueError("alphabet_size must be positive")
        if not left_tail or not right_tail:
            raise ValueError("tails must be non-empty")
        for s in window + left_tail + right_tail:
            if not 0 <= s < alphabet_size:
                raise ValueError(f"symbol {s} outside alphabet of size {alphabet_size}")
        self.window = window
        self.lo = -(len(window) // 2) if lo is None else int(lo)
        self.left_tail = left_tail
        self.right_tail = right_tail
        self.alphabet_size = int(alphabet_size)

    @property
    def hi(self) -> int:
        return self.lo + len(self.window) - 1

    def _moved(self, lo: int) -> "SymbolSeq":
        # same (already validated) data with the window placed at ``lo``
        out = object.__new__(SymbolSeq)
        out.window, out.lo, out.left_tail = self.window, lo, self.left_tail
        out.right_tail, out.alphabet_size = self.right_tail, self.alphabet_size
        return out

    @classmethod
    def constant(cls, symbol: int = 0, alphabet_size: int = 2) -> "SymbolSeq":
        return cls((), 0, (symbol,), (symbol,), alphabet_size)

    @classmethod
    def assemble(cls, coord, lo: int, hi: int, left_period: int, right_period: int,
                 alphabet_size: int) -> "SymbolSeq":
        """Build from a coordinate function periodic below ``lo`` / above ``hi``."""
        window = [coord(i) for i in range(lo, hi + 1)]
        left = [coord(lo - left_period + j) for j in range(left_period)]
        right = [coord(hi + 1 + j) for j in range(right_period)]
        return cls(window, lo, left, right, alphabet_size)

    def coord(self, i: int) -> int:
        if i < self.lo:
            return self.left_tail[(i - self.lo) % len(self.left_tail)]
        if i > self.hi:
            return self.right_tail[(i - self.hi - 1) % len(self.right_tail)]
        return self.window[i - self.lo]

    def __getitem__(self, i: int) -> int:
        return self.coord(i)

    def span(self, a: int, b: int) -> list:
        """Coordinates ``a .. b`` as a list."""
        lo, hi = self.lo, self.hi
        out = []
        if a < lo:
            tail, n = self.left_tail, len(self.left_tail)
            out.extend(tail[(i - lo) % n] for i in range(a, min(b + 1, lo)))
        if b >= lo and a <= hi:
            out.extend(self.window[max(a, lo) - lo:min(b, hi) - lo + 1])
        if b > hi:
            tail, n = self.right_tail, len(self.right_tail)
            out.extend(tail[(i - hi - 1) % n] for i in range(max(a, hi + 1), b + 1))
        return out

    def with_coord(self, i: int, symbol: int) -> "SymbolSeq":
        return SymbolSeq.assemble(
            lambda j: symbol if j == i else self.coord(j),
            min(self.lo, i), max(self.hi, i),
            len(self.left_tail), len(self.right_tail), self.alphabet_size,
        )

    def widened(self, n: int) -> "SymbolSeq":
        return SymbolSeq.assemble(
            self.coord, min(self.lo, -n), max(self.hi, n),
            len(self.left_tail), len(self.right_tail), self.alphabet_size,
        )

    def tail_horizon(self) -> int:
        """Index radius beyond which the sequence is purely periodic on both sides."""
        return max(abs(self.lo), abs(self.hi)) + 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymbolSeq):
            return NotImplemented
        return self.alphabet_size == other.alphabet_size and seq_dist(self, other) == 0.0

    def __hash__(self) -> int:
        return hash((self.alphabet_size, _primitive_canonical(self.left_tail),
                     _primitive_canonical(self.right_tail)))

    def __repr__(self) -> str:
        return (f"SymbolSeq(window={self.window}, lo={self.lo}, left_tail={self.left_tail}, "
                f"right_tail={self.right_tail}, alphabet_size={self.alphabet_size})")

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "lo": self.lo,
            "left_tail": list(self.left_tail),
            "right_tail": list(self.right_tail),
            "alphabet_size": self.alphabet_size,
        }

    def coords(self, radius: int = 8) -> tuple:
        return tuple(self.coord(i) for i in range(-radius, radius + 1))


class CubeSeq:
    """Point of ``[0,1]^Z``: window over ``lo .. hi`` plus constant tails."""

    __slots__ = ("window", "lo", "left_tail_value", "right_tail_value")

    def __init__(self, window, lo=None, left_tail_value=0.0, right_tail_value=0.0):
        window = tuple(float(x) for x in window)
        for x in window + (left_tail_value, right_tail_value):
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"cube coordinate {x} outside [0, 1]")
        self.window = window
        self.lo = -(len(window) // 2) if lo is None else int(lo)
        self.left_tail_value = float(left_tail_value)
        self.right_tail_value = float(right_tail_value)

    @property
    def hi(self) -> int:
        return self.lo + len(self.window) - 1

    @classmethod
    def constant(cls, value: float) -> "CubeSeq":
        return cls((), 0, value, value)

    @classmethod
    def assemble(cls, coord, lo: int, hi: int) -> "CubeSeq":
        return cls([coord(i) for i in range(lo, hi + 1)], lo, coord(lo - 1), coord(hi + 1))

    def coord(self, i: int) -> float:
        if i < self.lo:
            return self.left_tail_value
        if i > self.hi:
            return self.right_tail_value
        return self.window[i - self.lo]

    def __getitem__(self, i: int) -> float:
        return self.coord(i)

    def with_coord(self, i: int, value: float) -> "CubeSeq":
        return CubeSeq.assemble(lambda j: value if j == i else self.coord(j),
                                min(self.lo, i), max(self.hi, i))

    def widened(self, n: int) -> "CubeSeq":
        return CubeSeq.assemble(self.coord, min(self.lo, -n), max(self.hi, n))

    def tail_horizon(self) -> int:
        return max(abs(self.lo), abs(self.hi)) + 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, CubeSeq):
            return NotImplemented
        return cube_dist(self, other) == 0.0

    def __hash__(self) -> int:
        return hash((self.left_tail_value, self.right_tail_value))

    def __repr__(self) -> str:
        return (f"CubeSeq(window={self.window}, lo={self.lo}, "
                f"left_tail_value={self.left_tail_value}, right_tail_value={self.right_tail_value})")

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "lo": self.lo,
            "left_tail_value": self.left_tail_value,
            "right_tail_value": self.right_tail_value,
        }

    def coords(self, radius: int = 8) -> tuple:
        return tuple(self.coord(i) for i in range(-radius, radius + 1))


# ---------------------------------------------------------------------------
# Maps and metrics (module-level operations)
# ---------------------------------------------------------------------------


def cat_apply(p):
    if isinstance(p, DyadicTorusPoint):
        return DyadicTorusPoint(2 * p.num_u + p.num_v, p.num_u + p.num_v, p.bits)
    return TorusPoint(2.0 * p.u + p.v, p.u + p.v)


def cat_inverse(p):
    if isinstance(p, DyadicTorusPoint):
        return DyadicTorusPoint(p.num_u - p.num_v, 2 * p.num_v - p.num_u, p.bits)
    return TorusPoint(p.u - p.v, 2.0 * p.v - p.u)


def _fixed_circ(a: int, b: int, bits: int) -> int:
    mod = 1 << bits
    d = (a - b) & (mod - 1)
    return min(d, mod - d)


def torus_dist_fixed(p: DyadicTorusPoint, q: DyadicTorusPoint) -> int:
    """Exact distance scaled by ``2**bits`` (both points at the same precision)."""
    return max(_fixed_circ(p.num_u, q.num_u, p.bits), _fixed_circ(p.num_v, q.num_v, p.bits))


def torus_dist(p, q) -> float:
    if isinstance(p, DyadicTorusPoint) or isinstance(q, DyadicTorusPoint):
        bits = max(getattr(p, "bits", 0), getattr(q, "bits", 0))
        a = DyadicTorusPoint.from_point(p, bits)
        b = DyadicTorusPoint.from_point(q, bits)
        return torus_dist_fixed(a, b) / (1 << bits)
    return max(_circ(p.u - q.u), _circ(p.v - q.v))


def circle_dist(p: CirclePoint, q: CirclePoint) -> float:
    return _circ(p.t - q.t)


def shift_apply(s):
    """Left shift: coordinate ``i`` of the result is coordinate ``i+1`` of ``s``."""
    if isinstance(s, SymbolSeq):
        return s._moved(s.lo - 1)
    return CubeSeq(s.window, s.lo - 1, s.left_tail_value, s.right_tail_value)


def shift_inverse(s):
    if isinstance(s, SymbolSeq):
        return s._moved(s.lo + 1)
    return CubeSeq(s.window, s.lo + 1, s.left_tail_value, s.right_tail_value)


def shift_by(s, n: int):
    """``sigma^n(s)`` for any integer ``n``."""
    if isinstance(s, SymbolSeq):
        return s._moved(s.lo - n)
    return CubeSeq(s.window, s.lo - n, s.left_tail_value, s.right_tail_value)


def seq_dist(x: SymbolSeq, y: SymbolSeq) -> float:
    """``2**-k`` with ``k = min{|i| : x_i != y_i}``; 0 when equal.

    Closed form: with ``P`` the lcm of the four tail periods, both sequences
    are ``P``-periodic left of ``min(lo, 0)`` and right of ``max(hi, 0)``, and
    every difference further out has a copy within ``P`` steps of those
    indices that is closer to 0.  Scanning ``[min(lo,0)-P, max(hi,0)+P]`` in
    order of increasing ``|i|`` is therefore exact.
    """
    if x.alphabet_size != y.alphabet_size:
        raise ValueError("alphabet mismatch")
    period = _lcm(len(x.left_tail), len(x.right_tail), len(y.left_tail), len(y.right_tail))
    lo = min(x.lo, y.lo, 0) - period
    hi = max(x.hi, y.hi, 0) + period
    diffs = [abs(i) for i, (a, b) in enumerate(zip(x.span(lo, hi), y.span(lo, hi)), lo) if a != b]
    return 2.0 ** -min(diffs) if diffs else 0.0


def cube_dist(x: CubeSeq, y: CubeSeq) -> float:
    """``sup_i |x_i - y_i| / 2**|i|``.

    Outside ``[min(lo,0)-1, max(hi,0)+1]`` both tails are constant and the
    weights shrink away from 0, so the sup is attained inside that range.
    """
    lo = min(x.lo, y.lo, 0) - 1
    hi = max(x.hi, y.hi, 0) + 1
    best = 0.0
    for i in range(lo, hi + 1):
        d = math.ldexp(abs(x.coord(i) - y.coord(i)), -abs(i))
        if d > best:
            best = d
    return best


def ns_apply(p: CirclePoint, amplitude: float = NS_AMPLITUDE) -> CirclePoint:
    return CirclePoint(p.t - amplitude * math.sin(TWO_PI * p.t))


def _ns_lift_inverse(tau: float, amplitude: float) -> float:
    # F(s) = s - a sin(2 pi s) is increasing with |F(s) - s| <= a
    lo, hi = tau - amplitude, tau + amplitude
    s = tau
    for _ in range(100):
        f = s - amplitude * math.sin(TWO_PI * s) - tau
        if f > 0:
            hi = s
        else:
            lo = s
        step = f / (1.0 - amplitude * TWO_PI * math.cos(TWO_PI * s))
        s_new = s - step
        if not lo <= s_new <= hi:
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) < 4e-16:
            s = s_new
            break
        s = s_new
    return s


def ns_inverse(p: CirclePoint, amplitude: float = NS_AMPLITUDE) -> CirclePoint:
    return CirclePoint(_ns_lift_inverse(p.t, amplitude))


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------


class System:
    """A homeomorphism of a compact metric space.

    Subclasses provide ``apply``, ``inverse``, ``dist``, ``random_point``,
    ``sample_near`` and ``ring``.  Real-coordinate systems also set
    ``vectorized = True`` and implement the ``*_array`` methods on ``(N, dim)``
    coordinate arrays.
    """

    name = "system"
    diameter_bound = 1.0
    vectorized = False
    dim = 0

    def apply(self, p):
        raise NotImplementedError

    def inverse(self, p):
        raise NotImplementedError

    def dist(self, p, q) -> float:
        raise NotImplementedError

    def iterate(self, p, n: int):
        step = self.apply if n >= 0 else self.inverse
        for _ in range(abs(n)):
            p = step(p)
        return p

    def orbit(self, p, lo: int, hi: int) -> list:
        """Points ``f^n(p)`` for ``n = lo .. hi`` (requires ``lo <= 0 <= hi``)."""
        forward = [p]
        for _ in range(hi):
            forward.append(self.apply(forward[-1]))
        backward = []
        q = p
        for _ in range(-lo):
            q = self.inverse(q)
            backward.append(q)
        return backward[::-1] + forward

    def random_point(self, rng):
        raise NotImplementedError

    def sample_near(self, p, radius: float, rng):
        raise NotImplementedError

    def ring(self, p, radius: float) -> list:
        """Boundary samples of the ball ``B(p, radius)`` used by the probes."""
        raise NotImplementedError

    def decode(self, d: dict):
        raise NotImplementedError

    # vectorized interface
    def coords(self, points) -> np.ndarray:
        return np.array([q.coords() for q in points], dtype=float).reshape(len(points), self.dim)

    def from_coords(self, arr) -> list:
        raise NotImplementedError

    def apply_array(self, arr):
        raise NotImplementedError

    def inverse_array(self, arr):
        raise NotImplementedError

    def dist_array(self, a, b):
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


def _circ_array(d):
    d = np.abs(d) % 1.0
    return np.minimum(d, 1.0 - d)


class CatMap(System):
    """The automorphism of the 2-torus given by ``[[2, 1], [1, 1]]``."""

    name = "cat"
    diameter_bound = 0.5
    vectorized = True
    dim = 2
    matrix = ((2, 1), (1, 1))
    lambda_u = CAT_LAMBDA_U
    lambda_s = CAT_LAMBDA_S
    # max-norm unit eigenvectors
    unstable_direction = (1.0, 1.0 / GOLDEN)
    stable_direction = (1.0 / GOLDEN, -1.0)
    # |.|_inf <= |.|_2 <= sqrt(2) |.|_inf for the orthonormal eigenbasis
    basis_constant = math.sqrt(2.0)

    def apply(self, p):
        return cat_apply(p)

    def inverse(self, p):
        return cat_inverse(p)

    def dist(self, p, q) -> float:
        return torus_dist(p, q)

    def _exact(self, p, steps: int):
        # float iteration loses a factor lambda_u of accuracy per step; floats
        # are dyadic, so promote and iterate exactly
        if isinstance(p, TorusPoint) and steps > 1:
            return DyadicTorusPoint.from_point(p, self.bits_for(steps))
        return p

    def iterate(self, p, n: int):
        return super().iterate(self._exact(p, abs(n)), n)

    def orbit(self, p, lo: int, hi: int) -> list:
        return super().orbit(self._exact(p, max(-lo, hi)), lo, hi)

    @staticmethod
    def bits_for(steps: int) -> int:
        """Fixed-point precision that survives ``steps`` expanding iterations."""
        return 128 + math.ceil(math.log2(CAT_LAMBDA_U) * max(steps, 0))

    def random_point(self, rng):
        u, v = rng.random(2)
        return TorusPoint(u, v)

    def _displace(self, p, du: float, dv: float):
        if isinstance(p, DyadicTorusPoint):
            scale = 1 << p.bits
            return DyadicTorusPoint(p.num_u + round(du * scale), p.num_v + round(dv * scale), p.bits)
        return TorusPoint(p.u + du, p.v + dv)

    def sample_near(self, p, radius: float, rng):
        du, dv = rng.uniform(-radius, radius, 2)
        return self._displace(p, du, dv)

    def ring(self, p, radius: float, count: int = 32) -> list:
        out = []
        for j in range(count):
            c, s = math.cos(TWO_PI * j / count), math.sin(TWO_PI * j / count)
            m = max(abs(c), abs(s))
            out.append(self._displace(p, radius * c / m, radius * s / m))
        return out

    def decode(self, d: dict):
        if "bits" in d:
            return DyadicTorusPoint(int(d["u_num"], 16), int(d["v_num"], 16), int(d["bits"]))
        return TorusPoint(d["u"], d["v"])

    def from_coords(self, arr) -> list:
        return [TorusPoint(u, v) for u, v in np.asarray(arr, dtype=float)]

    def apply_array(self, arr):
        u, v = arr[:, 0], arr[:, 1]
        return np.stack([(2.0 * u + v) % 1.0, (u + v) % 1.0], axis=1)

    def inverse_array(self, arr):
        u, v = arr[:, 0], arr[:, 1]
        return np.stack([(u - v) % 1.0, (2.0 * v - u) % 1.0], axis=1)

    def dist_array(self, a, b):
        return np.max(_circ_array(a - b), axis=-1)


class NorthSouth(System):
    """``t -> t - a sin(2 pi t) mod 1`` with ``a = 0.1``.

    Fixed points: 0 (attracting, derivative ``1 - 2 pi a``) and 1/2
    (repelling, derivative ``1 + 2 pi a``).
    """

    name = "ns"
    diameter_bound = 0.5
    vectorized = True
    dim = 1

    def __init__(self, amplitude: float = NS_AMPLITUDE):
        if not 0 < amplitude * TWO_PI < 1:
            raise ValueError("amplitude must keep the map a diffeomorphism")
        self.amplitude = amplitude

    def apply(self, p):
        return ns_apply(p, self.amplitude)

    def inverse(self, p):
        return ns_inverse(p, self.amplitude)

    def dist(self, p, q) -> float:
        return circle_dist(p, q)

    def derivative_bounds(self, grid: float = 1e-4) -> tuple:
        """Certified enclosure of ``g'`` on the circle by cellwise interval bounds.

        On a cell of width ``h`` centred at ``c``, ``|cos(2 pi t) - cos(2 pi c)|
        <= pi h``, so ``g'`` lies within ``2 pi a * pi h`` of its value at ``c``.
        """
        n = int(math.ceil(1.0 / grid))
        h = 1.0 / n
        centers = (np.arange(n) + 0.5) * h
        vals = 1.0 - self.amplitude * TWO_PI * np.cos(TWO_PI * centers)
        slack = self.amplitude * TWO_PI * math.pi * h
        return float(vals.min() - slack), float(vals.max() + slack)

    def random_point(self, rng):
        return CirclePoint(rng.random())

    def sample_near(self, p, radius: float, rng):
        return CirclePoint(p.t + rng.uniform(-radius, radius))

    def ring(self, p, radius: float) -> list:
        return [CirclePoint(p.t - radius), CirclePoint(p.t + radius)]

    def decode(self, d: dict):
        return CirclePoint(d["t"])

    def from_coords(self, arr) -> list:
        return [CirclePoint(t) for t in np.asarray(arr, dtype=float).reshape(-1)]

    def apply_array(self, arr):
        t = arr[:, 0]
        return ((t - self.amplitude * np.sin(TWO_PI * t)) % 1.0)[:, None]

    def inverse_array(self, arr):
        tau = arr[:, 0]
        a = self.amplitude
        lo, hi = tau - a, tau + a
        s = tau.copy()
        for _ in range(100):
            f = s - a * np.sin(TWO_PI * s) - tau
            hi = np.where(f > 0, s, hi)
            lo = np.where(f > 0, lo, s)
            s_new = s - f / (1.0 - a * TWO_PI * np.cos(TWO_PI * s))
            bad = (s_new < lo) | (s_new > hi)
            s_new = np.where(bad, 0.5 * (lo + hi), s_new)
            done = np.all(np.abs(s_new - s) < 4e-16)
            s = s_new
            if done:
                break
        return (s % 1.0)[:, None]

    def dist_array(self, a, b):
        return _circ_array(a[..., 0] - b[..., 0])

    def __repr__(self) -> str:
        return f"NorthSouth(amplitude={self.amplitude})"


class CircleRotation(System):
    """Rigid rotation ``t -> t + alpha``; ``alpha = 0`` is the identity."""

    vectorized = True
    dim = 1
    diameter_bound = 0.5

    def __init__(self, alpha: float = 0.0):
        self.alpha = float(alpha)
        self.name = "identity" if self.alpha == 0.0 else "rotation"

    def apply(self, p):
        return CirclePoint(p.t + self.alpha)

    def inverse(self, p):
        return CirclePoint(p.t - self.alpha)

    def dist(self, p, q) -> float:
        return circle_dist(p, q)

    def random_point(self, rng):
        return CirclePoint(rng.random())

    def sample_near(self, p, radius, rng):
        return CirclePoint(p.t + rng.uniform(-radius, radius))

    def ring(self, p, radius):
        return [CirclePoint(p.t - radius), CirclePoint(p.t + radius)]

    def decode(self, d):
        return CirclePoint(d["t"])

    def from_coords(self, arr):
        return [CirclePoint(t) for t in np.asarray(arr, dtype=float).reshape(-1)]

    def apply_array(self, arr):
        return (arr + self.alpha) % 1.0

    def inverse_array(self, arr):
        return (arr - self.alpha) % 1.0

    def dist_array(self, a, b):
        return _circ_array(a[..., 0] - b[..., 0])


def _sequence_depth(radius: float) -> int:
    """Smallest ``m >= 0`` with ``2**-m < radius``."""
    m = 0
    while 2.0 ** -m >= radius:
        m += 1
    return m


class FullShift(System):
    name = "shift"
    diameter_bound = 1.0

    def __init__(self, alphabet_size: int = 2, sample_radius: int = 8):
        if alphabet_size < 2:
            raise ValueError("the full shift needs at least two symbols")
        self.alphabet_size = alphabet_size
        self.sample_radius = sample_radius

    def apply(self, p):
        return shift_apply(p)

    def inverse(self, p):
        return shift_inverse(p)

    def iterate(self, p, n):
        return shift_by(p, n)

    def orbit(self, p, lo, hi):
        return [shift_by(p, n) for n in range(lo, hi + 1)]

    def dist(self, p, q) -> float:
        return seq_dist(p, q)

    def _random_word(self, rng, n):
        return tuple(int(s) for s in rng.integers(0, self.alphabet_size, n))

    def random_point(self, rng):
        r = self.sample_radius
        return SymbolSeq(self._random_word(rng, 2 * r + 1), -r,
                         self._random_word(rng, int(rng.integers(1, 3))),
                         self._random_word(rng, int(rng.integers(1, 3))), self.alphabet_size)

    def sample_near(self, p, radius, rng):
        m = _sequence_depth(radius)
        r = max(self.sample_radius, m)
        q = p.widened(r)
        for i in range(-r, r + 1):
            if abs(i) >= m:
                q = q.with_coord(i, int(rng.integers(0, self.alphabet_size)))
        return q

    def ring(self, p, radius):
        m = _sequence_depth(radius)
        out = []
        for i in (m, -m) if m else (0,):
            for s in range(self.alphabet_size):
                if s != p.coord(i):
                    out.append(p.with_coord(i, s))
        return out

    def decode(self, d):
        return SymbolSeq(d["window"], d["lo"], d["left_tail"], d["right_tail"],
                         d.get("alphabet_size", self.alphabet_size))

    def __repr__(self):
        return f"FullShift(alphabet_size={self.alphabet_size})"


class CubeShift(System):
    """The shift on ``[0,1]^Z`` with ``d(x, y) = sup |x_i - y_i| / 2**|i|``."""

    name = "cube"
    diameter_bound = 1.0

    def __init__(self, sample_radius: int = 8):
        self.sample_radius = sample_radius

    def apply(self, p):
        return shift_apply(p)

    def inverse(self, p):
        return shift_inverse(p)

    def iterate(self, p, n):
        return shift_by(p, n)

    def orbit(self, p, lo, hi):
        return [shift_by(p, n) for n in range(lo, hi + 1)]

    def dist(self, p, q) -> float:
        return cube_dist(p, q)

    def random_point(self, rng):
        r = self.sample_radius
        return CubeSeq(rng.random(2 * r + 1), -r, float(rng.random()), float(rng.random()))

    def sample_near(self, p, radius, rng):
        r = max(self.sample_radius, _sequence_depth(radius))
        q = p.widened(r)
        for i in range(-r, r + 1):
            width = 0.999 * radius * 2.0 ** abs(i)
            val = min(1.0, max(0.0, q.coord(i) + rng.uniform(-width, width)))
            q = q.with_coord(i, val)
        return q

    def ring(self, p, radius):
        out = []
        for val in (p.coord(0) - radius, p.coord(0) + radius):
            val = min(1.0, max(0.0, val))
            if val != p.coord(0):
                out.append(p.with_coord(0, val))
        m = _sequence_depth(radius)
        if m > 0:
            for i in (m, -m):
                for val in (0.0, 1.0):
                    if val != p.coord(i):
                        out.append(p.with_coord(i, val))
        return out

    def decode(self, d):
        return CubeSeq(d["window"], d["lo"], d["left_tail_value"], d["right_tail_value"])

    def __repr__(self):
        return "CubeShift()"


class ProductSystem(System):
    """``f x g`` with ``d((x, y), (x', y')) = max(d_X(x, x'), d_Y(y, y'))``."""

    name = "product"

    def __init__(self, left: System, right: System):
        self.left = left
        self.right = right
        self.diameter_bound = max(left.diameter_bound, right.diameter_bound)
        self.vectorized = left.vectorized and right.vectorized
        self.dim = left.dim + right.dim

    def apply(self, p):
        return ProductPoint(self.left.apply(p.left), self.right.apply(p.right))

    def inverse(self, p):
        return ProductPoint(self.left.inverse(p.left), self.right.inverse(p.right))

    def iterate(self, p, n):
        return ProductPoint(self.left.iterate(p.left, n), self.right.iterate(p.right, n))

    def orbit(self, p, lo, hi):
        return [ProductPoint(a, b) for a, b in
                zip(self.left.orbit(p.left, lo, hi), self.right.orbit(p.right, lo, hi))]

    def dist(self, p, q) -> float:
        return max(self.left.dist(p.left, q.left), self.right.dist(p.right, q.right))

    def random_point(self, rng):
        return ProductPoint(self.left.random_point(rng), self.right.random_point(rng))

    def sample_near(self, p, radius, rng):
        return ProductPoint(self.left.sample_near(p.left, radius, rng),
                            self.right.sample_near(p.right, radius, rng))

    def ring(self, p, radius):
        return ([ProductPoint(a, p.right) for a in self.left.ring(p.left, radius)]
                + [ProductPoint(p.left, b) for b in self.right.ring(p.right, radius)])

    def decode(self, d):
        return ProductPoint(self.left.decode(d["left"]), self.right.decode(d["right"]))

    def coords(self, points):
        return np.hstack([self.left.coords([q.left for q in points]),
                          self.right.coords([q.right for q in points])])

    def from_coords(self, arr):
        arr = np.asarray(arr, dtype=float)
        k = self.left.dim
        return [ProductPoint(a, b) for a, b in
                zip(self.left.from_coords(arr[:, :k]), self.right.from_coords(arr[:, k:]))]

    def apply_array(self, arr):
        k = self.left.dim
        return np.hstack([self.left.apply_array(arr[:, :k]), self.right.apply_array(arr[:, k:])])

    def inverse_array(self, arr):
        k = self.left.dim
        return np.hstack([self.left.inverse_array(arr[:, :k]), self.right.inverse_array(arr[:, k:])])

    def dist_array(self, a, b):
        k = self.left.dim
        return np.maximum(self.left.dist_array(a[..., :k], b[..., :k]),
                          self.right.dist_array(a[..., k:], b[..., k:]))

    def __repr__(self):
        return f"ProductSystem({self.left!r}, {self.right!r})"


def product_apply(system: ProductSystem, p: ProductPoint) -> ProductPoint:
    return system.apply(p)


def product_dist(system: ProductSystem, p: ProductPoint, q: ProductPoint) -> float:
    return system.dist(p, q)


class InverseSystem(System):
    """``f^{-1}`` as a system in its own right (same space, same metric)."""

    def __init__(self, base: System):
        self.base = base
        self.name = base.name + "_inv"
        self.diameter_bound = base.diameter_bound
        self.vectorized = base.vectorized
        self.dim = base.dim

    def apply(self, p):
        return self.base.inverse(p)

    def inverse(self, p):
        return self.base.apply(p)

    def iterate(self, p, n):
        return self.base.iterate(p, -n)

    def orbit(self, p, lo, hi):
        return self.base.orbit(p, -hi, -lo)[::-1]

    def dist(self, p, q):
        return self.base.dist(p, q)

    def random_point(self, rng):
        return self.base.random_point(rng)

    def sample_near(self, p, radius, rng):
        return self.base.sample_near(p, radius, rng)

    def ring(self, p, radius):
        return self.base.ring(p, radius)

    def decode(self, d):
        return self.base.decode(d)

    def coords(self, points):
        return self.base.coords(points)

    def from_coords(self, arr):
        return self.base.from_coords(arr)

    def apply_array(self, arr):
        return self.base.inverse_array(arr)

    def inverse_array(self, arr):
        return self.base.apply_array(arr)

    def dist_array(self, a, b):
        return self.base.dist_array(a, b)

    def __repr__(self):
        return f"InverseSystem({self.base!r})"


def make_system(kind: str, alphabet_size: int = 2) -> System:
    """Construct one of the named systems (``cat``, ``ns``, ``shift``, ``cube``,
    ``product`` = cat x ns, ``identity``)."""
    kinds = {
        "cat": CatMap,
        "ns": NorthSouth,
        "shift": lambda: FullShift(alphabet_size),
        "cube": CubeShift,
        "product": lambda: ProductSystem(CatMap(), NorthSouth()),
        "identity": CircleRotation,
    }
    if kind not in kinds:
        raise ValueError(f"unknown system {kind!r}; expected one of {sorted(kinds)}")
    return kinds[kind]()


def coord_names(system: System) -> list:
    """Column names matching ``point.coords()`` for CSV export."""
    if isinstance(system, InverseSystem):
        return coord_names(system.base)
    if isinstance(system, ProductSystem):
        return [f"left_{c}" for c in coord_names(system.left)] + \
               [f"right_{c}" for c in coord_names(system.right)]
    if isinstance(system, CatMap):
        return ["u", "v"]
    if isinstance(system, (FullShift, CubeShift)):
        return [f"x{i}" for i in range(-8, 9)]
    return ["t"]
