"""Poisson building processes on windows of the line.

A :class:`Landscape` holds a sorted window of buildings together with the
interval it certifies as fully generated.  Windows grow lazily in either
direction; the new part is independent of the old one, so extension is exact.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .heights import HeightModel, line_tail_integral


class NegativeLine(ValueError):
    """A comparison line or curve dips below ground on the interval."""


class DuplicateBase(ValueError):
    """Two buildings share a base position."""


class Building(NamedTuple):
    x: float
    h: float


class IntensityProfile:
    """Constant or piecewise-constant intensity ``x -> lambda(x)``.

    Piecewise profiles are given by interior knots ``k_1 < ... < k_{m-1}`` and
    ``m`` rates; the first and last rates extend to infinity.
    """

    def __init__(self, rate: float = 1.0, *, knots=None, rates=None):
        if knots is None:
            if not rate > 0:
                raise ValueError("intensity must be positive")
            self.knots = np.empty(0)
            self.rates = np.array([float(rate)])
        else:
            self.knots = np.asarray(knots, dtype=float)
            self.rates = np.asarray(rates, dtype=float)
            if self.rates.size != self.knots.size + 1 or self.knots.size == 0:
                raise ValueError("need len(rates) == len(knots) + 1 >= 2")
            if np.any(np.diff(self.knots) <= 0) or np.any(self.rates < 0) or not np.all(np.isfinite(self.rates)):
                raise ValueError("knots must increase and rates be finite and nonnegative")
        self.is_constant = self.knots.size == 0
        if not self.is_constant:
            widths = np.diff(self.knots)
            self._lam_k = np.concatenate([[0.0], np.cumsum(self.rates[1:-1] * widths)])

    @classmethod
    def constant(cls, rate: float) -> "IntensityProfile":
        return cls(rate)

    @classmethod
    def piecewise(cls, knots, rates) -> "IntensityProfile":
        return cls(knots=knots, rates=rates)

    @property
    def rate_const(self) -> float:
        if not self.is_constant:
            raise ValueError("profile is not constant")
        return float(self.rates[0])

    @property
    def reference_rate(self) -> float:
        """Scale used for default window widths: the smallest positive rate."""
        pos = self.rates[self.rates > 0]
        return float(pos.min()) if pos.size else 1.0

    def rate(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            out = np.full(x.shape, self.rates[0])
        else:
            out = self.rates[np.searchsorted(self.knots, x, side="right")]
        return float(out) if out.ndim == 0 else out

    def cumulative(self, x):
        """``Lambda(x) = int_{k_1}^x lambda`` (origin at 0 for constant profiles)."""
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            out = self.rates[0] * x
        else:
            i = np.searchsorted(self.knots, x, side="right")
            j = np.maximum(i - 1, 0)
            with np.errstate(invalid="ignore"):
                out = self._lam_k[j] + self.rates[i] * (x - self.knots[j])
            out = np.where(self.rates[i] == 0, self._lam_k[j], out)
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_constant:
            out = y / self.rates[0]
        else:
            i = np.searchsorted(self._lam_k, y, side="right")
            j = np.maximum(i - 1, 0)
            r = self.rates[i]
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(r > 0, self.knots[j] + (y - self._lam_k[j]) / np.where(r > 0, r, 1.0),
                               np.where(i == 0, -np.inf, np.inf))
        return float(out) if np.ndim(out) == 0 else out

    def mass(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        if self.is_constant:
            return float(self.rates[0] * (b - a))
        total = 0.0
        for lo, hi, r in self.pieces(a, b):
            if r > 0:
                total += r * (hi - lo)
        return total

    def pieces(self, a: float, b: float):
        """Constant-rate pieces ``(lo, hi, rate)`` covering ``[a, b]``."""
        if self.is_constant:
            return [(a, b, float(self.rates[0]))]
        cuts = [a] + [k for k in self.knots if a < k < b] + [b]
        out = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            mid = lo + 0.5 * (hi - lo) if math.isfinite(hi - lo) else (lo + 1.0 if math.isfinite(lo) else hi - 1.0)
            out.append((lo, hi, float(self.rate(mid))))
        return out

    def mirrored(self) -> "IntensityProfile":
        """Profile of ``x -> lambda(-x)``, used to sample leftward."""
        if self.is_constant:
            return self
        return IntensityProfile(knots=-self.knots[::-1], rates=self.rates[::-1])

    def to_dict(self):
        if self.is_constant:
            return {"rate": float(self.rates[0])}
        return {"knots": self.knots.tolist(), "rates": self.rates.tolist()}

    @classmethod
    def from_value(cls, value) -> "IntensityProfile":
        if isinstance(value, IntensityProfile):
            return value
        if isinstance(value, dict):
            value = dict(value)
            if "rate" in value and len(value) == 1:
                return cls(value["rate"])
            knots, rates = value.pop("knots"), value.pop("rates")
            if value:
                raise ValueError(f"unknown intensity keys: {sorted(value)}")
            return cls(knots=knots, rates=rates)
        return cls(float(value))


def as_profile(lam) -> IntensityProfile:
    return IntensityProfile.from_value(lam)


@dataclass
class Landscape:
    """Sorted buildings of a window plus the interval they certify.

    Each covered segment carries a height floor: every building of the segment
    that is at least as tall as the floor is present.  Ordinary windows have
    floor 0.  Raised floors let a blockage search reach far to the right while
    generating only the buildings that can matter.
    """

    x: np.ndarray
    h: np.ndarray
    lo: float
    hi: float
    profile: IntensityProfile
    heights: HeightModel
    rng: np.random.Generator | None = None
    segments: list = field(default_factory=list)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.h = np.ascontiguousarray(self.h, dtype=float)
        if self.x.size > 1 and np.any(np.diff(self.x) <= 0):
            raise DuplicateBase("building bases must be strictly increasing")
        if np.any(self.h < 0):
            raise ValueError("heights must be nonnegative")
        if self.x.size and (self.x[0] < self.lo or self.x[-1] > self.hi):
            raise ValueError("buildings outside the covered interval")
        if not self.segments and self.hi > self.lo:
            self.segments = [[self.lo, self.hi, 0.0]]

    def __len__(self):
        return int(self.x.size)

    @property
    def covered(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def buildings(self) -> list[Building]:
        return [Building(float(a), float(b)) for a, b in zip(self.x, self.h)]

    def _rng(self):
        if self.rng is None:
            self.rng = np.random.default_rng()
        return self.rng

    def _merge(self, nx, nh):
        if nx.size == 0:
            return
        x = np.concatenate([self.x, nx])
        h = np.concatenate([self.h, nh])
        order = np.argsort(x, kind="stable")
        self.x, self.h = np.ascontiguousarray(x[order]), np.ascontiguousarray(h[order])

    def extend_right(self, delta: float, floor: float = 0.0) -> "Landscape":
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        if delta > 0:
            nx, nh = _poisson_window(self.profile, self.heights, self.hi, self.hi + delta, self._rng(), floor)
            self.x = np.concatenate([self.x, nx])
            self.h = np.concatenate([self.h, nh])
            self.segments.append([self.hi, self.hi + delta, float(floor)])
            self.hi += delta
        return self

    def extend_left(self, delta: float, floor: float = 0.0) -> "Landscape":
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        if delta > 0:
            nx, nh = _poisson_window(self.profile, self.heights, self.lo - delta, self.lo, self._rng(), floor)
            self.x = np.concatenate([nx, self.x])
            self.h = np.concatenate([nh, self.h])
            self.segments.insert(0, [self.lo - delta, self.lo, float(floor)])
            self.lo -= delta
        return self

    def ensure_right(self, b: float, floor: float = 0.0) -> "Landscape":
        if b > self.hi:
            self.extend_right(b - self.hi, floor)
        return self

    def ensure_left(self, a: float, floor: float = 0.0) -> "Landscape":
        if a < self.lo:
            self.extend_left(self.lo - a, floor)
        return self

    def floor_on(self, a: float, b: float) -> float:
        """Highest floor among covered segments meeting ``(a, b)``."""
        fl = [f for s0, s1, f in self.segments if s1 > a and s0 < b]
        return max(fl) if fl else 0.0

    def lower_floor(self, a: float, b: float, floor: float) -> "Landscape":
        """Generate the missing height band so that ``[a, b]`` has floor at most ``floor``."""
        out = []
        for s0, s1, f in self.segments:
            if f <= floor or s1 <= a or s0 >= b:
                out.append([s0, s1, f])
                continue
            c0, c1 = max(s0, a), min(s1, b)
            nx, nh = _poisson_window(self.profile, self.heights, c0, c1, self._rng(), floor, f)
            self._merge(nx, nh)
            if s0 < c0:
                out.append([s0, c0, f])
            out.append([c0, c1, float(floor)])
            if c1 < s1:
                out.append([c1, s1, f])
        self.segments = out
        return self

    def palm_add(self, x: float, h: float) -> "Landscape":
        if not self.lo <= x <= self.hi:
            raise ValueError("building outside the covered interval")
        if h < 0:
            raise ValueError("height must be nonnegative")
        i = int(np.searchsorted(self.x, x))
        if i < self.x.size and self.x[i] == x:
            raise DuplicateBase(f"a building already stands at x={x}")
        self.x = np.insert(self.x, i, x)
        self.h = np.insert(self.h, i, h)
        return self

    def index_of(self, x: float) -> int:
        i = int(np.searchsorted(self.x, x))
        if i >= self.x.size or self.x[i] != x:
            raise KeyError(x)
        return i

    def copy(self) -> "Landscape":
        return Landscape(self.x.copy(), self.h.copy(), self.lo, self.hi, self.profile, self.heights, self.rng,
                         [list(seg) for seg in self.segments])

    # -- serialization ---------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# covered={self.lo!r},{self.hi!r}\n")
        for s0, s1, f in self.segments:
            if f > 0:
                buf.write(f"# floor={s0!r},{s1!r},{f!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "h"])
        for a, b in zip(self.x, self.h):
            w.writerow([repr(float(a)), repr(float(b))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, profile, heights, rng=None) -> "Landscape":
        if hasattr(source, "read"):
            text = source.read()
        elif "\n" in str(source):
            text = str(source)
        else:
            with open(source) as fh:
                text = fh.read()
        lo = hi = None
        rows, floors = [], []
        for line in text.splitlines():
            if line.startswith("#"):
                if line.startswith("# covered="):
                    lo, hi = (float(v) for v in line.split("=", 1)[1].split(","))
                elif line.startswith("# floor="):
                    floors.append([float(v) for v in line.split("=", 1)[1].split(",")])
                continue
            if line.strip():
                rows.append(line)
        reader = csv.DictReader(rows)
        if reader.fieldnames != ["x", "h"]:
            raise ValueError("landscape CSV must have header x,h")
        pts = [(float(r["x"]), float(r["h"])) for r in reader]
        xs = np.array([p[0] for p in pts])
        hs = np.array([p[1] for p in pts])
        if lo is None:
            lo, hi = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 0.0)
        land = cls(xs, hs, lo, hi, as_profile(profile), heights, rng)
        for s0, s1, f in floors:
            land.segments = _raise_floor(land.segments, s0, s1, f)
        return land


def _raise_floor(segments, a, b, floor):
    out = []
    for s0, s1, f in segments:
        if s1 <= a or s0 >= b:
            out.append([s0, s1, f])
            continue
        if s0 < a:
            out.append([s0, a, f])
        out.append([max(s0, a), min(s1, b), max(f, floor)])
        if s1 > b:
            out.append([b, s1, f])
    return out


def _poisson_window(profile: IntensityProfile, heights: HeightModel, a: float, b: float, rng,
                    floor: float = 0.0, ceil: float = math.inf):
    """Buildings of ``[a, b]`` with ``floor <= h < ceil``."""
    if not b > a:
        return np.empty(0), np.empty(0)
    q = 1.0 if floor <= 0 else float(heights.tail_weak(floor))
    if math.isfinite(ceil):
        q -= float(heights.tail_weak(ceil))
    la, lb = profile.cumulative(a), profile.cumulative(b)
    n = rng.poisson(q * (lb - la)) if q > 0 else 0
    u = np.sort(rng.uniform(la, lb, size=n))
    xs = np.asarray(profile.inverse(u), dtype=float).reshape(-1)
    xs = np.clip(xs, a, b)
    if math.isfinite(ceil):
        hs = heights.sample_band(rng, floor, ceil, n)
    elif floor > 0:
        hs = heights.sample_above(rng, floor, n)
    else:
        hs = heights.sample(rng, n)
    return xs, np.asarray(hs, dtype=float).reshape(-1)


def generate_window(profile, heights: HeightModel, interval, rng) -> Landscape:
    a, b = (float(v) for v in interval)
    if b < a:
        raise ValueError("interval must satisfy a <= b")
    profile = as_profile(profile)
    xs, hs = _poisson_window(profile, heights, a, b, rng)
    return Landscape(xs, hs, a, b, profile, heights, rng)


def extend_right(landscape: Landscape, delta: float, rng=None) -> Landscape:
    if rng is not None:
        landscape.rng = rng
    return landscape.extend_right(delta)


def palm_add(landscape: Landscape, building) -> Landscape:
    x, h = building
    return landscape.palm_add(float(x), float(h))


# -- thinning probabilities --------------------------------------------------

def exceed_line_measure(profile, heights: HeightModel, interval, anchor, slope, strict: bool = False, check: bool = True):
    """``int_a^b lambda(x) P(H > y0 + t (x - x0)) dx``; ``b`` may be ``+inf``.

    With ``strict`` the weak inequality ``H >= line`` is counted instead.
    """
    profile = as_profile(profile)
    a, b = (float(v) for v in interval)
    x0, y0 = (float(v) for v in anchor)
    t = float(slope)
    if b <= a:
        return 0.0
    if check:
        tol = 1e-12 * max(1.0, abs(y0))
        if y0 + t * (a - x0) < -tol or (math.isfinite(b) and y0 + t * (b - x0) < -tol) or (not math.isfinite(b) and t < 0):
            raise NegativeLine("the line dips below ground on the interval")
    total = 0.0
    for lo, hi, r in profile.pieces(a, b):
        if r == 0:
            continue
        total += r * line_tail_integral(heights, y0 + t * (lo - x0), t, hi - lo, strict=strict)
    return total


def below_line_probability(profile, heights: HeightModel, interval, anchor, slope, strict: bool = False) -> float:
    """Probability that no building of ``interval`` rises above the line.

    Closed form through the survival primitive for every constant piece.
    """
    return math.exp(-exceed_line_measure(profile, heights, interval, anchor, slope, strict=strict))


def below_curve_probability(profile, heights: HeightModel, interval, f: Callable[[float], float], tol: float = 1e-9) -> float:
    """Probability that every building of ``interval`` stays at or below ``f``."""
    profile = as_profile(profile)
    a, b = (float(v) for v in interval)
    if b <= a:
        return 1.0

    def integrand(x):
        y = f(x)
        if y < 0:
            raise NegativeLine(f"curve is negative at x={x}")
        return heights.tail(y)

    total = 0.0
    for lo, hi, r in profile.pieces(a, b):
        if r == 0:
            continue
        val, _ = integrate.quad(integrand, lo, hi, epsabs=tol, epsrel=tol, limit=500)
        total += r * val
    return math.exp(-total)


# -- batched rows --------------------------------------------------------------

def sample_rows(profile, heights: HeightModel, start, k: int, rng, floor=None):
    """``k`` consecutive buildings to the right of each start position.

    Returns sorted ``(B, k)`` arrays of bases and heights; the window of row
    ``r`` covers ``(start[r], X[r, -1]]``.  With ``floor`` only buildings with
    ``h >= floor[r]`` are generated (a thinned process).
    """
    profile = as_profile(profile)
    start = np.asarray(start, dtype=float)
    gaps = rng.standard_exponential((start.size, k))
    if floor is None:
        heights_ = np.asarray(heights.sample(rng, (start.size, k)), dtype=float)
    else:
        floor = np.broadcast_to(np.asarray(floor, dtype=float), start.shape)
        q = np.where(floor > 0, np.asarray(heights.tail_weak(np.maximum(floor, 0.0))), 1.0)
        if np.any(q <= 0):
            raise ValueError("no building can reach the requested floor")
        gaps = gaps / q[:, None]
        heights_ = np.where(floor[:, None] > 0,
                            heights.sample_above(rng, np.maximum(floor, 0.0)[:, None], (start.size, k)),
                            heights.sample(rng, (start.size, k)))
    if profile.is_constant:
        X = start[:, None] + np.cumsum(gaps, axis=1) / profile.rate_const
    else:
        X = np.asarray(profile.inverse(profile.cumulative(start)[:, None] + np.cumsum(gaps, axis=1)), dtype=float)
        X = np.maximum.accumulate(np.maximum(X, start[:, None]), axis=1)
    return np.ascontiguousarray(X), np.ascontiguousarray(heights_)


def extend_rows(profile, heights: HeightModel, X: np.ndarray, H: np.ndarray, k: int, rng, floor=None):
    nx, nh = sample_rows(profile, heights, X[:, -1], k, rng, floor)
    return np.ascontiguousarray(np.hstack([X, nx])), np.ascontiguousarray(np.hstack([H, nh]))
