"""Height laws for Poisson building processes.

Every closed form in the package is written in terms of three functions of
the height law: its CDF ``F``, the strict CDF ``F~(h) = P(H < h)`` and the
survival primitive

    G(h) = -int_h^inf (1 - F(u)) du,

the antiderivative of ``1 - F`` that vanishes at ``+inf``.  ``G`` is extended
to negative arguments by ``G(h) = G(0) + h`` (no building is shorter than a
negative line), which keeps every line integral valid for descending lines.
"""

from __future__ import annotations

import functools
import math
from typing import Any, Callable

import numpy as np
from scipy import integrate, special


class NonIntegrableTail(ValueError):
    """Raised when a height law does not have a finite mean."""


def _wrap(template, value):
    if np.ndim(template) == 0:
        return float(value)
    return value


class HeightModel:
    """Base class; subclasses provide ``cdf``, ``ppf`` and ideally ``_primitive``."""

    kind = "abstract"
    sup_support = math.inf
    atom_at_sup = 0.0

    # -- core functions --------------------------------------------------
    def cdf(self, h):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    def pdf(self, h):
        """Lebesgue density of the absolutely continuous part."""
        raise NotImplementedError(f"{self.kind} heights have no closed-form density")

    def atom_mass(self, h):
        """Mass ``L({h})``; zero unless an atom was placed there by construction."""
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.zeros_like(h))

    def cdf_strict(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.asarray(self.cdf(h)) - np.asarray(self.atom_mass(h)))

    def tail(self, h):
        """``P(H > h)``."""
        h = np.asarray(h, dtype=float)
        return _wrap(h, 1.0 - np.asarray(self.cdf(h)))

    def tail_weak(self, h):
        """``P(H >= h)``."""
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.asarray(self.tail(h)) + np.asarray(self.atom_mass(h)))

    def isf(self, p):
        """Inverse survival: smallest ``h`` with ``P(H > h) <= p``."""
        p = np.asarray(p, dtype=float)
        return _wrap(p, np.asarray(self.ppf(1.0 - p)))

    def sample_above(self, rng: np.random.Generator, floor, size=None):
        """Draws conditioned on ``H >= floor``, accurate far into the tail."""
        floor = np.asarray(floor, dtype=float)
        tw = np.asarray(self.tail_weak(np.maximum(floor, 0.0)))
        p = (1.0 - rng.random(size)) * tw
        out = np.maximum(np.asarray(self.isf(p), dtype=float), floor)
        if math.isfinite(self.sup_support) and not self.has_atom_at_sup:
            out = np.minimum(out, np.nextafter(self.sup_support, 0.0))
        return out

    def resolution_exhausted(self, h) -> np.ndarray:
        """True where ``h`` is so close to a finite, atomless supremum that taller draws are not representable."""
        h = np.asarray(h, dtype=float)
        if not math.isfinite(self.sup_support) or self.has_atom_at_sup:
            return np.zeros(h.shape, dtype=bool)
        return self.sup_support - h <= 1e-12 * self.sup_support

    def sample_band(self, rng: np.random.Generator, lo, hi, size=None):
        """Draws conditioned on ``lo <= H < hi``."""
        t_lo = np.asarray(self.tail_weak(np.maximum(lo, 0.0)))
        t_hi = np.asarray(self.tail_weak(np.maximum(hi, 0.0)))
        p = t_hi + (1.0 - rng.random(size)) * (t_lo - t_hi)
        out = np.asarray(self.isf(p), dtype=float)
        return np.clip(out, lo, np.nextafter(hi, -np.inf))

    def _primitive(self, h: np.ndarray) -> np.ndarray:
        """``G`` on ``h >= 0``; generic adaptive quadrature."""
        return np.array([self._primitive_quad(float(v)) for v in h.ravel()]).reshape(h.shape)

    @functools.lru_cache(maxsize=65536)
    def _primitive_quad(self, h: float) -> float:
        if h >= self.sup_support:
            return 0.0
        f = lambda u: 1.0 - float(self.cdf(u))
        upper = self.sup_support
        val, _ = integrate.quad(f, h, upper, epsabs=0.0, epsrel=1e-10, limit=400)
        return -val

    def survival_primitive(self, h):
        h = np.asarray(h, dtype=float)
        out = np.empty_like(h)
        neg = h < 0
        pos = ~neg & np.isfinite(h)
        out[h == np.inf] = 0.0
        out[h == -np.inf] = -np.inf
        if pos.any():
            out[pos] = self._primitive(h[pos])
        if neg.any():
            out[neg & np.isfinite(h)] = self._primitive(np.zeros(1))[0] + h[neg & np.isfinite(h)]
        return _wrap(h, out)

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))

    # -- derived ---------------------------------------------------------
    @property
    def mean(self) -> float:
        return -float(self.survival_primitive(0.0))

    @property
    def has_atom_at_sup(self) -> bool:
        return self.atom_at_sup > 0.0

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()})"

    def __eq__(self, other):
        return isinstance(other, HeightModel) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self))


class Exponential(HeightModel):
    kind = "exponential"

    def __init__(self, rate: float = 1.0):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, -np.expm1(-self.rate * np.maximum(h, 0.0)))

    def tail(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.exp(-self.rate * np.maximum(h, 0.0)))

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.where(h >= 0, self.rate * np.exp(-self.rate * np.maximum(h, 0.0)), 0.0))

    def _primitive(self, h):
        return -np.exp(-self.rate * h) / self.rate

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _wrap(u, -np.log1p(-u) / self.rate)

    def isf(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return _wrap(p, -np.log(p) / self.rate)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


class Weibull(HeightModel):
    """Weibull law with shape ``k`` and scale ``1/rate``."""

    kind = "weibull"

    def __init__(self, shape: float, rate: float = 1.0):
        if not (shape > 0 and rate > 0):
            raise ValueError("shape and rate must be positive")
        self.shape = float(shape)
        self.rate = float(rate)
        self._gamma = math.gamma(1.0 + 1.0 / self.shape)

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, -np.expm1(-((self.rate * np.maximum(h, 0.0)) ** self.shape)))

    def tail(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.exp(-((self.rate * np.maximum(h, 0.0)) ** self.shape)))

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        z = self.rate * np.maximum(h, 0.0)
        with np.errstate(divide="ignore"):
            val = self.shape * self.rate * z ** (self.shape - 1.0) * np.exp(-(z**self.shape))
        return _wrap(h, np.where(h >= 0, val, 0.0))

    def _primitive(self, h):
        # upper incomplete gamma: int_h^inf exp(-(r u)^k) du = Gamma(1+1/k)/r * Q(1/k, (r h)^k)
        return -self._gamma / self.rate * special.gammaincc(1.0 / self.shape, (self.rate * h) ** self.shape)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _wrap(u, (-np.log1p(-u)) ** (1.0 / self.shape) / self.rate)

    def isf(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return _wrap(p, (-np.log(p)) ** (1.0 / self.shape) / self.rate)

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "rate": self.rate}


class Uniform(HeightModel):
    kind = "uniform"

    def __init__(self, sup: float = 1.0):
        if not sup > 0:
            raise ValueError("sup must be positive")
        self.sup_support = float(sup)

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.clip(h / self.sup_support, 0.0, 1.0))

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.where((h >= 0) & (h <= self.sup_support), 1.0 / self.sup_support, 0.0))

    def _primitive(self, h):
        s = self.sup_support
        d = np.maximum(s - h, 0.0)
        return -d * d / (2.0 * s)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _wrap(u, u * self.sup_support)

    def to_dict(self):
        return {"kind": self.kind, "sup": self.sup_support}


class AtomMixture(HeightModel):
    """Base law truncated to ``[0, sup)`` with weight ``1 - atom`` plus an atom at ``sup``.

    This is the max-height construction: ``L({sup}) = atom > 0``.
    """

    kind = "atom_mixture"

    def __init__(self, base: HeightModel, sup: float, atom: float):
        if not 0.0 < atom <= 1.0:
            raise ValueError("atom must lie in (0, 1]")
        if not sup > 0:
            raise ValueError("sup must be positive")
        self.base = base
        self.sup_support = float(sup)
        self.atom_at_sup = float(atom)
        self._base_below = float(base.cdf_strict(self.sup_support))
        if atom < 1.0 and self._base_below <= 0.0:
            raise ValueError("base law puts no mass below sup")
        self._scale = (1.0 - atom) / self._base_below if atom < 1.0 else 0.0

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        below = self._scale * np.asarray(self.base.cdf(np.minimum(h, self.sup_support)))
        return _wrap(h, np.where(h >= self.sup_support, 1.0, below))

    def atom_mass(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.where(h == self.sup_support, self.atom_at_sup, 0.0))

    def _primitive(self, h):
        s = self.sup_support
        hc = np.minimum(h, s)
        gb_s = float(self.base.survival_primitive(s))
        int_base_cdf = (s - hc) - (gb_s - np.asarray(self.base.survival_primitive(hc)))
        return -((s - hc) - self._scale * int_base_cdf)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        cut = 1.0 - self.atom_at_sup
        safe = np.where(u < cut, u, 0.0)
        inner = np.asarray(self.base.ppf(safe / max(cut, 1e-300) * self._base_below))
        return _wrap(u, np.where(u < cut, np.minimum(inner, np.nextafter(self.sup_support, 0.0)), self.sup_support))

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "sup": self.sup_support, "atom": self.atom_at_sup}


class Tabulated(HeightModel):
    """Piecewise-linear CDF through ``(h[i], F[i])``; ``h[0] = 0`` and ``F[-1] = 1``.

    ``F[0] > 0`` places an atom at zero.
    """

    kind = "tabulated"

    def __init__(self, h, F):
        h = np.asarray(h, dtype=float)
        F = np.asarray(F, dtype=float)
        if h.ndim != 1 or h.shape != F.shape or h.size < 2:
            raise ValueError("grid and CDF values must be 1-d arrays of equal length >= 2")
        if h[0] != 0.0 or np.any(np.diff(h) <= 0):
            raise ValueError("height grid must start at 0 and be strictly increasing")
        if np.any(np.diff(F) < 0) or F[0] < 0 or abs(F[-1] - 1.0) > 1e-12:
            raise ValueError("CDF values must be nondecreasing from >= 0 to 1")
        last = int(np.argmax(F >= 1.0))
        self.h = h[: last + 1]
        self.F = F[: last + 1].copy()
        self.F[-1] = 1.0
        self.sup_support = float(self.h[-1])
        self.atom_at_sup = 0.0 if last > 0 else 1.0
        # int_{h_i}^{S} (1 - F) at each knot, exact for linear pieces
        seg = 0.5 * ((1 - self.F[:-1]) + (1 - self.F[1:])) * np.diff(self.h)
        self._right = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        val = np.interp(h, self.h, self.F)
        return _wrap(h, np.where(h < 0, 0.0, val))

    def atom_mass(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.where(h == 0.0, self.F[0], 0.0))

    def _primitive(self, h):
        h = np.minimum(h, self.sup_support)
        i = np.clip(np.searchsorted(self.h, h, side="right") - 1, 0, self.h.size - 2)
        Fh = np.interp(h, self.h, self.F)
        partial = 0.5 * ((1 - Fh) + (1 - self.F[i + 1])) * (self.h[i + 1] - h)
        return -(partial + self._right[i + 1])

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        i = np.clip(np.searchsorted(self.F, u, side="right") - 1, 0, self.h.size - 2)
        dF = self.F[i + 1] - self.F[i]
        frac = np.where(dF > 0, (u - self.F[i]) / np.where(dF > 0, dF, 1.0), 0.0)
        out = self.h[i] + np.clip(frac, 0.0, 1.0) * (self.h[i + 1] - self.h[i])
        return _wrap(u, np.where(u < self.F[0], 0.0, out))

    def to_dict(self):
        return {"kind": self.kind, "h": self.h.tolist(), "cdf": self.F.tolist()}


class Custom(HeightModel):
    """User-supplied CDF and quantile function; ``G`` by adaptive quadrature."""

    kind = "custom"

    def __init__(self, cdf: Callable, ppf: Callable, sup: float = math.inf, name: str = "custom"):
        self._cdf = cdf
        self._ppf = ppf
        self.sup_support = float(sup)
        self.name = name
        val, err, *rest = integrate.quad(
            lambda u: 1.0 - float(cdf(u)), 0.0, self.sup_support, limit=400, full_output=1
        )
        if not np.isfinite(val) or (len(rest) > 1 and rest[0] != 0 and err > 1e-6 * max(abs(val), 1.0)):
            raise NonIntegrableTail(f"height law {name!r} has no finite mean")

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        return _wrap(h, np.vectorize(lambda v: float(self._cdf(v)) if v >= 0 else 0.0)(h))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _wrap(u, np.asarray(self._ppf(u), dtype=float))

    def to_dict(self):
        return {"kind": self.kind, "name": self.name}

    __eq__ = object.__eq__
    __hash__ = object.__hash__


# -- functional surface -----------------------------------------

def cdf(model: HeightModel, h):
    return model.cdf(h)


def cdf_strict(model: HeightModel, h):
    return model.cdf_strict(h)


def survival_primitive(model: HeightModel, h):
    return model.survival_primitive(h)


def sample_height(model: HeightModel, rng: np.random.Generator, size=None):
    return model.sample(rng, size)


def line_tail_integral(model: HeightModel, h0, slope, length, strict: bool = False):
    """``int_0^length P(H > h0 + slope*u) du`` (``>=`` when ``strict``).

    Broadcasts over all arguments.  ``slope`` may be ``+inf`` (integral 0) and
    ``length`` may be ``+inf``.  ``strict`` only matters for level lines hitting
    an atom.
    """
    h0, t, L = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (h0, slope, length)))
    out = np.zeros(h0.shape)
    tail = model.tail_weak if strict else model.tail
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        level = (t == 0) | (np.isfinite(t) & np.isfinite(L) & (np.abs(t) * L < 1e-7 * max(1.0, model.mean)))
        sel = level & (L > 0)
        if sel.any():
            mid = h0[sel] + 0.5 * t[sel] * np.where(np.isfinite(L[sel]), L[sel], 0.0)
            tl = np.asarray(tail(mid))
            out[sel] = np.where(tl > 0, tl * L[sel], 0.0)
        gen = ~level & np.isfinite(t) & (L > 0)
        if gen.any():
            tt, hh, LL = t[gen], h0[gen], L[gen]
            end = np.where(np.isfinite(LL), hh + tt * LL, np.where(tt > 0, np.inf, -np.inf))
            g_end = np.asarray(model.survival_primitive(end))
            g_0 = np.asarray(model.survival_primitive(hh))
            out[gen] = (g_end - g_0) / tt
    return float(out) if out.ndim == 0 else out


def from_dict(spec: dict[str, Any]) -> HeightModel:
    """Build a height model from its JSON description."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "exponential":
        model = Exponential(spec.pop("rate", 1.0))
    elif kind == "weibull":
        shape = spec.pop("shape")
        rate = 1.0 / float(spec.pop("scale")) if "scale" in spec else spec.pop("rate", 1.0)
        model = Weibull(shape, rate)
    elif kind == "uniform":
        model = Uniform(spec.pop("sup", 1.0))
    elif kind == "atom_mixture":
        model = AtomMixture(from_dict(spec.pop("base")), spec.pop("sup"), spec.pop("atom"))
    elif kind == "tabulated":
        model = Tabulated(spec.pop("h"), spec.pop("cdf"))
    else:
        raise ValueError(f"unknown height model kind {kind!r}")
    if spec:
        raise ValueError(f"unknown keys for {kind} heights: {sorted(spec)}")
    return model
