"""Infinite-range relaying: blocking buildings, trajectories and their laws.

Three schemes are supported.  ``infinite`` is the plain slope argmax.  In the
max-height case (an atom at the top of the height law) ``self_absorbing``
stops at the first building of maximal height and ``next_max`` keeps hopping
to the nearest building of maximal height; both agree with ``infinite`` before
that height is reached.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import kernels
from .heights import HeightModel, line_tail_integral
from .landscape import Building, IntensityProfile, Landscape, as_profile, extend_rows, sample_rows
from .streams import mc_map


class SamePosition(ValueError):
    """Blockage slope requested between two points with the same abscissa."""


class SchemeMismatch(ValueError):
    """The plain scheme was used where the max-height extension is required."""


class TruncationBudgetExceeded(RuntimeError):
    """Lazy extension ran past the configured maximal width."""


class IllDefined(ValueError):
    """No building maximizes the slope (the point is above every building)."""


class Scheme(str, enum.Enum):
    INFINITE = "infinite"
    SELF_ABSORBING = "self_absorbing"
    NEXT_MAX = "next_max"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, Scheme):
            return value
        aliases = {"tau": cls.INFINITE, "tau1": cls.SELF_ABSORBING, "tau2": cls.NEXT_MAX}
        v = str(value).lower()
        return aliases.get(v) or cls(v)


class _AbsorbedSelf:
    def __repr__(self):
        return "ABSORBED_SELF"


ABSORBED_SELF = _AbsorbedSelf()


@dataclass(frozen=True)
class BlockState:
    X: float
    H: float
    t: float = math.inf
    cemetery: bool = False


DEFAULT_TRUNC_EPS = 1e-9


def blockage_slope(point, building) -> float:
    (x, y), (a, b) = point, building
    if a == x:
        raise SamePosition("building and point share an abscissa")
    return (b - y) / (a - x)


def shade_contains(source, blocker, query) -> bool:
    (x1, y1), (a, b), (x, y) = source, blocker, query
    if x < a:
        return False
    if x == x1:
        return y <= y1 if a == x1 else False
    return (y - y1) * (a - x1) <= (b - y1) * (x - x1)


def tail_measure(profile, heights: HeightModel, b, px, py, t):
    """Vectorized ``int_b^inf lambda(u) P(H > py + t (u - px)) du``."""
    profile = as_profile(profile)
    b, px, py, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (b, px, py, t)))
    if profile.is_constant:
        return profile.rate_const * np.asarray(line_tail_integral(heights, py + t * (b - px), t, np.inf))
    edges = np.concatenate([[-np.inf], profile.knots, [np.inf]])
    out = np.zeros(b.shape)
    for lo, hi, r in zip(edges[:-1], edges[1:], profile.rates):
        if r == 0:
            continue
        start = np.maximum(b, lo)
        length = np.where(hi > start, hi - start, 0.0)
        sel = length > 0
        if sel.any():
            out[sel] += r * np.asarray(
                line_tail_integral(heights, py[sel] + t[sel] * (start[sel] - px[sel]), t[sel], length[sel])
            ).reshape(-1)
    return out


def _escape_limit(trunc_eps: float) -> float:
    return -math.log1p(-trunc_eps)


def _check_point(heights: HeightModel, y: float, scheme: Scheme):
    S = heights.sup_support
    if scheme is Scheme.INFINITE and heights.has_atom_at_sup and y >= S:
        raise SchemeMismatch("the plain scheme is ambiguous at the maximal height; use self_absorbing or next_max")
    if y > S:
        raise IllDefined("point lies above the support of the height law")


def relevant_rate(profile, heights: HeightModel, y) -> float:
    """Intensity of buildings at least as tall as ``y`` (the only ones a search from height ``y`` can need)."""
    q = float(heights.tail_weak(max(float(y), 0.0)))
    return as_profile(profile).reference_rate * q


def blocking_building(landscape: Landscape, point, scheme=Scheme.INFINITE, trunc_eps: float = DEFAULT_TRUNC_EPS,
                      max_width: float | None = None):
    """Slope argmax over buildings strictly right of ``point``.

    The landscape is extended until the probability that an unseen building
    beats the current candidate drops below ``trunc_eps``.  Extensions only
    generate buildings at least as tall as the point: shorter ones have
    negative slope and lose to any taller building, which exists almost
    surely.  ``max_width`` is measured in expected numbers of such buildings
    (default ``1e4``).
    """
    scheme = Scheme.parse(scheme)
    x, y = (float(v) for v in point)
    if y < 0:
        raise ValueError("point must be at or above ground")
    heights = landscape.heights
    if scheme is Scheme.SELF_ABSORBING and heights.has_atom_at_sup and y >= heights.sup_support:
        return ABSORBED_SELF
    _check_point(heights, y, scheme)
    if heights.resolution_exhausted(y):
        raise TruncationBudgetExceeded("point is within floating-point resolution of the maximal height")
    rate = relevant_rate(landscape.profile, heights, y)
    if rate <= 0:
        raise TruncationBudgetExceeded("no building can be taller than the point")
    budget = (1e4 if max_width is None else max_width) / rate
    limit = _escape_limit(trunc_eps)
    if landscape.hi > x and landscape.floor_on(x, landscape.hi) > y:
        landscape.lower_floor(x, landscape.hi, y)
    landscape.ensure_right(x + 8.0 / rate, floor=y)
    while True:
        i0 = int(np.searchsorted(landscape.x, x, side="right"))
        xs, hs = landscape.x[i0:], landscape.h[i0:]
        if xs.size:
            s = (hs - y) / (xs - x)
            j = int(np.argmax(s))
            if s[j] >= 0:
                m = float(tail_measure(landscape.profile, heights, landscape.hi, x, y, s[j]))
                if m < limit:
                    return Building(float(xs[j]), float(hs[j]))
        width = landscape.hi - x
        if width >= budget:
            raise TruncationBudgetExceeded(f"no certified blocking building within width {budget:g}")
        landscape.extend_right(min(width, budget - width), floor=y)


def trajectory(profile, heights: HeightModel, start=(0.0, 0.0), n_hops: int = 1, scheme=Scheme.INFINITE,
               rng=None, trunc_eps: float = DEFAULT_TRUNC_EPS, max_width: float | None = None,
               landscape: Landscape | None = None) -> list[BlockState]:
    """One blockage trajectory on a lazily generated landscape.

    ``start`` is a point or a callable ``rng -> (x, y)``.  Pass ``landscape``
    to walk on an existing one (it is extended in place).
    """
    scheme = Scheme.parse(scheme)
    rng = np.random.default_rng() if rng is None else rng
    if callable(start):
        start = start(rng)
    x0, y0 = (float(v) for v in start)
    if landscape is None:
        landscape = Landscape(np.empty(0), np.empty(0), x0, x0, as_profile(profile), heights, rng)
    states = [BlockState(x0, y0, math.inf)]
    for _ in range(int(n_hops)):
        cur = states[-1]
        nxt = blocking_building(landscape, (cur.X, cur.H), scheme, trunc_eps, max_width)
        if nxt is ABSORBED_SELF:
            states.append(BlockState(cur.X, cur.H, 0.0))
        else:
            states.append(BlockState(nxt.x, nxt.h, (nxt.h - cur.H) / (nxt.x - cur.X)))
    return states


# -- batched sampler -------------------------------------------------------------

def _resolve_chains(profile, heights, X, H, x0, y0, n_hops, scheme, limit, rng, budget, k_ext):
    """Certified chains for every row, extending rows with thinned buildings as needed."""
    B = x0.size
    absorbing = scheme is Scheme.SELF_ABSORBING and heights.has_atom_at_sup
    absorb = heights.sup_support if absorbing else math.inf
    ref = as_profile(profile).reference_rate
    HX = np.empty((B, n_hops))
    HH = np.empty((B, n_hops))
    T = np.empty((B, n_hops))
    done = np.zeros(B, dtype=np.int64)
    saturated = np.zeros(B, dtype=bool)
    col = np.zeros(B, dtype=np.int64)
    px, py = x0.astype(float), y0.astype(float)
    if absorbing:
        top = py >= absorb
        HX[top], HH[top], T[top] = px[top, None], py[top, None], 0.0
        done[top] = n_hops
    live = np.flatnonzero(done < n_hops)
    Xl, Hl = np.ascontiguousarray(X[live]), np.ascontiguousarray(H[live])
    while live.size:
        n = live.size
        rem = int((n_hops - done[live]).max())
        idx = np.full((n, rem), -1, dtype=np.int64)
        cnt = np.zeros(n, dtype=np.int64)
        kernels.batch_chain_argmax(Xl, Hl, col[live], px[live], py[live], rem, absorb, idx, cnt)
        rows = np.arange(n)[:, None]
        safe = np.where(idx >= 0, idx, 0)
        cx, ch = Xl[rows, safe], Hl[rows, safe]
        ppx = np.hstack([px[live, None], cx[:, :-1]])
        ppy = np.hstack([py[live, None], ch[:, :-1]])
        absorbed = np.hstack([np.zeros((n, 1), bool), idx[:, 1:] == idx[:, :-1]]) & (idx >= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ct = np.where(absorbed, 0.0, (ch - ppy) / (cx - ppx))
        hop = np.arange(rem)[None, :]
        wanted = hop < (n_hops - done[live])[:, None]
        found = hop < cnt[:, None]
        test = wanted & found & ~absorbed
        m = np.zeros((n, rem))
        if test.any():
            last = np.broadcast_to(Xl[:, -1:], (n, rem))
            m[test] = tail_measure(profile, heights, last[test], ppx[test], ppy[test], ct[test])
        bad = wanted & (~found | (test & ((m >= limit) | (ct < 0))))
        first_bad = np.where(bad.any(axis=1), np.argmax(bad, axis=1), (n_hops - done[live]))
        for j in range(rem):
            sel = j < first_bad
            if not sel.any():
                break
            r, pos = live[sel], done[live[sel]] + j
            HX[r, pos], HH[r, pos], T[r, pos] = cx[sel, j], ch[sel, j], ct[sel, j]
        adv = first_bad > 0
        ka = first_bad[adv] - 1
        ra = live[adv]
        done[ra] += first_bad[adv]
        col[ra] = idx[adv, ka] + 1
        px[ra], py[ra] = cx[adv, ka], ch[adv, ka]
        if absorbing:
            top = live[(done[live] < n_hops) & (py[live] >= absorb)]
            for r in top:
                HX[r, done[r]:], HH[r, done[r]:], T[r, done[r]:] = px[r], py[r], 0.0
            done[top] = n_hops
        sat = live[(done[live] < n_hops) & heights.resolution_exhausted(py[live])]
        for r in sat:
            HX[r, done[r]:], HH[r, done[r]:], T[r, done[r]:] = np.nan, py[r], np.nan
        done[sat] = n_hops
        saturated[sat] = True
        keep = done[live] < n_hops
        live, Xl, Hl = live[keep], Xl[keep], Hl[keep]
        if not live.size:
            break
        # keep the last column: it anchors the extension even when every row has consumed it
        c0 = min(int(col[live].min()), Xl.shape[1] - 1)
        if c0 > 0:
            Xl, Hl = Xl[:, c0:], Hl[:, c0:]
            col[live] -= c0
        q = np.asarray(heights.tail_weak(np.maximum(py[live], 0.0)), dtype=float)
        if np.any(q <= 0) or np.any((Xl[:, -1] - px[live]) * ref * q > budget):
            raise TruncationBudgetExceeded(f"blocking chain not certified within {budget:g} expected relevant buildings")
        Xl, Hl = extend_rows(profile, heights, Xl, Hl, k_ext, rng, floor=py[live])
    return HX, HH, T, saturated


def _trajectory_block(rng, n, profile, heights, start, n_hops, scheme, trunc_eps, k0, budget):
    if callable(start):
        x0, y0 = (np.asarray(v, dtype=float) for v in start(rng, n))
    else:
        x0 = np.full(n, float(start[0]))
        y0 = np.full(n, float(start[1]))
    if n_hops == 0:
        return {"X": x0[:, None], "H": y0[:, None], "T": np.full((n, 1), np.inf), "saturated": np.zeros(n, bool)}
    if n and not (scheme is Scheme.SELF_ABSORBING and heights.has_atom_at_sup):
        _check_point(heights, float(y0.max()), scheme)
    X, H = sample_rows(profile, heights, x0, k0, rng, floor=y0)
    HX, HH, T, sat = _resolve_chains(profile, heights, X, H, x0, y0, n_hops, scheme, _escape_limit(trunc_eps), rng,
                                budget, k0)
    return {
        "X": np.hstack([x0[:, None], HX]),
        "H": np.hstack([y0[:, None], HH]),
        "T": np.hstack([np.full((n, 1), np.inf), T]),
        "saturated": sat,
    }


def sample_trajectories(profile, heights: HeightModel, n_hops: int, n_reps: int, seed: int = 0,
                        start=(0.0, 0.0), scheme=Scheme.INFINITE, trunc_eps: float = DEFAULT_TRUNC_EPS,
                        k0: int = 32, max_width: float | None = None, workers: int | None = None):
    """Many independent trajectories, returned as ``(n_reps, n_hops + 1)`` arrays ``X, H, T``.

    Column 0 is the start point (``T = inf``).  ``start`` may be a point or a
    callable ``(rng, n) -> (x0, y0)``.  Rows flagged ``saturated`` reached the
    top of a bounded atomless law to within floating-point resolution; their
    remaining positions and slopes are NaN and their height stays put.
    """
    profile = as_profile(profile)
    scheme = Scheme.parse(scheme)
    budget = 1e4 if max_width is None else max_width
    fn = functools.partial(_trajectory_block, profile=profile, heights=heights, start=start, n_hops=int(n_hops),
                           scheme=scheme, trunc_eps=trunc_eps, k0=k0, budget=budget)
    return mc_map(fn, n_reps, seed, workers=workers)


# -- closed forms -----------------------------------------------------------------

def _lam(lam) -> float:
    if isinstance(lam, IntensityProfile):
        return lam.rate_const
    return float(lam)


def density_gN(lam, heights: HeightModel, path) -> float:
    """Joint density of the first ``N`` blockage states along ``path``.

    ``path`` lists ``(x_i, h_i)`` for ``i = 0..N``; the start point is included.
    The density is taken against Lebesgue measure in ``x`` and the height law
    in ``h`` for every hop.
    """
    lam = _lam(lam)
    p = np.asarray(path, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 2:
        raise ValueError("path must be a sequence of at least two (x, h) pairs")
    x, h = p[:, 0], p[:, 1]
    if np.any(np.diff(x) <= 0):
        raise ValueError("path abscissae must increase strictly")
    if np.any(np.diff(h) < 0):
        return 0.0
    t = np.diff(h) / np.diff(x)
    if np.any(np.diff(t) > 0):
        return 0.0
    N = t.size
    G = np.asarray(heights.survival_primitive(h), dtype=float)
    with np.errstate(divide="ignore"):
        inv = 1.0 / t
    expo = -G[0] * inv[0] if G[0] != 0 else 0.0
    for i in range(1, N):
        d = inv[i - 1] - inv[i]
        if G[i] != 0 and d != 0:
            expo += G[i] * d
    return float(lam**N * math.exp(-lam * expo)) if math.isfinite(expo) else 0.0


def first_hop_density(lam, heights: HeightModel, start, x, h):
    """Vectorized ``g_1`` from ``start = (x0, h0)``, against Lebesgue times the height law."""
    lam = _lam(lam)
    x0, h0 = (float(v) for v in start)
    x, h = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(h, dtype=float))
    G0 = float(heights.survival_primitive(h0))
    ok = (x > x0) & (h > h0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = lam * np.exp(lam * G0 * (x - x0) / (h - h0))
    out = np.where(ok, val, 0.0)
    return float(out) if out.ndim == 0 else out


def kernel_density_vis(lam, heights: HeightModel, prev, nxt) -> float:
    """Transition density of the (slope, height) chain.

    ``prev = (T, H)``, ``nxt = (t, h)``; density against ``dt`` times the
    height law in ``h``.
    """
    lam = _lam(lam)
    T, H = (float(v) for v in prev)
    t, h = (float(v) for v in nxt)
    if not (h > H and 0.0 < t <= T):
        return 0.0
    G = float(heights.survival_primitive(H))
    return (h - H) / (t * t) * lam * math.exp(-lam * G * (1.0 / T - 1.0 / t))


def vis_total_mass(lam, heights: HeightModel, T: float, H: float, tol: float = 1e-10) -> float:
    """``int int vis`` over ``0 < t <= T``, ``h > H`` by nested adaptive quadrature.

    The height law enters through its quantile function, so atoms below the
    supremum are handled as well.
    """
    lo_u = float(heights.cdf(H))

    def inner(u):
        h = float(heights.ppf(u))
        if h <= H:
            return 0.0
        f = lambda t: kernel_density_vis(lam, heights, (T, H), (t, h))
        # the integrand is concentrated near the top of the slope range when h is close to H
        pts = sorted({v for v in (T * 0.5, (h - H)) if 0.0 < v < T})
        return integrate.quad(f, 0.0, T, epsabs=tol, epsrel=tol, limit=400, points=pts or None)[0]

    return integrate.quad(inner, lo_u, 1.0, epsabs=tol, epsrel=tol, limit=400)[0]


def vis_slope_cdf(lam, heights: HeightModel, T, H, s):
    """``P(t_next <= s | T, H)``: given the state, ``1/t - 1/T`` is exponential."""
    lam = _lam(lam)
    T, H, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (T, H, s)))
    c = -lam * np.asarray(heights.survival_primitive(H), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = np.exp(-c * (1.0 / s - 1.0 / T))
    out = np.where(s >= T, 1.0, np.where(s <= 0, 0.0, val))
    return float(out) if out.ndim == 0 else out


def vis_height_cdf(heights: HeightModel, H, y):
    """``P(h_next <= y | H)``; the next height is size-biased by ``h - H`` and independent of the slope."""
    H, y = np.broadcast_arrays(np.asarray(H, dtype=float), np.asarray(y, dtype=float))
    GH = np.asarray(heights.survival_primitive(H), dtype=float)
    Gy = np.asarray(heights.survival_primitive(y), dtype=float)
    tail = np.asarray(heights.tail(y), dtype=float)
    num = Gy - GH - (y - H) * tail
    out = np.where(y <= H, 0.0, np.clip(num / np.where(GH < 0, -GH, 1.0), 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelValue:
    """Either a density value or a point mass of the modified schemes."""

    kind: str  # "density" or "atom"
    value: float
    position: float | None = None
    height: float | None = None


def kernel_density_scheme(lam, heights: HeightModel, scheme, prev: BlockState, nxt=None) -> KernelValue:
    """Step law of the max-height schemes.

    Below the maximal height this is :func:`kernel_density_vis`.  At the
    maximal height ``self_absorbing`` returns the unit atom at the current
    building and ``next_max`` the exponential density of the next hop length
    evaluated at ``nxt = (x, h)``.
    """
    scheme = Scheme.parse(scheme)
    lam = _lam(lam)
    S = heights.sup_support
    if scheme is Scheme.INFINITE and heights.has_atom_at_sup:
        raise SchemeMismatch("the plain scheme has no step law at the maximal height")
    if prev.H < S or not heights.has_atom_at_sup:
        if nxt is None:
            raise ValueError("a target (x, h) is required below the maximal height")
        x, h = nxt
        t = (h - prev.H) / (x - prev.X) if x > prev.X else -math.inf
        return KernelValue("density", kernel_density_vis(lam, heights, (prev.t, prev.H), (t, h)))
    if scheme is Scheme.SELF_ABSORBING:
        return KernelValue("atom", 1.0, prev.X, S)
    p = heights.atom_at_sup
    if nxt is None:
        raise ValueError("a target (x, h) is required for the next_max hop law")
    x, h = nxt
    if x <= prev.X or h != S:
        return KernelValue("density", 0.0)
    return KernelValue("density", lam * p * math.exp(-lam * p * (x - prev.X)), x, S)
