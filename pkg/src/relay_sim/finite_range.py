"""Relaying with a limited range.

Two flavours are covered.  With a horizontal range ``R`` a point at ``x``
only sees buildings with bases in ``(x, x + R]``; the hop chain
``(hop length, slope, height)`` is Markov and has closed-form kernels.  With
a general convex range the visible region is ``range + point`` and tall
buildings outside it can cut the line of sight altogether (the stoppage
point); only the first hop has a closed form.

Hop exponents use the segment integral

    I(s, L) = int_0^L tail(H + s u) du = (G(H + s L) - G(H)) / s,

with ``G`` the survival primitive extended linearly below zero.
"""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from . import kernels
from .heights import HeightModel
from .landscape import Building, Landscape, as_profile, extend_rows, sample_rows
from .streams import mc_map
from .validation import McReport, mean_ci, wilson_ci


class _Cemetery:
    def __repr__(self):
        return "CEMETERY"

    def __bool__(self):
        return False


CEMETERY = _Cemetery()


def _lam(lam) -> float:
    return as_profile(lam).rate_const


# -- horizontal range: geometry ---------------------------------------------------------

def blocking_building_hr(landscape: Landscape, point, R: float):
    """Steepest building with base in ``(x, x + R]``, or :data:`CEMETERY`."""
    if not R > 0:
        raise ValueError("range must be positive")
    x, y = (float(v) for v in point)
    landscape.ensure_right(x + R)
    lo = np.searchsorted(landscape.x, x, side="right")
    hi = np.searchsorted(landscape.x, x + R, side="right")
    if hi <= lo:
        return CEMETERY
    xs, hs = landscape.x[lo:hi], landscape.h[lo:hi]
    j = int(np.argmax((hs - y) / (xs - x)))
    return Building(float(xs[j]), float(hs[j]))


def finite_shade_contains(source, blocker, query, R: float) -> bool:
    """Shade of ``blocker`` seen from ``source`` when the range is ``R``.

    Everything beyond ``source.x + R`` is shaded; inside the range this is
    the usual angular shade right of the blocker.
    """
    x1, y1 = source
    a, b = blocker
    qx, qy = query
    if qx > x1 + R:
        return True
    if qx < a:
        return False
    return (qy - y1) * (a - x1) <= (b - y1) * (qx - x1)


# -- horizontal range: closed forms ------------------------------------------------------

@dataclass(frozen=True)
class FiniteState:
    """State of the hop chain; ``xt`` is the last hop length and ``t`` the incoming slope."""

    xt: float
    t: float
    H: float
    cemetery: bool = False

    @classmethod
    def start(cls, height: float = 0.0) -> "FiniteState":
        return cls(0.0, math.inf, float(height))

    @classmethod
    def dead(cls) -> "FiniteState":
        return cls(-math.inf, -math.inf, -math.inf, True)


def segment_integral(heights: HeightModel, H, slope, length):
    """``int_0^length tail(H + slope u) du``, vectorized, with the ``slope -> 0`` and infinite limits."""
    H, s, L = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (H, slope, length)))
    out = np.zeros(H.shape)
    tailH = np.asarray(heights.tail(H), dtype=float)
    small = np.abs(s * L) < 1e-9
    out = np.where(small, L * tailH, out)
    fin = ~small & np.isfinite(s)
    if np.any(fin):
        G0 = np.asarray(heights.survival_primitive(H[fin]), dtype=float)
        G1 = np.asarray(heights.survival_primitive(H[fin] + s[fin] * L[fin]), dtype=float)
        out[fin] = (G1 - G0) / s[fin]
    out = np.where(np.isneginf(s), L, out)
    out = np.where(np.isposinf(s), 0.0, out)
    out = np.where(L <= 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def hop_exponent(heights: HeightModel, R: float, state: FiniteState, t, s=None):
    """Expected number of excluded buildings for a hop of slope ``t`` (and length ``s``).

    Returns ``(A, ok)`` where ``ok`` is the admissibility indicator; ``s``
    defaults to ``R`` (only the indicator uses it).
    """
    t = np.asarray(t, dtype=float)
    r = max(R - state.xt, 0.0)
    T = state.t
    M = np.maximum(t, T)
    A = np.asarray(segment_integral(heights, state.H, t, R), dtype=float) - np.asarray(
        segment_integral(heights, state.H, M, r), dtype=float)
    s = np.full(t.shape, R) if s is None else np.asarray(s, dtype=float)
    ok = (s > 0) & (s <= R) & ((t <= T) | (s > r))
    return A, ok


def cemetery_mass(lam, heights: HeightModel, R: float, state: FiniteState) -> float:
    """Probability that no building lies within range of the current state."""
    if state.cemetery:
        return 1.0
    lam = _lam(lam)
    r = max(R - state.xt, 0.0)
    return math.exp(-lam * (R - float(segment_integral(heights, state.H, state.t, r))))


class RangeKernelValue(NamedTuple):
    density: float
    cemetery: float


def kernel_VIS_R(lam, heights: HeightModel, R: float, state: FiniteState, nxt: FiniteState) -> RangeKernelValue:
    """Transition law of ``(hop length, slope, height)`` at ``nxt``.

    ``density`` is taken against ``dt`` times the height law, with the hop
    length pinned to ``(h - H) / t``; ``cemetery`` is the mass of the
    absorbing state.  A target whose hop length disagrees with its slope and
    height gets density zero.
    """
    if state.cemetery:
        return RangeKernelValue(0.0, 1.0)
    mass = cemetery_mass(lam, heights, R, state)
    if nxt.cemetery:
        return RangeKernelValue(0.0, mass)
    return RangeKernelValue(float(vis_R(lam, heights, R, state, nxt.t, nxt.H, xt=nxt.xt)), mass)


def vis_R(lam, heights: HeightModel, R: float, state: FiniteState, t, h, xt=None):
    """Vectorized transition density in ``(t, h)``."""
    lam = _lam(lam)
    t, h = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(h, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (h - state.H) / t
    A, ok = hop_exponent(heights, R, state, t, s)
    if xt is not None:
        ok &= np.isclose(s, xt, rtol=1e-9, atol=1e-12)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = lam * np.abs(h - state.H) / (t * t) * np.exp(-lam * A)
    out = np.where(ok & np.isfinite(val), val, 0.0)
    return float(out) if out.ndim == 0 else out


def hop_density(lam, heights: HeightModel, R: float, state: FiniteState, s, h):
    """Next-building density in ``(hop length, height)`` against ``ds`` times the height law."""
    lam = _lam(lam)
    s, h = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(h, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (h - state.H) / s
    A, ok = hop_exponent(heights, R, state, t, s)
    out = np.where(ok, lam * np.exp(-lam * A), 0.0)
    return float(out) if out.ndim == 0 else out


def vis_R_total_mass(lam, heights: HeightModel, R: float, state: FiniteState, tol: float = 1e-11) -> float:
    """Transition mass plus cemetery mass, by nested quadrature (should be 1)."""
    if state.cemetery:
        return 1.0
    r = max(R - state.xt, 0.0)
    H, T = state.H, state.t

    def inner(s):
        # integrate over the height law through its quantile function
        f = lambda u: float(hop_density(lam, heights, R, state, s, float(heights.ppf(u))))
        pts = [float(heights.cdf(H))]
        if s <= r and math.isfinite(T):
            pts.append(float(heights.cdf(H + T * s)))
        pts = sorted({p for p in pts if 0.0 < p < 1.0})
        edges = [0.0] + pts + [1.0]
        return sum(integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))

    brk = [v for v in (r,) if 0.0 < v < R]
    edges = [0.0] + brk + [R]
    body = sum(integrate.quad(inner, a, b, epsabs=tol, epsrel=tol, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    return body + cemetery_mass(lam, heights, R, state)


def density_gNR(lam, heights: HeightModel, R: float, path) -> float:
    """Joint density of ``N`` in-range hops along ``path`` (restricted to survival).

    ``path`` lists ``(x_i, h_i)`` for ``i = 0..N``; the density is against
    Lebesgue measure times the height law for each hop.
    """
    lam = _lam(lam)
    p = np.asarray(path, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 2:
        raise ValueError("path must be a sequence of at least two (x, h) pairs")
    if np.any(np.diff(p[:, 0]) <= 0):
        raise ValueError("path abscissae must increase strictly")
    state = FiniteState.start(p[0, 1])
    expo = 0.0
    for i in range(1, p.shape[0]):
        s = p[i, 0] - p[i - 1, 0]
        t = (p[i, 1] - p[i - 1, 1]) / s
        A, ok = hop_exponent(heights, R, state, np.array([t]), np.array([s]))
        if not ok[0]:
            return 0.0
        expo += float(A[0])
        state = FiniteState(s, t, p[i, 1])
    return float(lam ** (p.shape[0] - 1) * math.exp(-lam * expo))


# -- horizontal range: simulation ------------------------------------------------------------

def _range_chains(lam, heights, R, y0, n, rng, n_hops=None, k0=32, want_path=False):
    """Run ``n`` chains from ``(0, y0)``; returns hop counts, a cemetery flag and optionally the hops."""
    y0 = np.broadcast_to(np.asarray(y0, dtype=float), (n,))
    X, H = sample_rows(lam, heights, np.zeros(n), k0, rng)
    count = np.zeros(n, dtype=np.int64)
    dead = np.zeros(n, dtype=bool)
    cap = n_hops if n_hops is not None else None
    PX = PH = None
    if want_path:
        PX = np.full((n, cap), np.nan)
        PH = np.full((n, cap), np.nan)
    pending = np.arange(n)
    Xp, Hp = X, H
    while pending.size:
        K = Xp.shape[1]
        m = K if cap is None else min(cap, K)
        idx = np.full((pending.size, m), -1, dtype=np.int64)
        cnt = np.zeros(pending.size, dtype=np.int64)
        st = np.zeros(pending.size, dtype=np.int64)
        kernels.batch_range_chain(Xp, Hp, np.zeros(pending.size), np.ascontiguousarray(y0[pending]), float(R), m,
                                  idx, cnt, st)
        fin = (st == 1) | ((st == 3) & (cap is not None) & (cnt == (cap or 0)))
        rows = pending[fin]
        count[rows] = cnt[fin]
        dead[rows] = st[fin] == 1
        if want_path and rows.size:
            sub = idx[fin]
            valid = sub >= 0
            safe = np.where(valid, sub, 0)
            px = np.take_along_axis(Xp[fin], safe, axis=1)
            ph = np.take_along_axis(Hp[fin], safe, axis=1)
            PX[rows, :m] = np.where(valid, px, np.nan)
            PH[rows, :m] = np.where(valid, ph, np.nan)
        keep = ~fin
        pending = pending[keep]
        if pending.size:
            Xp, Hp = extend_rows(lam, heights, Xp[keep], Hp[keep], K, rng)
    return count, dead, PX, PH


def hitting_time_sample(lam, heights: HeightModel, R: float, start_height: float, rng, landscape: Landscape | None = None) -> int:
    """Number of in-range hops made by a user at ``(0, start_height)`` before the cemetery."""
    if not R > 0:
        raise ValueError("range must be positive")
    land = landscape if landscape is not None else Landscape(np.empty(0), np.empty(0), 0.0, 0.0, as_profile(lam), heights, rng)
    point = (0.0, float(start_height))
    n = 0
    while True:
        b = blocking_building_hr(land, point, R)
        if b is CEMETERY:
            return n
        n += 1
        point = b


def _hitting_block(rng, n, lam, heights, R, start_height):
    count, _, _, _ = _range_chains(lam, heights, R, start_height, n, rng)
    return {"T": count.astype(float)}


def sample_hitting_times(lam, heights: HeightModel, R: float, n_reps: int, seed: int = 0, start_height: float = 0.0,
                         workers: int | None = None) -> np.ndarray:
    if not R > 0:
        raise ValueError("range must be positive")
    fn = functools.partial(_hitting_block, lam=as_profile(lam), heights=heights, R=float(R),
                           start_height=float(start_height))
    return mc_map(fn, n_reps, seed, workers=workers)["T"]


def _range_traj_block(rng, n, lam, heights, R, n_hops, start_height):
    _, _, PX, PH = _range_chains(lam, heights, R, start_height, n, rng, n_hops=n_hops, want_path=True)
    return {"X": PX, "H": PH}


def sample_range_trajectories(lam, heights: HeightModel, R: float, n_hops: int, n_reps: int, seed: int = 0,
                              start_height: float = 0.0, workers: int | None = None):
    """Hops ``1..n_hops`` of ``n_reps`` chains from ``(0, start_height)``; ``nan`` after the cemetery."""
    if n_hops < 1:
        raise ValueError("n_hops must be at least 1")
    fn = functools.partial(_range_traj_block, lam=as_profile(lam), heights=heights, R=float(R), n_hops=int(n_hops),
                           start_height=float(start_height))
    res = mc_map(fn, n_reps, seed, workers=workers)
    return res["X"], res["H"]


def hitting_time_report(lam, heights: HeightModel, R: float, n_reps: int, seed: int = 0, start_height: float = 0.0,
                        workers: int | None = None) -> McReport:
    T = sample_hitting_times(lam, heights, R, n_reps, seed, start_height, workers)
    m, lo, hi = mean_ci(T)
    p0, plo, phi = wilson_ci(int(np.sum(T == 0)), T.size)
    return McReport("hitting_time", m, (lo, hi), T.size, seed, 0.0,
                    {"p_zero": p0, "p_zero_ci": (plo, phi), "p_zero_exact": math.exp(-_lam(lam) * R)})


def expected_zone_length_hr(lam, heights: HeightModel, R: float, n_reps: int, seed: int = 0,
                            workers: int | None = None) -> McReport:
    """Mean zone length of a typical building through the hitting time: ``E[T] / lambda``."""
    if n_reps < 1000:
        raise ValueError("n_reps must be at least 1000")
    lam_ = _lam(lam)
    T = sample_hitting_times(lam, heights, R, n_reps, seed, 0.0, workers)
    m, lo, hi = mean_ci(T / lam_)
    return McReport("zone_length_hr", m, (lo, hi), T.size, seed, 0.0, {"mean_T": float(T.mean())})


def _direct_zone_block(rng, n, lam, heights, R, user_rate):
    lam_ = lam.rate_const
    out = np.empty(n)
    for i in range(n):
        root_h = float(heights.sample(rng))
        # buildings to the left until an empty stretch longer than R
        left = []
        pos = 0.0
        while True:
            gap = rng.exponential(1.0 / lam_)
            if gap > R:
                break
            pos -= gap
            left.append(pos)
        left = np.array(left[::-1])
        left_h = np.asarray(heights.sample(rng, left.size), dtype=float)
        m = rng.poisson(lam_ * R)
        right = np.sort(rng.uniform(0.0, R, m))
        right_h = np.asarray(heights.sample(rng, m), dtype=float)
        xs = np.concatenate([left, [0.0], right])
        hs = np.concatenate([left_h, [root_h], right_h])
        root = left.size
        par = np.full(root, -1, dtype=np.int64)
        if root:
            kernels.range_targets(xs, hs, left, left_h, float(R), par)
        desc = np.zeros(xs.size, dtype=bool)
        desc[root] = True
        for j in range(root - 1, -1, -1):
            desc[j] = par[j] >= 0 and desc[par[j]]
        lo = (left[0] if left.size else 0.0) - R
        k = rng.poisson(user_rate * (0.0 - lo))
        ux = rng.uniform(lo, 0.0, k)
        tgt = np.full(k, -1, dtype=np.int64)
        if k:
            kernels.range_targets(xs, hs, ux, np.zeros(k), float(R), tgt)
        hit = (tgt >= 0) & desc[np.maximum(tgt, 0)]
        out[i] = hit.sum() / user_rate
    return {"ell": out}


def direct_zone_length_hr(lam, heights: HeightModel, R: float, n_reps: int, seed: int = 0, user_rate: float | None = None,
                          workers: int | None = None) -> McReport:
    """Zone length of a rooted building estimated from Poisson ground users.

    Users left of the first empty stretch longer than ``R`` can never reach
    the root, so the simulated window is exact.
    """
    profile = as_profile(lam)
    user_rate = 10.0 * profile.rate_const if user_rate is None else float(user_rate)
    fn = functools.partial(_direct_zone_block, lam=profile, heights=heights, R=float(R), user_rate=user_rate)
    ell = mc_map(fn, n_reps, seed, block=1024, workers=workers)["ell"]
    m, lo, hi = mean_ci(ell)
    return McReport("zone_length_direct", m, (lo, hi), ell.size, seed, 0.0, {"user_rate": user_rate})


def area_cutoff(heights: HeightModel, eps: float = 1e-4) -> float:
    """Height beyond which fewer than ``eps`` of the buildings reach."""
    S = heights.sup_support
    if math.isfinite(S) and not heights.has_atom_at_sup:
        return float(S)
    q = float(heights.isf(eps))
    return min(q, S) if math.isfinite(S) else q


def _area_block(rng, n, lam, heights, R, nodes, weights, k0=32):
    X, H = sample_rows(lam, heights, np.zeros(n), k0, rng)
    T = np.zeros((n, nodes.size))
    pending = np.arange(n)
    while pending.size:
        K = X.shape[1]
        need = np.zeros(pending.size, dtype=bool)
        Tp = np.zeros((pending.size, nodes.size))
        for j, y in enumerate(nodes):
            idx = np.full((pending.size, K), -1, dtype=np.int64)
            cnt = np.zeros(pending.size, dtype=np.int64)
            st = np.zeros(pending.size, dtype=np.int64)
            kernels.batch_range_chain(X, H, np.zeros(pending.size), np.full(pending.size, float(y)), float(R), K,
                                      idx, cnt, st)
            need |= st != 1
            Tp[:, j] = cnt
        T[pending[~need]] = Tp[~need]
        pending = pending[need]
        if pending.size:
            X, H = extend_rows(lam, heights, X[need], H[need], K, rng)
    return {"area": T @ weights / lam.rate_const, "T": T}


def expected_zone_area_hr(lam, heights: HeightModel, R: float, n_reps: int = 10000, seed: int = 0, n_nodes: int = 20,
                          eps: float = 1e-4, workers: int | None = None) -> McReport:
    """Expected zone area ``int_0^q E[T_h] / lambda dh`` by Gauss-Legendre in ``h``.

    Each replication drives every node with the same landscape, so the
    per-replication quadrature sum carries the whole uncertainty.  The
    integral is cut at ``q`` where the height tail drops below ``eps``: a
    user above every building still hops whenever a building is in range,
    so the untruncated integral diverges.
    """
    q = area_cutoff(heights, eps)
    u, w = np.polynomial.legendre.leggauss(int(n_nodes))
    nodes = 0.5 * q * (u + 1.0)
    weights = 0.5 * q * w
    fn = functools.partial(_area_block, lam=as_profile(lam), heights=heights, R=float(R), nodes=nodes, weights=weights)
    res = mc_map(fn, n_reps, seed, workers=workers)
    m, lo, hi = mean_ci(res["area"])
    per_node = res["T"].mean(axis=0) / as_profile(lam).rate_const
    return McReport("zone_area_hr", m, (lo, hi), int(n_reps), seed, 0.0,
                    {"cutoff": q, "nodes": nodes, "mean_T_over_lambda": per_node})


# -- general range ---------------------------------------------------------------------------

class RangeSpec:
    """A symmetric convex compact range described by its upper profile.

    ``upper(a)`` is the top of the range above the relative abscissa ``a``
    (``-inf`` outside ``[-A, A]``); the lower profile follows from the
    symmetry, ``lower(a) = -upper(-a)``.
    """

    def __init__(self, upper: Callable, max_abscissa: float, name: str = "custom", params: dict | None = None):
        if not max_abscissa > 0:
            raise ValueError("max_abscissa must be positive")
        self._upper = upper
        self.max_abscissa = float(max_abscissa)
        self.name = name
        self.params = params or {}

    def upper(self, a):
        a = np.asarray(a, dtype=float)
        inside = np.abs(a) <= self.max_abscissa
        with np.errstate(invalid="ignore"):
            val = np.where(inside, self._upper(np.clip(a, -self.max_abscissa, self.max_abscissa)), -np.inf)
        return float(val) if val.ndim == 0 else val

    def lower(self, a):
        v = -np.asarray(self.upper(-np.asarray(a, dtype=float)))
        return float(v) if v.ndim == 0 else v

    def contains(self, da, db) -> bool:
        return bool(self.lower(da) <= db <= self.upper(da))

    def to_dict(self) -> dict:
        return {"kind": self.name, **self.params}

    def __repr__(self):
        return f"RangeSpec({self.name}, {self.params})"

    @classmethod
    def disc(cls, R: float) -> "RangeSpec":
        R = float(R)
        return cls(lambda a: np.sqrt(np.maximum(R * R - a * a, 0.0)), R, "disc", {"R": R})

    @classmethod
    def rect(cls, half_width: float, half_height: float) -> "RangeSpec":
        w, hh = float(half_width), float(half_height)
        return cls(lambda a: np.full(np.shape(a), hh), w, "rect", {"W": w, "H": hh})

    @classmethod
    def horizontal(cls, R: float) -> "RangeSpec":
        R = float(R)
        return cls(lambda a: np.full(np.shape(a), math.inf), R, "horizontal", {"R": R})

    @classmethod
    def diamond(cls, R: float) -> "RangeSpec":
        R = float(R)
        return cls(lambda a: R - np.abs(a), R, "diamond", {"R": R})

    @classmethod
    def tabulated(cls, a, h) -> "RangeSpec":
        """Piecewise-linear upper profile on knots spanning ``[-A, A]``; must be concave."""
        a = np.asarray(a, dtype=float)
        h = np.asarray(h, dtype=float)
        if a.ndim != 1 or a.size < 2 or a.shape != h.shape or np.any(np.diff(a) <= 0):
            raise ValueError("profile knots must be increasing and match the values")
        if not math.isclose(a[0], -a[-1], rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("profile must span a symmetric interval [-A, A]")
        slopes = np.diff(h) / np.diff(a)
        if np.any(np.diff(slopes) > 1e-12):
            raise ValueError("profile must be concave")
        if np.any(h + h[::-1] < -1e-12):
            raise ValueError("profile lies below its mirror image; the range would be empty")
        return cls(lambda x: np.interp(x, a, h), a[-1], "tabulated", {"a": a.tolist(), "h": h.tolist()})

    @classmethod
    def from_csv(cls, path) -> "RangeSpec":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        data = np.array([[float(v) for v in r[:2]] for r in rows])
        return cls.tabulated(data[:, 0], data[:, 1])

    @classmethod
    def parse(cls, text: str) -> "RangeSpec":
        """Parse ``disc:R``, ``rect:W,H``, ``diamond:R``, ``horizontal:R`` or ``profile:file.csv``."""
        kind, _, arg = str(text).partition(":")
        try:
            if kind == "disc":
                return cls.disc(float(arg))
            if kind == "rect":
                w, hh = arg.split(",")
                return cls.rect(float(w), float(hh))
            if kind == "diamond":
                return cls.diamond(float(arg))
            if kind == "horizontal":
                return cls.horizontal(float(arg))
            if kind == "profile":
                return cls.from_csv(arg)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad range {text!r}: {exc}") from exc
        raise ValueError(f"unknown range kind {kind!r}")


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def stoppage_point(landscape: Landscape, point, rspec: RangeSpec):
    """``(X_stop, H_stop)``: the first base whose building overtops the range, or the cap with ``None``."""
    x, y = (float(v) for v in point)
    cap = x + rspec.max_abscissa
    landscape.ensure_right(cap)
    lo = np.searchsorted(landscape.x, x, side="right")
    hi = np.searchsorted(landscape.x, cap, side="right")
    xs, hs = landscape.x[lo:hi], landscape.h[lo:hi]
    over = hs > y + np.asarray(rspec.upper(xs - x))
    if over.any():
        j = int(np.argmax(over))
        return float(xs[j]), float(hs[j])
    return cap, None


class StoppageLaw(NamedTuple):
    survival: float
    atom: float
    density: float
    cap: float


def _stop_rate(profile, heights, rspec, x, y):
    return lambda a: float(profile.rate(a)) * float(heights.tail(y + float(rspec.upper(a - x))))


def stoppage_law(lam, heights: HeightModel, point, rspec: RangeSpec, t: float, tol: float = 1e-9) -> StoppageLaw:
    """Survival ``P(X_stop >= t)``, atom at the cap and density at ``t``."""
    profile = as_profile(lam)
    x, y = (float(v) for v in point)
    if t < x:
        raise ValueError("t must not lie left of the point")
    cap = x + rspec.max_abscissa
    f = _stop_rate(profile, heights, rspec, x, y)
    phi_t = integrate.quad(f, x, min(t, cap), epsabs=tol, epsrel=tol, limit=400)[0] if t > x else 0.0
    phi_cap = integrate.quad(f, x, cap, epsabs=tol, epsrel=tol, limit=400)[0]
    surv = math.exp(-phi_t) if t <= cap else 0.0
    dens = f(t) * math.exp(-phi_t) if t < cap else 0.0
    return StoppageLaw(surv, math.exp(-phi_cap), dens, cap)


def _cumulative(f, a: float, pts: np.ndarray, order: int = 6) -> np.ndarray:
    """``int_a^p f`` at sorted ``pts`` by Gauss-Legendre on consecutive gaps."""
    u, w = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate([[a], pts])
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * u
    vals = f(nodes) * (0.5 * (hi - lo) * w)
    return np.cumsum(vals.sum(axis=1))


def stoppage_cdf(lam, heights: HeightModel, point, rspec: RangeSpec, t, left_limit: bool = False):
    """Vectorized CDF of the stoppage point; ``left_limit`` gives ``P(X_stop < t)``."""
    profile = as_profile(lam)
    x, y = (float(v) for v in point)
    cap = x + rspec.max_abscissa
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    order = np.argsort(flat)
    st = np.clip(flat[order], x, cap)
    dense = np.linspace(x, cap, 257)[1:]
    f = lambda a: np.asarray(profile.rate(a)) * np.asarray(heights.tail(y + np.asarray(rspec.upper(a - x))))
    grid = np.unique(np.concatenate([dense, st]))
    phi_grid = _cumulative(f, x, grid)
    phi = np.interp(st, grid, phi_grid)
    F = 1.0 - np.exp(-phi)
    raw = flat[order]
    F = np.where(raw < x, 0.0, F)
    if left_limit:
        F = np.where(raw > cap, 1.0, F)
    else:
        F = np.where(raw >= cap, 1.0, F)
    out = np.empty_like(flat)
    out[order] = F
    out = out.reshape(t.shape)
    return float(out) if out.ndim == 0 else out


def blocking_building_gr(landscape: Landscape, point, rspec: RangeSpec):
    """Steepest in-range building left of the stoppage point, or ``None``."""
    x, y = (float(v) for v in point)
    x_stop, _ = stoppage_point(landscape, point, rspec)
    lo = np.searchsorted(landscape.x, x, side="right")
    hi = np.searchsorted(landscape.x, x_stop, side="left")
    xs, hs = landscape.x[lo:hi], landscape.h[lo:hi]
    if xs.size == 0:
        return None
    d = xs - x
    inside = (hs >= y + np.asarray(rspec.lower(d))) & (hs <= y + np.asarray(rspec.upper(d)))
    if not inside.any():
        return None
    slopes = np.where(inside, (hs - y) / d, -np.inf)
    j = int(np.argmax(slopes))
    return Building(float(xs[j]), float(hs[j]))


def trajectory_gr(landscape: Landscape, point, rspec: RangeSpec, n_hops: int) -> list:
    """Successive general-range blocking buildings; stops early at ``None``."""
    out = []
    cur = tuple(point)
    for _ in range(int(n_hops)):
        b = blocking_building_gr(landscape, cur, rspec)
        if b is None:
            break
        out.append(b)
        cur = b
    return out


def _threshold(rspec, X, H, x, h, a):
    t1 = (h - H) / (x - X)
    line = h + (a - x) * t1
    return np.minimum(np.maximum(line, H + np.asarray(rspec.lower(a - X))), H + np.asarray(rspec.upper(a - X)))


def density_gR(lam, heights: HeightModel, rspec: RangeSpec, frm, at, tol: float = 1e-7) -> float:
    """Density of the first general-range blocking building at ``at`` seen from ``frm``.

    Against Lebesgue measure times the height law; nested adaptive quadrature.
    """
    lam = _lam(lam)
    X, H = (float(v) for v in frm)
    x, h = (float(v) for v in at)
    if not x > X:
        raise ValueError("the target must lie right of the source")
    if not rspec.contains(x - X, h - H):
        return 0.0
    t1 = (h - H) / (x - X)
    before = float(segment_integral(heights, H, t1, x - X))
    cap = X + rspec.max_abscissa
    tail_thr = lambda a: float(heights.tail(float(_threshold(rspec, X, H, x, h, a))))
    phi = lambda u: integrate.quad(tail_thr, x, u, epsabs=tol * 1e-2, epsrel=tol * 1e-2, limit=200)[0] if u > x else 0.0
    stop = lambda u: lam * float(heights.tail(H + float(rspec.upper(u - X)))) * math.exp(-lam * phi(u))
    if cap > x:
        body = integrate.quad(stop, x, cap, epsabs=tol, epsrel=tol, limit=200)[0]
        w = body + math.exp(-lam * phi(cap))
    else:
        w = 1.0
    return lam * math.exp(-lam * before) * w


def _kinks(f, lo, hi, iters=60):
    """Root of ``f`` in ``(lo, hi)`` where ``f(lo) <= 0 < f(hi)``, elementwise; ``nan`` otherwise."""
    flo, fhi = f(lo), f(hi)
    has = (flo <= 0) & (fhi > 0)
    a, b = lo.copy(), hi.copy()
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = f(m)
        left = fm > 0
        b = np.where(left, m, b)
        a = np.where(left, a, m)
    return np.where(has, 0.5 * (a + b), np.nan)


def density_gR_grid(lam, heights: HeightModel, rspec: RangeSpec, frm, x, h, panels: int = 24, order: int = 8):
    """Vectorized :func:`density_gR` by composite Gauss-Legendre.

    The threshold profile has at most two kinks (where the continued line
    crosses either range boundary); both are located by bisection and used
    as panel breaks.
    """
    lam = _lam(lam)
    X, H = (float(v) for v in frm)
    x, h = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(h, dtype=float))
    shape = x.shape
    x, h = x.ravel(), h.ravel()
    out = np.zeros(x.size)
    d = x - X
    ok = (d > 0) & (h >= H + np.asarray(rspec.lower(d))) & (h <= H + np.asarray(rspec.upper(d)))
    if not ok.any():
        return out.reshape(shape)
    xs, hs = x[ok], h[ok]
    t1 = (hs - H) / (xs - X)
    before = np.asarray(segment_integral(heights, H, t1, xs - X), dtype=float)
    cap = X + rspec.max_abscissa
    up = lambda a: H + np.asarray(rspec.upper(np.minimum(a, cap) - X))
    low = lambda a: H + np.asarray(rspec.lower(np.minimum(a, cap) - X))
    line = lambda a: hs + (a - xs) * t1
    k1 = _kinks(lambda a: line(a) - up(a), xs, np.full_like(xs, cap))
    k2 = _kinks(lambda a: low(a) - line(a), xs, np.full_like(xs, cap))
    brk = np.sort(np.stack([np.where(np.isnan(k1), cap, k1), np.where(np.isnan(k2), cap, k2)], axis=1), axis=1)
    edges = np.concatenate([xs[:, None], brk, np.full((xs.size, 1), cap)], axis=1)
    u, w = np.polynomial.legendre.leggauss(order)
    # Panel edges: each of the three pieces gets ``panels`` equal panels.
    frac = np.linspace(0.0, 1.0, panels + 1)
    pe = [edges[:, i:i + 1] + (edges[:, i + 1:i + 2] - edges[:, i:i + 1]) * frac[None, :] for i in range(3)]
    pe = np.concatenate([pe[0], pe[1][:, 1:], pe[2][:, 1:]], axis=1)  # (n, 3*panels+1)
    a0, a1 = pe[:, :-1], pe[:, 1:]
    half = 0.5 * (a1 - a0)
    nodes = 0.5 * (a0 + a1)[:, :, None] + half[:, :, None] * u  # (n, P, q)

    def thr_tail(a):
        th = np.minimum(np.maximum(hs[:, None, None] + (a - xs[:, None, None]) * t1[:, None, None],
                                   H + np.asarray(rspec.lower(a - X))), H + np.asarray(rspec.upper(a - X)))
        return np.asarray(heights.tail(th), dtype=float)

    tail_nodes = thr_tail(nodes)
    panel_int = np.sum(tail_nodes * (half[:, :, None] * w), axis=2)
    phi_start = np.concatenate([np.zeros((xs.size, 1)), np.cumsum(panel_int, axis=1)], axis=1)
    # Phi at every outer node: panel start plus a partial rule on [a0, node].
    sub_lo = a0[:, :, None]
    sub_half = 0.5 * (nodes - sub_lo)
    sub_nodes = 0.5 * (sub_lo + nodes)[..., None] + sub_half[..., None] * u
    partial = np.sum(thr_tail(sub_nodes.reshape(xs.size, -1, order)).reshape(sub_nodes.shape) * (sub_half[..., None] * w),
                     axis=3)
    phi_nodes = phi_start[:, :-1, None] + partial
    stop_tail = np.asarray(heights.tail(H + np.asarray(rspec.upper(nodes - X))), dtype=float)
    body = np.sum(lam * stop_tail * np.exp(-lam * phi_nodes) * (half[:, :, None] * w), axis=(1, 2))
    wv = body + np.exp(-lam * phi_start[:, -1])
    out[ok] = lam * np.exp(-lam * before) * wv
    return out.reshape(shape)


def prob_no_blocker(lam, heights: HeightModel, rspec: RangeSpec, frm=(0.0, 0.0), tol: float = 1e-11) -> float:
    """Probability that no building is visible in range from ``frm``.

    Either the first building that is not below the range overtops it, or
    every building up to the cap lies below the range.
    """
    lam = _lam(lam)
    X, H = (float(v) for v in frm)
    cap = rspec.max_abscissa
    low_tail = lambda a: float(heights.tail_weak(H + float(rspec.lower(a))))
    phi = lambda u: integrate.quad(low_tail, 0.0, u, epsabs=tol, epsrel=tol, limit=200)[0]
    stop = lambda u: lam * float(heights.tail(H + float(rspec.upper(u)))) * math.exp(-lam * phi(u))
    body = integrate.quad(stop, 0.0, cap, epsabs=tol, epsrel=tol, limit=200)[0]
    return body + math.exp(-lam * phi(cap))


def _general_block(rng, n, lam, heights, rspec, y0, k0=16):
    cap = rspec.max_abscissa
    X, H = sample_rows(lam, heights, np.zeros(n), k0, rng)
    while True:
        short = X[:, -1] <= cap
        if not short.any():
            break
        Xn, Hn = extend_rows(lam, heights, X[short], H[short], k0, rng)
        X2 = np.full((n, Xn.shape[1]), np.inf)
        H2 = np.zeros((n, Xn.shape[1]))
        X2[:, : X.shape[1]], H2[:, : X.shape[1]] = X, H
        X2[short], H2[short] = Xn, Hn
        X, H = X2, H2
    UP = np.ascontiguousarray(y0 + np.asarray(rspec.upper(np.minimum(X, 2 * cap + 1.0))))
    LOW = np.ascontiguousarray(y0 + np.asarray(rspec.lower(np.minimum(X, 2 * cap + 1.0))))
    idx = np.full(n, -1, dtype=np.int64)
    stop = np.full(n, -1, dtype=np.int64)
    st = np.zeros(n, dtype=np.int64)
    kernels.batch_general_first(np.ascontiguousarray(X), np.ascontiguousarray(H), UP, LOW, np.zeros(n),
                                np.full(n, float(y0)), np.full(n, cap), idx, stop, st)
    rows = np.arange(n)
    found = idx >= 0
    bx = np.where(found, X[rows, np.maximum(idx, 0)], np.nan)
    bh = np.where(found, H[rows, np.maximum(idx, 0)], np.nan)
    xs = np.where(stop >= 0, X[rows, np.maximum(stop, 0)], cap)
    return {"x": bx, "h": bh, "x_stop": xs}


def sample_first_blocker_gr(lam, heights: HeightModel, rspec: RangeSpec, n_reps: int, seed: int = 0,
                            start_height: float = 0.0, workers: int | None = None) -> dict:
    """First blocking building (``nan`` when none) and stoppage point from ``(0, start_height)``."""
    fn = functools.partial(_general_block, lam=as_profile(lam), heights=heights, rspec=rspec, y0=float(start_height))
    return mc_map(fn, n_reps, seed, workers=workers)


def sample_stoppage(lam, heights: HeightModel, rspec: RangeSpec, n_reps: int, seed: int = 0,
                    start_height: float = 0.0, workers: int | None = None) -> np.ndarray:
    return sample_first_blocker_gr(lam, heights, rspec, n_reps, seed, start_height, workers)["x_stop"]


def first_hop_hr_block(rng, n, lam, heights, R, y0=0.0):
    """First in-range hop from ``(0, y0)``: bases and heights, ``nan`` for the cemetery."""
    _, _, PX, PH = _range_chains(lam, heights, R, y0, n, rng, n_hops=1, want_path=True)
    return {"x": PX[:, 0], "h": PH[:, 0]}


def sample_first_hop_hr(lam, heights: HeightModel, R: float, n_reps: int, seed: int = 0, start_height: float = 0.0,
                        workers: int | None = None) -> dict:
    fn = functools.partial(first_hop_hr_block, lam=as_profile(lam), heights=heights, R=float(R), y0=float(start_height))
    return mc_map(fn, n_reps, seed, workers=workers)


def hitting_times_csv(T) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep", "T"])
    for i, v in enumerate(np.asarray(T)):
        w.writerow([i, int(v)])
    return buf.getvalue()


def blocker_mass_gR(lam, heights: HeightModel, rspec: RangeSpec, frm=(0.0, 0.0), nx: int = 24, nh: int = 24,
                    order: int = 8) -> float:
    """``int int g_R`` over the range, for continuous height laws.

    The abscissa is graded quadratically toward the cap, which absorbs the
    square-root edge of rounded ranges; heights run between the clipped lower
    and the upper profile.
    """
    X, H = (float(v) for v in frm)
    A = rspec.max_abscissa
    u, w = np.polynomial.legendre.leggauss(order)
    se = np.linspace(0.0, 1.0, nx + 1)
    s = (0.5 * (se[:-1] + se[1:])[:, None] + 0.5 * np.diff(se)[:, None] * u).ravel()
    ws = (0.5 * np.diff(se)[:, None] * w).ravel()
    x = X + A * (1.0 - (1.0 - s) ** 2)
    jac = 2.0 * A * (1.0 - s)
    lo = np.maximum(H + np.asarray(rspec.lower(x - X)), 0.0)
    hi = H + np.asarray(rspec.upper(x - X))
    ve = np.linspace(0.0, 1.0, nh + 1)
    v = (0.5 * (ve[:-1] + ve[1:])[:, None] + 0.5 * np.diff(ve)[:, None] * u).ravel()
    wv = (0.5 * np.diff(ve)[:, None] * w).ravel()
    span = np.maximum(hi - lo, 0.0)
    hh = lo[:, None] + span[:, None] * v[None, :]
    xx = np.broadcast_to(x[:, None], hh.shape)
    total = 0.0
    for i in range(0, xx.shape[0], 16):
        g = density_gR_grid(lam, heights, rspec, frm, xx[i:i + 16], hh[i:i + 16])
        f = np.asarray(heights.pdf(hh[i:i + 16]), dtype=float)
        total += float(np.sum((g * f) * wv[None, :] * (span[i:i + 16] * jac[i:i + 16] * ws[i:i + 16])[:, None]))
    return total
