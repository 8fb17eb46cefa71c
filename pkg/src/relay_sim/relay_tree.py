"""The backward problem: which points and buildings end up relayed by a given building.

The zone of eventual relaying of a building ``(alpha, beta)`` with blockage
slope ``t`` is the part of its reverse shade

    RS = {x <= alpha, (beta - y) / (alpha - x) >= t}

lying strictly right of the shadow-cutting building, the nearest building to
the left that escapes the reverse shade.  The self-absorbing scheme uses the
strict inequality throughout.
"""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import kernels
from .blockage import (
    ABSORBED_SELF,
    DEFAULT_TRUNC_EPS,
    Scheme,
    SchemeMismatch,
    TruncationBudgetExceeded,
    _escape_limit,
    blocking_building,
    sample_trajectories,
    tail_measure,
)
from .heights import HeightModel, line_tail_integral
from .landscape import Building, Landscape, as_profile, extend_rows, sample_rows
from .streams import mc_map


def is_strict(scheme) -> bool:
    return Scheme.parse(scheme) is Scheme.SELF_ABSORBING


def _rs_test(beta, slope, dx, y, strict):
    """Reverse-shade membership for a point ``dx = alpha - x >= 0`` to the left."""
    lhs = beta - y
    rhs = slope * dx
    return lhs > rhs if strict else lhs >= rhs


def reverse_shade_contains(building, its_blocker, query, strictness: str = "weak") -> bool:
    """Membership in the reverse shade of ``building`` blocked by ``its_blocker``.

    ``its_blocker`` may also be given as a bare slope.  Points on the vertical
    through the building count as infinitely steep, so ``(alpha, y)`` with
    ``y <= beta`` is inside.
    """
    alpha, beta = building
    if isinstance(its_blocker, (tuple, list, Building)):
        ab, bb = its_blocker
        if ab <= alpha:
            raise ValueError("the blocker must lie right of the building")
        slope = (bb - beta) / (ab - alpha)
    else:
        slope = float(its_blocker)
    x, y = query
    if x > alpha:
        return False
    if x == alpha:
        return y <= beta
    return bool(_rs_test(beta, slope, alpha - x, y, strictness == "strict"))


@dataclass(frozen=True)
class RelayZone:
    apex: Building
    slope: float
    alpha_sc: float
    strict: bool = False

    @property
    def ground_left(self) -> float:
        alpha, beta = self.apex
        reach = alpha - beta / self.slope if self.slope > 0 else -math.inf
        return max(self.alpha_sc, reach)

    @property
    def ground_length(self) -> float:
        return self.apex.x - self.ground_left

    def contains(self, point) -> bool:
        x, y = point
        alpha, beta = self.apex
        if x == alpha:
            return y == beta
        return x > self.alpha_sc and reverse_shade_contains(self.apex, self.slope, point,
                                                            "strict" if self.strict else "weak")


def apex_slope(landscape: Landscape, building, scheme=Scheme.INFINITE, trunc_eps: float = DEFAULT_TRUNC_EPS) -> float:
    """Blockage slope of a building; an absorbed building has slope 0."""
    nxt = blocking_building(landscape, building, scheme, trunc_eps)
    if nxt is ABSORBED_SELF:
        return 0.0
    return (nxt.h - building[1]) / (nxt.x - building[0])


def shadow_cutting_building(landscape: Landscape, building, scheme=Scheme.INFINITE, slope: float | None = None,
                            trunc_eps: float = DEFAULT_TRUNC_EPS, max_width: float | None = None):
    """Nearest building left of ``building`` escaping its reverse shade, or ``None`` if there is none.

    The landscape is extended leftward until one is found.  ``None`` is only
    returned for level reverse shades that no building can escape.
    """
    scheme = Scheme.parse(scheme)
    strict = is_strict(scheme)
    alpha, beta = (float(v) for v in building)
    if slope is None:
        slope = apex_slope(landscape, (alpha, beta), scheme, trunc_eps)
    heights = landscape.heights
    ref = landscape.profile.reference_rate
    if slope > 0:
        budget = (1e4 if max_width is None else max_width) / ref + beta / slope
    else:
        q = float(heights.tail_weak(beta) if strict else heights.tail(beta))
        budget = (1e4 if max_width is None else max_width) / (ref * q) if q > 0 else math.inf
    if landscape.lo < alpha and landscape.floor_on(landscape.lo, alpha) > 0:
        landscape.lower_floor(landscape.lo, alpha, 0.0)
    landscape.ensure_left(alpha - 8.0 / ref)
    while True:
        i1 = int(np.searchsorted(landscape.x, alpha, side="left"))
        xs, hs = landscape.x[:i1], landscape.h[:i1]
        viol = ~_rs_test(beta, slope, alpha - xs, hs, strict)
        if viol.any():
            j = int(np.flatnonzero(viol)[-1])
            return Building(float(xs[j]), float(hs[j]))
        if slope <= 0 and not math.isfinite(budget):
            return None
        width = alpha - landscape.lo
        if width >= budget:
            raise TruncationBudgetExceeded(f"no shadow-cutting building within width {budget:g}")
        landscape.extend_left(min(width, budget - width))


def relay_zone(landscape: Landscape, building, scheme=Scheme.INFINITE, trunc_eps: float = DEFAULT_TRUNC_EPS) -> RelayZone:
    scheme = Scheme.parse(scheme)
    alpha, beta = (float(v) for v in building)
    slope = apex_slope(landscape, (alpha, beta), scheme, trunc_eps)
    sc = shadow_cutting_building(landscape, (alpha, beta), scheme, slope, trunc_eps)
    return RelayZone(Building(alpha, beta), slope, -math.inf if sc is None else sc.x, is_strict(scheme))


def is_eventually_relayed(landscape: Landscape, point, building, method: str = "characterise",
                          scheme=Scheme.INFINITE, trunc_eps: float = DEFAULT_TRUNC_EPS, max_iter: int = 100000) -> bool:
    """Whether some iterate of the relaying scheme sends ``point`` to ``building``.

    ``iterate`` follows the scheme; ``characterise`` tests zone membership.
    """
    x, y = (float(v) for v in point)
    alpha, beta = (float(v) for v in building)
    if (x, y) == (alpha, beta):
        return True
    if x >= alpha:
        return False
    if method == "characterise":
        return relay_zone(landscape, (alpha, beta), scheme, trunc_eps).contains((x, y))
    if method != "iterate":
        raise ValueError("method must be 'iterate' or 'characterise'")
    cur = (x, y)
    for _ in range(max_iter):
        nxt = blocking_building(landscape, cur, scheme, trunc_eps)
        if nxt is ABSORBED_SELF or nxt.x > alpha:
            return False
        if nxt.x == alpha:
            return nxt.h == beta
        cur = (nxt.x, nxt.h)
    raise RuntimeError("iteration budget exhausted")


# -- the eventual relay forest ---------------------------------------------------

@dataclass
class RelayForest:
    """Parent pointers of every building in a window.

    ``parent[i] == -1`` with ``censored[i]`` means the blocking building could
    not be certified inside the window.  Self-loops mark absorbed buildings.
    """

    x: np.ndarray
    h: np.ndarray
    parent: np.ndarray
    censored: np.ndarray
    scheme: Scheme
    top: np.ndarray = field(default=None)
    margin: np.ndarray = field(default=None)

    def __len__(self):
        return int(self.x.size)

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean()) if self.x.size else 0.0

    def ancestor_matrix(self, depth: int) -> np.ndarray:
        """``A[i, k]`` is the ``k``-th iterate of node ``i`` or ``-1`` when it leaves the certified part."""
        n = self.x.size
        A = np.full((n, depth + 1), -1, dtype=np.int64)
        A[:, 0] = np.arange(n)
        for k in range(1, depth + 1):
            prev = A[:, k - 1]
            ok = prev >= 0
            A[ok, k] = self.parent[prev[ok]]
        return A

    def spine_flags(self) -> np.ndarray:
        """Nodes at the maximal height under ``next_max``: the bi-infinite spine."""
        if self.scheme is Scheme.NEXT_MAX and self.top is not None:
            return self.top.copy()
        return np.zeros(self.x.size, dtype=bool)

    def to_csv(self, path=None, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_x", "node_h", "parent_x", "parent_h", "censored", "spine"])
        spine = self.spine_flags()
        for i in range(self.x.size):
            p = self.parent[i]
            px, ph = (repr(float(self.x[p])), repr(float(self.h[p]))) if p >= 0 else ("", "")
            w.writerow([repr(float(self.x[i])), repr(float(self.h[i])), px, ph, int(self.censored[i]), int(spine[i])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def hull_parents(x, h) -> np.ndarray:
    out = np.empty(len(x), dtype=np.int64)
    kernels.hull_parents(np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(h, dtype=float), out)
    return out


def build_forest(landscape: Landscape, scheme=Scheme.INFINITE, boundary_margin: float = 0.0,
                 trunc_eps: float = DEFAULT_TRUNC_EPS) -> RelayForest:
    """Blocking building of every building of the window.

    A parent is kept only if no building beyond the window could beat it with
    probability ``>= trunc_eps``; other nodes are censored.  Nodes closer than
    ``boundary_margin`` to the left edge are flagged in ``margin`` since their
    descendants may lie outside the window.
    """
    scheme = Scheme.parse(scheme)
    heights = landscape.heights
    if landscape.floor_on(landscape.lo, landscape.hi) > 0:
        landscape.lower_floor(landscape.lo, landscape.hi, 0.0)
    x, h = landscape.x, landscape.h
    S = heights.sup_support
    top = (h >= S) if heights.has_atom_at_sup else np.zeros(x.size, dtype=bool)
    if scheme is Scheme.INFINITE and top.any():
        raise SchemeMismatch("buildings of maximal height need self_absorbing or next_max")
    parent = hull_parents(x, h)
    censored = parent < 0
    has = ~censored
    if has.any():
        i = np.flatnonzero(has)
        p = parent[i]
        t = (h[p] - h[i]) / (x[p] - x[i])
        m = np.asarray(tail_measure(landscape.profile, heights, landscape.hi, x[i], h[i], t)).reshape(-1)
        bad = i[m >= _escape_limit(trunc_eps)]
        parent[bad] = -1
        censored[bad] = True
    if scheme is Scheme.SELF_ABSORBING:
        parent[top] = np.flatnonzero(top)
        censored[top] = False
    margin = x < landscape.lo + boundary_margin
    return RelayForest(x.copy(), h.copy(), parent, censored, scheme, top, margin)


class _UnionFind:
    def __init__(self, n):
        self.p = np.arange(n)

    def find(self, a):
        root = a
        while self.p[root] != root:
            root = self.p[root]
        while self.p[a] != root:
            self.p[a], a = root, self.p[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[max(ra, rb)] = min(ra, rb)


def foil_partition(forest: RelayForest, depth: int) -> np.ndarray:
    """Foil labels: nodes whose iterates meet at equal depth ``<= depth`` share a label.

    Censored nodes get label ``-1``.
    """
    A = forest.ancestor_matrix(depth)
    uf = _UnionFind(len(forest))
    for k in range(1, depth + 1):
        col = A[:, k]
        ok = np.flatnonzero(col >= 0)
        if ok.size == 0:
            break
        order = ok[np.argsort(col[ok], kind="stable")]
        vals = col[order]
        for a, b, va, vb in zip(order[:-1], order[1:], vals[:-1], vals[1:]):
            if va == vb:
                uf.union(a, b)
    labels = np.array([uf.find(i) for i in range(len(forest))], dtype=np.int64)
    labels[forest.censored & (forest.parent < 0)] = -1
    return labels


def foil_relation(forest: RelayForest, i: int, j: int, depth: int) -> str:
    """``same``, ``different`` or ``unknown`` within the depth budget.

    Two nodes on the same chain are in different foils unless the chain has
    reached a self-loop, where iterates stop moving.
    """
    A = forest.ancestor_matrix(depth)
    for k in range(1, depth + 1):
        if A[i, k] >= 0 and A[i, k] == A[j, k]:
            return "same"
    for a, b in ((i, j), (j, i)):
        chain = A[a]
        hits = np.flatnonzero(chain == b)
        if hits.size:
            fixed = forest.parent[b] == b
            return "same" if fixed else "different"
    return "unknown"


@dataclass
class EftReport:
    label: str
    diagnostics: dict


def classify_eft(heights: HeightModel, scheme, landscape: Landscape | None = None,
                 trunc_eps: float = DEFAULT_TRUNC_EPS) -> EftReport:
    """Unimodular class of the relay tree: ``F/F``, ``I/F`` or ``I/I``.

    The class follows from the atom at the maximal height and the scheme; a
    window, when supplied, adds consistency diagnostics.
    """
    scheme = Scheme.parse(scheme)
    if not heights.has_atom_at_sup:
        label = "I/I"
    elif scheme is Scheme.SELF_ABSORBING:
        label = "F/F"
    elif scheme is Scheme.NEXT_MAX:
        label = "I/F"
    else:
        raise SchemeMismatch("the plain scheme is not defined in the max-height case")
    diag: dict = {}
    if landscape is not None:
        forest = build_forest(landscape, scheme, trunc_eps=trunc_eps)
        diag = forest_diagnostics(forest)
    return EftReport(label, diag)


def chain_ends(forest: RelayForest) -> np.ndarray:
    """Last node reached by following parents: a self-loop or a censored node."""
    end = np.arange(len(forest))
    for i in np.argsort(forest.x)[::-1]:
        p = forest.parent[i]
        if p >= 0 and p != i:
            end[i] = end[p]
    return end


def forest_diagnostics(forest: RelayForest) -> dict:
    n = len(forest)
    parent = forest.parent
    idx = np.arange(n)
    self_loop = parent == idx
    moving = (parent >= 0) & ~self_loop
    end = chain_ends(forest)
    absorbed = parent[end] == end
    desc = np.zeros(n, dtype=np.int64)
    for i in np.argsort(forest.x):
        p = parent[i]
        if p >= 0 and p != i:
            desc[p] += desc[i] + 1
    top = forest.top if forest.top is not None else np.zeros(n, dtype=bool)
    diag = {
        "n_nodes": n,
        "censored_fraction": forest.censored_fraction,
        "self_loop_fraction": float(self_loop.mean()) if n else 0.0,
        "n_top": int(top.sum()),
        "cycles_only_self_loops": bool(np.all(forest.x[parent[moving]] > forest.x[moving])),
        "max_in_tree": int(desc.max()) if n else 0,
    }
    if top.any():
        left = forest.x < forest.x[np.flatnonzero(top)[-1]]
        diag["absorbed_fraction"] = float(absorbed[left].mean()) if left.any() else 1.0
        if forest.scheme is Scheme.NEXT_MAX:
            diag["spine_ok"] = spine_matches_top(forest)
    return diag


def spine_matches_top(forest: RelayForest) -> bool:
    """The ancestry of the leftmost node, from the first maximal-height node on, is exactly the maximal-height nodes."""
    top = np.flatnonzero(forest.top)
    if top.size == 0:
        return False
    chain, cur = [0], 0
    while forest.parent[cur] >= 0 and forest.parent[cur] != cur:
        cur = forest.parent[cur]
        chain.append(cur)
    chain = np.array(chain)
    on = chain[forest.x[chain] >= forest.x[top[0]]]
    return bool(np.array_equal(np.sort(on), top))


# -- closed forms ------------------------------------------------------------------

def _lam(lam) -> float:
    return as_profile(lam).rate_const


def _exceed(heights, beta, tan_theta, t, strict):
    """``int_0^t P(H > beta - tan_theta u) du`` (``>=`` when strict)."""
    return line_tail_integral(heights, beta - tan_theta * t, tan_theta, t, strict=strict)


def zone_length_cdf(lam, heights: HeightModel, beta: float, tan_theta: float, t, strict: bool = False,
                    left_limit: bool = False):
    """CDF of the ground length ``min(alpha - alpha_sc, beta / tan_theta)`` of a zone.

    The length has an atom at ``beta / tan_theta``; the CDF is right-continuous
    there (``left_limit=True`` gives the value just below).
    """
    lam = _lam(lam)
    t = np.asarray(t, dtype=float)
    cap = beta / tan_theta if tan_theta > 0 else math.inf
    tc = np.clip(t, 0.0, cap if math.isfinite(cap) else np.inf)
    with np.errstate(invalid="ignore"):
        if tan_theta > 0:
            m = np.asarray(_exceed(heights, beta, tan_theta, tc, strict))
        else:
            q = float(heights.tail_weak(beta) if strict else heights.tail(beta))
            m = np.where(tc > 0, q * tc, 0.0) if q > 0 else np.zeros_like(tc)
    val = -np.expm1(-lam * m)
    below = (t < cap) if not left_limit else (t <= cap)
    out = np.where(t < 0, 0.0, np.where(below, val, 1.0))
    return float(out) if out.ndim == 0 else out


def expected_zone_length_given_angle(lam, heights: HeightModel, beta: float, tan_theta: float,
                                     strict: bool = False) -> float:
    lam_ = _lam(lam)
    if tan_theta == math.inf:
        return 0.0
    if tan_theta <= 0:
        q = float(heights.tail_weak(beta) if strict else heights.tail(beta))
        return math.inf if q <= 0 else 1.0 / (lam_ * q)
    cap = beta / tan_theta
    if cap <= 0:
        return 0.0
    f = lambda u: 1.0 - zone_length_cdf(lam_, heights, beta, tan_theta, u, strict)
    val, _ = integrate.quad(f, 0.0, cap, epsabs=1e-11, epsrel=1e-10, limit=400)
    return val


def expected_building_count(lam, heights: HeightModel, beta: float, tan_theta: float, strict: bool = False) -> float:
    """Mean number of buildings inside the zone (apex excluded)."""
    if not tan_theta > 0:
        raise ValueError("tan_theta must be positive")
    lam_ = _lam(lam)
    if beta <= 0:
        return 0.0
    el = expected_zone_length_given_angle(lam_, heights, beta, tan_theta, strict)
    hit = -math.expm1(-lam_ * float(_exceed(heights, beta, tan_theta, beta / tan_theta, strict)))
    return lam_ * el - hit


def expected_zone_length_palm(lam, heights: HeightModel, beta: float, scheme=Scheme.INFINITE) -> float:
    """Mean ground length of the zone of a typical building of height ``beta``."""
    scheme = Scheme.parse(scheme)
    lam_ = _lam(lam)
    S = heights.sup_support
    if beta > S:
        raise ValueError("beta exceeds the support of the height law")
    if heights.has_atom_at_sup and beta >= S:
        if scheme is Scheme.SELF_ABSORBING:
            return 1.0 / (lam_ * heights.atom_at_sup)
        if scheme is Scheme.NEXT_MAX:
            return math.inf
        raise SchemeMismatch("the plain scheme is not defined at the maximal height")
    Gb = float(heights.survival_primitive(beta))
    if Gb == 0.0:
        return 0.0
    if float(heights.survival_primitive(0.0)) == 0.0:
        return math.inf
    f = lambda u: -Gb / float(heights.survival_primitive(u)) ** 2
    val, _ = integrate.quad(f, 0.0, beta, epsabs=1e-12, epsrel=1e-10, limit=400)
    return val / lam_


# -- Monte Carlo of zones ------------------------------------------------------------

def sample_left_zones(profile, heights: HeightModel, beta, slope, rng, strict: bool = False, alpha=None,
                      k0: int = 16, keep_rows: bool = False, max_buildings: int = 50_000_000):
    """Shadow-cutting distances seen from apexes ``(alpha, beta)`` with blockage slopes ``slope``.

    Only the buildings to the left of each apex are simulated.  Returns the
    distance to the shadow-cutting building (``inf`` if none), the ground
    length and the number of buildings strictly between them; with
    ``keep_rows`` also the distances and heights of those buildings.
    """
    profile = as_profile(profile)
    beta = np.asarray(beta, dtype=float)
    slope = np.broadcast_to(np.asarray(slope, dtype=float), beta.shape).copy()
    n = beta.size
    alpha = np.zeros(n) if alpha is None else np.broadcast_to(np.asarray(alpha, dtype=float), beta.shape)
    mirror = profile.mirrored()
    D, Hh = sample_rows(mirror, heights, -alpha, k0, rng)
    D = D + alpha[:, None]  # distance to the left of the apex
    dist = np.full(n, np.nan)
    if np.any(slope < 0):
        raise ValueError("blockage slopes must be nonnegative")
    count = np.zeros(n)
    q_level = np.asarray(heights.tail_weak(beta) if strict else heights.tail(beta), dtype=float)
    pending = np.arange(n)
    rowsD, rowsH = ([None] * n, [None] * n) if keep_rows else (None, None)
    Dp, Hp = D, Hh
    k = k0
    while pending.size:
        b, t = beta[pending, None], slope[pending, None]
        viol = ~_rs_test(b, t, Dp, Hp, strict)
        anyv = viol.any(axis=1)
        first = np.argmax(viol, axis=1)
        never = ~anyv & (slope[pending] <= 0) & (q_level[pending] <= 0)
        done = anyv | never
        r = pending[done]
        dist[r] = np.where(anyv[done], Dp[done, first[done]], np.inf)
        count[r] = np.where(anyv[done], first[done], np.inf)
        if keep_rows:
            for rr, c, i in zip(r, count[r], np.flatnonzero(done)):
                c = int(c) if math.isfinite(c) else Dp.shape[1]
                rowsD[rr], rowsH[rr] = Dp[i, :c].copy(), Hp[i, :c].copy()
        keep = ~done
        pending = pending[keep]
        if pending.size:
            Dp, Hp = Dp[keep], Hp[keep]
            if np.any(~np.isfinite(Dp[:, -1])) or Dp.shape[1] > max_buildings:
                raise TruncationBudgetExceeded("leftward search ran out of buildings")
            # geometric growth keeps the total rescanning cost linear in the zone size
            k = min(2 * k, 1 << 20)
            a = alpha[pending, None]
            Dp, Hp = extend_rows(mirror, heights, Dp - a, Hp, k, rng)
            Dp = Dp + a
    with np.errstate(divide="ignore"):
        cap = np.where(slope > 0, beta / np.where(slope > 0, slope, 1.0), np.inf)
    ell = np.minimum(dist, cap)
    out = {"dist": dist, "ell": ell, "count": count}
    if keep_rows:
        out["rows"] = (rowsD, rowsH)
    return out


def _zone_block(rng, n, profile, heights, beta, tan_theta, strict):
    res = sample_left_zones(profile, heights, np.full(n, beta), tan_theta, rng, strict)
    return {"ell": res["ell"], "count": res["count"], "dist": res["dist"]}


def mc_zone_given_angle(profile, heights: HeightModel, beta: float, tan_theta: float, n_reps: int, seed: int = 0,
                        strict: bool = False, workers: int | None = None):
    """Ground lengths and building counts of zones with fixed apex height and slope."""
    fn = functools.partial(_zone_block, profile=as_profile(profile), heights=heights, beta=float(beta),
                           tan_theta=float(tan_theta), strict=strict)
    return mc_map(fn, n_reps, seed, workers=workers)


def _palm_block(rng, n, profile, heights, beta, scheme):
    b = np.full(n, beta) if beta is not None else np.asarray(heights.sample(rng, n), dtype=float)
    t = np.empty(n)
    # blockage slope of the apex from its right-hand landscape
    sub = sample_trajectories(profile, heights, 1, n, seed=int(rng.integers(2**63)),
                              start=lambda r, m: (np.zeros(m), b), scheme=scheme, workers=1)
    t[:] = sub["T"][:, 1]
    res = sample_left_zones(profile, heights, b, t, rng, is_strict(scheme))
    return {"ell": res["ell"], "slope": t, "beta": b, "count": res["count"]}


def mc_palm_zone(profile, heights: HeightModel, n_reps: int, seed: int = 0, beta: float | None = None,
                 scheme=Scheme.INFINITE, workers: int | None = None):
    """Zone ground lengths of a typical building (height ``beta`` or drawn from the law)."""
    fn = functools.partial(_palm_block, profile=as_profile(profile), heights=heights, beta=beta,
                           scheme=Scheme.parse(scheme))
    return mc_map(fn, n_reps, seed, block=4096, workers=workers)


def _mass_block(rng, n, profile, heights, scheme, k_max, total_hops):
    # root heights stratified in pairs: rows 2j and 2j+1 share the quantile stratum j
    u = (np.arange(n) // 2 + rng.random(n)) / (n // 2)
    b = np.asarray(heights.ppf(np.minimum(u, np.nextafter(1.0, 0.0))), dtype=float)
    hops = total_hops if total_hops else k_max
    tr = sample_trajectories(profile, heights, hops, n, seed=int(rng.integers(2**63)),
                             start=lambda r, m: (np.zeros(m), b), scheme=scheme, workers=1)
    moved = tr["X"][:, 1:] != tr["X"][:, :-1]
    res = sample_left_zones(profile, heights, b, tr["T"][:, 1], rng, is_strict(scheme), keep_rows=True)
    rowsD, rowsH = res["rows"]
    desc = np.zeros((n, k_max), dtype=float)
    for r in range(n):
        d, hh = rowsD[r], rowsH[r]
        if d.size == 0:
            continue
        xs = np.concatenate([-d[::-1], [0.0]])
        hs = np.concatenate([hh[::-1], [b[r]]])
        par = hull_parents(xs, hs)
        depth = np.full(xs.size, -1, dtype=np.int64)
        depth[-1] = 0
        for i in range(xs.size - 2, -1, -1):
            p = par[i]
            depth[i] = depth[p] + 1 if p >= 0 and depth[p] >= 0 else -1
        for k in range(k_max):
            desc[r, k] = np.count_nonzero((depth >= 1) & (depth <= k + 1))
    anc = np.cumsum(moved[:, :k_max], axis=1).astype(float)
    out = {"desc": desc, "anc": anc, "desc_total": res["count"]}
    if total_hops:
        out["anc_total"] = moved.sum(axis=1).astype(float)
        out["absorbed"] = (~moved[:, -1]).astype(float)
    return out


def paired_mean_ci(x) -> tuple[float, float, float]:
    """Mean and 95% interval for samples stratified in consecutive pairs of equal weight."""
    from .validation import Z95

    x = np.asarray(x, dtype=float)
    if x.size % 2:
        raise ValueError("paired strata need an even sample size")
    m = float(x.mean())
    se = math.sqrt(float(np.sum((x[0::2] - x[1::2]) ** 2))) / x.size
    return (m, m - Z95 * se, m + Z95 * se)


def mass_transport_check(profile, heights: HeightModel, scheme=Scheme.INFINITE, n_windows: int = 10000,
                         seed: int = 0, k_max: int = 3, total_hops: int = 0, workers: int | None = None) -> dict:
    """Compare descendants and ancestors of a typical building within ``k`` generations.

    Each replication roots a building of random height at the origin,
    follows its relaying chain to the right and simulates the left landscape
    up to the shadow-cutting building, which contains every descendant.
    Nothing is censored.  Root heights are stratified by quantile pairs,
    which tames the heavy right tail of the descendant counts while keeping
    the estimator unbiased.  With ``total_hops`` the untruncated totals are also
    compared (finite only for the self-absorbing scheme).
    """
    if n_windows % 2:
        raise ValueError("n_windows must be even")
    scheme = Scheme.parse(scheme)
    fn = functools.partial(_mass_block, profile=as_profile(profile), heights=heights, scheme=scheme,
                           k_max=int(k_max), total_hops=int(total_hops))
    res = mc_map(fn, n_windows, seed, block=4096, workers=workers)
    levels = []
    for k in range(k_max):
        d = paired_mean_ci(res["desc"][:, k])
        a = paired_mean_ci(res["anc"][:, k])
        levels.append({"k": k + 1, "descendants": d, "ancestors": a,
                       "overlap": bool(d[1] <= a[2] and a[1] <= d[2])})
    out = {"levels": levels, "n_windows": int(n_windows), "censored_fraction": 0.0}
    if total_hops:
        d = paired_mean_ci(res["desc_total"])
        a = paired_mean_ci(res["anc_total"])
        out["total"] = {"descendants": d, "ancestors": a, "overlap": bool(d[1] <= a[2] and a[1] <= d[2]),
                        "absorbed_fraction": float(res["absorbed"].mean())}
    return out
