"""Registered Monte Carlo experiments comparing simulations with closed forms.

Every experiment takes a plain config dict, is deterministic given its seed
and reports a :class:`CheckResult`.  ``sabotage`` perturbs the intensity
used on the closed-form side only, as a negative control.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import finite_range as fr
from . import heights as hmod
from .blockage import (
    Scheme,
    first_hop_density,
    sample_trajectories,
    vis_height_cdf,
    vis_slope_cdf,
    vis_total_mass,
    density_gN,
)
from .landscape import generate_window
from .relay_tree import (
    classify_eft,
    expected_building_count,
    expected_zone_length_palm,
    mass_transport_check,
    mc_palm_zone,
    mc_zone_given_angle,
    zone_length_cdf,
)
from .streams import block_rng
from .validation import (
    ConfigError,
    McReport,
    histogram_density_distance,
    ks_distance,
    mean_ci,
    to_json,
    wilson_ci,
)

SABOTAGE_FACTOR = 1.1
COMMON_KEYS = {"experiment", "seed", "n_reps", "workers", "lam", "heights", "sabotage"}


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)
    censored_fraction: float = 0.0
    seed: int = 0
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "seed": int(self.seed),
            "config_hash": self.config_hash,
            "censored_fraction": self.censored_fraction,
            "metrics": self.metrics,
            "reports": [r.to_dict() for r in self.reports],
        }

    def to_json(self) -> str:
        return to_json(self.to_dict(), indent=2)


@dataclass
class _Spec:
    fn: Callable
    defaults: dict
    summary: str


REGISTRY: dict[str, _Spec] = {}


def experiment(name: str, summary: str, **defaults):
    def deco(fn):
        REGISTRY[name] = _Spec(fn, defaults, summary)
        return fn
    return deco


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(to_json(cfg).encode()).hexdigest()[:16]


def resolve_config(config: dict) -> dict:
    """Validate ``config`` and fill in the experiment defaults."""
    if not isinstance(config, dict):
        raise ConfigError("config must be a mapping")
    name = config.get("experiment")
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment {name!r}; known: {sorted(REGISTRY)}")
    spec = REGISTRY[name]
    allowed = COMMON_KEYS | set(spec.defaults)
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"unknown keys for {name}: {sorted(unknown)}")
    cfg = {"seed": 0, "workers": None, "lam": 1.0, "heights": {"kind": "exponential", "rate": 1.0},
           "sabotage": False, **spec.defaults}
    cfg.update(config)
    try:
        cfg["seed"] = int(cfg["seed"])
        cfg["lam"] = float(cfg["lam"])
        if "n_reps" in cfg:
            cfg["n_reps"] = int(cfg["n_reps"])
            if cfg["n_reps"] < 1:
                raise ConfigError("n_reps must be positive")
        hmod.from_dict(cfg["heights"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg["lam"] > 0:
        raise ConfigError("lam must be positive")
    return cfg


def run_experiment(config: dict) -> CheckResult:
    """Run a registered experiment.  Results depend on the config and seed only."""
    cfg = resolve_config(config)
    public = {k: v for k, v in cfg.items() if k != "workers"}
    res = REGISTRY[cfg["experiment"]].fn(cfg)
    res.seed = cfg["seed"]
    res.config_hash = config_hash(public)
    if res.censored_fraction > 0.05:
        res.passed = False
        res.metrics["censoring_failure"] = True
    return res


def _model(cfg):
    return hmod.from_dict(cfg["heights"])


def _closed_lam(cfg) -> float:
    return cfg["lam"] * (SABOTAGE_FACTOR if cfg["sabotage"] else 1.0)


def _hist_metrics(rep, max_flag_frac: float = 0.005) -> tuple[bool, dict]:
    m = rep.summary()
    return m["fraction_flagged"] <= max_flag_frac, m


# -- 1: first-hop density ---------------------------------------------------------------------

@experiment("g1", "first blocking building vs the closed-form joint density", n_reps=1_000_000, bins=40, xmax=6.0,
            hmax=6.0)
def _exp_g1(cfg):
    H = _model(cfg)
    res = sample_trajectories(cfg["lam"], H, 1, cfg["n_reps"], seed=cfg["seed"], workers=cfg["workers"])
    x, h = res["X"][:, 1], res["H"][:, 1]
    lam_c = _closed_lam(cfg)
    dens = lambda xx, hh: first_hop_density(lam_c, H, (0.0, 0.0), xx, hh) * np.asarray(H.pdf(hh))
    edges = [np.linspace(0.0, cfg["xmax"], cfg["bins"] + 1), np.linspace(0.0, cfg["hmax"], cfg["bins"] + 1)]
    rep = histogram_density_distance(np.column_stack([x, h]), dens, edges, order=8, sub=2)
    ok, m = _hist_metrics(rep)
    return CheckResult("g1", ok, m)


# -- 2: Markov kernel ----------------------------------------------------------------------------

@experiment("markov", "kernel normalization and bucketed conditional laws of the third hop", n_reps=200_000,
            n_states=10, buckets=3, min_bucket=2000, ks_tol=0.05, norm_tol=1e-6, max_eval=4000)
def _exp_markov(cfg):
    H = _model(cfg)
    lam_c = _closed_lam(cfg)
    rng = block_rng(cfg["seed"], 1 << 30)
    norms = []
    for _ in range(cfg["n_states"]):
        T = float(rng.uniform(0.1, 3.0))
        Hh = float(H.sample(rng))
        norms.append(vis_total_mass(lam_c, H, T, Hh))
    norm_err = float(np.max(np.abs(np.array(norms) - 1.0)))
    res = sample_trajectories(cfg["lam"], H, 3, cfg["n_reps"], seed=cfg["seed"], workers=cfg["workers"])
    t2, h2, t3, h3 = res["T"][:, 2], res["H"][:, 2], res["T"][:, 3], res["H"][:, 3]
    nb = cfg["buckets"]
    qt = np.quantile(t2, np.linspace(0, 1, nb + 1))
    qh = np.quantile(h2, np.linspace(0, 1, nb + 1))
    it = np.clip(np.searchsorted(qt, t2, side="right") - 1, 0, nb - 1)
    ih = np.clip(np.searchsorted(qh, h2, side="right") - 1, 0, nb - 1)
    worst = 0.0
    sizes = []
    for a in range(nb):
        for b in range(nb):
            sel = np.flatnonzero((it == a) & (ih == b))
            sizes.append(int(sel.size))
            if sel.size < cfg["min_bucket"]:
                continue
            sel = sel[: cfg["max_eval"]]
            Tc, Hc = t2[sel], h2[sel]
            F_t = lambda s: np.mean(vis_slope_cdf(lam_c, H, Tc[None, :], Hc[None, :], np.asarray(s)[:, None]), axis=1)
            F_h = lambda y: np.mean(vis_height_cdf(H, Hc[None, :], np.asarray(y)[:, None]), axis=1)
            worst = max(worst, ks_distance(t3[sel], F_t), ks_distance(h3[sel], F_h))
    ok = norm_err <= cfg["norm_tol"] and worst <= cfg["ks_tol"] and min(sizes) >= cfg["min_bucket"]
    return CheckResult("markov", ok, {"normalization_max_error": norm_err, "max_bucket_ks": worst,
                                      "bucket_sizes": sizes})


# -- 3: monotonicity --------------------------------------------------------------------------------

@experiment("monotone", "heights never decrease and slopes never increase along trajectories", n_reps=100_000,
            n_hops=10)
def _exp_monotone(cfg):
    H = _model(cfg)
    res = sample_trajectories(cfg["lam"], H, cfg["n_hops"], cfg["n_reps"], seed=cfg["seed"], workers=cfg["workers"])
    dh = np.diff(res["H"][:, 1:], axis=1)
    dt = np.diff(res["T"][:, 1:], axis=1)
    vh = int(np.sum(dh < 0))
    vt = int(np.sum(dt > 0))
    return CheckResult("monotone", vh == 0 and vt == 0, {"height_violations": vh, "slope_violations": vt,
                                                         "n_trajectories": int(cfg["n_reps"])})


# -- 4: limits ---------------------------------------------------------------------------------------

@experiment("limits", "slopes vanish and heights approach the supremum", n_reps=10_000, early=5, late=30,
            uniform_hop=20, level=0.9)
def _exp_limits(cfg):
    H = _model(cfg)
    res = sample_trajectories(cfg["lam"], H, cfg["late"], cfg["n_reps"], seed=cfg["seed"], workers=cfg["workers"])
    med_early = float(np.median(res["T"][:, cfg["early"]]))
    med_late = float(np.median(res["T"][:, cfg["late"]]))
    U = hmod.Uniform(1.0)
    ru = sample_trajectories(cfg["lam"], U, cfg["uniform_hop"], cfg["n_reps"], seed=cfg["seed"] + 1,
                             workers=cfg["workers"])
    med_h = float(np.median(ru["H"][:, cfg["uniform_hop"]]))
    ok = med_late < med_early / 5.0 and med_h > cfg["level"]
    return CheckResult("limits", ok, {"median_t_early": med_early, "median_t_late": med_late,
                                      "median_H_uniform": med_h,
                                      "saturated_fraction_uniform": float(np.mean(ru["saturated"]))})


# -- 5 and 6: zone length law and building counts ------------------------------------------------

def _zone_sample(cfg):
    H = _model(cfg)
    return H, mc_zone_given_angle(cfg["lam"], H, cfg["beta"], cfg["tan_theta"], cfg["n_reps"], seed=cfg["seed"],
                                  workers=cfg["workers"])


@experiment("zone_cdf", "zone ground length against its closed-form law", n_reps=100_000, beta=2.0, tan_theta=1.0,
            ks_tol=0.02, spot=1.0, spot_value=0.2075)
def _exp_zone_cdf(cfg):
    H, res = _zone_sample(cfg)
    lam_c = _closed_lam(cfg)
    b, k = cfg["beta"], cfg["tan_theta"]
    F = lambda t: zone_length_cdf(lam_c, H, b, k, t)
    FL = lambda t: zone_length_cdf(lam_c, H, b, k, t, left_limit=True)
    ks = ks_distance(res["ell"], F, FL)
    p_cf = float(F(cfg["spot"]))
    p, lo, hi = wilson_ci(int(np.sum(res["ell"] <= cfg["spot"])), res["ell"].size)
    sd = math.sqrt(p_cf * (1 - p_cf) / res["ell"].size)
    spot_ok = abs(p - p_cf) <= 3 * sd and abs(p_cf - cfg["spot_value"]) < 5e-4
    rep = McReport("zone_cdf_spot", p, (lo, hi), res["ell"].size, cfg["seed"])
    return CheckResult("zone_cdf", ks <= cfg["ks_tol"] and spot_ok,
                       {"ks": ks, "spot_closed_form": p_cf, "spot_mc": p, "spot_sigma": sd}, [rep])


@experiment("zone_count", "expected building count of a zone", n_reps=100_000, beta=2.0, tan_theta=1.0)
def _exp_zone_count(cfg):
    H, res = _zone_sample(cfg)
    c = expected_building_count(_closed_lam(cfg), H, cfg["beta"], cfg["tan_theta"])
    m, lo, hi = mean_ci(res["count"])
    rep = McReport("zone_count", m, (lo, hi), res["count"].size, cfg["seed"])
    return CheckResult("zone_count", lo <= c <= hi, {"closed_form": c, "mc_mean": m, "mc_ci": (lo, hi)}, [rep])


# -- 7: Palm expected length -----------------------------------------------------------------------

@experiment("palm", "mean zone length of a typical building", n_reps=100_000, beta=1.0, atom=0.2, atom_reps=20_000)
def _exp_palm(cfg):
    H = _model(cfg)
    lam_c = _closed_lam(cfg)
    cf = expected_zone_length_palm(lam_c, H, cfg["beta"])
    res = mc_palm_zone(cfg["lam"], H, cfg["n_reps"], seed=cfg["seed"], beta=cfg["beta"], workers=cfg["workers"])
    m, lo, hi = mean_ci(res["ell"])
    sd = (hi - lo) / (2 * 1.959963984540054)
    ok_main = abs(m - cf) <= 3 * sd
    A = hmod.AtomMixture(hmod.Uniform(1.0), 1.0, cfg["atom"])
    inf_ok = math.isinf(expected_zone_length_palm(lam_c, A, 1.0, Scheme.NEXT_MAX))
    cf1 = expected_zone_length_palm(lam_c, A, 1.0, Scheme.SELF_ABSORBING)
    exact = 1.0 / (lam_c * cfg["atom"])
    r1 = mc_palm_zone(cfg["lam"], A, cfg["atom_reps"], seed=cfg["seed"] + 1, beta=1.0, scheme=Scheme.SELF_ABSORBING,
                      workers=cfg["workers"])
    m1, lo1, hi1 = mean_ci(r1["ell"])
    ok1 = cf1 == exact and lo1 <= exact <= hi1
    reps = [McReport("palm_length", m, (lo, hi), res["ell"].size, cfg["seed"]),
            McReport("palm_length_self_absorbing", m1, (lo1, hi1), r1["ell"].size, cfg["seed"] + 1)]
    return CheckResult("palm", ok_main and inf_ok and ok1,
                       {"closed_form": cf, "mc_mean": m, "mc_sigma": sd, "next_max_at_sup": "inf" if inf_ok else "finite",
                        "self_absorbing_exact": exact, "self_absorbing_mc": (m1, lo1, hi1)}, reps)


# -- 8: tree classes -----------------------------------------------------------------------------------

@experiment("eft", "unimodular classes of the relay tree", n_windows=100, width=60.0, atom=0.2)
def _exp_eft(cfg):
    lam = cfg["lam"]
    c_plain = classify_eft(hmod.Exponential(1.0), Scheme.INFINITE).label
    A = hmod.AtomMixture(hmod.Uniform(1.0), 1.0, cfg["atom"])
    c1 = classify_eft(A, Scheme.SELF_ABSORBING).label
    c2 = classify_eft(A, Scheme.NEXT_MAX).label
    absorbed, loops, spine = [], [], []
    for w in range(cfg["n_windows"]):
        land = generate_window(lam, A, (0.0, cfg["width"]), block_rng(cfg["seed"], w))
        d1 = classify_eft(A, Scheme.SELF_ABSORBING, land.copy()).diagnostics
        absorbed.append(d1.get("absorbed_fraction", 1.0))
        loops.append(d1["cycles_only_self_loops"])
        d2 = classify_eft(A, Scheme.NEXT_MAX, land.copy()).diagnostics
        spine.append(d2.get("spine_ok", d2["n_top"] == 0))
    ok = (c_plain == "I/I" and c1 == "F/F" and c2 == "I/F" and min(absorbed) == 1.0 and all(loops) and all(spine))
    return CheckResult("eft", ok, {"atomless": c_plain, "atom_self_absorbing": c1, "atom_next_max": c2,
                                   "min_absorbed_fraction": float(min(absorbed)), "self_loops_only": bool(all(loops)),
                                   "spine_windows_ok": int(sum(spine)), "n_windows": int(cfg["n_windows"])})


# -- 9: mass transport -----------------------------------------------------------------------------------

@experiment("mass_transport", "descendants and ancestors of a typical building", n_reps=10_000, k_max=3,
            scheme="infinite")
def _exp_mass(cfg):
    H = _model(cfg)
    out = mass_transport_check(cfg["lam"], H, cfg["scheme"], cfg["n_reps"], seed=cfg["seed"], k_max=cfg["k_max"],
                               workers=cfg["workers"])
    ok = all(lv["overlap"] for lv in out["levels"])
    return CheckResult("mass_transport", ok, out, censored_fraction=out["censored_fraction"])


# -- 10: horizontal finite range ---------------------------------------------------------------------------

@experiment("finite_first_hop", "first in-range hop, cemetery mass and the long-range limit", n_reps=1_000_000,
            R=2.0, bins=40, hmax=6.0, R_limit=1000.0, n_paths=20, rel_tol=1e-3)
def _exp_finite_first(cfg):
    H = _model(cfg)
    R = cfg["R"]
    lam_c = _closed_lam(cfg)
    res = fr.sample_first_hop_hr(cfg["lam"], H, R, cfg["n_reps"], seed=cfg["seed"], workers=cfg["workers"])
    x, h = res["x"], res["h"]
    alive = np.isfinite(x)
    start = fr.FiniteState.start(0.0)
    dens = lambda xx, hh: fr.hop_density(lam_c, H, R, start, xx, hh) * np.asarray(H.pdf(hh))
    edges = [np.linspace(0.0, R, cfg["bins"] + 1), np.linspace(0.0, cfg["hmax"], cfg["bins"] + 1)]
    rep = histogram_density_distance(np.column_stack([x[alive], h[alive]]), dens, edges, n_total=x.size, order=8, sub=2)
    ok_hist, m = _hist_metrics(rep)
    n_dead = int(np.sum(~alive))
    p_dead = fr.cemetery_mass(lam_c, H, R, start)
    sd = math.sqrt(p_dead * (1 - p_dead) / x.size)
    ok_dead = abs(n_dead / x.size - p_dead) <= 3 * sd
    # long-range limit on random admissible infinite-range paths
    rng = block_rng(cfg["seed"], 1 << 31)
    worst = 0.0
    for _ in range(cfg["n_paths"]):
        n = int(rng.integers(1, 4))
        hs = np.concatenate([[0.0], np.cumsum(rng.exponential(1.0, n))])
        ts = np.sort(rng.uniform(0.2, 3.0, n))[::-1]
        xs = np.concatenate([[0.0], np.cumsum(np.diff(hs) / ts)])
        path = np.column_stack([xs, hs])
        a = fr.density_gNR(lam_c, H, cfg["R_limit"] / cfg["lam"], path)
        b = density_gN(lam_c, H, path)
        worst = max(worst, abs(a - b) / b)
    m.update({"cemetery_mc": n_dead / x.size, "cemetery_exact": p_dead, "cemetery_sigma": sd,
              "limit_max_rel_diff": worst})
    p, lo, hi = wilson_ci(n_dead, x.size)
    return CheckResult("finite_first_hop", ok_hist and ok_dead and worst < cfg["rel_tol"], m,
                       [McReport("cemetery_first_hop", p, (lo, hi), x.size, cfg["seed"])])


# -- 11: finite-range mass transport --------------------------------------------------------------------------

@experiment("finite_zone", "hitting time identity for the zone length in horizontal range", n_reps=10_000, R=2.0)
def _exp_finite_zone(cfg):
    H = _model(cfg)
    lam = cfg["lam"]
    lam_c = _closed_lam(cfg)
    T = fr.sample_hitting_times(lam, H, cfg["R"], cfg["n_reps"], seed=cfg["seed"], workers=cfg["workers"])
    m, lo, hi = mean_ci(T / lam_c)
    a = McReport("zone_length_hitting", m, (lo, hi), T.size, cfg["seed"])
    b = fr.direct_zone_length_hr(lam, H, cfg["R"], cfg["n_reps"], seed=cfg["seed"] + 1, workers=cfg["workers"])
    ok = a.ci95[0] <= b.ci95[1] and b.ci95[0] <= a.ci95[1]
    return CheckResult("finite_zone", ok, {"hitting": (a.estimate, *a.ci95), "direct": (b.estimate, *b.ci95)}, [a, b])


# -- 12: stoppage law --------------------------------------------------------------------------------------------

@experiment("stoppage", "stoppage point under a disc range", n_reps=100_000, range="disc:1", ks_tol=0.02,
            norm_tol=1e-8)
def _exp_stoppage(cfg):
    from scipy import integrate

    H = _model(cfg)
    rs = fr.RangeSpec.parse(cfg["range"])
    lam_c = _closed_lam(cfg)
    law = fr.stoppage_law(lam_c, H, (0.0, 0.0), rs, 0.0)
    dens = integrate.quad(lambda u: fr.stoppage_law(lam_c, H, (0.0, 0.0), rs, u).density, 0.0, law.cap,
                          epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    norm_err = abs(law.atom + dens - 1.0)
    xs = fr.sample_stoppage(cfg["lam"], H, rs, cfg["n_reps"], seed=cfg["seed"], workers=cfg["workers"])
    F = lambda t: fr.stoppage_cdf(lam_c, H, (0.0, 0.0), rs, t)
    FL = lambda t: fr.stoppage_cdf(lam_c, H, (0.0, 0.0), rs, t, left_limit=True)
    ks = ks_distance(xs, F, FL)
    return CheckResult("stoppage", norm_err <= cfg["norm_tol"] and ks <= cfg["ks_tol"],
                       {"normalization_error": norm_err, "atom": law.atom, "atom_mc": float(np.mean(xs >= law.cap)),
                        "ks": ks})


# -- 13: general-range density --------------------------------------------------------------------------------------

@experiment("general_density", "first blocking building under a disc range", n_reps=1_000_000, range="disc:2",
            xbins=40, vbins=20, norm_tol=1e-4)
def _exp_general(cfg):
    H = _model(cfg)
    rs = fr.RangeSpec.parse(cfg["range"])
    lam_c = _closed_lam(cfg)
    res = fr.sample_first_blocker_gr(cfg["lam"], H, rs, cfg["n_reps"], seed=cfg["seed"], workers=cfg["workers"])
    x, h = res["x"], res["h"]
    found = np.isfinite(x)
    A = rs.max_abscissa
    lo = lambda xx: np.maximum(np.asarray(rs.lower(xx)), 0.0)
    span = lambda xx: np.maximum(np.asarray(rs.upper(xx)) - lo(xx), 0.0)
    xf, hf = x[found], h[found]
    v = (hf - lo(xf)) / np.where(span(xf) > 0, span(xf), 1.0)

    def dens(xx, vv):
        hh = lo(xx) + vv * span(xx)
        return fr.density_gR_grid(lam_c, H, rs, (0.0, 0.0), xx, hh, panels=8) * np.asarray(H.pdf(hh)) * span(xx)

    edges = [np.linspace(0.0, A, cfg["xbins"] + 1), np.linspace(0.0, 1.0, cfg["vbins"] + 1)]
    rep = histogram_density_distance(np.column_stack([xf, v]), dens, edges, n_total=x.size, order=6)
    ok_hist, m = _hist_metrics(rep)
    mass = fr.blocker_mass_gR(lam_c, H, rs, (0.0, 0.0), nx=12, nh=12)
    p_none = fr.prob_no_blocker(lam_c, H, rs, (0.0, 0.0))
    norm_err = abs(mass + p_none - 1.0)
    k = int(np.sum(~found))
    p, plo, phi = wilson_ci(k, x.size)
    sd = math.sqrt(p_none * (1 - p_none) / x.size)
    ok_none = abs(p - p_none) <= 3 * sd
    m.update({"density_mass": mass, "p_none_quadrature": p_none, "normalization_error": norm_err,
              "p_none_mc": p, "p_none_sigma": sd})
    return CheckResult("general_density", ok_hist and norm_err <= cfg["norm_tol"] and ok_none, m,
                       [McReport("p_none", p, (plo, phi), x.size, cfg["seed"])])


# -- 14: reproducibility ----------------------------------------------------------------------------------------------

@experiment("reproducibility", "same seed, different worker counts, identical reports", target="zone_cdf",
            n_reps_target=20_000, worker_counts=(1, 2))
def _exp_repro(cfg):
    outs = []
    for w in cfg["worker_counts"]:
        sub = {"experiment": cfg["target"], "seed": cfg["seed"], "n_reps": cfg["n_reps_target"], "workers": int(w),
               "lam": cfg["lam"], "heights": cfg["heights"]}
        outs.append(run_experiment(sub).to_json())
    same = all(o == outs[0] for o in outs)
    return CheckResult("reproducibility", same, {"target": cfg["target"], "worker_counts": list(cfg["worker_counts"]),
                                                 "digest": hashlib.sha256(outs[0].encode()).hexdigest()[:16]})


ACCEPTANCE = [
    (1, "g1"),
    (2, "markov"),
    (3, "monotone"),
    (4, "limits"),
    (5, "zone_cdf"),
    (6, "zone_count"),
    (7, "palm"),
    (8, "eft"),
    (9, "mass_transport"),
    (10, "finite_first_hop"),
    (11, "finite_zone"),
    (12, "stoppage"),
    (13, "general_density"),
    (14, "reproducibility"),
]


def describe() -> dict:
    return {k: {"summary": v.summary, "defaults": v.defaults} for k, v in sorted(REGISTRY.items())}


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)
