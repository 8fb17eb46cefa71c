"""Statistical comparison tools: ECDFs, KS distances, binned z-scores and CIs."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import special


class EmptySample(ValueError):
    """A statistic was requested on an empty sample."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class McReport:
    name: str
    estimate: float
    ci95: tuple
    n_reps: int
    seed: int
    censored_fraction: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.ci95
        if not (lo <= self.estimate <= hi) and all(map(math.isfinite, (lo, hi, self.estimate))):
            raise ValueError("confidence interval must contain the estimate")
        if self.n_reps < 1:
            raise ValueError("n_reps must be positive")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def to_json(obj, **kw) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, **kw)


# -- confidence intervals -------------------------------------------------------------

Z95 = 1.959963984540054


def mean_ci(samples) -> tuple[float, float, float]:
    """Sample mean with a normal-approximation 95% interval ``(mean, lo, hi)``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("no samples")
    m = float(np.mean(x))
    if x.size < 2:
        return (m, m, m)
    se = float(np.std(x, ddof=1)) / math.sqrt(x.size)
    return (m, m - Z95 * se, m + Z95 * se)


def wilson_ci(k: int, n: int, z: float = Z95) -> tuple[float, float, float]:
    """Proportion ``k/n`` with its Wilson score interval."""
    if n <= 0:
        raise EmptySample("no trials")
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (p, max(0.0, c - half), min(1.0, c + half))


def report_mean(name, samples, seed, censored_fraction=0.0, **extra) -> McReport:
    m, lo, hi = mean_ci(samples)
    return McReport(name, m, (lo, hi), int(np.size(samples)), int(seed), censored_fraction, extra)


# -- distribution distances -------------------------------------------------------------

class ECDF:
    """Right-continuous empirical CDF."""

    def __init__(self, samples):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size == 0:
            raise EmptySample("ECDF of an empty sample")
        self.x = x
        self.n = x.size

    def __call__(self, t):
        return np.searchsorted(self.x, np.asarray(t, dtype=float), side="right") / self.n

    def left(self, t):
        return np.searchsorted(self.x, np.asarray(t, dtype=float), side="left") / self.n


def ecdf(samples) -> ECDF:
    return ECDF(samples)


def ks_distance(sample_or_ecdf, cdf: Callable, cdf_left: Callable | None = None) -> float:
    """Sup distance between an ECDF and a CDF.

    ``cdf_left`` (the left limit) is needed when the target has atoms; it
    defaults to ``cdf``.  Non-finite samples are treated as values above
    every finite point, so ``cdf`` must leave room for them.
    """
    e = sample_or_ecdf if isinstance(sample_or_ecdf, ECDF) else ECDF(sample_or_ecdf)
    fin = e.x[np.isfinite(e.x)]
    n = e.n
    if fin.size == 0:
        return float(np.max(np.abs(np.asarray(cdf(np.array([np.finfo(float).max])))))) if n else 0.0
    u, counts = np.unique(fin, return_counts=True)
    below = np.count_nonzero(e.x == -np.inf)
    right = (below + np.cumsum(counts)) / n
    left = right - counts / n
    F = np.asarray(cdf(u), dtype=float)
    FL = np.asarray((cdf_left or cdf)(u), dtype=float)
    return float(max(np.max(np.abs(F - right)), np.max(np.abs(FL - left))))


def ks_critical(n: int, alpha: float = 0.05) -> float:
    """Asymptotic one-sample KS critical value."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n)


# -- binned density checks ------------------------------------------------------------------

@dataclass
class HistReport:
    observed: np.ndarray
    expected: np.ndarray
    z: np.ndarray
    flagged: np.ndarray
    used: np.ndarray

    @property
    def n_used(self) -> int:
        return int(self.used.sum())

    @property
    def fraction_flagged(self) -> float:
        return float(self.flagged.sum() / max(1, self.n_used))

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z[self.used]))) if self.n_used else 0.0

    def summary(self) -> dict:
        return {"bins_used": self.n_used, "bins_flagged": int(self.flagged.sum()),
                "fraction_flagged": self.fraction_flagged, "max_abs_z": self.max_abs_z,
                "observed_total": int(self.observed.sum()), "expected_total": float(self.expected.sum())}


def bin_integrals(density: Callable, edges, order: int = 8, sub: int = 1) -> np.ndarray:
    """Integral of a vectorized ``density(*coords)`` over every cell of a tensor grid.

    Tensor Gauss-Legendre rule of the given order per dimension, applied on
    ``sub`` equal pieces of each cell side.
    """
    edges = [np.asarray(e, dtype=float) for e in edges]
    if sub > 1:
        fine = [np.concatenate([np.linspace(a, b, sub + 1)[:-1] for a, b in zip(e[:-1], e[1:])] + [e[-1:]]) for e in edges]
        val = bin_integrals(density, fine, order, 1)
        for axis in range(val.ndim):
            shp = list(val.shape)
            shp[axis: axis + 1] = [shp[axis] // sub, sub]
            val = val.reshape(shp).sum(axis=axis + 1)
        return val
    nodes, weights = np.polynomial.legendre.leggauss(order)
    pts, wts = [], []
    for e in edges:
        a, b = e[:-1, None], e[1:, None]
        pts.append(0.5 * (a + b) + 0.5 * (b - a) * nodes[None, :])
        wts.append(0.5 * (b - a) * weights[None, :])
    d = len(edges)
    if d == 1:
        return np.sum(wts[0] * density(pts[0]), axis=1)
    if d != 2:
        raise ValueError("only 1-d and 2-d grids are supported")
    X = pts[0][:, None, :, None]
    Y = pts[1][None, :, None, :]
    W = wts[0][:, None, :, None] * wts[1][None, :, None, :]
    X, Y = np.broadcast_arrays(X, Y)
    vals = np.asarray(density(X, Y), dtype=float)
    return np.sum(W * vals, axis=(2, 3))


def histogram_density_distance(samples, density: Callable | None, bins, n_total: int | None = None,
                               expected: np.ndarray | None = None, threshold: float = 4.0,
                               min_expected: float = 1.0, order: int = 8, sub: int = 1) -> HistReport:
    """Per-bin ``(observed - expected) / sqrt(expected)``.

    ``samples`` has shape ``(n, d)`` (or ``(n,)``); ``bins`` lists the edges
    per dimension.  Expected counts are ``n_total`` times the density integral
    over each bin, where ``n_total`` defaults to the number of samples.  Bins
    expecting fewer than ``min_expected`` counts are excluded.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    edges = [np.asarray(e, dtype=float) for e in (bins if isinstance(bins[0], (list, tuple, np.ndarray)) else [bins])]
    n_total = x.shape[0] if n_total is None else n_total
    obs, _ = np.histogramdd(x, bins=edges)
    if expected is None:
        expected = n_total * bin_integrals(density, edges, order, sub)
    expected = np.asarray(expected, dtype=float).reshape(obs.shape)
    used = expected >= min_expected
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(used, (obs - expected) / np.sqrt(np.where(used, expected, 1.0)), 0.0)
    flagged = used & (np.abs(z) > threshold)
    return HistReport(obs, expected, z, flagged, used)


def normal_sf(z: float) -> float:
    return 0.5 * special.erfc(z / math.sqrt(2.0))
