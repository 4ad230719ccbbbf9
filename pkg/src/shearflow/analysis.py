"""Post-processing of solver output against the small-shear predictions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import erf

from .diagnostics import Histogram2D, speed_moment_columns, velocity_weight
from .errors import AnalysisError
from .moments import growth_rate_exact


def batch_means(x, n_batches: int = 20) -> tuple[float, float]:
    """Mean and its standard error from non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    if x.size < 2 * n_batches:
        n_batches = max(2, x.size // 2)
    if x.size < 4:
        raise AnalysisError("too few samples for a batch-means error", samples=int(x.size))
    usable = x.size - x.size % n_batches
    means = x[x.size - usable:].reshape(n_batches, -1).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))


def steady_window(series, transient: float, min_samples: int = 10) -> pd.DataFrame:
    window = series[series["t"] >= transient]
    if len(window) < min_samples:
        raise AnalysisError("no steady window after the transient",
                            transient=transient, samples=len(window))
    return window


def first_order_flux_check(series, alpha: float, b0: float, transient: float,
                           n_batches: int = 20) -> dict:
    """Compare the steady, energy-normalised heat flux ``3 <xi1 xi2> / <|xi|^2>``
    with ``-alpha/(2 b0)`` (first order) and ``-3 beta/alpha`` (exact closure)."""
    window = steady_window(series, transient)
    flux = 3.0 * window["M12"].to_numpy() / window["trace"].to_numpy()
    mean, sigma = batch_means(flux, n_batches)
    first = -alpha / (2.0 * b0)
    beta = growth_rate_exact(alpha, b0).beta if alpha > 0 else 0.0
    exact = -3.0 * beta / alpha if alpha > 0 else 0.0
    report = {
        "alpha": alpha, "b0": b0, "transient": transient,
        "measured": mean, "sigma": sigma,
        "first_order": first, "exact": exact,
        "gap_first_order": mean - first, "gap_exact": mean - exact,
        "prediction_gap": abs(first - exact),
        "z_first_order": (mean - first) / sigma if sigma > 0 else float("inf"),
        "z_exact": (mean - exact) / sigma if sigma > 0 else float("inf"),
    }
    report["within_3sigma_exact"] = abs(report["gap_exact"]) <= 3.0 * sigma
    report["strictly_negative"] = mean + 3.0 * sigma < 0 if alpha > 0 else None
    return report


def flux_prediction_gap(alpha: float, b0: float) -> float:
    """``|(-alpha/2b0) - (-3 beta/alpha)|``."""
    beta = growth_rate_exact(alpha, b0).beta
    return abs(alpha / (2.0 * b0) - 3.0 * beta / alpha)


def loglog_slope(x, y) -> float:
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def _phi_cdf(x):
    return 0.5 * (1.0 + erf(np.asarray(x) / np.sqrt(2.0)))


def _phi(x):
    return np.exp(-0.5 * np.asarray(x) ** 2) / np.sqrt(2.0 * np.pi)


def first_order_bin_mass(edges_x, edges_y, alpha, b0) -> np.ndarray:
    """Exact bin integrals of ``(1 - alpha/(2 b0) x y) mu2(x, y)``, the
    ``(xi1, xi2)`` marginal of the first-order profile.

    Uses ``int phi = Phi`` and ``int x phi = -phi`` on each bin edge.
    """
    ex, ey = np.asarray(edges_x), np.asarray(edges_y)
    mass_x = np.diff(_phi_cdf(ex))
    mass_y = np.diff(_phi_cdf(ey))
    mom_x = -np.diff(_phi(ex))
    mom_y = -np.diff(_phi(ey))
    k = alpha / (2.0 * b0)
    return np.outer(mass_x, mass_y) - k * np.outer(mom_x, mom_y)


@dataclass
class ProfileDistance:
    distance: float
    alpha_sq_scale: float
    bins_used: int
    bins_total: int
    max_rel_error: float
    argmax_center: tuple
    noise_at_argmax: float

    def to_dict(self):
        return dict(self.__dict__)


def weighted_profile_distance(hist: Histogram2D, alpha: float, b0: float, l: float = 1.0,
                              max_rel_error: float = 0.25,
                              core_radius: float = 1.5) -> ProfileDistance:
    """``max w_l(center) |h_bin - p_bin| / area`` over noise-vetted bins.

    Bins whose relative Monte Carlo error ``1/sqrt(count)`` exceeds
    ``max_rel_error`` are skipped; if any such bin lies within
    ``core_radius`` of the origin the histogram is under-resolved.
    """
    if hist.n_samples == 0:
        raise AnalysisError("empty histogram")
    ex, ey = hist.edges_x, hist.edges_y
    area = np.outer(np.diff(ex), np.diff(ey))
    cx, cy = np.meshgrid(0.5 * (ex[:-1] + ex[1:]), 0.5 * (ey[:-1] + ey[1:]), indexing="ij")
    centers = np.stack([cx, cy], axis=-1)
    pred = first_order_bin_mass(ex, ey, alpha, b0)
    counts = hist.counts
    with np.errstate(divide="ignore"):
        rel_err = np.where(counts > 0, 1.0 / np.sqrt(np.maximum(counts, 1e-300)), np.inf)
    ok = rel_err < max_rel_error
    radius = np.hypot(cx, cy)
    bad_core = (~ok) & (radius <= core_radius)
    if bad_core.any():
        offending = [tuple(np.round(c, 6).tolist()) for c in centers[bad_core][:20]]
        raise AnalysisError("histogram under-resolved in the core", offending_bins=offending)
    w = velocity_weight(centers, l)
    dev = w * np.abs(hist.mass - pred) / area
    dev = np.where(ok, dev, -np.inf)
    flat = int(np.argmax(dev))
    noise = w.ravel()[flat] * np.sqrt(max(counts.ravel()[flat], 1.0)) / hist.n_samples / area.ravel()[flat]
    return ProfileDistance(float(dev.ravel()[flat]), alpha * alpha, int(ok.sum()), int(ok.size),
                           max_rel_error, tuple(centers.reshape(-1, 2)[flat].tolist()),
                           float(noise))


@dataclass
class TailEstimate:
    index: float
    ci_low: float
    ci_high: float
    k: int

    def to_dict(self):
        return dict(self.__dict__)


def hill_index(samples, k: int) -> float:
    """Hill estimate of the power-law index from the ``k`` largest samples."""
    x = np.asarray(samples, dtype=float)
    top = np.partition(x, x.size - k - 1)[x.size - k - 1:]
    gamma = np.mean(np.log(top[1:])) - np.log(top[0])
    return float(1.0 / gamma) if gamma > 0 else float("inf")


def tail_index(samples, k_fraction: float = 0.01, n_boot: int = 200, seed: int = 0,
               level: float = 0.95) -> TailEstimate:
    """Hill tail index of ``samples`` (e.g. speeds) with a bootstrap interval."""
    x = np.abs(np.asarray(samples, dtype=float))
    if x.size < 10_000:
        raise AnalysisError("tail index needs at least 1e4 samples", samples=int(x.size))
    if not 0 < k_fraction <= 0.1:
        raise AnalysisError("k_fraction must lie in (0, 0.1]", k_fraction=k_fraction)
    k = max(2, int(k_fraction * x.size))
    est = hill_index(x, k)
    rng = np.random.default_rng(seed)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        boot[b] = hill_index(x[rng.integers(0, x.size, x.size)], k)
    tail = 0.5 * (1 - level)
    lo, hi = np.quantile(boot, [tail, 1 - tail])
    return TailEstimate(est, float(lo), float(hi), k)


def moment_boundedness_scan(series, p_list=None, sig: float = 3.0,
                            n_blocks: int | None = 10) -> pd.DataFrame:
    """Flag ``<|xi|^p>`` as unbounded when its log has a positive fitted
    slope exceeding ``sig`` standard errors over the second half of the run.

    High moments of a particle ensemble are strongly autocorrelated and
    bursty, so by default the fit uses ``n_blocks`` block means, which keeps
    the slope error honest; ``n_blocks=None`` fits the raw samples.
    """
    cols = speed_moment_columns(series)
    if p_list is None:
        p_list = sorted(cols)
    rows = []
    t_all = series["t"].to_numpy()
    half = t_all >= 0.5 * (t_all[0] + t_all[-1])
    t = t_all[half]
    blocks = n_blocks if n_blocks and t.size >= 2 * n_blocks else None
    if blocks is not None:
        usable = t.size - t.size % blocks
        t = t[t.size - usable:].reshape(blocks, -1).mean(axis=1)
    for p in p_list:
        if float(p) not in cols:
            raise AnalysisError("series has no column for moment order", p=p)
        y = np.log(series[cols[float(p)]].to_numpy()[half])
        if blocks is not None:
            y = y[y.size - usable:].reshape(blocks, -1).mean(axis=1)
        coef, cov = np.polyfit(t, y, 1, cov=True)
        slope, se = float(coef[0]), float(np.sqrt(cov[0, 0]))
        rows.append({"p": float(p), "slope": slope, "stderr": se,
                     "bounded": not (slope > 0 and slope > sig * se)})
    return pd.DataFrame(rows)


def moment_threshold(scan: pd.DataFrame) -> float:
    """Smallest order flagged unbounded (``inf`` when all are bounded)."""
    bad = scan.loc[~scan.bounded, "p"]
    return float(bad.min()) if len(bad) else float("inf")
