"""Held-out calibration regression, predictive R2, RMSE and semivariograms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InputError
from .fit.linear import ols


@dataclass(frozen=True)
class ValidationReport:
    alpha0: float
    alpha1: float
    se: tuple[float, float]
    tvalues: tuple[float, float]
    pvalues: tuple[float, float]
    predictive_r2: float
    rmse: float
    n_sites: int
    n_obs: int

    def to_dict(self) -> dict:
        return {
            "calibration": {
                name: {"estimate": est, "se": se, "t": t, "p": p}
                for name, est, se, t, p in zip(("alpha0", "alpha1"), (self.alpha0, self.alpha1), self.se, self.tvalues, self.pvalues)
            },
            "predictive_r2": self.predictive_r2,
            "rmse": self.rmse,
            "n_sites": self.n_sites,
            "n_obs": self.n_obs,
        }


def calibration(observed: Mapping, predicted: Mapping) -> ValidationReport:
    """Regress observed on predicted period values (natural scale).

    Keys are ``(site_id, period_start, period_end)`` tuples (any hashable
    whose first element is the site id works).  RMSE divides by the number of
    matched observations, i.e. ``4n`` when every site has four periods.
    """
    obs_keys, pred_keys = set(observed), set(predicted)
    if obs_keys != pred_keys:
        unmatched = sorted(map(str, obs_keys ^ pred_keys))
        raise InputError(f"{len(unmatched)} unmatched key(s): {', '.join(unmatched[:10])}")
    keys = sorted(observed, key=str)
    z = np.array([observed[k] for k in keys], dtype=float)
    p = np.array([predicted[k] for k in keys], dtype=float)
    res = ols(np.column_stack([np.ones_like(p), p]), z, ["alpha0", "alpha1"])
    r = np.corrcoef(z, p)[0, 1] if z.std() > 0 and p.std() > 0 else float("nan")
    rmse = math.sqrt(float(np.mean((z - p) ** 2)))
    sites = {k[0] if isinstance(k, tuple) else k for k in keys}
    return ValidationReport(
        float(res.coef[0]), float(res.coef[1]),
        tuple(map(float, res.se)), tuple(map(float, res.tvalues)), tuple(map(float, res.pvalues)),
        float(r * r), rmse, len(sites), len(keys),
    )


@dataclass(frozen=True)
class Semivariogram:
    centers: np.ndarray  # km
    semivariance: np.ndarray
    counts: np.ndarray
    bin_width: float
    max_lag: float

    def sill(self) -> float:
        """Pair-weighted mean semivariance over the outer half of the lag range."""
        sel = (self.centers >= self.max_lag / 2.0) & (self.counts > 0)
        if not sel.any():
            sel = self.counts > 0
        return float(np.sum(self.semivariance[sel] * self.counts[sel]) / np.sum(self.counts[sel]))

    def rows(self) -> list[tuple[float, float, int]]:
        return [(float(c), float(g), int(n)) for c, g, n in zip(self.centers, self.semivariance, self.counts)]


def semivariogram(
    values: Mapping[str, float],
    locations: Mapping[str, tuple[float, float]],
    bin_width: float = 2.0,
    max_lag: float | None = None,
    unit_m: float = 1000.0,
) -> Semivariogram:
    """Classical (Matheron) estimator ``sum (v_a - v_b)^2 / (2 N_h)`` per lag bin.

    ``locations`` are in meters; ``bin_width`` and ``max_lag`` in km.  Bins are
    ``[k w, (k+1) w)``; pairs at exactly ``max_lag`` fall in the last bin.
    Empty bins report semivariance NaN with count 0.
    """
    ids = list(values)
    if len(ids) < 2:
        raise InputError("semivariogram needs at least two sites")
    if not bin_width > 0:
        raise InputError("bin_width must be positive")
    xy = np.array([locations[s] for s in ids], dtype=float) / unit_m
    v = np.array([values[s] for s in ids], dtype=float)
    d = pdist(xy)
    sq = pdist(v[:, None], "sqeuclidean")
    if max_lag is None:
        max_lag = float(d.max()) / 2.0
    if not max_lag > 0:
        raise InputError("max_lag must be positive")
    n_bins = max(1, math.ceil(max_lag / bin_width - 1e-12))
    keep = d <= max_lag
    idx = np.minimum((d[keep] / bin_width).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=sq[keep], minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(counts > 0, sums / (2.0 * counts), np.nan)
    centers = (np.arange(n_bins) + 0.5) * bin_width
    return Semivariogram(centers, gamma, counts, float(bin_width), float(max_lag))
