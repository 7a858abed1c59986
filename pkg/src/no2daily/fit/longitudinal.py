"""Random-intercept longitudinal model fitted by (restricted) maximum likelihood.

The model is ``y_ij = b0 + u_i + b1 x_ij + sum_k g_k W_ik + e_ij`` with
``u_i ~ N(0, s_b2)`` and ``e_ij ~ N(0, s_y2)``.  With ``lam = s_b2 / s_y2`` the
within-site covariance is ``s_y2 (I + lam J)``, whose inverse is
``(I - c_i J) / s_y2`` with ``c_i = lam / (1 + n_i lam)``.  Everything
reduces to per-site sums, so the likelihood profiled over ``(beta, s_y2)`` is
cheap to evaluate and is maximized over ``log lam``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy import optimize, stats

from ..errors import ConvergenceError, InputError, NumericalError
from .linear import DesignRow, coef_names, design_matrix, ols

_LOG_LAM_GRID = np.arange(-14.0, 8.01, 0.5)


class _Grouped:
    """Per-site sufficient statistics of a design."""

    def __init__(self, rows: Sequence[DesignRow]):
        X, y, _ = design_matrix(rows)
        self.X, self.y = X, y
        self.names = coef_names(X.shape[1] - 2, prefix="beta")
        order = {}
        self.group = np.array([order.setdefault(r.site_id, len(order)) for r in rows])
        self.site_ids = list(order)
        self.n_sites = len(order)
        self.counts = np.bincount(self.group, minlength=self.n_sites).astype(float)
        self.N, self.p = X.shape
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)
        self.Sx = np.zeros((self.n_sites, self.p))
        np.add.at(self.Sx, self.group, X)
        self.Sy = np.bincount(self.group, weights=y, minlength=self.n_sites)

    def within_columns(self) -> np.ndarray:
        """Columns that vary inside at least one site (intercept excluded)."""
        means = self.Sx / self.counts[:, None]
        dev = self.X - means[self.group]
        scale = np.maximum(np.abs(self.X).max(axis=0), 1.0)
        varies = np.abs(dev).max(axis=0) > 1e-10 * scale
        varies[0] = False
        return varies


@dataclass
class _Profile:
    lam: float
    beta: np.ndarray
    sigma2: float
    loglik: float
    A: np.ndarray  # X' H^-1 X


def _profile(g: _Grouped, lam: float, reml: bool) -> _Profile:
    c = lam / (1.0 + g.counts * lam)
    A = g.XtX - (g.Sx * c[:, None]).T @ g.Sx
    b = g.Xty - (g.Sx * c[:, None]).T @ g.Sy
    yHy = g.yty - float(np.sum(c * g.Sy**2))
    try:
        cf = sla.cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"GLS information matrix is singular at lambda={lam:g}") from exc
    beta = sla.cho_solve(cf, b)
    q = yHy - float(beta @ b)
    logdetH = float(np.sum(np.log1p(g.counts * lam)))
    if q <= 0:
        # exact fit; likelihood unbounded, keep a tiny positive variance
        q = 1e-300
    if reml:
        m = g.N - g.p
        sigma2 = q / m
        logdetA = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
        ll = -0.5 * (m * (math.log(2 * math.pi * sigma2) + 1.0) + logdetH + logdetA)
    else:
        sigma2 = q / g.N
        ll = -0.5 * (g.N * (math.log(2 * math.pi * sigma2) + 1.0) + logdetH)
    return _Profile(lam, beta, sigma2, ll, A)


@dataclass(frozen=True)
class MixedFit:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    df: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    sigma_b2: float
    sigma_y2: float
    loglik: float
    blups: dict[str, float]
    n_obs: int
    method: str = "ML"
    rings: tuple[float, ...] | None = None
    exposure_scale: float | None = None
    trace: list[tuple[float, float]] = field(default_factory=list, repr=False)

    kind = "longitudinal"

    @property
    def beta0(self) -> float:
        return float(self.coef[0])

    @property
    def beta1(self) -> float:
        return float(self.coef[1])

    @property
    def gamma(self) -> np.ndarray:
        return self.coef[2:]

    @property
    def n_traffic(self) -> int:
        return len(self.coef) - 2

    def to_dict(self) -> dict:
        return {
            "model": self.kind,
            "method": self.method,
            "coefficients": {
                name: {"estimate": float(c), "se": float(s), "df": int(d), "t": float(t), "p": float(p)}
                for name, c, s, d, t, p in zip(self.names, self.coef, self.se, self.df, self.tvalues, self.pvalues)
            },
            "sigma_b2": self.sigma_b2,
            "sigma_y2": self.sigma_y2,
            "loglik": self.loglik,
            "n_obs": self.n_obs,
            "df_convention": "between/within: site-level covariates use n_sites - 1 - n_site_level; "
            "the rest use n_obs - n_sites - n_within",
            "blups": dict(self.blups),
            "rings": list(self.rings) if self.rings is not None else None,
            "exposure_scale": self.exposure_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixedFit":
        names = list(d["coefficients"])
        col = lambda key: np.array([d["coefficients"][n][key] for n in names], dtype=float)  # noqa: E731
        return cls(
            names, col("estimate"), col("se"), col("df"), col("t"), col("p"),
            d["sigma_b2"], d["sigma_y2"], d["loglik"], dict(d["blups"]), d["n_obs"],
            d.get("method", "ML"),
            tuple(d["rings"]) if d.get("rings") is not None else None,
            d.get("exposure_scale"),
        )


def profile_loglik(rows: Sequence[DesignRow], sigma_b2: float, sigma_y2: float) -> float:
    """Full (ML) log-likelihood with ``beta`` at its GLS value for the given variances."""
    g = _Grouped(rows)
    lam = sigma_b2 / sigma_y2
    prof = _profile(g, lam, reml=False)
    q = prof.sigma2 * g.N
    logdetH = float(np.sum(np.log1p(g.counts * lam)))
    return -0.5 * (g.N * math.log(2 * math.pi * sigma_y2) + logdetH + q / sigma_y2)


def fit_longitudinal(
    rows: Sequence[DesignRow],
    reml: bool = False,
    max_iter: int = 500,
    xtol: float = 1e-10,
    rings=None,
    exposure_scale=None,
) -> MixedFit:
    """Fit the random-intercept model by ML (default) or REML.

    Parameters
    ----------
    rows : sequence of DesignRow
        Observations; rows sharing ``site_id`` share a random intercept.
    reml : bool
        Maximize the restricted likelihood instead of the full likelihood.
    max_iter, xtol : int, float
        Passed to the bounded Brent search over ``log(s_b2 / s_y2)``.

    Returns
    -------
    MixedFit
        Estimates, GLS standard errors with between/within degrees of freedom,
        variance components and one BLUP per site.
    """
    g = _Grouped(rows)
    if g.n_sites < 2:
        raise InputError("longitudinal model needs at least two sites")
    if g.N <= g.p:
        raise InputError(f"need more observations than coefficients (n={g.N}, p={g.p})")
    ols(g.X, g.y, g.names)  # raises RankDeficiencyError naming dependent columns

    trace = []

    def negll(t):
        prof = _profile(g, math.exp(t), reml)
        trace.append((math.exp(t), prof.loglik))
        return -prof.loglik

    values = np.array([negll(t) for t in _LOG_LAM_GRID])
    if not np.isfinite(values).all():
        raise ConvergenceError("non-finite profile likelihood on the search grid", trace)
    i = int(np.argmin(values))
    lo = _LOG_LAM_GRID[max(i - 1, 0)]
    hi = _LOG_LAM_GRID[min(i + 1, len(_LOG_LAM_GRID) - 1)]
    res = optimize.minimize_scalar(negll, bounds=(lo, hi), method="bounded", options={"xatol": xtol, "maxiter": max_iter})
    if not res.success or not np.isfinite(res.fun):
        raise ConvergenceError(f"profile likelihood search did not converge: {res.message}", trace)
    best = _profile(g, math.exp(res.x), reml)
    boundary = _profile(g, 0.0, reml)
    if boundary.loglik >= best.loglik:
        best = boundary
    trace.append((best.lam, best.loglik))

    sigma_y2 = best.sigma2
    sigma_b2 = best.lam * sigma_y2
    cov = sigma_y2 * sla.inv(best.A)
    se = np.sqrt(np.diag(cov))

    within = g.within_columns()
    n_within = int(within.sum())
    n_between = g.p - 1 - n_within
    df = np.where(within | (np.arange(g.p) == 0), g.N - g.n_sites - n_within, g.n_sites - 1 - n_between)
    df = np.maximum(df, 1)
    t = best.beta / se
    pv = 2.0 * stats.t.sf(np.abs(t), df)

    resid = g.y - g.X @ best.beta
    rsum = np.bincount(g.group, weights=resid, minlength=g.n_sites)
    shrink = best.lam / (1.0 + g.counts * best.lam)
    blups = dict(zip(g.site_ids, (shrink * rsum).tolist()))

    return MixedFit(
        g.names, best.beta, se, df, t, pv, float(sigma_b2), float(sigma_y2), float(best.loglik), blups, g.N,
        "REML" if reml else "ML", rings, exposure_scale, trace,
    )
