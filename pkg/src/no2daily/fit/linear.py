"""Ordinary least squares for the pooled log-linear model and VIF diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy import stats

from ..errors import InputError, RankDeficiencyError


@dataclass(frozen=True)
class DesignRow:
    """One observation: ``y = ln Z``, ``x = ln U`` and site traffic covariates."""

    site_id: str
    y: float
    x: float
    w: tuple[float, ...] = ()


def design_matrix(rows: Sequence[DesignRow]) -> tuple[np.ndarray, np.ndarray, list[str]]:
    if not rows:
        raise InputError("no design rows")
    k = len(rows[0].w)
    if any(len(r.w) != k for r in rows):
        raise InputError("traffic covariate length differs between rows")
    X = np.empty((len(rows), 2 + k))
    X[:, 0] = 1.0
    X[:, 1] = [r.x for r in rows]
    if k:
        X[:, 2:] = [r.w for r in rows]
    y = np.array([r.y for r in rows], dtype=float)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise InputError("non-finite value in design rows")
    return X, y, coef_names(k)


def coef_names(k: int, prefix: str = "alpha") -> list[str]:
    if k == 1:
        gammas = ["gamma"]
    else:
        gammas = [f"gamma_{j + 1}" for j in range(k)]
    return [f"{prefix}0", f"{prefix}1", *gammas]


@dataclass(frozen=True)
class OLSResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    sigma2: float
    r2: float
    adjusted_r2: float
    df_resid: int
    n: int
    cov: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)


def ols(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None, rtol: float = 1e-10) -> OLSResult:
    """Least squares through a pivoted QR factorization.

    Raises :class:`RankDeficiencyError` naming the columns that are linear
    combinations of the others.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = list(names) if names is not None else [f"c{j}" for j in range(p)]
    if n <= p:
        raise InputError(f"need more observations than coefficients (n={n}, p={p})")
    Q, R, piv = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if diag[0] > 0 else 0
    if rank < p:
        dependent = [names[j] for j in sorted(piv[rank:])]
        raise RankDeficiencyError(
            f"design matrix is rank deficient (rank {rank} < {p}); dependent column(s): {', '.join(dependent)}",
            dependent,
        )
    beta_p = sla.solve_triangular(R, Q.T @ y)
    coef = np.empty(p)
    coef[piv] = beta_p
    resid = y - X @ coef
    df = n - p
    rss = float(resid @ resid)
    sigma2 = rss / df
    Rinv = sla.solve_triangular(R, np.eye(p))
    cov_p = Rinv @ Rinv.T
    cov = np.empty_like(cov_p)
    cov[np.ix_(piv, piv)] = cov_p
    cov *= sigma2
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    pv = 2.0 * stats.t.sf(np.abs(t), df)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    adj = 1.0 - (1.0 - r2) * (n - 1) / df
    return OLSResult(names, coef, se, t, pv, sigma2, r2, adj, df, n, cov, resid)


@dataclass(frozen=True)
class LinearFit:
    """Pooled model ``y = a0 + a1 x + sum_k g_k W_k + e`` fitted by OLS."""

    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    adjusted_r2: float
    r2: float
    sigma2: float
    df_resid: int
    n_obs: int
    rings: tuple[float, ...] | None = None
    exposure_scale: float | None = None

    kind = "linear"

    @property
    def alpha0(self) -> float:
        return float(self.coef[0])

    @property
    def alpha1(self) -> float:
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
            "coefficients": {
                name: {"estimate": float(c), "se": float(s), "t": float(t), "p": float(p), "df": self.df_resid}
                for name, c, s, t, p in zip(self.names, self.coef, self.se, self.tvalues, self.pvalues)
            },
            "sigma2": self.sigma2,
            "r2": self.r2,
            "adjusted_r2": self.adjusted_r2,
            "n_obs": self.n_obs,
            "rings": list(self.rings) if self.rings is not None else None,
            "exposure_scale": self.exposure_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearFit":
        names = list(d["coefficients"])
        col = lambda key: np.array([d["coefficients"][n][key] for n in names], dtype=float)  # noqa: E731
        return cls(
            names, col("estimate"), col("se"), col("t"), col("p"),
            d["adjusted_r2"], d["r2"], d["sigma2"],
            int(next(iter(d["coefficients"].values()))["df"]), d["n_obs"],
            tuple(d["rings"]) if d.get("rings") is not None else None,
            d.get("exposure_scale"),
        )


def fit_linear(rows: Sequence[DesignRow], rings=None, exposure_scale=None) -> LinearFit:
    X, y, names = design_matrix(rows)
    res = ols(X, y, names)
    return LinearFit(
        res.names, res.coef, res.se, res.tvalues, res.pvalues, res.adjusted_r2, res.r2,
        res.sigma2, res.df_resid, res.n, rings, exposure_scale,
    )


def vif_matrix(C: np.ndarray) -> np.ndarray:
    """VIF of every column of ``C``, each regressed on the others plus an intercept.

    Perfectly collinear columns get ``inf``.
    """
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    if m < 2:
        raise InputError("VIF needs at least two covariates")
    out = np.empty(m)
    for j in range(m):
        target = C[:, j]
        others = np.column_stack([np.ones(n), np.delete(C, j, axis=1)])
        coef, *_ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ coef
        tss = float(np.sum((target - target.mean()) ** 2))
        rss = float(resid @ resid)
        if tss == 0 or rss <= 1e-12 * tss:
            out[j] = math.inf
        else:
            out[j] = tss / rss
    return out


def vif(rows: Sequence[DesignRow], include_x: bool = True) -> list[float]:
    """VIF of each traffic covariate in the pooled model.

    With ``include_x`` the log-IDW covariate is one of the regressors each
    traffic column is regressed on, as in the fitted model.
    """
    X, _, _ = design_matrix(rows)
    k = X.shape[1] - 2
    C = X[:, 1:] if include_x else X[:, 2:]
    values = vif_matrix(C)
    return [float(v) for v in values[-k:]]
