"""Random-intercept model with exponentially correlated site effects, by MCMC.

Model::

    y_ij = theta' X_ij + b_i + e_ij,   e_ij ~ N(0, s_y2)
    b ~ N(0, s_b2 R(phi)),              R(phi)_ab = exp(-d_ab / phi)

with a flat prior on ``theta``, inverse-gamma priors on both variances and a
uniform prior on ``phi`` over ``(0, phi_max]``.  Distances are in kilometers.

Each Gibbs sweep draws ``(theta, b)`` jointly from their conditional
posterior, then ``s_y2`` and ``s_b2`` from their inverse-gamma conditionals,
then ``log(phi)`` by adaptive random-walk Metropolis.  The joint draw splits
the data into within-site deviations (which carry no information on ``b``)
and site means ``ybar = Xbar theta + b + ebar`` with covariance
``M = s_b2 R + s_y2 diag(1/n_i)``; ``theta`` is drawn from its GLS marginal
and ``b`` by perturbing a prior draw toward the data, which needs only the
Cholesky factors of ``R`` and ``M``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist, pdist, squareform

from ..errors import InputError, NumericalError
from .linear import DesignRow
from .longitudinal import _Grouped, fit_longitudinal

log = logging.getLogger(__name__)

SCALAR_PARAMS = ("sigma_b2", "sigma_y2", "phi")


@dataclass
class MCMCConfig:
    iters: int = 10_000
    burnin: int = 5_000
    chains: int = 2
    thin: int = 1
    seed: int = 0
    prior_shape: float = 0.01
    prior_scale: float = 0.01
    phi_max: float | None = None
    target_accept: float = 0.35
    adapt_interval: int = 50
    init_step: float = 0.5
    distance_unit_m: float = 1000.0
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.iters <= self.burnin:
            raise InputError(f"iters ({self.iters}) must exceed burnin ({self.burnin})")
        if self.chains < 1 or self.thin < 1:
            raise InputError("chains and thin must be >= 1")
        unknown = set(self.fixed) - set(SCALAR_PARAMS)
        if unknown:
            raise InputError(f"cannot fix {sorted(unknown)}; choose from {SCALAR_PARAMS}")


def _chol(A: np.ndarray) -> np.ndarray:
    L, info = sla.lapack.dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info != 0:
        raise np.linalg.LinAlgError(f"matrix not positive definite (info={info})")
    return L


def _cho_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    X, info = sla.lapack.dpotrs(L, B, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"dpotrs failed (info={info})")
    return X


def _tri(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return sla.solve_triangular(L, b, lower=True, check_finite=False)


def correlation(D: np.ndarray, phi: float) -> np.ndarray:
    return np.exp(-D / phi)


class _Data:
    def __init__(self, rows: Sequence[DesignRow], locations: Mapping[str, tuple[float, float]], unit: float):
        g = _Grouped(rows)
        self.g = g
        missing = [s for s in g.site_ids if s not in locations]
        if missing:
            raise InputError(f"no location for site(s): {', '.join(missing[:10])}")
        self.xy_m = np.array([locations[s] for s in g.site_ids], dtype=float)
        self.xy = self.xy_m / unit
        self.D = squareform(pdist(self.xy))
        if g.n_sites > 1 and np.min(pdist(self.xy)) <= 0:
            raise InputError("spatial model needs distinct site locations")
        n = g.counts
        self.Xbar = g.Sx / n[:, None]
        self.ybar = g.Sy / n
        Xw = g.X - self.Xbar[g.group]
        yw = g.y - self.ybar[g.group]
        self.XwtXw = Xw.T @ Xw
        self.Xwtyw = Xw.T @ yw


@dataclass
class _State:
    theta: np.ndarray
    b: np.ndarray
    sigma_b2: float
    sigma_y2: float
    phi: float


def _run_chain(data: _Data, cfg: MCMCConfig, rng: np.random.Generator, init: _State, phi_max: float) -> dict:
    g = data.g
    n, N, p = g.n_sites, g.N, g.p
    a0, s0 = cfg.prior_shape, cfg.prior_scale
    fixed = cfg.fixed
    th, b = init.theta.copy(), init.b.copy()
    sb, sy, phi = init.sigma_b2, init.sigma_y2, init.phi
    if "sigma_b2" in fixed:
        sb = float(fixed["sigma_b2"])
    if "sigma_y2" in fixed:
        sy = float(fixed["sigma_y2"])
    if "phi" in fixed:
        phi = float(fixed["phi"])

    R = correlation(data.D, phi)
    try:
        LR = _chol(R)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"correlation matrix not positive definite at phi={phi:g}") from exc
    logdetR = 2.0 * float(np.sum(np.log(np.diag(LR))))

    inv_n = 1.0 / g.counts
    log_step = math.log(cfg.init_step)
    window_acc = 0
    batch = 0

    n_keep = (cfg.iters - cfg.burnin) // cfg.thin
    out = {
        "theta": np.empty((n_keep, p)),
        "b0": np.empty((n_keep, n)),
        "sigma_b2": np.empty(n_keep),
        "sigma_y2": np.empty(n_keep),
        "phi": np.empty(n_keep),
    }
    kept = 0
    post_acc = post_prop = 0

    for it in range(cfg.iters):
        # (theta, b) | variances, phi
        M = sb * R
        M[np.diag_indices(n)] += sy * inv_n
        try:
            LM = _chol(M)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"site-mean covariance not positive definite at iteration {it}") from exc
        rhs = _cho_solve(LM, np.column_stack([data.Xbar, data.ybar]))
        P = data.XwtXw / sy + data.Xbar.T @ rhs[:, :p]
        h = data.Xwtyw / sy + data.Xbar.T @ rhs[:, p]
        try:
            LP = _chol(P)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"fixed-effect precision not positive definite at iteration {it}") from exc
        th = _cho_solve(LP, h) + sla.solve_triangular(LP, rng.standard_normal(p), lower=True, trans="T", check_finite=False)
        d = data.ybar - data.Xbar @ th
        b_prior = math.sqrt(sb) * (LR @ rng.standard_normal(n))
        noise = np.sqrt(sy * inv_n) * rng.standard_normal(n)
        b = b_prior + sb * (R @ _cho_solve(LM, d - b_prior - noise))

        # s_y2 | theta, b
        if "sigma_y2" not in fixed:
            resid = g.y - g.X @ th - b[g.group]
            sy = (s0 + 0.5 * float(resid @ resid)) / rng.gamma(a0 + 0.5 * N)

        # (phi, s_b2) | b as one block: phi by random-walk Metropolis on
        # log(phi) with s_b2 integrated out, then s_b2 from its conditional
        u = _tri(LR, b)
        quad = float(u @ u)
        if "phi" not in fixed:
            step = math.exp(log_step)
            eta_new = math.log(phi) + step * rng.standard_normal()
            log_u = math.log(rng.uniform())
            phi_new = math.exp(eta_new)
            ok = False
            if phi_new <= phi_max:
                R_new = correlation(data.D, phi_new)
                try:
                    L_new = _chol(R_new)
                except np.linalg.LinAlgError:
                    L_new = None
                if L_new is not None:
                    logdet_new = 2.0 * float(np.sum(np.log(np.diag(L_new))))
                    u_new = _tri(L_new, b)
                    quad_new = float(u_new @ u_new)
                    if "sigma_b2" in fixed:
                        kernel = -0.5 * (quad_new - quad) / sb
                    else:
                        kernel = -(a0 + 0.5 * n) * (math.log(s0 + 0.5 * quad_new) - math.log(s0 + 0.5 * quad))
                    log_ratio = -0.5 * (logdet_new - logdetR) + kernel + (eta_new - math.log(phi))
                    if not math.isfinite(log_ratio):
                        raise NumericalError(f"non-finite likelihood ratio at iteration {it}")
                    ok = log_u < log_ratio
            if ok:
                phi, R, LR, logdetR, quad = phi_new, R_new, L_new, logdet_new, quad_new
                window_acc += 1
            if it < cfg.burnin:
                if (it + 1) % cfg.adapt_interval == 0:
                    batch += 1
                    rate = window_acc / cfg.adapt_interval
                    log_step += (rate - cfg.target_accept) * min(1.0, 3.0 / math.sqrt(batch))
                    window_acc = 0
            else:
                post_prop += 1
                post_acc += ok

        if "sigma_b2" not in fixed:
            sb = (s0 + 0.5 * quad) / rng.gamma(a0 + 0.5 * n)

        if it >= cfg.burnin and (it - cfg.burnin) % cfg.thin == 0 and kept < n_keep:
            out["theta"][kept] = th
            out["b0"][kept] = b
            out["sigma_b2"][kept] = sb
            out["sigma_y2"][kept] = sy
            out["phi"][kept] = phi
            kept += 1

    out["acceptance"] = post_acc / post_prop if post_prop else float("nan")
    out["step"] = math.exp(log_step)
    return out


def _batch_means_se(x: np.ndarray, chain: np.ndarray) -> float:
    """Monte Carlo standard error of the mean by batch means within chains."""
    variances, counts = [], []
    for c in np.unique(chain):
        xc = x[chain == c]
        m = len(xc)
        nb = max(int(math.sqrt(m)), 1)
        size = m // nb
        if size < 1:
            continue
        means = xc[: nb * size].reshape(nb, size).mean(axis=1)
        variances.append(size * means.var(ddof=1) if nb > 1 else xc.var())
        counts.append(m)
    total = sum(counts)
    if not total:
        return float("nan")
    var = sum(v * c for v, c in zip(variances, counts)) / total
    return math.sqrt(var / total)


def _split_rhat(x: np.ndarray, chain: np.ndarray) -> float:
    halves = []
    for c in np.unique(chain):
        xc = x[chain == c]
        h = len(xc) // 2
        if h < 2:
            return float("nan")
        halves += [xc[:h], xc[h : 2 * h]]
    m = len(halves[0])
    means = np.array([s.mean() for s in halves])
    W = np.mean([s.var(ddof=1) for s in halves])
    B = m * means.var(ddof=1)
    if W == 0:
        return float("nan")
    return float(math.sqrt(((m - 1) / m * W + B / m) / W))


@dataclass
class SpatialPosterior:
    names: list[str]
    site_ids: list[str]
    locations: np.ndarray  # meters, one row per site
    draws: dict[str, np.ndarray]
    chain: np.ndarray
    acceptance: list[float]
    config: MCMCConfig
    phi_max: float
    n_obs: int
    rings: tuple[float, ...] | None = None
    exposure_scale: float | None = None

    kind = "spatial"

    @property
    def n_draws(self) -> int:
        return len(self.chain)

    @property
    def param_names(self) -> list[str]:
        return [*self.names, *SCALAR_PARAMS]

    @property
    def n_traffic(self) -> int:
        return len(self.names) - 2

    def samples(self, name: str) -> np.ndarray:
        if name in self.names:
            return self.draws["theta"][:, self.names.index(name)]
        return self.draws[name]

    @property
    def coef_mean(self) -> np.ndarray:
        return self.draws["theta"].mean(axis=0)

    @property
    def b0_mean(self) -> dict[str, float]:
        return dict(zip(self.site_ids, self.draws["b0"].mean(axis=0).tolist()))

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for name in self.param_names:
            x = self.samples(name)
            q = np.quantile(x, [0.025, 0.5, 0.975])
            out[name] = {
                "mean": float(x.mean()),
                "se": float(x.std(ddof=1)),
                "q2.5": float(q[0]),
                "q50": float(q[1]),
                "q97.5": float(q[2]),
                "mcse": _batch_means_se(x, self.chain),
                "rhat": _split_rhat(x, self.chain),
            }
        return out

    def interval(self, name: str, level: float = 0.95) -> tuple[float, float]:
        a = (1.0 - level) / 2.0
        lo, hi = np.quantile(self.samples(name), [a, 1.0 - a])
        return float(lo), float(hi)

    def krige(self, locations: np.ndarray, max_draws: int | None = 1000) -> np.ndarray:
        """Conditional mean of the site effect at new locations (meters).

        For every retained draw the effect is ``c' R^-1 b`` with ``c`` the
        correlations between the new point and the sites; results are
        averaged over draws (evenly thinned to ``max_draws``).
        """
        pts = np.asarray(locations, dtype=float).reshape(-1, 2) / self.config.distance_unit_m
        own = self.locations / self.config.distance_unit_m
        D = squareform(pdist(own))
        C = cdist(pts, own)
        idx = _thin_index(self.n_draws, max_draws)
        total = np.zeros(len(pts))
        for k in idx:
            phi = self.draws["phi"][k]
            L = _chol(correlation(D, phi))
            alpha = _cho_solve(L, self.draws["b0"][k])
            total += correlation(C, phi) @ alpha
        return total / len(idx)

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        summary = self.summary()
        return {
            "model": self.kind,
            "summary": summary,
            "coefficients": {n: summary[n] for n in self.names},
            "acceptance_phi": self.acceptance,
            "phi_max": self.phi_max,
            "distance_unit": "km" if self.config.distance_unit_m == 1000.0 else f"{self.config.distance_unit_m} m",
            "n_obs": self.n_obs,
            "n_draws": self.n_draws,
            "mcmc": cfg,
            "sites": {s: [float(x), float(y)] for s, (x, y) in zip(self.site_ids, self.locations)},
            "b0_mean": self.b0_mean,
            "rings": list(self.rings) if self.rings is not None else None,
            "exposure_scale": self.exposure_scale,
        }

    def draws_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["chain", "draw", *self.param_names, *(f"b0[{s}]" for s in self.site_ids)])
        draw_no = np.zeros(self.n_draws, dtype=int)
        for c in np.unique(self.chain):
            sel = self.chain == c
            draw_no[sel] = np.arange(sel.sum())
        cols = [self.samples(nm) for nm in self.param_names]
        for k in range(self.n_draws):
            w.writerow(
                [int(self.chain[k]), int(draw_no[k]), *(repr(float(c[k])) for c in cols),
                 *(repr(float(v)) for v in self.draws["b0"][k])]
            )
        return buf.getvalue()

    @classmethod
    def from_artifacts(cls, fit: dict, draws_text: str) -> "SpatialPosterior":
        lines = [ln for ln in draws_text.splitlines() if ln and not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader]).reshape(-1, len(header))
        names = list(fit["coefficients"])
        sites = list(fit["sites"])
        n_p = len(names) + len(SCALAR_PARAMS)
        draws = {
            "theta": data[:, 2 : 2 + len(names)],
            "sigma_b2": data[:, 2 + len(names)],
            "sigma_y2": data[:, 3 + len(names)],
            "phi": data[:, 4 + len(names)],
            "b0": data[:, 2 + n_p :],
        }
        cfg = MCMCConfig(**fit["mcmc"])
        return cls(
            names, sites, np.array([fit["sites"][s] for s in sites], dtype=float), draws,
            data[:, 0].astype(int), list(fit["acceptance_phi"]), cfg, fit["phi_max"], fit["n_obs"],
            tuple(fit["rings"]) if fit.get("rings") is not None else None, fit.get("exposure_scale"),
        )


def _thin_index(n: int, max_draws: int | None) -> np.ndarray:
    if max_draws is None or n <= max_draws:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_draws).round().astype(int))


def fit_spatial(
    rows: Sequence[DesignRow],
    locations: Mapping[str, tuple[float, float]],
    config: MCMCConfig | None = None,
    rings=None,
    exposure_scale=None,
) -> SpatialPosterior:
    """Sample the spatially correlated random-intercept model.

    ``locations`` maps site ids to planar coordinates in meters.  Chains are
    seeded from ``config.seed`` and initialized at the longitudinal ML fit,
    with starting ``phi`` spread over ``(0, phi_max]``.
    """
    cfg = config or MCMCConfig()
    data = _Data(rows, locations, cfg.distance_unit_m)
    g = data.g
    if g.n_sites < 2:
        raise InputError("spatial model needs at least two sites")
    phi_max = cfg.phi_max if cfg.phi_max is not None else 0.5 * float(data.D.max())
    if not phi_max > 0:
        raise InputError("phi_max must be positive")

    start = fit_longitudinal(rows)
    sb0 = max(start.sigma_b2, 1e-3 * start.sigma_y2)
    b_init = np.array([start.blups[s] for s in g.site_ids])

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    results = []
    for c, ss in enumerate(seeds):
        init = _State(start.coef.copy(), b_init, sb0, start.sigma_y2, phi_max * (c + 1) / (2.0 * (cfg.chains + 1)))
        res = _run_chain(data, cfg, np.random.default_rng(ss), init, phi_max)
        if "phi" not in cfg.fixed and not 0.05 <= res["acceptance"] <= 0.8:
            log.warning("chain %d: phi acceptance rate %.3f outside [0.05, 0.8]", c, res["acceptance"])
        results.append(res)

    draws = {k: np.concatenate([r[k] for r in results]) for k in ("theta", "b0", "sigma_b2", "sigma_y2", "phi")}
    chain = np.concatenate([np.full(len(r["phi"]), c) for c, r in enumerate(results)])
    return SpatialPosterior(
        list(g.names), list(g.site_ids), data.xy_m, draws, chain,
        [float(r["acceptance"]) for r in results], cfg, float(phi_max), g.N, rings, exposure_scale,
    )
