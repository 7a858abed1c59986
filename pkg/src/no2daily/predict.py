"""Daily and period-averaged predictions from a fitted model.

The daily log prediction is ``b0 + u + b1 ln(idw) + gamma' W`` where the site
effect ``u`` depends on the model and mode:

* linear model: always 0;
* longitudinal model: the site's BLUP for learning sites, else 0;
* spatial model, marginal mode: posterior mean of the site effect for
  learning sites, else 0;
* spatial model, conditional mode: learning sites as above, new sites get the
  kriged conditional mean averaged over posterior draws.

Period values average the natural-scale daily predictions.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CoverageError, InputError
from .fit.linear import LinearFit
from .fit.longitudinal import MixedFit
from .fit.spatial import SpatialPosterior
from .ingest import Site
from .traffic import ExposureVector

MODES = ("marginal", "conditional")


@dataclass(frozen=True)
class PredictionRecord:
    site_id: str
    date: dt.date
    predicted_log: float

    @property
    def predicted(self) -> float:
        return math.exp(self.predicted_log)


@dataclass(frozen=True)
class PeriodPrediction:
    site_id: str
    period_start: dt.date
    period_end: dt.date
    p: float


def fixed_effects(fit) -> np.ndarray:
    if isinstance(fit, (LinearFit, MixedFit)):
        return np.asarray(fit.coef, dtype=float)
    if isinstance(fit, SpatialPosterior):
        return fit.coef_mean
    raise TypeError(f"unsupported fit type {type(fit).__name__}")


def _check_exposure(fit, exposure: ExposureVector | None) -> np.ndarray:
    k = fit.n_traffic
    if k == 0:
        return np.zeros(0)
    if exposure is None:
        raise InputError("model has traffic terms but no exposure vector was given")
    w = np.asarray(exposure.w, dtype=float)
    if len(w) != k:
        raise InputError(f"exposure for {exposure.site_id!r} has {len(w)} ring(s), model expects {k}")
    if fit.rings is not None and exposure.rings is not None and tuple(fit.rings) != tuple(exposure.rings):
        raise InputError(f"exposure rings {exposure.rings} differ from fitted rings {fit.rings}")
    if fit.exposure_scale is not None and exposure.rings is not None and exposure.scale != fit.exposure_scale:
        raise InputError(f"exposure scale {exposure.scale:g} differs from fitted scale {fit.exposure_scale:g}")
    return w


def site_effects(fit, sites: Sequence[Site | str], mode: str = "marginal", max_draws: int | None = 1000) -> dict[str, float]:
    """Random-intercept contribution for each site (see module docstring)."""
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got {mode!r}")
    ids = [s if isinstance(s, str) else s.site_id for s in sites]
    if isinstance(fit, LinearFit):
        return {s: 0.0 for s in ids}
    if isinstance(fit, MixedFit):
        return {s: float(fit.blups.get(s, 0.0)) for s in ids}
    if not isinstance(fit, SpatialPosterior):
        raise TypeError(f"unsupported fit type {type(fit).__name__}")
    known = fit.b0_mean
    out = {s: known[s] for s in ids if s in known}
    new = [s for s in sites if (s if isinstance(s, str) else s.site_id) not in known]
    if mode == "marginal":
        out.update({(s if isinstance(s, str) else s.site_id): 0.0 for s in new})
    elif new:
        unlocated = [s for s in new if isinstance(s, str)]
        if unlocated:
            raise InputError(f"conditional prediction needs coordinates for new site(s): {', '.join(unlocated[:10])}")
        kriged = fit.krige(np.array([s.location for s in new]), max_draws)
        out.update(zip((s.site_id for s in new), kriged.tolist()))
    return {s: out[s] for s in ids}


def predict_daily(
    fit,
    site: Site | str,
    date: dt.date,
    idw_value: float,
    exposure: ExposureVector | None,
    mode: str = "marginal",
    effect: float | None = None,
) -> PredictionRecord:
    """Prediction for one site-day.  ``effect`` overrides the site-effect lookup."""
    if not idw_value > 0:
        raise InputError(f"IDW value must be positive, got {idw_value}")
    coef = fixed_effects(fit)
    w = _check_exposure(fit, exposure)
    if effect is None:
        effect = site_effects(fit, [site], mode)[site if isinstance(site, str) else site.site_id]
    sid = site if isinstance(site, str) else site.site_id
    log_pred = coef[0] + effect + coef[1] * math.log(idw_value) + float(coef[2:] @ w)
    return PredictionRecord(sid, date, float(log_pred))


def predict_periods(
    fit,
    sites: Sequence[Site],
    daily_idw: Mapping[str, Mapping[dt.date, float]],
    exposures: Mapping[str, ExposureVector] | None,
    mode: str = "marginal",
    max_draws: int | None = 1000,
) -> tuple[list[PredictionRecord], list[PeriodPrediction]]:
    """Daily predictions over every observation period and their period means."""
    effects = site_effects(fit, sites, mode, max_draws)
    coef = fixed_effects(fit)
    daily, periods = [], []
    for site in sites:
        w = _check_exposure(fit, exposures.get(site.site_id) if exposures is not None else None)
        base = coef[0] + effects[site.site_id] + float(coef[2:] @ w)
        series = daily_idw.get(site.site_id, {})
        seen = set()
        for obs in site.observations:
            days = obs.days
            missing = [d for d in days if d not in series]
            if missing:
                raise CoverageError(
                    f"site {site.site_id!r}: no IDW value for {len(missing)} day(s) in "
                    f"{obs.period_start}..{obs.period_end}: " + ", ".join(d.isoformat() for d in missing[:10]),
                    missing,
                )
            values = []
            for d in days:
                rec = PredictionRecord(site.site_id, d, float(base + coef[1] * math.log(series[d])))
                values.append(rec.predicted)
                if d not in seen:
                    seen.add(d)
                    daily.append(rec)
            periods.append(PeriodPrediction(site.site_id, obs.period_start, obs.period_end, math.fsum(values) / len(values)))
    return daily, periods
