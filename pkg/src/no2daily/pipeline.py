"""Glue between the stages: covariate tables and model design rows."""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .fit.linear import DesignRow
from .ingest import MonitorStation, Site
from .interp import DEFAULT_MIN_HOURS, DEFAULT_POWER, DailyField, DailySeries, PeriodCovariate, daily_average
from .traffic import ExposureVector

PeriodKey = tuple  # (site_id, period_start, period_end)


def daily_series(monitors: Sequence[MonitorStation], min_hours: int = DEFAULT_MIN_HOURS) -> list[DailySeries]:
    return [daily_average(m, min_hours) for m in monitors]


def interpolate_sites(
    sites: Sequence[Site], stations: Sequence[DailySeries], power: float = DEFAULT_POWER
) -> tuple[dict[PeriodKey, PeriodCovariate], dict[str, dict]]:
    """Period covariates and daily IDW values for every observation period."""
    field = DailyField(stations)
    covs: dict[PeriodKey, PeriodCovariate] = {}
    daily: dict[str, dict] = {}
    for site in sites:
        site_covs, site_daily = field.period_covariates(site, power)
        daily[site.site_id] = site_daily
        for c in site_covs:
            covs[(c.site_id, c.period_start, c.period_end)] = c
    return covs, daily


def design_rows(
    sites: Sequence[Site],
    covariates: Mapping[PeriodKey, PeriodCovariate],
    exposures: Mapping[str, ExposureVector] | None,
    traffic: bool = True,
) -> list[DesignRow]:
    """One row per observation with ``y = ln Z``, ``x = ln U`` and site exposure."""
    rows = []
    for site in sites:
        if traffic:
            if exposures is None or site.site_id not in exposures:
                raise InputError(f"no exposure vector for site {site.site_id!r}")
            w = tuple(exposures[site.site_id].w)
        else:
            w = ()
        for obs in site.observations:
            key = (site.site_id, obs.period_start, obs.period_end)
            if key not in covariates:
                raise InputError(f"no period covariate for {site.site_id!r} {obs.period_start}..{obs.period_end}")
            rows.append(DesignRow(site.site_id, math.log(obs.value), covariates[key].x, w))
    return rows


def split_sites(site_ids: Sequence[str], n_validation: int, seed: int) -> dict[str, str]:
    """Random learning/validation split, deterministic in ``seed``."""
    if not 0 <= n_validation < len(site_ids):
        raise InputError(f"n_validation={n_validation} must be in [0, {len(site_ids)})")
    rng = np.random.default_rng(seed)
    held = set(rng.permutation(len(site_ids))[:n_validation].tolist())
    return {s: ("validation" if i in held else "learning") for i, s in enumerate(site_ids)}
