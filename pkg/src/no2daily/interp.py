"""Daily monitor series, inverse-distance interpolation and period covariates."""
from __future__ import annotations

import datetime as dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import CoverageError, InputError
from .ingest import MonitorStation, Observation, Point, Site

log = logging.getLogger(__name__)

DEFAULT_MIN_HOURS = 18
DEFAULT_POWER = 1.0
COLLOCATED = 1e-6


@dataclass(frozen=True)
class DailySeries:
    location: Point
    values: Mapping[dt.date, float] = field(default_factory=dict)
    station_id: str = ""


@dataclass(frozen=True)
class PeriodCovariate:
    site_id: str
    period_start: dt.date
    period_end: dt.date
    u: float

    @property
    def x(self) -> float:
        return math.log(self.u)


def daily_average(station: MonitorStation, min_hours: int = DEFAULT_MIN_HOURS) -> DailySeries:
    """Mean of the hourly readings of each calendar day.

    Days with fewer than ``min_hours`` readings are dropped.
    """
    if not station.readings:
        raise InputError(f"station {station.station_id!r} has no readings")
    by_day = defaultdict(list)
    for r in station.readings:
        by_day[r.timestamp.date()].append(r.no2)
    values = {}
    dropped = 0
    for day in sorted(by_day):
        hours = by_day[day]
        if len(hours) >= min_hours:
            values[day] = math.fsum(hours) / len(hours)
        else:
            dropped += 1
    if dropped:
        log.info("station %s: %d day(s) with fewer than %d hours omitted", station.station_id, dropped, min_hours)
    return DailySeries(station.location, values, station.station_id)


def idw(site_location: Point, stations: Sequence[DailySeries], date: dt.date, power: float = DEFAULT_POWER) -> float:
    """Inverse-distance-weighted value at ``site_location`` on ``date``.

    Only stations reporting that date take part.  A station closer than 1e-6 m
    returns its own value.
    """
    num = den = 0.0
    found = False
    sx, sy = site_location
    for s in stations:
        v = s.values.get(date)
        if v is None:
            continue
        found = True
        d = math.hypot(s.location[0] - sx, s.location[1] - sy)
        if d < COLLOCATED:
            return v
        w = d ** -power
        num += w * v
        den += w
    if not found:
        raise CoverageError(f"no station reports a value on {date}", [date])
    return num / den


def period_covariate(site: Site, obs: Observation, stations: Sequence[DailySeries], power: float = DEFAULT_POWER) -> PeriodCovariate:
    values, missing = [], []
    for day in obs.days:
        try:
            values.append(idw(site.location, stations, day, power))
        except CoverageError:
            missing.append(day)
    if missing:
        raise CoverageError(
            f"site {site.site_id!r}: {len(missing)} uncoverable day(s) in {obs.period_start}..{obs.period_end}: "
            + ", ".join(d.isoformat() for d in missing[:10])
            + (" ..." if len(missing) > 10 else ""),
            missing,
        )
    return PeriodCovariate(site.site_id, obs.period_start, obs.period_end, math.fsum(values) / len(values))


class DailyField:
    """Station daily values on a common date axis (NaN where missing)."""

    def __init__(self, stations: Sequence[DailySeries]):
        if not stations:
            raise InputError("no monitor stations")
        days = sorted({d for s in stations for d in s.values})
        self.start = days[0] if days else dt.date.min
        n = (days[-1] - days[0]).days + 1 if days else 0
        self.dates = [self.start + dt.timedelta(days=k) for k in range(n)]
        self.locations = np.array([s.location for s in stations], dtype=float)
        self.values = np.full((len(stations), n), np.nan)
        for i, s in enumerate(stations):
            for day, v in s.values.items():
                self.values[i, (day - self.start).days] = v

    def index(self, day: dt.date) -> int:
        k = (day - self.start).days
        if not 0 <= k < len(self.dates):
            return -1
        return k

    def interpolate(self, location: Point, days: Sequence[dt.date], power: float = DEFAULT_POWER) -> np.ndarray:
        """Vectorized :func:`idw` over ``days``; NaN where no station reports."""
        d = np.hypot(self.locations[:, 0] - location[0], self.locations[:, 1] - location[1])
        idx = np.array([self.index(day) for day in days], dtype=int)
        out = np.full(len(days), np.nan)
        ok = idx >= 0
        vals = self.values[:, idx[ok]]
        near = np.flatnonzero(d < COLLOCATED)
        w = np.where(d < COLLOCATED, 0.0, np.maximum(d, COLLOCATED) ** -power)
        present = ~np.isnan(vals)
        wv = np.where(present, w[:, None], 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            res = (wv * np.nan_to_num(vals)).sum(axis=0) / wv.sum(axis=0)
        # collocated stations override the weighted mean wherever they report
        for i in near[::-1]:
            res = np.where(present[i], vals[i], res)
        res[~present.any(axis=0)] = np.nan
        out[ok] = res
        return out

    def period_covariates(self, site: Site, power: float = DEFAULT_POWER) -> tuple[list[PeriodCovariate], dict]:
        """Period covariates for every observation of ``site`` plus its daily values.

        Raises :class:`CoverageError` listing uncoverable days.
        """
        covs, daily = [], {}
        for obs in site.observations:
            days = obs.days
            v = self.interpolate(site.location, days, power)
            bad = np.isnan(v)
            if bad.any():
                missing = [d for d, b in zip(days, bad) if b]
                raise CoverageError(
                    f"site {site.site_id!r}: {len(missing)} uncoverable day(s) in "
                    f"{obs.period_start}..{obs.period_end}: " + ", ".join(d.isoformat() for d in missing[:10]),
                    missing,
                )
            daily.update(zip(days, v.tolist()))
            covs.append(PeriodCovariate(site.site_id, obs.period_start, obs.period_end, math.fsum(v.tolist()) / len(days)))
        return covs, daily
