"""Synthetic datasets drawn from the fitted model family.

Sites and monitors are scattered uniformly over a square region, a random
road network supplies traffic exposure, monitor series follow a shared
regional log-AR(1) signal with a seasonal cycle plus station offsets, and site
observations are generated as::

    ln Z_ij = beta0 + b_i + beta1 x_ij + gamma' W_i + e_ij

where ``x_ij`` is the log of the period-averaged IDW value computed exactly
as the fitting pipeline does and ``b ~ N(0, s_b2 exp(-d/phi))`` (independent
when ``phi`` is None).
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import __version__
from .fit.linear import DesignRow
from .ingest import MonitorStation, Observation, Reading, RoadSegment, Site, write_monitors, write_roads, write_sites
from .pipeline import design_rows, interpolate_sites, daily_series
from .traffic import DEFAULT_TARGET_LEN, RingSpec, exposure_matrix

# CTDOT 2006 segment statistics used to calibrate the lognormal draws
ADT_MEDIAN, ADT_MEAN, ADT_MAX = 11_400.0, 22_323.0, 184_000.0
LEN_MEDIAN, LEN_MEAN, LEN_MIN, LEN_MAX = 740.0, 1207.0, 16.0, 12_295.0


def _lognormal_sigma(median: float, mean: float) -> float:
    return math.sqrt(2.0 * math.log(mean / median))


@dataclass
class Scenario:
    seed: int = 0
    n_learning: int = 266
    n_validation: int = 50
    n_monitors: int = 4
    extent_km: float = 100.0
    beta0: float = -0.5974
    beta1: float = 1.0281
    gamma: tuple[float, ...] = (0.1529,)
    sigma_b2: float = 0.0402
    sigma_y2: float = 0.0619
    phi: float | None = None
    rings: tuple[float, ...] = (0.0, 2000.0)
    n_roads: int = 2000
    zero_adt_fraction: float = 0.02
    target_len: float = DEFAULT_TARGET_LEN
    exposure_scale: float = 5e7
    n_periods: int = 4
    period_gap_days: int = 91
    period_days: tuple[int, int] = (28, 31)
    start_spread_days: int = 240
    start_date: dt.date = dt.date(2006, 4, 25)
    min_hours: int = 18
    idw_power: float = 1.0

    def __post_init__(self):
        self.gamma = tuple(float(g) for g in self.gamma)
        self.rings = RingSpec(tuple(self.rings)).boundaries
        if len(self.gamma) != len(self.rings) - 1:
            raise ValueError(f"{len(self.gamma)} traffic coefficients for {len(self.rings) - 1} ring(s)")
        if self.sigma_b2 < 0 or self.sigma_y2 <= 0 or (self.phi is not None and self.phi <= 0):
            raise ValueError("variances must be positive and phi > 0")
        if min(self.n_learning, self.n_monitors, self.n_periods) < 1 or self.n_validation < 0:
            raise ValueError("counts must be >= 1")

    @property
    def n_sites(self) -> int:
        return self.n_learning + self.n_validation

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["start_date"] = self.start_date.isoformat()
        d["gamma"] = list(self.gamma)
        d["rings"] = list(self.rings)
        d["period_days"] = list(self.period_days)
        return d


PRESETS = {
    "table2": dict(beta0=-0.5974, beta1=1.0281, gamma=(0.1529,), sigma_b2=0.0402, sigma_y2=0.0619, phi=None),
    "table2-multi": dict(
        beta0=-0.6344, beta1=1.0250, gamma=(-0.0117, 0.0070, 0.0627, 0.0653, 0.0503),
        sigma_b2=0.0398, sigma_y2=0.0619, phi=None, rings=(0.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0),
    ),
    "table3": dict(beta0=-0.8524, beta1=1.0828, gamma=(0.1023,), sigma_b2=0.0748, sigma_y2=0.0648, phi=12.3184),
}


def preset(name: str, **overrides) -> Scenario:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return Scenario(**{**PRESETS[name], **overrides})


@dataclass
class SyntheticData:
    scenario: Scenario
    monitors: list[MonitorStation]
    sites: list[Site]
    roads: list[RoadSegment]
    split: dict[str, str]
    effects: dict[str, float]
    exposures: dict = field(repr=False)
    covariates: dict = field(repr=False)
    daily_idw: dict = field(repr=False)

    def sites_in(self, role: str) -> list[Site]:
        return [s for s in self.sites if self.split[s.site_id] == role]

    @property
    def learning(self) -> list[Site]:
        return self.sites_in("learning")

    @property
    def validation(self) -> list[Site]:
        return self.sites_in("validation")

    @property
    def locations(self) -> dict[str, tuple[float, float]]:
        return {s.site_id: s.location for s in self.sites}

    def rows(self, role: str = "learning", traffic: bool = True) -> list[DesignRow]:
        return design_rows(self.sites_in(role), self.covariates, self.exposures, traffic)

    def truth(self) -> dict:
        sc = self.scenario
        return {
            "parameters": {
                "beta0": sc.beta0, "beta1": sc.beta1, "gamma": list(sc.gamma),
                "sigma_b2": sc.sigma_b2, "sigma_y2": sc.sigma_y2, "phi": sc.phi,
            },
            "phi_distance_unit": "km",
            "scenario": sc.to_dict(),
            "random_intercepts": dict(self.effects),
            "validation_sites": [s.site_id for s in self.validation],
        }

    def write(self, out_dir) -> dict[str, Path]:
        """Write the three input CSVs, the split, ground truth and a run config."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        comment = f"no2daily {__version__} synth seed={self.scenario.seed}"
        paths = {
            "monitors": out / "monitors.csv",
            "sites": out / "sites.csv",
            "roads": out / "roads.csv",
            "split": out / "split.csv",
            "truth": out / "truth.json",
            "config": out / "config.json",
        }
        write_monitors(paths["monitors"], self.monitors, comment)
        write_sites(paths["sites"], self.sites, comment)
        write_roads(paths["roads"], self.roads, comment)
        lines = [f"# {comment}", "site_id,role", *(f"{s},{r}" for s, r in self.split.items())]
        paths["split"].write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths["truth"].write_text(json.dumps(self.truth(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        sc = self.scenario
        config = {
            "monitors": "monitors.csv",
            "sites": "sites.csv",
            "roads": "roads.csv",
            "split": "split.csv",
            "rings": list(sc.rings),
            "target_len": sc.target_len,
            "exposure_scale": sc.exposure_scale,
            "idw_power": sc.idw_power,
            "min_hours": sc.min_hours,
            "model": "spatial" if sc.phi is not None else "longitudinal",
            "seed": sc.seed,
            "out_dir": "run",
        }
        paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
        return paths


def _roads(sc: Scenario, rng: np.random.Generator) -> list[RoadSegment]:
    extent = sc.extent_km * 1000.0
    margin = sc.rings[-1]
    len_sigma = _lognormal_sigma(LEN_MEDIAN, LEN_MEAN)
    adt_sigma = _lognormal_sigma(ADT_MEDIAN, ADT_MEAN)
    roads = []
    for k in range(sc.n_roads):
        total = float(np.clip(rng.lognormal(math.log(LEN_MEDIAN), len_sigma), LEN_MIN, LEN_MAX))
        n_pieces = int(rng.integers(1, 4))
        weights = rng.dirichlet(np.ones(n_pieces))
        heading = rng.uniform(0, 2 * math.pi)
        x, y = rng.uniform(-margin, extent + margin, size=2)
        verts = [(float(x), float(y))]
        for wgt in weights:
            heading += rng.normal(0.0, 0.4)
            x += total * wgt * math.cos(heading)
            y += total * wgt * math.sin(heading)
            verts.append((float(x), float(y)))
        adt = float(min(round(rng.lognormal(math.log(ADT_MEDIAN), adt_sigma)), ADT_MAX))
        if rng.uniform() < sc.zero_adt_fraction:
            adt = 0.0
        roads.append(RoadSegment(f"R{k:05d}", tuple(verts), adt))
    return roads


def _periods(sc: Scenario, rng: np.random.Generator) -> list[list[tuple[dt.date, dt.date]]]:
    out = []
    lo, hi = sc.period_days
    for _ in range(sc.n_sites):
        offset = int(rng.integers(0, sc.start_spread_days + 1))
        site = []
        for j in range(sc.n_periods):
            start = sc.start_date + dt.timedelta(days=offset + j * sc.period_gap_days)
            length = int(rng.integers(lo, hi + 1))
            site.append((start, start + dt.timedelta(days=length - 1)))
        out.append(site)
    return out


def _monitors(sc: Scenario, rng: np.random.Generator, last_day: dt.date) -> list[MonitorStation]:
    extent = sc.extent_km * 1000.0
    n_days = (last_day - sc.start_date).days + 1
    days = [sc.start_date + dt.timedelta(days=k) for k in range(n_days)]
    doy = np.array([d.timetuple().tm_yday for d in days], dtype=float)
    season = 0.25 * np.cos(2 * math.pi * (doy - 15.0) / 365.25)
    ar = np.empty(n_days)
    rho, sd = 0.7, 0.25
    ar[0] = rng.normal(0.0, sd)
    innov = rng.normal(0.0, sd * math.sqrt(1 - rho**2), size=n_days)
    for t in range(1, n_days):
        ar[t] = rho * ar[t - 1] + innov[t]
    regional = math.log(18.0) + season + ar
    hours = np.arange(24)
    diurnal = 1.0 + 0.35 * np.cos(2 * math.pi * (hours - 8) / 24.0)

    locs = rng.uniform(0, extent, size=(sc.n_monitors, 2))
    offsets = rng.normal(0.0, 0.15, size=sc.n_monitors)
    daily = regional[None, :] + offsets[:, None] + rng.normal(0.0, 0.08, size=(sc.n_monitors, n_days))
    hourly = np.exp(daily)[:, :, None] * diurnal[None, None, :] * np.exp(rng.normal(0.0, 0.1, size=(sc.n_monitors, n_days, 24)))
    hourly = np.maximum(np.round(hourly, 3), 0.001)

    present = rng.uniform(size=hourly.shape) >= 0.02
    # a sparse station-day (below the completeness rule) on ~1% of days, one station at a time
    sparse_days = np.flatnonzero(rng.uniform(size=n_days) < 0.01)
    for t in sparse_days:
        s = int(rng.integers(sc.n_monitors))
        present[s, t, rng.permutation(24)[: int(rng.integers(8, 21))]] = False
    sparse = set(sparse_days.tolist())
    for s in range(sc.n_monitors):
        for t in range(n_days):
            if t not in sparse and present[s, t].sum() < sc.min_hours:
                present[s, t] = True

    stations = []
    for s in range(sc.n_monitors):
        readings = []
        for t, day in enumerate(days):
            base = dt.datetime(day.year, day.month, day.day)
            for h in np.flatnonzero(present[s, t]):
                readings.append(Reading(base + dt.timedelta(hours=int(h)), float(hourly[s, t, h])))
        stations.append(MonitorStation(f"EPA{s + 1}", (float(locs[s, 0]), float(locs[s, 1])), tuple(readings)))
    return stations


def draw_effects(xy_m: np.ndarray, sigma_b2: float, phi: float | None, rng: np.random.Generator) -> np.ndarray:
    """Site intercepts ``b ~ N(0, sigma_b2 exp(-d / phi))`` with ``d`` in km; iid when ``phi`` is None."""
    n = len(xy_m)
    if phi is None:
        return rng.normal(0.0, math.sqrt(sigma_b2), size=n)
    D = squareform(pdist(np.asarray(xy_m, dtype=float) / 1000.0))
    L = np.linalg.cholesky(sigma_b2 * np.exp(-D / phi))
    return L @ rng.standard_normal(n)


def generate(scenario: Scenario) -> SyntheticData:
    """Draw a complete synthetic dataset; identical scenarios give identical data."""
    sc = scenario
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(sc.seed).spawn(6)]
    rng_loc, rng_roads, rng_mon, rng_per, rng_eff, rng_noise = streams
    extent = sc.extent_km * 1000.0

    site_xy = rng_loc.uniform(0, extent, size=(sc.n_sites, 2))
    site_ids = [f"S{i + 1:04d}" for i in range(sc.n_sites)]
    held = set(rng_loc.permutation(sc.n_sites)[: sc.n_validation].tolist())
    split = {sid: ("validation" if i in held else "learning") for i, sid in enumerate(site_ids)}

    roads = _roads(sc, rng_roads)
    periods = _periods(sc, rng_per)
    last = max(end for site in periods for _, end in site)
    monitors = _monitors(sc, rng_mon, last)

    b = draw_effects(site_xy, sc.sigma_b2, sc.phi, rng_eff)
    effects = dict(zip(site_ids, b.tolist()))

    # covariates are computed on placeholder observations, then Z is drawn
    shells = [
        Site(sid, (float(x), float(y)), tuple(Observation(s, e, 1.0) for s, e in per))
        for sid, (x, y), per in zip(site_ids, site_xy, periods)
    ]
    exposures = exposure_matrix(shells, roads, RingSpec(sc.rings), sc.target_len, sc.exposure_scale)
    stations = daily_series(monitors, sc.min_hours)
    covariates, daily = interpolate_sites(shells, stations, sc.idw_power)

    gamma = np.array(sc.gamma)
    sites = []
    for shell, bi in zip(shells, b):
        traffic = float(gamma @ np.array(exposures[shell.site_id].w))
        obs = []
        for o in shell.observations:
            x = covariates[(shell.site_id, o.period_start, o.period_end)].x
            y = sc.beta0 + bi + sc.beta1 * x + traffic + rng_noise.normal(0.0, math.sqrt(sc.sigma_y2))
            obs.append(Observation(o.period_start, o.period_end, math.exp(y)))
        sites.append(Site(shell.site_id, shell.location, tuple(obs)))

    return SyntheticData(sc, monitors, sites, roads, split, effects, exposures, covariates, daily)
