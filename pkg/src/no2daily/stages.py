"""Pipeline stages over on-disk artifacts.

Every stage reads its inputs from the run config and from earlier artifacts
in ``out_dir`` and writes plain CSV/JSON.  CSV artifacts start with a ``#``
metadata line; JSON artifacts carry a ``meta`` object.  Neither contains
timestamps, so reruns with the same inputs and config are byte-identical.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import InputError, No2DailyError, NumericalError
from .fit import MCMCConfig, fit_linear, fit_longitudinal, fit_spatial, vif
from .fit.linear import LinearFit
from .fit.longitudinal import MixedFit
from .fit.spatial import SpatialPosterior
from .ingest import load_monitors, load_roads, load_sites
from .interp import PeriodCovariate
from .pipeline import daily_series, design_rows, interpolate_sites, split_sites
from .predict import predict_periods
from .traffic import ExposureVector, exposure_matrix
from .validate import calibration, semivariogram

log = logging.getLogger(__name__)

STAGES = ("exposure", "interpolate", "fit", "predict", "validate")


class StageError(No2DailyError):
    def __init__(self, stage: str, error: Exception):
        self.stage = stage
        self.error = error
        super().__init__(f"[{stage}] {error}")


def _meta(cfg: RunConfig, stage: str) -> dict:
    return {"tool": "no2daily", "version": __version__, "stage": stage, "seed": cfg.seed, "config_hash": cfg.digest()}


def _meta_line(cfg: RunConfig, stage: str) -> str:
    m = _meta(cfg, stage)
    return f"# {m['tool']} {m['version']} stage={stage} seed={m['seed']} config={m['config_hash']}\n"


def _write_csv(path: Path, cfg: RunConfig, stage: str, header: list[str], rows) -> Path:
    buf = io.StringIO()
    buf.write(_meta_line(cfg, stage))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _write_json(path: Path, cfg: RunConfig, stage: str, payload: dict) -> Path:
    doc = {"meta": _meta(cfg, stage), **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, (dt.date, Path)):
        return str(obj)
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _read_csv(path: Path, header: list[str] | None = None) -> list[dict]:
    if not path.exists():
        raise InputError(f"missing artifact {path}; run the earlier stage first")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if header is not None and reader.fieldnames[: len(header)] != header:
        raise InputError(f"{path}: unexpected header {reader.fieldnames}")
    return list(reader)


def _f(v: float) -> str:
    return repr(float(v))


# -- shared loading ------------------------------------------------------------


def _split(cfg: RunConfig, site_ids: list[str]) -> dict[str, str]:
    if cfg.split is None:
        return split_sites(site_ids, cfg.n_validation, cfg.seed)
    rows = _read_csv(cfg.path("split"), ["site_id", "role"])
    split = {r["site_id"]: r["role"] for r in rows}
    bad = {r for r in split.values()} - {"learning", "validation"}
    if bad:
        raise InputError(f"split roles must be learning/validation, got {sorted(bad)}")
    missing = [s for s in site_ids if s not in split]
    if missing:
        raise InputError(f"split file lacks site(s): {', '.join(missing[:10])}")
    return split


def _exposures(cfg: RunConfig) -> dict[str, ExposureVector]:
    meta_path = cfg.out / "exposure.meta.json"
    if not meta_path.exists():
        raise InputError(f"missing artifact {meta_path}; run the exposure stage first")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    rings = tuple(meta["rings"])
    if rings != cfg.ring_spec.boundaries or meta["exposure_scale"] != cfg.exposure_scale:
        raise InputError("exposure.csv was built with different rings or exposure_scale; rerun the exposure stage")
    rows = _read_csv(cfg.out / "exposure.csv", ["site_id"])
    k = len(rings) - 1
    return {
        r["site_id"]: ExposureVector(r["site_id"], tuple(float(r[f"w_{j + 1}"]) for j in range(k)), rings, float(meta["exposure_scale"]))
        for r in rows
    }


def _covariates(cfg: RunConfig) -> dict:
    rows = _read_csv(cfg.out / "period_covariates.csv", ["site_id", "period_start", "period_end", "u_ppb", "x_log"])
    out = {}
    for r in rows:
        start, end = dt.date.fromisoformat(r["period_start"]), dt.date.fromisoformat(r["period_end"])
        out[(r["site_id"], start, end)] = PeriodCovariate(r["site_id"], start, end, float(r["u_ppb"]))
    return out


def _daily_idw(cfg: RunConfig) -> dict:
    out: dict[str, dict] = {}
    for r in _read_csv(cfg.out / "daily_idw.csv", ["site_id", "date", "no2_ppb"]):
        out.setdefault(r["site_id"], {})[dt.date.fromisoformat(r["date"])] = float(r["no2_ppb"])
    return out


def load_fit(cfg: RunConfig):
    path = cfg.out / "fit.json"
    if not path.exists():
        raise InputError(f"missing artifact {path}; run the fit stage first")
    doc = json.loads(path.read_text(encoding="utf-8"))
    model = doc["model"]
    if model == "linear":
        return LinearFit.from_dict(doc)
    if model == "longitudinal":
        return MixedFit.from_dict(doc)
    draws = cfg.out / "draws.csv"
    if not draws.exists():
        raise InputError(f"missing artifact {draws}")
    return SpatialPosterior.from_artifacts(doc, draws.read_text(encoding="utf-8"))


# -- stages --------------------------------------------------------------------


def run_exposure(cfg: RunConfig) -> list[Path]:
    sites = load_sites(cfg.path("sites"))
    roads = load_roads(cfg.path("roads"))
    exps = exposure_matrix(sites, roads, cfg.ring_spec, cfg.target_len, cfg.exposure_scale)
    k = cfg.ring_spec.n_rings
    cfg.out.mkdir(parents=True, exist_ok=True)
    csv_path = _write_csv(
        cfg.out / "exposure.csv", cfg, "exposure", ["site_id", *(f"w_{j + 1}" for j in range(k))],
        ([e.site_id, *map(_f, e.w)] for e in exps.values()),
    )
    meta = _write_json(
        cfg.out / "exposure.meta.json", cfg, "exposure",
        {"rings": list(cfg.ring_spec.boundaries), "target_len": cfg.target_len, "exposure_scale": cfg.exposure_scale,
         "units": "vehicle-meters/day divided by exposure_scale"},
    )
    return [csv_path, meta]


def run_interpolate(cfg: RunConfig) -> list[Path]:
    monitors = load_monitors(cfg.path("monitors"))
    sites = load_sites(cfg.path("sites"))
    stations = daily_series(monitors, cfg.min_hours)
    covs, daily = interpolate_sites(sites, stations, cfg.idw_power)
    cfg.out.mkdir(parents=True, exist_ok=True)
    daily_path = _write_csv(
        cfg.out / "daily_idw.csv", cfg, "interpolate", ["site_id", "date", "no2_ppb"],
        ([sid, d.isoformat(), _f(v)] for sid, series in daily.items() for d, v in sorted(series.items())),
    )
    cov_path = _write_csv(
        cfg.out / "period_covariates.csv", cfg, "interpolate", ["site_id", "period_start", "period_end", "u_ppb", "x_log"],
        ([c.site_id, c.period_start.isoformat(), c.period_end.isoformat(), _f(c.u), _f(c.x)] for c in covs.values()),
    )
    return [daily_path, cov_path]


def run_fit(cfg: RunConfig) -> list[Path]:
    sites = load_sites(cfg.path("sites"))
    split = _split(cfg, [s.site_id for s in sites])
    learning = [s for s in sites if split[s.site_id] == "learning"]
    exposures = _exposures(cfg) if cfg.traffic else None
    rows = design_rows(learning, _covariates(cfg), exposures, cfg.traffic)
    rings = cfg.ring_spec.boundaries if cfg.traffic else None
    scale = cfg.exposure_scale if cfg.traffic else None
    written = []
    if cfg.model == "linear":
        fit = fit_linear(rows, rings, scale)
    elif cfg.model == "longitudinal":
        fit = fit_longitudinal(rows, reml=cfg.reml, rings=rings, exposure_scale=scale)
    else:
        mcfg = MCMCConfig(seed=cfg.seed, **cfg.mcmc)
        fit = fit_spatial(rows, {s.site_id: s.location for s in learning}, mcfg, rings, scale)
        (cfg.out / "draws.csv").write_text(_meta_line(cfg, "fit") + fit.draws_csv(), encoding="utf-8")
        written.append(cfg.out / "draws.csv")
    payload = fit.to_dict()
    payload["traffic"] = cfg.traffic
    payload["learning_sites"] = len(learning)
    if cfg.traffic and fit.n_traffic >= 1:
        payload["vif"] = vif(rows)
    written.insert(0, _write_json(cfg.out / "fit.json", cfg, "fit", payload))
    return written


def run_predict(cfg: RunConfig) -> list[Path]:
    fit = load_fit(cfg)
    sites = load_sites(cfg.path("sites"))
    exposures = _exposures(cfg) if fit.n_traffic else None
    daily, periods = predict_periods(fit, sites, _daily_idw(cfg), exposures, cfg.mode, cfg.max_predict_draws)
    d_path = _write_csv(
        cfg.out / "daily_predictions.csv", cfg, "predict", ["site_id", "date", "no2_ppb"],
        ([r.site_id, r.date.isoformat(), _f(r.predicted)] for r in daily),
    )
    p_path = _write_csv(
        cfg.out / "period_predictions.csv", cfg, "predict", ["site_id", "period_start", "period_end", "p_ppb"],
        ([p.site_id, p.period_start.isoformat(), p.period_end.isoformat(), _f(p.p)] for p in periods),
    )
    return [d_path, p_path]


def run_validate(cfg: RunConfig) -> list[Path]:
    sites = load_sites(cfg.path("sites"))
    split = _split(cfg, [s.site_id for s in sites])
    preds = {
        (r["site_id"], dt.date.fromisoformat(r["period_start"]), dt.date.fromisoformat(r["period_end"])): float(r["p_ppb"])
        for r in _read_csv(cfg.out / "period_predictions.csv", ["site_id", "period_start", "period_end", "p_ppb"])
    }
    reports = {}
    for role in ("validation", "learning"):
        observed = {
            (s.site_id, o.period_start, o.period_end): o.value
            for s in sites if split[s.site_id] == role for o in s.observations
        }
        if not observed:
            reports[role] = None
            continue
        missing = [k for k in observed if k not in preds]
        if missing:
            raise InputError(f"no period prediction for {len(missing)} {role} observation(s), e.g. {missing[0]}")
        reports[role] = calibration(observed, {k: preds[k] for k in observed}).to_dict()

    fit = load_fit(cfg)
    payload = {"model": fit.kind, "traffic": cfg.traffic, "mode": cfg.mode, **reports}
    written = []
    effects = None
    if isinstance(fit, MixedFit):
        effects, source = fit.blups, "blup"
    elif isinstance(fit, SpatialPosterior):
        effects, source = fit.b0_mean, "posterior_mean"
    if effects is not None and len(effects) >= 2:
        locs = {s.site_id: s.location for s in sites}
        sv = semivariogram(effects, locs, cfg.bin_width_km, cfg.max_lag_km)
        payload["semivariogram"] = {"source": source, "bin_width_km": sv.bin_width, "max_lag_km": sv.max_lag, "sill": sv.sill()}
        written.append(_write_csv(
            cfg.out / "semivariogram.csv", cfg, "validate", ["lag_km", "semivariance", "pairs"],
            ([_f(c), _f(g), n] for c, g, n in sv.rows()),
        ))
    written.insert(0, _write_json(cfg.out / "validation.json", cfg, "validate", payload))
    return written


RUNNERS = {
    "exposure": run_exposure,
    "interpolate": run_interpolate,
    "fit": run_fit,
    "predict": run_predict,
    "validate": run_validate,
}


def run_stage(name: str, cfg: RunConfig) -> list[Path]:
    try:
        return RUNNERS[name](cfg)
    except StageError:
        raise
    except No2DailyError as exc:
        raise StageError(name, exc) from exc
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise StageError(name, NumericalError(str(exc))) from exc


def run_pipeline(cfg: RunConfig) -> list[Path]:
    """exposure -> interpolate -> fit -> predict -> validate."""
    written = []
    for name in STAGES:
        log.info("stage %s", name)
        written += run_stage(name, cfg)
    return written
