"""Run configuration: a JSON key-value file, overridable from the command line.

Schema (all keys optional except the three input paths)::

    monitors, sites, roads   input CSV paths, relative to the config file
    split                    optional CSV ``site_id,role`` (learning|validation)
    n_validation             sites held out when no split file is given (50)
    rings                    "single", "multi" or a list of boundaries in m
    target_len               subdivision length in m (50)
    exposure_scale           divisor applied to ring exposures (1e6)
    idw_power                inverse-distance power (1)
    min_hours                hourly readings needed for a daily mean (18)
    model                    "linear" | "longitudinal" | "spatial"
    traffic                  include traffic covariates (true)
    reml                     REML instead of ML for the longitudinal model
    mode                     "marginal" | "conditional" site-effect prediction
    mcmc                     {iters, burnin, chains, thin, prior_shape, ...}
    max_predict_draws        posterior draws used for kriging (1000)
    bin_width_km, max_lag_km semivariogram binning (2, half max distance)
    seed                     master seed (0)
    out_dir                  artifact directory, relative to the config file
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError
from .traffic import RingSpec

MODELS = ("linear", "longitudinal", "spatial")

DEFAULT_MCMC = {"iters": 10_000, "burnin": 5_000, "chains": 2, "thin": 10}


@dataclass
class RunConfig:
    monitors: str
    sites: str
    roads: str
    split: str | None = None
    n_validation: int = 50
    rings: object = "single"
    target_len: float = 50.0
    exposure_scale: float = 1e6
    idw_power: float = 1.0
    min_hours: int = 18
    model: str = "longitudinal"
    traffic: bool = True
    reml: bool = False
    mode: str = "conditional"
    mcmc: dict = field(default_factory=dict)
    max_predict_draws: int = 1000
    bin_width_km: float = 2.0
    max_lag_km: float | None = None
    seed: int = 0
    out_dir: str = "out"
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.model not in MODELS:
            raise InputError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.mode not in ("marginal", "conditional"):
            raise InputError(f"mode must be marginal or conditional, got {self.mode!r}")
        try:
            self.ring_spec = RingSpec.parse(self.rings)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad rings: {exc}") from None
        self.mcmc = {**DEFAULT_MCMC, **(self.mcmc or {})}

    def path(self, name: str) -> Path:
        value = getattr(self, name)
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out(self) -> Path:
        return self.path("out_dir")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "base_dir"}
        d["rings"] = list(self.ring_spec.boundaries)
        return d

    def digest(self) -> str:
        # the output location does not affect results
        d = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}: config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)} - {"base_dir"}
    unknown = set(raw) - known
    if unknown:
        raise InputError(f"{path}: unknown config key(s): {', '.join(sorted(unknown))}")
    mcmc = {**raw.get("mcmc", {}), **overrides.pop("mcmc", {})}
    merged = {**raw, **{k: v for k, v in overrides.items() if v is not None}, "mcmc": mcmc}
    missing = [k for k in ("monitors", "sites", "roads") if k not in merged]
    if missing:
        raise InputError(f"{path}: missing required key(s): {', '.join(missing)}")
    return RunConfig(**merged, base_dir=str(path.parent))
