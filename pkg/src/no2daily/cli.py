"""Command-line interface.

``no2daily synth --preset table3 --out demo`` writes a synthetic dataset and a
``config.json``; ``no2daily run -c demo/config.json`` then runs every stage.
Flags override the config file.  Exit codes: 0 success, 2 input error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import MODELS, load_config
from .errors import InputError, NumericalError
from .stages import StageError, run_pipeline, run_stage

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", default="config.json", help="run config (JSON); default ./config.json")
    p.add_argument("--out", dest="out_dir", help="artifact directory")
    p.add_argument("--seed", type=int)


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--rings", help="single, multi or comma-separated boundaries in m")
    p.add_argument("--reml", action="store_true", default=None, help="REML for the longitudinal model")
    p.add_argument("--no-traffic", dest="traffic", action="store_false", default=None, help="drop traffic covariates")
    p.add_argument("--iters", type=int, help="MCMC iterations per chain (including burn-in)")
    p.add_argument("--burnin", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--thin", type=int)


def _add_predict(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("marginal", "conditional"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="no2daily", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known truth")
    p.add_argument("--preset", default="table3", help="table2, table2-multi or table3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("exposure", help="ring traffic exposure per site")
    _add_common(p)
    p.add_argument("--rings")
    p = sub.add_parser("interpolate", help="daily IDW values and period covariates")
    _add_common(p)
    p = sub.add_parser("fit", help="fit a model on the learning sites")
    _add_common(p)
    _add_model(p)
    p = sub.add_parser("predict", help="daily and period predictions for all sites")
    _add_common(p)
    _add_predict(p)
    p.add_argument("--rings")
    p = sub.add_parser("validate", help="calibration on held-out sites and semivariogram")
    _add_common(p)
    _add_predict(p)
    p.add_argument("--rings")
    p = sub.add_parser("run", help="exposure -> interpolate -> fit -> predict -> validate")
    _add_common(p)
    _add_model(p)
    _add_predict(p)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("out_dir", "seed", "model", "rings", "reml", "traffic", "mode")
    out = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    mcmc = {k: getattr(args, k) for k in ("iters", "burnin", "chains", "thin") if getattr(args, k, None) is not None}
    if mcmc:
        out["mcmc"] = mcmc
    return out


def _synth(args) -> None:
    from .synth import generate, preset

    data = generate(preset(args.preset, seed=args.seed))
    for path in data.write(args.out).values():
        print(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        if stage == "synth":
            _synth(args)
            return EXIT_OK
        cfg = load_config(args.config, **_overrides(args))
        written = run_pipeline(cfg) if stage == "run" else run_stage(stage, cfg)
        for path in written:
            print(path)
        return EXIT_OK
    except StageError as exc:
        print(f"no2daily: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc.error, NumericalError) else EXIT_INPUT
    except (InputError, ValueError, OSError) as exc:
        print(f"no2daily: error: [{stage}] {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, ArithmeticError) as exc:
        print(f"no2daily: error: [{stage}] numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
