import json
import math
import shutil

import pytest

from no2daily import __version__
from no2daily.cli import main
from no2daily.config import load_config
from no2daily.errors import InputError

pytestmark = pytest.mark.slow

ARTIFACTS = [
    "exposure.csv", "exposure.meta.json", "daily_idw.csv", "period_covariates.csv", "fit.json", "draws.csv",
    "daily_predictions.csv", "period_predictions.csv", "validation.json", "semivariogram.csv",
]


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--preset", "table3", "--seed", "3", "--out", str(root / "data")]) == 0
    code = main(["run", "-c", str(root / "data" / "config.json"), "--model", "spatial", "--rings", "single"])
    assert code == 0
    return root / "data"


def test_run_writes_every_artifact(demo):
    for name in ARTIFACTS:
        assert (demo / "run" / name).exists(), name


def test_validation_report(demo):
    report = json.loads((demo / "run" / "validation.json").read_text())
    assert "predictive_r2" in report["validation"]
    assert math.isfinite(report["validation"]["rmse"])
    assert report["validation"]["n_sites"] == 50
    assert report["model"] == "spatial"
    assert report["semivariogram"]["source"] == "posterior_mean"


def test_metadata_headers(demo):
    cfg = load_config(demo / "config.json")
    for name in ARTIFACTS:
        path = demo / "run" / name
        if name.endswith(".csv"):
            first = path.read_text().splitlines()[0]
            assert first.startswith(f"# no2daily {__version__} ")
            assert f"seed={cfg.seed}" in first and f"config={cfg.digest()}" in first
        else:
            meta = json.loads(path.read_text())["meta"]
            assert meta["version"] == __version__ and meta["config_hash"] == cfg.digest()


def test_csv_schemas(demo):
    head = lambda name: (demo / "run" / name).read_text().splitlines()[1]  # noqa: E731
    assert head("exposure.csv") == "site_id,w_1"
    assert head("daily_idw.csv") == "site_id,date,no2_ppb"
    assert head("period_covariates.csv") == "site_id,period_start,period_end,u_ppb,x_log"
    assert head("daily_predictions.csv") == "site_id,date,no2_ppb"
    assert head("period_predictions.csv") == "site_id,period_start,period_end,p_ppb"
    assert head("semivariogram.csv") == "lag_km,semivariance,pairs"
    assert head("draws.csv").startswith("chain,draw,beta0,beta1,gamma,sigma_b2,sigma_y2,phi,b0[")


def test_rerun_stages_identical(demo, tmp_path):
    cfg = str(demo / "config.json")
    out = str(tmp_path / "again")
    before = {n: (demo / "run" / n).read_bytes() for n in ("exposure.csv", "period_covariates.csv", "fit.json")}
    for stage in ("exposure", "interpolate"):
        assert main([stage, "-c", cfg, "--out", out]) == 0
    assert main(["fit", "-c", cfg, "--out", out, "--model", "spatial", "--rings", "single"]) == 0
    for name, data in before.items():
        assert (tmp_path / "again" / name).read_bytes() == data, name


def test_longitudinal_flags_override(demo, tmp_path):
    cfg = str(demo / "config.json")
    out = tmp_path / "lon"
    assert main(["run", "-c", cfg, "--out", str(out), "--model", "longitudinal", "--rings", "multi"]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["model"] == "longitudinal"
    assert fit["rings"] == [0.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0]
    assert len(fit["vif"]) == 5
    assert not (out / "draws.csv").exists()
    first = (out / "fit.json").read_bytes()
    assert main(["fit", "-c", cfg, "--out", str(out), "--model", "longitudinal", "--rings", "multi"]) == 0
    assert (out / "fit.json").read_bytes() == first


def test_missing_config_exit_2(tmp_path, capsys):
    assert main(["fit", "-c", str(tmp_path / "none.json")]) == 2
    assert "[fit]" in capsys.readouterr().err


def test_missing_upstream_artifact(demo, tmp_path, capsys):
    assert main(["predict", "-c", str(demo / "config.json"), "--out", str(tmp_path / "empty")]) == 2
    err = capsys.readouterr().err
    assert "[predict]" in err and "fit.json" in err


def test_bad_choice_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--model", "quadratic"])
    assert exc.value.code == 2


def test_unknown_config_key(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"monitors": "m", "sites": "s", "roads": "r", "colour": 1}))
    with pytest.raises(InputError, match="colour"):
        load_config(tmp_path / "c.json")


def test_numerical_failure_exit_3(demo, tmp_path, capsys):
    # every road far outside the rings gives an all-zero traffic column
    data = tmp_path / "data"
    shutil.copytree(demo, data, ignore=shutil.ignore_patterns("run"))
    (data / "roads.csv").write_text('segment_id,adt,wkt_linestring\nR1,100,"LINESTRING (9e9 9e9, 9e9 9.0001e9)"\n')
    cfg = str(data / "config.json")
    assert main(["exposure", "-c", cfg]) == 0
    assert main(["interpolate", "-c", cfg]) == 0
    assert main(["fit", "-c", cfg, "--model", "longitudinal"]) == 3
    err = capsys.readouterr().err
    assert "[fit]" in err and "rank" in err
