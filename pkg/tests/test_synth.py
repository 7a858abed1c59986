import json
import math

import numpy as np
import pytest

from no2daily.ingest import load_monitors, load_roads, load_sites
from no2daily.synth import PRESETS, Scenario, draw_effects, generate, preset


@pytest.fixture(scope="module")
def table3(tmp_path_factory):
    data = generate(preset("table3", seed=4))
    out = tmp_path_factory.mktemp("synth")
    data.write(out)
    return data, out


def _residuals(data):
    sc = data.scenario
    res, site_of = [], []
    for s in data.sites:
        traffic = float(np.dot(sc.gamma, data.exposures[s.site_id].w))
        for o in s.observations:
            x = data.covariates[(s.site_id, o.period_start, o.period_end)].x
            res.append(math.log(o.value) - (sc.beta0 + data.effects[s.site_id] + sc.beta1 * x + traffic))
            site_of.append(s.site_id)
    return np.array(res), site_of


def test_presets_hold_table_values():
    assert PRESETS["table2"]["gamma"] == (0.1529,)
    assert PRESETS["table3"]["phi"] == 12.3184
    sc = preset("table2-multi")
    assert sc.rings == (0.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0) and len(sc.gamma) == 5
    with pytest.raises(ValueError):
        preset("nope")
    with pytest.raises(ValueError):
        Scenario(gamma=(0.1, 0.2))


def test_shape_and_split(table3):
    data, _ = table3
    assert len(data.sites) == 316
    assert sum(len(s.observations) for s in data.sites) == 1264
    assert len(data.learning) == 266 and len(data.validation) == 50
    assert len(data.monitors) == 4


def test_written_files_pass_ingest(table3):
    data, out = table3
    assert load_sites(out / "sites.csv") == data.sites
    assert load_monitors(out / "monitors.csv") == data.monitors
    assert load_roads(out / "roads.csv") == data.roads
    truth = json.loads((out / "truth.json").read_text())
    assert truth["parameters"]["phi"] == 12.3184
    config = json.loads((out / "config.json").read_text())
    assert config["model"] == "spatial" and config["split"] == "split.csv"


def test_same_seed_byte_identical(table3, tmp_path):
    _, out = table3
    generate(preset("table3", seed=4)).write(tmp_path)
    for name in ("monitors.csv", "sites.csv", "roads.csv", "split.csv", "truth.json", "config.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_different_seed_differs(table3):
    data, _ = table3
    other = generate(preset("table3", seed=5))
    assert other.sites[0].location != data.sites[0].location


def test_noise_mean_zero(table3):
    data, _ = table3
    res, _ = _residuals(data)
    assert abs(res.mean()) < 3 * math.sqrt(data.scenario.sigma_y2) / math.sqrt(len(res))


def test_zero_site_variance():
    # tiny period noise so the spread of site means is all intercept variance
    data = generate(preset("table2", seed=1, sigma_b2=0.0, sigma_y2=1e-6))
    assert all(v == 0.0 for v in data.effects.values())
    res, site_of = _residuals(data)
    ids = sorted(set(site_of))
    idx = np.array([ids.index(s) for s in site_of])
    means = np.bincount(idx, weights=res) / np.bincount(idx)
    assert means.var(ddof=1) < 1e-3


def test_effect_covariance_monte_carlo():
    rng = np.random.default_rng(0)
    xy = np.array([[0.0, 0.0], [4000.0, 0.0], [0.0, 15000.0], [30000.0, 30000.0]])
    sb2, phi, n = 0.0748, 12.3184, 500
    draws = np.array([draw_effects(xy, sb2, phi, rng) for _ in range(n)])
    D = np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1)) / 1000
    S = sb2 * np.exp(-D / phi)
    emp = draws.T @ draws / n  # known zero mean
    se = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S**2) / n)
    assert np.all(np.abs(emp - S) < 3 * se)
