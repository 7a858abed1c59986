import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from no2daily.errors import IngestError
from no2daily.ingest import (
    MonitorStation,
    Observation,
    Reading,
    RoadSegment,
    Site,
    load_monitors,
    load_roads,
    load_sites,
    write_monitors,
    write_roads,
    write_sites,
)

MON_HEAD = "station_id,x_m,y_m,timestamp_iso8601_hour,no2_ppb\n"
SITE_HEAD = "site_id,x_m,y_m,period_start,period_end,no2_ppb\n"
ROAD_HEAD = "segment_id,adt,wkt_linestring\n"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_one_station_one_day(tmp_path):
    rows = "".join(f"A,10,20,2006-05-01T{h:02d}:00,{5 + h}\n" for h in range(24))
    stations = load_monitors(_write(tmp_path, "m.csv", MON_HEAD + rows))
    assert len(stations) == 1
    assert stations[0].station_id == "A"
    assert stations[0].location == (10.0, 20.0)
    assert len(stations[0].readings) == 24
    assert stations[0].readings[3].no2 == 8.0


def test_duplicate_hour_names_line(tmp_path):
    rows = "A,0,0,2006-05-01T00:00,5\nA,0,0,2006-05-01T01:00,5\nA,0,0,2006-05-01T00:00,6\n"
    with pytest.raises(IngestError) as err:
        load_monitors(_write(tmp_path, "m.csv", MON_HEAD + rows))
    assert err.value.line == 4
    assert ":4:" in str(err.value)


def test_four_stations_two_days(tmp_path):
    layout = {"N": (0, 30000), "E": (30000, 0), "S": (0, -30000), "W": (-30000, 0)}
    rows = [
        f"{sid},{x},{y},2006-05-0{d}T{h:02d}:00,{10 + h % 5}\n"
        for sid, (x, y) in layout.items() for d in (1, 2) for h in range(6)
    ]
    stations = load_monitors(_write(tmp_path, "m.csv", MON_HEAD + "".join(rows)))
    assert [s.station_id for s in stations] == ["N", "E", "S", "W"]
    assert sum(len(s.readings) for s in stations) == 48


@pytest.mark.parametrize("bad", ["0", "-1.5", "nan", "abc"])
def test_nonpositive_or_bad_value_rejected(tmp_path, bad):
    with pytest.raises(IngestError):
        load_monitors(_write(tmp_path, "m.csv", MON_HEAD + f"A,0,0,2006-05-01T00:00,{bad}\n"))


def test_wrong_header_rejected(tmp_path):
    with pytest.raises(IngestError, match="header"):
        load_sites(_write(tmp_path, "s.csv", "id,x,y,a,b,c\n"))


def test_comment_lines_skipped(tmp_path):
    text = "# generated\n" + SITE_HEAD + "# note\nS1,0,0,2006-01-01,2006-01-28,12.5\n"
    sites = load_sites(_write(tmp_path, "s.csv", text))
    assert sites[0].observations[0].value == 12.5


def test_site_four_quarters(tmp_path):
    rows = "".join(
        f"S1,100,200,2006-{m:02d}-01,2006-{m:02d}-28,{10 + m}\n" for m in (1, 4, 7, 10)
    )
    sites = load_sites(_write(tmp_path, "s.csv", SITE_HEAD + rows))
    assert len(sites) == 1
    assert len(sites[0].observations) == 4
    assert sites[0].observations[0].days[-1] == dt.date(2006, 1, 28)


def test_overlapping_periods_rejected(tmp_path):
    rows = "S1,0,0,2006-01-01,2006-01-28,10\nS1,0,0,2006-01-20,2006-02-20,11\n"
    with pytest.raises(IngestError, match="overlaps"):
        load_sites(_write(tmp_path, "s.csv", SITE_HEAD + rows))


def test_inconsistent_site_coordinates(tmp_path):
    rows = "S1,0,0,2006-01-01,2006-01-28,10\nS1,5,0,2006-03-01,2006-03-28,11\n"
    with pytest.raises(IngestError, match="coordinates"):
        load_sites(_write(tmp_path, "s.csv", SITE_HEAD + rows))


def test_316_site_fixture(tmp_path):
    sites = [
        Site(f"S{i:03d}", (float(i * 100), float(i * 37 % 1000)), tuple(
            Observation(dt.date(2006, 1, 1) + dt.timedelta(days=91 * k + i % 30),
                        dt.date(2006, 1, 1) + dt.timedelta(days=91 * k + i % 30 + 27), 10.0 + k)
            for k in range(4)
        ))
        for i in range(316)
    ]
    write_sites(tmp_path / "s.csv", sites)
    loaded = load_sites(tmp_path / "s.csv")
    assert len(loaded) == 316
    assert sum(len(s.observations) for s in loaded) == 1264


def test_road_lengths(tmp_path):
    text = ROAD_HEAD + 'R1,11400,"LINESTRING (0 0, 0 740)"\nR2,500,"LINESTRING (0 0, 30 0, 30 40)"\n'
    roads = load_roads(_write(tmp_path, "r.csv", text))
    assert roads[0].length == 740.0
    assert roads[0].adt == 11400.0
    assert roads[1].length == 70.0


@pytest.mark.parametrize("wkt", ["LINESTRING (0 0)", "POINT (0 0)", "LINESTRING (1 1, 1 1)", "garbage"])
def test_bad_linestring(tmp_path, wkt):
    with pytest.raises(IngestError) as err:
        load_roads(_write(tmp_path, "r.csv", ROAD_HEAD + f'R1,10,"{wkt}"\n'))
    assert err.value.line == 2


def test_zero_adt_kept_negative_rejected(tmp_path):
    roads = load_roads(_write(tmp_path, "r.csv", ROAD_HEAD + 'R1,0,"LINESTRING (0 0, 1 0)"\n'))
    assert roads[0].adt == 0.0
    with pytest.raises(IngestError):
        load_roads(_write(tmp_path, "r2.csv", ROAD_HEAD + 'R1,-1,"LINESTRING (0 0, 1 0)"\n'))


def test_error_leaves_nothing_loaded(tmp_path):
    text = SITE_HEAD + "S1,0,0,2006-01-01,2006-01-28,10\nS2,0,0,2006-01-01,2006-01-28,-3\n"
    result = None
    with pytest.raises(IngestError):
        result = load_sites(_write(tmp_path, "s.csv", text))
    assert result is None


coords = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-3, 1e4, allow_nan=False, allow_infinity=False)


@st.composite
def datasets(draw):
    n_sites = draw(st.integers(1, 5))
    sites = []
    for i in range(n_sites):
        starts = sorted(draw(st.sets(st.integers(0, 20), min_size=1, max_size=4)))
        obs = tuple(
            Observation(dt.date(2006, 1, 1) + dt.timedelta(days=30 * s),
                        dt.date(2006, 1, 1) + dt.timedelta(days=30 * s + draw(st.integers(0, 28))), draw(positive))
            for s in starts
        )
        sites.append(Site(f"S{i}", (draw(coords), draw(coords)), obs))
    hours = draw(st.sets(st.integers(0, 200), min_size=1, max_size=10))
    start = dt.datetime(2006, 5, 1)
    monitors = [MonitorStation("M1", (draw(coords), draw(coords)), tuple(
        Reading(start + dt.timedelta(hours=h), draw(positive)) for h in sorted(hours)
    ))]
    roads = []
    for j in range(draw(st.integers(1, 4))):
        x0, y0 = draw(coords), draw(coords)
        roads.append(RoadSegment(f"R{j}", ((x0, y0), (x0 + draw(positive), y0 - draw(positive))), draw(st.floats(0, 2e5))))
    return sites, monitors, roads


@settings(max_examples=40, deadline=None)
@given(datasets())
def test_round_trip(tmp_path_factory, data):
    sites, monitors, roads = data
    d = tmp_path_factory.mktemp("rt")
    write_sites(d / "s.csv", sites, comment="round trip")
    write_monitors(d / "m.csv", monitors)
    write_roads(d / "r.csv", roads)
    assert load_sites(d / "s.csv") == sites
    assert load_monitors(d / "m.csv") == monitors
    assert load_roads(d / "r.csv") == roads
