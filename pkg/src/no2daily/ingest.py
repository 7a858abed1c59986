"""Loading and writing of the three input datasets.

All coordinates are planar, pre-projected meters.  Files are UTF-8 CSV with a
mandatory header row; lines starting with ``#`` are metadata comments and are
ignored by the loaders.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import shapely.wkt
from shapely.errors import ShapelyError

from .errors import IngestError

MONITOR_HEADER = ["station_id", "x_m", "y_m", "timestamp_iso8601_hour", "no2_ppb"]
SITE_HEADER = ["site_id", "x_m", "y_m", "period_start", "period_end", "no2_ppb"]
ROAD_HEADER = ["segment_id", "adt", "wkt_linestring"]

Point = tuple[float, float]


@dataclass(frozen=True)
class Reading:
    timestamp: dt.datetime
    no2: float


@dataclass(frozen=True)
class MonitorStation:
    station_id: str
    location: Point
    readings: tuple[Reading, ...]


@dataclass(frozen=True)
class Observation:
    """A period-averaged measurement; both period ends are inclusive days."""

    period_start: dt.date
    period_end: dt.date
    value: float

    @property
    def days(self) -> list[dt.date]:
        n = (self.period_end - self.period_start).days + 1
        return [self.period_start + dt.timedelta(days=k) for k in range(n)]


@dataclass(frozen=True)
class Site:
    site_id: str
    location: Point
    observations: tuple[Observation, ...] = ()


@dataclass(frozen=True)
class RoadSegment:
    segment_id: str
    vertices: tuple[Point, ...]
    adt: float

    @property
    def length(self) -> float:
        return polyline_length(self.vertices)


def polyline_length(vertices: Sequence[Point]) -> float:
    return math.fsum(
        math.hypot(x1 - x0, y1 - y0)
        for (x0, y0), (x1, y1) in zip(vertices[:-1], vertices[1:])
    )


# -- parsing helpers ---------------------------------------------------------


def _rows(path, header: list[str]) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, fields)`` for every data row of ``path``."""
    path = Path(path)
    if not path.exists():
        raise IngestError("file does not exist", path=path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [(i + 1, line) for i, line in enumerate(fh)]
    data = [(n, line) for n, line in lines if line.strip() and not line.startswith("#")]
    if not data:
        raise IngestError("missing header row", path=path)
    head_line, head = data[0]
    got = next(csv.reader([head]))
    if [h.strip() for h in got] != header:
        raise IngestError(
            f"expected header {','.join(header)!r}, got {head.strip()!r}",
            path=path,
            line=head_line,
        )
    for n, line in data[1:]:
        fields = next(csv.reader([line]))
        if len(fields) != len(header):
            raise IngestError(
                f"expected {len(header)} fields, got {len(fields)}", path=path, line=n
            )
        yield n, [f.strip() for f in fields]


def _float(text: str, what: str, path, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"{what}: not a number: {text!r}", path=path, line=line) from None
    if not math.isfinite(value):
        raise IngestError(f"{what}: not finite: {text!r}", path=path, line=line)
    return value


def _positive(text: str, what: str, path, line: int) -> float:
    value = _float(text, what, path, line)
    if value <= 0:
        raise IngestError(f"{what} must be > 0, got {text}", path=path, line=line)
    return value


def _hour(text: str, path, line: int) -> dt.datetime:
    try:
        ts = dt.datetime.fromisoformat(text)
    except ValueError:
        raise IngestError(f"bad timestamp {text!r}", path=path, line=line) from None
    if ts.minute or ts.second or ts.microsecond:
        raise IngestError(f"timestamp {text!r} is not on the hour", path=path, line=line)
    return ts.replace(tzinfo=None)


def _date(text: str, path, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise IngestError(f"bad date {text!r} (want YYYY-MM-DD)", path=path, line=line) from None


def _located(groups: dict, key: str, loc: Point, path, line: int, kind: str):
    entry = groups.get(key)
    if entry is None:
        entry = groups[key] = (loc, [])
    elif entry[0] != loc:
        raise IngestError(
            f"{kind} {key!r} has inconsistent coordinates {loc} vs {entry[0]}",
            path=path,
            line=line,
        )
    return entry[1]


# -- loaders -----------------------------------------------------------------


def load_monitors(path) -> list[MonitorStation]:
    """Load hourly monitor readings.

    Stations are returned in order of first appearance with their readings
    sorted by time.  Duplicate ``(station, hour)`` rows, non-positive values
    and malformed rows raise :class:`IngestError` naming the line.
    """
    groups: dict[str, tuple[Point, list]] = {}
    seen: dict[tuple[str, dt.datetime], int] = {}
    for n, (sid, xs, ys, ts, val) in _rows(path, MONITOR_HEADER):
        if not sid:
            raise IngestError("empty station_id", path=path, line=n)
        loc = (_float(xs, "x_m", path, n), _float(ys, "y_m", path, n))
        stamp = _hour(ts, path, n)
        no2 = _positive(val, "no2_ppb", path, n)
        key = (sid, stamp)
        if key in seen:
            raise IngestError(
                f"duplicate reading for station {sid!r} at {ts} (first on line {seen[key]})",
                path=path,
                line=n,
            )
        seen[key] = n
        _located(groups, sid, loc, path, n, "station").append(Reading(stamp, no2))
    return [
        MonitorStation(sid, loc, tuple(sorted(readings, key=lambda r: r.timestamp)))
        for sid, (loc, readings) in groups.items()
    ]


def load_sites(path) -> list[Site]:
    """Load period-averaged site observations, one row per observation."""
    groups: dict[str, tuple[Point, list]] = {}
    for n, (sid, xs, ys, start, end, val) in _rows(path, SITE_HEADER):
        if not sid:
            raise IngestError("empty site_id", path=path, line=n)
        loc = (_float(xs, "x_m", path, n), _float(ys, "y_m", path, n))
        obs = Observation(_date(start, path, n), _date(end, path, n), _positive(val, "no2_ppb", path, n))
        if obs.period_start > obs.period_end:
            raise IngestError(f"period_start {start} after period_end {end}", path=path, line=n)
        _located(groups, sid, loc, path, n, "site").append((n, obs))

    sites = []
    for sid, (loc, items) in groups.items():
        items.sort(key=lambda item: (item[1].period_start, item[1].period_end))
        for (_, a), (n, b) in zip(items[:-1], items[1:]):
            if b.period_start <= a.period_end:
                raise IngestError(
                    f"site {sid!r}: period {b.period_start}..{b.period_end} overlaps "
                    f"{a.period_start}..{a.period_end}",
                    path=path,
                    line=n,
                )
        sites.append(Site(sid, loc, tuple(obs for _, obs in items)))
    return sites


def parse_linestring(text: str) -> tuple[Point, ...]:
    geom = shapely.wkt.loads(text)
    if geom.geom_type != "LineString":
        raise ValueError(f"expected LINESTRING, got {geom.geom_type}")
    return tuple((float(x), float(y)) for x, y, *_ in geom.coords)


def load_roads(path) -> list[RoadSegment]:
    """Load road segments with their average daily traffic.

    Zero-ADT segments are kept.  Polylines need at least two vertices and a
    positive length.
    """
    roads = []
    ids: dict[str, int] = {}
    for n, (sid, adt_text, wkt) in _rows(path, ROAD_HEADER):
        if sid in ids:
            raise IngestError(f"duplicate segment_id {sid!r} (first on line {ids[sid]})", path=path, line=n)
        ids[sid] = n
        adt = _float(adt_text, "adt", path, n)
        if adt < 0:
            raise IngestError(f"negative ADT {adt_text}", path=path, line=n)
        try:
            vertices = parse_linestring(wkt)
        except (ShapelyError, ValueError) as exc:
            raise IngestError(f"bad linestring: {exc}", path=path, line=n) from None
        if len(vertices) < 2:
            raise IngestError("polyline needs at least 2 vertices", path=path, line=n)
        if not all(math.isfinite(c) for v in vertices for c in v):
            raise IngestError("non-finite vertex coordinate", path=path, line=n)
        if polyline_length(vertices) <= 0:
            raise IngestError("polyline has zero length", path=path, line=n)
        roads.append(RoadSegment(sid, vertices, adt))
    return roads


# -- writers -----------------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def _write(path, header: list[str], rows: Iterable[list[str]], comment: str | None = None):
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_monitors(path, stations: Sequence[MonitorStation], comment: str | None = None):
    rows = (
        [s.station_id, _fmt(s.location[0]), _fmt(s.location[1]), r.timestamp.isoformat(timespec="minutes"), _fmt(r.no2)]
        for s in stations
        for r in s.readings
    )
    _write(path, MONITOR_HEADER, rows, comment)


def write_sites(path, sites: Sequence[Site], comment: str | None = None):
    rows = (
        [s.site_id, _fmt(s.location[0]), _fmt(s.location[1]), o.period_start.isoformat(), o.period_end.isoformat(), _fmt(o.value)]
        for s in sites
        for o in s.observations
    )
    _write(path, SITE_HEADER, rows, comment)


def format_linestring(vertices: Sequence[Point]) -> str:
    return "LINESTRING (" + ", ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in vertices) + ")"


def write_roads(path, roads: Sequence[RoadSegment], comment: str | None = None):
    rows = ([r.segment_id, _fmt(r.adt), format_linestring(r.vertices)] for r in roads)
    _write(path, ROAD_HEADER, rows, comment)
