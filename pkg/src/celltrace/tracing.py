"""Spatiotemporal contact join over subscriber trajectories.

Two subscribers are in contact when they have location samples in the same
time bucket within the contact distance. The engine supports two coordinate
modes that never mix: "planar" (scaled units on the simulation plane) and
"geo" (degrees, distances in meters via the great-circle formula).

The indexed join and the exhaustive join share the same distance primitives,
so their event sets (including stored distances) agree bit for bit; only the
candidate-generation strategy differs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geo import (
    EARTH_RADIUS_M,
    METERS_PER_DEGREE,
    GeoCoordinate,
    PlanarPoint,
    TimeBucket,
    euclidean_distance,
    haversine_distance,
    time_bucket,
)
from .phone import canonical_number

Position = PlanarPoint | GeoCoordinate

LOOKBACK_SECONDS = 7 * 86_400
DEFAULT_CONTACT_DISTANCE_M = 2.0
DEFAULT_MULTIPLICITY_THRESHOLD = 2


def position_mode(position: Position) -> str:
    return "planar" if isinstance(position, PlanarPoint) else "geo"


def position_distance(a: Position, b: Position) -> float:
    """Distance between two positions of the same mode; mixing modes is an error."""
    if isinstance(a, PlanarPoint) and isinstance(b, PlanarPoint):
        return euclidean_distance(a, b)
    if isinstance(a, GeoCoordinate) and isinstance(b, GeoCoordinate):
        return haversine_distance(a, b)
    raise ValueError(
        f"coordinate mode mismatch: {position_mode(a)} vs {position_mode(b)}"
    )


@dataclass(frozen=True)
class LocationSample:
    subscriber: str
    timestamp: float
    position: Position

    @property
    def mode(self) -> str:
        return position_mode(self.position)


@dataclass
class Trajectory:
    """Time-ordered samples of one subscriber within the lookback window."""

    subscriber: str
    samples: list[LocationSample]

    def __post_init__(self) -> None:
        modes = {s.mode for s in self.samples}
        if len(modes) > 1:
            raise ValueError(f"trajectory mixes coordinate modes: {sorted(modes)}")
        for s in self.samples:
            if s.subscriber != self.subscriber:
                raise ValueError(
                    f"sample subscriber {s.subscriber} inside trajectory of {self.subscriber}"
                )
        for prev, cur in zip(self.samples, self.samples[1:]):
            if cur.timestamp <= prev.timestamp:
                raise ValueError(
                    f"samples of {self.subscriber} not strictly time-ordered "
                    f"at t={cur.timestamp}"
                )

    @property
    def mode(self) -> str | None:
        return self.samples[0].mode if self.samples else None


@dataclass(frozen=True)
class ContactEvent:
    """Minimum-distance co-location of one (infected, contact) pair in one bucket."""

    infected_number: str
    contact_number: str
    bucket: TimeBucket
    distance: float

    def sort_key(self) -> tuple[str, str, int]:
        return (self.infected_number, self.contact_number, self.bucket.index)


@dataclass(frozen=True)
class SuspectEntry:
    contact_number: str
    event_count: int
    distinct_infected: int
    first_seen: int
    last_seen: int

    def __post_init__(self) -> None:
        if self.event_count < self.distinct_infected or self.distinct_infected < 1:
            raise ValueError("event_count must be >= distinct_infected >= 1")
        if self.first_seen > self.last_seen:
            raise ValueError("first_seen after last_seen")


def _chord_xyz(c: GeoCoordinate) -> tuple[float, float, float]:
    """Earth-centered Cartesian embedding; chord length <= great-circle length."""
    lat = math.radians(c.lat)
    lon = math.radians(c.lon)
    return (
        EARTH_RADIUS_M * math.cos(lat) * math.cos(lon),
        EARTH_RADIUS_M * math.cos(lat) * math.sin(lon),
        EARTH_RADIUS_M * math.sin(lat),
    )


class SpatialIndex:
    """Samples keyed by (time bucket, grid cell) for radius-limited joins.

    Planar samples grid directly on their coordinates; geo samples grid on
    the 3-D chord embedding of the sphere, where a great-circle distance d
    always implies a chord of at most d, so scanning the adjacent cell block
    (3x3 planar, 3x3x3 geo) is complete for any query radius <= cell_size.
    """

    def __init__(self, cell_size: float, bucket_width: int):
        if cell_size <= 0:
            raise ValueError(f"cell size must be positive, got {cell_size}")
        if bucket_width <= 0:
            raise ValueError(f"bucket width must be positive, got {bucket_width}")
        self.cell_size = cell_size
        self.bucket_width = bucket_width
        self.mode: str | None = None
        self._cells: dict[tuple, list[LocationSample]] = {}
        self.sample_count = 0

    def _cell_of(self, position: Position) -> tuple[int, ...]:
        cs = self.cell_size
        if isinstance(position, PlanarPoint):
            return (math.floor(position.x / cs), math.floor(position.y / cs))
        x, y, z = _chord_xyz(position)
        return (math.floor(x / cs), math.floor(y / cs), math.floor(z / cs))

    def add(self, sample: LocationSample) -> None:
        if self.mode is None:
            self.mode = sample.mode
        elif sample.mode != self.mode:
            raise ValueError(f"cannot index {sample.mode} sample in {self.mode} index")
        bucket = time_bucket(sample.timestamp, self.bucket_width)
        key = (bucket.index, self._cell_of(sample.position))
        self._cells.setdefault(key, []).append(sample)
        self.sample_count += 1

    def _neighbor_cells(self, cell: tuple[int, ...]) -> Iterable[tuple[int, ...]]:
        if len(cell) == 2:
            cx, cy = cell
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    yield (cx + dx, cy + dy)
        else:
            cx, cy, cz = cell
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        yield (cx + dx, cy + dy, cz + dz)

    def query_radius(
        self, position: Position, bucket: TimeBucket, d: float
    ) -> list[tuple[LocationSample, float]]:
        """All indexed samples in the bucket within distance d of the position."""
        if d <= 0:
            raise ValueError(f"query distance must be positive, got {d}")
        if d > self.cell_size:
            raise ValueError(
                f"query distance {d} exceeds cell size {self.cell_size}; "
                "contacts could be missed"
            )
        if bucket.width != self.bucket_width:
            raise ValueError(
                f"bucket width {bucket.width} does not match index width {self.bucket_width}"
            )
        if self.mode is None:
            return []
        if position_mode(position) != self.mode:
            raise ValueError(
                f"coordinate mode mismatch: query is {position_mode(position)}, "
                f"index is {self.mode}"
            )
        hits: list[tuple[LocationSample, float]] = []
        for cell in self._neighbor_cells(self._cell_of(position)):
            for sample in self._cells.get((bucket.index, cell), ()):
                dist = position_distance(position, sample.position)
                if dist <= d:
                    hits.append((sample, dist))
        return hits


def build_spatial_index(
    samples: Iterable[LocationSample], cell_size: float, bucket_width: int
) -> SpatialIndex:
    index = SpatialIndex(cell_size=cell_size, bucket_width=bucket_width)
    for sample in samples:
        index.add(sample)
    return index


def _infected_numbers(infected_trajectories: Sequence[Trajectory]) -> set[str]:
    numbers = [t.subscriber for t in infected_trajectories]
    if len(set(numbers)) != len(numbers):
        raise ValueError("duplicate subscriber among infected trajectories")
    return set(numbers)


def find_contacts(
    infected_trajectories: Sequence[Trajectory],
    index: SpatialIndex,
    d: float,
    bucket_width: int,
) -> list[ContactEvent]:
    """Contact events between infected subscribers and everyone else in the index.

    One event per (infected, contact, bucket) triple, keeping the minimum
    distance across all qualifying sample pairs. Samples belonging to any
    infected subscriber are never reported as contacts.
    """
    if bucket_width != index.bucket_width:
        raise ValueError(
            f"bucket width {bucket_width} does not match index width {index.bucket_width}"
        )
    infected = _infected_numbers(infected_trajectories)
    best: dict[tuple[str, str, int], ContactEvent] = {}
    for trajectory in infected_trajectories:
        if index.mode is not None and trajectory.mode is not None and trajectory.mode != index.mode:
            raise ValueError(
                f"coordinate mode mismatch: trajectory is {trajectory.mode}, "
                f"index is {index.mode}"
            )
        for sample in trajectory.samples:
            bucket = time_bucket(sample.timestamp, bucket_width)
            for other, dist in index.query_radius(sample.position, bucket, d):
                if other.subscriber in infected:
                    continue
                key = (trajectory.subscriber, other.subscriber, bucket.index)
                cur = best.get(key)
                if cur is None or dist < cur.distance:
                    best[key] = ContactEvent(
                        infected_number=trajectory.subscriber,
                        contact_number=other.subscriber,
                        bucket=bucket,
                        distance=dist,
                    )
    return sorted(best.values(), key=ContactEvent.sort_key)


def brute_force_contacts(
    infected_trajectories: Sequence[Trajectory],
    all_samples: Iterable[LocationSample],
    d: float,
    bucket_width: int,
) -> list[ContactEvent]:
    """Reference join: exhaustive comparison of every (infected, other) sample pair."""
    infected = _infected_numbers(infected_trajectories)
    others = [s for s in all_samples if s.subscriber not in infected]
    best: dict[tuple[str, str, int], ContactEvent] = {}
    for trajectory in infected_trajectories:
        for sample in trajectory.samples:
            bucket = time_bucket(sample.timestamp, bucket_width)
            for other in others:
                if time_bucket(other.timestamp, bucket_width).index != bucket.index:
                    continue
                dist = position_distance(sample.position, other.position)
                if dist > d:
                    continue
                key = (trajectory.subscriber, other.subscriber, bucket.index)
                cur = best.get(key)
                if cur is None or dist < cur.distance:
                    best[key] = ContactEvent(
                        infected_number=trajectory.subscriber,
                        contact_number=other.subscriber,
                        bucket=bucket,
                        distance=dist,
                    )
    return sorted(best.values(), key=ContactEvent.sort_key)


def aggregate_suspects(
    events: Iterable[ContactEvent],
    multiplicity_threshold: int = DEFAULT_MULTIPLICITY_THRESHOLD,
) -> tuple[list[SuspectEntry], list[SuspectEntry]]:
    """Fold events into one entry per contact number.

    Returns (all entries, flagged subset), both sorted by contact number.
    An entry is flagged once its event count reaches the multiplicity
    threshold; timestamps are bucket start times. Input order is irrelevant.
    """
    if multiplicity_threshold < 1:
        raise ValueError(
            f"multiplicity threshold must be >= 1, got {multiplicity_threshold}"
        )
    grouped: dict[str, list[ContactEvent]] = {}
    for event in events:
        grouped.setdefault(event.contact_number, []).append(event)
    entries = [
        SuspectEntry(
            contact_number=number,
            event_count=len(evs),
            distinct_infected=len({e.infected_number for e in evs}),
            first_seen=min(e.bucket.start for e in evs),
            last_seen=max(e.bucket.start for e in evs),
        )
        for number, evs in sorted(grouped.items())
    ]
    flagged = [e for e in entries if e.event_count >= multiplicity_threshold]
    return entries, flagged


def inject_position_noise(
    trajectory: Trajectory, sigma: float, rng: np.random.Generator
) -> Trajectory:
    """Displace each sample by isotropic Gaussian noise, sigma per axis.

    In geo mode sigma is in meters (north/east displacements mapped through
    the spherical Earth model); in planar mode sigma is in the trajectory's
    own coordinate units. sigma = 0 returns the trajectory unchanged.
    """
    if sigma < 0:
        raise ValueError(f"noise sigma cannot be negative, got {sigma}")
    if sigma == 0 or not trajectory.samples:
        return trajectory
    n = len(trajectory.samples)
    dx = rng.normal(0.0, sigma, n)
    dy = rng.normal(0.0, sigma, n)
    samples: list[LocationSample] = []
    for i, s in enumerate(trajectory.samples):
        if isinstance(s.position, PlanarPoint):
            pos: Position = PlanarPoint(s.position.x + dx[i], s.position.y + dy[i])
        else:
            if abs(s.position.lat) > 89.9:
                raise ValueError("position noise is undefined within 0.1 deg of the poles")
            lat = s.position.lat + dy[i] / METERS_PER_DEGREE
            lon = s.position.lon + dx[i] / (
                METERS_PER_DEGREE * math.cos(math.radians(s.position.lat))
            )
            lat = min(90.0, max(-90.0, lat))
            lon = (lon + 180.0) % 360.0 - 180.0
            pos = GeoCoordinate(lat, lon)
        samples.append(LocationSample(s.subscriber, s.timestamp, pos))
    return Trajectory(subscriber=trajectory.subscriber, samples=samples)


@dataclass(frozen=True)
class RejectedLine:
    lineno: int
    reason: str


@dataclass
class SampleFile:
    """Result of reading a line-delimited sample file."""

    samples: list[LocationSample] = field(default_factory=list)
    rejected: list[RejectedLine] = field(default_factory=list)
    mode: str | None = None


def _parse_sample_obj(obj: object, expected_mode: str | None) -> LocationSample:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    try:
        subscriber = canonical_number(obj["subscriber"])
    except KeyError:
        raise ValueError("missing field: subscriber") from None
    try:
        timestamp = float(obj["timestamp"])
    except KeyError:
        raise ValueError("missing field: timestamp") from None
    except (TypeError, ValueError):
        raise ValueError(f"bad timestamp: {obj.get('timestamp')!r}") from None
    if not math.isfinite(timestamp):
        raise ValueError(f"bad timestamp: {timestamp!r}")

    has_geo = "lat" in obj and "lon" in obj
    has_planar = "x" in obj and "y" in obj
    if has_geo == has_planar:
        raise ValueError("record needs either lat/lon or x/y")
    mode = "geo" if has_geo else "planar"
    if expected_mode is not None and mode != expected_mode:
        raise ValueError(f"coordinate mode {mode} in a {expected_mode} file")
    try:
        if has_geo:
            position: Position = GeoCoordinate(float(obj["lat"]), float(obj["lon"]))
        else:
            position = PlanarPoint(float(obj["x"]), float(obj["y"]))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad coordinates: {exc}") from None
    return LocationSample(subscriber=subscriber, timestamp=timestamp, position=position)


def read_sample_file(path: str | Path) -> SampleFile:
    """Parse a line-delimited sample file, recording malformed lines by number.

    Within one file all records must share a coordinate mode (set by the first
    valid line) and each subscriber's timestamps must be unique.
    """
    result = SampleFile()
    seen: set[tuple[str, float]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                result.rejected.append(RejectedLine(lineno, f"invalid JSON: {exc.msg}"))
                continue
            try:
                sample = _parse_sample_obj(obj, result.mode)
            except ValueError as exc:
                result.rejected.append(RejectedLine(lineno, str(exc)))
                continue
            key = (sample.subscriber, sample.timestamp)
            if key in seen:
                result.rejected.append(
                    RejectedLine(lineno, f"duplicate timestamp for {sample.subscriber}")
                )
                continue
            seen.add(key)
            if result.mode is None:
                result.mode = sample.mode
            result.samples.append(sample)
    return result


def trajectories_from_samples(samples: Iterable[LocationSample]) -> dict[str, Trajectory]:
    """Group samples by subscriber into time-sorted trajectories."""
    grouped: dict[str, list[LocationSample]] = {}
    for sample in samples:
        grouped.setdefault(sample.subscriber, []).append(sample)
    return {
        number: Trajectory(number, sorted(subs, key=lambda s: s.timestamp))
        for number, subs in grouped.items()
    }


def clip_to_window(trajectory: Trajectory, start: float, end: float) -> tuple[Trajectory, int]:
    """Restrict a trajectory to [start, end]; returns it with the dropped count."""
    if start > end:
        raise ValueError(f"window start {start} after end {end}")
    kept = [s for s in trajectory.samples if start <= s.timestamp <= end]
    dropped = len(trajectory.samples) - len(kept)
    if dropped == 0:
        return trajectory, 0
    return Trajectory(trajectory.subscriber, kept), dropped
