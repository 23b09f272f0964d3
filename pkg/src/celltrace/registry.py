"""Central registry: test records, per-area positive counts, user tokens.

Persistence is a single append-only JSON-lines log; the in-memory indexes are
a pure fold over it, rebuilt on startup. Writes are acknowledged only after
the log line is flushed and fsynced, so any acknowledged write survives a
hard kill, and replaying the log always reproduces the live state.
"""

from __future__ import annotations

import json
import math
import os
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .phone import InvalidNumberError, canonical_number

AREA_CELL_DEGREES = 0.01

RESULT_PENDING = "pending"
RESULT_POSITIVE = "positive"
RESULT_NEGATIVE = "negative"

# Values within this of a cell boundary count as past it; guards against
# float noise in lat * 100 (e.g. 23.78 * 100 == 2377.9999999999995).
_CELL_EPSILON = 1e-9


class NotFoundError(KeyError):
    pass


class ConflictError(RuntimeError):
    pass


class ValidationError(ValueError):
    pass


def cell_index(value: float) -> int:
    return math.floor(value / AREA_CELL_DEGREES + _CELL_EPSILON)


def area_cell_id(lat: float, lon: float) -> str:
    """Grid cell identifier from truncated 0.01-degree coordinates."""
    return f"{cell_index(lat)}:{cell_index(lon)}"


@dataclass(frozen=True)
class AreaCount:
    area_cell: str
    lat_index: int
    lon_index: int
    positive_count: int

    @property
    def min_lat(self) -> float:
        return self.lat_index * AREA_CELL_DEGREES

    @property
    def min_lon(self) -> float:
        return self.lon_index * AREA_CELL_DEGREES


@dataclass
class TestRecord:
    record_id: str
    address: str
    numbers: tuple[str, ...]
    area_cell: str | None
    result: str
    recorded_at: int


class FixtureGeocoder:
    """Address-to-coordinates lookup backed by a fixed table."""

    def __init__(self, table: dict[str, tuple[float, float]]):
        self._table = dict(table)

    def __call__(self, address: str) -> tuple[float, float] | None:
        return self._table.get(address.strip().lower())


class RegistryStore:
    """Append-only-log-backed registry with serialized writes."""

    def __init__(
        self,
        data_dir: str | Path,
        geocoder: Callable[[str], tuple[float, float] | None] | None = None,
        clock: Callable[[], float] = time.time,
        token_factory: Callable[[], str] | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "registry.log"
        self._geocoder = geocoder
        self._clock = clock
        self._token_factory = token_factory or (lambda: secrets.token_hex(16))
        self._lock = threading.Lock()

        self.records: dict[str, TestRecord] = {}
        self.area_counts: dict[str, int] = {}
        self._request_ids: dict[str, str] = {}
        self._token_to_number: dict[str, str] = {}
        self._number_to_token: dict[str, str] = {}
        self.questionnaires: list[dict] = []
        self._sequence = 0

        self._replay()
        self._log_fh = open(self.log_path, "a", encoding="utf-8")

    # -- persistence --------------------------------------------------------

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    def _append(self, event: dict) -> None:
        """Durably append one event, then fold it into memory."""
        line = json.dumps(event, sort_keys=True)
        self._log_fh.write(line + "\n")
        self._log_fh.flush()
        os.fsync(self._log_fh.fileno())
        self._apply(event)

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "test_recorded":
            record = TestRecord(
                record_id=event["record_id"],
                address=event["address"],
                numbers=tuple(event["numbers"]),
                area_cell=event["area_cell"],
                result=RESULT_PENDING,
                recorded_at=event["recorded_at"],
            )
            self.records[record.record_id] = record
            if event.get("request_id"):
                self._request_ids[event["request_id"]] = record.record_id
            self._sequence = max(self._sequence, int(record.record_id.split("-")[1]))
        elif kind == "result_set":
            record = self.records[event["record_id"]]
            record.result = event["result"]
            if event["result"] == RESULT_POSITIVE and record.area_cell is not None:
                self.area_counts[record.area_cell] = (
                    self.area_counts.get(record.area_cell, 0) + 1
                )
        elif kind == "user_registered":
            number = event["number"]
            token = event["token"]
            old = self._number_to_token.get(number)
            if old is not None:
                self._token_to_number.pop(old, None)
            self._number_to_token[number] = token
            self._token_to_number[token] = number
        elif kind == "questionnaire_submitted":
            self.questionnaires.append(event)
        else:
            raise ValueError(f"unknown log event {kind!r}")

    def close(self) -> None:
        self._log_fh.close()

    # -- Phase I ------------------------------------------------------------

    def record_test(
        self,
        address: str,
        numbers: Sequence[str],
        request_id: str | None = None,
        lat: float | None = None,
        lon: float | None = None,
    ) -> str:
        if not numbers:
            raise ValidationError("at least one phone number is required")
        try:
            canonical = tuple(canonical_number(n) for n in numbers)
        except InvalidNumberError as exc:
            raise ValidationError(str(exc)) from exc
        if (lat is None) != (lon is None):
            raise ValidationError("lat and lon must be given together")
        with self._lock:
            if request_id and request_id in self._request_ids:
                return self._request_ids[request_id]
            if lat is None and self._geocoder is not None:
                located = self._geocoder(address)
                if located is not None:
                    lat, lon = located
            area_cell = None
            if lat is not None and lon is not None:
                if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                    raise ValidationError(f"coordinates out of range: ({lat}, {lon})")
                area_cell = area_cell_id(lat, lon)
            self._sequence += 1
            record_id = f"rec-{self._sequence:06d}"
            self._append(
                {
                    "event": "test_recorded",
                    "record_id": record_id,
                    "request_id": request_id,
                    "address": address,
                    "numbers": list(canonical),
                    "area_cell": area_cell,
                    "recorded_at": int(self._clock()),
                }
            )
            return record_id

    def report_positive(self, record_id: str) -> TestRecord:
        return self._resolve(record_id, RESULT_POSITIVE)

    def report_negative(self, record_id: str) -> TestRecord:
        return self._resolve(record_id, RESULT_NEGATIVE)

    def _resolve(self, record_id: str, result: str) -> TestRecord:
        with self._lock:
            record = self.records.get(record_id)
            if record is None:
                raise NotFoundError(f"no test record {record_id}")
            if record.result != RESULT_PENDING:
                raise ConflictError(
                    f"record {record_id} already resolved as {record.result}"
                )
            self._append(
                {
                    "event": "result_set",
                    "record_id": record_id,
                    "result": result,
                    "recorded_at": int(self._clock()),
                }
            )
            return record

    # -- area search ---------------------------------------------------------

    def area_counts_in(
        self,
        min_lat: float = -90.0,
        min_lon: float = -180.0,
        max_lat: float = 90.0,
        max_lon: float = 180.0,
    ) -> list[AreaCount]:
        if min_lat > max_lat or min_lon > max_lon:
            raise ValidationError("inverted bounding box")
        lat_lo, lat_hi = cell_index(min_lat), cell_index(max_lat)
        lon_lo, lon_hi = cell_index(min_lon), cell_index(max_lon)
        out: list[AreaCount] = []
        for cell, count in sorted(self.area_counts.items()):
            if count <= 0:
                continue
            lat_i, lon_i = (int(part) for part in cell.split(":"))
            if lat_lo <= lat_i <= lat_hi and lon_lo <= lon_i <= lon_hi:
                out.append(AreaCount(cell, lat_i, lon_i, count))
        return out

    def recount_areas(self) -> dict[str, int]:
        """Recompute area counts from the record set; must equal the live map."""
        counts: dict[str, int] = {}
        for record in self.records.values():
            if record.result == RESULT_POSITIVE and record.area_cell is not None:
                counts[record.area_cell] = counts.get(record.area_cell, 0) + 1
        return counts

    # -- users ----------------------------------------------------------------

    def register_user(self, number: str) -> str:
        try:
            canonical = canonical_number(number)
        except InvalidNumberError as exc:
            raise ValidationError(str(exc)) from exc
        with self._lock:
            token = self._token_factory()
            self._append(
                {
                    "event": "user_registered",
                    "number": canonical,
                    "token": token,
                    "recorded_at": int(self._clock()),
                }
            )
            return token

    def number_for_token(self, token: str) -> str | None:
        return self._token_to_number.get(token)

    def record_questionnaire(
        self, number: str, answers: dict[str, bool], recommendation: str,
        yes_count: int, rule_fired: str | None,
    ) -> None:
        with self._lock:
            self._append(
                {
                    "event": "questionnaire_submitted",
                    "number": number,
                    "answers": {k: bool(v) for k, v in sorted(answers.items())},
                    "recommendation": recommendation,
                    "yes_count": yes_count,
                    "rule_fired": rule_fired,
                    "recorded_at": int(self._clock()),
                }
            )

    # -- state equality (durability checks) -----------------------------------

    def snapshot(self) -> dict:
        """Canonical JSON-able view of the full registry state."""
        return {
            "records": {
                rid: {
                    "address": r.address,
                    "numbers": list(r.numbers),
                    "area_cell": r.area_cell,
                    "result": r.result,
                    "recorded_at": r.recorded_at,
                }
                for rid, r in sorted(self.records.items())
            },
            "area_counts": dict(sorted(self.area_counts.items())),
            "tokens": dict(sorted(self._number_to_token.items())),
            "questionnaires": self.questionnaires,
        }


def known_numbers(store: RegistryStore) -> set[str]:
    """Every subscriber number the registry has ever seen (for audit tests)."""
    numbers: set[str] = set()
    for record in store.records.values():
        numbers.update(record.numbers)
    numbers.update(store._number_to_token)
    return numbers
