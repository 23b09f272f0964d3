"""HTTP JSON API for the registry: Phase I intake and Phase III user queries.

Thin stdlib server over RegistryStore. Responses never carry phone numbers or
location samples: callers are identified by opaque tokens, area results are
0.01-degree aggregates, and status answers expose only event counts.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable
from urllib.parse import parse_qsl

from . import __version__
from .opnet import (
    Deployment,
    DuplicateWorkflowError,
    MessageBus,
    UnknownSubscriberError,
    run_trace_round,
)
from .registry import ConflictError, NotFoundError, RegistryStore, ValidationError
from .triage import Questionnaire, RuleSet, default_rules, questionnaire_schema

TOKEN_HEADER = "X-Auth-Token"
MAX_BODY_BYTES = 1 << 20


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class StaticSuspects:
    """Suspect lookups backed by a suspects.csv from a finished trace run."""

    def __init__(self, entries: dict[str, tuple[int, bool]] | None = None):
        self._entries = entries or {}
        self.skipped_submissions = 0

    @classmethod
    def from_csv(cls, path: str | Path) -> "StaticSuspects":
        entries: dict[str, tuple[int, bool]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            cols = {name: i for i, name in enumerate(header)}
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                entries[parts[cols["contact_number"]]] = (
                    int(parts[cols["event_count"]]),
                    parts[cols["flagged"]] == "1",
                )
        return cls(entries)

    def submit_positive(self, number: str) -> bool:
        self.skipped_submissions += 1
        return False

    def run(self) -> None:
        pass

    def lookup(self, number: str) -> tuple[int, bool] | None:
        return self._entries.get(number)


class OperatorNetGateway:
    """Live tracing: positives reported to the registry start trace workflows."""

    def __init__(self, deployment: Deployment, **central_kwargs):
        self.deployment = deployment
        self.central = deployment.build_central(**central_kwargs)
        self.bus = MessageBus()

    def submit_positive(self, number: str) -> bool:
        try:
            self.central.submit_positive(self.bus, number)
            return True
        except (UnknownSubscriberError, DuplicateWorkflowError):
            return False

    def run(self) -> None:
        run_trace_round(self.central, self.deployment.operators, self.bus)

    def lookup(self, number: str) -> tuple[int, bool] | None:
        entries, flagged = self.central.suspect_store()
        flagged_numbers = {e.contact_number for e in flagged}
        for entry in entries:
            if entry.contact_number == number:
                return entry.event_count, entry.contact_number in flagged_numbers
        return None


@dataclass
class ServiceApp:
    store: RegistryStore
    rules: RuleSet
    gateway: StaticSuspects | OperatorNetGateway

    def __post_init__(self) -> None:
        self._gateway_lock = threading.Lock()

    # -- handlers -------------------------------------------------------------

    def post_tests(self, body: dict) -> tuple[int, object]:
        numbers = body.get("numbers")
        if not isinstance(numbers, list) or not all(isinstance(n, str) for n in numbers):
            raise ApiError(400, "validation_error", "numbers must be a list of strings")
        lat, lon = body.get("lat"), body.get("lon")
        for name, value in (("lat", lat), ("lon", lon)):
            if value is not None and not isinstance(value, (int, float)):
                raise ApiError(400, "validation_error", f"{name} must be a number")
        record_id = self.store.record_test(
            address=str(body.get("address", "")),
            numbers=numbers,
            request_id=body.get("request_id"),
            lat=lat,
            lon=lon,
        )
        return 201, {"record_id": record_id}

    def post_positive(self, record_id: str) -> tuple[int, object]:
        record = self.store.report_positive(record_id)
        started = 0
        with self._gateway_lock:
            for number in record.numbers:
                if self.gateway.submit_positive(number):
                    started += 1
            if started:
                self.gateway.run()
        return 200, {
            "record_id": record_id,
            "result": "positive",
            "workflows_started": started,
        }

    def get_areas(self, query: dict[str, str]) -> tuple[int, object]:
        bbox = query.get("bbox")
        if bbox is None:
            cells = self.store.area_counts_in()
        else:
            parts = bbox.split(",")
            if len(parts) != 4:
                raise ApiError(400, "validation_error",
                               "bbox must be min_lat,min_lon,max_lat,max_lon")
            try:
                min_lat, min_lon, max_lat, max_lon = (float(p) for p in parts)
            except ValueError:
                raise ApiError(400, "validation_error", "bbox values must be numbers")
            cells = self.store.area_counts_in(min_lat, min_lon, max_lat, max_lon)
        return 200, [
            {
                "cell": c.area_cell,
                "min_lat": round(c.min_lat, 6),
                "min_lon": round(c.min_lon, 6),
                "size_deg": 0.01,
                "positive_count": c.positive_count,
            }
            for c in cells
        ]

    def post_users(self, body: dict) -> tuple[int, object]:
        number = body.get("number")
        if not isinstance(number, str):
            raise ApiError(400, "validation_error", "number must be a string")
        token = self.store.register_user(number)
        return 201, {"token": token}

    def _require_number(self, token: str | None) -> str:
        if not token:
            raise ApiError(401, "invalid_token", f"missing {TOKEN_HEADER} header")
        number = self.store.number_for_token(token)
        if number is None:
            raise ApiError(401, "invalid_token", "unknown or superseded token")
        return number

    def get_status(self, token: str | None) -> tuple[int, object]:
        number = self._require_number(token)
        with self._gateway_lock:
            found = self.gateway.lookup(number)
        if found is None:
            return 200, {"status": "not_listed"}
        event_count, flagged = found
        return 200, {"status": "listed", "event_count": event_count, "flagged": flagged}

    def get_schema(self) -> tuple[int, object]:
        return 200, {"questions": questionnaire_schema()}

    def post_questionnaire(self, token: str | None, body: dict) -> tuple[int, object]:
        number = self._require_number(token)
        answers = body.get("answers")
        if not isinstance(answers, dict):
            raise ApiError(400, "validation_error", "answers must be an object")
        for key, value in answers.items():
            if not isinstance(value, bool):
                raise ApiError(400, "validation_error", f"answer {key!r} must be a boolean")
        try:
            questionnaire = Questionnaire.from_mapping(answers)
        except ValueError as exc:
            raise ApiError(400, "validation_error", str(exc)) from exc
        result = self.rules.score(questionnaire)
        self.store.record_questionnaire(
            number, answers, result.recommendation, result.yes_count, result.rule_fired
        )
        return 200, {
            "recommendation": result.recommendation,
            "yes_count": result.yes_count,
            "rule_fired": result.rule_fired,
        }

    # -- dispatch ---------------------------------------------------------------

    def dispatch(
        self, method: str, path: str, query: dict[str, str],
        token: str | None, body: dict,
    ) -> tuple[int, object]:
        try:
            if method == "POST" and path == "/v1/tests":
                return self.post_tests(body)
            match = re.fullmatch(r"/v1/tests/([^/]+)/positive", path)
            if method == "POST" and match:
                return self.post_positive(match.group(1))
            if method == "GET" and path == "/v1/areas":
                return self.get_areas(query)
            if method == "POST" and path == "/v1/users":
                return self.post_users(body)
            if method == "GET" and path == "/v1/status":
                return self.get_status(token)
            if method == "GET" and path == "/v1/questionnaire/schema":
                return self.get_schema()
            if method == "POST" and path == "/v1/questionnaire":
                return self.post_questionnaire(token, body)
        except ApiError:
            raise
        except ValidationError as exc:
            raise ApiError(400, "validation_error", str(exc)) from exc
        except NotFoundError as exc:
            raise ApiError(404, "not_found", str(exc.args[0])) from exc
        except ConflictError as exc:
            raise ApiError(409, "conflict", str(exc)) from exc
        raise ApiError(404, "not_found", f"no route {method} {path}")


def _parse_query(raw: str) -> dict[str, str]:
    return dict(parse_qsl(raw, keep_blank_values=True))


def make_handler(app: ServiceApp) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        server_version = f"celltrace/{__version__}"
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args) -> None:  # quiet by default
            pass

        def _send(self, status: int, payload: object) -> None:
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def _handle(self, method: str) -> None:
            path, _, raw_query = self.path.partition("?")
            body: dict = {}
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY_BYTES:
                self._send(400, {"code": "validation_error", "message": "body too large"})
                return
            if length:
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    self._send(400, {"code": "validation_error",
                                     "message": "request body is not valid JSON"})
                    return
                if not isinstance(body, dict):
                    self._send(400, {"code": "validation_error",
                                     "message": "request body must be a JSON object"})
                    return
            try:
                status, payload = app.dispatch(
                    method, path, _parse_query(raw_query),
                    self.headers.get(TOKEN_HEADER), body,
                )
            except ApiError as exc:
                self._send(exc.status, {"code": exc.code, "message": exc.message})
                return
            self._send(status, payload)

        def do_GET(self) -> None:
            self._handle("GET")

        def do_POST(self) -> None:
            self._handle("POST")

        def do_OPTIONS(self) -> None:
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers",
                             f"Content-Type, {TOKEN_HEADER}")
            self.send_header("Content-Length", "0")
            self.end_headers()

    return Handler


def create_server(
    app: ServiceApp, host: str = "127.0.0.1", port: int = 0
) -> ThreadingHTTPServer:
    """Bind the service; port 0 picks a free ephemeral port."""
    server = ThreadingHTTPServer((host, port), make_handler(app))
    server.daemon_threads = True
    return server


def build_app(
    data_dir: str | Path,
    rules: RuleSet | None = None,
    gateway: StaticSuspects | OperatorNetGateway | None = None,
    geocoder: Callable[[str], tuple[float, float] | None] | None = None,
) -> ServiceApp:
    store = RegistryStore(data_dir, geocoder=geocoder)
    return ServiceApp(
        store=store,
        rules=rules or default_rules(),
        gateway=gateway or StaticSuspects(),
    )
