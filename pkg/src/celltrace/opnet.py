"""Multi-operator tracing protocol over a deterministic in-process bus.

A central tracer holds the number-to-operator directory and drives one
workflow per confirmed positive: fetch the subscriber's recent trajectory
from the owning operator, broadcast the resulting zone to every operator,
collect matches, and fold them into the central suspect store. Operators
only ever see their own subscribers' data plus the zones of confirmed
positives; zone responses carry matched samples, never whole trajectories.

Delivery is round-robin across recipients in sorted node-id order and FIFO
per recipient, with timeouts counted in bus steps, so every run (and its
trace log) is bit-reproducible.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .geo import PlanarPoint, TimeBucket, time_bucket
from .phone import canonical_number
from .tracing import (
    DEFAULT_CONTACT_DISTANCE_M,
    DEFAULT_MULTIPLICITY_THRESHOLD,
    LOOKBACK_SECONDS,
    ContactEvent,
    LocationSample,
    Position,
    SuspectEntry,
    Trajectory,
    aggregate_suspects,
    build_spatial_index,
    clip_to_window,
    find_contacts,
    read_sample_file,
    trajectories_from_samples,
)

CENTRAL_ID = "central"
DEFAULT_TIMEOUT_STEPS = 1000

PHASES = (
    "requested",
    "mobility-received",
    "zones-broadcast",
    "responses-collected",
    "suspects-stored",
)


class UnknownSubscriberError(ValueError):
    pass


class DuplicateWorkflowError(ValueError):
    pass


@dataclass(frozen=True)
class MobilityRequest:
    workflow_id: int
    infected_number: str
    window: tuple[float, float]


@dataclass(frozen=True)
class MobilityResponse:
    workflow_id: int
    operator_id: str
    trajectory: Trajectory | None  # None = not a subscriber here
    dropped_samples: int = 0


@dataclass(frozen=True)
class ZoneQuery:
    workflow_id: int
    infected_number: str
    zone: tuple[tuple[TimeBucket, Position], ...]
    distance: float

    def __post_init__(self) -> None:
        if not self.zone:
            raise ValueError("zone query must carry at least one zone sample")


@dataclass(frozen=True)
class ZoneResponse:
    workflow_id: int
    operator_id: str
    matches: tuple[tuple[str, tuple[LocationSample, ...]], ...]


Message = MobilityRequest | MobilityResponse | ZoneQuery | ZoneResponse


def _position_obj(position: Position) -> dict:
    if isinstance(position, PlanarPoint):
        return {"x": position.x, "y": position.y}
    return {"lat": position.lat, "lon": position.lon}


def _sample_obj(sample: LocationSample) -> dict:
    obj = {"subscriber": sample.subscriber, "timestamp": sample.timestamp}
    obj.update(_position_obj(sample.position))
    return obj


def _message_obj(message: Message) -> dict:
    if isinstance(message, MobilityRequest):
        return {
            "type": "mobility_request",
            "workflow": message.workflow_id,
            "number": message.infected_number,
            "window": list(message.window),
        }
    if isinstance(message, MobilityResponse):
        return {
            "type": "mobility_response",
            "workflow": message.workflow_id,
            "operator": message.operator_id,
            "found": message.trajectory is not None,
            "samples": (
                [_sample_obj(s) for s in message.trajectory.samples]
                if message.trajectory is not None
                else []
            ),
            "dropped_samples": message.dropped_samples,
        }
    if isinstance(message, ZoneQuery):
        return {
            "type": "zone_query",
            "workflow": message.workflow_id,
            "number": message.infected_number,
            "distance": message.distance,
            "zone": [
                {"bucket": b.index, "width": b.width, **_position_obj(p)}
                for b, p in message.zone
            ],
        }
    return {
        "type": "zone_response",
        "workflow": message.workflow_id,
        "operator": message.operator_id,
        "matches": [
            {"number": number, "samples": [_sample_obj(s) for s in samples]}
            for number, samples in message.matches
        ],
    }


@dataclass(frozen=True)
class Envelope:
    sender: str
    recipient: str
    message: Message


class MessageBus:
    """FIFO per recipient; one message delivered per step, recipients visited
    round-robin in sorted id order. Idle steps advance the clock for timeouts."""

    def __init__(self) -> None:
        self._queues: dict[str, deque[Envelope]] = {}
        self.step = 0
        self.log: list[dict] = []

    def send(self, sender: str, recipient: str, message: Message) -> None:
        self._queues.setdefault(recipient, deque()).append(
            Envelope(sender, recipient, message)
        )

    def pending(self) -> int:
        return sum(len(q) for q in self._queues.values())

    def idle_step(self) -> None:
        self.step += 1

    def deliver_next(self, nodes: dict[str, "Node"]) -> bool:
        """Deliver one message; returns False when every queue is empty."""
        recipients = sorted(r for r, q in self._queues.items() if q)
        if not recipients:
            return False
        recipient = recipients[self.step % len(recipients)]
        envelope = self._queues[recipient].popleft()
        self.step += 1
        self.log.append(
            {
                "step": self.step,
                "from": envelope.sender,
                "to": envelope.recipient,
                **_message_obj(envelope.message),
            }
        )
        node = nodes.get(recipient)
        if node is not None:
            node.handle(envelope, self)
        return True

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.log:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


class Node:
    node_id: str

    def handle(self, envelope: Envelope, bus: MessageBus) -> None:
        raise NotImplementedError


class OperatorNode(Node):
    """One mobile operator: a directory of its own subscribers' trajectories."""

    def __init__(self, operator_id: str, subscribers: dict[str, Trajectory],
                 offline: bool = False):
        self.node_id = operator_id
        self.operator_id = operator_id
        self.subscribers = subscribers
        self.offline = offline

    def all_samples(self) -> list[LocationSample]:
        return [s for t in self.subscribers.values() for s in t.samples]

    def handle_mobility_request(self, request: MobilityRequest) -> MobilityResponse:
        trajectory = self.subscribers.get(request.infected_number)
        if trajectory is None:
            # Never answer for another operator's subscriber.
            return MobilityResponse(request.workflow_id, self.operator_id, None)
        start, end = request.window
        if end - start > LOOKBACK_SECONDS:
            raise ValueError("mobility window longer than the 7-day lookback")
        clipped, dropped = clip_to_window(trajectory, start, end)
        return MobilityResponse(request.workflow_id, self.operator_id, clipped, dropped)

    def handle_zone_query(self, query: ZoneQuery) -> ZoneResponse:
        widths = {bucket.width for bucket, _ in query.zone}
        if len(widths) != 1:
            raise ValueError("zone buckets must share one width")
        bucket_width = widths.pop()
        index = build_spatial_index(self.all_samples(), cell_size=query.distance,
                                    bucket_width=bucket_width)
        matched: dict[str, dict[float, LocationSample]] = {}
        for bucket, position in query.zone:
            for sample, _dist in index.query_radius(position, bucket, query.distance):
                if sample.subscriber == query.infected_number:
                    continue
                # One store never holds two samples of a subscriber at the same
                # timestamp, so the timestamp dedupes across zone entries.
                matched.setdefault(sample.subscriber, {})[sample.timestamp] = sample
        matches = tuple(
            (number, tuple(sorted(samples.values(), key=lambda s: s.timestamp)))
            for number, samples in sorted(matched.items())
        )
        return ZoneResponse(query.workflow_id, self.operator_id, matches)

    def handle(self, envelope: Envelope, bus: MessageBus) -> None:
        if self.offline:
            return
        message = envelope.message
        if isinstance(message, MobilityRequest):
            bus.send(self.node_id, envelope.sender, self.handle_mobility_request(message))
        elif isinstance(message, ZoneQuery):
            bus.send(self.node_id, envelope.sender, self.handle_zone_query(message))
        else:
            raise TypeError(f"operator cannot handle {type(message).__name__}")


@dataclass
class TraceWorkflowState:
    workflow_id: int
    infected_number: str
    phase: str = "requested"
    trajectory: Trajectory | None = None
    pending_operators: set[str] = field(default_factory=set)
    responses: dict[str, ZoneResponse] = field(default_factory=dict)
    broadcast_step: int | None = None
    unresponsive_operators: frozenset[str] = frozenset()

    @property
    def partial_coverage(self) -> bool:
        return bool(self.unresponsive_operators)

    def advance(self, phase: str) -> None:
        if PHASES.index(phase) <= PHASES.index(self.phase):
            raise ValueError(f"workflow phase cannot regress from {self.phase} to {phase}")
        self.phase = phase


class CentralTracer(Node):
    """Phase-II orchestrator plus the central suspect store."""

    node_id = CENTRAL_ID

    def __init__(
        self,
        directory: dict[str, str],
        operator_ids: Sequence[str],
        reference_time: float,
        distance: float = DEFAULT_CONTACT_DISTANCE_M,
        bucket_width: int = 300,
        multiplicity_threshold: int = DEFAULT_MULTIPLICITY_THRESHOLD,
        timeout_steps: int = DEFAULT_TIMEOUT_STEPS,
    ):
        self.directory = {canonical_number(k): v for k, v in directory.items()}
        self.operator_ids = sorted(operator_ids)
        self.reference_time = reference_time
        self.distance = distance
        self.bucket_width = bucket_width
        self.multiplicity_threshold = multiplicity_threshold
        self.timeout_steps = timeout_steps
        self.workflows: dict[int, TraceWorkflowState] = {}
        self.infected_registry: set[str] = set()
        self._events: dict[tuple[str, str, int], ContactEvent] = {}
        self._next_workflow = 1

    # -- submission --------------------------------------------------------

    def submit_positive(self, bus: MessageBus, number: str) -> int:
        number = canonical_number(number)
        owner = self.directory.get(number)
        if owner is None:
            raise UnknownSubscriberError(f"no operator owns subscriber {number}")
        for wf in self.workflows.values():
            if wf.infected_number == number and wf.phase != "suspects-stored":
                raise DuplicateWorkflowError(f"workflow already active for {number}")
        workflow_id = self._next_workflow
        self._next_workflow += 1
        self.infected_registry.add(number)
        self.workflows[workflow_id] = TraceWorkflowState(workflow_id, number)
        window = (self.reference_time - LOOKBACK_SECONDS, self.reference_time)
        bus.send(self.node_id, owner, MobilityRequest(workflow_id, number, window))
        return workflow_id

    # -- message handling ---------------------------------------------------

    def handle(self, envelope: Envelope, bus: MessageBus) -> None:
        message = envelope.message
        if isinstance(message, MobilityResponse):
            self._on_mobility(message, bus)
        elif isinstance(message, ZoneResponse):
            self._on_zone_response(message)
        else:
            raise TypeError(f"central cannot handle {type(message).__name__}")

    def _on_mobility(self, response: MobilityResponse, bus: MessageBus) -> None:
        wf = self.workflows[response.workflow_id]
        wf.advance("mobility-received")
        wf.trajectory = response.trajectory
        if response.trajectory is None or not response.trajectory.samples:
            # Nothing to query against; the workflow completes with no events.
            wf.advance("suspects-stored")
            return
        zone = tuple(
            (time_bucket(s.timestamp, self.bucket_width), s.position)
            for s in response.trajectory.samples
        )
        query = ZoneQuery(wf.workflow_id, wf.infected_number, zone, self.distance)
        for operator_id in self.operator_ids:
            bus.send(self.node_id, operator_id, query)
        wf.pending_operators = set(self.operator_ids)
        wf.broadcast_step = bus.step
        wf.advance("zones-broadcast")

    def _on_zone_response(self, response: ZoneResponse) -> None:
        wf = self.workflows[response.workflow_id]
        if wf.phase != "zones-broadcast":
            return  # response after timeout; coverage already recorded
        wf.responses[response.operator_id] = response
        wf.pending_operators.discard(response.operator_id)
        if not wf.pending_operators:
            self._finalize(wf)

    def check_timeouts(self, bus: MessageBus) -> None:
        for wf in self.workflows.values():
            if wf.phase != "zones-broadcast":
                continue
            assert wf.broadcast_step is not None
            if bus.step - wf.broadcast_step > self.timeout_steps:
                wf.unresponsive_operators = frozenset(wf.pending_operators)
                wf.pending_operators = set()
                self._finalize(wf)

    def _finalize(self, wf: TraceWorkflowState) -> None:
        wf.advance("responses-collected")
        assert wf.trajectory is not None
        matched: list[LocationSample] = []
        for operator_id in sorted(wf.responses):
            for number, samples in wf.responses[operator_id].matches:
                if number in self.infected_registry:
                    continue  # already a known positive, not a suspect
                matched.extend(samples)
        if matched:
            index = build_spatial_index(matched, cell_size=self.distance,
                                        bucket_width=self.bucket_width)
            events = find_contacts([wf.trajectory], index, self.distance,
                                   self.bucket_width)
            for event in events:
                key = (event.infected_number, event.contact_number, event.bucket.index)
                self._events[key] = event
        wf.advance("suspects-stored")

    # -- results ------------------------------------------------------------

    def active_workflows(self) -> list[TraceWorkflowState]:
        return [w for w in self.workflows.values() if w.phase != "suspects-stored"]

    def events(self) -> list[ContactEvent]:
        return sorted(self._events.values(), key=ContactEvent.sort_key)

    def suspect_store(self) -> tuple[list[SuspectEntry], list[SuspectEntry]]:
        return aggregate_suspects(self.events(), self.multiplicity_threshold)


def run_trace_round(
    central: CentralTracer,
    operators: Sequence[OperatorNode],
    bus: MessageBus,
) -> tuple[list[SuspectEntry], list[SuspectEntry]]:
    """Drive every in-flight workflow to completion and return the suspect store.

    The loop delivers pending messages in the bus's deterministic order and
    burns idle steps when queues are empty so that timeouts for unresponsive
    operators still fire.
    """
    nodes: dict[str, Node] = {central.node_id: central}
    for op in operators:
        nodes[op.node_id] = op
    while True:
        delivered = bus.deliver_next(nodes)
        central.check_timeouts(bus)
        if delivered:
            continue
        if central.active_workflows():
            bus.idle_step()
            continue
        break
    return central.suspect_store()


# -- fixtures ----------------------------------------------------------------


@dataclass
class Deployment:
    """Operators plus the shared directory, loaded from a fixture tree."""

    operators: list[OperatorNode]
    directory: dict[str, str]
    infected_numbers: list[str]
    reference_time: float
    ingest_warnings: dict[str, int] = field(default_factory=dict)

    def all_samples(self) -> list[LocationSample]:
        return [s for op in self.operators for s in op.all_samples()]

    def build_central(self, **kwargs) -> CentralTracer:
        return CentralTracer(
            directory=self.directory,
            operator_ids=[op.operator_id for op in self.operators],
            reference_time=self.reference_time,
            **kwargs,
        )


def load_deployment(root: str | Path) -> Deployment:
    """Load a fixture tree: one directory per operator with trajectories.jsonl,
    plus an infected.txt of confirmed-positive numbers at the top level."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"fixture directory not found: {root}")
    operators: list[OperatorNode] = []
    directory: dict[str, str] = {}
    max_ts: float | None = None
    warnings: dict[str, int] = {}
    for op_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        sample_file = op_dir / "trajectories.jsonl"
        if not sample_file.exists():
            raise FileNotFoundError(f"missing trajectory file: {sample_file}")
        parsed = read_sample_file(sample_file)
        if parsed.rejected:
            lines = ", ".join(str(r.lineno) for r in parsed.rejected[:10])
            raise ValueError(
                f"{sample_file}: {len(parsed.rejected)} malformed line(s) at {lines}"
            )
        trajectories = trajectories_from_samples(parsed.samples)
        for number in trajectories:
            if number in directory:
                raise ValueError(
                    f"subscriber {number} appears under both "
                    f"{directory[number]} and {op_dir.name}"
                )
            directory[number] = op_dir.name
        for sample in parsed.samples:
            max_ts = sample.timestamp if max_ts is None else max(max_ts, sample.timestamp)
        operators.append(OperatorNode(op_dir.name, trajectories))
        warnings[op_dir.name] = 0

    infected_path = root / "infected.txt"
    infected: list[str] = []
    if infected_path.exists():
        for line in infected_path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                infected.append(canonical_number(line))

    reference_time = max_ts if max_ts is not None else 0.0
    deployment = Deployment(operators, directory, infected, reference_time, warnings)
    # Count (but keep) samples older than the lookback window so operators can
    # report how much history a mobility request will drop.
    window_start = reference_time - LOOKBACK_SECONDS
    for op in deployment.operators:
        stale = sum(1 for s in op.all_samples() if s.timestamp < window_start)
        deployment.ingest_warnings[op.operator_id] = stale
    return deployment


def centralized_suspects(
    deployment: Deployment,
    infected_numbers: Iterable[str],
    distance: float = DEFAULT_CONTACT_DISTANCE_M,
    bucket_width: int = 300,
    multiplicity_threshold: int = DEFAULT_MULTIPLICITY_THRESHOLD,
) -> tuple[list[SuspectEntry], list[SuspectEntry]]:
    """Single-node reference: the trace engine over the union of operator data.

    Infected trajectories are clipped to the same 7-day window the protocol
    requests, so this is the oracle the distributed run must match exactly.
    """
    window = (deployment.reference_time - LOOKBACK_SECONDS, deployment.reference_time)
    by_number = trajectories_from_samples(deployment.all_samples())
    infected_set = sorted({canonical_number(n) for n in infected_numbers})
    infected_trajectories = []
    for number in infected_set:
        trajectory = by_number.get(number)
        if trajectory is None:
            continue
        clipped, _ = clip_to_window(trajectory, *window)
        if clipped.samples:
            infected_trajectories.append(clipped)
    if not infected_trajectories:
        return [], []
    # Known positives are never suspects, so they are not candidates either.
    candidates = [
        s for s in deployment.all_samples() if s.subscriber not in set(infected_set)
    ]
    index = build_spatial_index(candidates, cell_size=distance,
                                bucket_width=bucket_width)
    events = find_contacts(infected_trajectories, index, distance, bucket_width)
    return aggregate_suspects(events, multiplicity_threshold)


def write_suspect_csv(
    entries: Sequence[SuspectEntry],
    flagged: Sequence[SuspectEntry],
    path: str | Path,
) -> None:
    flagged_numbers = {e.contact_number for e in flagged}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("contact_number,event_count,distinct_infected,first_seen,last_seen,flagged\n")
        for e in entries:
            fh.write(
                f"{e.contact_number},{e.event_count},{e.distinct_infected},"
                f"{e.first_seen},{e.last_seen},{1 if e.contact_number in flagged_numbers else 0}\n"
            )
