from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from celltrace.geo import GeoCoordinate, PlanarPoint
from celltrace.opnet import Deployment, OperatorNode
from celltrace.tracing import LocationSample, trajectories_from_samples

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN_FIXTURE = FIXTURES / "three_operators"


@pytest.fixture
def golden_fixture_dir() -> Path:
    return GOLDEN_FIXTURE


def make_planar_samples(
    rng: np.random.Generator,
    n_subscribers: int,
    max_samples_each: int,
    spread: float,
    time_span: float,
) -> list[LocationSample]:
    """Random planar samples clustered tightly enough that contacts happen."""
    samples: list[LocationSample] = []
    for i in range(n_subscribers):
        number = f"+99900{i:05d}0{rng.integers(10, 99)}"
        count = int(rng.integers(1, max_samples_each + 1))
        times = sorted(rng.uniform(0, time_span, count).tolist())
        for j, ts in enumerate(times):
            # nudge duplicates apart; trajectories need strictly increasing times
            ts = ts + j * 1e-6
            samples.append(
                LocationSample(
                    number,
                    ts,
                    PlanarPoint(
                        float(rng.uniform(-spread, spread)),
                        float(rng.uniform(-spread, spread)),
                    ),
                )
            )
    return samples


def make_geo_samples(
    rng: np.random.Generator,
    n_subscribers: int,
    max_samples_each: int,
    spread_m: float,
    time_span: float,
    base_lat: float = 23.78,
    base_lon: float = 90.40,
) -> list[LocationSample]:
    deg = spread_m / 111_194.92664455873
    samples: list[LocationSample] = []
    for i in range(n_subscribers):
        number = f"+88017{i:06d}{rng.integers(10, 99)}"
        count = int(rng.integers(1, max_samples_each + 1))
        times = sorted(rng.uniform(0, time_span, count).tolist())
        for j, ts in enumerate(times):
            ts = ts + j * 1e-6
            samples.append(
                LocationSample(
                    number,
                    ts,
                    GeoCoordinate(
                        base_lat + float(rng.uniform(-deg, deg)),
                        base_lon + float(rng.uniform(-deg, deg)),
                    ),
                )
            )
    return samples


def random_deployment(rng: np.random.Generator) -> tuple[Deployment, list[str]]:
    """A random multi-operator deployment plus a set of infected numbers."""
    n_operators = int(rng.integers(2, 5))
    samples = make_geo_samples(
        rng,
        n_subscribers=int(rng.integers(6, 30)),
        max_samples_each=6,
        spread_m=float(rng.uniform(3.0, 12.0)),
        time_span=3000.0,
    )
    trajectories = trajectories_from_samples(samples)
    numbers = sorted(trajectories)
    operators: list[OperatorNode] = [
        OperatorNode(f"op{k}", {}) for k in range(n_operators)
    ]
    directory: dict[str, str] = {}
    for number in numbers:
        k = int(rng.integers(0, n_operators))
        operators[k].subscribers[number] = trajectories[number]
        directory[number] = operators[k].operator_id
    n_infected = max(1, int(rng.integers(1, max(2, len(numbers) // 4) + 1)))
    infected = list(rng.choice(numbers, size=min(n_infected, len(numbers)),
                               replace=False))
    reference_time = max(s.timestamp for s in samples)
    deployment = Deployment(
        operators=operators,
        directory=directory,
        infected_numbers=[str(n) for n in infected],
        reference_time=reference_time,
    )
    return deployment, deployment.infected_numbers
