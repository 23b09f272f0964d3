"""Disk-population contact experiment.

Synthesizes phone-user populations on the unit disk with a Poisson point
process, marks a fraction infected, counts how many non-infected users fall
within a contact radius of at least one infected user, and compares an
any-phone population against a smartphone-only population trial by trial.

Seeding discipline: every trial draws its two populations from independent
sub-streams derived as ``default_rng([seed, trial_index, role])`` with role
0 for the any-phone population and 1 for the smartphone population. Trials
are therefore reproducible individually and order-independent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geo import PlanarPoint

ROLE_ANY = 0
ROLE_SMART = 1

_ROLE_NAMES = {ROLE_ANY: "all", ROLE_SMART: "smart"}


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one comparison experiment."""

    density_all: float = 100.0
    density_smart: float = 58.0
    infection_rate: float = 0.18
    contact_radius: float = 0.03
    region_radius: float = 1.0
    trials: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if not (self.density_all >= self.density_smart >= 0.0):
            raise ValueError(
                f"need density_all >= density_smart >= 0, got "
                f"{self.density_all} / {self.density_smart}"
            )
        if not 0.0 <= self.infection_rate <= 1.0:
            raise ValueError(f"infection rate {self.infection_rate} outside [0, 1]")
        if self.contact_radius <= 0.0:
            raise ValueError(f"contact radius must be positive, got {self.contact_radius}")
        if self.region_radius <= 0.0:
            raise ValueError(f"region radius must be positive, got {self.region_radius}")
        if self.trials < 1:
            raise ValueError(f"need at least one trial, got {self.trials}")

    def rng_for(self, trial_index: int, role: int) -> np.random.Generator:
        """Independent sub-stream for one (trial, population-role) pair."""
        return np.random.default_rng([self.seed % 2**64, trial_index, role])


@dataclass
class Population:
    """A sampled point set plus the indices marked infected."""

    points: list[PlanarPoint]
    infected: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        bad = [i for i in self.infected if not 0 <= i < len(self.points)]
        if bad:
            raise ValueError(f"infected indices out of range: {sorted(bad)[:5]}")

    def coords(self) -> np.ndarray:
        """Point coordinates as an (n, 2) array."""
        if not self.points:
            return np.empty((0, 2))
        return np.array([(p.x, p.y) for p in self.points])

    def infected_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.points), dtype=bool)
        if self.infected:
            mask[sorted(self.infected)] = True
        return mask


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    count_all: int
    count_smart: int
    pct_change: float | None
    cov_all: float | None
    cov_smart: float | None

    def __post_init__(self) -> None:
        if self.count_all < 0 or self.count_smart < 0:
            raise ValueError("contact counts cannot be negative")


@dataclass(frozen=True)
class CountryScenario:
    name: str
    density_all: float
    density_smart: float
    infection_rate: float


#: Per-country constants: any-phone density, smartphone density, positivity rate.
COUNTRY_SCENARIOS: dict[str, CountryScenario] = {
    "bd": CountryScenario("Bangladesh", 100.0, 58.0, 0.18),
    "in": CountryScenario("India", 64.0, 24.0, 0.0416),
    "kr": CountryScenario("South Korea", 100.0, 95.0, 0.0106),
}


@dataclass(frozen=True)
class ScenarioSummary:
    name: str
    trials: int
    mean_count_all: float
    mean_count_smart: float
    #: Percentage change of the mean counts. Per-trial percentage changes are
    #: dominated by tiny denominators at low densities, so the summary compares
    #: the trial-averaged counts instead.
    mean_pct_change: float | None
    undefined_trials: int
    mean_cov_all: float | None
    mean_cov_smart: float | None


@dataclass
class ExperimentRun:
    config: SimConfig
    trials: list[TrialResult] = field(default_factory=list)


def sample_ppp(
    density: float, rng: np.random.Generator, region_radius: float = 1.0
) -> Population:
    """Draw a homogeneous Poisson point process on a disk.

    The point count is Poisson(density); given the count, points are uniform
    on the disk of the given radius via the polar method (radius taken as
    region_radius * sqrt(U) so area is uniform). The polar method is part of
    the seeded contract: it fixes how many variates each trial consumes.
    """
    if not (math.isfinite(density) and density >= 0.0):
        raise ValueError(f"density must be finite and non-negative, got {density}")
    n = int(rng.poisson(density))
    if n == 0:
        return Population(points=[])
    radius = region_radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    xs = radius * np.cos(theta)
    ys = radius * np.sin(theta)
    return Population(points=[PlanarPoint(float(x), float(y)) for x, y in zip(xs, ys)])


def mark_infected(
    population: Population, p: float, rng: np.random.Generator
) -> frozenset[int]:
    """Mark each point infected independently with probability p.

    The marking is recorded on the population and also returned.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"infection probability {p} outside [0, 1]")
    n = len(population.points)
    if n == 0:
        marked: frozenset[int] = frozenset()
    else:
        draws = rng.uniform(0.0, 1.0, n)
        marked = frozenset(int(i) for i in np.flatnonzero(draws < p))
    population.infected = marked
    return marked


def count_contacts(population: Population, r: float) -> int:
    """Number of non-infected points within r of at least one infected point.

    Each qualifying point is counted once no matter how many infected points
    it is near. Infected points are never counted; they are already known
    positives.
    """
    if r <= 0.0:
        raise ValueError(f"contact radius must be positive, got {r}")
    if not population.infected or not population.points:
        return 0
    mask = population.infected_mask()
    if mask.all():
        return 0
    xy = population.coords()
    inf_xy = xy[mask]
    oth_xy = xy[~mask]
    # Same arithmetic as geo.euclidean_distance, vectorized: sqrt(dx*dx + dy*dy).
    dx = oth_xy[:, 0][:, None] - inf_xy[:, 0][None, :]
    dy = oth_xy[:, 1][:, None] - inf_xy[:, 1][None, :]
    dist = np.sqrt(dx * dx + dy * dy)
    return int((dist <= r).any(axis=1).sum())


def coordinate_covariance(points: Sequence[PlanarPoint]) -> float:
    """Absolute sample covariance of x and y coordinates (n-1 denominator)."""
    n = len(points)
    if n < 2:
        raise ValueError(f"covariance needs at least 2 points, got {n}")
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])
    cov = float(np.sum((xs - xs.mean()) * (ys - ys.mean())) / (n - 1))
    return abs(cov)


def percentage_change(count_all: float, count_smart: float) -> float | None:
    """100 * (count_all - count_smart) / count_smart, or None when undefined.

    A zero smartphone count yields None rather than an exception so a batch
    of trials never aborts on one degenerate draw.
    """
    if count_all < 0 or count_smart < 0:
        raise ValueError("counts cannot be negative")
    if count_smart == 0:
        return None
    return 100.0 * (count_all - count_smart) / count_smart


def trial_populations(config: SimConfig, trial_index: int) -> tuple[Population, Population]:
    """Draw the (any-phone, smartphone) populations for one trial.

    The two populations are independent draws, not a thinned subset, so the
    per-trial percentage change is noisy by construction. Each role's stream
    is consumed in a fixed order (point count, radii, angles, infection
    draws), which is part of the reproducibility contract.
    """
    rng_all = config.rng_for(trial_index, ROLE_ANY)
    pop_all = sample_ppp(config.density_all, rng_all, config.region_radius)
    mark_infected(pop_all, config.infection_rate, rng_all)
    rng_smart = config.rng_for(trial_index, ROLE_SMART)
    pop_smart = sample_ppp(config.density_smart, rng_smart, config.region_radius)
    mark_infected(pop_smart, config.infection_rate, rng_smart)
    return pop_all, pop_smart


def _safe_cov(population: Population) -> float | None:
    if len(population.points) < 2:
        return None
    return coordinate_covariance(population.points)


def run_trial(config: SimConfig, trial_index: int) -> TrialResult:
    """One seeded comparison trial; fully determined by (config.seed, trial_index)."""
    pop_all, pop_smart = trial_populations(config, trial_index)
    count_all = count_contacts(pop_all, config.contact_radius) if pop_all.infected else 0
    count_smart = count_contacts(pop_smart, config.contact_radius) if pop_smart.infected else 0
    return TrialResult(
        trial_index=trial_index,
        count_all=count_all,
        count_smart=count_smart,
        pct_change=percentage_change(count_all, count_smart),
        cov_all=_safe_cov(pop_all),
        cov_smart=_safe_cov(pop_smart),
    )


def run_experiment(config: SimConfig) -> ExperimentRun:
    """Run all configured trials in trial-index order."""
    return ExperimentRun(
        config=config,
        trials=[run_trial(config, i) for i in range(config.trials)],
    )


def run_scenario(
    scenario: CountryScenario, r: float, trials: int, seed: int
) -> ScenarioSummary:
    """Aggregate a country scenario over many trials.

    Trials whose per-trial percentage change is undefined (zero smartphone
    count) are reported as a count; the headline mean_pct_change compares the
    mean counts so it stays meaningful at low densities.
    """
    config = SimConfig(
        density_all=scenario.density_all,
        density_smart=scenario.density_smart,
        infection_rate=scenario.infection_rate,
        contact_radius=r,
        trials=trials,
        seed=seed,
    )
    results = run_experiment(config).trials
    mean_all = float(np.mean([t.count_all for t in results]))
    mean_smart = float(np.mean([t.count_smart for t in results]))
    undefined = sum(1 for t in results if t.pct_change is None)
    cov_all = [t.cov_all for t in results if t.cov_all is not None]
    cov_smart = [t.cov_smart for t in results if t.cov_smart is not None]
    return ScenarioSummary(
        name=scenario.name,
        trials=trials,
        mean_count_all=mean_all,
        mean_count_smart=mean_smart,
        mean_pct_change=percentage_change(mean_all, mean_smart),
        undefined_trials=undefined,
        mean_cov_all=float(np.mean(cov_all)) if cov_all else None,
        mean_cov_smart=float(np.mean(cov_smart)) if cov_smart else None,
    )


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def emit_results(
    run: ExperimentRun,
    out_dir: str | Path,
    scenarios: Sequence[ScenarioSummary] | None = None,
) -> list[Path]:
    """Write the experiment's CSV files; byte-identical for identical inputs.

    Files: scatter.csv (trial,role,x,y,infected), counts.csv
    (trial,count_all,count_smart,pct_change), covariance.csv
    (trial,cov_smart,cov_all), and scenarios.csv
    (country,mean_count_all,mean_count_smart,mean_pct_change,undefined_trials)
    when scenario summaries are supplied. Scatter points are re-derived from
    the seeded streams, so nothing but the config needs to be retained.
    """
    if not run.trials:
        raise ValueError("cannot emit an empty result set")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory not writable: {out}") from exc

    written: list[Path] = []

    scatter = out / "scatter.csv"
    with scatter.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "role", "x", "y", "infected"])
        for result in run.trials:
            pops = trial_populations(run.config, result.trial_index)
            for role, pop in zip((ROLE_ANY, ROLE_SMART), pops):
                for i, point in enumerate(pop.points):
                    w.writerow([
                        result.trial_index,
                        _ROLE_NAMES[role],
                        _fmt(point.x),
                        _fmt(point.y),
                        1 if i in pop.infected else 0,
                    ])
    written.append(scatter)

    counts = out / "counts.csv"
    with counts.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "count_all", "count_smart", "pct_change"])
        for t in run.trials:
            w.writerow([t.trial_index, t.count_all, t.count_smart, _fmt(t.pct_change)])
    written.append(counts)

    covariance = out / "covariance.csv"
    with covariance.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "cov_smart", "cov_all"])
        for t in run.trials:
            w.writerow([t.trial_index, _fmt(t.cov_smart), _fmt(t.cov_all)])
    written.append(covariance)

    if scenarios is not None:
        scen = out / "scenarios.csv"
        with scen.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([
                "country", "mean_count_all", "mean_count_smart",
                "mean_pct_change", "undefined_trials",
            ])
            for s in scenarios:
                w.writerow([
                    s.name, _fmt(s.mean_count_all), _fmt(s.mean_count_smart),
                    _fmt(s.mean_pct_change), s.undefined_trials,
                ])
        written.append(scen)

    return written
