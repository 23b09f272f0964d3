import numpy as np
import pytest

from celltrace.experiment import (
    COUNTRY_SCENARIOS,
    Population,
    SimConfig,
    coordinate_covariance,
    count_contacts,
    emit_results,
    mark_infected,
    percentage_change,
    run_experiment,
    run_scenario,
    run_trial,
    sample_ppp,
    trial_populations,
)
from celltrace.geo import PlanarPoint, euclidean_distance


def brute_force_count(population: Population, r: float) -> int:
    """Independent oracle: all-pairs scan with the scalar distance function."""
    infected = [population.points[i] for i in population.infected]
    count = 0
    for i, point in enumerate(population.points):
        if i in population.infected:
            continue
        if any(euclidean_distance(point, q) <= r for q in infected):
            count += 1
    return count


class TestSamplePpp:
    def test_zero_intensity(self):
        pop = sample_ppp(0.0, np.random.default_rng(1))
        assert pop.points == []

    def test_negative_intensity_rejected(self):
        with pytest.raises(ValueError):
            sample_ppp(-1.0, np.random.default_rng(1))

    def test_points_inside_unit_disk(self):
        pop = sample_ppp(500.0, np.random.default_rng(2))
        assert all(p.x**2 + p.y**2 <= 1.0 + 1e-12 for p in pop.points)

    def test_poisson_mean_band(self):
        # 10,000 repetitions at lambda=100: the +-1 band around the mean is
        # ten standard errors wide (se = sqrt(100/10000) = 0.1).
        rng = np.random.default_rng(3)
        counts = [len(sample_ppp(100.0, rng).points) for _ in range(10_000)]
        assert 99.0 <= np.mean(counts) <= 101.0

    def test_uniformity_in_area(self):
        # With the polar method, r^2 is uniform: mean about 0.5.
        rng = np.random.default_rng(4)
        pop = sample_ppp(5000.0, rng)
        r2 = [p.x**2 + p.y**2 for p in pop.points]
        assert np.mean(r2) == pytest.approx(0.5, abs=0.02)


class TestMarkInfected:
    def test_p_zero(self):
        pop = sample_ppp(50.0, np.random.default_rng(5))
        assert mark_infected(pop, 0.0, np.random.default_rng(6)) == frozenset()

    def test_p_one(self):
        pop = sample_ppp(50.0, np.random.default_rng(7))
        marked = mark_infected(pop, 1.0, np.random.default_rng(8))
        assert marked == frozenset(range(len(pop.points)))

    def test_bad_probability(self):
        pop = sample_ppp(10.0, np.random.default_rng(9))
        with pytest.raises(ValueError):
            mark_infected(pop, 1.5, np.random.default_rng(9))

    def test_pooled_fraction_band(self):
        # Binomial se at n=10,000 is about 0.0038; the band is over 2.5 sigma.
        rng = np.random.default_rng(10)
        total, infected = 0, 0
        while total < 10_000:
            pop = sample_ppp(100.0, rng)
            marked = mark_infected(pop, 0.18, rng)
            total += len(pop.points)
            infected += len(marked)
        assert 0.17 <= infected / total <= 0.19

    def test_marking_recorded_on_population(self):
        pop = sample_ppp(50.0, np.random.default_rng(11))
        marked = mark_infected(pop, 0.5, np.random.default_rng(12))
        assert pop.infected == marked


class TestCountContacts:
    def test_no_infected(self):
        pop = Population(points=[PlanarPoint(0, 0), PlanarPoint(0.1, 0)])
        assert count_contacts(pop, 0.03) == 0

    def test_threshold_example(self):
        pop = Population(
            points=[PlanarPoint(0, 0), PlanarPoint(0.02, 0), PlanarPoint(0.05, 0)],
            infected=frozenset({0}),
        )
        assert count_contacts(pop, 0.03) == 1

    def test_counted_once_despite_two_infected_neighbors(self):
        pop = Population(
            points=[PlanarPoint(0, 0), PlanarPoint(0.01, 0), PlanarPoint(0.005, 0)],
            infected=frozenset({0, 1}),
        )
        assert count_contacts(pop, 0.03) == 1

    def test_rejects_nonpositive_radius(self):
        pop = Population(points=[PlanarPoint(0, 0)], infected=frozenset({0}))
        with pytest.raises(ValueError):
            count_contacts(pop, 0.0)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(120):
            pop = sample_ppp(float(rng.uniform(0, 120)), rng)
            if len(pop.points) > 300:
                continue
            mark_infected(pop, float(rng.uniform(0, 1)), rng)
            r = float(rng.uniform(0.005, 0.3))
            assert count_contacts(pop, r) == brute_force_count(pop, r)

    def test_monotone_in_radius(self):
        rng = np.random.default_rng(14)
        pop = sample_ppp(150.0, rng)
        mark_infected(pop, 0.2, rng)
        counts = [count_contacts(pop, r) for r in (0.01, 0.03, 0.1, 0.5)]
        assert counts == sorted(counts)

    def test_monotone_in_infected_set(self):
        rng = np.random.default_rng(15)
        pop = sample_ppp(150.0, rng)
        mark_infected(pop, 0.15, rng)
        base = count_contacts(pop, 0.05)
        extra = next(i for i in range(len(pop.points)) if i not in pop.infected)
        bigger = Population(points=pop.points, infected=pop.infected | {extra})
        assert count_contacts(bigger, 0.05) >= base - 1  # extra may absorb a contact
        # Strict monotonicity holds for the event "within r of some infected":
        # every previously counted point is still within r of its witness.
        previously = {
            i
            for i, p in enumerate(pop.points)
            if i not in pop.infected
            and any(
                euclidean_distance(p, pop.points[j]) <= 0.05 for j in pop.infected
            )
        }
        now = {
            i
            for i, p in enumerate(pop.points)
            if i not in bigger.infected
            and any(
                euclidean_distance(p, pop.points[j]) <= 0.05 for j in bigger.infected
            )
        }
        assert now >= previously - bigger.infected

    def test_scaling_invariance(self):
        rng = np.random.default_rng(16)
        pop = sample_ppp(120.0, rng)
        mark_infected(pop, 0.2, rng)
        for s in (0.1, 3.0, 17.5):
            scaled = Population(
                points=[PlanarPoint(p.x * s, p.y * s) for p in pop.points],
                infected=pop.infected,
            )
            assert count_contacts(scaled, 0.04 * s) == count_contacts(pop, 0.04)


class TestCovariance:
    def test_hand_computed_positive(self):
        pts = [PlanarPoint(0, 0), PlanarPoint(1, 1), PlanarPoint(2, 2)]
        assert coordinate_covariance(pts) == pytest.approx(1.0)

    def test_hand_computed_anticorrelated(self):
        pts = [PlanarPoint(0, 0), PlanarPoint(1, -1), PlanarPoint(2, -2)]
        assert coordinate_covariance(pts) == pytest.approx(1.0)

    def test_zero_when_x_constant(self):
        pts = [PlanarPoint(5, 0), PlanarPoint(5, 3), PlanarPoint(5, -4)]
        assert coordinate_covariance(pts) == 0.0

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            coordinate_covariance([PlanarPoint(0, 0)])

    def test_translation_invariance(self):
        rng = np.random.default_rng(17)
        pop = sample_ppp(80.0, rng)
        shifted = [PlanarPoint(p.x + 3.7, p.y - 11.2) for p in pop.points]
        assert coordinate_covariance(shifted) == pytest.approx(
            coordinate_covariance(pop.points), rel=1e-9, abs=1e-12
        )

    def test_scales_quadratically(self):
        rng = np.random.default_rng(18)
        pop = sample_ppp(80.0, rng)
        scaled = [PlanarPoint(p.x * 2.5, p.y * 2.5) for p in pop.points]
        assert coordinate_covariance(scaled) == pytest.approx(
            coordinate_covariance(pop.points) * 2.5**2, rel=1e-9
        )


class TestPercentageChange:
    @pytest.mark.parametrize(
        "pair,expected",
        [((22, 11), 100.0), ((20, 5), 300.0), ((19, 9), 111.11)],
    )
    def test_reference_pairs(self, pair, expected):
        assert percentage_change(*pair) == pytest.approx(expected, abs=0.01)

    def test_zero_denominator_is_undefined_not_fatal(self):
        assert percentage_change(5, 0) is None

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            percentage_change(-1, 3)


class TestRunTrial:
    def test_deterministic(self):
        config = SimConfig(trials=1, seed=99)
        assert run_trial(config, 0) == run_trial(config, 0)

    def test_zero_density(self):
        config = SimConfig(density_all=0, density_smart=0, trials=1, seed=1)
        result = run_trial(config, 0)
        assert result.count_all == result.count_smart == 0
        assert result.pct_change is None
        assert result.cov_all is None and result.cov_smart is None

    def test_trials_order_independent(self):
        config = SimConfig(trials=5, seed=123)
        full = run_experiment(config).trials
        assert run_trial(config, 3) == full[3]

    def test_populations_are_independent_draws(self):
        config = SimConfig(trials=1, seed=5)
        pop_all, pop_smart = trial_populations(config, 0)
        assert pop_all.points != pop_smart.points

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(density_all=10, density_smart=20)
        with pytest.raises(ValueError):
            SimConfig(infection_rate=1.2)
        with pytest.raises(ValueError):
            SimConfig(trials=0)
        with pytest.raises(ValueError):
            SimConfig(contact_radius=0)


class TestRunScenario:
    def test_zero_infection_rate(self):
        scenario = COUNTRY_SCENARIOS["bd"]
        zeroed = type(scenario)(scenario.name, scenario.density_all,
                                scenario.density_smart, 0.0)
        summary = run_scenario(zeroed, 0.03, 50, 4)
        assert summary.mean_count_all == 0.0
        assert summary.mean_count_smart == 0.0
        assert summary.mean_pct_change is None
        assert summary.undefined_trials == 50

    def test_counts_and_covariances_nonnegative(self):
        summary = run_scenario(COUNTRY_SCENARIOS["bd"], 0.03, 100, 8)
        assert summary.mean_count_all >= 0.0
        assert summary.mean_cov_all >= 0.0
        assert summary.mean_cov_smart >= 0.0

    def test_korea_below_india(self):
        # Ratio law: (100/95)^2 - 1 vs (64/24)^2 - 1.
        kr = run_scenario(COUNTRY_SCENARIOS["kr"], 0.03, 800, 21)
        india = run_scenario(COUNTRY_SCENARIOS["in"], 0.03, 800, 21)
        assert kr.mean_pct_change < india.mean_pct_change


class TestEmitResults:
    def test_counts_rows_match_trials(self, tmp_path):
        run = run_experiment(SimConfig(trials=4, seed=7))
        emit_results(run, tmp_path)
        lines = (tmp_path / "counts.csv").read_text().strip().splitlines()
        assert lines[0] == "trial,count_all,count_smart,pct_change"
        assert len(lines) == 1 + 4

    def test_scatter_rows_match_generated_points(self, tmp_path):
        config = SimConfig(trials=3, seed=11)
        run = run_experiment(config)
        emit_results(run, tmp_path)
        total_points = 0
        for i in range(config.trials):
            pop_all, pop_smart = trial_populations(config, i)
            total_points += len(pop_all.points) + len(pop_smart.points)
        lines = (tmp_path / "scatter.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + total_points

    def test_byte_identical_reruns(self, tmp_path):
        config = SimConfig(trials=4, seed=42)
        first, second = tmp_path / "a", tmp_path / "b"
        emit_results(run_experiment(config), first)
        emit_results(run_experiment(config), second)
        for name in ("scatter.csv", "counts.csv", "covariance.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_covariance_header_order(self, tmp_path):
        emit_results(run_experiment(SimConfig(trials=1, seed=1)), tmp_path)
        header = (tmp_path / "covariance.csv").read_text().splitlines()[0]
        assert header == "trial,cov_smart,cov_all"

    def test_undefined_pct_becomes_empty_field(self, tmp_path):
        config = SimConfig(density_all=0, density_smart=0, trials=1, seed=1)
        emit_results(run_experiment(config), tmp_path)
        row = (tmp_path / "counts.csv").read_text().strip().splitlines()[1]
        assert row == "0,0,0,"

    def test_empty_results_rejected(self, tmp_path):
        run = run_experiment(SimConfig(trials=1, seed=1))
        run.trials = []
        with pytest.raises(ValueError):
            emit_results(run, tmp_path)

    def test_unwritable_directory_reports_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        run = run_experiment(SimConfig(trials=1, seed=1))
        with pytest.raises(OSError, match="file"):
            emit_results(run, blocker / "sub")

    def test_scenarios_csv(self, tmp_path):
        run = run_experiment(SimConfig(trials=2, seed=3))
        summaries = [run_scenario(COUNTRY_SCENARIOS[c], 0.03, 20, 3)
                     for c in ("bd", "in", "kr")]
        emit_results(run, tmp_path, scenarios=summaries)
        lines = (tmp_path / "scenarios.csv").read_text().strip().splitlines()
        assert lines[0] == (
            "country,mean_count_all,mean_count_smart,mean_pct_change,undefined_trials"
        )
        assert len(lines) == 4
        assert lines[1].startswith("Bangladesh,")


class TestSeedDiscipline:
    def test_same_seed_same_experiment(self):
        a = run_experiment(SimConfig(trials=6, seed=77))
        b = run_experiment(SimConfig(trials=6, seed=77))
        assert a.trials == b.trials

    def test_different_seeds_differ(self):
        a = run_experiment(SimConfig(trials=6, seed=77))
        b = run_experiment(SimConfig(trials=6, seed=78))
        assert a.trials != b.trials

    def test_radius_does_not_shift_population_draws(self):
        narrow = SimConfig(contact_radius=0.02, trials=1, seed=9)
        wide = SimConfig(contact_radius=0.3, trials=1, seed=9)
        pop_a, _ = trial_populations(narrow, 0)
        pop_b, _ = trial_populations(wide, 0)
        assert pop_a.points == pop_b.points
