"""Trajectory simulation checks against Poisson and truncation oracles."""

import math

import numpy as np
import pytest
from scipy import stats

from arrivalsim.distributions import Exp, GenGam
from arrivalsim.fitting import FittedModel
from arrivalsim.models import model_from_name
from arrivalsim.simulate import (
    counts_on_grid,
    pick_anchor,
    simulate_one,
    simulate_set,
    write_trajectories,
)

T1, T2 = -3.25, -0.5
SPAN = T2 - T1


def fitted(name, theta, window=(T1, T2)):
    return FittedModel(
        spec=model_from_name(name), theta=theta, log_likelihood=None, window=window
    )


@pytest.fixture(scope="module")
def poisson_set():
    """10^4 homogeneous-Poisson trajectories at rate 200/h."""
    return simulate_set(fitted("Exp.Const", [200.0]), T1, T1, T2, m=10_000, seed=123)


class TestPoissonOracle:
    def test_mean_count(self, poisson_set):
        # Poisson with intensity 200 * 2.75 = 550 per trajectory
        counts = np.array([len(tr) for tr in poisson_set.trajectories])
        assert abs(counts.mean() - 550.0) < 3.0 * math.sqrt(550.0 / counts.size)

    def test_dispersion(self, poisson_set):
        counts = np.array([len(tr) for tr in poisson_set.trajectories])
        ratio = counts.var(ddof=1) / counts.mean()
        assert 0.94 < ratio < 1.06

    def test_disjoint_increments_uncorrelated(self, poisson_set):
        first = np.array(
            [np.sum((tr > -3.0) & (tr <= -2.0)) for tr in poisson_set.trajectories]
        )
        second = np.array(
            [np.sum((tr > -2.0) & (tr <= -1.0)) for tr in poisson_set.trajectories]
        )
        rho = np.corrcoef(first, second)[0, 1]
        assert abs(rho) < 0.05

    def test_all_arrivals_inside_horizon(self, poisson_set):
        for tr in poisson_set.trajectories:
            assert np.all((tr > T1) & (tr < T2))
            assert np.all(np.diff(tr) > 0.0)


class TestFirstArrival:
    def test_zero_gap_matches_untruncated_kernel(self):
        """With anchor = t_start the first inter-arrival follows the plain
        fitted distribution."""
        fm = fitted("GenGam.Const.Const", [150.0, 1.6, 0.8])
        ts = simulate_set(fm, T1, T1, T2, m=10_000, seed=7)
        firsts = np.array([tr[0] - T1 for tr in ts.trajectories if len(tr)])
        kernel = GenGam(math.log(1.6 / 150.0), 1.6 ** -0.5, 0.8)
        # censor both sides at the horizon length to compare like with like
        cens = kernel.cdf(SPAN)
        d = stats.kstest(firsts, lambda x: kernel.cdf(x) / cens).statistic
        assert d < 0.02

    def test_truncated_gap_memoryless_for_exp(self):
        lam = 80.0
        anchor = T1 - 0.3
        ts = simulate_set(fitted("Exp.Const", [lam]), anchor, T1, T2, m=5_000, seed=8)
        firsts = np.array([tr[0] - T1 for tr in ts.trajectories if len(tr)])
        cens = Exp(lam).cdf(SPAN)
        d = stats.kstest(firsts, lambda x: Exp(lam).cdf(x) / cens).statistic
        assert d < 0.02

    def test_tail_exhausted_gives_empty_trajectory(self, caplog):
        with caplog.at_level("WARNING"):
            tr = simulate_one(
                fitted("Exp.Const", [200.0]),
                anchor=-10.0,
                t_start=T1,
                t_end=T2,
                rng=np.random.default_rng(0),
            )
        assert tr.size == 0
        assert "exhausted" in caplog.text


class TestDeterminism:
    def test_same_seed_identical(self):
        fm = fitted("Gamma.Expon.Lin", [5.0, 5.0, 0.9, 1.5, 0.1])
        a = simulate_set(fm, T1, T1, T2, m=50, seed=99)
        b = simulate_set(fm, T1, T1, T2, m=50, seed=99)
        assert a.m == b.m
        for ta, tb in zip(a.trajectories, b.trajectories):
            np.testing.assert_array_equal(ta, tb)

    def test_m1_equals_first_derived_stream(self):
        fm = fitted("Exp.Const", [100.0])
        one = simulate_set(fm, T1, T1, T2, m=1, seed=5)
        stream = np.random.default_rng(np.random.SeedSequence(5).spawn(1)[0])
        direct = simulate_one(fm, T1, T1, T2, stream)
        np.testing.assert_array_equal(one.trajectories[0], direct)

    def test_prefix_stable_in_m(self):
        """Per-trajectory streams: growing M never changes earlier members."""
        fm = fitted("Exp.Const", [100.0])
        small = simulate_set(fm, T1, T1, T2, m=3, seed=5)
        large = simulate_set(fm, T1, T1, T2, m=6, seed=5)
        for ta, tb in zip(small.trajectories, large.trajectories):
            np.testing.assert_array_equal(ta, tb)


class TestTimeVarying:
    def test_rising_rate_concentrates_late_arrivals(self):
        fm = fitted("Exp.Expon", [1.0, 6.0, 1.5])
        ts = simulate_set(fm, T1, T1, T2, m=400, seed=11)
        early = sum(np.sum(tr <= -2.0) for tr in ts.trajectories)
        late = sum(np.sum(tr > -2.0) for tr in ts.trajectories)
        assert late > 2 * early

    def test_parameters_clamped_to_fit_window(self):
        """An anchor before the window evaluates the exponential rate at the
        window start instead of exploding."""
        fm = fitted("Exp.Expon", [1.0, 6.0, -5.0])  # rate grows fast backwards
        tr = simulate_one(fm, -6.0, T1, T2, np.random.default_rng(1))
        assert np.all((tr > T1) & (tr < T2))


class TestHelpers:
    def test_counts_on_grid(self):
        grid = np.array([-3.0, -2.0, -1.0])
        arrivals = np.array([-2.5, -2.0, -0.9])
        np.testing.assert_array_equal(counts_on_grid(arrivals, grid), [0, 2, 2])

    def test_pick_anchor(self):
        arrivals = np.array([-5.0, -3.5, -3.3, -1.0])
        assert pick_anchor(arrivals, T1) == -3.3
        assert pick_anchor(np.array([-1.0]), T1) == T1
        assert pick_anchor(np.array([-3.25, -1.0]), T1) == -3.25

    def test_max_events_guard(self, caplog):
        with caplog.at_level("WARNING"):
            tr = simulate_one(
                fitted("Exp.Const", [5000.0]),
                T1,
                T1,
                T2,
                np.random.default_rng(2),
                max_events=100,
            )
        assert tr.size == 100
        assert "max_events" in caplog.text

    def test_write_trajectories(self, tmp_path):
        fm = fitted("Exp.Const", [10.0])
        ts = simulate_set(fm, T1, T1, T2, m=3, seed=0)
        path = tmp_path / "traj.csv"
        write_trajectories(ts, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "trajectory_index,arrival_time_hours"
        assert len(lines) == 1 + sum(len(tr) for tr in ts.trajectories)
