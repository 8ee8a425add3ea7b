import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyguess.errors import DimensionMismatchError, HorizonTooSmallError, InfiniteMomentError
from noisyguess.exponent import solve_exponent
from noisyguess.samplers import IidStrategy, ListStrategy, UniversalSampler, UniversalStrategy, universal_log_prob
from noisyguess.simplex import Channel, GuessingProblem
from noisyguess.simulator import (
    MomentReport,
    exact_moment,
    exponent_curve,
    fixed_list_moment,
    geometric_moment,
    simulate_moment,
)

GOLDEN = Path(__file__).parent / "golden" / "curve_bsc045.json"


@pytest.fixture
def bsc01_problem():
    return GuessingProblem([0.25, 0.75], Channel.bsc(0.1), 1.0)


class TestGeometricMoment:
    def test_closed_forms(self):
        assert geometric_moment(0.25, 1.0) == 4.0
        assert geometric_moment(0.3, 0.0) == 1.0
        assert geometric_moment(0.5, 2.0) == 6.0
        assert geometric_moment(1.0, 2.7) == 1.0

    def test_zero_success_is_infinite(self):
        assert geometric_moment(0.0, 1.5) == math.inf

    @pytest.mark.parametrize("s", [0.9, 0.5, 0.05, 1e-3])
    def test_series_agrees_with_closed_form(self, s):
        # a hair away from rho = 2 forces the series path
        assert geometric_moment(s, 2.0 + 1e-12) == pytest.approx((2 - s) / s**2, rel=1e-9)

    @pytest.mark.parametrize("rho", [0.5, 1.5, 3.3])
    def test_small_success_uses_polylog(self, rho):
        s = 1e-8
        # E[G^rho] ~ Gamma(rho + 1) / s^rho for small s
        assert geometric_moment(s, rho) == pytest.approx(math.gamma(rho + 1) / s**rho, rel=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 1.0), st.floats(0.0, 4.0))
    def test_against_direct_sum(self, s, rho):
        k = np.arange(1, 20_000, dtype=float)
        direct = math.fsum(k**rho * s * (1 - s) ** (k - 1))
        assert geometric_moment(s, rho) == pytest.approx(direct, rel=1e-9)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            geometric_moment(1.5, 1.0)


class TestExactMoment:
    def test_uniform_guessing_noiseless(self):
        pr = GuessingProblem([0.25, 0.75], Channel.identity(2), 1.0)
        assert exact_moment(pr, IidStrategy([0.5, 0.5]), 1).value == pytest.approx(2.0)

    def test_bsc_example(self, bsc01_problem):
        rep = exact_moment(bsc01_problem, IidStrategy([0.0, 1.0]), 1)
        assert rep.value == pytest.approx(0.25 / 0.1 + 0.75 / 0.9, abs=1e-12)
        assert rep.method == "exact" and rep.ci_halfwidth == 0.0

    def test_rho_zero(self):
        pr = GuessingProblem([0.1, 0.2, 0.7], Channel(np.full((2, 3), 1 / 3)), 0.0)
        assert exact_moment(pr, IidStrategy([0.5, 0.5]), 3).value == 1.0

    def test_iid_rho_one_is_power(self, bsc01_problem):
        # with rho = 1 the moment factorizes: (sum_y P(y) / Q(y))^n
        v = np.array([0.3, 0.7])
        q = v @ bsc01_problem.channel.rows
        base = 0.25 / q[0] + 0.75 / q[1]
        for n in (1, 4, 9):
            assert exact_moment(bsc01_problem, IidStrategy(v), n).value == pytest.approx(base**n, rel=1e-12)

    def test_unhittable_target(self):
        pr = GuessingProblem([0.5, 0.5], Channel.identity(2), 1.0)
        with pytest.raises(InfiniteMomentError):
            exact_moment(pr, IidStrategy([1.0, 0.0]), 2)

    def test_universal_by_enumeration(self):
        pr = GuessingProblem([0.3, 0.7], Channel.bsc(0.2), 1.5)
        n = 3
        s = UniversalSampler.build(n, 2)
        total = 0.0
        for y in itertools.product(range(2), repeat=n):
            py = math.prod(pr.source.probs[b] for b in y)
            hit = sum(
                math.exp(universal_log_prob(s, x)) * math.prod(pr.channel.rows[a, b] for a, b in zip(x, y))
                for x in itertools.product(range(2), repeat=n)
            )
            total += py * geometric_moment(hit, 1.5)
        assert exact_moment(pr, UniversalStrategy(s), n).value == pytest.approx(total, rel=1e-10)

    def test_value_at_least_one(self):
        pr = GuessingProblem([0.9, 0.1], Channel.bsc(0.05), 0.5)
        rep = exact_moment(pr, IidStrategy([0.9, 0.1]), 4)
        assert rep.value >= 1.0

    def test_list_strategy_rejected(self, bsc01_problem):
        with pytest.raises(TypeError):
            exact_moment(bsc01_problem, ListStrategy([[1]]), 1)

    def test_sampler_length_checked(self, bsc01_problem):
        with pytest.raises(DimensionMismatchError):
            exact_moment(bsc01_problem, UniversalStrategy.for_block(3, 2), 2)


class TestSimulateMoment:
    def test_brackets_exact(self, bsc01_problem):
        rep = simulate_moment(bsc01_problem, IidStrategy([0.0, 1.0]), 1, 1_000_000, seed=11)
        assert abs(rep.value - 10 / 3) <= rep.ci_halfwidth
        assert rep.method == "monte-carlo" and rep.trials == 1_000_000

    def test_same_seed_same_report(self, bsc01_problem):
        a = simulate_moment(bsc01_problem, IidStrategy([0.2, 0.8]), 3, 20_000, seed=5)
        b = simulate_moment(bsc01_problem, IidStrategy([0.2, 0.8]), 3, 20_000, seed=5)
        assert a == b

    def test_workers_do_not_change_result(self, bsc01_problem):
        strat = UniversalStrategy.for_block(4, 2)
        a = simulate_moment(bsc01_problem, strat, 4, 30_000, seed=8, workers=1)
        b = simulate_moment(bsc01_problem, strat, 4, 30_000, seed=8, workers=3)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_rho_zero_exact_one(self):
        pr = GuessingProblem([0.5, 0.5], Channel.bsc(0.3), 0.0)
        rep = simulate_moment(pr, IidStrategy([0.5, 0.5]), 2, 5_000, seed=1)
        assert rep.value == 1.0 and rep.ci_halfwidth == 0.0

    def test_coverage(self):
        pr = GuessingProblem([0.4, 0.6], Channel.bsc(0.2), 1.3)
        strat = IidStrategy([0.35, 0.65])
        exact = exact_moment(pr, strat, 2).value
        hits = 0
        for seed in range(100):
            rep = simulate_moment(pr, strat, 2, 4_000, seed=seed)
            hits += abs(rep.value - exact) <= rep.ci_halfwidth
        assert hits >= 93

    def test_universal_beyond_cap_uses_inner_sampling(self):
        pr = GuessingProblem([0.25, 0.75], Channel.bsc(0.45), 1.0)
        rep = simulate_moment(pr, UniversalStrategy.for_block(16, 2), 16, 20_000, seed=3)
        # the universal law is at least as good as uniform guessing: E[G] <= 2^n
        assert 1.0 <= rep.value <= 2.0**16 * 1.05

    def test_list_strategy(self, bsc01_problem):
        rep = simulate_moment(bsc01_problem, ListStrategy([[1]]), 1, 200_000, seed=4)
        assert abs(rep.value - 10 / 3) <= 1.5 * rep.ci_halfwidth

    def test_trials_validated(self, bsc01_problem):
        with pytest.raises(ValueError):
            simulate_moment(bsc01_problem, IidStrategy([0.5, 0.5]), 1, 0)


class TestFixedList:
    def test_noiseless_optimal_order(self):
        pr = GuessingProblem([0.25, 0.75], Channel.identity(2), 1.0)
        assert fixed_list_moment(pr, [[1], [0]], 1).value == pytest.approx(1.25)

    def test_constant_list_is_geometric(self, bsc01_problem):
        rep = fixed_list_moment(bsc01_problem, [[1]], 1)
        assert rep.value == pytest.approx(10 / 3, rel=1e-9)
        assert rep.truncation_tail_bound <= 1e-10 * rep.value

    def test_never_hit(self):
        pr = GuessingProblem([0.5, 0.5], Channel.identity(2), 1.0)
        with pytest.raises(InfiniteMomentError):
            fixed_list_moment(pr, [[0]], 1)

    def test_horizon_too_small(self, bsc01_problem):
        with pytest.raises(HorizonTooSmallError):
            fixed_list_moment(bsc01_problem, [[1]], 1, horizon=5)

    def test_matches_randomized_on_full_cycle(self):
        # cycling through all sequences of one type at rho = 0 still gives 1
        pr = GuessingProblem([0.3, 0.7], Channel.bsc(0.2), 0.0)
        assert fixed_list_moment(pr, [[0, 1], [1, 0]], 2).value == pytest.approx(1.0)

    def test_two_symbol_blocks(self):
        pr = GuessingProblem([0.3, 0.7], Channel.bsc(0.2), 2.0)
        guesses = [[1, 1], [0, 1], [1, 0], [0, 0]]
        rep = fixed_list_moment(pr, guesses, 2)
        # independent check: simulate the same list
        sim = simulate_moment(pr, ListStrategy(guesses), 2, 400_000, seed=2)
        assert abs(sim.value - rep.value) <= 1.5 * sim.ci_halfwidth


class TestExponentCurve:
    def test_uniform_noiseless_single_symbol(self):
        pr = GuessingProblem([0.5, 0.5], Channel.identity(2), 1.0)
        rep = exponent_curve(pr, IidStrategy([0.5, 0.5]), n_values=[1])[0]
        assert rep.value == pytest.approx(2.0)
        assert rep.log_value_per_n == pytest.approx(math.log(2))

    def test_golden_curves(self):
        golden = json.loads(GOLDEN.read_text())
        pr = GuessingProblem(golden["source"], Channel.bsc(golden["crossover"]), golden["rho"])
        for family in ("iid", "universal"):
            got = [r.log_value_per_n for r in exponent_curve(pr, family, n_values=golden["n"])]
            assert got == pytest.approx(golden[family], abs=1e-9)

    def test_iid_curve_envelope(self):
        pr = GuessingProblem([0.25, 0.75], Channel.bsc(0.45), 1.0)
        e = solve_exponent(pr).value
        reports = exponent_curve(pr, "iid", n_values=range(2, 13))
        for rep in reports:
            assert rep.log_value_per_n >= e - 0.25 / rep.n
        assert abs(reports[-1].log_value_per_n - e) <= 0.12

    def test_universal_close_to_iid(self):
        pr = GuessingProblem([0.25, 0.75], Channel.bsc(0.45), 1.0)
        iid = exponent_curve(pr, "iid", n_values=range(2, 13))
        uni = exponent_curve(pr, "universal", n_values=range(2, 13))
        assert abs(uni[-1].log_value_per_n - solve_exponent(pr).value) <= 0.15
        for a, b in zip(iid, uni):
            assert b.log_value_per_n - a.log_value_per_n <= 0.05

    def test_flat_instance_non_increasing(self):
        pr = GuessingProblem([0.25, 0.75], Channel.bsc(0.35), 1.0)
        values = [r.log_value_per_n for r in exponent_curve(pr, "iid", n_values=range(2, 13))]
        tail = values[2:]
        assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))

    def test_finite_whenever_reachable(self):
        pr = GuessingProblem([0.2, 0.5, 0.3], Channel([[0.5, 0.5, 0.0], [0.0, 0.2, 0.8]]), 2.0)
        for rep in exponent_curve(pr, "universal", n_values=[1, 2, 3, 4]):
            assert math.isfinite(rep.log_value_per_n) and rep.log_value_per_n >= 0.0

    def test_monte_carlo_mode(self):
        pr = GuessingProblem([0.25, 0.75], Channel.bsc(0.35), 1.0)
        reps = exponent_curve(pr, "iid", n_values=[2, 3], mode="mc", trials=5_000, seed=1)
        assert all(r.method == "monte-carlo" for r in reps)

    def test_n_values_ascending(self):
        pr = GuessingProblem([0.25, 0.75], Channel.bsc(0.35), 1.0)
        with pytest.raises(ValueError):
            exponent_curve(pr, "iid", n_values=[3, 2])


def test_report_serializes_infinite_ci():
    rep = MomentReport(1, 1.0, 2.0, math.log(2), "monte-carlo", math.inf, 0.0, 1, 0)
    assert json.dumps(rep.to_dict())
