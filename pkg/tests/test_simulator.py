import io
import json
import math

import numpy as np
import pytest
from scipy import stats

from assessment_voting.equilibrium import d_star, d_star_sharp, enumerate_equilibria, solve_symmetric
from assessment_voting.simulator import (
    SelectionPolicy,
    SimConfig,
    realized_welfare,
    select_equilibrium,
    simulate_av,
    simulate_one_round_compulsory,
    simulate_one_round_voluntary,
    write_jsonl,
)
from assessment_voting.sizing_welfare import ElectionParams, ag_majority_prob

DESK = ElectionParams(0.575, 0.3, 293, 1e4)


def _lead_pmf(n1, p):
    k = np.arange(n1 + 1)
    return dict(zip((2 * k - n1).tolist(), stats.binom.pmf(k, n1, p)))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(DESK, 0)
    with pytest.raises(ValueError):
        SimConfig(DESK, 10, seed=-1)
    with pytest.raises(ValueError):
        SimConfig(DESK, 10, seed=2**64)
    with pytest.raises(ValueError):
        SimConfig(DESK, 10, policy="Whatever")
    assert SimConfig(DESK, 10, policy="LargestRoot").policy is SelectionPolicy.LARGEST_ROOT


def test_desk_scale_outcome():
    s = simulate_av(SimConfig(DESK, 2000, seed=11))
    assert s.a_win_rate >= 0.9 and s.no_show_rate >= 0.9
    assert sum(s.d_histogram.values()) == s.runs == 2000


def test_single_sincere_member():
    # at c = 0.3 lead one has no equilibrium, so use a cost that has one
    s = simulate_av(SimConfig(ElectionParams(0.999999, 0.1, 1, 100.0), 500, seed=3))
    assert s.resolved_runs == 500
    assert s.a_win_rate > 0.9


def test_lead_tail_against_exact_binomial():
    params = ElectionParams(0.525, 0.1, 3003, 1e4)
    s = simulate_av(SimConfig(params, 1000, seed=5))
    dd = d_star(0.1)
    empirical = sum(v for d, v in s.d_histogram.items() if d >= dd) / s.runs
    exact = sum(p for d, p in _lead_pmf(3003, 0.525).items() if d >= dd)
    assert exact > 0.9 and empirical > 0.9
    assert abs(empirical - exact) < 3 * math.sqrt(exact * (1 - exact) / s.runs) + 1e-12


def test_determinism_and_worker_independence():
    cfg = SimConfig(DESK, 400, seed=2024, record_detail=True)
    a = simulate_av(cfg)
    b = simulate_av(cfg)
    c = simulate_av(SimConfig(DESK, 400, seed=2024, record_detail=True, workers=3))
    # unresolved runs carry NaN, so compare serialised records
    assert [o.to_json() for o in a.outcomes] == [o.to_json() for o in b.outcomes]
    assert [o.to_json() for o in a.outcomes] == [o.to_json() for o in c.outcomes]
    assert json.dumps(a.as_dict()) == json.dumps(c.as_dict())
    assert simulate_av(SimConfig(DESK, 400, seed=2025)).d_histogram != a.d_histogram


def test_outcome_invariants_and_welfare_conservation():
    params = ElectionParams(0.55, 0.2, 41, 200.0)
    for policy in SelectionPolicy:
        s = simulate_av(SimConfig(params, 300, seed=8, policy=policy, record_detail=True))
        for o in s.outcomes:
            assert abs(o.d) <= params.n1 and (o.d - params.n1) % 2 == 0
            if not o.resolved:
                continue
            tally = o.d + o.second_round_votes_a - o.second_round_votes_b
            if tally != 0:
                assert o.winner == ("A" if tally > 0 else "B")
            winners = o.supporters_a if o.winner == "A" else o.population - o.supporters_a
            assert o.voters == params.n1 + o.second_round_votes_a + o.second_round_votes_b
            assert o.realized_welfare == pytest.approx((winners - params.c * o.voters) / o.population,
                                                       abs=1e-15)
            assert o.total_cost == pytest.approx(params.c * o.voters)


@pytest.mark.parametrize("policy", list(SelectionPolicy))
def test_no_second_round_votes_past_threshold(policy):
    # at c = 0.3 the sharp threshold equals d*(c) = 2
    assert d_star_sharp(0.3) == d_star(0.3)
    params = ElectionParams(0.52, 0.3, 101, 500.0)
    s = simulate_av(SimConfig(params, 600, seed=19, policy=policy, record_detail=True))
    past = [o for o in s.outcomes if abs(o.d) >= d_star(0.3)]
    assert past
    assert all(o.second_round_votes_a == o.second_round_votes_b == 0 for o in past)


@pytest.mark.parametrize("c", [0.1, 0.2])
def test_no_second_round_votes_past_sharp_threshold(c):
    params = ElectionParams(0.52, c, 101, 500.0)
    s = simulate_av(SimConfig(params, 300, seed=23, policy="LargestRoot", record_detail=True))
    past = [o for o in s.outcomes if abs(o.d) >= d_star_sharp(c)]
    assert past
    assert all(o.second_round_votes_a == o.second_round_votes_b == 0 for o in past)


def test_policies_differ_where_equilibria_are_multiple():
    eqs = enumerate_equilibria(0.2, 3, 1e4, 0.575)
    assert select_equilibrium(eqs, SelectionPolicy.NO_SHOW_PREFERRED).kind.value == "NoShow"
    small = select_equilibrium(eqs, SelectionPolicy.SMALLEST_ROOT)
    large = select_equilibrium(eqs, SelectionPolicy.LARGEST_ROOT)
    assert small.x_a + small.x_b < large.x_a + large.x_b


def test_win_rate_matches_group_majority():
    s = simulate_av(SimConfig(DESK, 10_000, seed=99))
    pmf = _lead_pmf(DESK.n1, DESK.p_a)
    # runs at |d| = 1 have no equilibrium at c = 0.3 and are excluded
    resolved_mass = 1 - pmf.get(1, 0) - pmf.get(-1, 0)
    exact = (ag_majority_prob(DESK.n1, DESK.p_a) - pmf.get(1, 0)) / resolved_mass
    assert abs(s.a_win_rate - exact) <= 3 * math.sqrt(exact * (1 - exact) / s.resolved_runs)


def test_voluntary_turnout_clamp_warns():
    with pytest.warns(RuntimeWarning, match="clamped"):
        simulate_one_round_voluntary(ElectionParams(0.6, 0.1, 1, 2.0), 50, seed=1)


def test_voluntary_turnout_is_bounded():
    params = ElectionParams(0.525, 0.2, 1, 1e4 - 1)
    s = simulate_one_round_voluntary(params, 2000, seed=4)
    x = solve_symmetric(0.2)
    assert abs(s.mean_votes - 2 * x) < 3 * s.votes_se


def test_voluntary_voting_vanishes_near_half_cost():
    s = simulate_one_round_voluntary(ElectionParams(0.6, 0.4999, 1, 1e4), 500, seed=4)
    assert s.mean_votes < 0.05


def test_compulsory_majority_and_welfare():
    params = ElectionParams(0.525, 0.3, 1, 1e5 - 1)
    s = simulate_one_round_compulsory(params, 1000, seed=6)
    assert s.a_win_rate >= 0.999
    welfare = [o.realized_welfare for o in simulate_one_round_compulsory(params, 1000, seed=6,
                                                                          record_detail=True).outcomes]
    se = np.std(welfare, ddof=1) / math.sqrt(len(welfare))
    assert abs(s.mean_welfare - (0.525 - 0.3)) < 3 * se + 1e-12


def test_empty_electorate_is_a_coin_flip():
    params = ElectionParams(0.9, 0.3, 1, 1e-6)
    s = simulate_one_round_compulsory(params, 4000, seed=12, record_detail=True)
    empty = [o for o in s.outcomes if o.population == 0]
    assert len(empty) > 1000
    rate = sum(o.winner == "A" for o in empty) / len(empty)
    assert abs(rate - 0.5) < 3 * math.sqrt(0.25 / len(empty))
    assert all(math.isnan(o.realized_welfare) for o in empty)


def test_realized_welfare_helper():
    assert realized_welfare("A", 6, 10, 4, 0.25) == pytest.approx((6 - 1) / 10)
    assert realized_welfare("B", 6, 10, 0, 0.25) == pytest.approx(0.4)
    assert math.isnan(realized_welfare("A", 0, 0, 0, 0.1))


def test_jsonl_stream():
    s = simulate_av(SimConfig(DESK, 5, seed=1, record_detail=True))
    buf = io.StringIO()
    write_jsonl(s.outcomes, buf, header={"seed": 1})
    lines = buf.getvalue().splitlines()
    assert json.loads(lines[0]) == {"header": {"seed": 1}}
    assert [json.loads(line)["run"] for line in lines[1:]] == list(range(5))


def test_summary_dict_is_json_ready():
    s = simulate_av(SimConfig(DESK, 50, seed=1))
    d = s.as_dict()
    json.dumps(d)
    assert "outcomes" not in d and d["unresolved_runs"] == s.unresolved_runs
