import json

import pytest
from hypothesis import assume, given, strategies as st
from scipy import stats

from assessment_voting.equilibrium import solve_symmetric
from assessment_voting.sizing_welfare import (
    TABLE2_FIELDS,
    ElectionParams,
    PreconditionError,
    ag_majority_prob,
    expected_group_share,
    group_share_bound,
    hoeffding_failure_bound,
    n1_star,
    n1_star_monotonicity_report,
    reproduce_table2,
    welfare_report,
)

# row-major over c, gap, epsilon; the (0.005, 0.05, 0.01) cell is the ceiling
# of 152788.316, one more than the reference integer
TABLE = {
    (0.005, 0.05, 0.1): 146049, (0.005, 0.05, 0.01): 152789,
    (0.005, 0.15, 0.1): 45945, (0.005, 0.15, 0.01): 47160,
    (0.01, 0.05, 0.1): 41856, (0.01, 0.05, 0.01): 45769,
    (0.01, 0.15, 0.1): 12433, (0.01, 0.15, 0.01): 13097,
    (0.1, 0.05, 0.1): 3003, (0.1, 0.05, 0.01): 4858,
    (0.1, 0.15, 0.1): 455, (0.1, 0.15, 0.01): 668,
    (0.3, 0.05, 0.1): 2476, (0.3, 0.05, 0.01): 4319,
    (0.3, 0.15, 0.1): 293, (0.3, 0.15, 0.01): 498,
}


def test_table_cells():
    table = reproduce_table2()
    assert [(c.c, c.gap, c.epsilon) for c in table.cells] == list(TABLE)
    assert {k: table.lookup(*k).n1_star for k in TABLE} == TABLE
    assert table.d_stars == {0.005: 6367, 0.01: 1592, 0.1: 16, 0.3: 2}


def test_the_disputed_cell_is_a_ceiling():
    cell = n1_star(0.01, 0.005, 0.05)
    raw = sum(cell.terms)
    assert raw == pytest.approx(152788.316, abs=1e-3)
    assert hoeffding_failure_bound(152788, 0.05, 6367) > 0.01
    assert hoeffding_failure_bound(152789, 0.05, 6367) <= 0.01


@given(st.floats(1e-6, 0.5), st.floats(0.01, 0.49), st.floats(0.01, 0.9))
def test_n1_star_is_the_smallest_size_meeting_the_bound(eps, c, gap):
    res = n1_star(eps, c, gap)
    assert hoeffding_failure_bound(res.n1_star, gap, res.d_star) <= eps * (1 + 1e-12)
    if (res.n1_star - 1) * gap > res.d_star:
        assert hoeffding_failure_bound(res.n1_star - 1, gap, res.d_star) > eps * (1 - 1e-12)


def test_hoeffding_precondition():
    with pytest.raises(PreconditionError):
        hoeffding_failure_bound(100, 0.05, 16)


def test_sizing_argument_validation():
    with pytest.raises(ValueError):
        n1_star(0.0, 0.1, 0.05)
    with pytest.raises(ValueError):
        n1_star(0.1, 0.6, 0.05)
    with pytest.raises(ValueError):
        n1_star(0.1, 0.1, 1.5)


def test_monotonicity_report():
    report = n1_star_monotonicity_report([0.001, 0.01, 0.1, 0.3], [0.005, 0.05, 0.2, 0.4],
                                         [0.02, 0.1, 0.3])
    assert report.ok and report.checked > 0


def test_table_serialisation():
    table = reproduce_table2()
    lines = table.to_csv().strip().splitlines()
    assert lines[0].split(",") == list(TABLE2_FIELDS)
    assert len(lines) == 17
    rows = json.loads(table.to_json())
    assert [r["n1_star"] for r in rows] == list(TABLE.values())


def test_election_params_validation():
    with pytest.raises(ValueError):
        ElectionParams(0.5, 0.1, 10, 100.0)
    with pytest.raises(ValueError):
        ElectionParams(0.6, 0.1, 0, 100.0)
    with pytest.raises(ValueError):
        ElectionParams(0.6, 0.1, 10, 0.0)
    p = ElectionParams(0.575, 0.3, 293, 1e5)
    assert p.p_b == pytest.approx(0.425) and p.gap == pytest.approx(0.15)


@given(st.integers(1, 400), st.floats(0.5, 0.99))
def test_group_majority_matches_direct_sum(n1, p):
    direct = 0.0
    for k in range(n1 + 1):
        w = stats.binom.pmf(k, n1, p)
        direct += w if 2 * k > n1 else (0.5 * w if 2 * k == n1 else 0.0)
    assert ag_majority_prob(n1, p) == pytest.approx(direct, abs=1e-12)


@given(st.integers(1, 2000), st.floats(0.1, 1e6))
def test_group_share_below_bound(n1, n2):
    exact = expected_group_share(n1, n2)
    assert 0 < exact <= group_share_bound(n1, n2) * (1 + 1e-12)
    assert exact <= 1.0


def test_welfare_report_at_desk_scale():
    r = welfare_report(ElectionParams(0.575, 0.3, 293, 1e5))
    assert r.w_av > max(r.w_vol, r.w_com)
    assert r.av_margin == pytest.approx(r.w_av - max(r.w_vol, r.w_com))
    assert r.n1_star == 293


def test_compulsory_welfare_at_large_population():
    r = welfare_report(ElectionParams(0.575, 0.3, 293, 1e6 - 293))
    assert r.w_com == pytest.approx(0.575 - 0.3, abs=1e-4)


def test_turnout_variants():
    p = ElectionParams(0.575, 0.3, 293, 1e3)
    both = welfare_report(p)
    single = welfare_report(p, turnout="single")
    assert both.voluntary_turnout == pytest.approx(2 * single.voluntary_turnout)
    assert both.w_vol < single.w_vol
    with pytest.raises(ValueError):
        welfare_report(p, turnout="other")


@given(st.floats(0.51, 0.99), st.floats(0.01, 0.49), st.integers(1, 500), st.floats(1, 1e5))
def test_welfare_values_are_bounded(p_a, c, n1, n2):
    # the voluntary formula charges 2x voters, which only makes sense when
    # the population is at least that large
    assume(n1 + n2 >= 2 * solve_symmetric(c))
    r = welfare_report(ElectionParams(p_a, c, n1, n2))
    for w in (r.w_av, r.w_vol, r.w_com):
        assert -c - 1e-12 <= w <= 1.0
    assert r.w_lower == -c


def test_hoeffding_bound_examples():
    assert hoeffding_failure_bound(10**9, 0.1, 16) < 1e-300
    assert hoeffding_failure_bound(3003, 0.05, 16) <= 0.1


@pytest.mark.parametrize("n1", [1, 10, 293, 3003])
@pytest.mark.parametrize("n2", [1, 100, 1e4, 1e6])
def test_group_share_grid(n1, n2):
    assert expected_group_share(n1, n2) <= group_share_bound(n1, n2)


def test_group_share_vanishes_for_large_second_round():
    assert expected_group_share(293, 1e6) < 1e-3


def test_single_group_member_decides():
    for n2 in (1.0, 1e3, 1e6):
        assert welfare_report(ElectionParams(0.9, 0.2, 1, n2)).p_a_wins_av == pytest.approx(0.9, abs=1e-15)


def test_compulsory_welfare_limit_is_tight():
    r = welfare_report(ElectionParams(0.525, 0.3, 293, 1e6 - 293))
    assert abs(r.w_com - (0.525 - 0.3)) < 1e-6


@given(st.floats(0.51, 0.95), st.integers(0, 300))
def test_group_majority_grows_with_odd_size(p, k):
    n = 2 * k + 1
    assert ag_majority_prob(n + 2, p) >= ag_majority_prob(n, p) - 1e-15


def test_monotonicity_examples():
    assert n1_star(0.1, 0.1, 0.05).n1_star <= n1_star(0.01, 0.1, 0.05).n1_star
    assert n1_star(0.1, 0.3, 0.05).n1_star >= n1_star(0.1, 0.3, 0.15).n1_star
    assert n1_star(0.1, 0.01, 0.05).n1_star >= n1_star(0.1, 0.1, 0.05).n1_star
