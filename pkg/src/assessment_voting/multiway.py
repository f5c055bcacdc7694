"""Sub-type profiles and the m-alternative no-show check.

Alternatives are indexed ``0..m-1``. The focal alternative is the one with
the fewest first-round votes; the gain computed here is what one of its
supporters expects from casting an extra second-round vote when the other
citizens vote with the given Poisson intensities.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import pdtr

from .equilibrium import as_cost, d_star
from .poisson_core import (DEFAULT_TOL, SeriesTolerance, TruncationError, log_poisson_pmf_array,
                           log_poisson_pmf, pivot_benefit_a, PivotQuery,
                           poisson_window)
from .simulator import run_rng, _check_seed

MAX_ALTERNATIVES = 8
_STREAM_MULTIWAY = 3


@dataclass(frozen=True)
class SubtypeProfile:
    x_a_list: tuple[float, ...]
    x_b_list: tuple[float, ...]

    def __post_init__(self):
        for name in ("x_a_list", "x_b_list"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} must not be empty")
            if any(not math.isfinite(v) or v < 0 for v in values):
                raise ValueError(f"{name} entries must be finite and >= 0")
            object.__setattr__(self, name, values)

    @property
    def sigma_a(self) -> float:
        return math.fsum(self.x_a_list)

    @property
    def sigma_b(self) -> float:
        return math.fsum(self.x_b_list)


@dataclass(frozen=True)
class MultiAltSpec:
    """Utilities by preference rank and second-round intensities by alternative.

    ``ranking`` is the focal supporter's order over alternatives, best
    first. When omitted the focal alternative comes first and the others
    follow in index order.
    """

    utilities: tuple[float, ...]
    vote_intensities: tuple[float, ...]
    ranking: tuple[int, ...] | None = None

    def __post_init__(self):
        u = tuple(float(v) for v in self.utilities)
        eta = tuple(float(v) for v in self.vote_intensities)
        if len(u) < 2:
            raise ValueError("need at least two alternatives")
        if len(u) > MAX_ALTERNATIVES:
            raise ValueError(f"at most {MAX_ALTERNATIVES} alternatives are supported, got {len(u)}")
        if len(eta) != len(u):
            raise ValueError("utilities and vote_intensities must have the same length")
        if u[0] != 1.0 or u[-1] != 0.0 or any(b > a for a, b in zip(u, u[1:])):
            raise ValueError("utilities must be non-increasing from 1 down to 0")
        if any(not math.isfinite(v) or v < 0 for v in eta):
            raise ValueError("vote intensities must be finite and >= 0")
        if self.ranking is not None:
            ranking = tuple(int(r) for r in self.ranking)
            if sorted(ranking) != list(range(len(u))):
                raise ValueError("ranking must be a permutation of the alternatives")
            object.__setattr__(self, "ranking", ranking)
        object.__setattr__(self, "utilities", u)
        object.__setattr__(self, "vote_intensities", eta)

    @property
    def m(self) -> int:
        return len(self.utilities)

    def utility_by_alternative(self, focal: int) -> np.ndarray:
        ranking = self.ranking
        if ranking is None:
            ranking = (focal,) + tuple(j for j in range(self.m) if j != focal)
        elif ranking[0] != focal:
            raise ValueError(f"ranking must start with the focal alternative {focal}")
        out = np.empty(self.m)
        for rank, alt in enumerate(ranking):
            out[alt] = self.utilities[rank]
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "MultiAltSpec":
        data = json.loads(text)
        unknown = set(data) - {"utilities", "vote_intensities", "ranking"}
        if unknown:
            raise ValueError(f"unknown keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class FirstRoundTally:
    a: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(v) for v in self.a)
        if any(v < 0 for v in a):
            raise ValueError("tallies must be >= 0")
        if any(y < x for x, y in zip(a, a[1:])):
            raise ValueError("tallies must be sorted ascending")
        object.__setattr__(self, "a", a)


# --------------------------------------------------------------------------
# multiple sub-types


def _cutoff(lam: float, eps: float = 1e-20) -> int:
    """Count beyond which ``Poisson(lam)`` has mass below ``eps``."""
    if lam == 0:
        return 0
    k = math.ceil(lam) + 1
    # past the mode the tail is below pmf(k) * r / (1 - r) with r = lam / (k + 1)
    while True:
        r = lam / (k + 1)
        if math.exp(log_poisson_pmf(k, lam)) * r / (1 - r) < eps:
            return k
        k += 1


def _truncated_pmf(lam: float) -> np.ndarray:
    return np.exp(log_poisson_pmf_array(np.arange(_cutoff(lam) + 1), lam))


def multitype_pivot_lhs(profile: SubtypeProfile, d: int, tol: SeriesTolerance = DEFAULT_TOL,
                        method: str = "collapsed", max_cells: int = 5_000_000) -> float:
    """Right-hand side of the A-side indifference condition with sub-types.

    ``method="collapsed"`` sums the sub-type intensities first, which the
    multinomial theorem justifies. ``method="direct"`` sums over the full
    multi-index of A sub-type counts against the convolved B sub-type
    distribution, without using that identity.
    """
    if int(d) != d or d < 1:
        raise ValueError(f"d must be an integer >= 1, got {d}")
    d = int(d)
    if method == "collapsed":
        return 2.0 * pivot_benefit_a(PivotQuery(profile.sigma_a, profile.sigma_b, d), tol)
    if method != "direct":
        raise ValueError(f"method must be 'collapsed' or 'direct', got {method!r}")

    pmfs_a = [_truncated_pmf(x) for x in profile.x_a_list]
    cells = math.prod(len(p) for p in pmfs_a)
    if cells > max_cells:
        raise TruncationError(f"direct sum needs {cells} cells, above max_cells={max_cells}",
                              math.nan, math.nan)
    b_total = np.array([1.0])
    for x in profile.x_b_list:
        b_total = np.convolve(b_total, _truncated_pmf(x))
    need = sum(len(p) - 1 for p in pmfs_a) + d + 2
    if len(b_total) < need:
        b_total = np.concatenate([b_total, np.zeros(need - len(b_total))])

    weight = np.ones(())
    total_k = np.zeros((), dtype=int)
    for p in pmfs_a:
        weight = np.multiply.outer(weight, p)
        total_k = np.add.outer(total_k, np.arange(len(p)))
    terms = weight * (b_total[total_k + d] + b_total[total_k + d + 1])
    return math.fsum(terms.ravel())


# --------------------------------------------------------------------------
# several alternatives


def strictly_fewer_prob(x: int, others) -> float:
    """``prod_j P(a_j + Poisson(eta_j) < x)`` over ``others = [(a_j, eta_j), ...]``."""
    prob = 1.0
    for a_j, eta_j in others:
        need = x - a_j  # second-round votes must stay below this
        if need <= 0:
            return 0.0
        prob *= 1.0 if eta_j == 0 else float(pdtr(need - 1, eta_j))
    return prob


def gain_if_equal(u_group) -> float:
    """Gain from breaking a tie between the focal alternative and ``u_group``."""
    return 1.0 - (1.0 + math.fsum(u_group)) / (1 + len(u_group))


def gain_if_low(u_group) -> float:
    """Gain from joining a tie with ``u_group``, one vote behind it."""
    s = math.fsum(u_group)
    return (1.0 + s) / (1 + len(u_group)) - s / len(u_group)


@dataclass(frozen=True)
class PivotTerm:
    kind: str  # "equal" or "low"
    members: tuple[int, ...]
    probability: float
    gain: float


def _count_pmf(x: np.ndarray, a_j: int, eta: float) -> np.ndarray:
    """``P(a_j + Poisson(eta) == x)`` elementwise."""
    return np.exp(log_poisson_pmf_array(x - a_j, eta))


def _below_prob(x: np.ndarray, a_j: int, eta: float) -> np.ndarray:
    """``P(a_j + Poisson(eta) < x)`` elementwise."""
    need = x - a_j - 1
    if eta == 0:
        return (need >= 0).astype(float)
    return np.where(need >= 0, pdtr(np.maximum(need, 0), eta), 0.0)


def pivot_terms(spec: MultiAltSpec, tally, focal: int = 0) -> list[PivotTerm]:
    """Every pivotal event for a supporter of ``focal`` with its probability and gain.

    ``tally`` may be unsorted; ``focal`` must hold the smallest count. For
    the tie event the sum runs over the focal total ``x`` from the largest
    first-round count in the group; for the one-behind event the group
    needs ``x + 1`` and the remaining alternatives must stay at most ``x``.
    """
    a = [int(v) for v in tally]
    m = spec.m
    if len(a) != m:
        raise ValueError(f"tally has {len(a)} entries for {m} alternatives")
    if a[focal] != min(a):
        raise ValueError("the focal alternative must have the fewest first-round votes")
    eta = spec.vote_intensities
    util = spec.utility_by_alternative(focal)
    others = [j for j in range(m) if j != focal]
    hi_focal = a[focal] + poisson_window(eta[focal])[1]

    out = []
    for size in range(1, m):
        for group in itertools.combinations(others, size):
            rest = [j for j in others if j not in group]
            u_group = [util[j] for j in group]
            # focal alternative and the group both end on x
            lo = max(a[j] for j in group)
            hi = min([hi_focal] + [a[j] + poisson_window(eta[j])[1] for j in group])
            p_eq = 0.0
            if hi >= lo:
                x = np.arange(lo, hi + 1)
                w = _count_pmf(x, a[focal], eta[focal])
                for j in group:
                    w = w * _count_pmf(x, a[j], eta[j])
                for j in rest:
                    w = w * _below_prob(x, a[j], eta[j])
                p_eq = math.fsum(w)
            out.append(PivotTerm("equal", group, p_eq, gain_if_equal(u_group)))
            # focal on x, group on x + 1, the rest at most x
            lo = max([a[focal]] + [a[j] - 1 for j in group])
            hi = min([hi_focal] + [a[j] - 1 + poisson_window(eta[j])[1] for j in group])
            p_low = 0.0
            if hi >= lo:
                x = np.arange(lo, hi + 1)
                w = _count_pmf(x, a[focal], eta[focal])
                for j in group:
                    w = w * _count_pmf(x + 1, a[j], eta[j])
                for j in rest:
                    w = w * _below_prob(x + 1, a[j], eta[j])
                p_low = math.fsum(w)
            out.append(PivotTerm("low", group, p_low, gain_if_low(u_group)))
    return out


def no_show_gain_upper(spec: MultiAltSpec, tally: FirstRoundTally, focal: int = 0,
                       tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Expected gain of a focal supporter from voting; the no-show check is ``gain < c``."""
    if not isinstance(tally, FirstRoundTally):
        tally = FirstRoundTally(tuple(tally))
    return math.fsum(t.probability * t.gain for t in pivot_terms(spec, tally.a, focal))


def d_double_star(c) -> int:
    """Lead over the trailing alternative that rules out second-round votes for it."""
    return d_star(as_cost(c) / 2)


# --------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class MultiwayRun:
    run: int
    tally: tuple[int, ...]
    certified: bool
    threshold_certified: bool
    winner: int
    gap_top_bottom: int
    gap_top_second: int
    max_gain: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass(frozen=True)
class MultiwaySummary:
    runs: int
    certified_runs: int
    threshold_certified_runs: int
    certification_rate: float
    win_counts: tuple[int, ...]
    win_rates: tuple[float, ...]
    mean_gap_top_bottom: float
    mean_gap_top_second: float
    outcomes: tuple = field(default=(), repr=False)

    @property
    def uncertified_runs(self) -> int:
        return self.runs - self.certified_runs

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("outcomes")
        out["uncertified_runs"] = self.uncertified_runs
        return out


def certify_no_show(spec: MultiAltSpec, tally, c: float) -> tuple[bool, float]:
    """Peel off the trailing alternative while its supporters gain less than ``c``.

    With two alternatives left both sides are checked, the leader through
    the two-alternative pivot. Returns the verdict and the largest gain seen.
    """
    alive = sorted(range(spec.m), key=lambda j: (tally[j], j))
    worst = 0.0
    while len(alive) >= 2:
        sub = MultiAltSpec(
            tuple(_rescaled_utilities(spec.utilities, len(alive))),
            tuple(spec.vote_intensities[j] for j in alive))
        sub_tally = tuple(tally[j] for j in alive)
        gain = no_show_gain_upper(sub, FirstRoundTally(sub_tally), 0)
        worst = max(worst, gain)
        if gain >= c:
            return False, worst
        if len(alive) == 2:
            lead = sub_tally[1] - sub_tally[0]
            q = PivotQuery(spec.vote_intensities[alive[1]], spec.vote_intensities[alive[0]], lead)
            gain = pivot_benefit_a(q)
            worst = max(worst, gain)
            return gain < c, worst
        alive = alive[1:]
    return True, worst


def _rescaled_utilities(utilities, k: int) -> list[float]:
    """Best-to-worst utilities once only ``k`` alternatives remain in play."""
    if k == len(utilities):
        return list(utilities)
    return list(utilities[:k - 1]) + [0.0]


def simulate_multiway(spec: MultiAltSpec, first_round_probs, n1: int, runs: int,
                      seed: int = 0, c: float = 0.1, record_detail: bool = False) -> MultiwaySummary:
    """Sincere first-round plurality draws followed by the no-show certification.

    Certified runs go to the first-round leader (ties split uniformly);
    uncertified runs are counted and not adjudicated.
    """
    probs = np.asarray(first_round_probs, dtype=float)
    if probs.shape != (spec.m,) or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0):
        raise ValueError("first_round_probs must be a probability vector over the alternatives")
    if int(n1) != n1 or n1 < 1:
        raise ValueError(f"n1 must be a positive integer, got {n1}")
    if int(runs) != runs or runs < 1:
        raise ValueError(f"runs must be a positive integer, got {runs}")
    _check_seed(seed)
    c = as_cost(c)
    threshold = d_double_star(c)
    cache: dict[tuple, tuple[bool, float]] = {}
    results = []
    for r in range(runs):
        rng = run_rng(seed, r, _STREAM_MULTIWAY)
        tally = tuple(int(v) for v in rng.multinomial(n1, probs))
        coin = rng.random()
        ordered = sorted(tally)
        gap_tb = ordered[-1] - ordered[0]
        gap_ts = ordered[-1] - ordered[-2]
        key = tally
        if key not in cache:
            cache[key] = certify_no_show(spec, tally, c)
        ok, worst = cache[key]
        winner = -1
        if ok:
            leaders = [j for j, v in enumerate(tally) if v == ordered[-1]]
            winner = leaders[min(int(coin * len(leaders)), len(leaders) - 1)]
        results.append(MultiwayRun(r, tally, ok, gap_tb >= threshold, winner, gap_tb, gap_ts, worst))

    certified = [o for o in results if o.certified]
    counts = Counter(o.winner for o in certified)
    win_counts = tuple(counts.get(j, 0) for j in range(spec.m))
    k = len(certified)
    return MultiwaySummary(
        runs=runs, certified_runs=k,
        threshold_certified_runs=sum(o.threshold_certified for o in results),
        certification_rate=k / runs,
        win_counts=win_counts,
        win_rates=tuple(v / k if k else math.nan for v in win_counts),
        mean_gap_top_bottom=math.fsum(o.gap_top_bottom for o in results) / runs,
        mean_gap_top_second=math.fsum(o.gap_top_second for o in results) / runs,
        outcomes=tuple(results) if record_detail else (),
    )


GRID_FIELDS = ("m", "c", "gap", "eta", "d_double_star", "gain", "certified", "above_threshold")


def certification_grid(costs, gaps, etas, m: int = 3) -> list[dict]:
    """No-show gain of the trailing alternative over a grid of leads and intensities.

    The tally puts every alternative but the leader at zero votes.
    """
    rows = []
    utilities = tuple(np.linspace(1.0, 0.0, m))
    for c in costs:
        dd = d_double_star(c)
        for gap in gaps:
            tally = FirstRoundTally((0,) * (m - 1) + (int(gap),))
            for eta in etas:
                spec = MultiAltSpec(utilities, (float(eta),) * m)
                gain = no_show_gain_upper(spec, tally, 0)
                rows.append({"m": m, "c": c, "gap": int(gap), "eta": float(eta), "d_double_star": dd,
                             "gain": gain, "certified": gain < c, "above_threshold": gap >= dd})
    return rows


def grid_to_csv(rows: list[dict], delimiter: str = ",") -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=GRID_FIELDS, delimiter=delimiter, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
