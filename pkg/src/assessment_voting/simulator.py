"""Seeded Monte-Carlo runs of assessment voting and of one-round voting.

Each run draws from its own counter-based stream keyed by ``(seed, stream,
run_index)``, so results do not depend on execution order or on how runs
are split across worker processes. Means are accumulated with ``math.fsum``
over outcomes sorted by run index.
"""
from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .equilibrium import Equilibrium, EquilibriumKind, EquilibriumSet, enumerate_equilibria, solve_symmetric
from .poisson_core import DEFAULT_TOL, SeriesTolerance
from .sizing_welfare import ElectionParams

# stream tags keep the three procedures on unrelated random streams
_STREAM_AV = 0
_STREAM_VOLUNTARY = 1
_STREAM_COMPULSORY = 2


class SelectionPolicy(str, Enum):
    NO_SHOW_PREFERRED = "NoShowPreferred"
    SMALLEST_ROOT = "SmallestRoot"
    LARGEST_ROOT = "LargestRoot"


def run_rng(seed: int, run_index: int, stream: int = _STREAM_AV) -> np.random.Generator:
    """Independent generator for one run, derived from the master seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream, run_index))
    return np.random.Generator(np.random.Philox(ss))


def _check_seed(seed: int) -> int:
    if int(seed) != seed or not (0 <= seed < 2**64):
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return int(seed)


@dataclass(frozen=True)
class SimConfig:
    params: ElectionParams
    runs: int
    seed: int = 0
    policy: SelectionPolicy = SelectionPolicy.NO_SHOW_PREFERRED
    record_detail: bool = False
    workers: int = 1
    tol: SeriesTolerance = DEFAULT_TOL

    def __post_init__(self):
        if int(self.runs) != self.runs or self.runs < 1:
            raise ValueError(f"runs must be a positive integer, got {self.runs}")
        _check_seed(self.seed)
        object.__setattr__(self, "policy", SelectionPolicy(self.policy))
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class SimOutcome:
    run: int
    d: int
    n2_realized: int
    second_round_votes_a: int
    second_round_votes_b: int
    winner: str
    total_cost: float
    realized_welfare: float
    population: int
    supporters_a: int
    voters: int
    resolved: bool = True
    equilibrium: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass(frozen=True)
class SimSummary:
    runs: int
    resolved_runs: int
    a_wins: int
    a_win_rate: float
    a_win_se: float
    no_show_rate: float
    mean_welfare: float
    mean_total_cost: float
    mean_votes: float
    votes_se: float
    d_histogram: dict = field(default_factory=dict)
    outcomes: tuple = field(default=(), repr=False)

    @property
    def unresolved_runs(self) -> int:
        return self.runs - self.resolved_runs

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("outcomes")
        out["unresolved_runs"] = self.unresolved_runs
        out["d_histogram"] = {str(k): v for k, v in sorted(self.d_histogram.items())}
        return out


def select_equilibrium(eqs: EquilibriumSet, policy: SelectionPolicy) -> Equilibrium | None:
    """Pick one equilibrium; ``None`` when the set is empty."""
    if not eqs.items:
        return None
    no_show = [e for e in eqs.items if e.kind is EquilibriumKind.NO_SHOW]
    voting = sorted((e for e in eqs.items if e.kind is not EquilibriumKind.NO_SHOW),
                    key=lambda e: (e.x_a + e.x_b, e.x_b))
    if policy is SelectionPolicy.NO_SHOW_PREFERRED:
        return no_show[0] if no_show else voting[0]
    if not voting:
        return no_show[0]
    return voting[0] if policy is SelectionPolicy.SMALLEST_ROOT else voting[-1]


def realized_welfare(winner: str, supporters_a: int, population: int, voters: int, c: float) -> float:
    """Population-average utility: winners get 1, voters pay ``c``."""
    if population == 0:
        return math.nan
    winners = supporters_a if winner == "A" else population - supporters_a
    return (winners - c * voters) / population


def _equilibrium_for(d: int, config: SimConfig) -> Equilibrium | None:
    p = config.params
    mixed = config.policy is not SelectionPolicy.NO_SHOW_PREFERRED or abs(d) <= 1
    eqs = enumerate_equilibria(p.c, d, p.n2, p.p_a, config.tol, include_mixed=mixed)
    return select_equilibrium(eqs, config.policy)


def _one_av_run(config: SimConfig, r: int) -> SimOutcome:
    p = config.params
    rng = run_rng(config.seed, r, _STREAM_AV)
    n_a1 = int(rng.binomial(p.n1, p.p_a))
    d = 2 * n_a1 - p.n1
    n_a2 = int(rng.poisson(p.n2 * p.p_a))
    n_b2 = int(rng.poisson(p.n2 * p.p_b))
    eq = _equilibrium_for(d, config)
    population = p.n1 + n_a2 + n_b2
    if eq is None:
        return SimOutcome(r, d, n_a2 + n_b2, 0, 0, "", math.nan, math.nan,
                          population, n_a1 + n_a2, p.n1, resolved=False)
    va = int(rng.binomial(n_a2, min(1.0, eq.alpha_a)))
    vb = int(rng.binomial(n_b2, min(1.0, eq.alpha_b)))
    coin = rng.random()
    tally = d + va - vb
    winner = "A" if tally > 0 or (tally == 0 and coin < 0.5) else "B"
    voters = p.n1 + va + vb
    return SimOutcome(r, d, n_a2 + n_b2, va, vb, winner, p.c * voters,
                      realized_welfare(winner, n_a1 + n_a2, population, voters, p.c),
                      population, n_a1 + n_a2, voters, True, eq.kind.value)


def _run_chunk(args) -> list:
    fn, config, lo, hi = args
    return [fn(config, r) for r in range(lo, hi)]


def _run_all(fn, config, runs: int, workers: int) -> list:
    if workers <= 1 or runs < 2 * workers:
        return [fn(config, r) for r in range(runs)]
    step = math.ceil(runs / workers)
    chunks = [(fn, config, lo, min(runs, lo + step)) for lo in range(0, runs, step)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, chunks))
    return [o for part in parts for o in part]


def _mean_se(values: list) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / n
    if n == 1:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def summarize(outcomes: list, record_detail: bool, second_round: bool) -> SimSummary:
    outcomes = sorted(outcomes, key=lambda o: o.run)
    resolved = [o for o in outcomes if o.resolved]
    k = len(resolved)
    a_wins = sum(o.winner == "A" for o in resolved)
    rate = a_wins / k if k else math.nan
    se = math.sqrt(rate * (1 - rate) / k) if k else math.nan
    if second_round:
        votes = [o.second_round_votes_a + o.second_round_votes_b for o in resolved]
    else:
        votes = [o.voters for o in resolved]
    no_show = sum(v == 0 for v in votes) / k if k else math.nan
    welfare = [o.realized_welfare for o in resolved if not math.isnan(o.realized_welfare)]
    mean_votes, votes_se = _mean_se(votes)
    hist = dict(sorted(Counter(o.d for o in outcomes).items())) if second_round else {}
    return SimSummary(
        runs=len(outcomes), resolved_runs=k, a_wins=a_wins, a_win_rate=rate, a_win_se=se,
        no_show_rate=no_show,
        mean_welfare=_mean_se(welfare)[0],
        mean_total_cost=_mean_se([o.total_cost for o in resolved])[0],
        mean_votes=mean_votes, votes_se=votes_se, d_histogram=hist,
        outcomes=tuple(outcomes) if record_detail else (),
    )


def simulate_av(config: SimConfig) -> SimSummary:
    """Two-round assessment voting.

    The group votes sincerely, the second-round game is solved at the
    realized lead and one equilibrium is picked by ``config.policy``. Runs
    with ``|d| <= 1`` and no totally mixed solution are counted as
    unresolved and left out of the rates.
    """
    outcomes = _run_all(_one_av_run, config, config.runs, config.workers)
    return summarize(outcomes, config.record_detail, second_round=True)


def _turnout_probs(params: ElectionParams, tol: SeriesTolerance) -> tuple[float, float]:
    x = solve_symmetric(params.c, tol)
    out = []
    for share in (params.p_a, params.p_b):
        alpha = x / (params.n * share)
        if alpha > 1:
            warnings.warn(f"turnout probability {alpha:.6g} exceeds one for a population "
                          f"of {params.n * share:.6g}; clamped to 1", RuntimeWarning, stacklevel=3)
            alpha = 1.0
        out.append(alpha)
    return out[0], out[1]


@dataclass(frozen=True)
class _OneRoundJob:
    params: ElectionParams
    seed: int
    stream: int
    alpha_a: float
    alpha_b: float


def _one_round_run(job: _OneRoundJob, r: int) -> SimOutcome:
    p = job.params
    rng = run_rng(job.seed, r, job.stream)
    n_a = int(rng.poisson(p.n * p.p_a))
    n_b = int(rng.poisson(p.n * p.p_b))
    va = int(rng.binomial(n_a, job.alpha_a))
    vb = int(rng.binomial(n_b, job.alpha_b))
    coin = rng.random()
    winner = "A" if va > vb or (va == vb and coin < 0.5) else "B"
    population = n_a + n_b
    voters = va + vb
    return SimOutcome(r, 0, population, va, vb, winner, p.c * voters,
                      realized_welfare(winner, n_a, population, voters, p.c),
                      population, n_a, voters)


def simulate_one_round_voluntary(params: ElectionParams, runs: int, seed: int = 0,
                                 tol: SeriesTolerance = DEFAULT_TOL, workers: int = 1,
                                 record_detail: bool = False) -> SimSummary:
    """One round in which each type turns out with expected ``x`` voters."""
    SimConfig(params, runs, seed)
    alpha_a, alpha_b = _turnout_probs(params, tol)
    job = _OneRoundJob(params, seed, _STREAM_VOLUNTARY, alpha_a, alpha_b)
    return summarize(_run_all(_one_round_run, job, runs, workers), record_detail, second_round=False)


def simulate_one_round_compulsory(params: ElectionParams, runs: int, seed: int = 0,
                                  workers: int = 1, record_detail: bool = False) -> SimSummary:
    """One round in which every citizen votes sincerely and pays ``c``."""
    SimConfig(params, runs, seed)
    job = _OneRoundJob(params, seed, _STREAM_COMPULSORY, 1.0, 1.0)
    return summarize(_run_all(_one_round_run, job, runs, workers), record_detail, second_round=False)


def write_jsonl(outcomes, fh, header: dict | None = None) -> None:
    """Stream per-run records; an optional first line carries the config."""
    if header is not None:
        fh.write(json.dumps({"header": header}) + "\n")
    for o in outcomes:
        fh.write(o.to_json() + "\n")
