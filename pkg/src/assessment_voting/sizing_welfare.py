"""Assessment-group sizing and the welfare comparison against one-round voting."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

from scipy import stats

from .equilibrium import as_cost, d_star, solve_symmetric
from .poisson_core import DEFAULT_TOL, SeriesTolerance, poisson_expectation, skellam_a_wins


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class ElectionParams:
    """Population and cost primitives.

    ``n1`` is the (fixed) assessment-group size and ``n2`` the Poisson mean
    of the second-round population.
    """

    p_a: float
    c: float
    n1: int
    n2: float

    def __post_init__(self):
        if not (0.5 < self.p_a < 1):
            raise ValueError(f"p_a must lie in (1/2, 1), got {self.p_a}")
        as_cost(self.c)
        if int(self.n1) != self.n1 or self.n1 < 1:
            raise ValueError(f"n1 must be a positive integer, got {self.n1}")
        if not (self.n2 > 0 and math.isfinite(self.n2)):
            raise ValueError(f"n2 must be a positive finite number, got {self.n2}")

    @property
    def p_b(self) -> float:
        return 1.0 - self.p_a

    @property
    def gap(self) -> float:
        return self.p_a - self.p_b

    @property
    def n(self) -> float:
        return self.n1 + self.n2


@dataclass(frozen=True)
class SizingResult:
    epsilon: float
    c: float
    gap: float
    d_star: int
    n1_star: int
    terms: tuple[float, float, float]

    def as_row(self) -> dict:
        t1, t2, t3 = self.terms
        return {"c": self.c, "d_star": self.d_star, "gap": self.gap, "epsilon": self.epsilon,
                "n1_star": self.n1_star, "term1": t1, "term2": t2, "term3": t3}


def n1_star(epsilon: float, c, gap: float) -> SizingResult:
    """Assessment-group size that reaches a lead of ``d_star(c)`` w.p. >= 1 - epsilon.

    ``ceil(d/g + L/g**2 + sqrt(2 d g L + L**2)/g**2)`` with ``L = ln(2/eps)``,
    the positive root of the Hoeffding condition in the group size.
    """
    if not (0 < epsilon < 1):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not (0 < gap < 1):
        raise ValueError(f"gap must lie in (0, 1), got {gap}")
    c = as_cost(c)
    d = d_star(c)
    log_term = math.log(2.0 / epsilon)
    t1 = d / gap
    t2 = log_term / gap**2
    t3 = math.sqrt(2.0 * d * gap * log_term + log_term**2) / gap**2
    return SizingResult(epsilon, c, gap, d, math.ceil(t1 + t2 + t3), (t1, t2, t3))


def hoeffding_failure_bound(n1: int, gap: float, d_star: int) -> float:
    """Upper bound on ``P(D <= d_star)`` for the first-round lead ``D``."""
    margin = n1 * gap - d_star
    if margin <= 0:
        raise PreconditionError(
            f"bound needs n1*gap > d_star, got n1*gap={n1 * gap} <= {d_star}")
    return 2.0 * math.exp(-margin * margin / (2.0 * n1))


TABLE2_COSTS = (0.005, 0.01, 0.1, 0.3)
TABLE2_GAPS = (0.05, 0.15)
TABLE2_EPSILONS = (0.1, 0.01)
TABLE2_FIELDS = ("c", "d_star", "gap", "epsilon", "n1_star", "term1", "term2", "term3")


@dataclass(frozen=True)
class SizingTable:
    cells: tuple[SizingResult, ...]

    @property
    def d_stars(self) -> dict[float, int]:
        return {cell.c: cell.d_star for cell in self.cells}

    def lookup(self, c: float, gap: float, epsilon: float) -> SizingResult:
        for cell in self.cells:
            if (cell.c, cell.gap, cell.epsilon) == (c, gap, epsilon):
                return cell
        raise KeyError((c, gap, epsilon))

    def rows(self) -> list[dict]:
        return [cell.as_row() for cell in self.cells]

    def to_csv(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=TABLE2_FIELDS, delimiter=delimiter,
                                lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.rows(), indent=2)


def reproduce_table2(costs=TABLE2_COSTS, gaps=TABLE2_GAPS, epsilons=TABLE2_EPSILONS) -> SizingTable:
    """Group sizes in row-major order over cost, gap and epsilon."""
    return SizingTable(tuple(n1_star(e, c, g) for c in costs for g in gaps for e in epsilons))


@dataclass(frozen=True)
class Violation:
    axis: str
    fixed: tuple
    lower: float
    higher: float
    n1_at_lower: int
    n1_at_higher: int


@dataclass(frozen=True)
class MonotonicityReport:
    checked: int
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations


def n1_star_monotonicity_report(epsilons, costs, gaps) -> MonotonicityReport:
    """Check that the group size never grows when epsilon, gap or c grows."""
    axes = {"epsilon": sorted(epsilons), "c": sorted(costs), "gap": sorted(gaps)}
    for name, values in axes.items():
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError(f"{name} grid must be strictly ordered without repeats")
    size = {}
    for e in axes["epsilon"]:
        for c in axes["c"]:
            for g in axes["gap"]:
                size[(e, c, g)] = n1_star(e, c, g).n1_star
    violations = []
    checked = 0
    for pos, name in enumerate(("epsilon", "c", "gap")):
        values = axes[name]
        for key in size:
            if key[pos] != values[0]:
                continue
            for lo, hi in zip(values, values[1:]):
                k_lo = key[:pos] + (lo,) + key[pos + 1:]
                k_hi = key[:pos] + (hi,) + key[pos + 1:]
                checked += 1
                if size[k_hi] > size[k_lo]:
                    fixed = tuple(v for i, v in enumerate(key) if i != pos)
                    violations.append(Violation(name, fixed, lo, hi, size[k_lo], size[k_hi]))
    return MonotonicityReport(checked, tuple(violations))


# --------------------------------------------------------------------------
# welfare


def ag_majority_prob(n1: int, p_a: float) -> float:
    """Probability that a sincere group of ``n1`` picks A, ties split evenly."""
    half = n1 // 2
    prob = stats.binom.sf(half, n1, p_a)
    if n1 % 2 == 0:
        prob += 0.5 * stats.binom.pmf(half, n1, p_a)
    return float(prob)


def expected_group_share(n1: int, n2: float) -> float:
    """``E[n1 / (n1 + N2)]`` for ``N2 ~ Poisson(n2)``."""
    return poisson_expectation(lambda k: n1 / (n1 + k), n2)


def group_share_bound(n1: int, n2: float) -> float:
    return n1 / n2 * -math.expm1(-n2)


@dataclass(frozen=True)
class WelfareReport:
    w_av: float
    w_vol: float
    w_com: float
    w_lower: float
    f_exact: float
    f_bound: float
    p_a_wins_com: float
    p_a_wins_av: float
    voluntary_turnout: float
    epsilon: float
    n1_star: int

    @property
    def av_margin(self) -> float:
        return self.w_av - max(self.w_vol, self.w_com)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["av_margin"] = self.av_margin
        return out


def welfare_report(params: ElectionParams, epsilon: float = 0.1,
                   tol: SeriesTolerance = DEFAULT_TOL,
                   turnout: str = "both_types") -> WelfareReport:
    """Average welfare under assessment voting and the two one-round benchmarks.

    ``turnout="both_types"`` charges the voluntary benchmark for the
    expected votes of both types (``2x``); ``"single"`` charges ``x``.
    The assessment-voting figure assumes nobody votes in the second round.
    """
    if turnout not in ("both_types", "single"):
        raise ValueError(f"turnout must be 'both_types' or 'single', got {turnout!r}")
    c = params.c
    x = solve_symmetric(c, tol)
    votes = 2 * x if turnout == "both_types" else x
    w_vol = 0.5 - votes * c / params.n

    p_com = skellam_a_wins(params.n * params.p_a, params.n * params.p_b, 0, tol)
    w_com = p_com * params.p_a + (1 - p_com) * params.p_b - c

    p_av = ag_majority_prob(params.n1, params.p_a)
    f_exact = expected_group_share(params.n1, params.n2)
    w_av = p_av * params.p_a + (1 - p_av) * params.p_b - f_exact * c

    return WelfareReport(
        w_av=w_av, w_vol=w_vol, w_com=w_com, w_lower=-c,
        f_exact=f_exact, f_bound=group_share_bound(params.n1, params.n2),
        p_a_wins_com=p_com, p_a_wins_av=p_av, voluntary_turnout=votes,
        epsilon=epsilon, n1_star=n1_star(epsilon, c, params.gap).n1_star,
    )
