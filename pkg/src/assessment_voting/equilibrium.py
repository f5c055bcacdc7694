"""Equilibria of the second-round game after a first-round lead of ``d`` votes.

Intensities ``x_a``/``x_b`` are expected numbers of second-round votes for A
and B. A positive ``d`` means A leads after the first round; negative leads
are handled by swapping the roles of the two alternatives.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .poisson_core import (
    DEFAULT_TOL,
    PivotQuery,
    SeriesTolerance,
    log_poisson_pmf,
    log_poisson_pmf_array,
    pivot_benefit_a,
    pivot_benefit_b,
    poisson_window,
)

ROOT_RESIDUAL_TOL = 1e-10
GRID_POINTS = 400


class EquilibriumDomainError(ValueError):
    pass


@dataclass(frozen=True)
class CostParam:
    """Per-vote participation cost; must lie strictly between 0 and 1/2."""

    value: float

    def __post_init__(self):
        if not (0 < self.value < 0.5):
            raise ValueError(f"cost c must satisfy 0 < c < 1/2, got {self.value}")

    def __float__(self):
        return float(self.value)


def as_cost(c) -> float:
    return float(CostParam(float(c)))


class EquilibriumKind(str, enum.Enum):
    NO_SHOW = "NoShow"
    ONLY_B = "OnlyBVotes"
    ONLY_A = "OnlyAVotes"
    TOTALLY_MIXED = "TotallyMixed"


@dataclass(frozen=True)
class Equilibrium:
    kind: EquilibriumKind
    x_a: float
    x_b: float
    residual: float
    slack_check: float
    alpha_a: float = math.nan
    alpha_b: float = math.nan
    feasible: bool = True

    def swapped(self) -> "Equilibrium":
        kind = {EquilibriumKind.ONLY_B: EquilibriumKind.ONLY_A,
                EquilibriumKind.ONLY_A: EquilibriumKind.ONLY_B}.get(self.kind, self.kind)
        return replace(self, kind=kind, x_a=self.x_b, x_b=self.x_a,
                       alpha_a=self.alpha_b, alpha_b=self.alpha_a)


@dataclass(frozen=True)
class EquilibriumSet:
    d: int
    c: float
    items: tuple[Equilibrium, ...]
    search_domain_hi: float
    rejected_roots: tuple[float, ...] = ()
    mixed_certified_empty: bool = False

    def kinds(self) -> list[EquilibriumKind]:
        return [e.kind for e in self.items]

    def has_no_show(self) -> bool:
        return any(e.kind is EquilibriumKind.NO_SHOW for e in self.items)


@dataclass(frozen=True)
class RootScan:
    """Roots of the one-sided indifference condition, split by the A-side check."""

    accepted: tuple[float, ...]
    rejected: tuple[float, ...]
    x_max: float
    peak: float = field(default=math.nan)


def search_upper_bound(d: int) -> float:
    return 4.0 * (abs(d) + 10)


# --------------------------------------------------------------------------
# thresholds


def _stirling_bound(d: int) -> float:
    return 1.0 / (math.sqrt(2 * math.pi * d) * math.exp(1.0 / (12 * d)))


def _first_true(pred, lo: int) -> int:
    """Smallest integer n >= lo with pred(n), for pred monotone False->True."""
    if pred(lo):
        return lo
    hi = lo + 1
    while not pred(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def d_star(c) -> int:
    """Smallest d >= 2 with ``c > 1 / (sqrt(2 pi d) exp(1/(12 d)))``."""
    c = as_cost(c)
    return _first_true(lambda d: c > _stirling_bound(d), 2)


def peak_pair_mass(j: int) -> float:
    """``max_y Pois(j; y) + Pois(j+1; y)``.

    The derivative of the sum is ``Pois(j-1; y) - Pois(j+1; y)``, which
    vanishes at ``y = sqrt(j (j+1))``, so the maximum is available in closed
    form. The value decreases in ``j``.
    """
    if j < 0:
        raise ValueError("j must be >= 0")
    if j == 0:
        return 1.0
    y = math.sqrt(j * (j + 1.0))
    return math.exp(log_poisson_pmf(j, y)) + math.exp(log_poisson_pmf(j + 1, y))


def d_star_sharp(c) -> int:
    """Smallest d >= 2 from which the one-sided condition has no root at any y.

    Exact counterpart of :func:`d_star`: no ``(0, x_b)`` equilibrium exists
    at ``d`` iff ``peak_pair_mass(d - 1) < 2c``.
    """
    c = as_cost(c)
    return _first_true(lambda d: peak_pair_mass(d - 1) < 2 * c, 2)


def c_star(d: int) -> float:
    """Cost below which a one-sided equilibrium is guaranteed at lead ``d``.

    ``(Pois(d-1; d) + Pois(d; d)) / 2``. Defined for d >= 2; the guarantee
    as originally stated is for d > 2.
    """
    if d < 2:
        raise ValueError(f"c_star needs d >= 2, got {d}")
    return 0.5 * (math.exp(log_poisson_pmf(d - 1, d)) + math.exp(log_poisson_pmf(d, d)))


def c_star_remark(d: int) -> float:
    """``d**d / (e**d d!)``, the single-term form of the threshold."""
    if d < 2:
        raise ValueError(f"c_star needs d >= 2, got {d}")
    return math.exp(log_poisson_pmf(d, d))


def c_star_sharp(d: int) -> float:
    """Largest cost at which a one-sided equilibrium exists at lead ``d``."""
    if d < 2:
        raise ValueError(f"c_star needs d >= 2, got {d}")
    return 0.5 * peak_pair_mass(d - 1)


def one_sided_certificate(c, d: int) -> tuple[float, bool]:
    """Bound on the B-side benefit over all ``x_b``; True when it is below c."""
    c = as_cost(c)
    bound = 0.5 * peak_pair_mass(d - 1)
    return bound, bound < c


def mixed_certificate(c, d: int) -> tuple[float, bool]:
    """Per-term bound on the A-side benefit of the two-sided system.

    Each summand of the A-side condition is ``Pois(k; x_a)`` times
    ``Pois(k+d; x_b) + Pois(k+d+1; x_b)``, and the bracket never exceeds
    ``peak_pair_mass(d)``. When half of that is below c, A-supporters can
    never be indifferent and the system has no solution.
    """
    c = as_cost(c)
    bound = 0.5 * peak_pair_mass(d)
    return bound, bound < c


# --------------------------------------------------------------------------
# root finding


def symmetric_benefit(x: float, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    return pivot_benefit_a(PivotQuery(x, x, 0), tol)


def solve_symmetric(c, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Common turnout intensity of both types when the first round is level."""
    c = as_cost(c)
    f = lambda x: symmetric_benefit(x, tol) - c
    hi = 1.0
    while f(hi) > 0:
        hi *= 2
        if hi > 1e8:
            raise EquilibriumDomainError(f"no sign change for c={c} on [0, {hi}]")
    return optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _one_sided_gap(y: float, d: int, c: float) -> float:
    """B-side benefit minus c when only B-supporters vote."""
    return 0.5 * (math.exp(log_poisson_pmf(d, y)) + math.exp(log_poisson_pmf(d - 1, y))) - c


def scan_asymmetric(c, d: int, tol: SeriesTolerance = DEFAULT_TOL) -> RootScan:
    """All roots of the one-sided B indifference condition on ``(0, X_max]``.

    The B-side benefit ``(Pois(d; y) + Pois(d-1; y)) / 2`` rises up to
    ``y = sqrt(d (d-1))`` and falls after, so there are at most two roots,
    one on each side of the peak.
    """
    c = as_cost(c)
    if d < 2:
        raise ValueError(f"one-sided equilibria need d >= 2, got {d}")
    x_max = search_upper_bound(d)
    peak_y = math.sqrt(d * (d - 1.0))
    top = _one_sided_gap(peak_y, d, c)
    roots: list[float] = []
    if top == 0:
        roots.append(peak_y)
    elif top > 0:
        f = lambda y: _one_sided_gap(y, d, c)
        roots.append(optimize.brentq(f, 0.0, peak_y, xtol=1e-14, rtol=1e-15, maxiter=500))
        if f(x_max) > 0:
            raise EquilibriumDomainError(f"upper root beyond search domain [0, {x_max}]")
        roots.append(optimize.brentq(f, peak_y, x_max, xtol=1e-14, rtol=1e-15, maxiter=500))
    accepted, rejected = [], []
    for y in roots:
        slack = c - pivot_benefit_a(PivotQuery(0.0, y, d), tol)
        (accepted if slack >= 0 else rejected).append(y)
    return RootScan(tuple(accepted), tuple(rejected), x_max, peak=top + c)


def asymmetric_roots(c, d: int, tol: SeriesTolerance = DEFAULT_TOL) -> list[float]:
    """``x_b`` values of the equilibria where only B-supporters turn out."""
    return list(scan_asymmetric(c, d, tol).accepted)


def mixed_residuals(x_a: float, x_b: float, d: int, c: float,
                    tol: SeriesTolerance = DEFAULT_TOL) -> tuple[float, float]:
    q = PivotQuery(x_a, x_b, d)
    return pivot_benefit_a(q, tol) - c, pivot_benefit_b(q, tol) - c


def _benefit_grids(c: float, d: int, grid: np.ndarray):
    k_max = poisson_window(float(grid[-1]))[1]
    k = np.arange(k_max + d + 2)
    pmf = np.exp(log_poisson_pmf_array(k[None, :], grid[:, None]))
    width = k_max + 1
    pa = pmf[:, :width]
    pb = lambda off: pmf[:, off:off + width]
    fa = 0.5 * pa @ (pb(d) + pb(d + 1)).T - c
    fb = 0.5 * pa @ (pb(d) + pb(d - 1)).T - c
    return fa, fb


def _sign_change(g: np.ndarray) -> np.ndarray:
    corners = np.stack([g[:-1, :-1], g[1:, :-1], g[:-1, 1:], g[1:, 1:]])
    return (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)


def totally_mixed_roots(c, d: int, tol: SeriesTolerance = DEFAULT_TOL,
                        grid_points: int = GRID_POINTS) -> list[tuple[float, float]]:
    """Solutions with both types turning out at a lead of ``d >= 1``.

    Both indifference conditions are tabulated on a ``grid_points`` square
    grid over ``(0, X_max]^2`` (quadratically spaced so small intensities are
    resolved), cells where both change sign are refined with a Powell hybrid
    solver in log coordinates, and survivors must satisfy both conditions to
    ``ROOT_RESIDUAL_TOL`` when re-evaluated with the scalar series.
    """
    c = as_cost(c)
    if d < 1:
        raise ValueError(f"totally mixed search needs d >= 1, got {d}")
    x_max = search_upper_bound(d)
    t = np.linspace(0.0, 1.0, grid_points + 1)[1:]
    grid = x_max * t * t
    fa, fb = _benefit_grids(c, d, grid)
    cells = np.argwhere(_sign_change(fa) & _sign_change(fb))

    def fun(u):
        xa, xb = np.exp(np.clip(u, -700, 700))
        if not (np.isfinite(xa) and np.isfinite(xb)):
            return [1.0, 1.0]
        return list(mixed_residuals(float(xa), float(xb), d, c, tol))

    found: list[tuple[float, float]] = []
    for i, j in cells:
        x0 = np.log([0.5 * (grid[i] + grid[i + 1]), 0.5 * (grid[j] + grid[j + 1])])
        sol = optimize.root(fun, x0, method="hybr", options={"xtol": 1e-14})
        xa, xb = (float(v) for v in np.exp(sol.x))
        if not (0 < xa <= x_max and 0 < xb <= x_max):
            continue
        if max(abs(r) for r in mixed_residuals(xa, xb, d, c, tol)) >= ROOT_RESIDUAL_TOL:
            continue
        if any(abs(xa - a) < 1e-7 * (1 + a) and abs(xb - b) < 1e-7 * (1 + b) for a, b in found):
            continue
        found.append((xa, xb))
    return sorted(found, key=lambda p: (p[1], p[0]))


# --------------------------------------------------------------------------
# enumeration


def _alphas(x_a: float, x_b: float, n2: float, p_a: float) -> tuple[float, float, bool]:
    alpha_a = x_a / (n2 * p_a) if p_a > 0 else (0.0 if x_a == 0 else math.inf)
    alpha_b = x_b / (n2 * (1 - p_a)) if p_a < 1 else (0.0 if x_b == 0 else math.inf)
    return alpha_a, alpha_b, alpha_a <= 1 and alpha_b <= 1


def enumerate_equilibria(c, d: int, n2: float, p_a: float,
                         tol: SeriesTolerance = DEFAULT_TOL,
                         include_mixed: bool = True) -> EquilibriumSet:
    """Every second-round equilibrium found for first-round lead ``d``.

    Strategy probabilities ``alpha = x / (n2 * p_type)`` are attached to each
    item; an ``alpha`` above one marks the item infeasible rather than
    dropping it.
    """
    c = as_cost(c)
    if n2 <= 0:
        raise ValueError(f"n2 must be > 0, got {n2}")
    if not (0 < p_a < 1):
        raise ValueError(f"p_a must lie in (0, 1), got {p_a}")
    return _enumerate_cached(c, int(d), float(n2), float(p_a), tol, include_mixed)


@functools.lru_cache(maxsize=4096)
def _enumerate_cached(c: float, d: int, n2: float, p_a: float,
                      tol: SeriesTolerance, include_mixed: bool) -> EquilibriumSet:
    if d < 0:
        mirror = _enumerate_cached(c, -d, n2, 1.0 - p_a, tol, include_mixed)
        items = sorted((e.swapped() for e in mirror.items), key=lambda e: (e.x_b, e.x_a))
        return replace(mirror, d=d, items=tuple(items))

    items: list[Equilibrium] = []
    rejected: tuple[float, ...] = ()
    certified = False

    def make(kind, xa, xb, residual, slack):
        aa, ab, ok = _alphas(xa, xb, n2, p_a)
        return Equilibrium(kind, xa, xb, residual, slack, aa, ab, ok)

    if d == 0:
        x = solve_symmetric(c, tol)
        q = PivotQuery(x, x, 0)
        res = max(abs(pivot_benefit_a(q, tol) - c), abs(pivot_benefit_b(q, tol) - c))
        items.append(make(EquilibriumKind.TOTALLY_MIXED, x, x, res, 0.0))
    else:
        if d >= 2:
            q = PivotQuery(0.0, 0.0, d)
            slack = c - max(pivot_benefit_a(q, tol), pivot_benefit_b(q, tol))
            items.append(make(EquilibriumKind.NO_SHOW, 0.0, 0.0, 0.0, slack))
            scan = scan_asymmetric(c, d, tol)
            rejected = scan.rejected
            for y in scan.accepted:
                q = PivotQuery(0.0, y, d)
                res = abs(pivot_benefit_b(q, tol) - c)
                items.append(make(EquilibriumKind.ONLY_B, 0.0, y, res, c - pivot_benefit_a(q, tol)))
        certified = mixed_certificate(c, d)[1]
        if include_mixed and not certified:
            for xa, xb in totally_mixed_roots(c, d, tol):
                res = max(abs(r) for r in mixed_residuals(xa, xb, d, c, tol))
                items.append(make(EquilibriumKind.TOTALLY_MIXED, xa, xb, res, 0.0))
    items.sort(key=lambda e: (e.x_b, e.x_a))
    return EquilibriumSet(d=d, c=c, items=tuple(items), search_domain_hi=search_upper_bound(d),
                          rejected_roots=rejected, mixed_certified_empty=certified)
