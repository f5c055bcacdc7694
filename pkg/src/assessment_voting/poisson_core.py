"""Poisson masses and the truncated cross series behind pivot probabilities.

Every term is evaluated in log space and series are summed outward from
their mode, so deficits in the thousands (where factorials overflow any
float) are handled without special cases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy


class TruncationError(ArithmeticError):
    """A series did not reach its tolerance within ``max_terms`` terms."""

    def __init__(self, message: str, partial_sum: float, tail_bound: float):
        super().__init__(f"{message} (partial sum {partial_sum!r}, tail bound {tail_bound!r})")
        self.partial_sum = partial_sum
        self.tail_bound = tail_bound


@dataclass(frozen=True)
class SeriesTolerance:
    rel_tol: float = 1e-14
    max_terms: int = 100_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.rel_tol < 1):
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_TOL = SeriesTolerance()


@dataclass(frozen=True)
class PivotQuery:
    """Expected second-round votes for A and B plus A's first-round lead."""

    x_a: float
    x_b: float
    deficit: int = 0

    def __post_init__(self):
        _check_intensity(self.x_a, "x_a")
        _check_intensity(self.x_b, "x_b")
        if int(self.deficit) != self.deficit or self.deficit < 0:
            raise ValueError(f"deficit must be a non-negative integer, got {self.deficit}")


def _check_intensity(value: float, name: str) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value}")


_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def _stirlerr(n: float) -> float:
    """``log(n!) - log(sqrt(2 pi n) (n/e)**n)`` without cancellation for large n."""
    if n <= 15:
        return math.lgamma(n + 1) - (n + 0.5) * math.log(n) + n - _HALF_LOG_2PI
    nn = n * n
    return (1 / 12 - (1 / 360 - (1 / 1260 - 1 / (1680 * nn)) / nn) / nn) / n


def _bd0(x: float, mean: float) -> float:
    """Deviance term ``x log(x/mean) + mean - x``, stable when x is near mean."""
    if abs(x - mean) < 0.1 * (x + mean):
        v = (x - mean) / (x + mean)
        s = (x - mean) * v
        ej = 2 * x * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / mean) + mean - x


def log_poisson_pmf(k: int, lam: float) -> float:
    """Natural log of ``lam**k * exp(-lam) / k!``; ``-inf`` for impossible counts.

    Uses the saddle-point split ``-stirlerr(k) - bd0(k, lam) - log(2 pi k)/2``
    so that no large terms cancel when k and lam are both big.
    """
    if k < 0 or int(k) != k:
        raise ValueError(f"k must be a non-negative integer, got {k}")
    if lam < 0 or math.isnan(lam):
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if lam == 0:
        return 0.0 if k == 0 else -math.inf
    if k == 0:
        return -lam
    return -_stirlerr(k) - _bd0(k, lam) - _HALF_LOG_2PI - 0.5 * math.log(k)


def poisson_pmf(k: int, lam: float) -> float:
    return math.exp(log_poisson_pmf(k, lam))


def log_poisson_pmf_array(k, lam) -> np.ndarray:
    """Vectorised ``log_poisson_pmf``; ``k`` and ``lam`` broadcast together."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda must be >= 0")
    k = np.asarray(k, dtype=float)
    k, lam = np.broadcast_arrays(k, lam)
    safe = np.maximum(k, 1.0)
    lam_safe = np.where(lam > 0, lam, 1.0)
    nn = safe * safe
    big = (1 / 12 - (1 / 360 - (1 / 1260 - 1 / (1680 * nn)) / nn) / nn) / safe
    small = gammaln(safe + 1) - (safe + 0.5) * np.log(safe) + safe - _HALF_LOG_2PI
    stirl = np.where(safe > 15, big, small)
    # bd0: series near the mean, direct form elsewhere
    near = np.abs(safe - lam_safe) < 0.1 * (safe + lam_safe)
    with np.errstate(over="ignore"):  # subnormal lam: the term is -inf, as it should be
        bd0 = xlogy(safe, safe / lam_safe) + lam_safe - safe
    if near.any():
        xs, ls = safe[near], lam_safe[near]
        v = (xs - ls) / (xs + ls)
        series = (xs - ls) * v
        ej = 2 * xs * v
        v2 = v * v
        # |v| < 1/21 here, so each step gains at least 2.6 digits
        for j in range(1, 40):
            ej = ej * v2
            step = ej / (2 * j + 1)
            series = series + step
            if np.all(np.abs(step) <= 1e-17 * np.abs(series)):
                break
        bd0 = np.array(bd0, dtype=float)
        bd0[near] = series
    out = -stirl - bd0 - _HALF_LOG_2PI - 0.5 * np.log(safe)
    out = np.where(k == 0, -lam, out)
    out = np.where(lam == 0, np.where(k == 0, 0.0, -np.inf), out)
    return np.where(k < 0, -np.inf, out)


def poisson_window(lam: float, width: float = 40.0) -> tuple[int, int]:
    """Count range outside of which a Poisson(lam) carries negligible mass.

    ``width`` standard deviations plus a fixed margin; at the default the
    excluded mass is far below double precision for every ``lam``.
    """
    spread = width * math.sqrt(lam) + 40
    return max(0, math.floor(lam - spread)), math.ceil(lam + spread)


def cross_sum(x_a: float, x_b: float, offset: int, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """``sum_k Pois(k; x_a) * Pois(k + offset; x_b)``.

    The ratio of consecutive summands, ``x_a*x_b / ((k+1)(k+1+offset))``,
    decreases in ``k``, so the summand is unimodal and once the ratio drops
    below one the remaining tail is bounded by a geometric series. The same
    holds walking down from the mode. Summation stops in each direction when
    that bound falls under ``tol.rel_tol`` times the running sum.
    """
    _check_intensity(x_a, "x_a")
    _check_intensity(x_b, "x_b")
    if offset < 0 or int(offset) != offset:
        raise ValueError(f"offset must be a non-negative integer, got {offset}")
    offset = int(offset)
    if x_b == 0:
        return math.exp(-x_a) if offset == 0 else 0.0
    if x_a == 0:
        return math.exp(log_poisson_pmf(offset, x_b))

    prod = x_a * x_b
    u = (-offset + math.sqrt(offset * offset + 4.0 * prod)) / 2.0
    mode = max(0, math.floor(u))
    log_peak = log_poisson_pmf(mode, x_a) + log_poisson_pmf(mode + offset, x_b)

    # terms are scaled by the peak, so every scaled term is <= 1
    total = 1.0
    n_terms = 1
    term, k = 1.0, mode
    while True:
        ratio = prod / ((k + 1) * (k + 1 + offset))
        term *= ratio
        k += 1
        total += term
        n_terms += 1
        if ratio < 1:
            bound = term * ratio / (1 - ratio)
            if bound < tol.rel_tol * total:
                break
        if n_terms > tol.max_terms:
            raise TruncationError("cross_sum upper tail did not converge",
                                  math.exp(log_peak) * total, math.inf)
    term, k = 1.0, mode
    while k > 0:
        ratio = k * (k + offset) / prod
        term *= ratio
        k -= 1
        total += term
        n_terms += 1
        if ratio < 1:
            bound = term * ratio / (1 - ratio)
            if bound < tol.rel_tol * total:
                break
        if n_terms > tol.max_terms:
            raise TruncationError("cross_sum lower tail did not converge",
                                  math.exp(log_peak) * total, math.inf)
    return min(1.0, math.exp(log_peak + math.log(total)))


def pivot_benefit_a(q: PivotQuery, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Expected gain of an A-supporter from voting when A leads by ``q.deficit``.

    Half the probability of B catching up exactly (tie becomes A win) plus
    half the probability of B leading by one (loss becomes tie).
    """
    d = q.deficit
    return 0.5 * cross_sum(q.x_a, q.x_b, d, tol) + 0.5 * cross_sum(q.x_a, q.x_b, d + 1, tol)


def pivot_benefit_b(q: PivotQuery, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Expected gain of a B-supporter from voting when A leads by ``q.deficit``."""
    d = q.deficit
    tie = cross_sum(q.x_a, q.x_b, d, tol)
    if d >= 1:
        return 0.5 * tie + 0.5 * cross_sum(q.x_a, q.x_b, d - 1, tol)
    # level first round: B behind by one means A got one vote more
    return 0.5 * tie + 0.5 * cross_sum(q.x_b, q.x_a, 1, tol)


def _tail_sums(pmf: np.ndarray) -> np.ndarray:
    """``out[i] = sum(pmf[i+1:])`` accumulated from the small end."""
    rev = np.cumsum(pmf[::-1])[::-1]
    return np.append(rev[1:], 0.0)


def skellam_a_wins(lambda_a: float, lambda_b: float, head_start: int = 0,
                   tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Win probability of A with Poisson vote counts and a fixed head start.

    Ties count one half. Computed as ``sum_k Pois(k; lambda_b) *
    (P(V_a > k - h) + P(V_a = k - h) / 2)`` over the windows where both
    distributions carry mass.
    """
    _check_intensity(lambda_a, "lambda_a")
    _check_intensity(lambda_b, "lambda_b")
    h = int(head_start)
    lo_a, hi_a = poisson_window(lambda_a)
    lo_b, hi_b = poisson_window(lambda_b)
    if hi_a - lo_a + hi_b - lo_b > 2 * tol.max_terms:
        raise TruncationError("skellam window exceeds max_terms", math.nan, math.nan)
    ka = np.arange(lo_a, hi_a + 1)
    pmf_a = np.exp(log_poisson_pmf_array(ka, lambda_a))
    sf_a = _tail_sums(pmf_a)
    kb = np.arange(lo_b, hi_b + 1)
    pmf_b = np.exp(log_poisson_pmf_array(kb, lambda_b))
    j = kb - h  # A needs more than j second-round votes
    idx = np.clip(j - lo_a, 0, hi_a - lo_a)
    win = np.where(j < lo_a, 1.0, np.where(j <= hi_a, sf_a[idx] + 0.5 * pmf_a[idx], 0.0))
    return float(min(1.0, math.fsum(pmf_b * win)))


def poisson_expectation(fn, lam: float) -> float:
    """``E[fn(K)]`` for ``K ~ Poisson(lam)`` with ``fn`` bounded and vectorised."""
    _check_intensity(lam, "lambda")
    lo, hi = poisson_window(lam)
    k = np.arange(lo, hi + 1)
    w = np.exp(log_poisson_pmf_array(k, lam))
    return math.fsum(w * fn(k))


def poisson_cdf(k: int, lam: float) -> float:
    """``P(Poisson(lam) <= k)``; zero for negative ``k``."""
    _check_intensity(lam, "lambda")
    if k < 0:
        return 0.0
    if lam == 0:
        return 1.0
    lo = max(0, poisson_window(lam)[0])
    if k < lo:
        lo = 0
    ks = np.arange(lo, k + 1)
    return float(min(1.0, math.fsum(np.exp(log_poisson_pmf_array(ks, lam)))))
