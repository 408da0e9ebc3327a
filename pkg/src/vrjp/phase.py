"""Phase diagram of the walk on a mean-m tree with edge weight w.

The recurrence/transience boundary is driven by one scalar: m * E[A^{1/2}]
with A ~ IG(1, w), increasing in w.  Below its critical root the walk is
recurrent and the root martingale decays exponentially at a rate obtained
from the convex transform f(t) = ln(m E[A^t]) through the tilt equation
t f'(t) = f(t).  At criticality the decay switches to the n^{1/3} scale with
an explicit constant.  All root-finding is bracket doubling plus bisection;
the targets are strictly monotone, so this is unconditionally safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .igmath import bessel_k, bessel_k_half, ig_frac_moment, ig_log_weighted_moment, step_cumulant

__all__ = [
    "RECURRENT",
    "CRITICAL",
    "TRANSIENT",
    "PhaseSummary",
    "critical_weight",
    "optimal_tilt",
    "decay_rate",
    "critical_slope",
    "critical_exponents",
    "classify",
]

RECURRENT = "Recurrent"
CRITICAL = "Critical"
TRANSIENT = "Transient"

# m * E[A^{1/2}] within this much of 1 counts as sitting on the critical line.
CRITICAL_TOL = 1e-9


class SolverError(RuntimeError):
    """Bracket expansion or bisection failed to enclose the root."""


def _check_mean(m: float) -> None:
    if not m > 1:
        raise ValueError(f"offspring mean must exceed 1, got {m}")


def _check_weight(w: float) -> None:
    if not w > 0:
        raise ValueError(f"edge weight must be positive, got {w}")


def _bisect(fn, lo: float, hi: float, width: float) -> float:
    # fn increasing with fn(lo) < 0 < fn(hi)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if fn(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def critical_weight(m: float) -> float:
    """Unique w with m * E[A^{1/2}] = 1; residual <= 1e-10."""
    _check_mean(m)

    def g(w: float) -> float:
        return m * ig_frac_moment(w, 0.5) - 1.0

    lo, hi = 1e-4, 1.0
    while g(lo) >= 0:
        lo /= 4
        if lo < 1e-15:
            raise SolverError(f"no recurrent weight above 1e-15 for m={m}")
    while g(hi) <= 0:
        hi *= 2
        if hi > 2**40:
            raise SolverError(f"critical weight bracket blew past 2^40 for m={m}")
    return _bisect(g, lo, hi, 1e-13)


def _tilt_gap(m: float, w: float, t: float) -> float:
    c = step_cumulant(m, w, t)
    return t * c.slope - c.value


def optimal_tilt(m: float, w: float) -> float:
    """The positive root t of t f'(t) = f(t), f(t) = ln(m E[A^t]).

    Strictly increasing left side minus right (its derivative is t f'' > 0),
    negative at 0+ where it equals -ln m, so bisection after doubling the
    upper end.  Lies in (0, 1/2) below the critical weight, at 1/2 on it.
    """
    _check_mean(m)
    _check_weight(w)
    lo, hi = 1e-9, 1.0
    while _tilt_gap(m, w, hi) <= 0:
        hi *= 2
        if hi > 64:
            raise SolverError(f"tilt bracket exceeded 64 at (m={m}, w={w})")
    return _bisect(lambda t: _tilt_gap(m, w, t), lo, hi, 1e-12)


def decay_rate(m: float, w: float) -> float:
    """Exponential decay rate of the root martingale: -f'(tilt).

    Positive below the critical weight, zero on it.  Above it the defining
    formula is negative; the signed value is returned so nothing is hidden.
    """
    return -step_cumulant(m, w, optimal_tilt(m, w)).slope


def critical_slope(m: float) -> float:
    """Linear coefficient of the decay rate in (critical_weight - w) at the boundary."""
    _check_mean(m)
    w_c = critical_weight(m)
    return 2 + 1 / w_c - 2 * m * bessel_k(1.0, w_c) / bessel_k_half(w_c)


def critical_exponents(m: float) -> tuple[float, float]:
    """(step variance, cube-root rate) governing ln psi_n ~ -rho * n^{1/3} at criticality.

    step variance = 16 m E[A^{1/2} (ln A)^2] at the critical weight; the
    cube-root rate is (1/2) (3 pi^2 variance / 2)^{1/3}.
    """
    _check_mean(m)
    w_c = critical_weight(m)
    variance = 16 * m * ig_log_weighted_moment(w_c, 0.5, 2)
    rho = 0.5 * (3 * math.pi**2 * variance / 2) ** (1 / 3)
    return variance, rho


@dataclass(frozen=True)
class PhaseSummary:
    offspring_mean: float
    weight: float
    critical_weight: float
    tilt: float
    decay_rate: float
    critical_slope: float
    step_variance: float | None  # populated on the critical line only
    cube_root_rate: float | None
    regime: str


def classify(m: float, w: float) -> PhaseSummary:
    """Full phase summary of (m, w); regime from the sign of m E[A^{1/2}] - 1."""
    _check_mean(m)
    _check_weight(w)
    w_c = critical_weight(m)
    gap = m * ig_frac_moment(w, 0.5) - 1.0
    if abs(gap) <= CRITICAL_TOL:
        regime = CRITICAL
    elif gap < 0:
        regime = RECURRENT
    else:
        regime = TRANSIENT
    tilt = optimal_tilt(m, w)
    rate = -step_cumulant(m, w, tilt).slope
    variance, rho = critical_exponents(m) if regime == CRITICAL else (None, None)
    return PhaseSummary(
        offspring_mean=m,
        weight=w,
        critical_weight=w_c,
        tilt=tilt,
        decay_rate=rate,
        critical_slope=critical_slope(m),
        step_variance=variance,
        cube_root_rate=rho,
        regime=regime,
    )
