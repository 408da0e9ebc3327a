"""Inverse-Gaussian distribution toolkit and the branching-step transform.

Everything downstream is built out of a single positive law: the inverse
Gaussian IG(mean, shape) with density

    sqrt(shape / (2 pi x^3)) * exp(-shape (x - mean)^2 / (2 mean^2 x)),  x > 0.

This module provides its density, closed-form CDF, an exact sampler, the
fractional moments E[A^t] of the unit-mean case, the modified Bessel function
K_nu evaluated by quadrature, and the convex log-transform

    step_cumulant(m, w, t) = ln(m E[A^t]),  A ~ IG(1, w),

whose derivatives in t drive all the phase computations.  Functions are pure;
random draws consume an explicit numpy Generator.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.special import log_ndtr, ndtr

__all__ = [
    "ig_pdf",
    "ig_cdf",
    "ig_sample",
    "gamma_half_sample",
    "bessel_k",
    "bessel_k_half",
    "ig_frac_moment",
    "ig_log_weighted_moment",
    "step_cumulant",
    "StepCumulant",
]

# full_output=1 keeps quadpack's roundoff chatter out of stderr; accuracy is
# enforced by the oracle tests, not by trusting the reported error.
_QUAD_OPTS = dict(epsabs=1e-300, epsrel=1e-13, limit=400, full_output=1)


def _check_params(mean, shape) -> None:
    if not (np.all(np.asarray(mean) > 0) and np.all(np.asarray(shape) > 0)):
        raise ValueError(f"inverse Gaussian needs mean > 0 and shape > 0, got ({mean}, {shape})")


def ig_pdf(x, mean: float = 1.0, shape: float = 1.0):
    """Density of IG(mean, shape); zero on x <= 0. Vectorized in x."""
    _check_params(mean, shape)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    with np.errstate(divide="ignore"):
        out[pos] = np.sqrt(shape / (2 * np.pi * xp**3)) * np.exp(
            -shape * (xp - mean) ** 2 / (2 * mean**2 * xp)
        )
    return out if out.ndim else float(out)


def ig_cdf(x, mean: float = 1.0, shape: float = 1.0):
    """Distribution function of IG(mean, shape), via the Gaussian CDF.

    The second term exp(2 shape/mean) * Phi(-sqrt(shape/x)(x/mean + 1)) is
    evaluated as exp(2 shape/mean + log Phi(...)) so that a huge prefactor
    against a tiny tail probability cannot overflow.
    """
    _check_params(mean, shape)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[x == np.inf] = 1.0
    pos = (x > 0) & np.isfinite(x)
    xp = x[pos]
    s = np.sqrt(shape / xp)
    out[pos] = ndtr(s * (xp / mean - 1)) + np.exp(
        2 * shape / mean + log_ndtr(-s * (xp / mean + 1))
    )
    np.clip(out, 0.0, 1.0, out=out)
    return out if out.ndim else float(out)


def ig_sample(rng: np.random.Generator, mean=1.0, shape=1.0, size=None):
    """Draw from IG(mean, shape) by the normal-transformation method.

    mean and shape may be arrays; they must broadcast against size, which
    then has to be given explicitly.

    A squared normal y gives the smaller root of the quadratic transform;
    it is accepted with probability mean/(mean + x), otherwise mean^2/x is
    returned.  The root is computed in the rationalized form
    mean / (1 + h + sqrt(h (h + 2))), h = mean y / (2 shape), which has no
    cancellation for large y.
    """
    _check_params(mean, shape)
    y = rng.standard_normal(size) ** 2
    h = mean * y / (2 * shape)
    x = mean / (1 + h + np.sqrt(h * (h + 2)))
    return np.where(rng.random(size) * (mean + x) <= mean, x, mean**2 / x)


def gamma_half_sample(rng: np.random.Generator, size=None):
    """Gamma(1/2, 1) draws: half of a squared standard normal."""
    return 0.5 * rng.standard_normal(size) ** 2


_LN2 = math.log(2.0)


def _log_cosh(z: float) -> float:
    z = abs(z)
    return z - _LN2 + math.log1p(math.exp(-2 * z))


def _log_sinh_abs(z: float) -> float:
    # caller guards z != 0
    z = abs(z)
    return z - _LN2 + math.log1p(-math.exp(-2 * z))


def bessel_k(nu: float, w: float) -> float:
    """Modified Bessel K_nu(w) by adaptive quadrature of the cosh integral.

    K_nu(w) = int_0^inf exp(-w cosh u) cosh(nu u) du; even in nu.  Intended
    range w in [0.05, 50], |nu| <= 3 (relative error <= 1e-10); the integral
    itself converges for any real nu and w > 0.
    """
    if w <= 0:
        raise ValueError(f"bessel_k needs w > 0, got {w}")
    nu = abs(nu)

    def g(u: float) -> float:
        if u > 705.0:  # cosh would overflow; the e^{-w cosh u} factor is long dead
            return 0.0
        return math.exp(-w * math.cosh(u) + _log_cosh(nu * u))

    val = quad(g, 0, np.inf, **_QUAD_OPTS)[0]
    return val


def bessel_k_half(w: float) -> float:
    """Closed form K_{1/2}(w) = sqrt(pi/(2w)) e^{-w}."""
    if w <= 0:
        raise ValueError(f"bessel_k_half needs w > 0, got {w}")
    return math.sqrt(math.pi / (2 * w)) * math.exp(-w)


def _moment_integrand(w: float, t: float, power: int):
    # After x = e^u the weighted IG moment integral folds into
    # sqrt(2w/pi) int_0^inf e^{w(1 - cosh u)} u^power {cosh,sinh}((t-1/2)u) du,
    # with sinh for odd powers of the ln x weight.  Exponentials are combined
    # in log scale because quadpack probes u far beyond the support.
    half = t - 0.5
    odd = power % 2 == 1

    def g(u: float) -> float:
        if u > 705.0:
            return 0.0
        z = half * u
        if odd:
            if z == 0.0:
                return 0.0
            sign = math.copysign(1.0, z)
            osc_log = _log_sinh_abs(z)
        else:
            sign = 1.0
            osc_log = _log_cosh(z)
        return sign * math.exp(w * (1 - math.cosh(u)) + osc_log) * u**power

    return g


def ig_frac_moment(w: float, t: float) -> float:
    """E[A^t] for A ~ IG(1, w): equals K_{t-1/2}(w)/K_{1/2}(w), symmetric about t = 1/2."""
    if w <= 0:
        raise ValueError(f"ig_frac_moment needs w > 0, got {w}")
    val = quad(_moment_integrand(w, t, 0), 0, np.inf, **_QUAD_OPTS)[0]
    return math.sqrt(2 * w / math.pi) * val


def ig_log_weighted_moment(w: float, t: float, power: int) -> float:
    """E[A^t (ln A)^power] for A ~ IG(1, w), power in {1, 2}: the t-derivatives of E[A^t].

    Analytically differentiated integrands; finite differences would wreck the
    root-finding that consumes these.
    """
    if w <= 0:
        raise ValueError(f"ig_log_weighted_moment needs w > 0, got {w}")
    if power not in (1, 2):
        raise ValueError(f"power must be 1 or 2, got {power}")
    val = quad(_moment_integrand(w, t, power), 0, np.inf, **_QUAD_OPTS)[0]
    return math.sqrt(2 * w / math.pi) * val


class StepCumulant(NamedTuple):
    value: float
    slope: float
    curvature: float


def step_cumulant(m: float, w: float, t: float) -> StepCumulant:
    """ln(m E[A^t]) with first and second t-derivatives, A ~ IG(1, w).

    The value is convex in t with minimum at t = 1/2 (the fractional moments
    are symmetric about 1/2); curvature is strictly positive.
    """
    if m <= 1:
        raise ValueError(f"offspring mean must exceed 1, got {m}")
    q0 = ig_frac_moment(w, t)
    q1 = ig_log_weighted_moment(w, t, 1)
    q2 = ig_log_weighted_moment(w, t, 2)
    slope = q1 / q0
    return StepCumulant(math.log(m * q0), slope, q2 / q0 - slope**2)
