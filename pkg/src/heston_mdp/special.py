"""Scalar special functions and the noncentral chi-square sampler.

Provides what the CIR transition law needs: ``log I_nu(x)`` for the
modified Bessel function of the first kind, Kummer's confluent
hypergeometric function ``1F1``, ``log Gamma`` and a Poisson-mixture
noncentral chi-square sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AccuracyError, DomainError

__all__ = [
    "Tolerance",
    "DEFAULT_TOLERANCE",
    "BESSEL_SERIES_CUTOFF",
    "log_bessel_i",
    "bessel_i_series",
    "hyp1f1",
    "log_gamma",
    "sample_noncentral_chisq",
]


@dataclass(frozen=True)
class Tolerance:
    """Stopping rule for series evaluations."""

    rel_eps: float = 1e-12
    abs_eps: float = 1e-300
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.rel_eps > 0:
            raise DomainError(f"rel_eps must be > 0, got {self.rel_eps}")
        if not self.abs_eps > 0:
            raise DomainError(f"abs_eps must be > 0, got {self.abs_eps}")
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise DomainError(f"max_terms must be a positive integer, got {self.max_terms}")


DEFAULT_TOLERANCE = Tolerance()

# Series below this argument, Hankel expansion above.
BESSEL_SERIES_CUTOFF = 30.0


def _check_finite(**kwargs):
    for name, value in kwargs.items():
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value!r}")


def bessel_i_series(order: float, x: float, tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """Relative power-series sum ``sum_k (x^2/4)^k Gamma(nu+1) / (k! Gamma(k+nu+1))``.

    Multiply by ``(x/2)^nu / Gamma(nu+1)`` to obtain ``I_nu(x)``.
    """
    q = 0.25 * x * x
    term = 1.0
    total = 1.0
    for k in range(1, tol.max_terms + 1):
        term *= q / (k * (k + order))
        total += term
        if term <= tol.rel_eps * total + tol.abs_eps and k > q ** 0.5:
            return total
    raise AccuracyError(
        f"Bessel series for order={order}, x={x} not converged in {tol.max_terms} terms"
    )


def _log_bessel_series_logspace(order, x, tol):
    # Log-domain summation so that terms near k ~ x/2 never overflow.
    k_peak = 0.5 * x
    n_terms = int(k_peak + 12.0 * math.sqrt(x) + 60)
    if n_terms > tol.max_terms:
        raise AccuracyError(
            f"log I_{order}({x}): log-domain series needs {n_terms} > max_terms={tol.max_terms}"
        )
    k = np.arange(n_terms, dtype=float)
    from scipy.special import gammaln, logsumexp

    log_terms = 2.0 * k * math.log(0.5 * x) - gammaln(k + 1.0) - gammaln(k + order + 1.0)
    return float(order * math.log(0.5 * x) + logsumexp(log_terms))


def _log_bessel_hankel(order, x, tol):
    # I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k
    mu = 4.0 * order * order
    term = 1.0
    total = 1.0
    prev = math.inf
    for k in range(1, tol.max_terms + 1):
        term *= -(mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        if abs(term) > prev:
            return None
        total += term
        if abs(term) <= tol.rel_eps * abs(total):
            return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)
        prev = abs(term)
    return None


def log_bessel_i(order: float, x: float, tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """Natural log of the modified Bessel function ``I_order(x)``.

    Uses the power series for ``x < 30`` and the log-scaled Hankel
    expansion above that, falling back to a log-domain series sum when the
    asymptotic expansion diverges before reaching ``tol`` (large orders).
    ``log I_nu(0)`` is ``-inf`` for ``nu > 0``.
    """
    _check_finite(order=order, x=x)
    if order < 0:
        raise DomainError(f"order must be >= 0, got {order}")
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    if x == 0.0:
        return 0.0 if order == 0.0 else -math.inf
    if x < BESSEL_SERIES_CUTOFF:
        s = bessel_i_series(order, x, tol)
        return order * math.log(0.5 * x) - math.lgamma(order + 1.0) + math.log(s)
    value = _log_bessel_hankel(order, x, tol)
    if value is None:
        value = _log_bessel_series_logspace(order, x, tol)
    return value


def _kummer_series(p, q, x, tol):
    term = 1.0
    total = 1.0
    for k in range(tol.max_terms):
        ratio = (p + k) / (q + k) * x / (k + 1)
        term *= ratio
        total += term
        if term == 0.0:
            return total
        if abs(term) <= tol.rel_eps * abs(total) + tol.abs_eps and abs(ratio) < 1.0:
            return total
        if not math.isfinite(total):
            raise AccuracyError(f"1F1({p}; {q}; {x}) overflowed")
    raise AccuracyError(f"1F1({p}; {q}; {x}) not converged in {tol.max_terms} terms")


def hyp1f1(p: float, q: float, x: float, tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """Kummer's confluent hypergeometric function ``1F1(p; q; x)``.

    Negative arguments go through the Kummer transformation
    ``1F1(p; q; x) = e^x 1F1(q - p; q; -x)`` so the summed series has
    positive terms whenever ``q - p >= 0``.
    """
    _check_finite(p=p, q=q, x=x)
    if q <= 0 and q == math.floor(q):
        raise DomainError(f"q must not be a non-positive integer, got {q}")
    if x == 0.0:
        return 1.0
    if p <= 0 and p == math.floor(p):
        # Terminating polynomial; no cancellation issue worth transforming.
        return _kummer_series(p, q, x, tol)
    if x < 0:
        return math.exp(x) * _kummer_series(q - p, q, -x, tol)
    return _kummer_series(p, q, x, tol)


def log_gamma(x: float) -> float:
    """``log Gamma(x)`` for ``x > 0``."""
    _check_finite(x=x)
    if x <= 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def sample_noncentral_chisq(df, noncentrality, rng: np.random.Generator, size=None):
    """Draw noncentral chi-square variates as a Poisson mixture of gammas.

    ``N ~ Poisson(noncentrality / 2)`` then ``2 * Gamma(df / 2 + N)``.
    ``df`` and ``noncentrality`` broadcast like numpy arguments; scalars
    with ``size=None`` give a Python float.
    """
    df_arr = np.asarray(df, dtype=float)
    nc_arr = np.asarray(noncentrality, dtype=float)
    if not np.all(np.isfinite(df_arr)) or np.any(df_arr <= 0):
        raise DomainError(f"df must be finite and > 0, got {df!r}")
    if not np.all(np.isfinite(nc_arr)) or np.any(nc_arr < 0):
        raise DomainError(f"noncentrality must be finite and >= 0, got {noncentrality!r}")
    if size is None:
        size = np.broadcast(df_arr, nc_arr).shape
    counts = rng.poisson(0.5 * nc_arr, size=size)
    draws = 2.0 * rng.standard_gamma(0.5 * df_arr + counts, size=size)
    if draws.ndim == 0:
        return float(draws)
    return draws
