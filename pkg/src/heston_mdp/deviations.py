"""Closed-form moderate-deviation objects and Girsanov likelihood ratios.

All rate functions here are positive-definite quadratic forms, except the
pair ``appc_rate_I`` / ``appc_rate_J`` governing the exponential
convergence of ``(S_T, Sigma_T)`` which take the value ``math.inf``
outside their domain.  Functions broadcast over numpy arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, GirsanovOverflowError, RadiusTooSmallError
from .functionals import ItoSums, PathFunctionals, ito_sums
from .mle import covariance_set, sigma_matrix

__all__ = [
    "RateContext",
    "TiltedParams",
    "rate_I_ab",
    "rate_J_cross",
    "rate_I_theta",
    "rate_I_M",
    "rate_I_calM",
    "limit_cgf_cir",
    "limit_cgf_heston",
    "legendre_transform",
    "appc_rate_I",
    "appc_rate_J",
    "appc_xy_star",
    "appc_g",
    "appc_minimizer",
    "appc_coercivity_box",
    "log_girsanov_weight_ab",
    "girsanov_weight_ab",
    "log_girsanov_weight_cd",
    "girsanov_weight_cd",
    "write_rate_grid_csv",
]


@dataclass(frozen=True)
class RateContext:
    a: float
    b: float
    rho: float = 0.0

    def __post_init__(self):
        if not self.a > 2:
            raise DomainError(f"a must be > 2, got {self.a}")
        if not self.b < 0:
            raise DomainError(f"b must be < 0, got {self.b}")
        if not abs(self.rho) < 1:
            raise DomainError(f"|rho| must be < 1, got {self.rho}")

    @property
    def sigma(self) -> np.ndarray:
        return sigma_matrix(self.a, self.b)

    @property
    def covariances(self):
        return covariance_set(self.a, self.b, self.rho)


@dataclass(frozen=True)
class TiltedParams:
    alpha: float
    beta: float
    gamma: float = 0.0
    delta: float = 0.0

    def check_simulable(self) -> None:
        if not self.alpha > 2 or not self.beta < 0:
            raise DomainError(
                f"tilted CIR parameters need alpha > 2 and beta < 0, got {self.alpha}, {self.beta}"
            )


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


# ----------------------------------------------------------------------------
# Moderate-deviation rate functions


def rate_I_ab(ctx: RateContext, alpha, beta):
    """Rate of the CIR pair ``(a_hat, b_hat)`` at speed ``lambda_T``."""
    a, b = ctx.a, ctx.b
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return _out(-b * alpha**2 / (8.0 * (a - 2.0)) - a * beta**2 / (8.0 * b) + alpha * beta / 4.0)


def rate_J_cross(ctx: RateContext, alpha, beta, gamma, delta):
    """``-alpha delta + b/(a-2) alpha gamma - beta gamma + a/b beta delta``."""
    a, b = ctx.a, ctx.b
    alpha, beta, gamma, delta = (np.asarray(v, dtype=float) for v in (alpha, beta, gamma, delta))
    return _out(
        -alpha * delta + b / (a - 2.0) * alpha * gamma - beta * gamma + a / b * beta * delta
    )


def rate_I_theta(ctx: RateContext, alpha, beta, gamma, delta):
    """Rate of the four-parameter estimator.

    The cross term enters as ``rho J / 4``; this is what the contraction
    ``I_calM(S mu / 2)`` evaluates to.
    """
    rho = ctx.rho
    value = (
        rate_I_ab(ctx, alpha, beta)
        + rate_I_ab(ctx, gamma, delta)
        + 0.25 * rho * rate_J_cross(ctx, alpha, beta, gamma, delta)
    ) / (1.0 - rho**2)
    return _out(value)


def rate_I_M(ctx: RateContext, m, n):
    """Rate of ``(lambda_T T)^{-1/2} M_T``; equals ``mu' Sigma^-1 mu / 2``."""
    a, b = ctx.a, ctx.b
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    return _out(-a * (a - 2.0) * m**2 / (4.0 * b) - b * n**2 / 4.0 - (a - 2.0) * m * n / 2.0)


def rate_I_calM(ctx: RateContext, x, y, z, t):
    """Rate of the stacked martingale ``(M_T, N_T)``; equals ``mu' Gamma^-1 mu / 2``."""
    a, b, rho = ctx.a, ctx.b, ctx.rho
    x, y, z, t = (np.asarray(v, dtype=float) for v in (x, y, z, t))
    cross = (a - 2.0) / 2.0 * (y * z + x * t + a / b * z * x + b / (a - 2.0) * t * y)
    return _out((rate_I_M(ctx, x, y) + rate_I_M(ctx, z, t) + rho * cross) / (1.0 - rho**2))


def _quad(matrix, v):
    v = np.asarray(v, dtype=float)
    return _out(0.5 * np.einsum("i...,ij,j...->...", v, matrix, v))


def limit_cgf_cir(ctx: RateContext, v):
    """``v' Sigma v / 2``; ``v`` has shape ``(2,)`` or ``(2, n)``."""
    return _quad(ctx.sigma, v)


def limit_cgf_heston(ctx: RateContext, u):
    """``u' Gamma u / 2``; ``u`` has shape ``(4,)`` or ``(4, n)``."""
    return _quad(ctx.covariances.Gamma, u)


def legendre_transform(
    cgf: Callable,
    mu,
    search_radius: float = 50.0,
    grid_points: int = 41,
) -> float:
    """Numerical ``sup_v <mu, v> - cgf(v)`` over ``[-r, r]^dim``.

    A dense grid locates the basin and BFGS polishes the maximiser.
    ``cgf`` must accept arrays of shape ``(dim,)`` and ``(dim, n)``.
    Raises RadiusTooSmallError if the maximiser lies on the box boundary.
    """
    mu = np.asarray(mu, dtype=float)
    dim = mu.size
    axis = np.linspace(-search_radius, search_radius, grid_points)
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij")).reshape(dim, -1)
    values = mu @ mesh - np.asarray(cgf(mesh))
    start = mesh[:, int(np.argmax(values))]

    def neg(v):
        return -(float(mu @ v) - float(cgf(v)))

    res = minimize(neg, start, method="BFGS", options={"gtol": 1e-11, "maxiter": 2000})
    v_star = res.x if -res.fun >= values.max() else start
    if np.max(np.abs(v_star)) >= search_radius * (1.0 - 1e-9):
        raise RadiusTooSmallError(
            f"maximiser {v_star} reaches the search box of radius {search_radius}"
        )
    return max(float(-res.fun), float(values.max()))


# ----------------------------------------------------------------------------
# Exponential convergence of (S_T, Sigma_T)


def appc_rate_I(ctx: RateContext, x, y):
    """Rate of ``(S_T, Sigma_T)`` at speed ``T``; ``inf`` unless x, y > 0 and xy > 1."""
    a, b = ctx.a, ctx.b
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & (x * y - 1.0 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = y / (2.0 * (x * y - 1.0)) + b**2 * x / 8.0 + (a - 2.0) ** 2 * y / 8.0 + a * b / 4.0
    return _out(np.where(ok, val, math.inf))


def appc_g(x, y):
    """``g(x, y) = (y / (xy - 1), x / (xy - 1))``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    den = x * y - 1.0
    return _out(y / den), _out(x / den)


def appc_xy_star(z, t):
    """The unique positive preimage of ``(z, t)`` under :func:`appc_g`."""
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(z <= 0) or np.any(t <= 0):
        raise DomainError("appc_xy_star needs z > 0 and t > 0")
    root = 1.0 + np.sqrt(1.0 + 4.0 * t * z)
    return _out(root / (2.0 * z)), _out(root / (2.0 * t))


def appc_rate_J(ctx: RateContext, z, t):
    """Rate of ``(Sigma_T / V_T, S_T / V_T)``; ``inf`` unless z, t > 0."""
    a, b = ctx.a, ctx.b
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    ok = (z > 0) & (t > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (
            z / 2.0
            + (b**2 / (16.0 * z) + (a - 2.0) ** 2 / (16.0 * t)) * (1.0 + np.sqrt(1.0 + 4.0 * t * z))
            + a * b / 4.0
        )
    return _out(np.where(ok, val, math.inf))


def appc_minimizer(ctx: RateContext):
    """Zero of ``appc_rate_J``: ``(-b/2, -a(a-2)/(2b))``, the limit of ``(Sigma_T/V_T, S_T/V_T)``."""
    return -ctx.b / 2.0, -ctx.a * (ctx.a - 2.0) / (2.0 * ctx.b)


def appc_coercivity_box(ctx: RateContext):
    """``(eps, A, xi, B)``; ``appc_rate_J >= 1`` outside ``[eps, A] x [xi, B]``."""
    a, b = ctx.a, ctx.b
    k = 4.0 - a * b
    return b**2 / (4.0 * k), k / 2.0, (a - 2.0) ** 2 / (4.0 * k), 4.0 * k**5 / b**6


# ----------------------------------------------------------------------------
# Girsanov likelihood ratios


def _finite_exp(log_w):
    log_w = np.asarray(log_w, dtype=float)
    if not np.all(np.isfinite(log_w)) or np.any(log_w > 709.0):
        raise GirsanovOverflowError(_out(log_w[~np.isfinite(log_w) | (log_w > 709.0)].ravel()[0]))
    return _out(np.exp(log_w))


def log_girsanov_weight_ab(f: PathFunctionals, from_, to):
    """Log of ``dP^{a,b} / dP^{alpha,beta}`` on the CIR path sigma-field.

    ``from_ = (alpha, beta)`` is the simulation law, ``to = (a, b)`` the target.
    """
    alpha, beta = from_
    a, b = to
    T = f.T
    da, db = a - alpha, b - beta
    log_w = (
        da / 4.0 * f.log_x_T
        - da / 4.0 * (math.log(f.x0) + b * T)
        + db / 4.0 * (f.x_T - f.x0 - alpha * T)
        - T / 8.0 * ((b**2 - beta**2) * f.s_T - (4.0 * da - a**2 + alpha**2) * f.sigma_T)
    )
    return _out(log_w)


def girsanov_weight_ab(f: PathFunctionals, from_, to):
    """Radon-Nikodym weight changing the CIR drift ``(alpha, beta) -> (a, b)``."""
    return _finite_exp(log_girsanov_weight_ab(f, from_, to))


def log_girsanov_weight_cd(noise, f: PathFunctionals, from_, to, ctx: RateContext):
    """Log of ``dP_{c,d} / dP_{gamma,delta}`` for the log-price drift.

    ``noise`` is a Path with retained increments or precomputed ItoSums;
    its ``dW`` are the simulation-law increments.  They are shifted to the
    target-law Brownian motion before the exponent is evaluated.
    """
    gamma, delta = from_
    c, d = to
    sums = noise if isinstance(noise, ItoSums) else ito_sums(noise, ctx.rho)
    T = f.T
    root = math.sqrt(1.0 - ctx.rho**2)
    dc, dd = c - gamma, d - delta
    k = 1.0 / (2.0 * root)
    w1 = sums.w1 - k * (dc * T * f.sigma_T + dd * T)
    w2 = sums.w2 - k * (dc * T + dd * T * f.s_T)
    log_w = (
        k * dc * w1
        + k * dd * w2
        + T / (8.0 * root**2) * (dd**2 * f.s_T + dc**2 * f.sigma_T + 2.0 * dc * dd)
    )
    return _out(log_w)


def girsanov_weight_cd(noise, f: PathFunctionals, from_, to, ctx: RateContext):
    return _finite_exp(log_girsanov_weight_cd(noise, f, from_, to, ctx))


def write_rate_grid_csv(dest, names, coords, values) -> None:
    """Write ``coords...`` plus ``value`` columns, one row per grid point."""
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "value"])
        for row in zip(*(np.ravel(c) for c in coords), np.ravel(values)):
            w.writerow([repr(float(v)) for v in row])
