"""Closed-form drift MLE and the asymptotic covariance objects.

Both 2x2 systems share the bracket ``T [[Sigma_T, 1], [1, S_T]]`` whose
determinant is ``T^2 V_T``; they are solved with the explicit inverse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .functionals import EPS_DET, ItoSums, PathFunctionals, bracket_matrix, check_nondegenerate

__all__ = [
    "ThetaEstimate",
    "CovarianceSet",
    "estimate_cir",
    "estimate_full",
    "estimate_via_martingales",
    "sigma_matrix",
    "covariance_set",
]


@dataclass
class ThetaEstimate:
    a_hat: float | np.ndarray
    b_hat: float | np.ndarray
    c_hat: float | np.ndarray
    d_hat: float | np.ndarray
    bracket: np.ndarray
    T: float

    def as_array(self) -> np.ndarray:
        """Shape ``(4,)`` for one path, ``(4, n)`` for a batch."""
        return np.array([self.a_hat, self.b_hat, self.c_hat, self.d_hat], dtype=float)

    def to_record(self) -> dict:
        def conv(v):
            return v.tolist() if isinstance(v, np.ndarray) else float(v)

        return {
            "a_hat": conv(self.a_hat),
            "b_hat": conv(self.b_hat),
            "c_hat": conv(self.c_hat),
            "d_hat": conv(self.d_hat),
            "T": float(self.T),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record())


def _solve_bracket(f: PathFunctionals, r1, r2):
    # (T B)^{-1} = [[S_T, -1], [-1, Sigma_T]] / (T V_T)
    tv = f.T * f.v_T
    return (f.s_T * r1 - r2) / tv, (f.sigma_T * r2 - r1) / tv


def estimate_cir(f: PathFunctionals, eps: float = EPS_DET):
    """``(a_hat, b_hat)`` from the observable right-hand side
    ``(log X_T - log x0 + 2 T Sigma_T, X_T - x0)``."""
    check_nondegenerate(f, eps)
    r1 = f.log_x_T - np.log(f.x0) + 2.0 * f.T * f.sigma_T
    r2 = f.x_T - f.x0
    return _solve_bracket(f, r1, r2)


def estimate_full(f: PathFunctionals, eps: float = EPS_DET) -> ThetaEstimate:
    """All four drift parameters; ``(c_hat, d_hat)`` use ``(int dY/X, Y_T - y0)``."""
    a_hat, b_hat = estimate_cir(f, eps)
    c_hat, d_hat = _solve_bracket(f, f.int_invx_dy, f.y_incr)
    return ThetaEstimate(a_hat, b_hat, c_hat, d_hat, bracket_matrix(f), f.T)


def estimate_via_martingales(theta, f: PathFunctionals, ito: ItoSums) -> ThetaEstimate:
    """Oracle form ``theta + 2 diag(<M>^-1, <M>^-1) (M_T, N_T)`` using Ito sums.

    Needs the true parameters and retained noise, so only usable on
    simulated paths.
    """
    check_nondegenerate(f)
    a, b, c, d = theta
    ea, eb = _solve_bracket(f, 2.0 * ito.m1, 2.0 * ito.m2)
    ec, ed = _solve_bracket(f, 2.0 * ito.n1, 2.0 * ito.n2)
    return ThetaEstimate(a + ea, b + eb, c + ec, d + ed, bracket_matrix(f), f.T)


def sigma_matrix(a: float, b: float) -> np.ndarray:
    """Ergodic limit of ``<M>_T / T``: ``[[-b/(a-2), 1], [1, -a/b]]``."""
    if not a > 2 or not b < 0:
        raise DomainError(f"need a > 2 and b < 0, got a={a}, b={b}")
    return np.array([[-b / (a - 2.0), 1.0], [1.0, -a / b]])


@dataclass(frozen=True)
class CovarianceSet:
    Sigma: np.ndarray
    R: np.ndarray
    Gamma: np.ndarray
    S_block: np.ndarray
    Gamma_inv: np.ndarray

    @property
    def Sigma_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Sigma)

    @property
    def clt_covariance(self) -> np.ndarray:
        """``4 Gamma^-1 = 4 R^-1 (x) Sigma^-1``, the CLT covariance in its customary form."""
        return 4.0 * self.Gamma_inv

    @property
    def sandwich_covariance(self) -> np.ndarray:
        """``4 (I (x) Sigma^-1) Gamma (I (x) Sigma^-1) = 4 R (x) Sigma^-1``.

        This is the covariance implied by ``theta_hat - theta = 2 <M>^-1 (M, N)``
        with ``Cov(M, N) / T -> Gamma``, and equals the inverse Fisher
        information of the joint drift model.  It coincides with
        :attr:`clt_covariance` only at ``rho = 0``.
        """
        return 4.0 * np.kron(self.R, self.Sigma_inv)


def covariance_set(a: float, b: float, rho: float) -> CovarianceSet:
    if not abs(rho) < 1:
        raise DomainError(f"need |rho| < 1, got rho={rho}")
    sigma = sigma_matrix(a, b)
    det = -(b / (a - 2.0)) * (-a / b) - 1.0  # = 2 / (a - 2)
    sigma_inv = np.array([[sigma[1, 1], -1.0], [-1.0, sigma[0, 0]]]) / det
    r = np.array([[1.0, rho], [rho, 1.0]])
    r_inv = np.array([[1.0, -rho], [-rho, 1.0]]) / (1.0 - rho**2)
    return CovarianceSet(
        Sigma=sigma,
        R=r,
        Gamma=np.kron(r, sigma),
        S_block=np.kron(np.eye(2), sigma),
        Gamma_inv=np.kron(r_inv, sigma_inv),
    )
