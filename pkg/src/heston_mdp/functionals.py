"""Sufficient statistics of the drift likelihood computed from sampled paths.

Lebesgue integrals use the trapezoid rule; the observable ``int X^-1 dY``
is a left-endpoint (non-anticipating) sum.  Oracle Ito sums are built from
the per-step stochastic integrals retained with a path, see
:class:`heston_mdp.models.Noise`.  Every field of
:class:`PathFunctionals` may be a float (one path) or an array (a batch of
paths sharing ``T``, ``x0`` and ``y0``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DegeneracyError, DomainError, PreconditionError

__all__ = [
    "EPS_DET",
    "SMALL_X_FLAG",
    "PathFunctionals",
    "ItoSums",
    "compute_functionals",
    "bracket_matrix",
    "ito_sums",
    "check_nondegenerate",
    "FunctionalsAccumulator",
]

EPS_DET = 1e-10
SMALL_X_FLAG = 1e-8

_JSON_NAMES = {
    "T": "T",
    "s_T": "S_T",
    "sigma_T": "Sigma_T",
    "x_T": "X_T",
    "log_x_T": "logX_T",
    "y_incr": "dY",
    "int_invx_dy": "intInvXdY",
    "v_T": "V_T",
}


@dataclass
class PathFunctionals:
    T: float
    s_T: float | np.ndarray
    sigma_T: float | np.ndarray
    x_T: float | np.ndarray
    log_x_T: float | np.ndarray
    y_incr: float | np.ndarray
    int_invx_dy: float | np.ndarray
    v_T: float | np.ndarray
    x0: float
    y0: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return int(np.size(self.s_T))

    def take(self, index) -> "PathFunctionals":
        """Subset of a batch (boolean mask or integer index array)."""
        kw = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name in ("T", "x0", "y0", "metadata"):
                kw[f.name] = val
            else:
                kw[f.name] = np.asarray(val)[index]
        return PathFunctionals(**kw)

    def to_record(self) -> dict:
        out = {}
        for attr, name in _JSON_NAMES.items():
            val = getattr(self, attr)
            out[name] = val.tolist() if isinstance(val, np.ndarray) else float(val)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=False)


@dataclass
class ItoSums:
    """Ito integrals accumulated from retained per-step noise.

    ``m`` holds ``(int X^-1/2 dB, int X^1/2 dB)``, ``n`` the same against
    ``dB~ = rho dB + sqrt(1 - rho^2) dW`` and ``w`` against ``dW`` alone.
    """

    m1: float | np.ndarray
    m2: float | np.ndarray
    n1: float | np.ndarray
    n2: float | np.ndarray
    w1: float | np.ndarray
    w2: float | np.ndarray

    @property
    def m(self) -> np.ndarray:
        return np.array([self.m1, self.m2])

    @property
    def n(self) -> np.ndarray:
        return np.array([self.n1, self.n2])

    @property
    def big_m(self) -> np.ndarray:
        """The stacked four-dimensional martingale ``(M_T, N_T)``."""
        return np.array([self.m1, self.m2, self.n1, self.n2])

    def take(self, index) -> "ItoSums":
        return ItoSums(*(np.asarray(getattr(self, f.name))[index] for f in fields(self)))


def check_nondegenerate(f: PathFunctionals, eps: float = EPS_DET) -> None:
    v = np.asarray(f.v_T)
    if np.any(~(v > eps)):
        raise DegeneracyError(f"V_T = S_T Sigma_T - 1 <= {eps:g}; bracket matrix is singular")


def compute_functionals(path) -> PathFunctionals:
    """Functionals of one Path (requires at least two steps)."""
    t = np.asarray(path.times, dtype=float)
    x = np.asarray(path.x, dtype=float)
    y = np.asarray(path.y, dtype=float)
    if len(t) < 3:
        raise DomainError("compute_functionals needs n_steps >= 2")
    if not np.all(x > 0):
        raise DomainError("path has non-positive variance values")
    dt = np.diff(t)
    T = float(t[-1] - t[0])
    s_T = float(np.sum(0.5 * dt * (x[:-1] + x[1:]))) / T
    inv = 1.0 / x
    sigma_T = float(np.sum(0.5 * dt * (inv[:-1] + inv[1:]))) / T
    int_invx_dy = float(np.sum(np.diff(y) * inv[:-1]))
    min_x = float(x.min())
    f = PathFunctionals(
        T=T,
        s_T=s_T,
        sigma_T=sigma_T,
        x_T=float(x[-1]),
        log_x_T=math.log(x[-1]),
        y_incr=float(y[-1] - y[0]),
        int_invx_dy=int_invx_dy,
        v_T=s_T * sigma_T - 1.0,
        x0=float(x[0]),
        y0=float(y[0]),
        metadata={"min_x": min_x, "small_x": min_x < SMALL_X_FLAG},
    )
    check_nondegenerate(f)
    return f


def bracket_matrix(f: PathFunctionals) -> np.ndarray:
    """``<M>_T / T = [[Sigma_T, 1], [1, S_T]]`` (shape ``(2, 2)`` or ``(2, 2, n)``)."""
    one = np.ones_like(np.asarray(f.s_T, dtype=float))
    return np.array([[f.sigma_T, one], [one, f.s_T]], dtype=float)


def _combine(rho, sqrt_db, invsqrt_db, sqrt_dw, invsqrt_dw):
    rt = math.sqrt(1.0 - rho**2)
    return ItoSums(
        m1=invsqrt_db,
        m2=sqrt_db,
        n1=rho * invsqrt_db + rt * invsqrt_dw,
        n2=rho * sqrt_db + rt * sqrt_dw,
        w1=invsqrt_dw,
        w2=sqrt_dw,
    )


def ito_sums(path, rho: float) -> ItoSums:
    if path.noise is None:
        raise PreconditionError("path carries no retained noise")
    z = path.noise
    parts = [float(np.sum(a)) for a in (z.sqrt_dB, z.invsqrt_dB, z.sqrt_dW, z.invsqrt_dW)]
    if not all(math.isfinite(v) for v in parts):
        raise PreconditionError("retained noise has no per-step integrals")
    return _combine(rho, *parts)


class FunctionalsAccumulator:
    """Streams functionals for a batch of paths without storing the paths."""

    def __init__(self, x0: float, y0: float, n_paths: int, rho: float, track_ito: bool = False):
        self.x0, self.y0, self.rho = float(x0), float(y0), float(rho)
        self.track_ito = track_ito
        self.t = 0.0
        self.x = np.full(n_paths, float(x0))
        self.y_incr = np.zeros(n_paths)
        self.int_x = np.zeros(n_paths)
        self.int_invx = np.zeros(n_paths)
        self.int_invx_dy = np.zeros(n_paths)
        self.min_x = np.full(n_paths, float(x0))
        if track_ito:
            self.sums = [np.zeros(n_paths) for _ in range(4)]

    def update(self, x_new, dy, dt, integrals=None):
        """Add one step; ``integrals`` are the per-step ``(int X^1/2 dB,
        int X^-1/2 dB, int X^1/2 dW, int X^-1/2 dW)`` when tracking."""
        x_old = self.x
        inv_old = 1.0 / x_old
        self.int_x += 0.5 * dt * (x_old + x_new)
        self.int_invx += 0.5 * dt * (inv_old + 1.0 / x_new)
        self.int_invx_dy += dy * inv_old
        self.y_incr += dy
        np.minimum(self.min_x, x_new, out=self.min_x)
        if self.track_ito:
            for acc, inc in zip(self.sums, integrals):
                acc += inc
        self.x = x_new
        self.t += dt

    def snapshot(self):
        T = self.t
        s_T = self.int_x / T
        sigma_T = self.int_invx / T
        f = PathFunctionals(
            T=T,
            s_T=s_T.copy(),
            sigma_T=sigma_T.copy(),
            x_T=self.x.copy(),
            log_x_T=np.log(self.x),
            y_incr=self.y_incr.copy(),
            int_invx_dy=self.int_invx_dy.copy(),
            v_T=s_T * sigma_T - 1.0,
            x0=self.x0,
            y0=self.y0,
            metadata={"min_x": self.min_x.copy()},
        )
        ito = _combine(self.rho, *(s.copy() for s in self.sums)) if self.track_ito else None
        return f, ito
