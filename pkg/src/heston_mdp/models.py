"""Heston / CIR parameters, exact and Euler path simulation, path I/O.

The variance follows ``dX = (a + bX) dt + 2 sqrt(X) dB`` and the log-price
``dY = (c + dX) dt + 2 sqrt(X) (rho dB + sqrt(1 - rho^2) dW)``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .errors import DomainError, SimulationError
from .special import sample_noncentral_chisq

__all__ = [
    "HestonParams",
    "SimGrid",
    "Noise",
    "Path",
    "EULER_FLOOR",
    "validate_params",
    "make_rng",
    "cir_scale",
    "cir_noncentrality",
    "cir_mean",
    "cir_variance",
    "cir_transition_sample",
    "exact_step",
    "euler_step",
    "euler_update",
    "coarsen_noise",
    "simulate_heston_path",
    "simulate_euler_path",
    "write_path_csv",
    "read_path_csv",
    "write_path_binary",
    "read_path_binary",
]

EULER_FLOOR = 1e-12
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class HestonParams:
    a: float
    b: float
    c: float = 0.0
    d: float = 0.0
    rho: float = 0.0
    x0: float = 1.0
    y0: float = 0.0

    def violations(self) -> list[str]:
        out = []
        if not self.a > 2:
            out.append("a <= 2")
        if not self.b < 0:
            out.append("b >= 0")
        if not abs(self.rho) < 1:
            out.append("|rho| >= 1")
        if not self.x0 > 0:
            out.append("x0 <= 0")
        for name in ("a", "b", "c", "d", "rho", "x0", "y0"):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} is not finite")
        return out

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d])

    def replace(self, **changes) -> "HestonParams":
        values = {k: getattr(self, k) for k in ("a", "b", "c", "d", "rho", "x0", "y0")}
        values.update(changes)
        return HestonParams(**values)


def validate_params(p: HestonParams) -> HestonParams:
    """Return ``p`` unchanged, or raise DomainError naming every violated constraint."""
    bad = p.violations()
    if bad:
        err = DomainError("invalid Heston parameters: " + ", ".join(bad))
        err.violations = bad
        raise err
    return p


@dataclass(frozen=True)
class SimGrid:
    horizon_T: float
    n_steps: int

    def __post_init__(self):
        if not (self.horizon_T > 0 and math.isfinite(self.horizon_T)):
            raise DomainError(f"horizon_T must be > 0, got {self.horizon_T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon_T, self.n_steps + 1)


@dataclass(frozen=True)
class Noise:
    """Per-step driving noise retained with a path.

    ``dB`` and ``dW`` are left-endpoint Brownian increments (variance about
    ``dt``).  The remaining arrays are the per-step stochastic integrals
    ``int X^{1/2} dB``, ``int X^{-1/2} dB``, ``int X^{1/2} dW`` and
    ``int X^{-1/2} dW``.  On Euler paths they are the left-endpoint
    products; on exact paths the ``dB`` integrals come from the step-local
    Ito identities for ``X`` and ``log X`` and the ``dW`` integrals are drawn
    from their conditional Gaussian law given the variance path, with
    ``dB = int X^{1/2} dB / sqrt(X_i)`` and ``dW = int X^{1/2} dW / sqrt(X_i)``.
    """

    dB: np.ndarray
    dW: np.ndarray
    sqrt_dB: np.ndarray
    invsqrt_dB: np.ndarray
    sqrt_dW: np.ndarray
    invsqrt_dW: np.ndarray

    @classmethod
    def from_increments(cls, x_left, dB, dW) -> "Noise":
        """Euler-style noise: integrals are left-endpoint products."""
        r = np.sqrt(np.asarray(x_left, dtype=float))
        dB = np.asarray(dB, dtype=float)
        dW = np.asarray(dW, dtype=float)
        return cls(dB, dW, r * dB, dB / r, r * dW, dW / r)

    def arrays(self):
        return (self.dB, self.dW, self.sqrt_dB, self.invsqrt_dB, self.sqrt_dW, self.invsqrt_dW)


@dataclass
class Path:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    noise: Noise | None = None
    scheme: str = "exact"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        if len(self.x) != n or len(self.y) != n:
            raise DomainError("times, x and y must have equal length")
        if n >= 2 and not np.all(np.diff(self.times) > 0):
            raise DomainError("times must be strictly increasing")
        if self.noise is not None and any(len(a) != n - 1 for a in self.noise.arrays()):
            raise DomainError("noise arrays must have one entry per step")

    @property
    def x0(self) -> float:
        return float(self.x[0])

    @property
    def y0(self) -> float:
        return float(self.y[0])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __eq__(self, other):
        if not isinstance(other, Path):
            return NotImplemented
        same = (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and self.scheme == other.scheme
        )
        if not same or (self.noise is None) != (other.noise is None):
            return False
        if self.noise is None:
            return True
        return all(np.array_equal(u, v) for u, v in zip(self.noise.arrays(), other.noise.arrays()))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator keyed by ``(seed, *stream)``; any 64-bit seed is accepted."""
    words = [int(seed) & _SEED_MASK, *(int(s) & _SEED_MASK for s in stream)]
    return np.random.default_rng(np.random.SeedSequence(words))


# ----------------------------------------------------------------------------
# CIR transition law


def cir_scale(b: float, dt):
    """``(e^{b dt} - 1) / b``; the transition is ``scale * chi'^2``."""
    return np.expm1(b * dt) / b


def cir_noncentrality(b: float, x_from, dt):
    """``x_from e^{b dt} / scale``, equal to ``-x_from b / (e^{-b dt} - 1)``."""
    return x_from * b / (-np.expm1(-b * dt))


def cir_mean(p: HestonParams, x_from, t):
    eb = np.exp(p.b * t)
    return x_from * eb + p.a * np.expm1(p.b * t) / p.b


def cir_variance(p: HestonParams, x_from, t):
    scale = cir_scale(p.b, t)
    return scale**2 * 2.0 * (p.a + 2.0 * cir_noncentrality(p.b, x_from, t))


def cir_transition_sample(p: HestonParams, x_from, dt, rng: np.random.Generator):
    """Exact draw of ``X_{t+dt}`` given ``X_t = x_from`` (vectorised over ``x_from``)."""
    x_arr = np.asarray(x_from, dtype=float)
    if not np.all(x_arr > 0) or not np.all(np.isfinite(x_arr)):
        raise DomainError("x_from must be finite and > 0")
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError(f"dt must be > 0, got {dt}")
    scale = cir_scale(p.b, dt)
    return scale * sample_noncentral_chisq(p.a, cir_noncentrality(p.b, x_arr, dt), rng)


# ----------------------------------------------------------------------------
# One-step updates shared by single-path and batch simulation.


def exact_step(p: HestonParams, x, dt: float, rng: np.random.Generator):
    """Advance an array of variances one step with the exact transition.

    Returns ``(x_new, dy, integrals)`` with ``integrals`` the per-step
    ``(int X^{1/2} dB, int X^{-1/2} dB, int X^{1/2} dW, int X^{-1/2} dW)``.
    The ``dB`` integrals follow from

        2 int X^{1/2} dB  = X_new - X - a dt - b int X dt
        2 int X^{-1/2} dB = log(X_new / X) - b dt - (a - 2) int X^{-1} dt

    with trapezoid time integrals.  Given the variance path the ``dW``
    integrals are jointly Gaussian with variances ``int X dt``,
    ``int X^{-1} dt`` and covariance ``dt``.
    """
    scale = cir_scale(p.b, dt)
    x_new = scale * sample_noncentral_chisq(p.a, cir_noncentrality(p.b, x, dt), rng)
    g = rng.standard_normal((2,) + np.shape(x))
    int_x = 0.5 * dt * (x + x_new)
    int_inv = 0.5 * dt * (1.0 / x + 1.0 / x_new)
    sqrt_db = 0.5 * (x_new - x - p.a * dt - p.b * int_x)
    invsqrt_db = 0.5 * (np.log(x_new / x) - p.b * dt - (p.a - 2.0) * int_inv)
    sqrt_dw = np.sqrt(int_x) * g[0]
    resid = np.maximum(int_inv - dt * dt / int_x, 0.0)
    invsqrt_dw = dt / int_x * sqrt_dw + np.sqrt(resid) * g[1]
    shock = p.rho * sqrt_db + math.sqrt(1.0 - p.rho**2) * sqrt_dw
    dy = p.c * dt + p.d * int_x + 2.0 * shock
    return x_new, dy, (sqrt_db, invsqrt_db, sqrt_dw, invsqrt_dw)


def euler_update(p: HestonParams, x, dt: float, dB, dW, floor: float = EULER_FLOOR):
    """Full-truncation Euler update for given increments; returns ``(x_new, dy)``."""
    xp = np.maximum(x, 0.0)
    root = np.sqrt(xp)
    x_new = np.maximum(x + (p.a + p.b * xp) * dt + 2.0 * root * dB, floor)
    dy = (p.c + p.d * xp) * dt + 2.0 * root * (p.rho * dB + math.sqrt(1.0 - p.rho**2) * dW)
    return x_new, dy


def euler_step(p: HestonParams, x, dt: float, rng: np.random.Generator, floor: float = EULER_FLOOR):
    """Full-truncation Euler step with fresh increments.

    Returns ``(x_new, dy, integrals, dB, dW)`` with left-endpoint integrals.
    """
    sq = math.sqrt(dt)
    dB = sq * rng.standard_normal(np.shape(x))
    dW = sq * rng.standard_normal(np.shape(x))
    x_new, dy = euler_update(p, x, dt, dB, dW, floor)
    r = np.sqrt(x)
    return x_new, dy, (r * dB, dB / r, r * dW, dW / r), dB, dW


def _run_path(p, grid, seed, keep_noise, scheme, floor, noise=None, stream=()):
    validate_params(p)
    rng = make_rng(seed, *stream)
    n, dt = grid.n_steps, grid.dt
    if noise is not None and len(noise.dB) != n:
        raise DomainError("supplied noise does not match the grid")
    x = np.empty(n + 1)
    y = np.empty(n + 1)
    cols = np.empty((6, n))
    x[0], y[0] = p.x0, p.y0
    xi, yi = p.x0, p.y0
    for i in range(n):
        if scheme == "exact":
            xn, dy, ints = exact_step(p, xi, dt, rng)
            root = math.sqrt(xi)
            dB, dW = ints[0] / root, ints[2] / root
        elif noise is None:
            xn, dy, ints, dB, dW = euler_step(p, xi, dt, rng, floor)
        else:
            dB, dW = noise.dB[i], noise.dW[i]
            xn, dy = euler_update(p, xi, dt, dB, dW, floor)
            root = math.sqrt(xi)
            ints = (root * dB, dB / root, root * dW, dW / root)
        xn = float(xn)
        yn = yi + float(dy)
        if not (math.isfinite(xn) and math.isfinite(yn)):
            raise SimulationError("non-finite state", step=i)
        x[i + 1], y[i + 1] = xn, yn
        cols[:, i] = (dB, dW, *ints)
        xi, yi = xn, yn
    kept = Noise(*cols) if keep_noise else None
    meta = {"seed": int(seed), "stream": [int(v) for v in stream]}
    return Path(grid.times(), x, y, kept, scheme=scheme, metadata=meta)


def simulate_heston_path(
    p: HestonParams, grid: SimGrid, seed: int, keep_noise: bool = True, stream: tuple = ()
) -> Path:
    """Simulate ``(X, Y)`` with the exact CIR transition and the step-local Y update.

    ``stream`` selects an independent substream of ``seed``.
    """
    return _run_path(p, grid, seed, keep_noise, "exact", None, stream=stream)


def simulate_euler_path(
    p: HestonParams,
    grid: SimGrid,
    seed: int = 0,
    keep_noise: bool = True,
    floor: float = EULER_FLOOR,
    noise: Noise | None = None,
    stream: tuple = (),
) -> Path:
    """Full-truncation Euler oracle; X is floored at ``floor``.

    With ``noise`` given the increments are taken from it instead of drawn,
    which couples paths on nested grids (see :func:`coarsen_noise`).
    """
    return _run_path(p, grid, seed, keep_noise, "euler", floor, noise, stream=stream)


def coarsen_noise(noise: Noise, factor: int = 2) -> Noise:
    """Brownian increments of the same path on a grid ``factor`` times coarser.

    Only ``dB`` and ``dW`` are meaningful on the result; re-simulate with
    ``simulate_euler_path(..., noise=...)`` to rebuild the integrals.
    """
    n = len(noise.dB)
    if n % factor:
        raise DomainError(f"{n} steps cannot be coarsened by {factor}")
    dB = noise.dB.reshape(-1, factor).sum(axis=1)
    dW = noise.dW.reshape(-1, factor).sum(axis=1)
    nan = np.full_like(dB, np.nan)
    return Noise(dB, dW, nan, nan, nan, nan)


# ----------------------------------------------------------------------------
# Path I/O

_MAGIC = b"HSTP"
_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


def write_path_csv(path: Path, dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y"])
        for t, xv, yv in zip(path.times, path.x, path.y):
            w.writerow([repr(float(t)), repr(float(xv)), repr(float(yv))])


def read_path_csv(src) -> Path:
    data = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2)
    return Path(data[:, 0].copy(), data[:, 1].copy(), data[:, 2].copy(), scheme="csv")


def write_path_binary(path: Path, dest) -> None:
    """Layout: ``HSTP``, u16 version, u16 flags (bit 0 = noise), u64 point count,
    then little-endian f64 arrays t, x, y and, if flagged, the six per-step
    noise arrays in :class:`Noise` field order."""
    flags = 1 if path.noise is not None else 0
    n = len(path.times)
    with open(dest, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, flags, n))
        for arr in (path.times, path.x, path.y):
            fh.write(np.asarray(arr, dtype="<f8").tobytes())
        if flags:
            for arr in path.noise.arrays():
                fh.write(np.asarray(arr, dtype="<f8").tobytes())


def read_path_binary(src) -> Path:
    raw = FsPath(src).read_bytes()
    if len(raw) < _HEADER.size:
        raise DomainError("truncated HSTP header")
    magic, version, flags, n = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise DomainError(f"not an HSTP file (magic {magic!r})")
    if version != _VERSION:
        raise DomainError(f"unsupported HSTP version {version}")
    off = _HEADER.size
    arrays = []
    counts = [n, n, n] + ([n - 1] * 6 if flags & 1 else [])
    if len(raw) != off + 8 * sum(counts):
        raise DomainError(f"HSTP payload size mismatch for {n} points")
    for count in counts:
        arrays.append(np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(float))
        off += 8 * count
    noise = Noise(*arrays[3:]) if flags & 1 else None
    return Path(arrays[0], arrays[1], arrays[2], noise, scheme="binary")
