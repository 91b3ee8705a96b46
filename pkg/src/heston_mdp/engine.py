"""Block-parallel batch simulation that streams path functionals.

Paths are split into fixed-size blocks; block ``k`` draws from the stream
``(seed, stream, k)``.  Results are concatenated in block order, so output
depends only on ``(params, dt, seed, stream, block_size)`` and never on the
number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import DomainError, SimulationError
from .functionals import FunctionalsAccumulator, ItoSums, PathFunctionals
from .models import HestonParams, euler_step, exact_step, make_rng, validate_params

__all__ = ["THREADS_ENV", "DEFAULT_BLOCK_SIZE", "worker_count", "simulate_batch", "horizon_steps"]

THREADS_ENV = "HESTON_MDP_THREADS"
DEFAULT_BLOCK_SIZE = 8192


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
        return max(1, n)
    return os.cpu_count() or 1


def horizon_steps(horizons, dt: float) -> list[int]:
    steps = []
    for h in horizons:
        k = h / dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k) or round(k) < 2:
            raise DomainError(f"horizon {h} is not a multiple (>= 2) of dt={dt}")
        steps.append(int(round(k)))
    if steps != sorted(steps) or len(set(steps)) != len(steps):
        raise DomainError("horizons must be strictly increasing")
    return steps


def _run_block(args):
    p, dt, steps, n, seed, stream, block, scheme, track_ito = args
    rng = make_rng(seed, stream, block)
    acc = FunctionalsAccumulator(p.x0, p.y0, n, p.rho, track_ito=track_ito)
    x = acc.x
    out = []
    targets = iter(steps)
    nxt = next(targets)
    for i in range(1, steps[-1] + 1):
        if scheme == "exact":
            x_new, dy, ints = exact_step(p, x, dt, rng)
        else:
            x_new, dy, ints, _, _ = euler_step(p, x, dt, rng)
        acc.update(x_new, dy, dt, ints)
        x = x_new
        if i == nxt:
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(acc.y_incr))):
                raise SimulationError(f"non-finite state in block {block}", step=i)
            out.append(acc.snapshot())
            nxt = next(targets, None)
    return out


def _concat(parts):
    fs = [pf for pf, _ in parts]
    head = fs[0]
    kw = {
        name: np.concatenate([getattr(f, name) for f in fs])
        for name in ("s_T", "sigma_T", "x_T", "log_x_T", "y_incr", "int_invx_dy", "v_T")
    }
    f = PathFunctionals(
        T=head.T,
        x0=head.x0,
        y0=head.y0,
        metadata={"min_x": np.concatenate([f.metadata["min_x"] for f in fs])},
        **kw,
    )
    if parts[0][1] is None:
        return f, None
    ito = ItoSums(
        *(np.concatenate([getattr(it, k) for _, it in parts]) for k in ("m1", "m2", "n1", "n2", "w1", "w2"))
    )
    return f, ito


def simulate_batch(
    p: HestonParams,
    dt: float,
    horizons,
    n_paths: int,
    seed: int,
    stream: int = 0,
    scheme: str = "exact",
    track_ito: bool = False,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int | None = None,
):
    """Simulate ``n_paths`` and return ``[(PathFunctionals, ItoSums | None), ...]``,
    one entry per horizon, each holding arrays over paths."""
    validate_params(p)
    if scheme not in ("exact", "euler"):
        raise DomainError(f"unknown scheme {scheme!r}")
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    steps = horizon_steps(horizons, dt)
    n_blocks = math.ceil(n_paths / block_size)
    jobs = [
        (p, dt, steps, min(block_size, n_paths - k * block_size), seed, stream, k, scheme, track_ito)
        for k in range(n_blocks)
    ]
    workers = worker_count() if workers is None else max(1, workers)
    if workers > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_blocks)) as pool:
            blocks = list(pool.map(_run_block, jobs))
    else:
        blocks = [_run_block(j) for j in jobs]
    return [_concat([blk[h] for blk in blocks]) for h in range(len(steps))]
