"""Monte Carlo experiments: CLT, normalised CGF, ergodic limits, MDP tails.

Every experiment returns an :class:`ExperimentResult` whose records carry
the hash of the config that produced them.  Random streams are keyed by
``(seed, experiment stream, ...)`` so results depend on the config only.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
from scipy.special import logsumexp

from .config import ExperimentConfig
from .deviations import (
    RateContext,
    TiltedParams,
    log_girsanov_weight_ab,
    rate_I_ab,
    rate_I_theta,
)
from .engine import horizon_steps, simulate_batch
from .errors import ConfigError, ExperimentError
from .functionals import EPS_DET
from .mle import covariance_set, estimate_cir, estimate_full, sigma_matrix

__all__ = [
    "SCHEMA_VERSION",
    "ExperimentResult",
    "run_clt_check",
    "run_cgf_convergence",
    "run_ergodic_check",
    "run_mdp_tail",
    "inf_rate_over_complement",
    "inf_rate_grid_search",
    "quadratic_hessian",
    "mdp_tilts",
]

SCHEMA_VERSION = 1

STREAM_CLT = 1
STREAM_CGF = 2
STREAM_ERGODIC = 3
STREAM_MDP = 4
STREAM_MDP_IS = 5

MAX_SKIPPED_FRACTION = 0.01
MIN_EFFECTIVE_SAMPLE = 10.0
FEASIBLE_LOG_PROB = 6.0


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return value


@dataclass
class ExperimentResult:
    experiment: str
    config: ExperimentConfig
    records: list
    summary: dict
    table: list
    seeds: dict
    warnings: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def to_document(self) -> dict:
        h = self.config_hash
        return _jsonable(
            {
                "schema_version": SCHEMA_VERSION,
                "experiment": self.experiment,
                "config_hash": h,
                "config": self.config.to_dict(include_output=False),
                "seeds": self.seeds,
                "summary": self.summary,
                "records": [{"config_hash": h, **r} for r in self.records],
                "warnings": list(self.warnings),
            }
        )

    def write(self, out_dir=None) -> dict:
        """Write ``<experiment>.json``, ``<experiment>.csv`` and a timing sidecar.

        The JSON and CSV files are byte-identical across reruns of the same
        config; wall-clock time goes to ``<experiment>.timing.json`` only.
        """
        out = FsPath(out_dir if out_dir is not None else self.config.output_path)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.experiment.replace("-", "_")
        paths = {
            "json": out / f"{stem}.json",
            "csv": out / f"{stem}.csv",
            "timing": out / f"{stem}.timing.json",
        }
        paths["json"].write_text(json.dumps(self.to_document(), indent=2) + "\n")
        _write_table(paths["csv"], self.table, self.config_hash)
        timing = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "wall_clock_s": self.wall_clock_s,
        }
        paths["timing"].write_text(json.dumps(timing, indent=2) + "\n")
        return paths


def _write_table(dest, rows, config_hash) -> None:
    columns = ["config_hash"]
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            full = {"config_hash": config_hash, **_jsonable(row)}
            w.writerow(["" if full.get(c) is None else full.get(c) for c in columns])


def _valid_mask(f):
    ok = np.asarray(f.v_T) > EPS_DET
    for name in ("s_T", "sigma_T", "log_x_T", "int_invx_dy", "y_incr"):
        ok &= np.isfinite(np.asarray(getattr(f, name)))
    return ok


def _check_skipped(n_skipped: int, n_total: int, what: str) -> None:
    if n_skipped > MAX_SKIPPED_FRACTION * n_total:
        raise ExperimentError(
            f"{what}: {n_skipped} of {n_total} paths are degenerate "
            f"(more than {MAX_SKIPPED_FRACTION:.0%})"
        )


def _product_se(zi, zj):
    """Standard error of the sample covariance of ``zi`` and ``zj``."""
    prod = (zi - zi.mean()) * (zj - zj.mean())
    return float(prod.std(ddof=1) / math.sqrt(len(prod)))


def _correlation(c):
    sd = np.sqrt(np.diag(c))
    return c / np.outer(sd, sd)


# ----------------------------------------------------------------------------
# CLT


def run_clt_check(cfg: ExperimentConfig, workers=None) -> ExperimentResult:
    """Empirical covariance of ``sqrt(T)(theta_hat - theta)`` at the largest horizon.

    Two comparators are reported: ``4 Gamma^-1`` and the sandwich form
    ``4 R (x) Sigma^-1`` (see :class:`heston_mdp.mle.CovarianceSet`).
    """
    if cfg.n_paths < 2:
        raise ExperimentError("the CLT check needs n_paths >= 2 to form a covariance")
    start = time.perf_counter()
    p = cfg.params
    T = cfg.horizons[-1]
    [(f, _)] = simulate_batch(p, cfg.dt, [T], cfg.n_paths, cfg.seed, stream=STREAM_CLT, workers=workers)
    ok = _valid_mask(f)
    n_skipped = int((~ok).sum())
    _check_skipped(n_skipped, cfg.n_paths, "clt-check")
    est = estimate_full(f.take(ok)).as_array()
    z = math.sqrt(T) * (est - p.theta[:, None])
    n = z.shape[1]
    if n < 2:
        raise ExperimentError("fewer than two usable paths")
    cov = np.cov(z)
    cov_se = np.array([[_product_se(z[i], z[j]) for j in range(4)] for i in range(4)])
    cs = covariance_set(p.a, p.b, p.rho)
    targets = {"gamma_inv": cs.clt_covariance, "sandwich": cs.sandwich_covariance}
    corr = _correlation(cov)
    record = {
        "T": T,
        "n_paths_used": n,
        "n_skipped": n_skipped,
        "mean": z.mean(axis=1),
        "mean_se": z.std(axis=1, ddof=1) / math.sqrt(n),
        "covariance": cov,
        "covariance_se": cov_se,
        "correlation": corr,
    }
    summary = {}
    off = ~np.eye(4, dtype=bool)
    for name, tgt in targets.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(tgt != 0, (cov - tgt) / tgt, np.nan)
        tcorr = _correlation(tgt)
        corr_err = np.abs(corr - tcorr)
        record[f"target_{name}"] = tgt
        record[f"relative_error_{name}"] = rel
        record[f"target_correlation_{name}"] = tcorr
        record[f"correlation_abs_error_{name}"] = corr_err
        summary[name] = {
            "max_abs_diag_relative_error": float(np.max(np.abs(np.diag(rel)))),
            "max_offdiag_correlation_error": float(np.max(corr_err[off])),
        }
    table = []
    for i in range(4):
        for j in range(4):
            table.append(
                {
                    "T": T,
                    "i": i,
                    "j": j,
                    "empirical": cov[i, j],
                    "se": cov_se[i, j],
                    "target_gamma_inv": targets["gamma_inv"][i, j],
                    "target_sandwich": targets["sandwich"][i, j],
                }
            )
    return ExperimentResult(
        experiment="clt-check",
        config=cfg,
        records=[record],
        summary=summary,
        table=table,
        seeds={"seed": cfg.seed, "stream": STREAM_CLT},
        wall_clock_s=time.perf_counter() - start,
    )


# ----------------------------------------------------------------------------
# Normalised cumulant generating function


def _log_mean_exp(z):
    """``log mean exp(z)``, its delta-method SE and the effective sample size."""
    n = len(z)
    top = float(np.max(z))
    e = np.exp(z - top)
    m = float(e.mean())
    value = float(logsumexp(z) - math.log(n))
    se = float(e.std(ddof=1) / math.sqrt(n) / m) if n > 1 else math.nan
    ess = float(e.sum() ** 2 / np.sum(e * e))
    return value, se, ess


def run_cgf_convergence(cfg: ExperimentConfig, u_grid, max_norm: float = 1.0, workers=None) -> ExperimentResult:
    """``L_T(u) = lambda_T^-1 log E exp(sqrt(lambda_T / T) <u, (M_T, N_T)>)`` per horizon.

    The martingales come from the per-step stochastic integrals retained by
    the simulator.  An estimate whose effective sample size falls below 10
    triggers a warning.
    """
    u_grid = np.atleast_2d(np.asarray(u_grid, dtype=float))
    if u_grid.shape[1] != 4:
        raise ConfigError("u vectors must have four components")
    norms = np.linalg.norm(u_grid, axis=1)
    if np.any(norms > max_norm):
        raise ConfigError(f"|u| must be <= {max_norm}; got {norms.max():g}")
    start = time.perf_counter()
    p = cfg.params
    gamma = covariance_set(p.a, p.b, p.rho).Gamma
    batches = simulate_batch(
        p, cfg.dt, cfg.horizons, cfg.n_paths, cfg.seed, stream=STREAM_CGF, track_ito=True, workers=workers
    )
    records, table, notes = [], [], []
    for (f, ito), T in zip(batches, cfg.horizons):
        lam = cfg.speed(T)
        scale = math.sqrt(lam / T)
        big_m = ito.big_m
        for k, u in enumerate(u_grid):
            limit = 0.5 * float(u @ gamma @ u)
            if not np.any(u):
                value, se, ess = 0.0, 0.0, float(cfg.n_paths)
            else:
                lme, lme_se, ess = _log_mean_exp(scale * (u @ big_m))
                value, se = lme / lam, lme_se / lam
            if ess < MIN_EFFECTIVE_SAMPLE:
                msg = f"T={T:g}, u={u.tolist()}: effective sample size {ess:.1f} < {MIN_EFFECTIVE_SAMPLE:g}"
                notes.append(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
            rec = {
                "T": T,
                "lambda_T": lam,
                "u_index": k,
                "u": u,
                "estimate": value,
                "se": se,
                "limit": limit,
                "abs_error": abs(value - limit),
                "effective_sample_size": ess,
            }
            records.append(rec)
            table.append({**rec, "u": " ".join(repr(float(v)) for v in u)})
    summary = {"per_u": []}
    for k, u in enumerate(u_grid):
        errs = [r["abs_error"] for r in records if r["u_index"] == k]
        summary["per_u"].append(
            {
                "u": u,
                "abs_errors": errs,
                "final_abs_error": errs[-1],
                "error_decreasing": all(e2 < e1 for e1, e2 in zip(errs, errs[1:])),
                "final_below_first": errs[-1] < errs[0],
            }
        )
    return ExperimentResult(
        experiment="cgf-check",
        config=cfg,
        records=records,
        summary=summary,
        table=table,
        seeds={"seed": cfg.seed, "stream": STREAM_CGF},
        warnings=notes,
        wall_clock_s=time.perf_counter() - start,
    )


# ----------------------------------------------------------------------------
# Ergodic limits


def _checkpoint_count(n_steps: int, target: int = 100) -> int:
    for m in range(min(target, n_steps // 2), 0, -1):
        if n_steps % m == 0:
            return m
    raise ConfigError(f"horizon too short for the ergodic check ({n_steps} steps)")


def _ergodic_stats(s, sig):
    """``(S, Sigma, Sigma/V, S/V)`` and the operator-norm distance of ``T <M>^-1`` to ``Sigma^-1``."""
    v = s * sig - 1.0
    return np.array([s, sig, sig / v, s / v])


def _tm_inv_distance(s, sig, sigma_inv):
    v = s * sig - 1.0
    inv = np.array([[s, -1.0], [-1.0, sig]]) / v
    return float(np.linalg.norm(inv - sigma_inv, 2))


def _delta_se(fn, point, cov, h=1e-6):
    grad = np.empty(2)
    for k in range(2):
        up, dn = point.copy(), point.copy()
        up[k] += h
        dn[k] -= h
        grad[k] = (fn(*up) - fn(*dn)) / (2 * h)
    var = float(grad @ cov @ grad)
    return math.sqrt(var) if var >= 0 else math.nan


def run_ergodic_check(cfg: ExperimentConfig, n_batches: int = 20, workers=None) -> ExperimentResult:
    """Time averages at the largest horizon against their ergodic limits.

    Reported per path: ``S_T``, ``Sigma_T``, ``Sigma_T / V_T``, ``S_T / V_T``
    with limits ``-a/b``, ``-b/(a-2)``, ``-b/2``, ``-a(a-2)/(2b)``, and
    ``|| T <M>_T^-1 - Sigma^-1 ||_2``.  Single-path standard errors use
    batch means over ``n_batches`` equal time segments.
    """
    start = time.perf_counter()
    p = cfg.params
    T = cfg.horizons[-1]
    notes = []
    if len(cfg.horizons) > 1:
        notes.append(f"ergodic check uses only the largest horizon T={T:g}")
    n_total = horizon_steps([T], cfg.dt)[0]
    m = _checkpoint_count(n_total)
    checkpoints = [T * (k + 1) / m for k in range(m)]
    batches = simulate_batch(p, cfg.dt, checkpoints, cfg.n_paths, cfg.seed, stream=STREAM_ERGODIC, workers=workers)
    int_x = np.array([f.s_T * f.T for f, _ in batches])  # (m, n_paths)
    int_inv = np.array([f.sigma_T * f.T for f, _ in batches])
    times = np.array([f.T for f, _ in batches])
    limits = np.array([-p.a / p.b, -p.b / (p.a - 2.0), -p.b / 2.0, -p.a * (p.a - 2.0) / (2.0 * p.b)])
    sigma_inv = np.linalg.inv(sigma_matrix(p.a, p.b))
    names = ("S_T", "Sigma_T", "Sigma_T/V_T", "S_T/V_T")
    nb = n_batches if m % n_batches == 0 and m >= 2 * n_batches else m
    seg = m // nb
    fns = [
        lambda s, g: s,
        lambda s, g: g,
        lambda s, g: g / (s * g - 1.0),
        lambda s, g: s / (s * g - 1.0),
        lambda s, g: _tm_inv_distance(s, g, sigma_inv),
    ]
    records, table = [], []
    for k in range(cfg.n_paths):
        s, g = int_x[-1, k] / T, int_inv[-1, k] / T
        if not s * g - 1.0 > EPS_DET:
            notes.append(f"path {k}: V_T <= {EPS_DET:g}; ratios undefined")
        bounds = np.concatenate([[0.0], int_x[seg - 1 :: seg, k]]), np.concatenate([[0.0], int_inv[seg - 1 :: seg, k]])
        span = T / nb
        bs = np.diff(bounds[0]) / span
        bg = np.diff(bounds[1]) / span
        cov = np.cov(np.vstack([bs, bg])) / nb
        with np.errstate(divide="ignore", invalid="ignore"):
            values = [fn(s, g) for fn in fns]
            ses = [_delta_se(fn, np.array([s, g]), cov) for fn in fns]
        rec = {"path": k, "T": T}
        for name, val, se, lim in zip(names, values, ses, limits):
            rec[name] = val
            rec[f"{name}_se"] = se
            rec[f"{name}_limit"] = lim
            rec[f"{name}_relative_error"] = val / lim - 1.0
            rec[f"{name}_within_5pct"] = bool(abs(val / lim - 1.0) < 0.05)
        rec["tm_inv_distance"] = values[4]
        rec["tm_inv_distance_se"] = ses[4]
        rec["tm_inv_distance_below_0.15"] = bool(values[4] < 0.15)
        rec["V_T"] = s * g - 1.0
        rec["V_T_limit"] = limits[0] * limits[1] - 1.0
        records.append(rec)
        table.append(rec)
    first = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s_run = int_x[:, first] / times
        g_run = int_inv[:, first] / times
        traj = _ergodic_stats(s_run, g_run)
    summary = {
        "T": T,
        "limits": dict(zip(names, limits)),
        "fraction_all_within_5pct": float(
            np.mean([all(r[f"{nm}_within_5pct"] for nm in names) for r in records])
        ),
        "fraction_tm_inv_below_0.15": float(np.mean([r["tm_inv_distance_below_0.15"] for r in records])),
        "trajectory": {"t": times, **{nm: traj[i] for i, nm in enumerate(names)}},
    }
    if cfg.n_paths > 1:
        for i, nm in enumerate(names):
            vals = np.array([r[nm] for r in records])
            summary[f"{nm}_mean"] = float(vals.mean())
            summary[f"{nm}_mean_se"] = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return ExperimentResult(
        experiment="ergodic-check",
        config=cfg,
        records=records,
        summary=summary,
        table=table,
        seeds={"seed": cfg.seed, "stream": STREAM_ERGODIC},
        warnings=notes,
        wall_clock_s=time.perf_counter() - start,
    )


# ----------------------------------------------------------------------------
# Moderate-deviation tails


def quadratic_hessian(rate, dim: int) -> np.ndarray:
    """Hessian ``H`` of a quadratic form ``rate(mu) = mu' H mu / 2`` by polarisation."""
    eye = np.eye(dim)
    q = [float(rate(eye[i])) for i in range(dim)]
    h = np.empty((dim, dim))
    for i in range(dim):
        h[i, i] = 2.0 * q[i]
        for j in range(i + 1, dim):
            h[i, j] = h[j, i] = float(rate(eye[i] + eye[j])) - q[i] - q[j]
    return h


def inf_rate_over_complement(rate, r: float, dim: int = 2) -> float:
    """``inf_{|mu| >= r} rate(mu) = r^2 lambda_min(H) / 2`` for a positive-definite quadratic."""
    if r < 0:
        raise ConfigError(f"radius must be >= 0, got {r}")
    if r == 0:
        return 0.0
    lam_min = float(np.linalg.eigvalsh(quadratic_hessian(rate, dim))[0])
    return r * r * lam_min / 2.0


def inf_rate_grid_search(rate, r: float, n_dirs: int = 3600) -> float:
    """Brute-force minimum of a two-dimensional rate over the circle of radius ``r``."""
    ang = np.arange(n_dirs) * (2.0 * math.pi / n_dirs)
    pts = r * np.vstack([np.cos(ang), np.sin(ang)])
    return float(np.min(rate(pts)))


def _cir_rate(ctx):
    return lambda mu: rate_I_ab(ctx, mu[0], mu[1])


def _theta_rate(ctx):
    return lambda mu: rate_I_theta(ctx, mu[0], mu[1], mu[2], mu[3])


def mdp_tilts(p, T: float, lam: float, radii) -> list:
    """Defensive-mixture proposals: ``(a, b) +/- sqrt(lambda/T) r v_min`` per radius.

    ``v_min`` is the direction along which ``I_ab`` is cheapest, so each
    proposal centres ``a_hat, b_hat`` near the most likely exit point of
    the ball of radius ``r``.
    """
    ctx = RateContext(p.a, p.b, p.rho)
    vals, vecs = np.linalg.eigh(quadratic_hessian(_cir_rate(ctx), 2))
    v = vecs[:, 0]
    h = math.sqrt(lam / T)
    out = []
    for r in radii:
        if r <= 0:
            continue
        for sign in (1.0, -1.0):
            out.append(TiltedParams(p.a + sign * h * r * v[0], p.b + sign * h * r * v[1], p.c, p.d))
    return out


def _tail_entry(count, n, lam):
    p_hat = count / n
    se = math.sqrt(p_hat * (1.0 - p_hat) / n)
    if count == 0:
        upper = 1.0 - 0.05 ** (1.0 / n)
        return {
            "count": 0,
            "n": n,
            "p_hat": None,
            "p_se": None,
            "log_rate": None,
            "log_rate_se": None,
            "p_upper_95": upper,
            "log_rate_upper_95": math.log(upper) / lam,
        }
    return {
        "count": int(count),
        "n": n,
        "p_hat": p_hat,
        "p_se": se,
        "log_rate": math.log(p_hat) / lam,
        "log_rate_se": se / (p_hat * lam),
        "p_upper_95": None,
        "log_rate_upper_95": None,
    }


def _importance_estimates(cfg, T, h_index, lam, proposals, radii, workers):
    """Stratified defensive-mixture estimates of ``P(|z_cir| >= r)`` for every radius."""
    p = cfg.params
    k_comp = len(proposals)
    n_each = max(1, cfg.n_paths // k_comp)
    sums = np.zeros((k_comp, len(radii)))
    sq = np.zeros((k_comp, len(radii)))
    wsum = np.zeros(k_comp)
    wsq = np.zeros(k_comp)
    used = np.zeros(k_comp, dtype=int)
    skipped = 0
    for k, q in enumerate(proposals):
        q.check_simulable()
        sim = p.replace(a=q.alpha, b=q.beta)
        [(f, _)] = simulate_batch(
            sim, cfg.dt, [T], n_each, cfg.seed, stream=STREAM_MDP_IS * 1000 + h_index * 100 + k, workers=workers
        )
        ok = _valid_mask(f)
        skipped += int((~ok).sum())
        f = f.take(ok)
        logs = np.array([log_girsanov_weight_ab(f, (o.alpha, o.beta), (p.a, p.b)) for o in proposals])
        log_w = math.log(k_comp) - logsumexp(-logs, axis=0)
        w = np.exp(log_w)
        a_hat, b_hat = estimate_cir(f)
        z = math.sqrt(T / lam) * np.hypot(a_hat - p.a, b_hat - p.b)
        for j, r in enumerate(radii):
            y = w * (z >= r)
            sums[k, j] = y.mean()
            sq[k, j] = y.var(ddof=1) / len(y) if len(y) > 1 else math.nan
        wsum[k] = w.mean()
        wsq[k] = w.var(ddof=1) / len(w) if len(w) > 1 else math.nan
        used[k] = len(w)
    _check_skipped(skipped, n_each * k_comp, "mdp importance sampling")
    out = []
    for j, r in enumerate(radii):
        p_is = float(sums[:, j].mean())
        se = float(math.sqrt(sq[:, j].sum()) / k_comp)
        out.append(
            {
                "p_hat": p_is,
                "p_se": se,
                "log_rate": math.log(p_is) / lam if p_is > 0 else None,
                "log_rate_se": se / (p_is * lam) if p_is > 0 else None,
            }
        )
    diag = {
        "n_components": k_comp,
        "n_per_component": n_each,
        "n_used": int(used.sum()),
        "n_skipped": skipped,
        "weight_mean": float(wsum.mean()),
        "weight_mean_se": float(math.sqrt(wsq.sum()) / k_comp),
        "proposals": [[q.alpha, q.beta] for q in proposals],
    }
    return out, diag


def run_mdp_tail(cfg: ExperimentConfig, importance: str = "auto", workers=None) -> ExperimentResult:
    """Tail probabilities ``P(|sqrt(T / lambda_T)(theta_hat - theta)| >= r)``.

    Naive Monte Carlo is reported for the CIR pair ``(a_hat, b_hat)``
    against ``inf I_ab`` and for all four parameters against
    ``inf I_theta``.  Importance sampling (CIR pair only) draws from tilted
    CIR drifts and reweights with the Girsanov density: ``"auto"`` uses a
    defensive mixture of :func:`mdp_tilts`, ``"tilt"`` the single proposal
    ``cfg.tilt`` (its ``alpha, beta``), ``"none"`` disables it.
    """
    if importance not in ("auto", "tilt", "none"):
        raise ConfigError(f"importance must be auto, tilt or none, got {importance!r}")
    if importance == "tilt" and cfg.tilt is None:
        raise ConfigError("importance='tilt' needs a tilt in the config")
    start = time.perf_counter()
    p = cfg.params
    ctx = RateContext(p.a, p.b, p.rho)
    radii = list(cfg.radii)
    infs = {
        "cir": [inf_rate_over_complement(_cir_rate(ctx), r, 2) for r in radii],
        "full": [inf_rate_over_complement(_theta_rate(ctx), r, 4) for r in radii],
    }
    notes = []
    lam_max = cfg.speed(cfg.horizons[-1])
    for r, inf in zip(radii, infs["cir"]):
        if lam_max * inf > FEASIBLE_LOG_PROB:
            notes.append(
                f"radius {r:g}: lambda_T * inf I = {lam_max * inf:.2f} > {FEASIBLE_LOG_PROB:g}; "
                "naive Monte Carlo will see few exceedances"
            )
    batches = simulate_batch(p, cfg.dt, cfg.horizons, cfg.n_paths, cfg.seed, stream=STREAM_MDP, workers=workers)
    records, table, is_diag = [], [], []
    for h_index, ((f, _), T) in enumerate(zip(batches, cfg.horizons)):
        lam = cfg.speed(T)
        ok = _valid_mask(f)
        n_skipped = int((~ok).sum())
        _check_skipped(n_skipped, cfg.n_paths, f"mdp naive T={T:g}")
        est = estimate_full(f.take(ok)).as_array()
        dev = math.sqrt(T / lam) * (est - p.theta[:, None])
        z = {"cir": np.hypot(dev[0], dev[1]), "full": np.linalg.norm(dev, axis=0)}
        n = dev.shape[1]
        is_est = None
        if importance != "none":
            if importance == "auto":
                proposals = mdp_tilts(p, T, lam, radii)
            else:
                proposals = [cfg.tilt]
            if proposals:
                is_est, diag = _importance_estimates(cfg, T, h_index, lam, proposals, radii, workers)
                is_diag.append({"T": T, **diag})
        for est_name in ("cir", "full"):
            for j, r in enumerate(radii):
                count = int(np.sum(z[est_name] >= r))
                rec = {
                    "estimator": est_name,
                    "T": T,
                    "lambda_T": lam,
                    "radius": r,
                    "n_skipped": n_skipped,
                    "inf_rate": infs[est_name][j],
                    "theory_log_rate": -infs[est_name][j],
                    **_tail_entry(count, n, lam),
                }
                if est_name == "cir" and is_est is not None:
                    e = is_est[j]
                    rec.update({f"is_{k}": v for k, v in e.items()})
                    if rec["p_hat"] is not None and e["p_hat"] > 0:
                        joint = math.hypot(rec["p_se"], e["p_se"])
                        rec["is_naive_z"] = abs(rec["p_hat"] - e["p_hat"]) / joint if joint > 0 else math.inf
                    else:
                        rec["is_naive_z"] = None
                records.append(rec)
                table.append(rec)
    summary = {"per_radius": [], "importance": importance, "importance_diagnostics": is_diag}
    for est_name in ("cir", "full"):
        for j, r in enumerate(radii):
            recs = [x for x in records if x["estimator"] == est_name and x["radius"] == r]
            rates = [x["log_rate"] for x in recs]
            known = all(v is not None for v in rates)
            entry = {
                "estimator": est_name,
                "radius": r,
                "inf_rate": infs[est_name][j],
                "log_rates": rates,
                "decreasing_in_T": bool(known and all(b < a for a, b in zip(rates, rates[1:]))),
                "final_below_0.3_inf": bool(
                    rates[-1] is not None and rates[-1] < -0.3 * infs[est_name][j]
                ),
            }
            if est_name == "cir" and importance != "none":
                zs = [x.get("is_naive_z") for x in recs]
                entry["is_naive_max_z"] = max((v for v in zs if v is not None), default=None)
                entry["is_naive_agree_3se"] = bool(all(v is not None and v <= 3.0 for v in zs))
            summary["per_radius"].append(entry)
    return ExperimentResult(
        experiment="mdp-experiment",
        config=cfg,
        records=records,
        summary=summary,
        table=table,
        seeds={"seed": cfg.seed, "stream": STREAM_MDP, "importance_stream": STREAM_MDP_IS},
        warnings=notes,
        wall_clock_s=time.perf_counter() - start,
    )
