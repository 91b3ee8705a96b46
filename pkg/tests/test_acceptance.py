"""The ten acceptance criteria at their stated tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line (repeated in the
terminal summary) and fails if the criterion, including its runtime bound,
is not met.  Seeds are fixed.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from heston_mdp import experiments as ex
from heston_mdp.config import ExperimentConfig
from heston_mdp.deviations import (
    RateContext,
    appc_coercivity_box,
    appc_g,
    appc_minimizer,
    appc_rate_I,
    appc_rate_J,
    appc_xy_star,
    legendre_transform,
    limit_cgf_cir,
    limit_cgf_heston,
    log_girsanov_weight_ab,
    log_girsanov_weight_cd,
    rate_I_ab,
    rate_I_calM,
    rate_I_M,
    rate_I_theta,
)
from heston_mdp.engine import simulate_batch
from heston_mdp.functionals import compute_functionals, ito_sums
from heston_mdp.mle import covariance_set, estimate_full, estimate_via_martingales
from heston_mdp.models import (
    HestonParams,
    SimGrid,
    cir_mean,
    cir_noncentrality,
    cir_scale,
    cir_transition_sample,
    cir_variance,
    coarsen_noise,
    simulate_euler_path,
)

pytestmark = pytest.mark.slow

SEED = 1
P_FULL = HestonParams(a=4.0, b=-2.0, c=1.0, d=-1.0, rho=0.5)


def _report(n, ok, detail, elapsed, limit):
    fast = elapsed < limit
    verdict = "PASS" if ok and fast else "FAIL"
    line = f"criterion {n}: {verdict}  {detail}  [runtime {elapsed:.1f}s, limit {limit:g}s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok and fast, line


def test_criterion_01_rate_identities():
    start = time.perf_counter()
    ctx = RateContext(4.0, -2.0, 0.5)
    cs = ctx.covariances
    mu = np.random.default_rng(SEED).uniform(-3.0, 3.0, (4, 1000))
    half_sigma = 0.5 * ctx.sigma @ mu[:2]
    half_s = 0.5 * cs.S_block @ mu
    errs = {
        "I_ab=I_M(Sigma/2)": rate_I_ab(ctx, *mu[:2]) - rate_I_M(ctx, *half_sigma),
        "I_theta=I_calM(S/2)": rate_I_theta(ctx, *mu) - rate_I_calM(ctx, *half_s),
        "I_M=quad(Sigma^-1)": rate_I_M(ctx, *mu[:2]) - 0.5 * np.einsum("in,ij,jn->n", mu[:2], cs.Sigma_inv, mu[:2]),
        "I_calM=quad(Gamma^-1)": rate_I_calM(ctx, *mu) - 0.5 * np.einsum("in,ij,jn->n", mu, cs.Gamma_inv, mu),
    }
    worst = {k: float(np.max(np.abs(v))) for k, v in errs.items()}
    elapsed = time.perf_counter() - start
    ok = all(v < 1e-10 for v in worst.values())
    _report(1, ok, "max abs errors " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()), elapsed, 1.0)


def test_criterion_02_legendre_duality():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    ctx = RateContext(4.0, -2.0, 0.5)
    err_cir = err_heston = 0.0
    for _ in range(100):
        m2 = rng.uniform(-1.0, 1.0, 2)
        got = legendre_transform(lambda v: limit_cgf_cir(ctx, v), m2)
        err_cir = max(err_cir, abs(got - rate_I_M(ctx, *m2)))
        m4 = rng.uniform(-1.0, 1.0, 4)
        got = legendre_transform(lambda v: limit_cgf_heston(ctx, v), m4, grid_points=11)
        err_heston = max(err_heston, abs(got - rate_I_calM(ctx, *m4)))
    elapsed = time.perf_counter() - start
    ok = err_cir < 1e-6 and err_heston < 1e-6
    _report(2, ok, f"max |Legendre - closed form|: cir {err_cir:.1e}, heston {err_heston:.1e}", elapsed, 10.0)


def test_criterion_03_auxiliary_rates():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    ctx = RateContext(4.0, -2.0)
    j_min = abs(appc_rate_J(ctx, *appc_minimizer(ctx)))
    z = rng.uniform(0.05, 20.0, 1000)
    t = rng.uniform(0.05, 20.0, 1000)
    x, y = appc_xy_star(z, t)
    comp = float(np.max(np.abs(appc_rate_J(ctx, z, t) - appc_rate_I(ctx, x, y))))
    gz, gt = appc_g(x, y)
    trip = float(max(np.max(np.abs(gz - z)), np.max(np.abs(gt - t))))
    coerc = {}
    for a, b in ((4.0, -2.0), (3.0, -1.0), (6.0, -0.5)):
        c = RateContext(a, b)
        eps, A, xi, B = appc_coercivity_box(c)
        pts_z, pts_t = [], []
        while sum(len(p) for p in pts_z) < 100_000:
            zz = np.exp(rng.uniform(math.log(eps) - 4.0, math.log(A) + 4.0, 200_000))
            tt = np.exp(rng.uniform(math.log(xi) - 4.0, math.log(B) + 4.0, 200_000))
            out = (zz < eps) | (zz > A) | (tt < xi) | (tt > B)
            pts_z.append(zz[out])
            pts_t.append(tt[out])
        zz = np.concatenate(pts_z)[:100_000]
        tt = np.concatenate(pts_t)[:100_000]
        coerc[(a, b)] = float(np.min(appc_rate_J(c, zz, tt)))
    elapsed = time.perf_counter() - start
    ok = j_min < 1e-12 and comp < 1e-10 and trip < 1e-12 and all(v >= 1.0 - 1e-9 for v in coerc.values())
    detail = (
        f"J(min)={j_min:.1e}, |J-I(x*,y*)|={comp:.1e}, |g(x*,y*)-(z,t)|={trip:.1e}, "
        f"min J outside box " + ", ".join(f"{k}: {v:.3f}" for k, v in coerc.items())
    )
    _report(3, ok, detail, elapsed, 10.0)


def test_criterion_04_cir_sampler():
    start = time.perf_counter()
    p = HestonParams(a=4.0, b=-2.0, x0=1.0)
    n = 1_000_000
    draws = cir_transition_sample(p, np.ones(n), 1.0, np.random.default_rng(SEED))
    mean, var = cir_mean(p, 1.0, 1.0), cir_variance(p, 1.0, 1.0)
    # Cumulants of the noncentral chi-square: k_r = 2^{r-1} (r-1)! (df + r lambda).
    lam, s = cir_noncentrality(p.b, 1.0, 1.0), cir_scale(p.b, 1.0)
    k2, k4 = 2.0 * (p.a + 2 * lam) * s**2, 48.0 * (p.a + 4 * lam) * s**4
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt((k4 + 2.0 * k2**2) / n)
    z_mean = (draws.mean() - mean) / se_mean
    z_var = (draws.var(ddof=1) - var) / se_var
    elapsed = time.perf_counter() - start
    ok = abs(z_mean) < 3.0 and abs(z_var) < 3.0 and abs(mean - (2.0 - math.exp(-2.0))) < 1e-15
    detail = f"mean {draws.mean():.5f} vs {mean:.5f} (z={z_mean:+.2f}), var {draws.var(ddof=1):.5f} vs {var:.5f} (z={z_var:+.2f})"
    _report(4, ok, detail, elapsed, 30.0)


def _oracle_gap(path, p):
    f = compute_functionals(path)
    obs = estimate_full(f).as_array()
    orc = estimate_via_martingales(p.theta, f, ito_sums(path, p.rho)).as_array()
    return np.abs(obs - orc) / np.abs(orc)


def test_criterion_05_mle_oracle_equivalence():
    start = time.perf_counter()
    p = P_FULL
    coarse_gaps, fine_gaps = [], []
    for k in range(50):
        fine = simulate_euler_path(p, SimGrid(10.0, 20_000), seed=SEED, stream=(5, k))
        coarse = simulate_euler_path(p, SimGrid(10.0, 10_000), noise=coarsen_noise(fine.noise, 2))
        coarse_gaps.append(_oracle_gap(coarse, p))
        fine_gaps.append(_oracle_gap(fine, p))
    coarse_gaps, fine_gaps = np.array(coarse_gaps), np.array(fine_gaps)
    within = int(np.sum(np.all(coarse_gaps < 1e-2, axis=1)))
    smaller = int(np.sum(fine_gaps.max(axis=1) < coarse_gaps.max(axis=1)))
    elapsed = time.perf_counter() - start
    ok = within == 50 and smaller >= 45
    med = np.median(coarse_gaps, axis=0)
    detail = (
        f"paths within 1e-2 on all coordinates: {within}/50; finer grid smaller: {smaller}/50; "
        f"median rel gap (a,b,c,d) at 1e-3: {', '.join(f'{v:.1e}' for v in med)}"
    )
    _report(5, ok, detail, elapsed, 120.0)


def test_criterion_06_clt():
    start = time.perf_counter()
    cfg = ExperimentConfig(params=P_FULL, horizons=(200.0,), n_paths=2000, n_steps_per_unit_time=100, seed=SEED)
    res = ex.run_clt_check(cfg)
    elapsed = time.perf_counter() - start
    g, s = res.summary["gamma_inv"], res.summary["sandwich"]
    ok = g["max_abs_diag_relative_error"] < 0.15 and g["max_offdiag_correlation_error"] < 0.25
    diag = np.diag(res.records[0]["relative_error_gamma_inv"])
    detail = (
        f"vs 4 Gamma^-1: diag rel err {np.round(diag, 3).tolist()}, max corr err {g['max_offdiag_correlation_error']:.3f}; "
        f"diagnostic vs 4 R(x)Sigma^-1: max diag {s['max_abs_diag_relative_error']:.3f}, "
        f"max corr {s['max_offdiag_correlation_error']:.3f}"
    )
    _report(6, ok, detail, elapsed, 900.0)


def test_criterion_07_cgf_limit():
    start = time.perf_counter()
    cfg = ExperimentConfig(
        params=HestonParams(a=4.0, b=-2.0, c=1.0, d=-1.0, rho=0.0),
        horizons=(25.0, 50.0, 100.0),
        lambda_exponent=0.5,
        n_paths=100_000,
        seed=SEED,
    )
    res = ex.run_cgf_convergence(cfg, [(1.0, 0.0, 0.0, 0.0), (0.0, 0.5, 0.0, 0.5)])
    elapsed = time.perf_counter() - start
    ok = all(e["final_abs_error"] < 0.05 and e["final_below_first"] for e in res.summary["per_u"])
    parts = []
    for e in res.summary["per_u"]:
        recs = [r for r in res.records if np.array_equal(r["u"], e["u"])]
        est = ", ".join(f"{r['estimate']:.4f}+-{r['se']:.4f}" for r in recs)
        parts.append(f"u={np.asarray(e['u']).tolist()}: L_T {est} vs {recs[0]['limit']:.3f}, |err| at T=100 {e['final_abs_error']:.3f}")
    _report(7, ok, "; ".join(parts), elapsed, 1200.0)


def test_criterion_08_girsanov_normalisation():
    start = time.perf_counter()
    target = P_FULL
    sim = target.replace(a=4.5, b=-2.5, c=target.c + 0.3, d=target.d - 0.3)
    [(f, ito)] = simulate_batch(sim, 1e-3, [5.0], 10_000, SEED, stream=8, track_ito=True)
    ctx = RateContext(target.a, target.b, target.rho)
    w_ab = np.exp(log_girsanov_weight_ab(f, (sim.a, sim.b), (target.a, target.b)))
    w_cd = np.exp(log_girsanov_weight_cd(ito, f, (sim.c, sim.d), (target.c, target.d), ctx))
    z = {}
    for name, w in (("cir-tilt", w_ab), ("full-tilt", w_cd)):
        se = w.std(ddof=1) / math.sqrt(len(w))
        z[name] = (float(w.mean()), float(se), float((w.mean() - 1.0) / se))
    elapsed = time.perf_counter() - start
    ok = all(abs(v[2]) < 3.0 for v in z.values())
    detail = ", ".join(f"{k}: E[w] = {m:.4f} +- {s:.4f} (z={zz:+.2f})" for k, (m, s, zz) in z.items())
    _report(8, ok, detail, elapsed, 300.0)


def test_criterion_09_ergodic_single_path():
    start = time.perf_counter()
    cfg = ExperimentConfig(params=HestonParams(a=4.0, b=-2.0), horizons=(500.0,), n_paths=1,
                           n_steps_per_unit_time=100, seed=9)
    rec = ex.run_ergodic_check(cfg, workers=1).records[0]
    elapsed = time.perf_counter() - start
    names = ("S_T", "Sigma_T", "Sigma_T/V_T", "S_T/V_T")
    ok = all(rec[f"{n}_within_5pct"] for n in names) and rec["tm_inv_distance"] < 0.15
    detail = ", ".join(f"{n}={rec[n]:.3f}" for n in names) + f", |T<M>^-1 - Sigma^-1|={rec['tm_inv_distance']:.3f}"
    # Pass rate of the same check over independent paths, for context only.
    many = ex.run_ergodic_check(cfg.replace(n_paths=400, seed=10))
    both = np.mean([all(r[f"{n}_within_5pct"] for n in names) and r["tm_inv_distance_below_0.15"] for r in many.records])
    detail += f"; diagnostic: {both:.0%} of 400 independent paths meet both conditions"
    _report(9, ok, detail, elapsed, 60.0)


def test_criterion_10_mdp_trend():
    start = time.perf_counter()
    cfg = ExperimentConfig(
        params=HestonParams(a=4.0, b=-2.0, c=1.0, d=-1.0, rho=0.0),
        horizons=(25.0, 50.0, 100.0),
        lambda_exponent=0.4,
        n_paths=100_000,
        seed=SEED,
        radii=(3.0, 4.0),
    )
    res = ex.run_mdp_tail(cfg, importance="auto")
    elapsed = time.perf_counter() - start
    lam = cfg.speed(100.0)
    ok, parts = True, []
    for e in res.summary["per_radius"]:
        if e["estimator"] != "cir":
            continue
        feasible = lam * e["inf_rate"] <= 6.0
        good = feasible and e["decreasing_in_T"] and e["final_below_0.3_inf"] and e["is_naive_agree_3se"]
        ok &= good
        rates = ", ".join("n/a" if v is None else f"{v:.3f}" for v in e["log_rates"])
        parts.append(
            f"r={e['radius']:g}: log p/lambda [{rates}] vs -inf I {-e['inf_rate']:.3f} "
            f"(lambda*inf {lam * e['inf_rate']:.2f}), decreasing {e['decreasing_in_T']}, "
            f"below -0.3 inf {e['final_below_0.3_inf']}, IS/naive max z {e['is_naive_max_z']:.2f}"
        )
    _report(10, ok, "; ".join(parts), elapsed, 2700.0)
