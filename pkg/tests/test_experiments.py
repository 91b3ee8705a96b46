import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from heston_mdp import experiments as ex
from heston_mdp.config import ExperimentConfig
from heston_mdp.deviations import RateContext, TiltedParams, rate_I_ab, rate_I_theta
from heston_mdp.errors import ConfigError, ExperimentError
from heston_mdp.models import HestonParams
from heston_mdp.plotting import plot_result

P = HestonParams(a=4.0, b=-2.0, c=1.0, d=-1.0, rho=0.5)
CTX = RateContext(4.0, -2.0)


def _cfg(**kw):
    base = dict(params=P, horizons=(5.0,), n_paths=200, n_steps_per_unit_time=20, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_jsonable():
    out = ex._jsonable({"a": np.array([1.0, np.inf]), "b": np.float64(np.nan), "c": np.bool_(True), 1: (2,)})
    assert out == {"a": [1.0, "inf"], "b": "nan", "c": True, "1": [2]}
    json.dumps(out, allow_nan=False)


def test_inf_rate_example_and_grid_search():
    rate = lambda mu: rate_I_ab(CTX, mu[0], mu[1])  # noqa: E731
    np.testing.assert_allclose(ex.quadratic_hessian(rate, 2), np.array([[1.0, 1.0], [1.0, 2.0]]) / 4.0)
    # Hessian Sigma / 4 has smallest eigenvalue (3 - sqrt 5) / 8, so inf = r^2 (3 - sqrt 5) / 16.
    assert ex.inf_rate_over_complement(rate, 1.0) == pytest.approx((3.0 - math.sqrt(5.0)) / 16.0, rel=1e-12)
    for r in (0.5, 1.0, 3.0):
        assert abs(ex.inf_rate_over_complement(rate, r) - ex.inf_rate_grid_search(rate, r)) < 1e-6
    assert ex.inf_rate_over_complement(rate, 0.0) == 0.0
    with pytest.raises(ConfigError):
        ex.inf_rate_over_complement(rate, -1.0)


def test_inf_rate_four_dimensional():
    ctx = RateContext(4.0, -2.0, 0.5)
    rate = lambda mu: rate_I_theta(ctx, *mu)  # noqa: E731
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((4, 20_000))
    dirs /= np.linalg.norm(dirs, axis=0)
    vals = rate(2.0 * dirs)
    exact = ex.inf_rate_over_complement(rate, 2.0, dim=4)
    assert exact <= vals.min()
    res = minimize(lambda v: rate(2.0 * v / np.linalg.norm(v)), dirs[:, np.argmin(vals)], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20_000})
    assert res.fun == pytest.approx(exact, rel=1e-6)


def test_tail_entry_zero_count():
    e = ex._tail_entry(0, 1000, 2.0)
    assert e["p_hat"] is None
    assert e["p_upper_95"] == pytest.approx(1.0 - 0.05 ** (1.0 / 1000))
    assert e["log_rate_upper_95"] == pytest.approx(math.log(e["p_upper_95"]) / 2.0)
    full = ex._tail_entry(1000, 1000, 2.0)
    assert full["log_rate"] == 0.0 and full["p_se"] == 0.0


def test_clt_check_small(tmp_path):
    res = ex.run_clt_check(_cfg(horizons=(20.0,), n_paths=300), workers=1)
    rec = res.records[0]
    assert rec["covariance"].shape == (4, 4)
    np.testing.assert_allclose(rec["target_gamma_inv"], ex.covariance_set(4.0, -2.0, 0.5).clt_covariance)
    assert set(res.summary) == {"gamma_inv", "sandwich"}
    paths = res.write(tmp_path)
    doc = json.loads(paths["json"].read_text())
    assert doc["schema_version"] == ex.SCHEMA_VERSION
    assert doc["records"][0]["config_hash"] == res.config_hash
    assert "output_path" not in doc["config"]
    assert paths["csv"].read_text().startswith("config_hash,")
    assert plot_result(res, tmp_path).exists()


def test_clt_needs_two_paths():
    with pytest.raises(ExperimentError):
        ex.run_clt_check(_cfg(n_paths=1), workers=1)


def test_clt_rho_zero_target_block_diagonal():
    res = ex.run_clt_check(_cfg(params=P.replace(rho=0.0), n_paths=50), workers=1)
    tgt = res.records[0]["target_gamma_inv"]
    np.testing.assert_allclose(tgt[:2, :2], [[8.0, -4.0], [-4.0, 4.0]])
    np.testing.assert_allclose(tgt[:2, 2:], 0.0)


def test_results_are_deterministic(tmp_path):
    cfg = _cfg(horizons=(5.0,), n_paths=50)
    a = ex.run_clt_check(cfg, workers=1).write(tmp_path / "a")
    b = ex.run_clt_check(cfg.replace(output_path="other"), workers=1).write(tmp_path / "b")
    assert a["json"].read_bytes() == b["json"].read_bytes()
    assert a["csv"].read_bytes() == b["csv"].read_bytes()


def test_cgf_zero_u_and_limits(tmp_path):
    cfg = _cfg(params=P.replace(rho=0.0), horizons=(2.0, 4.0), n_paths=500)
    res = ex.run_cgf_convergence(cfg, [(0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0)], workers=1)
    zero = [r for r in res.records if r["u_index"] == 0]
    assert all(r["estimate"] == 0.0 and r["limit"] == 0.0 for r in zero)
    one = [r for r in res.records if r["u_index"] == 1]
    assert all(r["limit"] == pytest.approx(0.5) for r in one)
    assert all(r["se"] > 0 for r in one)
    assert len(res.summary["per_u"]) == 2
    assert plot_result(res, tmp_path).exists()


def test_cgf_finite_horizon_closed_form():
    # For u = (1, 0, 0, 0) and s = sqrt(lambda_T / T), the exact CGF of the CIR
    # martingale gives L_T = (1 + s - sqrt(1 + 2 s)) / s^2 in the stationary start.
    cfg = _cfg(params=HestonParams(a=4.0, b=-2.0, x0=2.0), horizons=(25.0,), n_paths=20_000,
               n_steps_per_unit_time=20)
    res = ex.run_cgf_convergence(cfg, [(1.0, 0.0, 0.0, 0.0)], workers=1)
    rec = res.records[0]
    s = math.sqrt(rec["lambda_T"] / 25.0)
    closed = (1.0 + s - math.sqrt(1.0 + 2.0 * s)) / s**2
    assert abs(rec["estimate"] - closed) < 0.02 + 3.0 * rec["se"]


def test_cgf_rejects_large_u():
    with pytest.raises(ConfigError):
        ex.run_cgf_convergence(_cfg(), [(2.0, 0.0, 0.0, 0.0)])
    with pytest.raises(ConfigError):
        ex.run_cgf_convergence(_cfg(), [(1.0, 0.0, 0.0)])


def test_cgf_low_ess_warns():
    cfg = _cfg(horizons=(1.0,), n_paths=5, n_steps_per_unit_time=10)
    with pytest.warns(RuntimeWarning, match="effective sample size"):
        res = ex.run_cgf_convergence(cfg, [(1.0, 0.0, 0.0, 0.0)], workers=1)
    assert res.warnings


def test_ergodic_check_small(tmp_path):
    cfg = _cfg(horizons=(40.0,), n_paths=4, n_steps_per_unit_time=50)
    res = ex.run_ergodic_check(cfg, workers=1)
    assert len(res.records) == 4
    rec = res.records[0]
    assert rec["S_T_limit"] == 2.0 and rec["Sigma_T/V_T_limit"] == 1.0
    assert rec["V_T_limit"] == pytest.approx(1.0)
    assert rec["S_T_se"] > 0
    assert len(res.summary["trajectory"]["t"]) == 100
    assert plot_result(res, tmp_path).exists()


def test_ergodic_short_horizon_reports_only():
    res = ex.run_ergodic_check(_cfg(horizons=(1.0,), n_paths=1, n_steps_per_unit_time=100), workers=1)
    assert "S_T" in res.records[0]


def test_mdp_tilts_directions():
    tilts = ex.mdp_tilts(P, 100.0, 10.0, [0.0, 2.0])
    assert len(tilts) == 2
    (t1, t2) = tilts
    assert t1.alpha - P.a == pytest.approx(-(t2.alpha - P.a))
    shift = math.hypot(t1.alpha - P.a, t1.beta - P.b)
    assert shift == pytest.approx(math.sqrt(10.0 / 100.0) * 2.0)


def test_mdp_tail_small(tmp_path):
    cfg = _cfg(params=P.replace(rho=0.0), horizons=(5.0, 10.0), n_paths=400, radii=(0.0, 1.0),
               lambda_exponent=0.4)
    res = ex.run_mdp_tail(cfg, importance="auto", workers=1)
    zero = [r for r in res.records if r["radius"] == 0.0]
    assert all(r["p_hat"] == 1.0 and r["log_rate"] == 0.0 for r in zero)
    cir = [r for r in res.records if r["estimator"] == "cir" and r["radius"] == 1.0]
    assert all("is_p_hat" in r for r in cir)
    assert all(r["inf_rate"] == pytest.approx((3 - math.sqrt(5)) / 16) for r in cir)
    diag = res.summary["importance_diagnostics"]
    assert len(diag) == 2 and diag[0]["n_components"] == 2
    assert plot_result(res, tmp_path).exists()


def test_mdp_tail_modes():
    cfg = _cfg(horizons=(5.0,), n_paths=100, radii=(1.0,))
    res = ex.run_mdp_tail(cfg, importance="none", workers=1)
    assert all("is_p_hat" not in r for r in res.records)
    with pytest.raises(ConfigError):
        ex.run_mdp_tail(cfg, importance="tilt")
    with pytest.raises(ConfigError):
        ex.run_mdp_tail(cfg, importance="bogus")
    tilted = cfg.replace(tilt=TiltedParams(4.3, -2.2))
    res = ex.run_mdp_tail(tilted, importance="tilt", workers=1)
    assert res.summary["importance_diagnostics"][0]["proposals"] == [[4.3, -2.2]]


def test_mdp_feasibility_warning():
    cfg = _cfg(horizons=(100.0,), n_paths=20, radii=(20.0,), n_steps_per_unit_time=2)
    res = ex.run_mdp_tail(cfg, importance="none", workers=1)
    assert any("few exceedances" in w for w in res.warnings)
