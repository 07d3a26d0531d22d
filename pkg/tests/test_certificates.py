import math

import numpy as np
import pytest

import cpcert as c
from cpcert.certificates import (certify_trajectory, descent_residual,
                                 duality_gap, ergodic_bound_check,
                                 eta_coefficients, eta_from_proof_constants,
                                 kkt_residual, lower_bound_residual, lyapunov,
                                 make_kkt)
from cpcert.solver import SolverParams, suggest_steps


def one_d_problem():
    L = c.MatrixOperator([[1.0]], norm_bound=1.0)
    return c.make_quadratic(L, [1.0], [0.0])


def medium_run(theta=0.5, safety=0.9, iters=400, seed=7, dims=(8, 6)):
    problem = c.random_quadratic(*dims, seed=seed)
    tau, sigma = suggest_steps(theta, problem.L.norm_bound, safety)
    params = SolverParams(tau, sigma, theta, problem.L.norm_bound)
    z0 = c.PPoint(np.zeros(dims[1]), np.zeros(dims[0]))
    traj = c.run(problem, params, z0, max_iters=iters, stop_tol=None)
    return problem, params, traj


def test_kkt_residual_zero_at_saddle():
    problem = c.random_quadratic(6, 4, seed=0)
    assert kkt_residual(problem, problem.kkt.star) <= 1e-10


def test_make_kkt_rejects_non_saddle():
    problem = c.random_quadratic(6, 4, seed=0)
    bogus = c.PPoint(problem.kkt.star.x + 0.05, problem.kkt.star.y)
    with pytest.raises(ValueError):
        make_kkt(problem, bogus, check_tol=1e-8)


def test_duality_gap_zero_at_saddle():
    problem = c.random_quadratic(5, 5, seed=1)
    assert duality_gap(problem.kkt.star, problem.kkt, problem) == pytest.approx(0.0, abs=1e-12)


def test_duality_gap_pinned_value():
    # 1-D quadratic with saddle (0.5, 0.5): evaluating the Lagrangian
    # difference at (0, 0) by hand gives 0.375 - 0.125 = 0.25
    problem = one_d_problem()
    assert duality_gap(c.PPoint([0.0], [0.0]), problem.kkt, problem) == pytest.approx(0.25)


def test_duality_gap_nonnegative_on_random_points():
    problem = c.random_quadratic(7, 5, seed=2)
    rng = np.random.default_rng(3)
    for _ in range(1000):
        z = c.PPoint(rng.standard_normal(5) * 3, rng.standard_normal(7) * 3)
        assert duality_gap(z, problem.kkt, problem) >= -1e-12


def test_duality_gap_infinite_outside_domain():
    tv = c.make_tv1d(np.array([1.0, 0.0, 1.0]), lam=0.5)
    tau, sigma = suggest_steps(1.0, tv.L.norm_bound)
    params = SolverParams(tau, sigma, 1.0, tv.L.norm_bound)
    kkt = c.kkt_by_long_run(tv, params, 50000)
    outside = c.PPoint(np.zeros(3), np.array([5.0, 5.0]))  # |y| > lam
    assert duality_gap(outside, kkt, tv) == math.inf


def test_lyapunov_zero_at_saddle():
    problem = c.random_quadratic(5, 4, seed=4)
    params = SolverParams(*suggest_steps(0.3, problem.L.norm_bound),
                          theta=0.3, operator_norm=problem.L.norm_bound)
    star = problem.kkt.star
    assert lyapunov(star, star, problem.kkt, problem, params) == pytest.approx(0.0, abs=1e-12)


def test_lyapunov_theta_one_drops_gap_and_cross_terms():
    problem, params, traj = medium_run(theta=1.0, iters=30)
    zk, zk1 = traj.point(3), traj.point(4)
    want = (0.5 * c.p_quadratic_form(zk - problem.kkt.star, problem.L, params)
            - 0.25 * c.p_quadratic_form(zk1 - zk, problem.L, params))
    got = lyapunov(zk, zk1, problem.kkt, problem, params)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_lyapunov_dominates_next_distance_along_run():
    problem, params, traj = medium_run(theta=0.25, iters=300)
    for k in range(0, 300, 17):
        zk, zk1 = traj.point(k), traj.point(k + 1) if k + 1 <= 300 else None
        if zk1 is None:
            break
        v = lyapunov(zk, zk1, problem.kkt, problem, params)
        half_next = 0.5 * c.p_quadratic_form(zk1 - problem.kkt.star, problem.L, params)
        assert v >= half_next - 1e-10 * (1 + abs(v))
        assert v >= -1e-10 * (1 + abs(v))


def test_eta_theta_one_closed_form():
    for product in (0.25, 0.81, 1.0):
        tau = sigma = math.sqrt(product)
        params = SolverParams(tau, sigma, 1.0, 1.0)
        ep, em = eta_coefficients(params)
        want = (1.0 - product) / 2.0
        assert ep == pytest.approx(want, abs=1e-12)
        assert em == pytest.approx(want, abs=1e-12)


def test_eta_vanishes_on_boundary_theta_grid():
    thetas = np.append(np.linspace(0.01, 1.0, 101), [0.5, 0.25])
    for theta in thetas:
        tau, sigma = suggest_steps(float(theta), 1.0, safety=1.0)
        params = SolverParams(tau, sigma, float(theta), 1.0)
        ep, em = eta_coefficients(params)
        assert abs(ep) <= 1e-12
        assert abs(em) <= 1e-12


def test_eta_positive_under_strict_condition():
    for theta in (0.1, 0.25, 0.5, 0.75, 1.0):
        for safety in (0.5, 0.9, 0.99):
            tau, sigma = suggest_steps(theta, 2.0, safety=safety)
            ep, em = eta_coefficients(SolverParams(tau, sigma, theta, 2.0))
            assert ep > 0
            assert em > 0


def test_eta_cross_check_against_proof_constants():
    rng = np.random.default_rng(5)
    for _ in range(200):
        theta = float(rng.uniform(1e-3, 1.0))
        # any product below the positivity corner 4/(1+theta)^2 is admissible
        s2 = float(rng.uniform(0.0, 4.0 / (1 + theta) ** 2 * 0.999))
        ratio = float(10.0 ** rng.uniform(-1, 1))
        sigma = math.sqrt(s2 / ratio)
        tau = ratio * sigma
        params = SolverParams(tau, sigma, theta, 1.0)
        a = eta_coefficients(params)
        b = eta_from_proof_constants(params)
        for x, y in zip(a, b):
            assert abs(x - y) <= 1e-12 * (1.0 + abs(x))


def test_eta_rejects_nonpositive_denominator():
    # huge product forces 1 - sqrt(tau sigma)||L|| theta(1-theta) < 0
    params = SolverParams(5.0, 5.0, 0.5, 2.0)
    with pytest.raises(ValueError):
        eta_coefficients(params)


def test_descent_and_lower_bound_zero_at_saddle():
    problem = c.random_quadratic(5, 4, seed=6)
    params = SolverParams(*suggest_steps(0.6, problem.L.norm_bound),
                          theta=0.6, operator_norm=problem.L.norm_bound)
    star = problem.kkt.star
    assert descent_residual(star, star, star, problem.kkt, problem, params) == \
        pytest.approx(0.0, abs=1e-12)
    assert lower_bound_residual(star, star, problem.kkt, problem, params) == \
        pytest.approx(0.0, abs=1e-12)


def test_descent_residual_along_quadratic_run():
    problem, params, traj = medium_run(theta=0.5, iters=2000, dims=(10, 8))
    kkt = problem.kkt
    for k in range(0, 1999, 97):
        zk, zk1, zk2 = traj.point(k), traj.point(k + 1), traj.point(k + 2)
        v = lyapunov(zk, zk1, kkt, problem, params)
        r = descent_residual(zk, zk1, zk2, kkt, problem, params)
        assert r <= 1e-10 * (1.0 + abs(v))


def test_descent_residual_tv_new_regime():
    tv = c.make_tv1d(c.default_tv_signal(30, seed=1), lam=0.4)
    oracle = SolverParams(*suggest_steps(1.0, tv.L.norm_bound, 0.9),
                          theta=1.0, operator_norm=tv.L.norm_bound)
    kkt = c.kkt_by_long_run(tv, oracle, 200000)
    tau, sigma = suggest_steps(0.3, tv.L.norm_bound, 0.9)
    params = SolverParams(tau, sigma, 0.3, tv.L.norm_bound)
    z0 = c.PPoint(np.zeros(30), np.zeros(29))
    traj = c.run(tv, params, z0, max_iters=500, stop_tol=None)
    table = certify_trajectory(traj, kkt, tv)
    assert bool(np.all(table.flags()["descent"]))


def test_lower_bound_on_boundary_params():
    problem = c.random_quadratic(6, 5, seed=8)
    tau, sigma = suggest_steps(0.75, problem.L.norm_bound, safety=1.0)
    params = SolverParams(tau, sigma, 0.75, problem.L.norm_bound)
    z0 = c.PPoint(np.zeros(5), np.zeros(6))
    traj = c.run(problem, params, z0, max_iters=300, stop_tol=None)
    table = certify_trajectory(traj, problem.kkt, problem)
    assert table.status.kind is c.Validity.ERGODIC_ONLY
    assert bool(np.all(table.flags()["lower_bound"]))


def test_table_matches_scalar_functions():
    problem, params, traj = medium_run(theta=0.75, iters=120, seed=9)
    kkt = problem.kkt
    table = certify_trajectory(traj, kkt, problem)
    for k in (0, 1, 17, 60, 118):
        zk, zk1 = traj.point(k), traj.point(k + 1)
        zk2 = traj.point(k + 2)
        assert table.lyapunov[k] == pytest.approx(
            lyapunov(zk, zk1, kkt, problem, params), rel=1e-9, abs=1e-12)
        assert table.gap[k] == pytest.approx(
            duality_gap(zk1, kkt, problem), rel=1e-9, abs=1e-12)
        assert table.descent_residual[k] == pytest.approx(
            descent_residual(zk, zk1, zk2, kkt, problem, params), rel=1e-6, abs=1e-12)
        assert table.lower_bound_residual[k] == pytest.approx(
            lower_bound_residual(zk, zk1, kkt, problem, params), rel=1e-9, abs=1e-12)
        if k >= 1:
            assert table.ergodic_gap[k] == pytest.approx(
                duality_gap(traj.ergodic_point(k), kkt, problem), rel=1e-9, abs=1e-12)


def test_v_monotone_along_valid_runs():
    for theta, safety in ((0.1, 0.9), (0.5, 1.0), (1.0, 0.99)):
        problem, params, traj = medium_run(theta=theta, safety=safety, iters=400)
        table = certify_trajectory(traj, problem.kkt, problem)
        v = table.lyapunov
        assert np.all(v[1:] <= v[:-1] + 1e-10 * (1.0 + np.abs(v[:-1])))


def test_gap_sum_bounded_by_v0():
    problem, params, traj = medium_run(theta=0.25, iters=600, seed=10)
    table = certify_trajectory(traj, problem.kkt, problem)
    assert np.all(np.diff(table.sum_gap) >= -1e-15)
    assert np.all(table.sum_gap <= table.v0 * (1.0 + 1e-9) + 1e-15)


def test_k_term_nonnegative_along_run():
    problem, params, traj = medium_run(theta=0.4, iters=200, seed=11)
    m = params.operator_norm
    for k in range(1, 199, 13):
        dx = traj.X[k + 1] - traj.X[k]
        kdx = problem.L.apply(dx) / m
        lhs = float(dx @ dx) - float(kdx @ kdx)
        assert lhs >= -1e-12 * float(dx @ dx)


def test_ergodic_bound_check_chain():
    problem, params, traj = medium_run(theta=0.75, iters=5000, seed=12)
    report = ergodic_bound_check(traj, problem.kkt, problem)
    assert report.all_pass
    assert report.ks[0] == 1
    # Jensen at k = 1 holds with equality: the average IS the first iterate
    gap1 = duality_gap(traj.ergodic_point(1), problem.kkt, problem)
    assert gap1 == pytest.approx(report.sum_gap[0], rel=1e-12, abs=1e-15)
    # partial sums are nondecreasing and bounded by V(0)
    assert np.all(np.diff(report.sum_gap) >= -1e-15)
    assert report.sum_gap[-1] <= report.v0 * (1.0 + 1e-9)


def test_observational_mode_for_invalid_params():
    problem = one_d_problem()
    bad = SolverParams(1.1, 1.1, 1.0, 1.0)  # product 1.21 > 1
    z0 = c.PPoint([0.0], [0.0])
    traj = c.run(problem, bad, z0, max_iters=200, override_invalid=True, stop_tol=None)
    table = certify_trajectory(traj, problem.kkt, problem)
    assert not table.asserted
    summary = table.summarize()
    assert summary["mode"] == "observational"
    assert summary["all_pass"] is None
    row = table.rows()[5]
    assert row.pass_descent is None
    assert row.pass_jensen is None


def test_certify_requires_full_history():
    problem, params, _ = medium_run(iters=10)
    z0 = c.PPoint(np.zeros(problem.L.cols), np.zeros(problem.L.rows))
    slim = c.run(problem, params, z0, max_iters=10, stop_tol=None, keep_history=False)
    with pytest.raises(ValueError):
        certify_trajectory(slim, problem.kkt, problem)


def test_certificate_report_rows_carry_values():
    problem, params, traj = medium_run(iters=50, seed=13)
    table = certify_trajectory(traj, problem.kkt, problem)
    rows = table.rows()
    assert len(rows) == 49
    assert rows[0].k == 0
    assert math.isnan(rows[0].ergodic_gap)
    assert rows[10].pass_descent is True
    assert rows[10].eta_plus == table.eta_plus
