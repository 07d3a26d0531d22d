import time

import numpy as np
import pytest

import cpcert as c

# wall-clock cost of building each session fixture, keyed by fixture name
FIXTURE_SECONDS = {}

# Acceptance grid: quadratic family over 5 seeds/dims plus TV-1D at n=50,
# theta x safety cells, >= 2000 certified iterations per run.
QUAD_DIMS = [(6, 4), (10, 8), (12, 10), (16, 12), (20, 15)]
THETAS = [0.1, 0.25, 0.5, 0.75, 1.0]
SAFETIES = [0.9, 0.99]
RUN_ITERS = 2050


@pytest.fixture(scope="session")
def quad_problems():
    return [c.random_quadratic(r, n, seed=i) for i, (r, n) in enumerate(QUAD_DIMS)]


@pytest.fixture(scope="session")
def tv_problem():
    problem = c.make_tv1d(c.default_tv_signal(50, seed=0), lam=0.5)
    tau, sigma = c.suggest_steps(1.0, problem.L.norm_bound, 0.9, 1.0)
    oracle_params = c.SolverParams(tau, sigma, 1.0, problem.L.norm_bound)
    kkt = c.kkt_by_long_run(problem, oracle_params, 400000, stop_tol=1e-14)
    return problem, kkt


def certified_run(problem, kkt, theta, safety, iters=RUN_ITERS, tol=1e-9):
    tau, sigma = c.suggest_steps(theta, problem.L.norm_bound, safety, 1.0)
    params = c.SolverParams(tau, sigma, theta, problem.L.norm_bound)
    z0 = c.PPoint(np.zeros(problem.L.cols), np.zeros(problem.L.rows))
    traj = c.run(problem, params, z0, max_iters=iters, stop_tol=None)
    table = c.certify_trajectory(traj, kkt, problem, tol=tol)
    return params, traj, table


def grid_cases(quad_problems, tv_problem):
    cases = [(f"quad{i}", p, p.kkt) for i, p in enumerate(quad_problems)]
    cases.append(("tv1d", *tv_problem))
    return cases


@pytest.fixture(scope="session")
def certified_grid(quad_problems, tv_problem):
    """All acceptance runs keyed by (problem label, theta, safety)."""
    t0 = time.perf_counter()
    runs = {}
    for label, problem, kkt in grid_cases(quad_problems, tv_problem):
        for theta in THETAS:
            for safety in SAFETIES:
                params, traj, table = certified_run(problem, kkt, theta, safety)
                runs[(label, theta, safety)] = (problem, kkt, params, traj, table)
    FIXTURE_SECONDS["certified_grid"] = time.perf_counter() - t0
    return runs


@pytest.fixture(scope="session")
def boundary_grid(quad_problems, tv_problem):
    """Boundary runs (safety = 1.0, ErgodicOnly) for every problem and theta."""
    t0 = time.perf_counter()
    runs = {}
    for label, problem, kkt in grid_cases(quad_problems, tv_problem):
        for theta in THETAS:
            params, traj, table = certified_run(problem, kkt, theta, 1.0)
            runs[(label, theta)] = (problem, kkt, params, traj, table)
    FIXTURE_SECONDS["boundary_grid"] = time.perf_counter() - t0
    return runs
