"""Test-problem generators with prox-friendly structure.

Every generator returns a :class:`ProblemSpec` with f, the conjugate-side
function g* (value map registered analytically, prox obtained through the
Moreau identity when the problem is stated via g), the coupling operator,
and, where available, an exact saddle point for oracle-free certificates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import prox as _prox
from .certificates import KKTPoint, kkt_residual, make_kkt
from .hilbert import (ForwardDifferenceOperator, LinearOperator,
                      MatrixOperator, PPoint, as_vector, load_matrix)
from .prox import ProxFn
from .solver import Validity, run, validate_params

__all__ = [
    "ProblemSpec",
    "make_quadratic",
    "make_lasso",
    "make_tv1d",
    "kkt_by_long_run",
    "random_quadratic",
    "random_lasso",
    "default_tv_signal",
    "problem_from_config",
    "GENERATORS",
]


@dataclass(frozen=True)
class ProblemSpec:
    """A saddle-point test problem min_x max_y f(x) + <Lx, y> - g*(y).

    ``g`` is the primal-side function when the problem is naturally stated
    as min f(x) + g(Lx); it may be None when the problem is given directly
    through g*. ``gstar`` always carries both the value map and the prox
    used by the dual update.
    """

    name: str
    f: ProxFn
    gstar: ProxFn
    L: LinearOperator
    g: ProxFn | None = None
    kkt: KKTPoint | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kkt is not None:
            star = self.kkt.star
            if star.x.shape[0] != self.L.cols or star.y.shape[0] != self.L.rows:
                raise ValueError("saddle point dimensions do not match the operator")
            res = kkt_residual(self, star)
            if res > 1e-8:
                raise ValueError(f"stored saddle point has residual {res:.3e} > 1e-8")


def make_quadratic(L: LinearOperator, a, b) -> ProblemSpec:
    """f(x) = 0.5||x - a||^2, g*(y) = 0.5||y - b||^2, with exact saddle point.

    The optimality conditions reduce to the positive-definite linear system
    (I + L^T L) x* = a - L^T b with y* = L x* + b, so the saddle point is
    solved exactly and certificates carry no oracle error.
    """
    a = as_vector(a)
    b = as_vector(b)
    if a.shape[0] != L.cols or b.shape[0] != L.rows:
        raise ValueError("data dimensions do not match the operator")
    mat = L.as_matrix()
    x_star = np.linalg.solve(np.eye(L.cols) + mat.T @ mat, a - mat.T @ b)
    y_star = mat @ x_star + b
    problem = ProblemSpec(
        name="quadratic",
        f=_prox.quadratic_distance(a),
        gstar=_prox.quadratic_distance(b),
        L=L,
        metadata={"generator": "quadratic"},
    )
    kkt = make_kkt(problem, PPoint(x_star, y_star), check_tol=1e-10)
    return ProblemSpec(problem.name, problem.f, problem.gstar, L,
                       kkt=kkt, metadata=problem.metadata)


def make_lasso(A: LinearOperator, b, lam: float) -> ProblemSpec:
    """f = lam*||.||_1, g = 0.5||. - b||^2 composed with A.

    g*(y) = 0.5||y||^2 + <y, b>; its prox follows from g by Moreau. No
    closed-form saddle point; use :func:`kkt_by_long_run`.
    """
    b = as_vector(b)
    if b.shape[0] != A.rows:
        raise ValueError("data dimension does not match the operator")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    g = _prox.quadratic_distance(b)
    gstar = _prox.conjugate(
        g,
        evaluate=lambda y: 0.5 * float(y @ y) + float(y @ b),
        domain_description="R^m",
    )
    return ProblemSpec(
        name="lasso",
        f=_prox.l1(lam),
        g=g,
        gstar=gstar,
        L=A,
        metadata={"generator": "lasso", "lam": lam},
    )


def make_tv1d(signal, lam: float) -> ProblemSpec:
    """1-D total-variation denoising: f = 0.5||. - signal||^2, g = lam*||.||_1,
    L = forward differences.

    g* is the indicator of the box ||y||_inf <= lam; its prox (the box
    projection) again follows from g by Moreau. The operator bound is the
    safe analytic value 2.
    """
    signal = as_vector(signal)
    if signal.shape[0] < 2:
        raise ValueError("signal must have at least 2 samples")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    g = _prox.l1(lam)
    band = lam * (1.0 + 1e-12) + 1e-15  # roundoff guard for box membership

    def gstar_value(y):
        return 0.0 if float(np.max(np.abs(y))) <= band else math.inf

    gstar = _prox.conjugate(g, evaluate=gstar_value,
                            domain_description=f"||y||_inf <= {lam}")
    return ProblemSpec(
        name="tv1d",
        f=_prox.quadratic_distance(signal),
        g=g,
        gstar=gstar,
        L=ForwardDifferenceOperator(signal.shape[0]),
        metadata={"generator": "tv1d", "lam": lam},
    )


def kkt_by_long_run(problem: ProblemSpec, params, iters: int,
                    stop_tol: float = 1e-13, accept_tol: float = 1e-6) -> KKTPoint:
    """Approximate saddle point from a long solver run (oracle construction).

    Run far past the horizon of the experiment the point will serve (at
    least 10x). The returned point carries its measured fixed-point
    residual; a residual above ``accept_tol`` rejects the oracle outright.
    """
    status = validate_params(params)
    if status.kind is not Validity.STRICTLY_VALID:
        raise ValueError(f"long-run oracle needs StrictlyValid parameters, got {status}")
    z0 = PPoint(np.zeros(problem.L.cols), np.zeros(problem.L.rows))
    traj = run(problem, params, z0, max_iters=iters, stop_tol=stop_tol,
               keep_history=False)
    star = traj.final
    res = kkt_residual(problem, star)
    if res > accept_tol:
        raise RuntimeError(
            f"long-run oracle rejected: residual {res:.3e} > {accept_tol:g} "
            f"after {traj.n_iters} iterations"
        )
    return make_kkt(problem, star, check_tol=None, residual=res)


# --- seeded instance builders and the config registry ---------------------

def random_quadratic(rows: int, cols: int, seed: int) -> ProblemSpec:
    """Quadratic family instance with Gaussian operator and data."""
    rng = np.random.default_rng(seed)
    L = MatrixOperator(rng.standard_normal((rows, cols)))
    a = rng.standard_normal(cols)
    b = rng.standard_normal(rows)
    p = make_quadratic(L, a, b)
    p.metadata.update({"seed": seed, "rows": rows, "cols": cols})
    return p


def random_lasso(rows: int, cols: int, lam: float, seed: int) -> ProblemSpec:
    rng = np.random.default_rng(seed)
    A = MatrixOperator(rng.standard_normal((rows, cols)))
    b = rng.standard_normal(rows)
    p = make_lasso(A, b, lam)
    p.metadata.update({"seed": seed, "rows": rows, "cols": cols})
    return p


def default_tv_signal(n: int, seed: int = 0, noise: float = 0.05) -> np.ndarray:
    """Piecewise-constant test signal with seeded Gaussian perturbation."""
    rng = np.random.default_rng(seed)
    levels = np.array([0.0, 2.0, -1.0, 1.0])
    edges = np.linspace(0, n, len(levels) + 1).astype(int)
    signal = np.empty(n)
    for lev, lo, hi in zip(levels, edges[:-1], edges[1:]):
        signal[lo:hi] = lev
    return signal + noise * rng.standard_normal(n)


def _build_quadratic(params: dict) -> ProblemSpec:
    if "matrix" in params:
        L = MatrixOperator(load_matrix(params["matrix"]))
        return make_quadratic(L, params["a"], params["b"])
    return random_quadratic(int(params["rows"]), int(params["cols"]),
                            int(params.get("seed", 0)))


def _build_lasso(params: dict) -> ProblemSpec:
    lam = float(params["lam"])
    if "matrix" in params:
        A = MatrixOperator(load_matrix(params["matrix"]))
        return make_lasso(A, params["b"], lam)
    return random_lasso(int(params["rows"]), int(params["cols"]), lam,
                        int(params.get("seed", 0)))


def _build_tv1d(params: dict) -> ProblemSpec:
    lam = float(params["lam"])
    if "signal" in params:
        p = make_tv1d(params["signal"], lam)
    else:
        sig = default_tv_signal(int(params["n"]), int(params.get("seed", 0)),
                                float(params.get("noise", 0.05)))
        p = make_tv1d(sig, lam)
    p.metadata.update({k: params[k] for k in ("n", "seed") if k in params})
    return p


GENERATORS = {
    "quadratic": _build_quadratic,
    "lasso": _build_lasso,
    "tv1d": _build_tv1d,
}


def problem_from_config(cfg: dict) -> ProblemSpec:
    """Build a problem from {"generator": name, "params": {...}}.

    A problem definition may also live in its own JSON file, referenced as
    {"file": path}.
    """
    if isinstance(cfg, dict) and "file" in cfg and "generator" not in cfg:
        with open(cfg["file"], "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    try:
        name = cfg["generator"]
    except (KeyError, TypeError):
        raise ValueError("problem config needs a 'generator' key") from None
    try:
        builder = GENERATORS[name]
    except KeyError:
        raise ValueError(
            f"unknown generator {name!r}; available: {sorted(GENERATORS)}"
        ) from None
    return builder(cfg.get("params", {}))
