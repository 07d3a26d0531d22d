"""Primal-dual (Chambolle-Pock) iteration with step-size validation.

The iteration for the saddle-point problem min_x max_y f(x) + <Lx, y> - g*(y):

    x_{k+1} = prox_{tau f}(x_k - tau L* y_k)
    y_{k+1} = prox_{sigma g*}(y_k + sigma L(x_{k+1} + theta (x_{k+1} - x_k)))

with relaxation 0 < theta <= 1. The admissible step-size region is

    sigma * tau * ||L||^2 <= 4 theta (2 - theta) / (1 - 2 theta + 9 theta^2 - 4 theta^3),

non-strict for the ergodic duality-gap rate, strict for iterate convergence.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import PPoint, as_vector

__all__ = [
    "Validity",
    "SolverParams",
    "ParamStatus",
    "Trajectory",
    "bound_rhs",
    "denominator_identity_residual",
    "validate_params",
    "suggest_steps",
    "step",
    "run",
    "EQUALITY_RTOL",
]

# Relative tolerance for classifying the boundary case product == bound.
EQUALITY_RTOL = 1e-12


class Validity(enum.Enum):
    STRICTLY_VALID = "StrictlyValid"
    ERGODIC_ONLY = "ErgodicOnly"
    INVALID = "Invalid"


@dataclass(frozen=True)
class SolverParams:
    """Step sizes (tau, sigma), relaxation theta, and the certified ||L|| bound."""

    tau: float
    sigma: float
    theta: float
    operator_norm: float

    def __post_init__(self):
        for name in ("tau", "sigma", "theta", "operator_norm"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.tau <= 0 or self.sigma <= 0:
            raise ValueError("tau and sigma must be strictly positive")
        if self.operator_norm < 0:
            raise ValueError("operator_norm must be nonnegative")

    @property
    def product(self) -> float:
        """sigma * tau * ||L||^2, the quantity the step-size condition bounds."""
        return self.sigma * self.tau * self.operator_norm ** 2


@dataclass(frozen=True)
class ParamStatus:
    """Classification of solver parameters against the step-size condition.

    ``p_positivity_product`` is sigma*tau*||L||^2*(1+theta)^2; the weighted
    quadratic form is positive semidefinite iff it is <= 4, which the
    step-size condition implies.
    """

    kind: Validity
    bound_rhs: float
    product: float
    margin: float
    p_positivity_product: float
    p_positivity_ok: bool

    def __str__(self):
        return (
            f"{self.kind.value}(product={self.product:.6g}, "
            f"bound={self.bound_rhs:.6g}, margin={self.margin:.6g})"
        )


def bound_rhs(theta: float) -> float:
    """Right-hand side 4 theta (2-theta) / (1 - 2 theta + 9 theta^2 - 4 theta^3).

    Defined for 0 < theta <= 1; the denominator is positive there since it
    equals (1-theta)^2 + 4 theta^2 (2-theta). At theta = 1 the value is 1,
    recovering the classical condition sigma*tau*||L||^2 < 1.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    return 4.0 * theta * (2.0 - theta) / (1.0 - 2.0 * theta + 9.0 * theta ** 2 - 4.0 * theta ** 3)


def denominator_identity_residual(theta: float) -> float:
    """|(1 - 2t + 9t^2 - 4t^3) - ((1-t)^2 + 4t^2(2-t))| at t = theta."""
    lhs = 1.0 - 2.0 * theta + 9.0 * theta ** 2 - 4.0 * theta ** 3
    rhs = (1.0 - theta) ** 2 + 4.0 * theta ** 2 * (2.0 - theta)
    return abs(lhs - rhs)


def validate_params(p: SolverParams) -> ParamStatus:
    """Classify (tau, sigma, theta, ||L||) against the step-size condition.

    StrictlyValid: 0 < theta <= 1 and product strictly below the bound.
    ErgodicOnly: product equals the bound within EQUALITY_RTOL relative.
    Invalid: anything else. Invalid is a value, not an error.
    """
    product = p.product
    corner = product * (1.0 + p.theta) ** 2
    if not 0.0 < p.theta <= 1.0:
        return ParamStatus(Validity.INVALID, math.nan, product, math.nan,
                           corner, False)
    rhs = bound_rhs(p.theta)
    margin = rhs - product
    corner_ok = corner <= 4.0 * (1.0 + EQUALITY_RTOL)
    if abs(product - rhs) <= EQUALITY_RTOL * rhs:
        kind = Validity.ERGODIC_ONLY
    elif product < rhs:
        kind = Validity.STRICTLY_VALID
    else:
        kind = Validity.INVALID
    return ParamStatus(kind, rhs, product, margin, corner, corner_ok)


def suggest_steps(theta: float, operator_norm: float, safety: float = 0.99,
                  ratio: float = 1.0) -> tuple[float, float]:
    """Pick (tau, sigma) with sigma*tau*||L||^2 = safety * bound and tau/sigma = ratio.

    ``safety`` in (0, 1) yields StrictlyValid parameters; safety = 1.0 places
    the product exactly on the boundary (ErgodicOnly), which is useful for
    boundary experiments.
    """
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must lie in (0, 1], got {safety}")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    if operator_norm <= 0:
        raise ValueError("operator_norm must be positive")
    target = safety * bound_rhs(theta) / operator_norm ** 2
    sigma = math.sqrt(target / ratio)
    tau = ratio * sigma
    return tau, sigma


def step(z: PPoint, problem, params: SolverParams) -> PPoint:
    """One primal-dual update from z = (x_k, y_k) to (x_{k+1}, y_{k+1}).

    ``problem`` provides ``f.prox``, ``gstar.prox`` and the operator ``L``.
    """
    tau, sigma, theta = params.tau, params.sigma, params.theta
    L = problem.L
    x_new = problem.f.prox(z.x - tau * L.apply_adjoint(z.y), tau)
    x_bar = x_new + theta * (x_new - z.x)
    y_new = problem.gstar.prox(z.y + sigma * L.apply(x_bar), sigma)
    return PPoint(x_new, y_new)


@dataclass(frozen=True)
class Trajectory:
    """Iterate log of one solver run.

    ``X`` and ``Y`` stack the stored iterates row-wise; row i holds iterate
    ``start_index + i`` (start_index is 0 with full history, K-2 in
    low-memory mode where only the final three-iterate window is kept).
    ``ergodic_X``/``ergodic_Y`` stack the running averages over iterates
    1..k; with full history row k-1 is the average through iterate k, in
    low-memory mode only the final average is kept.
    """

    params: SolverParams
    X: np.ndarray
    Y: np.ndarray
    ergodic_X: np.ndarray
    ergodic_Y: np.ndarray
    n_iters: int
    stopped_at: int | None
    full_history: bool
    start_index: int = 0

    def __post_init__(self):
        for arr in (self.X, self.Y, self.ergodic_X, self.ergodic_Y):
            arr.flags.writeable = False

    @property
    def iterates(self) -> list[PPoint]:
        return [PPoint(x, y) for x, y in zip(self.X, self.Y)]

    @property
    def ergodic(self) -> list[PPoint]:
        return [PPoint(x, y) for x, y in zip(self.ergodic_X, self.ergodic_Y)]

    def point(self, k: int) -> PPoint:
        i = k - self.start_index
        if not 0 <= i < self.X.shape[0]:
            raise IndexError(f"iterate {k} not stored (have {self.start_index}..{self.n_iters})")
        return PPoint(self.X[i], self.Y[i])

    def ergodic_point(self, k: int) -> PPoint:
        """Running average over iterates 1..k (k >= 1)."""
        if not self.full_history:
            if k != self.n_iters:
                raise IndexError("low-memory trajectory keeps only the final average")
            return PPoint(self.ergodic_X[-1], self.ergodic_Y[-1])
        if not 1 <= k <= self.n_iters:
            raise IndexError(f"ergodic average defined for 1 <= k <= {self.n_iters}")
        return PPoint(self.ergodic_X[k - 1], self.ergodic_Y[k - 1])

    @property
    def final(self) -> PPoint:
        return PPoint(self.X[-1], self.Y[-1])


def run(problem, params: SolverParams, z0: PPoint, max_iters: int,
        stop_tol: float | None = 1e-10, stop=None,
        override_invalid: bool = False, keep_history: bool = True) -> Trajectory:
    """Run the iteration from z0 for up to ``max_iters`` steps.

    Parameters
    ----------
    problem : object
        Provides ``f``, ``gstar`` (ProxFn) and ``L`` (LinearOperator).
    params : SolverParams
        Must not classify Invalid unless ``override_invalid`` is set.
    z0 : PPoint
        Initial point.
    max_iters : int
        Iteration cap; the trajectory then holds iterates 0..K with K <=
        max_iters.
    stop_tol : float or None
        Fixed-point residual threshold max(||dx||/tau, ||dy||/sigma) <=
        stop_tol stops the run early; None disables the default rule.
    stop : callable or None
        Custom rule ``stop(k, z_prev, z_new) -> bool`` checked after each
        step (k is the index of z_new); overrides the default rule.
    override_invalid : bool
        Permit Invalid parameters (boundary-exploration experiments);
        downstream certificates then report observational results only.
    keep_history : bool
        If False, keep only the final three-iterate window and the final
        ergodic average (low-memory mode).

    Raises
    ------
    ValueError
        Invalid parameters without the override flag, or dimension errors.
    RuntimeError
        A non-finite iterate is produced (named by iteration index).
    """
    status = validate_params(params)
    if status.kind is Validity.INVALID and not override_invalid:
        raise ValueError(f"solver parameters are Invalid ({status}); "
                         "pass override_invalid=True to run anyway")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    L = problem.L
    n, m = L.cols, L.rows
    if z0.x.shape[0] != n or z0.y.shape[0] != m:
        raise ValueError(f"z0 dims ({z0.x.shape[0]}, {z0.y.shape[0]}) do not match "
                         f"problem dims ({n}, {m})")

    if keep_history:
        X = np.empty((max_iters + 1, n))
        Y = np.empty((max_iters + 1, m))
        X[0], Y[0] = z0.x, z0.y
    else:
        window_x = [z0.x]
        window_y = [z0.y]
        sum_x = np.zeros(n)
        sum_y = np.zeros(m)
    z = z0
    stopped_at = None
    k_final = max_iters
    for k in range(1, max_iters + 1):
        try:
            z_new = step(z, problem, params)
        except ValueError as e:
            # PPoint construction rejects non-finite entries
            raise RuntimeError(f"non-finite iterate produced at iteration {k}: {e}") from None
        if not (np.all(np.isfinite(z_new.x)) and np.all(np.isfinite(z_new.y))):
            raise RuntimeError(f"non-finite iterate produced at iteration {k}")
        if keep_history:
            X[k], Y[k] = z_new.x, z_new.y
        else:
            window_x.append(z_new.x)
            window_y.append(z_new.y)
            if len(window_x) > 3:
                window_x.pop(0)
                window_y.pop(0)
            sum_x += z_new.x
            sum_y += z_new.y
        if stop is not None:
            fire = stop(k, z, z_new)
        elif stop_tol is not None:
            res = max(
                float(np.linalg.norm(z_new.x - z.x)) / params.tau,
                float(np.linalg.norm(z_new.y - z.y)) / params.sigma,
            )
            fire = res <= stop_tol
        else:
            fire = False
        z = z_new
        if fire:
            stopped_at = k
            k_final = k
            break

    if keep_history:
        X = X[: k_final + 1]
        Y = Y[: k_final + 1]
        ks = np.arange(1, k_final + 1)[:, None]
        EX = np.cumsum(X[1:], axis=0) / ks
        EY = np.cumsum(Y[1:], axis=0) / ks
        return Trajectory(params, X, Y, EX, EY, k_final, stopped_at, True, 0)
    EX = sum_x[None, :] / k_final
    EY = sum_y[None, :] / k_final
    return Trajectory(params, np.stack(window_x), np.stack(window_y), EX, EY,
                      k_final, stopped_at, False, k_final + 1 - len(window_x))
