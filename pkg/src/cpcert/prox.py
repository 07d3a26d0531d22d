"""Proximal operators for the shipped objective families.

A :class:`ProxFn` bundles a function value map (extended-real, ``inf``
allowed) with its proximal map ``prox(x, gamma) = argmin_z f(z) +
||x - z||^2 / (2 gamma)``. Conjugate proxes are derived through the Moreau
identity so problems can be stated in terms of g rather than g*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hilbert import as_vector

__all__ = [
    "ProxFn",
    "prox_l1",
    "prox_quadratic",
    "prox_indicator_nonneg",
    "prox_conjugate",
    "check_prox_inclusion",
    "l1",
    "quadratic_distance",
    "nonneg_indicator",
    "zero_fn",
    "conjugate",
    "l1_subgrad_test",
    "quadratic_subgrad_test",
    "nonneg_subgrad_test",
]


@dataclass(frozen=True)
class ProxFn:
    """A proper convex lsc function with value map and proximal map.

    ``evaluate`` returns the extended-real function value (math.inf for
    points outside the domain). ``prox`` must be pure and its output must
    always have finite value.
    """

    evaluate: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]
    domain_description: str = "R^n"


def _check_step(gamma: float):
    if not gamma > 0:
        raise ValueError(f"prox step must be positive, got {gamma}")


def prox_l1(x, gamma: float, lam: float) -> np.ndarray:
    """Soft-thresholding: componentwise shrink towards 0 by gamma*lam."""
    _check_step(gamma)
    if lam < 0:
        raise ValueError("l1 weight must be nonnegative")
    x = as_vector(x)
    return np.sign(x) * np.maximum(np.abs(x) - gamma * lam, 0.0)


def prox_quadratic(x, gamma: float, a) -> np.ndarray:
    """Prox of 0.5*||. - a||^2, i.e. (x + gamma*a) / (1 + gamma)."""
    _check_step(gamma)
    x = as_vector(x)
    a = as_vector(a)
    if x.shape != a.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {a.shape[0]}")
    return (x + gamma * a) / (1.0 + gamma)


def prox_indicator_nonneg(x, gamma: float = 1.0) -> np.ndarray:
    """Projection onto the nonnegative orthant (step value unused)."""
    return np.maximum(as_vector(x), 0.0)


def prox_conjugate(g: ProxFn, y, sigma: float) -> np.ndarray:
    """Prox of the convex conjugate via the Moreau identity:

    prox_{sigma g*}(y) = y - sigma * prox_{g/sigma}(y / sigma).
    """
    _check_step(sigma)
    y = as_vector(y)
    return y - sigma * g.prox(y / sigma, 1.0 / sigma)


def check_prox_inclusion(f: ProxFn, x, gamma: float, subgrad_test) -> bool:
    """Check the subgradient inclusion (x - p)/gamma in df(p) at p = prox(x).

    ``subgrad_test(p, u)`` decides membership of u in the subdifferential
    of the concrete f at p, within its own tolerance. Returns False on
    violation rather than raising.
    """
    _check_step(gamma)
    x = as_vector(x)
    p = f.prox(x, gamma)
    return bool(subgrad_test(p, (x - p) / gamma))


# --- shipped function families -------------------------------------------

def l1(lam: float) -> ProxFn:
    """lam * ||.||_1"""
    if lam < 0:
        raise ValueError("l1 weight must be nonnegative")
    return ProxFn(
        evaluate=lambda x: lam * float(np.abs(x).sum()),
        prox=lambda x, gamma: prox_l1(x, gamma, lam),
        domain_description="R^n",
    )


def quadratic_distance(a) -> ProxFn:
    """0.5 * ||. - a||^2"""
    a = as_vector(a)
    return ProxFn(
        evaluate=lambda x: 0.5 * float(np.sum((x - a) ** 2)),
        prox=lambda x, gamma: prox_quadratic(x, gamma, a),
        domain_description="R^n",
    )


def nonneg_indicator() -> ProxFn:
    """Indicator of the nonnegative orthant."""
    def evaluate(x):
        return 0.0 if np.all(np.asarray(x) >= -1e-12) else math.inf

    return ProxFn(
        evaluate=evaluate,
        prox=prox_indicator_nonneg,
        domain_description="x >= 0",
    )


def zero_fn() -> ProxFn:
    """The identically-zero function; prox is the identity."""
    return ProxFn(
        evaluate=lambda x: 0.0,
        prox=lambda x, gamma: as_vector(x).copy(),
        domain_description="R^n",
    )


def conjugate(g: ProxFn, evaluate: Callable[[np.ndarray], float],
              domain_description: str = "") -> ProxFn:
    """Build the ProxFn of g* with prox derived from g by Moreau.

    The conjugate's value map cannot be derived automatically and must be
    supplied; shipped problem generators register it analytically.
    """
    return ProxFn(
        evaluate=evaluate,
        prox=lambda y, sigma: prox_conjugate(g, y, sigma),
        domain_description=domain_description or f"conjugate of {g.domain_description}",
    )


# --- subgradient membership tests for the shipped families ----------------

def l1_subgrad_test(lam: float, tol: float = 1e-9):
    """u in d(lam*||.||_1)(p): u_i = lam*sign(p_i) off zero, |u_i| <= lam at zero."""
    def test(p, u):
        p = np.asarray(p)
        u = np.asarray(u)
        at_zero = np.abs(p) <= tol
        ok_zero = np.abs(u[at_zero]) <= lam + tol
        ok_pos = np.abs(u[~at_zero] - lam * np.sign(p[~at_zero])) <= tol
        return bool(np.all(ok_zero) and np.all(ok_pos))
    return test


def quadratic_subgrad_test(a, tol: float = 1e-9):
    """d(0.5*||. - a||^2)(p) = {p - a}."""
    a = as_vector(a)

    def test(p, u):
        return bool(np.linalg.norm(u - (p - a)) <= tol * (1.0 + np.linalg.norm(p)))
    return test


def nonneg_subgrad_test(tol: float = 1e-9):
    """Normal cone of the orthant: u_i <= 0 where p_i = 0, u_i = 0 where p_i > 0."""
    def test(p, u):
        p = np.asarray(p)
        u = np.asarray(u)
        if np.any(p < -tol):
            return False
        interior = p > tol
        return bool(np.all(np.abs(u[interior]) <= tol) and np.all(u[~interior] <= tol))
    return test
