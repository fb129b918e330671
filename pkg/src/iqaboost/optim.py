"""Levenberg-Marquardt minimizer for nonlinear least squares."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg.lapack import dposv

from .errors import NumericError

LAMBDA_MAX = 1e16


@dataclass(frozen=True)
class LMOptions:
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    max_iters: int = 200
    grad_tol: float = 1e-8
    step_tol: float = 1e-10

    def __post_init__(self):
        if self.lambda0 <= 0 or self.grad_tol <= 0 or self.step_tol <= 0:
            raise ValueError("lambda0, grad_tol and step_tol must be positive")
        if self.lambda_up <= 1:
            raise ValueError("lambda_up must exceed 1")
        if not 0 < self.lambda_down < 1:
            raise ValueError("lambda_down must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class LeastSquaresProblem:
    residual_fn: Callable[[np.ndarray], np.ndarray]
    jacobian_fn: Callable[[np.ndarray], np.ndarray]
    theta0: np.ndarray


@dataclass
class LMResult:
    theta: np.ndarray
    final_cost: float
    iterations: int
    status: str  # converged-gradient | converged-step | max-iters | lambda-overflow
    cost_history: list = field(default_factory=list, repr=False)


def _cost(r):
    return 0.5 * float(r.dot(r))


def _finite_or_raise(what, value, theta):
    # value is a reduction (cost, or J'J) that is finite iff its inputs are
    ok = math.isfinite(value) if isinstance(value, float) else np.isfinite(value).all()
    if not ok:
        raise NumericError(f"non-finite {what} at theta={theta!r}", theta=theta.copy())


def lm_fit(problem: LeastSquaresProblem, opts: LMOptions | None = None) -> LMResult:
    """Minimize 0.5*||r(theta)||^2 with lambda*I damping.

    ``iterations`` counts attempted steps, accepted or not. ``cost_history``
    holds the initial cost followed by the cost after every accepted step.
    """
    opts = opts or LMOptions()
    theta = np.array(problem.theta0, dtype=np.float64)
    r = np.asarray(problem.residual_fn(theta), dtype=np.float64)
    J = np.asarray(problem.jacobian_fn(theta), dtype=np.float64)
    cost = _cost(r)
    _finite_or_raise("residual", cost, theta)
    JtJ = J.T @ J
    _finite_or_raise("jacobian", JtJ, theta)
    g = J.T @ r
    history = [cost]
    lam = opts.lambda0
    eye = np.eye(theta.size)
    status = "max-iters"
    it = 0
    while True:
        if g.size == 0 or np.abs(g).max() <= opts.grad_tol:
            status = "converged-gradient"
            break
        if it >= opts.max_iters:
            status = "max-iters"
            break
        if lam > LAMBDA_MAX:
            status = "lambda-overflow"
            break
        it += 1
        _, step, info = dposv(JtJ + lam * eye, g, overwrite_a=1)
        if info != 0:  # damped normal matrix not positive definite
            lam *= opts.lambda_up
            continue
        step = -step.ravel()
        small_step = math.sqrt(step @ step) <= opts.step_tol * (
            math.sqrt(theta @ theta) + opts.step_tol)
        trial = theta + step
        r_new = np.asarray(problem.residual_fn(trial), dtype=np.float64)
        new_cost = _cost(r_new)
        _finite_or_raise("residual", new_cost, trial)
        if new_cost < cost:
            theta, r, cost = trial, r_new, new_cost
            history.append(cost)
            J = np.asarray(problem.jacobian_fn(theta), dtype=np.float64)
            JtJ = J.T @ J
            _finite_or_raise("jacobian", JtJ, theta)
            g = J.T @ r
            lam *= opts.lambda_down
            if small_step:
                status = "converged-step"
                break
        elif small_step:
            # damping has shrunk the step below resolution without progress
            status = "converged-step"
            break
        else:
            lam *= opts.lambda_up
    return LMResult(theta, cost, it, status, history)


def check_jacobian(problem: LeastSquaresProblem, theta, h=1e-6) -> float:
    """Largest relative gap between the analytic and central-difference Jacobians."""
    theta = np.asarray(theta, dtype=np.float64)
    J = np.asarray(problem.jacobian_fn(theta), dtype=np.float64)
    num = np.empty_like(J)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h * max(1.0, abs(theta[k]))
        num[:, k] = (problem.residual_fn(theta + e) - problem.residual_fn(theta - e)) / (2 * e[k])
    scale = np.maximum(np.abs(num), 1.0)
    return float(np.max(np.abs(J - num) / scale))
