"""Constrained optimization backends.

``solve_eq_qp`` solves equality-constrained QPs through their KKT system.
``solve_nlp`` wraps SciPy's SLSQP (an active-set least-squares SQP) behind a
small problem/report interface with analytic-gradient checking.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .errors import NumericError, RankDeficiencyError

FEAS_TOL = 1e-8
STAT_TOL = 1e-8
MAX_ITER = 200
KKT_RCOND = 1e-10


@dataclass
class EqQP:
    """minimize 0.5 x'Hx + g'x  subject to  Ax = b."""

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float).reshape(-1, len(self.g))
        self.b = np.asarray(self.b, dtype=float).ravel()
        n = len(self.g)
        if self.H.shape != (n, n):
            raise ValueError(f"H must be {n}x{n}")
        if len(self.b) != len(self.A):
            raise ValueError("A and b row counts differ")
        if not np.allclose(self.H, self.H.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(self.H).max())):
            raise ValueError("H must be symmetric")


@dataclass
class SolveReport:
    x: np.ndarray
    fun: float
    max_violation: float
    iterations: int
    status: str  # "converged", "max_iter" or "failed"
    multipliers: Optional[np.ndarray] = None
    stationarity: float = float("nan")
    message: str = ""

    @property
    def success(self):
        return self.status == "converged"


def solve_eq_qp(p, rcond=KKT_RCOND):
    """Solve an :class:`EqQP` from its first-order optimality (KKT) conditions.

    Redundant constraint rows are removed with a rank-revealing SVD. Raises
    ``RankDeficiencyError`` if ``b`` is inconsistent with ``A`` or the reduced
    KKT matrix is singular.
    """
    n = len(p.g)
    if len(p.A):
        u, s, vt = np.linalg.svd(p.A, full_matrices=False)
        r = int(np.sum(s > rcond * s[0])) if s[0] > 0 else 0
        ur, sr, vr = u[:, :r], s[:r], vt[:r]
        b_red = ur.T @ p.b
        inconsistency = np.linalg.norm(p.b - ur @ b_red)
        if inconsistency > 1e-9 * max(1.0, np.linalg.norm(p.b)):
            raise RankDeficiencyError(f"constraints inconsistent (residual {inconsistency:.3e})")
        a_red = sr[:, None] * vr
    else:
        r, ur, a_red, b_red = 0, np.zeros((0, 0)), np.zeros((0, n)), np.zeros(0)

    kkt = np.zeros((n + r, n + r))
    kkt[:n, :n] = p.H
    kkt[:n, n:] = a_red.T
    kkt[n:, :n] = a_red
    rhs = np.concatenate([-p.g, b_red])
    sv = np.linalg.svd(kkt, compute_uv=False)
    if sv[-1] <= rcond * sv[0]:
        raise RankDeficiencyError(f"singular KKT system (cond {sv[0] / max(sv[-1], 1e-300):.3e})")
    sol = np.linalg.solve(kkt, rhs)
    x = sol[:n]
    lam = ur @ sol[n:] if r else np.zeros(len(p.b))
    stationarity = np.linalg.norm(p.H @ x + p.g + p.A.T @ lam, np.inf)
    violation = np.linalg.norm(p.A @ x - p.b, np.inf) if len(p.b) else 0.0
    return SolveReport(
        x=x,
        fun=float(0.5 * x @ p.H @ x + p.g @ x),
        max_violation=float(violation),
        iterations=1,
        status="converged",
        multipliers=lam,
        stationarity=float(stationarity),
    )


@dataclass
class NlpProblem:
    """Smooth NLP with analytic derivatives.

    ``objective(x) -> (f, grad)``; equalities ``eq(x) == 0`` and inequalities
    ``ineq(x) >= 0`` come with Jacobian callbacks. ``bounds`` is a
    ``(lower, upper)`` pair or ``None``.
    """

    objective: Callable
    x0: np.ndarray
    eq: Optional[Callable] = None
    eq_jac: Optional[Callable] = None
    ineq: Optional[Callable] = None
    ineq_jac: Optional[Callable] = None
    bounds: Optional[tuple] = None
    check_gradients: bool = False
    gradient_rtol: float = 1e-4
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        if not np.all(np.isfinite(self.x0)):
            raise NumericError("initial point is not finite")
        if (self.eq is None) != (self.eq_jac is None) or (self.ineq is None) != (self.ineq_jac is None):
            raise ValueError("constraint callbacks need matching Jacobians")

    def violation(self, x):
        v = 0.0
        if self.eq is not None:
            v = max(v, float(np.abs(self.eq(x)).max(initial=0.0)))
        if self.ineq is not None:
            v = max(v, float(np.maximum(-self.ineq(x), 0.0).max(initial=0.0)))
        if self.bounds is not None:
            lo, hi = self.bounds
            v = max(v, float(np.maximum(lo - x, 0.0).max(initial=0.0)), float(np.maximum(x - hi, 0.0).max(initial=0.0)))
        return v


def _finite(name, value):
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{name} returned a non-finite value")
    return value


def central_difference(fun, x, h=1e-6):
    """Central-difference Jacobian of a scalar or vector function."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x))
    jac = np.zeros((len(f0), len(x)))
    for k in range(len(x)):
        step = h * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        jac[:, k] = (np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (2.0 * step)
    return jac


def gradient_errors(problem, x, h=1e-6):
    """Relative max-norm mismatch of each analytic derivative against central differences."""
    x = np.asarray(x, dtype=float)

    def rel(analytic, numeric):
        scale = max(np.abs(numeric).max(initial=0.0), 1e-6)
        return float(np.abs(analytic - numeric).max(initial=0.0) / scale)

    out = {"objective": rel(problem.objective(x)[1], central_difference(lambda z: problem.objective(z)[0], x, h)[0])}
    if problem.eq is not None:
        out["eq"] = rel(np.atleast_2d(problem.eq_jac(x)), central_difference(problem.eq, x, h))
    if problem.ineq is not None:
        out["ineq"] = rel(np.atleast_2d(problem.ineq_jac(x)), central_difference(problem.ineq, x, h))
    return out


def solve_nlp(p, tol=FEAS_TOL, max_iter=MAX_ITER):
    """Solve ``p`` with SLSQP from ``p.x0``.

    On the iteration limit the best iterate seen (least violation, then
    lowest objective) is returned with status ``"max_iter"``.
    """
    if p.check_gradients:
        errs = gradient_errors(p, p.x0)
        bad = {k: v for k, v in errs.items() if v > p.gradient_rtol}
        if bad:
            raise ValueError(f"analytic gradients disagree with finite differences: {bad}")

    def fun(x):
        f, g = p.objective(x)
        return float(_finite("objective", f)), _finite("gradient", g)

    constraints = []
    if p.eq is not None:
        constraints.append({"type": "eq", "fun": lambda x: _finite("eq", p.eq(x)), "jac": lambda x: _finite("eq_jac", p.eq_jac(x))})
    if p.ineq is not None:
        constraints.append({"type": "ineq", "fun": lambda x: _finite("ineq", p.ineq(x)), "jac": lambda x: _finite("ineq_jac", p.ineq_jac(x))})
    bounds = None
    if p.bounds is not None:
        bounds = list(zip(np.broadcast_to(p.bounds[0], p.x0.shape), np.broadcast_to(p.bounds[1], p.x0.shape)))

    history = []

    def record(xk, *args):
        history.append(np.array(xk, dtype=float))

    with warnings.catch_warnings():
        # SLSQP clips line-search trial points to the bounds and says so; harmless here
        warnings.filterwarnings("ignore", message="Values in x were outside bounds", category=RuntimeWarning)
        res = minimize(
            fun,
            p.x0,
            jac=True,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            callback=record,
            options={"maxiter": max_iter, "ftol": tol * 1e-2},
        )
    x = np.asarray(res.x, dtype=float)
    violation = p.violation(x)
    if res.success and violation <= tol:
        status = "converged"
    elif res.status == 9:
        status = "max_iter"
        best = min(history + [x], key=lambda z: (max(p.violation(z) - tol, 0.0), p.objective(z)[0]))
        x, violation = best, p.violation(best)
    else:
        status = "failed"
    f, g = p.objective(x)
    stationarity = _stationarity(p, x, g, tol)
    return SolveReport(
        x=x,
        fun=float(f),
        max_violation=float(violation),
        iterations=int(res.nit),
        status=status,
        stationarity=stationarity,
        message=str(res.message),
    )


def _stationarity(p, x, grad, tol):
    """Least-squares KKT residual over equalities and near-active inequalities/bounds."""
    cols = []
    if p.eq is not None:
        cols.append(np.atleast_2d(p.eq_jac(x)))
    if p.ineq is not None:
        active = p.ineq(x) <= 1e3 * max(tol, 1e-10)
        if active.any():
            cols.append(np.atleast_2d(p.ineq_jac(x))[active])
    if p.bounds is not None:
        lo, hi = (np.broadcast_to(b, x.shape) for b in p.bounds)
        at = (x - lo <= 1e-9) | (hi - x <= 1e-9)
        if at.any():
            cols.append(np.eye(len(x))[at])
    if not cols:
        return float(np.abs(grad).max(initial=0.0))
    a = np.vstack(cols)
    lam, *_ = np.linalg.lstsq(a.T, grad, rcond=None)
    return float(np.abs(grad - a.T @ lam).max(initial=0.0))
