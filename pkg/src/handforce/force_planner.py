"""Rigidity-based contact force planning.

The contact force is split into an operational part that balances gravity,
a rigidity internal force that enforces the acceleration-level rigidity
constraint, and a friction internal force that is only added when the first
two leave some contact outside its friction cone or normal-force range.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from .errors import GraspDegeneracyError, InfeasiblePlanError, RigidityError, SingularityError
from .grasp import (
    ConeMargin,
    FrictionParams,
    GraspState,
    cone_margin,
    decompose_force,
    grasp_matrix,
    to_local,
)
from .hand_model import pinv
from .optimizer import EqQP, NlpProblem, solve_eq_qp, solve_nlp
from .rigidity import (
    ContactFramework,
    is_infinitesimally_rigid,
    numerical_rank,
    rigidity_matrix,
    rigidity_matrix_rate,
)

SAFETY_TOL = 1e-6
BALANCE_TOL = 1e-6
_LZ_FLOOR = 1e-6


def operational_force(G, g_o):
    """Minimum-norm contact force with ``G f = -g_o``."""
    G = np.asarray(G, dtype=float)
    if numerical_rank(G) < 6:
        raise GraspDegeneracyError("grasp matrix has rank < 6")
    return -pinv(G) @ np.asarray(g_o, dtype=float)


def _spd_inverse(M):
    try:
        chol = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SingularityError("task inertia is not positive definite") from None
    if np.min(np.diag(chol)) ** 2 < 1e-14 * np.max(np.diag(M)):
        raise SingularityError("task inertia is numerically singular")
    inv_l = np.linalg.inv(chol)
    return inv_l.T @ inv_l


def rigidity_internal_force(R, R_dot, M_c, v_c, alpha):
    """Closed-form constraint force ``R' (R M^-1 R')^+ (R_dot v + R alpha)``."""
    m_inv = _spd_inverse(np.asarray(M_c, dtype=float))
    rhs = R_dot @ v_c + R @ alpha
    return R.T @ (pinv(R @ m_inv @ R.T) @ rhs)


def rigidity_internal_force_qp(R, R_dot, M_c, v_c, alpha):
    """Same force through the constrained-acceleration QP.

    Solves ``min (a - alpha)' M_c (a - alpha)  s.t.  R a + R_dot v = 0`` and
    returns ``M_c (alpha - a*)``. Used as an independent cross-check.
    """
    qp = EqQP(H=M_c, g=-M_c @ alpha, A=R, b=-R_dot @ v_c)
    acc = solve_eq_qp(qp).x
    return M_c @ (alpha - acc)


@dataclass
class PlannerInputs:
    grasp: GraspState
    framework: ContactFramework
    friction: FrictionParams
    g_o: np.ndarray
    M_c: np.ndarray
    v_c: np.ndarray
    alpha: np.ndarray
    warm_start: Optional[np.ndarray] = None
    check_gradients: bool = False

    def __post_init__(self):
        m = self.grasp.m
        self.g_o = np.asarray(self.g_o, dtype=float).ravel()
        self.v_c = np.asarray(self.v_c, dtype=float).ravel()
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        self.M_c = np.asarray(self.M_c, dtype=float)
        if self.framework.m != m:
            raise ValueError("framework and grasp disagree on the contact count")
        if self.g_o.shape != (6,):
            raise ValueError("gravity wrench must have 6 entries")
        for name in ("v_c", "alpha"):
            if getattr(self, name).shape != (3 * m,):
                raise ValueError(f"{name} must have {3 * m} entries")
        if self.M_c.shape != (3 * m, 3 * m):
            raise ValueError(f"M_c must be {3 * m}x{3 * m}")


@dataclass
class ForcePlan:
    f_ope: np.ndarray
    f_int_R: np.ndarray
    f_int_mu: np.ndarray
    f_c: np.ndarray
    f_perp: np.ndarray
    f_par: np.ndarray
    margins: ConeMargin
    G: np.ndarray
    frames: np.ndarray
    friction_solved: bool = False
    nlp_report: Optional[object] = field(default=None, repr=False)

    @property
    def f_local(self):
        return to_local(self.f_c, self.frames)

    def wrench_residual(self, g_o):
        return float(np.linalg.norm(self.G @ self.f_c + g_o))

    def to_record(self):
        return {
            "f_ope": self.f_ope.tolist(),
            "f_int_R": self.f_int_R.tolist(),
            "f_int_mu": self.f_int_mu.tolist(),
            "f_c": self.f_c.tolist(),
            "f_perp": self.f_perp.tolist(),
            "f_par": self.f_par.tolist(),
            "cone_ratio": [float(r) if np.isfinite(r) else None for r in self.margins.ratio],
            "friction_solved": self.friction_solved,
        }


def _friction_problem(f_pre, G, frames, fp, x0):
    m = len(frames)
    f_pre = np.asarray(f_pre, dtype=float).reshape(m, 3)
    mu2 = fp.mu**2
    lower = fp.f_n_min
    if lower <= 0.0:
        warnings.warn("f_n_min = 0: the friction ratio objective is unbounded near zero normal force; "
                      f"using {_LZ_FLOOR} N as the working lower bound", stacklevel=3)
        lower = _LZ_FLOOR
    normal_rows = frames[:, :, 2]  # inward normals, (m, 3)

    def local(x):
        return np.einsum("mji,mj->mi", frames, f_pre + x.reshape(m, 3))

    def objective(x):
        L = local(x)
        lz = np.maximum(L[:, 2], _LZ_FLOOR)
        t2 = L[:, 0] ** 2 + L[:, 1] ** 2
        val = 0.5 * np.sum(t2 / (mu2 * lz**2))
        dL = np.column_stack([L[:, 0] / (mu2 * lz**2), L[:, 1] / (mu2 * lz**2), -t2 / (mu2 * lz**3)])
        dL[L[:, 2] < _LZ_FLOOR, 2] = 0.0
        return val, np.einsum("mij,mj->mi", frames, dL).ravel()

    def eq(x):
        return G @ x

    def eq_jac(x):
        return G

    def ineq(x):
        L = local(x)
        lz = L[:, 2]
        cone = mu2 * lz**2 - L[:, 0] ** 2 - L[:, 1] ** 2
        return np.concatenate([lz, cone, lz - lower, fp.f_n_max - lz])

    def ineq_jac(x):
        L = local(x)
        jac = np.zeros((4 * m, 3 * m))
        for i in range(m):
            cols = slice(3 * i, 3 * i + 3)
            jac[i, cols] = normal_rows[i]
            jac[m + i, cols] = frames[i] @ np.array([-2 * L[i, 0], -2 * L[i, 1], 2 * mu2 * L[i, 2]])
            jac[2 * m + i, cols] = normal_rows[i]
            jac[3 * m + i, cols] = -normal_rows[i]
        return jac

    return NlpProblem(objective, x0, eq=eq, eq_jac=eq_jac, ineq=ineq, ineq_jac=ineq_jac)


def _restoration_point(f_pre, G, frames, fp):
    """Null-space squeeze that puts every normal component mid-range."""
    m = len(frames)
    basis = null_space(G)
    normals = np.zeros((m, 3 * m))
    for i in range(m):
        normals[i, 3 * i:3 * i + 3] = frames[i][:, 2]
    lz_pre = normals @ f_pre
    target = np.full(m, 0.5 * (max(fp.f_n_min, _LZ_FLOOR) + fp.f_n_max))
    y, *_ = np.linalg.lstsq(normals @ basis, target - lz_pre, rcond=None)
    return basis @ y


def friction_problem(f_pre, G, frames, fp, x0=None):
    """Build the friction internal-force NLP (exposed for gradient audits)."""
    m = len(frames)
    if x0 is None:
        x0 = np.zeros(3 * m)
    return _friction_problem(f_pre, np.asarray(G, dtype=float), np.asarray(frames), fp, x0)


def friction_internal_force(f_pre, G, frames, fp, x0=None, check_gradients=False):
    """Null-space force that brings ``f_pre`` inside every cone and normal range.

    Minimizes the summed squared tangential-to-friction-limit ratios. The
    search starts at ``x0`` (default zero); if that leaves a non-positive
    normal component a least-squares squeeze is used instead.

    Returns ``(f_int_mu, report)``; raises ``InfeasiblePlanError`` when no
    internal force satisfies the constraints.
    """
    G = np.asarray(G, dtype=float)
    frames = np.asarray(frames, dtype=float)
    f_pre = np.asarray(f_pre, dtype=float).ravel()
    m = len(frames)
    start = np.zeros(3 * m) if x0 is None else np.asarray(x0, dtype=float).ravel()
    lz0 = to_local(f_pre + start, frames)[:, 2]
    if np.any(lz0 <= _LZ_FLOOR):
        start = _restoration_point(f_pre, G, frames, fp)
    problem = _friction_problem(f_pre, G, frames, fp, start)
    problem.check_gradients = check_gradients
    report = solve_nlp(problem, tol=1e-10, max_iter=200)
    x = report.x
    # remove the residual wrench left by the solver's feasibility tolerance
    x = x - pinv(G) @ (G @ x)
    margins = cone_margin(to_local(f_pre + x, frames), fp, tol=SAFETY_TOL)
    if not margins.ok:
        raise InfeasiblePlanError(
            f"no internal force satisfies the contact constraints ({report.message})",
            margins.violations(),
        )
    return x, report


def plan_contact_forces(inputs):
    """Plan ``f_c = f_ope + f_int_R + f_int_mu`` for the given grasp.

    Raises ``RigidityError`` for a non-rigid framework, ``GraspDegeneracyError``
    for a rank-deficient grasp matrix and ``InfeasiblePlanError`` whenever the
    final force would violate a friction cone or normal-force bound.
    """
    gs, fp = inputs.grasp, inputs.friction
    ev = is_infinitesimally_rigid(inputs.framework)
    if not ev.is_rigid:
        raise RigidityError(f"contact framework not infinitesimally rigid (rank {ev.rank})")
    G = grasp_matrix(gs)
    f_ope = operational_force(G, inputs.g_o)
    R = ev.R
    R_dot = rigidity_matrix_rate(inputs.framework, inputs.v_c)
    f_int_R = rigidity_internal_force(R, R_dot, inputs.M_c, inputs.v_c, inputs.alpha)
    f_pre = f_ope + f_int_R
    frames = gs.frames()
    f_perp, f_par = decompose_force(f_pre, frames)

    f_int_mu = np.zeros_like(f_pre)
    report = None
    needs_friction = np.any(f_par > fp.mu * f_perp) or np.any(f_perp < fp.f_n_min) or np.any(f_perp > fp.f_n_max)
    if needs_friction:
        f_int_mu, report = friction_internal_force(
            f_pre, G, frames, fp, x0=inputs.warm_start, check_gradients=inputs.check_gradients
        )
    f_c = f_ope + f_int_R + f_int_mu
    f_perp, f_par = decompose_force(f_c, frames)
    margins = cone_margin(to_local(f_c, frames), fp)
    safety = cone_margin(to_local(f_c, frames), fp, tol=SAFETY_TOL)
    if not safety.ok:
        raise InfeasiblePlanError("planned contact force violates the contact constraints", safety.violations())
    residual = np.linalg.norm(G @ f_c + inputs.g_o)
    if residual > BALANCE_TOL:
        raise InfeasiblePlanError(f"planned force does not balance gravity (residual {residual:.3e})")
    return ForcePlan(
        f_ope=f_ope,
        f_int_R=f_int_R,
        f_int_mu=f_int_mu,
        f_c=f_c,
        f_perp=f_perp,
        f_par=f_par,
        margins=margins,
        G=G,
        frames=frames,
        friction_solved=needs_friction,
        nlp_report=report,
    )


def framework_for(grasp, edges=None):
    return ContactFramework(grasp.points, edges=edges, check=False)

