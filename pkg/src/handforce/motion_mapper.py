"""Force-to-position mapping and joint trajectory optimization.

Planned contact forces become virtual fingertip targets inside the object
surface (penetration = compliance x force, per contact axis). The trajectory
problem then chooses a terminal object pose and a joint trajectory whose
fingertips sit on those targets while the object pose approaches its goal.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from . import so3
from .errors import UnreachableError
from .grasp import to_world
from .optimizer import NlpProblem, solve_nlp

MM = 1e-3
UNREACHABLE_TOL = 1e-4


@dataclass(frozen=True)
class ComplianceGains:
    """Virtual compliance per contact axis, in millimetres per newton by default."""

    c_x: float
    c_y: float
    c_z: float
    unit: float = MM  # metres per gain unit of length

    def __post_init__(self):
        if min(self.c_x, self.c_y, self.c_z) <= 0:
            raise ValueError("compliance gains must be positive")

    @property
    def diag(self):
        return np.array([self.c_x, self.c_y, self.c_z])

    @property
    def stiffness(self):
        """Reciprocal stiffness in N/m (the plant default)."""
        return 1.0 / (self.diag * self.unit)


def penetration_distance(c, f_local):
    """Penetration per contact, in gain units (mm), in the local contact frame."""
    return np.asarray(f_local, dtype=float) * c.diag


def penetration_world(c, f_local, frames):
    """Penetration vectors rotated to world and converted to metres, shape (m, 3)."""
    d = penetration_distance(c, np.asarray(f_local, dtype=float).reshape(-1, 3)) * c.unit
    return to_world(d, frames).reshape(-1, 3)


@dataclass
class VirtualTargets:
    x_cd: np.ndarray
    R_d: np.ndarray

    def __post_init__(self):
        self.x_cd = np.asarray(self.x_cd, dtype=float).reshape(-1, 3)
        self.R_d = np.asarray(self.R_d, dtype=float).reshape(-1, 3, 3)
        if not (np.all(np.isfinite(self.x_cd)) and np.all(np.isfinite(self.R_d))):
            raise ValueError("virtual targets must be finite")


def virtual_targets(x_c, D_world, R_d):
    """Shift each contact by its penetration vector; orientations pass through."""
    x_c = np.asarray(x_c, dtype=float).reshape(-1, 3)
    return VirtualTargets(x_c + np.asarray(D_world, dtype=float).reshape(x_c.shape), R_d)


so3_log = so3.log


@dataclass(frozen=True)
class MapperConfig:
    lambda1: tuple = (30.0, 30.0, 30.0, 0.01, 0.01, 0.01)
    lambda2: tuple = (0.1, 0.1, 0.1)
    epsilon: float = 1e-9
    delta: float = 1e-3
    T: int = 2
    iterations: int = 20
    horizon: str = "hold"  # "hold": every step targets the terminal pose; "linear": step t at t/T
    finger_frame: str = "object"  # fingertip orientation targets fixed to the "object" or the "world"
    smoothing: float = 1e-6
    feas_tol: float = 1e-8
    max_solver_iter: int = 200

    def __post_init__(self):
        if len(self.lambda1) != 6 or len(self.lambda2) != 3:
            raise ValueError("lambda1 needs 6 weights and lambda2 needs 3")
        if self.epsilon <= 0 or self.delta <= 0:
            raise ValueError("epsilon and delta must be positive")
        if self.T < 1:
            raise ValueError("horizon T must be >= 1")
        if self.horizon not in ("hold", "linear"):
            raise ValueError(f"unknown horizon profile {self.horizon!r}")
        if self.finger_frame not in ("object", "world"):
            raise ValueError(f"unknown fingertip orientation frame {self.finger_frame!r}")

    def fractions(self):
        if self.horizon == "hold":
            return np.ones(self.T)
        return np.arange(1, self.T + 1) / self.T


def _smooth_norm(v, w, s):
    """sqrt(|w*v|^2 + s^2) - s and its gradient in v."""
    wv = w * v
    r = np.sqrt(wv @ wv + s * s)
    return r - s, (w * wv) / r


@dataclass
class TrajectoryResult:
    q: np.ndarray  # (T, mn)
    object_position: np.ndarray
    object_rotation: np.ndarray
    objective: float
    max_violation: float  # metres, worst fingertip-to-target distance
    status: str
    iterations: int
    report: object = field(default=None, repr=False)

    @property
    def first(self):
        return self.q[0]


class TrajectoryProblem:
    """Joint trajectory NLP over ``x = [p_o (scaled), w, q_1, ..., q_T]``.

    The terminal object pose is ``(p_o, R_now exp(w))``. Step ``t`` places
    the object at fraction ``s_t`` of the way there and requires each
    fingertip to sit on its virtual target carried along with the object.
    """

    LENGTH_SCALE = 100.0  # solver length unit = 1 cm

    def __init__(self, model, q0, vt, object_target, cfg, object_pose=None):
        self.model = model
        self.cfg = cfg
        self.q0 = np.asarray(q0, dtype=float).ravel()
        p_goal, r_goal = object_target
        self.p_goal = np.asarray(p_goal, dtype=float)
        self.r_goal = np.asarray(r_goal, dtype=float)
        if object_pose is None:
            object_pose = object_target
        self.p_now = np.asarray(object_pose[0], dtype=float)
        self.r_now = np.asarray(object_pose[1], dtype=float)
        self.body = (vt.x_cd - self.p_now) @ self.r_now  # target offsets in the object frame
        self.R_d = vt.R_d
        self.m, self.n = model.m, model.n
        self.T = cfg.T
        self.s = cfg.fractions()
        self.w1 = np.asarray(cfg.lambda1, dtype=float)
        self.w2 = np.asarray(cfg.lambda2, dtype=float)
        self.goal_rel = self.r_now.T @ self.r_goal
        self.n_var = 6 + self.T * model.n_dof
        self._cache_x = None
        self._cache_kin = None

    # -- packing -------------------------------------------------------------
    def pack(self, p_o, w, qs):
        return np.concatenate([np.asarray(p_o) * self.LENGTH_SCALE, np.asarray(w), np.ravel(qs)])

    def unpack(self, x):
        p_o = x[:3] / self.LENGTH_SCALE
        w = x[3:6]
        qs = x[6:].reshape(self.T, self.model.n_dof)
        return p_o, w, qs

    def initial_point(self, warm_start=None):
        w0 = so3.log(self.goal_rel)
        if warm_start is None:
            qs = np.tile(self.q0, (self.T, 1))
        else:
            qs = np.asarray(warm_start, dtype=float).reshape(-1, self.model.n_dof)
            if len(qs) != self.T:
                qs = np.tile(qs[0], (self.T, 1))
        qs = np.clip(qs, self.model.joint_lower, self.model.joint_upper)
        return self.pack(self.p_goal, w0, qs)

    def bounds(self):
        lo = np.concatenate([np.full(6, -np.inf), np.tile(self.model.joint_lower, self.T)])
        hi = np.concatenate([np.full(6, np.inf), np.tile(self.model.joint_upper, self.T)])
        return lo, hi

    def _kin(self, x):
        if self._cache_x is None or not np.array_equal(x, self._cache_x):
            _, _, qs = self.unpack(x)
            self._cache_kin = [self.model.kinematics(q) for q in qs]
            self._cache_x = np.array(x)
        return self._cache_kin

    def step_pose(self, p_o, w, t):
        s = self.s[t]
        return self.p_now + s * (p_o - self.p_now), self.r_now @ so3.exp(s * w)

    def targets(self, p_o, w, t):
        p, r = self.step_pose(p_o, w, t)
        return p + self.body @ r.T

    # -- objective -----------------------------------------------------------
    def objective(self, x):
        p_o, w, _ = self.unpack(x)
        kins = self._kin(x)
        sm = self.cfg.smoothing
        grad = np.zeros(self.n_var)

        f_pos, g_pos = _smooth_norm(p_o - self.p_goal, self.w1[:3], sm)
        grad[:3] = g_pos / self.LENGTH_SCALE

        e_o = so3.log(so3.exp(-w) @ self.goal_rel)
        f_rot, g_rot = _smooth_norm(e_o, self.w1[3:], sm)
        grad[3:6] = g_rot @ (-so3.jac_left_inv(e_o) @ so3.jac_right(w))

        total = f_pos + f_rot
        n, dof = self.n, self.model.n_dof
        carried = self.cfg.finger_frame == "object"
        for t, kin in enumerate(kins):
            base = 6 + t * dof
            s = self.s[t]
            step_rot = so3.exp(s * w) if carried else np.eye(3)
            jr = so3.jac_right(s * w)
            for i in range(self.m):
                body = self.r_now.T @ self.R_d[i]  # target orientation in the current object frame
                target = self.r_now @ step_rot @ body
                e = so3.log(kin.tip_rot[i].T @ target)
                f_i, g_i = _smooth_norm(e, self.w2, sm)
                total += f_i
                jri = so3.jac_right_inv(e)
                # d e / d q_j = -Jr^-1(e) target^T omega_j
                de = -jri @ target.T @ kin.jac_rot[i]
                grad[base + n * i:base + n * i + n] += g_i @ de
                if carried:
                    grad[3:6] += g_i @ (s * jri @ body.T @ jr)
        return float(total), grad

    # -- fingertip constraints -------------------------------------------------
    def residuals(self, x):
        """Fingertip minus target, (T, m, 3), in metres."""
        p_o, w, _ = self.unpack(x)
        kins = self._kin(x)
        return np.stack([kin.tip_pos - self.targets(p_o, w, t) for t, kin in enumerate(kins)])

    def eq(self, x):
        return self.residuals(x).ravel() * self.LENGTH_SCALE

    def eq_jac(self, x):
        p_o, w, _ = self.unpack(x)
        kins = self._kin(x)
        m, n, dof = self.m, self.n, self.model.n_dof
        jac = np.zeros((self.T * m * 3, self.n_var))
        for t, kin in enumerate(kins):
            s = self.s[t]
            _, r_t = self.step_pose(p_o, w, t)
            jr = so3.jac_right(s * w)
            for i in range(m):
                rows = slice(3 * (t * m + i), 3 * (t * m + i) + 3)
                jac[rows, 0:3] = -s * np.eye(3)  # scaled p_o and scaled residual cancel
                jac[rows, 3:6] = s * (r_t @ so3.skew(self.body[i]) @ jr) * self.LENGTH_SCALE
                base = 6 + t * dof + n * i
                jac[rows, base:base + n] = kin.jac_pos[i] * self.LENGTH_SCALE
        return jac

    def slippage(self, x):
        """Norm form of the fingertip constraint: epsilon - |p_fin - x_cd| per finger and step."""
        return self.cfg.epsilon - np.linalg.norm(self.residuals(x), axis=2).ravel()

    def slippage_jac(self, x):
        res = self.residuals(x)
        norms = np.linalg.norm(res, axis=2)
        unit = res / np.maximum(norms, 1e-300)[..., None]
        jac = self.eq_jac(x) / self.LENGTH_SCALE
        out = np.zeros((self.T * self.m, self.n_var))
        for k in range(self.T * self.m):
            out[k] = -unit.reshape(-1, 3)[k] @ jac[3 * k:3 * k + 3]
        return out

    def as_nlp(self, warm_start=None):
        return NlpProblem(
            self.objective,
            self.initial_point(warm_start),
            eq=self.eq,
            eq_jac=self.eq_jac,
            bounds=self.bounds(),
        )


def solve_joint_trajectory(model, q0, vt, object_target, cfg, object_pose=None, warm_start=None):
    """Joint trajectory ``q(1:T)`` tracking the virtual targets toward ``object_target``.

    ``object_target`` and ``object_pose`` are ``(position, rotation)`` pairs;
    ``object_pose`` (default: the target) is the pose the virtual targets were
    computed at. Fingertip targets are enforced as equalities with feasibility
    tolerance ``cfg.feas_tol``; joint limits are hard bounds.

    Raises ``UnreachableError`` if the best iterate still leaves some
    fingertip more than 0.1 mm from its target.
    """
    tp = TrajectoryProblem(model, q0, vt, object_target, cfg, object_pose)
    nlp = tp.as_nlp(warm_start)
    report = solve_nlp(nlp, tol=cfg.feas_tol * tp.LENGTH_SCALE, max_iter=cfg.max_solver_iter)
    p_o, w, qs = tp.unpack(report.x)
    qs = np.clip(qs, model.joint_lower, model.joint_upper)
    violation = float(np.linalg.norm(tp.residuals(tp.pack(p_o, w, qs)), axis=2).max())
    if violation > UNREACHABLE_TOL:
        raise UnreachableError(f"fingertip targets unreachable (worst miss {violation * 1e3:.3f} mm)", violation)
    return TrajectoryResult(
        q=qs,
        object_position=p_o,
        object_rotation=tp.r_now @ so3.exp(w),
        objective=report.fun,
        max_violation=violation,
        status=report.status,
        iterations=report.iterations,
        report=report,
    )


def solve_ik(model, q0, targets, tol=1e-12):
    """Per-finger bounded least-squares IK for fingertip positions.

    Returns ``(q, worst_residual_m)``.
    """
    targets = np.asarray(targets, dtype=float).reshape(model.m, 3)
    q = np.clip(np.asarray(q0, dtype=float).ravel(), model.joint_lower, model.joint_upper).copy()
    n = model.n
    worst = 0.0
    for i in range(model.m):
        sl = slice(n * i, n * i + n)

        def resid(qi, i=i, sl=sl):
            qq = q.copy()
            qq[sl] = qi
            return model.kinematics(qq).tip_pos[i] - targets[i]

        def jac(qi, i=i, sl=sl):
            qq = q.copy()
            qq[sl] = qi
            return model.kinematics(qq).jac_pos[i]

        lo, hi = model.joint_lower[sl], model.joint_upper[sl]
        x0 = np.clip(q[sl], lo + 1e-9, hi - 1e-9)
        sol = least_squares(resid, x0, jac=jac, bounds=(lo, hi), xtol=tol, ftol=tol, gtol=tol, method="trf")
        q[sl] = sol.x
        worst = max(worst, float(np.linalg.norm(sol.fun)))
    return q, worst
