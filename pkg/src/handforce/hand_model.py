"""Kinematic and inertial model of an m-finger, n-joint-per-finger hand."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import yaml

from . import kernels
from .errors import ConfigError, JointLimitError, SingularityError

PINV_RCOND = 1e-8
SINGULAR_TOL = 1e-6

_DATA = Path(__file__).parent / "data" / "hands"


@dataclass(frozen=True)
class KinematicChain:
    """One finger: revolute joints separated by fixed translations.

    ``offsets[j]`` is applied before joint ``j`` (row 0 places the first joint
    relative to the finger base); ``tip_offset`` follows the last joint.
    Joint axes are expressed in the frame preceding each joint.
    """

    base_rot: np.ndarray
    base_pos: np.ndarray
    axes: np.ndarray
    offsets: np.ndarray
    tip_offset: np.ndarray
    link_masses: np.ndarray

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=float)
        if not np.allclose(np.linalg.norm(axes, axis=1), 1.0, atol=1e-12):
            raise ValueError("joint axes must be unit vectors")
        lengths = np.linalg.norm(np.vstack([self.offsets[1:], self.tip_offset]), axis=1)
        if np.any(lengths <= 0):
            raise ValueError("link lengths must be positive")
        if len(self.offsets) != len(axes) or len(self.link_masses) != len(axes):
            raise ValueError("offsets, axes and link_masses must have one row per joint")

    @property
    def n_joints(self):
        return len(self.axes)

    @property
    def link_lengths(self):
        return np.linalg.norm(np.vstack([self.offsets[1:], self.tip_offset]), axis=1)

    def home_tip(self):
        """Fingertip position with every joint at zero (sum of fixed transforms)."""
        return self.base_pos + self.base_rot @ (self.offsets.sum(axis=0) + self.tip_offset)


@dataclass
class JointState:
    q: np.ndarray
    q_dot: np.ndarray = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q_dot is None:
            self.q_dot = np.zeros_like(self.q)
        else:
            self.q_dot = np.asarray(self.q_dot, dtype=float)


class FingertipPoses(NamedTuple):
    positions: np.ndarray  # (m, 3)
    rotations: np.ndarray  # (m, 3, 3)


class Kinematics(NamedTuple):
    tip_pos: np.ndarray
    tip_rot: np.ndarray
    joint_pos: np.ndarray
    joint_axis: np.ndarray
    jac_pos: np.ndarray  # (m, 3, n)
    jac_rot: np.ndarray  # (m, 3, n)


@dataclass
class HandModel:
    fingers: list
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    armature: float = 1e-6
    constant_inertia: np.ndarray = None
    name: str = "hand"
    _packed: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.fingers) < 3:
            raise ValueError(f"a hand needs at least 3 fingers, got {len(self.fingers)}")
        n = {f.n_joints for f in self.fingers}
        if len(n) != 1:
            raise ValueError("all fingers must have the same joint count")
        self.joint_lower = np.asarray(self.joint_lower, dtype=float)
        self.joint_upper = np.asarray(self.joint_upper, dtype=float)
        if self.joint_lower.shape != (self.n_dof,) or self.joint_upper.shape != (self.n_dof,):
            raise ValueError(f"joint limits must have length {self.n_dof}")
        if not np.all(self.joint_lower < self.joint_upper):
            raise ValueError("joint_lower must be strictly below joint_upper")
        if self.constant_inertia is not None:
            diag = np.broadcast_to(np.asarray(self.constant_inertia, dtype=float), (self.n_dof,))
            if np.any(diag <= 0):
                raise ValueError("constant_inertia entries must be positive")
            self.constant_inertia = np.array(diag)
        self._packed = (
            np.stack([f.base_rot for f in self.fingers]),
            np.stack([f.base_pos for f in self.fingers]),
            np.stack([f.axes for f in self.fingers]),
            np.stack([np.vstack([f.offsets, f.tip_offset]) for f in self.fingers]),
        )

    @property
    def m(self):
        return len(self.fingers)

    @property
    def n(self):
        return self.fingers[0].n_joints

    @property
    def n_dof(self):
        return self.m * self.n

    def check_limits(self, q, tol=0.0):
        q = _as_q(q)
        bad = np.flatnonzero((q < self.joint_lower - tol) | (q > self.joint_upper + tol))
        if bad.size:
            i = int(bad[0])
            raise JointLimitError(i, q[i], self.joint_lower[i], self.joint_upper[i])

    def clamp(self, q):
        return np.clip(_as_q(q), self.joint_lower, self.joint_upper)

    def kinematics(self, q, backend=None):
        """Full FK with fingertip Jacobians; no limit checking (inner-loop use)."""
        q = _as_q(q).reshape(self.m, self.n)
        fk = kernels.hand_fk if backend is None else kernels.get_backend(backend).hand_fk
        return Kinematics(*fk(*self._packed, q))

    @classmethod
    def from_dict(cls, d, source="hand"):
        return _hand_from_dict(d, source)


def _as_q(q):
    if isinstance(q, JointState):
        q = q.q
    return np.asarray(q, dtype=float).ravel()


def forward_kinematics(model, q):
    """Fingertip poses in the palm frame.

    Raises ``JointLimitError`` naming the first joint outside its limits.
    """
    model.check_limits(q)
    kin = model.kinematics(q)
    return FingertipPoses(kin.tip_pos, kin.tip_rot)


def block_jacobian(jac_blocks):
    m, _, n = jac_blocks.shape
    jac = np.zeros((3 * m, m * n))
    for i in range(m):
        jac[3 * i:3 * i + 3, n * i:n * i + n] = jac_blocks[i]
    return jac


def hand_jacobian(model, q):
    """Stacked fingertip linear-velocity Jacobian, shape (3m, mn), block diagonal."""
    model.check_limits(q)
    return block_jacobian(model.kinematics(q).jac_pos)


def pinv(a, rcond=PINV_RCOND):
    """SVD pseudoinverse; singular values below ``rcond * s_max`` are dropped."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0:
        return np.zeros(a.shape[::-1])
    keep = s > rcond * s[0]
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def joint_inertia(model, q):
    """Joint-space inertia from per-link point masses plus a diagonal armature.

    Each link's mass sits at its distal end. With ``constant_inertia`` set the
    configuration-independent diagonal is returned instead.
    """
    if model.constant_inertia is not None:
        return np.diag(model.constant_inertia)
    kin = model.kinematics(q)
    m, n = model.m, model.n
    mass_matrix = np.zeros((model.n_dof, model.n_dof))
    for i, finger in enumerate(model.fingers):
        points = np.vstack([kin.joint_pos[i, 1:], kin.tip_pos[i]])
        block = np.zeros((n, n))
        for k in range(n):
            lever = points[k] - kin.joint_pos[i, :k + 1]
            jk = np.cross(kin.joint_axis[i, :k + 1], lever).T  # (3, k+1)
            block[:k + 1, :k + 1] += finger.link_masses[k] * (jk.T @ jk)
        mass_matrix[n * i:n * i + n, n * i:n * i + n] = block
    mass_matrix += model.armature * np.eye(model.n_dof)
    return mass_matrix


def task_inertia(model, q):
    """Task-space inertia ``(J^+)^T M(q) J^+`` at the fingertips.

    Raises ``SingularityError`` if the smallest singular value of the hand
    Jacobian is below 1e-6.
    """
    jac = hand_jacobian(model, q)
    s = np.linalg.svd(jac, compute_uv=False)
    if s[-1] < SINGULAR_TOL:
        raise SingularityError(f"hand Jacobian near singular (sigma_min = {s[-1]:.3e})")
    jp = pinv(jac)
    mc = jp.T @ joint_inertia(model, q) @ jp
    return 0.5 * (mc + mc.T)


# --- configuration ------------------------------------------------------------

def _radial_base(angle):
    c, s = np.cos(angle), np.sin(angle)
    x = np.array([-c, -s, 0.0])
    z = np.array([0.0, 0.0, 1.0])
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def _vec(d, key, shape, source):
    try:
        arr = np.asarray(d[key], dtype=float)
    except KeyError:
        raise ConfigError("missing entry", field=f"{source}.{key}") from None
    except (TypeError, ValueError):
        raise ConfigError("expected numbers", field=f"{source}.{key}") from None
    if shape is not None and arr.shape != shape:
        raise ConfigError(f"expected shape {shape}, got {arr.shape}", field=f"{source}.{key}")
    return arr


def _chain_from_dict(fd, base_rot, base_pos, source):
    axes = _vec(fd, "joint_axes", None, source)
    n = len(axes)
    axes = axes / np.linalg.norm(axes, axis=1, keepdims=True)
    try:
        return KinematicChain(
            base_rot=base_rot,
            base_pos=base_pos,
            axes=axes,
            offsets=_vec(fd, "offsets", (n, 3), source),
            tip_offset=_vec(fd, "tip_offset", (3,), source),
            link_masses=_vec(fd, "link_masses", (n,), source),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), field=source) from None


def _hand_from_dict(d, source):
    if not isinstance(d, dict):
        raise ConfigError("hand description must be a mapping", field=source)
    fingers, lower, upper = [], [], []
    if "fingers" in d:
        for i, fd in enumerate(d["fingers"]):
            src = f"{source}.fingers[{i}]"
            rot = _vec(fd, "base_rotation", (3, 3), src)
            fingers.append(_chain_from_dict(fd, rot, _vec(fd, "base_position", (3,), src), src))
            lower.extend(_vec(fd, "joint_lower", None, src))
            upper.extend(_vec(fd, "joint_upper", None, src))
    else:
        fd = d.get("finger")
        if fd is None:
            raise ConfigError("need either 'fingers' or 'finger' + 'finger_angles_deg'", field=source)
        angles = _vec(d, "finger_angles_deg", None, source)
        radius = float(d.get("palm_radius", 0.07))
        height = float(d.get("palm_height", 0.0))
        for k, ang in enumerate(np.radians(angles)):
            base_pos = np.array([radius * np.cos(ang), radius * np.sin(ang), height])
            fingers.append(_chain_from_dict(fd, _radial_base(ang), base_pos, f"{source}.finger"))
            lower.extend(_vec(fd, "joint_lower", None, f"{source}.finger"))
            upper.extend(_vec(fd, "joint_upper", None, f"{source}.finger"))
    try:
        return HandModel(
            fingers=fingers,
            joint_lower=np.array(lower),
            joint_upper=np.array(upper),
            armature=float(d.get("armature", 1e-6)),
            constant_inertia=d.get("constant_inertia"),
            name=str(d.get("name", source)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), field=source) from None


def load_hand(ref="leap4"):
    """Load a hand description by bundled name or YAML path."""
    path = Path(ref)
    if not path.exists():
        candidate = _DATA / f"{ref}.yaml"
        if not candidate.exists():
            raise ConfigError(f"no hand description named {ref!r}", field="hand")
        path = candidate
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return HandModel.from_dict(data, source=path.stem)
