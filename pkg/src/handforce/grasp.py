"""Grasp matrix, contact frames, friction-cone checks and force decomposition.

All forces are expressed in the world frame unless a name says ``local``. In
a contact frame the z axis is the *inward* surface normal, so a compressive
contact force has positive local z.
"""

from dataclasses import dataclass

import numpy as np

from .so3 import skew

GRAVITY = 9.81
_REF_SWITCH = 0.9


@dataclass(frozen=True)
class FrictionParams:
    mu: float
    f_n_min: float
    f_n_max: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 0 <= self.f_n_min < self.f_n_max:
            raise ValueError(f"need 0 <= f_n_min < f_n_max, got {self.f_n_min}, {self.f_n_max}")


@dataclass
class GraspState:
    """Contacts on an object, all in world coordinates.

    ``normals`` are outward unit surface normals.
    """

    points: np.ndarray
    normals: np.ndarray
    center: np.ndarray
    rotation: np.ndarray = None
    mass: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        self.center = np.asarray(self.center, dtype=float)
        if self.rotation is None:
            self.rotation = np.eye(3)
        if len(self.points) < 3:
            raise ValueError("a grasp needs at least 3 contacts")
        if self.normals.shape != self.points.shape:
            raise ValueError("need one normal per contact point")
        if np.abs(np.linalg.norm(self.normals, axis=1) - 1.0).max() > 1e-10:
            raise ValueError("contact normals must be unit vectors")
        gaps = np.linalg.norm(self.points[:, None] - self.points[None], axis=-1)
        if np.any(gaps[np.triu_indices(len(self.points), 1)] == 0.0):
            raise ValueError("contact points must be distinct")

    @property
    def m(self):
        return len(self.points)

    @property
    def offsets(self):
        """Vectors from the object center to each contact."""
        return self.points - self.center

    def frames(self):
        return np.stack([contact_frame(n) for n in self.normals])


def grasp_matrix_from_points(points, center):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    m = len(points)
    G = np.zeros((6, 3 * m))
    for i, r in enumerate(points - np.asarray(center, dtype=float)):
        G[:3, 3 * i:3 * i + 3] = np.eye(3)
        G[3:, 3 * i:3 * i + 3] = skew(r)
    return G


def grasp_matrix(gs):
    """Map stacked world contact forces (3m,) to the object wrench (force, moment about center)."""
    return grasp_matrix_from_points(gs.points, gs.center)


def contact_frame(normal):
    """Deterministic contact frame whose third column is the inward normal ``-normal``.

    The tangential axes come from Gram-Schmidt against the world x axis,
    switching to the y axis when ``|normal . x| > 0.9``.
    """
    n = np.asarray(normal, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("contact normal must be a nonzero finite vector")
    z = -n / norm
    ref = np.array([1.0, 0.0, 0.0])
    if abs(z @ ref) > _REF_SWITCH:
        ref = np.array([0.0, 1.0, 0.0])
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    return np.column_stack([x, np.cross(z, x), z])


def to_local(f_world, frames):
    f = np.asarray(f_world, dtype=float).reshape(-1, 3)
    return np.einsum("mji,mj->mi", frames, f)


def to_world(f_local, frames):
    f = np.asarray(f_local, dtype=float).reshape(-1, 3)
    return np.einsum("mij,mj->mi", frames, f).ravel()


def decompose_force(f_world, frames):
    """Inward-normal component and tangential magnitude per contact."""
    local = to_local(f_world, frames)
    return local[:, 2].copy(), np.hypot(local[:, 0], local[:, 1])


@dataclass(frozen=True)
class ConeMargin:
    tangential: np.ndarray
    mu_fz: np.ndarray
    ratio: np.ndarray
    cone_violated: np.ndarray
    below_min: np.ndarray
    above_max: np.ndarray

    @property
    def ok(self):
        return not (self.cone_violated.any() or self.below_min.any() or self.above_max.any())

    def violations(self):
        """Finger indices per violated constraint group (empty dict when ok)."""
        out = {}
        for name in ("cone_violated", "below_min", "above_max"):
            idx = np.flatnonzero(getattr(self, name))
            if idx.size:
                out[name] = idx.tolist()
        return out


def cone_margin(f_local, fp, tol=0.0):
    """Friction-cone and normal-range check per contact.

    ``ratio`` is tangential / (mu f_z) for f_z > 0 and infinity otherwise.
    Violations are flagged only beyond ``tol`` (newtons).
    """
    f = np.asarray(f_local, dtype=float).reshape(-1, 3)
    tang = np.hypot(f[:, 0], f[:, 1])
    fz = f[:, 2]
    mu_fz = fp.mu * fz
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(fz > 0, tang / np.where(fz > 0, mu_fz, 1.0), np.inf)
    return ConeMargin(
        tangential=tang,
        mu_fz=mu_fz,
        ratio=ratio,
        cone_violated=tang > mu_fz + tol,
        below_min=fz < fp.f_n_min - tol,
        above_max=fz > fp.f_n_max + tol,
    )


def gravity_wrench(mass, gravity_dir=(0.0, 0.0, -1.0), g=GRAVITY):
    """Gravity wrench about the center of mass: ``(m g d, 0)``."""
    d = np.asarray(gravity_dir, dtype=float)
    d = d / np.linalg.norm(d)
    return np.concatenate([mass * g * d, np.zeros(3)])
