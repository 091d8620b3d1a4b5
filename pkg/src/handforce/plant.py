"""Quasi-static compliant-contact plant.

Stands in for the physical hand, object and camera. Each fingertip is tied
to an anchor fixed on the object surface by an anisotropic spring expressed
in the contact frame; the tangential spring force is capped by Coulomb
friction. A step moves the fingertips to ``FK(q_cmd)`` and solves for the
object pose at which contact forces and gravity balance.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import so3
from .errors import PlantError
from .grasp import GRAVITY, contact_frame
from .kernels import get_backend

RUNAWAY = 0.02  # m of travel away from the fingertip-carried pose treated as a drop


@dataclass(frozen=True)
class ObjectGeometry:
    """Cylinder (axis along object z) or ellipsoid centred at the object origin."""

    kind: str
    radii: tuple
    height: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cylinder", "ellipsoid", "none"):
            raise ValueError(f"unknown geometry {self.kind!r}")
        if self.kind == "cylinder" and (len(self.radii) != 1 or self.radii[0] <= 0 or self.height <= 0):
            raise ValueError("a cylinder needs one positive radius and a positive height")
        if self.kind == "ellipsoid" and (len(self.radii) != 3 or min(self.radii) <= 0):
            raise ValueError("an ellipsoid needs three positive radii")

    def surface_point(self, angle, height):
        """Object-frame point and outward normal at azimuth ``angle`` (rad) and object-frame ``height``."""
        c, s = np.cos(angle), np.sin(angle)
        if self.kind == "cylinder":
            if abs(height) >= self.height / 2:
                raise ValueError("contact height outside the cylinder wall")
            r = self.radii[0]
            return np.array([r * c, r * s, height]), np.array([c, s, 0.0])
        if self.kind == "ellipsoid":
            a, b, h = self.radii
            if abs(height) >= h:
                raise ValueError("contact height outside the ellipsoid")
            k = np.sqrt(1.0 - (height / h) ** 2)
            p = np.array([a * k * c, b * k * s, height])
            n = p / np.array([a, b, h]) ** 2
            return p, n / np.linalg.norm(n)
        raise ValueError("geometry 'none' has no surface")


@dataclass(frozen=True)
class PlantConfig:
    geometry: ObjectGeometry
    mass: float
    stiffness: tuple  # N/mm along local x, y, z
    mu: float = 0.65
    deformation_threshold: float = np.inf  # N
    threshold_per_kg: Optional[float] = None  # fill-dependent wall strength, overrides the fixed threshold
    noise_pos: float = 0.0  # m
    noise_rot: float = 0.0  # rad
    gravity_dir: tuple = (0.0, 0.0, -1.0)
    tol: float = 1e-9
    max_iter: int = 500

    def __post_init__(self):
        if len(self.stiffness) != 3 or min(self.stiffness) <= 0:
            raise ValueError("stiffness must be three positive values")
        if self.mass < 0:
            raise ValueError("mass must be non-negative")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.noise_pos < 0 or self.noise_rot < 0:
            raise ValueError("noise std must be non-negative")
        g = np.asarray(self.gravity_dir, dtype=float)
        if g.shape != (3,) or abs(np.linalg.norm(g) - 1.0) > 1e-9:
            raise ValueError("gravity direction must be a unit 3-vector")

    @property
    def stiffness_si(self):
        return np.asarray(self.stiffness, dtype=float) * 1e3

    @property
    def threshold(self):
        if self.threshold_per_kg is not None:
            return self.threshold_per_kg * self.mass
        return self.deformation_threshold

    @property
    def gravity_force(self):
        return self.mass * GRAVITY * np.asarray(self.gravity_dir, dtype=float)


@dataclass
class PlantState:
    object_position: np.ndarray
    object_rotation: np.ndarray
    anchors: np.ndarray  # (m, 3) object frame
    frames: np.ndarray  # (m, 3, 3) object frame, z = inward normal
    tips: np.ndarray  # (m, 3) world
    forces: np.ndarray = None  # (m, 3) world
    forces_local: np.ndarray = None
    demand_local: np.ndarray = None
    active: np.ndarray = None
    slip: np.ndarray = None  # per finger
    deformation: np.ndarray = None  # per finger
    drop: bool = False
    residual: float = 0.0
    iterations: int = 0
    threshold: float = np.inf
    energy: float = 0.0

    def __post_init__(self):
        m = len(self.anchors)
        self.anchors = np.asarray(self.anchors, dtype=float).reshape(m, 3)
        self.frames = np.asarray(self.frames, dtype=float).reshape(m, 3, 3)
        self.tips = np.asarray(self.tips, dtype=float).reshape(m, 3)
        for name in ("forces", "forces_local", "demand_local"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros((m, 3)))
        for name in ("active", "slip", "deformation"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(m, dtype=bool))

    @property
    def m(self):
        return len(self.anchors)

    @property
    def pose(self):
        return self.object_position, self.object_rotation

    @property
    def penetration(self):
        """Normal penetration depth (m) per contact; zero where inactive."""
        return np.where(self.active, self.demand_local[:, 2], 0.0) if self.demand_local is not None else np.zeros(self.m)

    @property
    def failed(self):
        return bool(self.slip.any() or self.deformation.any() or self.drop)

    def contact_points(self):
        """World positions of the anchors (the current contact points)."""
        return self.object_position + self.anchors @ self.object_rotation.T

    def contact_normals(self):
        """Outward world normals at the anchors."""
        return -(self.object_rotation @ self.frames[:, :, 2].T).T


def initial_state(position, rotation, anchors, normals_obj, tips=None):
    """Plant state with anchors at object-frame contact points; tips default to the anchors."""
    frames = np.stack([contact_frame(n) for n in np.asarray(normals_obj, dtype=float)])
    position = np.asarray(position, dtype=float)
    rotation = np.asarray(rotation, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    if tips is None:
        tips = position + anchors @ rotation.T
    return PlantState(position, rotation, anchors, frames, tips)


def _kabsch(a, b):
    """Rotation and translation best mapping point set ``a`` onto ``b``."""
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    u, _, vt = np.linalg.svd((a - ca).T @ (b - cb))
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return rot, cb - rot @ ca


def plant_step(state, q_cmd, model, cfg, backend=None):
    """Move fingertips to ``FK(q_cmd)`` and settle the object quasi-statically.

    The object pose is found by damped Newton iteration on the net wrench
    (central-difference Jacobian), converging when the wrench norm is below
    ``cfg.tol``. Slipping contacts have their anchors dragged so the
    tangential demand sits on the friction cap.

    Raises ``PlantError`` if the iteration fails without any contact
    slipping; with slip or fewer than three active contacts the object is
    reported dropped instead.
    """
    kern = get_backend(backend)
    tips = model.kinematics(q_cmd, backend=backend).tip_pos
    k = np.tile(cfg.stiffness_si, (state.m, 1))
    grav = cfg.gravity_force
    anchors = state.anchors.copy()
    frames = state.frames

    def wrench(p, rot):
        return kern.contact_wrench(p, rot, anchors, frames, tips, k, cfg.mu, grav)

    # initial guess: carry the object with the fingertips
    rot_fit, t_fit = _kabsch(state.tips, tips)
    p0 = rot_fit @ state.object_position + t_fit
    r0 = rot_fit @ state.object_rotation
    if np.linalg.norm(wrench(p0, r0)[0]) > np.linalg.norm(wrench(state.object_position, state.object_rotation)[0]):
        p0, r0 = state.object_position.copy(), state.object_rotation.copy()

    p, rot = p0, r0
    res = wrench(p, rot)
    norm = np.linalg.norm(res[0])
    it = 0
    h = 1e-7
    while norm >= cfg.tol and it < cfg.max_iter:
        it += 1
        jac = np.zeros((6, 6))
        for j in range(6):
            d = np.zeros(6)
            d[j] = h
            wp = wrench(p + d[:3], so3.exp(d[3:]) @ rot)[0]
            wm = wrench(p - d[:3], so3.exp(-d[3:]) @ rot)[0]
            jac[:, j] = (wp - wm) / (2 * h)
        step, *_ = np.linalg.lstsq(jac, -res[0], rcond=1e-12)
        # backtracking on the wrench norm
        t = 1.0
        while t > 1e-6:
            pt, rt = p + t * step[:3], so3.exp(t * step[3:]) @ rot
            rt_res = wrench(pt, rt)
            if np.linalg.norm(rt_res[0]) < norm:
                break
            t *= 0.5
        else:
            break
        p, rot, res = pt, rt, rt_res
        norm = np.linalg.norm(res[0])
        if np.linalg.norm(p - p0) > RUNAWAY:
            break

    _, forces, local, demand, active, slipping = res
    converged = norm < cfg.tol
    runaway = np.linalg.norm(p - p0) > RUNAWAY
    drop = bool(active.sum() < 3 or runaway or (not converged and slipping.any()))
    if not converged and not drop:
        raise PlantError(f"equilibrium not found after {it} iterations (residual {norm:.3e})", norm)

    # drag slipping anchors so their tangential demand equals the friction cap
    for i in np.flatnonzero(slipping):
        tang = demand[i, :2]
        keep = cfg.mu * demand[i, 2] / np.linalg.norm(tang)
        shift_local = np.array([*(tang * (1.0 - keep) / k[i, :2]), 0.0])
        anchors[i] += frames[i] @ shift_local
    d_local = np.einsum("mji,mj->mi", rot @ frames, tips - (p + anchors @ rot.T))
    energy = float(0.5 * np.sum(np.where(active[:, None], k * d_local**2, 0.0)))

    threshold = cfg.threshold
    return PlantState(
        object_position=p,
        object_rotation=rot,
        anchors=anchors,
        frames=frames,
        tips=tips,
        forces=forces,
        forces_local=local,
        demand_local=demand,
        active=active,
        slip=np.asarray(slipping, dtype=bool),
        deformation=active & (local[:, 2] > threshold),
        drop=drop,
        residual=float(norm),
        iterations=it,
        threshold=threshold,
        energy=energy,
    )


def observe(state, cfg, rng=None):
    """Object pose with zero-mean Gaussian noise; ``rng`` is a seed or ``Generator``."""
    rng = np.random.default_rng(rng)
    p = state.object_position + rng.normal(0.0, cfg.noise_pos, 3) if cfg.noise_pos > 0 else state.object_position.copy()
    if cfg.noise_rot > 0:
        return p, so3.exp(rng.normal(0.0, cfg.noise_rot, 3)) @ state.object_rotation
    return p, state.object_rotation.copy()


@dataclass(frozen=True)
class FailureReport:
    slip: list = field(default_factory=list)
    deformation: list = field(default_factory=list)
    drop: bool = False
    cone_ratio: np.ndarray = None
    normal_margin: np.ndarray = None  # threshold - normal force

    @property
    def ok(self):
        return not (self.slip or self.deformation or self.drop)

    def to_record(self):
        return {"slip": self.slip, "deformation": self.deformation, "drop": self.drop}


def check_failures(state, fp, threshold=None):
    """Slip, deformation and drop flags with offending finger indices.

    Slip compares the tangential spring demand with ``fp.mu`` times the
    normal force; deformation compares the normal force with ``threshold``
    (default: the state's threshold when finite, else ``fp.f_n_max``).
    """
    if threshold is None:
        threshold = state.threshold if np.isfinite(state.threshold) else fp.f_n_max
    demand = state.demand_local
    normal = np.where(state.active, state.forces_local[:, 2], 0.0)
    tang = np.hypot(demand[:, 0], demand[:, 1])
    cap = fp.mu * normal
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cap > 0, tang / np.where(cap > 0, cap, 1.0), np.where(tang > 0, np.inf, 0.0))
    slip = np.flatnonzero(state.active & (tang > cap * (1 + 1e-9)) | state.slip)
    deform = np.flatnonzero(normal > threshold)
    return FailureReport(
        slip=slip.tolist(),
        deformation=deform.tolist(),
        drop=bool(state.drop),
        cone_ratio=ratio,
        normal_margin=threshold - normal,
    )


def with_noise(cfg, noise_pos=None, noise_rot=None):
    return replace(
        cfg,
        noise_pos=cfg.noise_pos if noise_pos is None else noise_pos,
        noise_rot=cfg.noise_rot if noise_rot is None else noise_rot,
    )
