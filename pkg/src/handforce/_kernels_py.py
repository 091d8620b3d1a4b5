"""Pure numpy implementations of the inner-loop kernels.

These mirror ``_kernels.pyx`` function for function and are used whenever the
compiled extension is unavailable (or ``HANDFORCE_PURE_PYTHON=1``).
"""

import numpy as np


def _rodrigues(axis, angle):
    # axis: (m, 3) unit vectors, angle: (m,)
    x, y, z = axis[:, 0], axis[:, 1], axis[:, 2]
    c = np.cos(angle)
    s = np.sin(angle)
    v = 1.0 - c
    rot = np.empty((axis.shape[0], 3, 3))
    rot[:, 0, 0] = c + x * x * v
    rot[:, 0, 1] = x * y * v - z * s
    rot[:, 0, 2] = x * z * v + y * s
    rot[:, 1, 0] = y * x * v + z * s
    rot[:, 1, 1] = c + y * y * v
    rot[:, 1, 2] = y * z * v - x * s
    rot[:, 2, 0] = z * x * v - y * s
    rot[:, 2, 1] = z * y * v + x * s
    rot[:, 2, 2] = c + z * z * v
    return rot


def hand_fk(base_rot, base_pos, axes, offsets, q):
    """Forward kinematics and Jacobians for ``m`` revolute chains of ``n`` joints.

    Parameters
    ----------
    base_rot : (m, 3, 3) array
    base_pos : (m, 3) array
    axes : (m, n, 3) array
        Joint axes in the frame preceding each joint.
    offsets : (m, n + 1, 3) array
        Translation applied before each joint; the last row is the fingertip offset.
    q : (m, n) array

    Returns
    -------
    tip_pos (m, 3), tip_rot (m, 3, 3), joint_pos (m, n, 3), joint_axis (m, n, 3),
    jac_pos (m, 3, n), jac_rot (m, 3, n)
    """
    base_rot = np.asarray(base_rot, dtype=float)
    m, n = q.shape
    rot = base_rot.copy()
    pos = np.asarray(base_pos, dtype=float).copy()
    joint_pos = np.empty((m, n, 3))
    joint_axis = np.empty((m, n, 3))
    for j in range(n):
        pos = pos + np.einsum("mij,mj->mi", rot, offsets[:, j])
        joint_pos[:, j] = pos
        joint_axis[:, j] = np.einsum("mij,mj->mi", rot, axes[:, j])
        rot = rot @ _rodrigues(axes[:, j], q[:, j])
    tip_pos = pos + np.einsum("mij,mj->mi", rot, offsets[:, n])
    lever = tip_pos[:, None, :] - joint_pos
    jac_pos = np.cross(joint_axis, lever).transpose(0, 2, 1)
    jac_rot = joint_axis.transpose(0, 2, 1).copy()
    return tip_pos, rot, joint_pos, joint_axis, jac_pos, jac_rot


def contact_wrench(obj_pos, obj_rot, anchors, frames, tips, stiffness, mu, gravity_force):
    """Net wrench on the object from anchored anisotropic contact springs.

    Each contact pushes only while the fingertip sits on the inward side of
    its anchor (local z > 0). Tangential force is capped by ``mu`` times the
    normal force.

    Returns
    -------
    wrench (6,), forces_world (m, 3), forces_local (m, 3), demand_local (m, 3),
    active (m,) bool, slipping (m,) bool
    """
    anchor_w = obj_pos + anchors @ obj_rot.T
    frames_w = np.einsum("ij,mjk->mik", obj_rot, frames)
    d_local = np.einsum("mji,mj->mi", frames_w, tips - anchor_w)
    demand = stiffness * d_local
    active = d_local[:, 2] > 0.0
    demand[~active] = 0.0
    local = demand.copy()
    tang = np.hypot(demand[:, 0], demand[:, 1])
    cap = mu * demand[:, 2]
    slipping = active & (tang > cap)
    scale = np.where(slipping, cap / np.where(tang > 0, tang, 1.0), 1.0)
    local[:, 0] *= scale
    local[:, 1] *= scale
    forces = np.einsum("mij,mj->mi", frames_w, local)
    moments = np.cross(anchor_w - obj_pos, forces)
    wrench = np.concatenate([forces.sum(axis=0) + gravity_force, moments.sum(axis=0)])
    return wrench, forces, local, demand, active, slipping
