# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner-loop kernels. Same signatures as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt

cnp.import_array()


cdef inline void _rodrigues(double x, double y, double z, double angle, double[:, ::1] out) noexcept nogil:
    cdef double c = cos(angle)
    cdef double s = sin(angle)
    cdef double v = 1.0 - c
    out[0, 0] = c + x * x * v
    out[0, 1] = x * y * v - z * s
    out[0, 2] = x * z * v + y * s
    out[1, 0] = y * x * v + z * s
    out[1, 1] = c + y * y * v
    out[1, 2] = y * z * v - x * s
    out[2, 0] = z * x * v - y * s
    out[2, 1] = z * y * v + x * s
    out[2, 2] = c + z * z * v


def hand_fk(base_rot, base_pos, axes, offsets, q):
    cdef double[:, :, ::1] brot = np.ascontiguousarray(base_rot, dtype=np.float64)
    cdef double[:, ::1] bpos = np.ascontiguousarray(base_pos, dtype=np.float64)
    cdef double[:, :, ::1] ax = np.ascontiguousarray(axes, dtype=np.float64)
    cdef double[:, :, ::1] off = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef double[:, ::1] qq = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t m = qq.shape[0]
    cdef Py_ssize_t n = qq.shape[1]

    tip_pos_a = np.empty((m, 3))
    tip_rot_a = np.empty((m, 3, 3))
    joint_pos_a = np.empty((m, n, 3))
    joint_axis_a = np.empty((m, n, 3))
    jac_pos_a = np.empty((m, 3, n))
    jac_rot_a = np.empty((m, 3, n))
    cdef double[:, ::1] tip_pos = tip_pos_a
    cdef double[:, :, ::1] tip_rot = tip_rot_a
    cdef double[:, :, ::1] joint_pos = joint_pos_a
    cdef double[:, :, ::1] joint_axis = joint_axis_a
    cdef double[:, :, ::1] jac_pos = jac_pos_a
    cdef double[:, :, ::1] jac_rot = jac_rot_a

    cdef double[:, ::1] rot = np.empty((3, 3))
    cdef double[:, ::1] tmp = np.empty((3, 3))
    cdef double[:, ::1] jr = np.empty((3, 3))
    cdef double p[3]
    cdef double lx, ly, lz, ax0, ax1, ax2
    cdef Py_ssize_t f, j, r, c, k
    cdef double acc

    with nogil:
        for f in range(m):
            for r in range(3):
                p[r] = bpos[f, r]
                for c in range(3):
                    rot[r, c] = brot[f, r, c]
            for j in range(n):
                for r in range(3):
                    p[r] += rot[r, 0] * off[f, j, 0] + rot[r, 1] * off[f, j, 1] + rot[r, 2] * off[f, j, 2]
                    joint_pos[f, j, r] = p[r]
                    joint_axis[f, j, r] = rot[r, 0] * ax[f, j, 0] + rot[r, 1] * ax[f, j, 1] + rot[r, 2] * ax[f, j, 2]
                _rodrigues(ax[f, j, 0], ax[f, j, 1], ax[f, j, 2], qq[f, j], jr)
                for r in range(3):
                    for c in range(3):
                        acc = 0.0
                        for k in range(3):
                            acc = acc + rot[r, k] * jr[k, c]
                        tmp[r, c] = acc
                for r in range(3):
                    for c in range(3):
                        rot[r, c] = tmp[r, c]
            for r in range(3):
                tip_pos[f, r] = p[r] + rot[r, 0] * off[f, n, 0] + rot[r, 1] * off[f, n, 1] + rot[r, 2] * off[f, n, 2]
                for c in range(3):
                    tip_rot[f, r, c] = rot[r, c]
            for j in range(n):
                lx = tip_pos[f, 0] - joint_pos[f, j, 0]
                ly = tip_pos[f, 1] - joint_pos[f, j, 1]
                lz = tip_pos[f, 2] - joint_pos[f, j, 2]
                ax0 = joint_axis[f, j, 0]
                ax1 = joint_axis[f, j, 1]
                ax2 = joint_axis[f, j, 2]
                jac_pos[f, 0, j] = ax1 * lz - ax2 * ly
                jac_pos[f, 1, j] = ax2 * lx - ax0 * lz
                jac_pos[f, 2, j] = ax0 * ly - ax1 * lx
                jac_rot[f, 0, j] = ax0
                jac_rot[f, 1, j] = ax1
                jac_rot[f, 2, j] = ax2
    return tip_pos_a, tip_rot_a, joint_pos_a, joint_axis_a, jac_pos_a, jac_rot_a


def contact_wrench(obj_pos, obj_rot, anchors, frames, tips, stiffness, double mu, gravity_force):
    cdef double[::1] op = np.ascontiguousarray(obj_pos, dtype=np.float64)
    cdef double[:, ::1] orot = np.ascontiguousarray(obj_rot, dtype=np.float64)
    cdef double[:, ::1] anc = np.ascontiguousarray(anchors, dtype=np.float64)
    cdef double[:, :, ::1] frm = np.ascontiguousarray(frames, dtype=np.float64)
    cdef double[:, ::1] tp = np.ascontiguousarray(tips, dtype=np.float64)
    cdef double[:, ::1] kk = np.ascontiguousarray(stiffness, dtype=np.float64)
    cdef double[::1] grav = np.ascontiguousarray(gravity_force, dtype=np.float64)
    cdef Py_ssize_t m = anc.shape[0]

    wrench_a = np.zeros(6)
    forces_a = np.zeros((m, 3))
    local_a = np.zeros((m, 3))
    demand_a = np.zeros((m, 3))
    active_a = np.zeros(m, dtype=bool)
    slipping_a = np.zeros(m, dtype=bool)
    cdef double[::1] wrench = wrench_a
    cdef double[:, ::1] forces = forces_a
    cdef double[:, ::1] local = local_a
    cdef double[:, ::1] demand = demand_a
    cdef cnp.npy_bool[::1] active = active_a
    cdef cnp.npy_bool[::1] slipping = slipping_a

    cdef double aw[3]
    cdef double lever[3]
    cdef double d[3]
    cdef double fw[3][3]
    cdef double dl[3]
    cdef double fl[3]
    cdef double tang, cap, scale
    cdef Py_ssize_t i, r, c, k

    with nogil:
        for r in range(3):
            wrench[r] = grav[r]
        for i in range(m):
            for r in range(3):
                lever[r] = orot[r, 0] * anc[i, 0] + orot[r, 1] * anc[i, 1] + orot[r, 2] * anc[i, 2]
                aw[r] = op[r] + lever[r]
                d[r] = tp[i, r] - aw[r]
                for c in range(3):
                    fw[r][c] = 0.0
                    for k in range(3):
                        fw[r][c] += orot[r, k] * frm[i, k, c]
            for c in range(3):
                dl[c] = fw[0][c] * d[0] + fw[1][c] * d[1] + fw[2][c] * d[2]
            if dl[2] <= 0.0:
                continue
            active[i] = True
            for c in range(3):
                demand[i, c] = kk[i, c] * dl[c]
                fl[c] = demand[i, c]
            tang = sqrt(fl[0] * fl[0] + fl[1] * fl[1])
            cap = mu * fl[2]
            if tang > cap:
                slipping[i] = True
                scale = cap / tang
                fl[0] *= scale
                fl[1] *= scale
            for c in range(3):
                local[i, c] = fl[c]
            for r in range(3):
                forces[i, r] = fw[r][0] * fl[0] + fw[r][1] * fl[1] + fw[r][2] * fl[2]
                wrench[r] += forces[i, r]
            wrench[3] += lever[1] * forces[i, 2] - lever[2] * forces[i, 1]
            wrench[4] += lever[2] * forces[i, 0] - lever[0] * forces[i, 2]
            wrench[5] += lever[0] * forces[i, 1] - lever[1] * forces[i, 0]
    return wrench_a, forces_a, local_a, demand_a, active_a, slipping_a
