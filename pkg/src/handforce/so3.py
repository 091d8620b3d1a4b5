"""SO(3) helpers: hat/vee, exponential and logarithm maps, and their Jacobians.

Conventions (``[w]`` is the skew matrix of ``w``)::

    exp(w + d) ~= exp(w) @ exp(jac_right(w) @ d)
    exp(w + d) ~= exp(jac_left(w) @ d) @ exp(w)
    log(exp(e) @ exp(d)) ~= e + jac_right_inv(e) @ d
    log(exp(d) @ exp(e)) ~= e + jac_left_inv(e) @ d
"""

import numpy as np

_SMALL = 1e-8
_ROT_TOL = 1e-8


def skew(v):
    """Skew-symmetric matrix such that ``skew(a) @ b == cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m):
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) * 0.5


def is_rotation(rot, tol=_ROT_TOL):
    rot = np.asarray(rot, dtype=float)
    if rot.shape != (3, 3) or not np.all(np.isfinite(rot)):
        return False
    return bool(np.abs(rot.T @ rot - np.eye(3)).max() <= tol and abs(np.linalg.det(rot) - 1.0) <= tol)


def exp(w):
    """Rotation matrix for the rotation vector ``w``."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    k = skew(w)
    if theta < _SMALL:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * k + b * (k @ k)


def log(rot):
    """Rotation vector of ``rot`` with norm in ``[0, pi]``.

    Raises
    ------
    ValueError
        If ``rot`` is not orthonormal with unit determinant (tolerance 1e-8).
    """
    rot = np.asarray(rot, dtype=float)
    if not is_rotation(rot):
        raise ValueError("so3 log: input is not a rotation matrix")
    cos_t = np.clip((np.trace(rot) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(cos_t)
    if theta < 1e-6:
        # first-order series: vee(R - R^T)/2 * (1 + theta^2/6)
        return vee(rot) * (1.0 + theta**2 / 6.0)
    if np.pi - theta < 1e-4:
        # near pi the antisymmetric part vanishes; the symmetric part is cos I + (1 - cos) a a^T
        outer = (0.5 * (rot + rot.T) - cos_t * np.eye(3)) / (1.0 - cos_t)
        col = int(np.argmax(np.diag(outer)))
        axis = outer[:, col] / np.sqrt(max(outer[col, col], 1e-300))
        axis /= np.linalg.norm(axis)
        # fix the sign with the (small) antisymmetric part
        if np.dot(vee(rot), axis) < 0.0:
            axis = -axis
        return axis * theta
    return vee(rot) * (theta / np.sin(theta))


def _coeffs(w):
    theta = np.linalg.norm(w)
    if theta < 1e-5:
        return theta, 0.5 - theta**2 / 24.0, 1.0 / 6.0 - theta**2 / 120.0
    return theta, (1.0 - np.cos(theta)) / theta**2, (theta - np.sin(theta)) / theta**3


def jac_right(w):
    _, a, b = _coeffs(w)
    k = skew(w)
    return np.eye(3) - a * k + b * (k @ k)


def jac_left(w):
    _, a, b = _coeffs(w)
    k = skew(w)
    return np.eye(3) + a * k + b * (k @ k)


def _inv_coeff(w):
    theta = np.linalg.norm(w)
    if theta < 1e-5:
        return 1.0 / 12.0 + theta**2 / 720.0
    return 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))


def jac_left_inv(w):
    k = skew(w)
    return np.eye(3) - 0.5 * k + _inv_coeff(w) * (k @ k)


def jac_right_inv(w):
    k = skew(w)
    return np.eye(3) + 0.5 * k + _inv_coeff(w) * (k @ k)


def interpolate(rot_a, rot_b, s):
    """Geodesic interpolation from ``rot_a`` (s=0) to ``rot_b`` (s=1)."""
    return rot_a @ exp(s * log(rot_a.T @ rot_b))


def angle_between(rot_a, rot_b):
    return float(np.linalg.norm(log(rot_a.T @ rot_b)))
