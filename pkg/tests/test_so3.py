import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from handforce import so3
from handforce.motion_mapper import so3_log

rotvecs = arrays(np.float64, 3, elements=st.floats(-3.0, 3.0))


def _fd_right(fun, w, h=1e-6):
    # d/dd log(exp(w)^T exp(w + d)) at d = 0
    base = so3.exp(w)
    cols = []
    for k in range(3):
        d = np.zeros(3)
        d[k] = h
        cols.append((so3.log(base.T @ fun(w + d)) - so3.log(base.T @ fun(w - d))) / (2 * h))
    return np.column_stack(cols)


class TestLog:
    def test_identity(self):
        np.testing.assert_array_equal(so3_log(np.eye(3)), np.zeros(3))

    def test_quarter_turn_about_z(self):
        rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(so3_log(rot), [0, 0, np.pi / 2], atol=1e-15)

    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError, match="not a rotation"):
            so3_log(np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(ValueError):
            so3_log(2 * np.eye(3))

    @pytest.mark.parametrize("angle", [np.pi, np.pi - 1e-6, np.pi - 1e-3])
    def test_near_half_turn(self, angle):
        axis = np.array([1.0, 2.0, -2.0]) / 3.0
        w = so3.log(so3.exp(angle * axis))
        assert np.isclose(np.linalg.norm(w), angle, atol=1e-9)
        np.testing.assert_allclose(so3.exp(w), so3.exp(angle * axis), atol=1e-9)

    @given(rotvecs)
    def test_round_trip(self, w):
        rot = so3.exp(w)
        assert np.linalg.norm(so3.log(rot.T @ rot)) <= 1e-12
        np.testing.assert_allclose(so3.exp(so3.log(rot)), rot, atol=1e-10)

    @given(rotvecs)
    def test_matches_scipy(self, w):
        rot = Rotation.from_rotvec(w).as_matrix()
        np.testing.assert_allclose(so3.exp(w), rot, atol=1e-12)
        np.testing.assert_allclose(so3.log(rot), Rotation.from_matrix(rot).as_rotvec(), atol=1e-8)


class TestJacobians:
    @given(arrays(np.float64, 3, elements=st.floats(-2.5, 2.5)))
    def test_right_jacobian(self, w):
        np.testing.assert_allclose(so3.jac_right(w), _fd_right(so3.exp, w), atol=1e-6)

    @given(arrays(np.float64, 3, elements=st.floats(-2.5, 2.5)))
    def test_inverses(self, w):
        np.testing.assert_allclose(so3.jac_right(w) @ so3.jac_right_inv(w), np.eye(3), atol=1e-10)
        np.testing.assert_allclose(so3.jac_left(w) @ so3.jac_left_inv(w), np.eye(3), atol=1e-10)

    def test_small_angle_branch_is_continuous(self):
        w = np.array([1.0, -2.0, 0.5])
        w *= 1e-5 / np.linalg.norm(w)
        for fn in (so3.jac_right, so3.jac_left, so3.jac_left_inv, so3.jac_right_inv):
            np.testing.assert_allclose(fn(w * (1 - 1e-9)), fn(w * (1 + 1e-9)), atol=1e-12)

    def test_left_right_relation(self, rng):
        w = rng.normal(size=3)
        np.testing.assert_allclose(so3.jac_left(w), so3.exp(w) @ so3.jac_right(w), atol=1e-12)


def test_skew_vee(rng):
    a, b = rng.normal(size=(2, 3))
    np.testing.assert_allclose(so3.skew(a) @ b, np.cross(a, b), atol=1e-15)
    np.testing.assert_allclose(so3.vee(so3.skew(a)), a, atol=1e-15)


def test_interpolate_endpoints(rng):
    ra, rb = so3.exp(rng.normal(size=3)), so3.exp(rng.normal(size=3))
    np.testing.assert_allclose(so3.interpolate(ra, rb, 0.0), ra, atol=1e-12)
    np.testing.assert_allclose(so3.interpolate(ra, rb, 1.0), rb, atol=1e-10)
    half = so3.interpolate(ra, rb, 0.5)
    assert np.isclose(so3.angle_between(ra, half), so3.angle_between(half, rb), atol=1e-10)
