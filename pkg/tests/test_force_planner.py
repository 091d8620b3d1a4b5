import numpy as np
import pytest
from scipy.linalg import null_space

from handforce.errors import GraspDegeneracyError, InfeasiblePlanError, RigidityError, SingularityError
from handforce.force_planner import (
    PlannerInputs,
    framework_for,
    friction_internal_force,
    friction_problem,
    operational_force,
    plan_contact_forces,
    rigidity_internal_force,
    rigidity_internal_force_qp,
)
from handforce.grasp import FrictionParams, GraspState, cone_margin, grasp_matrix, gravity_wrench, to_local
from handforce.optimizer import gradient_errors
from handforce.rigidity import ContactFramework, rigidity_matrix, rigidity_matrix_rate, trivial_motions

from conftest import side_grasp


def _spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T / n + 0.1 * np.eye(n)


def kkt_route(R, R_dot, M_c, v_c, alpha):
    """Independent oracle: solve the constrained-acceleration KKT system by least squares."""
    n, k = len(alpha), len(R)
    kkt = np.block([[M_c, R.T], [R, np.zeros((k, k))]])
    rhs = np.concatenate([M_c @ alpha, -R_dot @ v_c])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return M_c @ (alpha - sol[:n])


def random_instance(rng):
    """Random rigid framework moving rigidly (the planner's regime), arbitrary alpha.

    For m >= 5 the complete graph has redundant rows; a rigid v keeps
    R_dot v inside range(R) so the acceleration constraint stays consistent.
    """
    m = int(rng.integers(3, 7))
    fw = ContactFramework(rng.normal(size=(m, 3)), check=False)
    R = rigidity_matrix(fw)
    v = trivial_motions(fw.points).T @ rng.normal(size=6)
    return R, rigidity_matrix_rate(fw, v), _spd(rng, 3 * m), v, rng.normal(size=3 * m)


def inputs(gs, fp, mass=None, v_c=None, alpha=None, M_c=None, edges=None):
    m = gs.m
    return PlannerInputs(
        grasp=gs,
        framework=framework_for(gs, edges),
        friction=fp,
        g_o=gravity_wrench(gs.mass if mass is None else mass),
        M_c=0.01 * np.eye(3 * m) if M_c is None else M_c,
        v_c=np.zeros(3 * m) if v_c is None else v_c,
        alpha=np.zeros(3 * m) if alpha is None else alpha,
    )


class TestOperationalForce:
    def test_zero_load(self, cup_grasp):
        np.testing.assert_array_equal(operational_force(grasp_matrix(cup_grasp), np.zeros(6)), 0.0)

    def test_cup_weight_split(self):
        gs = side_grasp(mass=0.053, heights=(0, 0, 0, 0))
        G = grasp_matrix(gs)
        g_o = np.array([0, 0, -0.52, 0, 0, 0])
        f = operational_force(G, g_o).reshape(4, 3)
        assert f[:, 2].sum() == pytest.approx(0.52, abs=1e-12)
        np.testing.assert_allclose(f, -(np.linalg.pinv(G) @ g_o).reshape(4, 3), atol=1e-12)
        # symmetric contacts share the load equally with no horizontal component
        np.testing.assert_allclose(f[:, 2], 0.13, atol=1e-12)
        np.testing.assert_allclose(f[:, :2], 0.0, atol=1e-12)

    def test_minimum_norm(self, cup_grasp, rng):
        G = grasp_matrix(cup_grasp)
        g_o = gravity_wrench(0.053)
        f = operational_force(G, g_o)
        basis = null_space(G)
        for _ in range(200):
            other = f + basis @ rng.normal(size=basis.shape[1]) * 10 ** rng.uniform(-4, 0)
            np.testing.assert_allclose(G @ other, -g_o, atol=1e-12)
            assert np.linalg.norm(f) <= np.linalg.norm(other)

    def test_degenerate_grasp(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        gs = GraspState(pts, np.tile([0, 0, 1.0], (3, 1)), np.zeros(3))
        with pytest.raises(GraspDegeneracyError):
            operational_force(grasp_matrix(gs), np.zeros(6))


class TestRigidityInternalForce:
    def test_static(self, rng):
        R, R_dot, M_c, _, _ = random_instance(rng)
        n = R.shape[1]
        np.testing.assert_array_equal(rigidity_internal_force(R, R_dot, M_c, np.zeros(n), np.zeros(n)), 0.0)

    def test_uniform_translation(self, rng):
        fw = ContactFramework(rng.normal(size=(4, 3)))
        R = rigidity_matrix(fw)
        alpha = np.tile(rng.normal(size=3), 4)
        v = np.zeros(12)
        f = rigidity_internal_force(R, rigidity_matrix_rate(fw, v), _spd(rng, 12), v, alpha)
        np.testing.assert_allclose(f, 0.0, atol=1e-12)

    def test_closed_form_matches_kkt_oracle(self, rng):
        for _ in range(100):
            args = random_instance(rng)
            closed = rigidity_internal_force(*args)
            oracle = kkt_route(*args)
            assert np.linalg.norm(closed - oracle) <= 1e-6 * np.linalg.norm(oracle)
            qp = rigidity_internal_force_qp(*args)
            assert np.linalg.norm(closed - qp) <= 1e-6 * np.linalg.norm(qp)

    def test_rigid_component_of_alpha_is_ignored(self, rng):
        fw = ContactFramework(rng.normal(size=(4, 3)))
        R, v = rigidity_matrix(fw), rng.normal(size=12)
        R_dot, M_c, alpha = rigidity_matrix_rate(fw, v), _spd(rng, 12), rng.normal(size=12)
        base = rigidity_internal_force(R, R_dot, M_c, v, alpha)
        shifted = alpha + trivial_motions(fw.points).T @ rng.normal(size=6)
        np.testing.assert_allclose(R @ shifted, R @ alpha, atol=1e-12)
        assert np.abs(rigidity_internal_force(R, R_dot, M_c, v, shifted) - base).max() <= 1e-10

    def test_is_internal(self, rng):
        fw = ContactFramework(rng.normal(size=(5, 3)))
        R, v = rigidity_matrix(fw), rng.normal(size=15)
        f = rigidity_internal_force(R, rigidity_matrix_rate(fw, v), _spd(rng, 15), v, rng.normal(size=15))
        G = grasp_matrix(GraspState(fw.points, np.tile([0, 0, 1.0], (5, 1)), fw.points.mean(axis=0)))
        assert np.linalg.norm(G @ f) <= 1e-8

    def test_singular_inertia(self, rng):
        R, R_dot, _, v, a = random_instance(rng)
        with pytest.raises(SingularityError):
            rigidity_internal_force(R, R_dot, np.zeros((len(a), len(a))), v, a)


def squeeze_oracle(f_pre, frames, fp):
    """1-DOF reduction for a symmetric grasp: equal normal increment s, found by bisection on the derivative."""
    local = to_local(f_pre, frames)
    t2 = local[:, 0] ** 2 + local[:, 1] ** 2

    def slope(s):
        return -np.sum(t2 / (fp.mu**2 * (local[:, 2] + s) ** 3))

    lo = max(fp.f_n_min - local[:, 2].min(), 1e-9)
    hi = fp.f_n_max - local[:, 2].max()
    if slope(hi) <= 0:  # still descending at the upper bound: the bound is optimal
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if slope(mid) < 0 else (lo, mid)
    return 0.5 * (lo + hi)


class TestFrictionInternalForce:
    def test_inside_already_skips(self):
        # a plate resting on three fingertips: gravity alone loads every contact along its normal
        ang = np.radians([90, 210, 330])
        pts = np.column_stack([0.03 * np.cos(ang), 0.03 * np.sin(ang), np.full(3, -0.01)])
        gs = GraspState(pts, np.tile([0, 0, -1.0], (3, 1)), np.zeros(3), mass=0.05)
        plan = plan_contact_forces(inputs(gs, FrictionParams(0.5, 0.1, 1.0)))
        assert not plan.friction_solved
        np.testing.assert_array_equal(plan.f_int_mu, 0.0)
        np.testing.assert_allclose(plan.f_perp, 0.05 * 9.81 / 3, rtol=1e-12)

    def test_low_normal_force_gets_squeezed(self, cup_grasp, cup_friction):
        G, frames = grasp_matrix(cup_grasp), cup_grasp.frames()
        f_pre = operational_force(G, gravity_wrench(0.053))
        f_mu, rep = friction_internal_force(f_pre, G, frames, cup_friction)
        local = to_local(f_pre + f_mu, frames)
        tang = np.hypot(local[:, 0], local[:, 1])
        tol = 1e-6
        assert np.linalg.norm(G @ f_mu) <= 1e-8  # null space
        assert np.all(local[:, 2] > 0)  # positive normal
        assert np.all(tang <= cup_friction.mu * local[:, 2] + tol)  # friction cone
        assert np.all(local[:, 2] >= cup_friction.f_n_min - tol)  # lower bound
        assert np.all(local[:, 2] <= cup_friction.f_n_max + tol)  # upper bound
        assert np.all(to_local(f_mu, frames)[:, 2] > 0)  # every normal raised

    def test_symmetric_squeeze(self, cup_grasp, cup_friction):
        G, frames = grasp_matrix(cup_grasp), cup_grasp.frames()
        f_pre = operational_force(G, gravity_wrench(0.053))
        f_mu, _ = friction_internal_force(f_pre, G, frames, cup_friction)
        increments = to_local(f_mu, frames)[:, 2]
        np.testing.assert_allclose(increments, increments.mean(), atol=1e-6)
        assert increments.mean() == pytest.approx(squeeze_oracle(f_pre, frames, cup_friction), abs=1e-6)

    def test_infeasible_reports_constraints(self, cup_grasp):
        fp = FrictionParams(0.65, 0.01, 0.05)  # cannot hold 0.52 N of weight
        G, frames = grasp_matrix(cup_grasp), cup_grasp.frames()
        with pytest.raises(InfeasiblePlanError) as info:
            friction_internal_force(operational_force(G, gravity_wrench(0.053)), G, frames, fp)
        assert info.value.violations

    def test_gradient_audit(self, cup_grasp, cup_friction, rng):
        G, frames = grasp_matrix(cup_grasp), cup_grasp.frames()
        f_pre = operational_force(G, gravity_wrench(0.053))
        worst = 0.0
        for _ in range(20):
            x = (-cup_grasp.normals * rng.uniform(0.2, 0.6, (4, 1))).ravel() + rng.normal(0, 0.05, 12)
            prob = friction_problem(f_pre, G, frames, cup_friction, x)
            worst = max(worst, max(gradient_errors(prob, x).values()))
        assert worst <= 1e-4

    def test_zero_minimum_warns(self, cup_grasp):
        fp = FrictionParams(0.65, 0.0, 0.6)
        G, frames = grasp_matrix(cup_grasp), cup_grasp.frames()
        with pytest.warns(UserWarning, match="unbounded"):
            friction_internal_force(operational_force(G, gravity_wrench(0.053)), G, frames, fp)


class TestPlan:
    def test_weightless_static(self, cup_grasp):
        plan = plan_contact_forces(inputs(cup_grasp, FrictionParams(0.65, 0.0, 1.0), mass=0.0))
        np.testing.assert_array_equal(plan.f_c, 0.0)
        assert not plan.friction_solved

    def test_cup_plan_is_safe(self, cup_grasp, cup_friction):
        plan = plan_contact_forces(inputs(cup_grasp, cup_friction))
        assert plan.friction_solved
        assert plan.margins.ok
        assert plan.wrench_residual(gravity_wrench(0.053)) <= 1e-6
        G = plan.G
        assert np.linalg.norm(G @ plan.f_int_R) <= 1e-8 and np.linalg.norm(G @ plan.f_int_mu) <= 1e-8
        np.testing.assert_allclose(plan.f_c, plan.f_ope + plan.f_int_R + plan.f_int_mu, atol=1e-15)

    def test_moving_plan(self, cup_grasp, cup_friction, rng):
        plan = plan_contact_forces(inputs(cup_grasp, cup_friction, v_c=rng.normal(0, 0.01, 12),
                                          alpha=rng.normal(0, 0.01, 12)))
        assert np.linalg.norm(plan.f_int_R) > 0
        assert plan.margins.ok

    def test_non_rigid_framework(self, cup_grasp, cup_friction):
        with pytest.raises(RigidityError):
            plan_contact_forces(inputs(cup_grasp, cup_friction, edges=[(0, 1), (1, 2), (2, 3), (3, 0)]))

    def test_infeasible_plan(self, cup_grasp):
        with pytest.raises(InfeasiblePlanError):
            plan_contact_forces(inputs(cup_grasp, FrictionParams(0.65, 0.01, 0.05)))

    def test_record_round_trip(self, cup_grasp, cup_friction):
        rec = plan_contact_forces(inputs(cup_grasp, cup_friction)).to_record()
        assert set(rec) >= {"f_ope", "f_int_R", "f_int_mu", "f_c", "f_perp", "f_par", "cone_ratio"}
        assert len(rec["f_c"]) == 12

    def test_input_validation(self, cup_grasp, cup_friction):
        with pytest.raises(ValueError, match="v_c"):
            inputs(cup_grasp, cup_friction, v_c=np.zeros(3))
