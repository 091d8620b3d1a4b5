"""Closed-loop execution: initial grasp, MPC force-to-joint loop, yarn-frame traces and sweeps."""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import so3
from .config import load_scenario
from .errors import HandforceError, RigidityError, UnreachableError
from .force_planner import PlannerInputs, plan_contact_forces
from .grasp import cone_margin, gravity_wrench, to_local
from .hand_model import task_inertia
from .kernels import BACKEND
from .motion_mapper import penetration_world, solve_ik, solve_joint_trajectory, virtual_targets
from .optimizer import EqQP, solve_eq_qp
from .plant import check_failures, initial_state, observe, plant_step
from .rigidity import ContactFramework, is_infinitesimally_rigid, rigidity_matrix, trd
from .runlog import RunLog

IK_TOL = 1e-6
MARGIN_WARN_TOL = 1e-9


def nominal_q(hand):
    return 0.5 * (hand.joint_lower + hand.joint_upper)


@dataclass
class GraspSetup:
    q: np.ndarray  # commanded joints after the initial squeeze
    finger_rotations: np.ndarray  # fingertip orientations held during the run
    state: object  # plant state after the initial squeeze
    plan: object


def _plan(sc, q, pose, prev_pose, target, warm_start=None):
    """Force plan at the observed ``pose`` with reference motion toward ``target``."""
    gs = sc.initial_grasp(*pose)
    x_cur = gs.points
    x_prev = sc.initial_grasp(*prev_pose).points
    x_next = sc.initial_grasp(*target).points
    v_c = (x_next - x_cur).ravel() / sc.dt
    alpha = (x_next - 2 * x_cur + x_prev).ravel() / sc.dt**2
    fw = ContactFramework(gs.points, sc.edges, check=False)
    inputs = PlannerInputs(
        grasp=gs,
        framework=fw,
        friction=sc.friction,
        g_o=gravity_wrench(sc.mass, sc.gravity_dir),
        M_c=task_inertia(sc.hand, q),
        v_c=v_c,
        alpha=alpha,
        warm_start=warm_start,
    )
    return gs, plan_contact_forces(inputs)


def initial_grasp(sc):
    """Place the fingertips on the contacts, then squeeze to the planned force at rest."""
    hand = sc.hand
    gs = sc.initial_grasp()
    q_surface, miss = solve_ik(hand, nominal_q(hand), gs.points)
    if miss > IK_TOL:
        raise UnreachableError(f"initial contacts unreachable (miss {miss * 1e3:.3f} mm)", miss)
    kin = hand.kinematics(q_surface)
    pose = (sc.object_position, sc.object_rotation)
    _, plan = _plan(sc, q_surface, pose, pose, pose)
    d = penetration_world(sc.compliance, plan.f_local, plan.frames)
    vt = virtual_targets(gs.points, d, kin.tip_rot)
    q_init = solve_joint_trajectory(hand, q_surface, vt, pose, sc.mapper, object_pose=pose).first
    state = initial_state(sc.object_position, sc.object_rotation, sc.anchors, sc.normals, tips=kin.tip_pos)
    state = plant_step(state, q_init, hand, sc.plant)
    return GraspSetup(q_init, kin.tip_rot, state, plan)


def _flags(report):
    flags = [f"slip:{i}" for i in report.slip] + [f"deformation:{i}" for i in report.deformation]
    if report.drop:
        flags.append("drop")
    return flags


def _failure_modes(report):
    return [name for name, hit in (("slip", report.slip), ("deformation", report.deformation), ("drop", report.drop)) if hit]


def run_mpc(sc, max_iter=None, noise_std=None, strict=False):
    """Drive the object through ``sc.waypoints`` with the force-to-joint loop.

    Each iteration observes the pose, plans contact forces, converts them to
    virtual fingertip targets, solves the joint trajectory and executes its
    first step on the plant. A waypoint is reached when the observed
    position is within ``sc.mapper.delta`` of it. Errors and plant failures
    end the run and are recorded in the log.
    """
    if noise_std is not None:
        sc.plant = replace(sc.plant, noise_pos=float(noise_std))
    hand, mc = sc.hand, sc.mapper
    limit = mc.iterations if max_iter is None else int(max_iter)
    log = RunLog(scenario=sc.name)
    rng = np.random.default_rng(sc.seed)
    targets = sc.waypoint_poses()
    summary = {
        "backend": BACKEND,
        "waypoints": len(targets),
        "reached": [],
        "final_errors": [],
        "failure": None,
        "success": False,
    }
    t_start = time.perf_counter()
    it = 0
    try:
        setup = initial_grasp(sc)
    except HandforceError as exc:
        summary["failure"] = {"iteration": 0, "type": type(exc).__name__, "message": str(exc)}
        summary["wall_clock_total"] = time.perf_counter() - t_start
        log.summary = summary
        return log
    q = setup.q
    state = setup.state
    tips0 = ContactFramework(state.tips, sc.edges, check=False)
    summary["initial_flags"] = _flags(check_failures(state, sc.plant_friction))
    pose = observe(state, sc.plant, rng)
    prev_pose = pose
    warm_f = None
    warm_q = None
    failed = False
    errors_monotone = True

    for k, target in enumerate(targets):
        reached = False
        err = float(np.linalg.norm(pose[0] - target[0]))
        last_err = np.inf
        for _ in range(limit):
            it += 1
            t0 = time.perf_counter()
            rec = {"iteration": it, "waypoint": k, "desired_position": target[0],
                   "desired_rotation": so3.log(target[1])}
            try:
                gs, plan = _plan(sc, q, pose, prev_pose, target, warm_f)
                frames_now = plan.frames
                d = penetration_world(sc.compliance, plan.f_local, frames_now)
                vt = virtual_targets(gs.points, d, setup.finger_rotations)
                traj = solve_joint_trajectory(hand, q, vt, target, mc, object_pose=pose, warm_start=warm_q)
                for _ in range(sc.replan_passes):
                    # the forces act where the step leaves the object: plan there, keep targets body-fixed
                    predicted = (traj.object_position, traj.object_rotation)
                    _, plan = _plan(sc, traj.first, predicted, pose, target, warm_f)
                    d = penetration_world(sc.compliance, plan.f_local, frames_now)
                    vt = virtual_targets(gs.points, d, setup.finger_rotations)
                    traj = solve_joint_trajectory(hand, q, vt, target, mc, object_pose=pose, warm_start=traj.q)
            except HandforceError as exc:
                rec.update(event="error", error=type(exc).__name__, message=str(exc), flags=["error"],
                           wall_clock=time.perf_counter() - t0)
                log.append(rec)
                summary["failure"] = {"iteration": it, "type": type(exc).__name__, "message": str(exc)}
                failed = True
                break
            warm_f = plan.f_int_mu if plan.friction_solved else None
            warm_q = traj.q
            q_cmd = traj.first
            try:
                state = plant_step(state, q_cmd, hand, sc.plant)
            except HandforceError as exc:
                rec.update(event="error", error=type(exc).__name__, message=str(exc), flags=["error"],
                           q_cmd=q_cmd, wall_clock=time.perf_counter() - t0)
                log.append(rec)
                summary["failure"] = {"iteration": it, "type": type(exc).__name__, "message": str(exc)}
                failed = True
                break
            q = q_cmd
            report = check_failures(state, sc.plant_friction)
            prev_pose = pose
            pose = observe(state, sc.plant, rng)
            err = float(np.linalg.norm(pose[0] - target[0]))
            rot_err = float(np.linalg.norm(so3.log(pose[1].T @ target[1])))
            warn = cone_margin(to_local(plan.f_c, plan.frames), sc.friction, tol=MARGIN_WARN_TOL)
            flags = _flags(report)
            if not warn.ok:
                flags.append("margin")
            planned = plan.f_perp
            realized = np.where(state.active, state.forces_local[:, 2], 0.0)
            rec.update(
                event="step",
                q_cmd=q_cmd,
                observed_position=pose[0],
                observed_rotation=so3.log(pose[1]),
                pose_error=err,
                rotation_error=rot_err,
                plan=plan.to_record(),
                f_perp=planned,
                f_par=plan.f_par,
                cone_ratio=plan.margins.ratio,
                wrench_residual=plan.wrench_residual(gravity_wrench(sc.mass, sc.gravity_dir)),
                realized_normal=realized,
                realized_force_local=state.forces_local,
                penetration=d,
                trd=trd(tips0, tips0.moved(state.tips)),
                solver={"status": traj.status, "iterations": traj.iterations, "objective": traj.objective,
                        "max_violation": traj.max_violation},
                plant={"residual": state.residual, "iterations": state.iterations, "energy": state.energy},
                failures=report.to_record(),
                flags=flags,
                wall_clock=time.perf_counter() - t0,
            )
            log.append(rec)
            if err > last_err + 1e-12:
                errors_monotone = False
            last_err = err
            if not report.ok or (strict and not warn.ok):
                modes = _failure_modes(report) or ["margin"]
                summary["failure"] = {"iteration": it, "type": "PlantFailure" if not report.ok else "MarginWarning",
                                      "modes": modes, "fingers": {"slip": report.slip, "deformation": report.deformation},
                                      "message": ", ".join(flags)}
                failed = True
                break
            if err <= mc.delta:
                reached = True
                break
        summary["reached"].append(reached)
        summary["final_errors"].append(err)
        if failed or not reached:
            break

    errs = summary["final_errors"]
    summary["success"] = (not failed) and len(summary["reached"]) == len(targets) and all(summary["reached"])
    summary["max_error"] = max(errs) if errs else None
    summary["mean_error"] = float(np.mean(errs)) if errs else None
    summary["iterations"] = it
    summary["errors_monotone"] = errors_monotone
    summary["wall_clock_total"] = time.perf_counter() - t_start
    log.summary = summary
    return log


def rigid_velocity(fw, v_des):
    """Velocity closest to ``v_des`` satisfying ``R v = 0``."""
    R = rigidity_matrix(fw)
    n = R.shape[1]
    return solve_eq_qp(EqQP(np.eye(n), -np.ravel(v_des), R, np.zeros(len(R)))).x


def run_yarn_frame(sc):
    """Move a fingertip-only framework through its waypoints under the rigidity constraint.

    Per step the fingertip velocity is the one closest to the straight-line
    velocity toward the waypoint with ``R(x) v = 0``; positions follow by
    explicit Euler integration and the hand tracks them by IK. Logs the
    planned TRD (``trd``) and the realized fingertip TRD (``trd_realized``).
    """
    y = sc.yarn
    fw0 = ContactFramework(y.points, y.edges, check=False)
    ev = is_infinitesimally_rigid(fw0)
    if not ev.is_rigid:
        raise RigidityError(f"yarn framework not infinitesimally rigid (rank {ev.rank} < {3 * fw0.m - 6})")
    hand = sc.hand
    log = RunLog(scenario=sc.name)
    t_start = time.perf_counter()
    q, miss = solve_ik(hand, nominal_q(hand), y.points)
    if miss > IK_TOL:
        raise UnreachableError(f"yarn frame unreachable (miss {miss * 1e3:.3f} mm)", miss)
    real0 = fw0.moved(hand.kinematics(q).tip_pos)
    x = y.points.copy()
    c0 = y.points.mean(axis=0)
    it = 0
    final = []
    worst_ik = miss
    for k, wp in enumerate(sc.waypoints):
        target = c0 + wp.position + (y.points - c0) @ so3.exp(wp.rotation_vector).T
        for s in range(y.steps_per_waypoint):
            it += 1
            t0 = time.perf_counter()
            v_des = (target - x) / ((y.steps_per_waypoint - s) * y.dt)
            v = rigid_velocity(fw0.moved(x), v_des).reshape(x.shape)
            x = x + v * y.dt
            q, miss = solve_ik(hand, q, x)
            worst_ik = max(worst_ik, miss)
            tips = hand.kinematics(q).tip_pos
            log.append({
                "iteration": it,
                "waypoint": k,
                "points": x,
                "q_cmd": q,
                "trd": trd(fw0, fw0.moved(x)),
                "trd_realized": trd(real0, real0.moved(tips)),
                "pose_error": float(np.linalg.norm(x - target, axis=1).max()),
                "ik_miss": miss,
                "wall_clock": time.perf_counter() - t0,
            })
        final.append(float(np.linalg.norm(x - target, axis=1).max()))
    trds = [r["trd"] for r in log.records]
    log.summary = {
        "backend": BACKEND,
        "waypoints": len(sc.waypoints),
        "final_errors": final,
        "max_trd": max(trds, default=0.0),
        "max_trd_realized": max((r["trd_realized"] for r in log.records), default=0.0),
        "max_ik_miss": worst_ik,
        "iterations": it,
        "success": True,
        "failure": None,
        "wall_clock_total": time.perf_counter() - t_start,
    }
    return log


def run_scenario(sc, **kwargs):
    if sc.kind == "yarn":
        return run_yarn_frame(sc)
    return run_mpc(sc, **kwargs)


def parse_range(text):
    """``"a:b:n"`` -> n evenly spaced values from a to b inclusive."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise ValueError(f"range must look like a:b:n, got {text!r}") from None
    if n < 1:
        raise ValueError("range needs at least one value")
    return np.linspace(a, b, n).tolist()


def _sweep_one(args):
    ref, param, value, overrides, run_kwargs = args
    sc = load_scenario(ref, {**overrides, param: value})
    log = run_scenario(sc, **run_kwargs)
    failure = log.summary.get("failure") or {}
    return {
        "value": value,
        "success": log.success,
        "modes": failure.get("modes", [failure["type"]] if failure else []),
        "max_error": log.summary.get("max_error"),
        "iterations": log.summary.get("iterations"),
    }


def sweep(ref, param, values, jobs=1, overrides=None, **run_kwargs):
    """Run ``ref`` once per value of the dotted config ``param``; independent runs, optional processes."""
    tasks = [(str(ref), param, float(v), dict(overrides or {}), run_kwargs) for v in values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]
