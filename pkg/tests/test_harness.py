import json

import numpy as np
import pytest

from handforce.config import load_scenario
from handforce.errors import RigidityError
from handforce.harness import initial_grasp, parse_range, rigid_velocity, run_mpc, run_scenario, sweep
from handforce.rigidity import ContactFramework, rigidity_matrix

STILL = {"waypoints": [[0, 0, 0]]}


class TestMpc:
    def test_still_waypoint_converges_at_once(self):
        sc = load_scenario("empty_cup", STILL)
        q0 = initial_grasp(sc).q
        log = run_mpc(sc)
        assert log.success and log.summary["iterations"] == 1
        assert log.summary["final_errors"][0] <= 1e-9
        np.testing.assert_allclose(log.records[0]["q_cmd"], q0, atol=1e-5)

    def test_record_fields(self):
        rec = run_mpc(load_scenario("empty_cup", STILL)).records[0]
        for key in ("f_perp", "f_par", "cone_ratio", "realized_normal", "plan", "trd", "wrench_residual",
                    "observed_position", "desired_position", "pose_error", "q_cmd", "flags", "wall_clock"):
            assert key in rec, key
        assert len(rec["f_perp"]) == 4
        assert rec["wrench_residual"] <= 1e-6

    def test_deterministic(self):
        a = run_mpc(load_scenario("empty_cup")).lines(wall_clock=False)
        b = run_mpc(load_scenario("empty_cup")).lines(wall_clock=False)
        assert a == b

    def test_iteration_cap_fails_cleanly(self):
        log = run_mpc(load_scenario("empty_cup", {"mapper.delta": 1e-12}), max_iter=2)
        assert not log.success
        assert log.summary["reached"] == [False] and log.summary["iterations"] == 2
        assert log.summary["failure"] is None

    def test_noise_is_seeded(self):
        a = run_mpc(load_scenario("empty_cup", STILL), noise_std=1e-4).lines(wall_clock=False)
        b = run_mpc(load_scenario("empty_cup", STILL), noise_std=1e-4).lines(wall_clock=False)
        assert a == b
        rec = json.loads(a[1])
        assert rec["observed_position"] != [0.0, 0.0, 0.1]


class TestYarn:
    def test_still_trace_has_zero_trd(self):
        log = run_scenario(load_scenario("yarn_square", STILL))
        assert log.summary["max_trd"] == 0.0 and log.summary["max_trd_realized"] == 0.0

    def test_non_rigid_framework(self):
        points = [[0.035, 0.0, 0.11], [0.0, 0.035, 0.09], [-0.035, 0.0, 0.11], [0.0, -0.035, 0.09]]
        sc = load_scenario("yarn_square", {"yarn.edges": [[0, 1], [1, 2], [2, 3], [3, 0]], "yarn.points": points})
        with pytest.raises(RigidityError):
            run_scenario(sc)

    def test_rigid_velocity_is_in_null_space(self, rng):
        fw = ContactFramework(rng.normal(size=(4, 3)))
        v = rigid_velocity(fw, rng.normal(size=12))
        assert np.abs(rigidity_matrix(fw) @ v).max() <= 1e-12


class TestParseRange:
    def test_inclusive(self):
        assert parse_range("0.5:0.75:6") == pytest.approx([0.5, 0.55, 0.6, 0.65, 0.7, 0.75])

    def test_single(self):
        assert parse_range("2:2:1") == [2.0]

    @pytest.mark.parametrize("text", ["1:2", "a:b:3", "0:1:0"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            parse_range(text)


def test_sweep_runs_each_value():
    out = sweep("empty_cup", "plant.mass", [0.003, 0.004], overrides=STILL)
    assert [r["value"] for r in out] == [0.003, 0.004]
    assert all(r["success"] and r["modes"] == [] for r in out)
