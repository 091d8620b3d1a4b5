import textwrap

import numpy as np
import pytest

from handforce import config
from handforce.errors import ConfigError

BUNDLED = ["egg_ral", "empty_cup", "mass_sweep", "mu_sweep", "side_cup", "side_egg", "water_cup", "yarn_square",
           "yarn_translation"]

MINIMAL = """\
schema_version: 1
kind: mpc
object:
  geometry: {kind: cylinder, radius: 0.03, height: 0.08}
  mass: 0.003
  position: [0.0, 0.0, 0.10]
grasp:
  angles_deg: [0, 90, 180, 270]
  heights: [0.01, -0.01, 0.01, -0.01]
friction: {mu: 0.65, f_n_min: 0.1, f_n_max: 0.5}
compliance: [2, 2, 5]
mapper:
  lambda1: [30, 30, 30, 0.01, 0.01, 0.01]
  lambda2: [0.1, 0.1, 0.1]
waypoints:
  - [0, 0.03, 0.03]
"""


def _load(text, tmp_path, name="sc.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return config.load_scenario(path)


def _error(text, tmp_path):
    with pytest.raises(ConfigError) as info:
        _load(text, tmp_path)
    return info.value


class TestBundled:
    def test_listing(self):
        assert config.bundled_scenarios() == BUNDLED

    @pytest.mark.parametrize("name", BUNDLED)
    def test_loads(self, name):
        sc = config.load_scenario(f"scenarios/{name}")
        assert sc.waypoints
        assert sc.hand.m == 4

    def test_cup_parameters(self):
        sc = config.load_scenario("empty_cup")
        assert sc.mass == pytest.approx(0.003)
        np.testing.assert_array_equal(sc.compliance.diag, [2, 2, 5])
        assert sc.friction.mu == 0.65 and sc.mapper.delta == 0.001 and sc.mapper.T == 2
        assert [w.position.tolist() for w in sc.waypoints] == [[0, 0.03, 0.03], [0, -0.03, -0.02]]

    def test_water_cup_waypoints(self):
        sc = config.load_scenario("water_cup")
        assert sc.mass == pytest.approx(0.053)
        assert [w.position.tolist() for w in sc.waypoints] == [[0, 0.035, 0], [0, -0.035, 0], [0, 0, 0.03]]

    def test_egg_parameters(self):
        sc = config.load_scenario("egg_ral")
        assert len(sc.waypoints) == 18
        assert sc.mass == pytest.approx(0.0525)
        np.testing.assert_array_equal(sc.compliance.diag, [3, 3, 9])
        assert sc.friction.mu == 0.6

    def test_side_grasp_gravity(self):
        for name in ("side_cup", "side_egg"):
            g = config.load_scenario(name).gravity_dir
            assert abs(g @ [0, 0, 1.0]) < 1e-12

    def test_sweep_planner_mass(self):
        assert config.load_scenario("mass_sweep").mass == pytest.approx(0.060)

    def test_plant_defaults_to_reciprocal_gains(self):
        sc = config.load_scenario("empty_cup")
        np.testing.assert_allclose(sc.plant.stiffness, [0.5, 0.5, 0.2])
        assert sc.plant.threshold == pytest.approx(config.DEFAULT_THRESHOLD_FACTOR * 0.5)


class TestOverrides:
    def test_dotted(self):
        sc = config.load_scenario("empty_cup", {"plant.mass": 0.01, "seed": 4})
        assert sc.plant.mass == 0.01 and sc.seed == 4
        assert sc.mass == pytest.approx(0.003)  # the planner's assumed mass is untouched

    def test_non_mapping(self):
        with pytest.raises(ConfigError, match="not a mapping"):
            config.load_scenario("empty_cup", {"compliance.x": 1.0})

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError, match="no scenario"):
            config.load_scenario("scenarios/does_not_exist")


class TestErrors:
    def test_minimal_loads(self, tmp_path):
        sc = _load(MINIMAL, tmp_path)
        assert sc.name == "sc" and sc.kind == "mpc"

    def test_missing_field(self, tmp_path):
        err = _error(MINIMAL.replace("  mass: 0.003\n", ""), tmp_path)
        assert err.field == "object.mass"
        assert err.line == 4  # reported where the enclosing mapping starts

    def test_bad_number_line(self, tmp_path):
        err = _error(MINIMAL.replace("mass: 0.003", "mass: heavy"), tmp_path)
        assert err.field == "object.mass" and err.line == 5
        assert "line 5" in str(err) and "object.mass" in str(err)

    def test_bad_shape(self, tmp_path):
        err = _error(MINIMAL.replace("compliance: [2, 2, 5]", "compliance: [2, 2]"), tmp_path)
        assert err.field == "compliance" and err.line == 11

    def test_bad_waypoint(self, tmp_path):
        err = _error(MINIMAL.replace("  - [0, 0.03, 0.03]", "  - [0, 0.03]"), tmp_path)
        assert err.field == "waypoints[0]" and err.line == 16

    def test_empty_waypoints(self, tmp_path):
        err = _error(MINIMAL.replace("waypoints:\n  - [0, 0.03, 0.03]\n", "waypoints: []\n"), tmp_path)
        assert err.field == "waypoints"

    def test_schema_version(self, tmp_path):
        err = _error(MINIMAL.replace("schema_version: 1", "schema_version: 2"), tmp_path)
        assert err.field == "schema_version" and err.line == 1

    def test_invalid_yaml(self, tmp_path):
        err = _error(MINIMAL + "  bad: [unclosed\n", tmp_path)
        assert err.line is not None

    def test_friction_bounds(self, tmp_path):
        err = _error(MINIMAL.replace("f_n_min: 0.1, f_n_max: 0.5", "f_n_min: 0.6, f_n_max: 0.5"), tmp_path)
        assert err.field == "friction"

    def test_contact_height(self, tmp_path):
        err = _error(MINIMAL.replace("heights: [0.01, -0.01, 0.01, -0.01]", "heights: [0.01, -0.01, 0.09, -0.01]"),
                     tmp_path)
        assert err.field == "grasp.heights[2]"

    def test_contact_count(self, tmp_path):
        err = _error(MINIMAL.replace("angles_deg: [0, 90, 180, 270]", "angles_deg: [0, 120, 240]")
                     .replace("heights: [0.01, -0.01, 0.01, -0.01]", "heights: [0, 0, 0]"), tmp_path)
        assert err.field == "grasp"

    def test_unknown_kind(self, tmp_path):
        assert _error(MINIMAL.replace("kind: mpc", "kind: dance"), tmp_path).field == "kind"

    def test_unknown_hand(self, tmp_path):
        assert _error(MINIMAL + "hand: octopus\n", tmp_path).field == "hand"

    def test_top_level_list(self, tmp_path):
        assert _error("- 1\n- 2\n", tmp_path).line == 1


def test_waypoint_mapping_form(tmp_path):
    text = MINIMAL.replace("  - [0, 0.03, 0.03]", "  - {position: [0, 0.01, 0], rotation_vector: [0, 0, 0.1]}")
    sc = _load(text, tmp_path)
    p, r = sc.waypoint_poses()[0]
    np.testing.assert_allclose(p, [0, 0.01, 0.1])
    np.testing.assert_allclose(r[:2, :2], [[np.cos(0.1), -np.sin(0.1)], [np.sin(0.1), np.cos(0.1)]], atol=1e-12)


class TestSnapshotAndFramework:
    def test_snapshot(self, tmp_path):
        path = tmp_path / "snap.yaml"
        path.write_text(textwrap.dedent("""\
            schema_version: 1
            contacts:
              points: [[0.03, 0, 0.11], [0, 0.03, 0.09], [-0.03, 0, 0.11], [0, -0.03, 0.09]]
              normals: [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
            object: {center: [0, 0, 0.1], mass: 0.053}
            friction: {mu: 0.65, f_n_min: 0.1, f_n_max: 0.6}
            """))
        snap = config.load_snapshot(path)
        assert snap.grasp.m == 4 and snap.framework.m == 4
        np.testing.assert_array_equal(snap.M_c, 0.01 * np.eye(12))
        np.testing.assert_array_equal(snap.v_c, 0.0)

    def test_snapshot_bad_inertia(self, tmp_path):
        path = tmp_path / "snap.yaml"
        path.write_text(textwrap.dedent("""\
            schema_version: 1
            contacts:
              points: [[0.03, 0, 0.11], [0, 0.03, 0.09], [-0.03, 0, 0.11]]
              normals: [[1, 0, 0], [0, 1, 0], [-1, 0, 0]]
            object: {center: [0, 0, 0.1], mass: 0.053}
            friction: {mu: 0.65, f_n_min: 0.1, f_n_max: 0.6}
            task_inertia: [[1, 0], [0, 1]]
            """))
        with pytest.raises(ConfigError) as info:
            config.load_snapshot(path)
        assert info.value.field == "task_inertia" and info.value.line == 7

    def test_framework(self, tmp_path):
        path = tmp_path / "fw.yaml"
        path.write_text("schema_version: 1\npoints: [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]\nedges: [[0, 1], [1, 1]]\n")
        with pytest.raises(ConfigError, match="self-loop") as info:
            config.load_framework(path)
        assert info.value.field == "edges" and info.value.line == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            config.load_framework(tmp_path / "nope.yaml")
