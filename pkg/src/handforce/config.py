"""Scenario, snapshot and framework files.

All files are YAML mappings carrying ``schema_version: 1``. Errors are
raised as ``ConfigError`` naming the dotted field and, when known, the
source line. See ``docs/config.md`` for the schema.
"""

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import so3
from .errors import ConfigError
from .grasp import FrictionParams, GraspState
from .hand_model import HandModel, load_hand
from .motion_mapper import ComplianceGains, MapperConfig
from .plant import ObjectGeometry, PlantConfig
from .rigidity import ContactFramework

SCHEMA_VERSION = 1
_SCENARIOS = Path(__file__).parent / "data" / "scenarios"
DEFAULT_THRESHOLD_FACTOR = 1.1


def _line_of(node, path):
    """1-based source line of the dotted ``path`` inside a composed YAML node."""
    line = None
    for part in path.split("."):
        if node is None:
            break
        line = node.start_mark.line + 1
        key, _, index = part.partition("[")
        nxt = None
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    line = k.start_mark.line + 1
                    nxt = v
                    break
        node = nxt
        if index and isinstance(node, yaml.SequenceNode):
            i = int(index.rstrip("]"))
            node = node.value[i] if i < len(node.value) else None
            if node is not None:
                line = node.start_mark.line + 1
    return line


class Source:
    """Parsed YAML plus its node tree, for error locations."""

    def __init__(self, text, name="<string>"):
        self.name = name
        try:
            self.data = yaml.safe_load(text)
            self.root = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"{name}: invalid YAML ({getattr(exc, 'problem', exc)})",
                              line=None if mark is None else mark.line + 1) from None
        if not isinstance(self.data, dict):
            raise ConfigError(f"{name}: top level must be a mapping", line=1)
        version = self.data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"{name}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
                              field="schema_version", line=_line_of(self.root, "schema_version"))

    @classmethod
    def from_path(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        return cls(text, str(path))

    def error(self, path, message):
        return ConfigError(message, field=path, line=_line_of(self.root, path) if self.root is not None else None)


class _Reader:
    def __init__(self, src, data=None):
        self.src = src
        self.data = src.data if data is None else data

    def get(self, path, default=...):
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is ...:
                    raise self.src.error(path, "missing entry")
                return default
            node = node[part]
        if node is None and default is not ...:
            return default
        return node

    def num(self, path, default=..., positive=False, nonneg=False):
        value = self.get(path, default)
        if value is None:
            return None
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise self.src.error(path, f"expected a number, got {value!r}") from None
        if not np.isfinite(value):
            raise self.src.error(path, "must be finite")
        if positive and value <= 0:
            raise self.src.error(path, "must be positive")
        if nonneg and value < 0:
            raise self.src.error(path, "must be non-negative")
        return value

    def vec(self, path, shape=None, default=...):
        value = self.get(path, default)
        if value is None:
            return None
        try:
            arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise self.src.error(path, "expected a list of numbers") from None
        if shape is not None and arr.shape != shape:
            raise self.src.error(path, f"expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise self.src.error(path, "entries must be finite")
        return arr


@dataclass
class Waypoint:
    """Pose offset relative to the initial object pose (object frame)."""

    position: np.ndarray
    rotation_vector: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def absolute(self, p0, r0):
        return p0 + r0 @ self.position, r0 @ so3.exp(self.rotation_vector)


@dataclass
class YarnSpec:
    points: np.ndarray  # (m, 3) world fingertip positions
    edges: Optional[list]
    steps_per_waypoint: int
    dt: float


@dataclass
class Scenario:
    name: str
    kind: str  # "mpc" or "yarn"
    hand: HandModel
    seed: int
    waypoints: list
    raw: dict = field(repr=False, default_factory=dict)
    object_position: np.ndarray = None
    object_rotation: np.ndarray = None
    geometry: ObjectGeometry = None
    mass: float = 0.0
    anchors: np.ndarray = None  # (m, 3) object frame
    normals: np.ndarray = None  # (m, 3) object frame, outward
    edges: Optional[list] = None
    friction: FrictionParams = None
    compliance: ComplianceGains = None
    mapper: MapperConfig = None
    gravity_dir: np.ndarray = None
    plant: PlantConfig = None
    plant_friction: FrictionParams = None
    dt: float = 1.0
    replan_passes: int = 1
    yarn: YarnSpec = None

    def initial_grasp(self, position=None, rotation=None):
        p = self.object_position if position is None else position
        r = self.object_rotation if rotation is None else rotation
        return GraspState(p + self.anchors @ r.T, self.normals @ r.T, p, r, self.mass)

    def waypoint_poses(self):
        return [w.absolute(self.object_position, self.object_rotation) for w in self.waypoints]


def _waypoints(rd, path):
    items = rd.get(path)
    if not isinstance(items, list) or not items:
        raise rd.src.error(path, "need a non-empty list of waypoints")
    out = []
    for i, item in enumerate(items):
        p = f"{path}[{i}]"
        if isinstance(item, dict):
            sub = _Reader(rd.src, item)
            try:
                pos = sub.vec("position", (3,), default=[0.0, 0.0, 0.0])
                rot = sub.vec("rotation_vector", (3,), default=[0.0, 0.0, 0.0])
            except ConfigError as exc:
                raise rd.src.error(f"{p}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
        else:
            try:
                pos = np.asarray(item, dtype=float)
            except (TypeError, ValueError):
                raise rd.src.error(p, "waypoint must be [x, y, z] or a mapping") from None
            if pos.shape != (3,):
                raise rd.src.error(p, f"waypoint must have 3 entries, got shape {pos.shape}")
            rot = np.zeros(3)
        out.append(Waypoint(pos, rot))
    return out


def _edges(rd, path):
    edges = rd.get(path, None)
    if edges is None:
        return None
    try:
        return [tuple(int(v) for v in e) for e in edges]
    except (TypeError, ValueError):
        raise rd.src.error(path, "edges must be pairs of vertex indices") from None


def _geometry(rd):
    kind = rd.get("object.geometry.kind")
    try:
        if kind == "cylinder":
            return ObjectGeometry("cylinder", (rd.num("object.geometry.radius", positive=True),),
                                  rd.num("object.geometry.height", positive=True))
        if kind == "ellipsoid":
            return ObjectGeometry("ellipsoid", tuple(rd.vec("object.geometry.radii", (3,))))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise rd.src.error("object.geometry", str(exc)) from None
    raise rd.src.error("object.geometry.kind", f"unknown geometry {kind!r} (cylinder or ellipsoid)")


def _contacts(rd, geometry):
    if rd.get("grasp.points", None) is not None:
        pts = rd.vec("grasp.points")
        nrm = rd.vec("grasp.normals")
        if pts.ndim != 2 or pts.shape[1] != 3 or nrm.shape != pts.shape:
            raise rd.src.error("grasp.normals", "points and normals must both be (m, 3)")
        return pts, nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    angles = np.radians(rd.vec("grasp.angles_deg"))
    heights = rd.vec("grasp.heights", default=np.zeros(len(angles)))
    if heights.shape != angles.shape:
        raise rd.src.error("grasp.heights", "need one height per contact angle")
    pts, nrm = [], []
    for k, (a, h) in enumerate(zip(angles, heights)):
        try:
            p, n = geometry.surface_point(a, h)
        except ValueError as exc:
            raise rd.src.error(f"grasp.heights[{k}]", str(exc)) from None
        pts.append(p)
        nrm.append(n)
    return np.array(pts), np.array(nrm)


def _mapper(rd):
    try:
        return MapperConfig(
            lambda1=tuple(rd.vec("mapper.lambda1", (6,))),
            lambda2=tuple(rd.vec("mapper.lambda2", (3,))),
            epsilon=rd.num("mapper.epsilon", 1e-9, positive=True),
            delta=rd.num("mapper.delta", 1e-3, positive=True),
            T=int(rd.num("mapper.T", 2, positive=True)),
            iterations=int(rd.num("mapper.iterations", 20, positive=True)),
            horizon=str(rd.get("mapper.horizon", "hold")),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise rd.src.error("mapper", str(exc)) from None


def _hand(rd):
    ref = rd.get("hand", "leap4")
    if isinstance(ref, dict):
        return HandModel.from_dict(ref, source="hand")
    base = Path(rd.src.name).parent if rd.src.name != "<string>" else Path(".")
    candidate = base / str(ref)
    try:
        return load_hand(str(candidate) if candidate.suffix and candidate.exists() else str(ref))
    except ConfigError as exc:
        raise rd.src.error("hand", str(exc)) from None


def scenario_from_source(src):
    rd = _Reader(src)
    kind = rd.get("kind", "mpc")
    if kind not in ("mpc", "yarn"):
        raise src.error("kind", f"unknown scenario kind {kind!r} (mpc or yarn)")
    sc = Scenario(
        name=str(rd.get("name", Path(src.name).stem)),
        kind=kind,
        hand=_hand(rd),
        seed=int(rd.num("seed", 0)),
        waypoints=_waypoints(rd, "waypoints"),
        raw=copy.deepcopy(src.data),
    )
    if kind == "yarn":
        pts = rd.vec("yarn.points")
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise src.error("yarn.points", "expected an (m, 3) list of points")
        if len(pts) != sc.hand.m:
            raise src.error("yarn.points", f"need one point per finger ({sc.hand.m})")
        sc.yarn = YarnSpec(pts, _edges(rd, "yarn.edges"), int(rd.num("yarn.steps_per_waypoint", 20, positive=True)),
                           rd.num("yarn.dt", 0.05, positive=True))
        sc.object_position = pts.mean(axis=0)
        sc.object_rotation = np.eye(3)
        return sc

    sc.geometry = _geometry(rd)
    sc.mass = rd.num("object.mass", nonneg=True)
    sc.object_position = rd.vec("object.position", (3,))
    sc.object_rotation = so3.exp(rd.vec("object.rotation_vector", (3,), default=[0.0, 0.0, 0.0]))
    sc.anchors, sc.normals = _contacts(rd, sc.geometry)
    if len(sc.anchors) != sc.hand.m:
        raise src.error("grasp", f"need one contact per finger ({sc.hand.m}), got {len(sc.anchors)}")
    sc.edges = _edges(rd, "grasp.edges")
    try:
        sc.friction = FrictionParams(rd.num("friction.mu", positive=True), rd.num("friction.f_n_min", nonneg=True),
                                     rd.num("friction.f_n_max", positive=True))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise src.error("friction", str(exc)) from None
    gains = rd.vec("compliance", (3,))
    if np.any(gains <= 0):
        raise src.error("compliance", "compliance gains must be positive")
    sc.compliance = ComplianceGains(*gains)
    sc.mapper = _mapper(rd)
    g = rd.vec("gravity_dir", (3,), default=[0.0, 0.0, -1.0])
    if np.linalg.norm(g) == 0:
        raise src.error("gravity_dir", "must be nonzero")
    sc.gravity_dir = g / np.linalg.norm(g)
    sc.dt = rd.num("motion.dt", 1.0, positive=True)
    sc.replan_passes = int(rd.num("motion.replan_passes", 1, nonneg=True))

    plant_mu = rd.num("plant.mu", sc.friction.mu, positive=True)
    stiffness = rd.vec("plant.stiffness", (3,), default=None)
    if stiffness is None:
        stiffness = 1.0 / gains
    threshold = rd.num("plant.deformation_threshold", DEFAULT_THRESHOLD_FACTOR * sc.friction.f_n_max, positive=True)
    try:
        sc.plant = PlantConfig(
            geometry=sc.geometry,
            mass=rd.num("plant.mass", sc.mass, nonneg=True),
            stiffness=tuple(stiffness),
            mu=plant_mu,
            deformation_threshold=threshold,
            threshold_per_kg=rd.num("plant.threshold_per_kg", None, positive=True),
            noise_pos=rd.num("plant.noise_pos", 0.0, nonneg=True),
            noise_rot=rd.num("plant.noise_rot", 0.0, nonneg=True),
            gravity_dir=tuple(sc.gravity_dir),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise src.error("plant", str(exc)) from None
    sc.plant_friction = FrictionParams(plant_mu, 0.0, max(sc.plant.threshold, 1e-12))
    return sc


def resolve_path(ref):
    """A file path, or ``scenarios/<name>`` / ``<name>`` for a bundled scenario."""
    path = Path(ref)
    if path.exists() and path.is_file():
        return path
    name = path.name if path.suffix == ".yaml" else f"{path.name}.yaml"
    bundled = _SCENARIOS / name
    if bundled.exists():
        return bundled
    raise ConfigError(f"no scenario file or bundled scenario named {ref!r}")


def load_scenario(ref, overrides=None):
    """Load a scenario file (or bundled name) and apply dotted-path ``overrides``."""
    src = Source.from_path(resolve_path(ref))
    for path, value in (overrides or {}).items():
        set_dotted(src.data, path, value)
    return scenario_from_source(src)


def bundled_scenarios():
    return sorted(p.stem for p in _SCENARIOS.glob("*.yaml"))


def set_dotted(data, path, value):
    node = data
    parts = path.split(".")
    for part in parts[:-1]:
        if node.get(part) is None:
            node[part] = {}
        node = node[part]
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {path!r}: {part!r} is not a mapping", field=path)
    node[parts[-1]] = value


@dataclass
class Snapshot:
    grasp: GraspState
    framework: ContactFramework
    friction: FrictionParams
    gravity_dir: np.ndarray
    M_c: np.ndarray
    v_c: np.ndarray
    alpha: np.ndarray


def load_snapshot(path):
    """One-shot planner input: contacts, normals, object, friction and motion."""
    src = Source.from_path(path)
    rd = _Reader(src)
    pts = rd.vec("contacts.points")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise src.error("contacts.points", "expected an (m, 3) list")
    m = len(pts)
    nrm = rd.vec("contacts.normals", (m, 3))
    try:
        gs = GraspState(pts, nrm / np.linalg.norm(nrm, axis=1, keepdims=True), rd.vec("object.center", (3,)),
                        mass=rd.num("object.mass", nonneg=True))
        fp = FrictionParams(rd.num("friction.mu", positive=True), rd.num("friction.f_n_min", nonneg=True),
                            rd.num("friction.f_n_max", positive=True))
        fw = ContactFramework(pts, _edges(rd, "contacts.edges"), check=False)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise src.error("contacts", str(exc)) from None
    mc = rd.vec("task_inertia", (3 * m, 3 * m), default=None)
    if mc is None:
        mc = rd.num("task_inertia_diag", 0.01, positive=True) * np.eye(3 * m)
    g = rd.vec("gravity_dir", (3,), default=[0.0, 0.0, -1.0])
    return Snapshot(gs, fw, fp, g / np.linalg.norm(g), mc,
                    rd.vec("v_c", (3 * m,), default=np.zeros(3 * m)),
                    rd.vec("alpha", (3 * m,), default=np.zeros(3 * m)))


def load_framework(path):
    src = Source.from_path(path)
    rd = _Reader(src)
    pts = rd.vec("points")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise src.error("points", "expected an (m, 3) list")
    try:
        return ContactFramework(pts, _edges(rd, "edges"), check=False)
    except ValueError as exc:
        raise src.error("edges", str(exc)) from None
