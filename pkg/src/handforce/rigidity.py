"""Contact frameworks: rigidity function, rigidity matrix, rank test, and TRD."""

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

RANK_RTOL = 1e-9


@dataclass(frozen=True)
class RigidityEvaluation:
    phi: np.ndarray
    R: np.ndarray
    rank: int
    is_rigid: bool

    @property
    def expected_rank(self):
        return 3 * (self.R.shape[1] // 3) - 6


class ContactFramework:
    """Graph on ``m`` contact points plus their 3D configuration.

    Vertices are 0-based internally. Edges are stored as sorted ``(i, j)``
    pairs with ``i < j`` in lexicographic order; ``edges=None`` means the
    complete graph.
    """

    def __init__(self, points, edges=None, check=True):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 3)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("points must have shape (m, 3) or (3m,)")
        self.points = points
        m = len(points)
        if edges is None:
            edge_list = list(itertools.combinations(range(m), 2))
        else:
            seen = set()
            for e in edges:
                i, j = (int(v) for v in e)
                if i == j:
                    raise ValueError(f"self-loop on vertex {i}")
                if not (0 <= i < m and 0 <= j < m):
                    raise ValueError(f"edge {(i, j)} references a vertex outside 0..{m - 1}")
                key = (min(i, j), max(i, j))
                if key in seen:
                    raise ValueError(f"duplicate edge {key}")
                seen.add(key)
            edge_list = sorted(seen)
        self.edges = np.array(edge_list, dtype=int).reshape(-1, 2)
        if check and m >= 3:
            ev = is_infinitesimally_rigid(self)
            if not ev.is_rigid:
                warnings.warn(
                    f"contact framework is not infinitesimally rigid (rank {ev.rank} < {3 * m - 6})",
                    stacklevel=2,
                )

    @property
    def m(self):
        return len(self.points)

    @property
    def p(self):
        return self.points.ravel()

    def moved(self, points):
        """Same graph at a new configuration."""
        return ContactFramework(points, edges=self.edges, check=False)

    def edge_lengths(self):
        i, j = self.edges.T
        return np.linalg.norm(self.points[i] - self.points[j], axis=1)

    def to_dict(self):
        return {"points": self.points.tolist(), "edges": self.edges.tolist()}

    @classmethod
    def from_dict(cls, d, check=True):
        if "points" not in d:
            raise ConfigError("missing entry", field="points")
        try:
            return cls(d["points"], d.get("edges"), check=check)
        except ValueError as exc:
            raise ConfigError(str(exc), field="framework") from None

    def __repr__(self):
        return f"ContactFramework(m={self.m}, edges={len(self.edges)})"


def rigidity_function(fw):
    """Squared edge lengths in canonical edge order."""
    i, j = fw.edges.T
    d = fw.points[i] - fw.points[j]
    return np.einsum("ij,ij->i", d, d)


def _pattern(points, edges, vec):
    # row k: 2 vec_ij in block i, -2 vec_ij in block j
    m = len(points)
    out = np.zeros((len(edges), 3 * m))
    i, j = edges.T
    rows = np.arange(len(edges))
    diff = 2.0 * (vec[i] - vec[j])
    for c in range(3):
        out[rows, 3 * i + c] = diff[:, c]
        out[rows, 3 * j + c] = -diff[:, c]
    return out


def rigidity_matrix(fw):
    """Jacobian of :func:`rigidity_function` with respect to the stacked points."""
    return _pattern(fw.points, fw.edges, fw.points)


def rigidity_matrix_rate(fw, v_c):
    """Time derivative of the rigidity matrix along contact velocities ``v_c``."""
    v = np.asarray(v_c, dtype=float).reshape(fw.m, 3)
    return _pattern(fw.points, fw.edges, v)


def numerical_rank(a, rtol=RANK_RTOL):
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def is_infinitesimally_rigid(fw):
    """Rank test ``rank(R) == 3m - 6`` with singular-value cutoff 1e-9 * s_max."""
    if fw.m < 3:
        raise ValueError(f"rigidity test needs m >= 3 contact points, got {fw.m}")
    R = rigidity_matrix(fw)
    rank = numerical_rank(R)
    return RigidityEvaluation(rigidity_function(fw), R, rank, rank == 3 * fw.m - 6)


def trivial_motions(points):
    """Basis of the six rigid-body velocity fields, shape (6, 3m).

    Rows 0-2 translate along x, y, z; rows 3-5 rotate about the centroid.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    m = len(points)
    rel = points - points.mean(axis=0)
    basis = np.zeros((6, 3 * m))
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        basis[k] = np.tile(e, m)
        basis[3 + k] = np.cross(e, rel).ravel()
    return basis


def trd(fw0, fwt):
    """Total relative deviation of edge lengths from ``fw0`` to ``fwt``, in percent."""
    if fw0.edges.shape != fwt.edges.shape or np.any(fw0.edges != fwt.edges):
        raise ValueError("frameworks must share the same graph")
    d0 = fw0.edge_lengths()
    if np.any(d0 <= 0.0):
        raise ValueError("initial edge length is zero")
    return float(np.sum(np.abs(fwt.edge_lengths() - d0) / d0) * 100.0)
