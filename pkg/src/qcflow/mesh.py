"""Mesh sequence data model, file I/O, validation, and preprocessing.

A :class:`MeshSequence` holds a triangulation whose connectivity is fixed
over time while the vertex positions evolve. All derived connectivity
(edges, boundary loops, edge-to-face incidence) is computed once at
construction with a deterministic ordering so that downstream operator
matrices are reproducible.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.spatial import Delaunay

from .errors import (
    DegenerateCloud,
    DegenerateFace,
    MismatchedConnectivity,
    NonManifold,
    QcflowError,
    TooFewFrames,
    ZeroArea,
)

EPS_AREA = 1e-12
SLIVER_MIN_ANGLE_DEG = 15.0
TAUBIN_LAMBDA = 0.5
TAUBIN_MU = -0.53

_BLOB_MAGIC = b"QCFBLOB1"


def face_areas(positions: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unsigned triangle areas for one frame (positions of shape (V, 2|3))."""
    p0 = positions[faces[:, 0]]
    e1 = positions[faces[:, 1]] - p0
    e2 = positions[faces[:, 2]] - p0
    if positions.shape[1] == 2:
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def total_area(positions: np.ndarray, faces: np.ndarray) -> float:
    return float(face_areas(positions, faces).sum())


def mesh_volume(positions: np.ndarray, faces: np.ndarray) -> float:
    """Signed enclosed volume of a closed oriented surface (divergence theorem)."""
    p0 = positions[faces[:, 0]]
    p1 = positions[faces[:, 1]]
    p2 = positions[faces[:, 2]]
    return float(np.einsum("ij,ij->i", p0, np.cross(p1, p2)).sum() / 6.0)


def _derive_edges(faces: np.ndarray, n_vertices: int):
    """Unique undirected edges plus incidence data.

    Returns (edges, edge_faces, boundary_oriented) where ``edges`` is sorted
    lexicographically on (min, max), ``edge_faces`` lists the one or two
    incident faces per edge (-1 padding, smaller face index first), and
    ``boundary_oriented`` are the boundary edges oriented as traversed by
    their unique incident face, concatenated loop by loop.
    """
    he = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)  # directed halfedges
    he_face = np.repeat(np.arange(len(faces)), 3)
    und = np.sort(he, axis=1)
    edges, inverse, counts = np.unique(
        und, axis=0, return_inverse=True, return_counts=True
    )
    if np.any(counts > 2):
        bad = edges[np.argmax(counts > 2)]
        raise NonManifold(f"edge {tuple(int(v) for v in bad)} is shared by more than 2 faces")

    edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
    # deterministic fill: iterate halfedges in face order, smaller face first
    order = np.argsort(he_face, kind="stable")
    for idx in order:
        e = inverse[idx]
        f = he_face[idx]
        if edge_faces[e, 0] == -1:
            edge_faces[e, 0] = f
        elif edge_faces[e, 1] == -1 and edge_faces[e, 0] != f:
            edge_faces[e, 1] = f
        elif edge_faces[e, 0] == f or edge_faces[e, 1] == f:
            raise NonManifold(
                f"face {int(f)} repeats edge {tuple(int(v) for v in edges[e])}"
            )

    boundary_mask = counts == 1
    boundary_oriented = _order_boundary(he, inverse, boundary_mask)
    return edges, edge_faces, boundary_oriented


def _order_boundary(halfedges, inverse, boundary_mask):
    """Chain boundary halfedges into loops, keeping face-induced orientation."""
    is_boundary_he = boundary_mask[inverse]
    bhe = halfedges[is_boundary_he]
    if len(bhe) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    nxt = {int(a): int(b) for a, b in bhe}
    if len(nxt) != len(bhe):
        raise NonManifold("boundary is not a union of simple loops")
    loops = []
    seen: set[int] = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = []
        a = start
        while True:
            b = nxt[a]
            loop.append((a, b))
            seen.add(a)
            a = b
            if a == start:
                break
            if a in seen:
                raise NonManifold("boundary loop does not close")
        loops.append(loop)
    return np.array([pair for loop in loops for pair in loop], dtype=np.int64)


class MeshSequence:
    """Fixed-connectivity triangulation with per-time vertex positions.

    Parameters
    ----------
    faces : (M, 3) int array
        Vertex-index triples, identical at every time step.
    positions : (N, V, dim) float array
        Vertex positions per frame, ``dim`` is 2 (planar) or 3 (spatial).
    times : (N,) float array, optional
        Strictly increasing frame times. Defaults to uniform spacing on [0, 1].
    """

    def __init__(self, faces, positions, times=None, validate: bool = True):
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        if self.positions.ndim != 3:
            raise QcflowError("positions must have shape (n_frames, n_vertices, dim)")
        n_frames = self.positions.shape[0]
        if times is None:
            times = np.linspace(0.0, 1.0, n_frames)
        self.times = np.ascontiguousarray(times, dtype=np.float64)
        self.dim = int(self.positions.shape[2])

        if self.dim not in (2, 3):
            raise QcflowError(f"dim must be 2 or 3, got {self.dim}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise QcflowError("faces must have shape (n_faces, 3)")
        if n_frames < 2:
            raise TooFewFrames("a flow needs at least 2 frames")
        if len(self.times) != n_frames:
            raise QcflowError("times length must match number of frames")
        if np.any(np.diff(self.times) <= 0):
            raise QcflowError("times must be strictly increasing")
        if self.faces.size and (
            self.faces.min() < 0 or self.faces.max() >= self.n_vertices
        ):
            raise QcflowError("face indices out of vertex range")

        self.edges, self.edge_faces, self.boundary_edges = _derive_edges(
            self.faces, self.n_vertices
        )
        if validate:
            self._check_degenerate()

    # -- basic properties ---------------------------------------------------

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.positions.shape[1]

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def is_planar(self) -> bool:
        return self.dim == 2

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_edges) == 0

    def frame(self, n: int) -> np.ndarray:
        return self.positions[n]

    def frame3d(self, n: int) -> np.ndarray:
        """Frame positions lifted to 3D (planar meshes get z = 0)."""
        p = self.positions[n]
        if self.dim == 3:
            return p
        out = np.zeros((p.shape[0], 3))
        out[:, :2] = p
        return out

    def face_areas(self, n: int) -> np.ndarray:
        return face_areas(self.positions[n], self.faces)

    def total_area(self, n: int = 0) -> float:
        return total_area(self.positions[n], self.faces)

    def with_positions(self, positions, times=None) -> "MeshSequence":
        return MeshSequence(
            self.faces, positions, self.times if times is None else times
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.faces.tobytes())
        h.update(self.positions.tobytes())
        h.update(self.times.tobytes())
        return h.hexdigest()

    def _check_degenerate(self):
        for n in range(self.n_frames):
            areas = self.face_areas(n)
            if np.any(areas <= EPS_AREA):
                m = int(np.argmax(areas <= EPS_AREA))
                raise DegenerateFace(
                    f"face {m} has area {areas[m]:.3e} <= {EPS_AREA} at frame {n}"
                )


@dataclass
class LandmarkSet:
    """Vertices with prescribed velocities.

    ``prescribed_velocities`` has shape (n_steps, n_landmarks, dim); when
    None the velocities are derived from the input vertex trajectories.
    """

    vertex_indices: np.ndarray
    prescribed_velocities: np.ndarray | None = None

    def __post_init__(self):
        self.vertex_indices = np.asarray(self.vertex_indices, dtype=np.int64)
        if len(np.unique(self.vertex_indices)) != len(self.vertex_indices):
            raise QcflowError("landmark vertex indices must be unique")
        if self.prescribed_velocities is not None:
            self.prescribed_velocities = np.asarray(
                self.prescribed_velocities, dtype=np.float64
            )

    def velocities_for(self, seq: MeshSequence) -> np.ndarray:
        """Per-step landmark velocities, derived from ``seq`` when not given."""
        if self.vertex_indices.size and (
            self.vertex_indices.min() < 0
            or self.vertex_indices.max() >= seq.n_vertices
        ):
            raise QcflowError("landmark index out of vertex range")
        if self.prescribed_velocities is not None:
            v = self.prescribed_velocities
            expect = (seq.n_frames - 1, len(self.vertex_indices), seq.dim)
            if v.shape != expect:
                raise QcflowError(
                    f"prescribed landmark velocities have shape {v.shape}, expected {expect}"
                )
            return v
        dt = np.diff(seq.times)[:, None, None]
        traj = seq.positions[:, self.vertex_indices, :]
        return (traj[1:] - traj[:-1]) / dt


# -- file I/O ----------------------------------------------------------------


def read_obj_frame(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an indexed triangle mesh from a Wavefront-style text file."""
    verts = []
    faces = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 3:
                    raise QcflowError(f"{path}:{lineno}: malformed vertex record")
                xyz = [float(t) for t in parts[1:4]]
                while len(xyz) < 3:
                    xyz.append(0.0)
                verts.append(xyz)
            elif parts[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in parts[1:]]
                if len(idx) != 3:
                    raise QcflowError(
                        f"{path}:{lineno}: only triangle faces are supported"
                    )
                faces.append(idx)
    if not verts or not faces:
        raise QcflowError(f"{path}: no vertices or faces found")
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def write_obj_frame(path, positions: np.ndarray, faces: np.ndarray):
    """Write one frame as v/f records with round-trip-safe precision."""
    p = positions
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    with open(path, "w") as fh:
        for v in p:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def write_positions_blob(path, positions: np.ndarray):
    """Binary positions blob: magic, V, N, dim header then row-major float64."""
    n, v, dim = positions.shape
    with open(path, "wb") as fh:
        fh.write(_BLOB_MAGIC)
        fh.write(struct.pack("<III", v, n, dim))
        fh.write(np.ascontiguousarray(positions, dtype=np.float64).tobytes())


def read_positions_blob(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _BLOB_MAGIC:
            raise QcflowError(f"{path}: not a qcflow positions blob")
        v, n, dim = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(), dtype=np.float64)
    if data.size != n * v * dim:
        raise QcflowError(f"{path}: truncated positions blob")
    return data.reshape(n, v, dim).copy()


def save_sequence(seq: MeshSequence, out_dir) -> Path:
    """Write a sequence in the native layout (obj + positions blob + times)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_obj_frame(out / "mesh.obj", seq.positions[0], seq.faces)
    write_positions_blob(out / "positions.qcb", seq.positions)
    with open(out / "times.csv", "w") as fh:
        for t in seq.times:
            fh.write(f"{t:.17g}\n")
    meta = {
        "dim": seq.dim,
        "n_frames": seq.n_frames,
        "n_vertices": seq.n_vertices,
        "n_faces": seq.n_faces,
    }
    with open(out / "sequence.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_sequence(frame_paths, times=None) -> MeshSequence:
    """Load a sequence from per-frame mesh files or a native directory.

    Parameters
    ----------
    frame_paths : str | Path | list of paths
        Either one native sequence directory or an ordered list of
        Wavefront-style frame files sharing one face list.
    times : array_like, optional
        Frame times; defaults to uniform spacing on [0, 1].
    """
    if isinstance(frame_paths, (str, Path)):
        frame_paths = [frame_paths]
    frame_paths = [Path(p) for p in frame_paths]
    if len(frame_paths) == 1 and frame_paths[0].is_dir():
        return _load_native(frame_paths[0], times)

    if len(frame_paths) < 2:
        raise TooFewFrames("need at least 2 frame files")
    verts0, faces0 = read_obj_frame(frame_paths[0])
    frames = [verts0]
    for p in frame_paths[1:]:
        verts, faces = read_obj_frame(p)
        if faces.shape != faces0.shape or not np.array_equal(faces, faces0):
            raise MismatchedConnectivity(f"{p}: face list differs from {frame_paths[0]}")
        if verts.shape != verts0.shape:
            raise MismatchedConnectivity(f"{p}: vertex count differs")
        frames.append(verts)
    positions = np.stack(frames)
    if np.all(positions[:, :, 2] == 0.0):
        positions = positions[:, :, :2]
    return MeshSequence(faces0, positions, times)


def _load_native(dirpath: Path, times=None) -> MeshSequence:
    for name in ("mesh.obj", "positions.qcb"):
        if not (dirpath / name).exists():
            raise QcflowError(f"{dirpath / name}: missing from sequence directory")
    _, faces = read_obj_frame(dirpath / "mesh.obj")
    positions = read_positions_blob(dirpath / "positions.qcb")
    if times is None and (dirpath / "times.csv").exists():
        times = np.loadtxt(dirpath / "times.csv", ndmin=1)
    return MeshSequence(faces, positions, times)


def load_landmarks(path, velocities_csv=None) -> LandmarkSet:
    """Read landmark vertex indices (one per line) and optional velocity CSV.

    The velocity CSV has rows ``step,landmark,comp0,comp1[,comp2]``.
    """
    indices = np.loadtxt(path, dtype=np.int64, ndmin=1)
    velocities = None
    if velocities_csv is not None:
        raw = np.loadtxt(velocities_csv, delimiter=",", ndmin=2)
        steps = raw[:, 0].astype(int)
        marks = raw[:, 1].astype(int)
        comps = raw[:, 2:]
        n_steps = steps.max() + 1
        velocities = np.zeros((n_steps, len(indices), comps.shape[1]))
        velocities[steps, marks] = comps
    return LandmarkSet(indices, velocities)


# -- preprocessing -----------------------------------------------------------


def normalize_sequence(seq: MeshSequence) -> MeshSequence:
    """Scale lengths by 1/sqrt(area at t=0) and map times affinely to [0, 1]."""
    area = seq.total_area(0)
    if area <= 0:
        raise ZeroArea(f"total area at t=0 is {area}")
    scale = 1.0 / np.sqrt(area)
    t0, t1 = seq.times[0], seq.times[-1]
    times = (seq.times - t0) / (t1 - t0)
    return MeshSequence(seq.faces, seq.positions * scale, times)


def densify_temporal(seq: MeshSequence, n_steps: int) -> MeshSequence:
    """Resample vertex trajectories on a uniform grid of ``n_steps`` times.

    Uses monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson
    slopes), so the interpolant passes through every keyframe and monotone
    coordinate trajectories stay monotone.
    """
    if n_steps < seq.n_frames:
        raise QcflowError(
            f"n_steps ({n_steps}) must be >= number of keyframes ({seq.n_frames})"
        )
    new_times = np.linspace(seq.times[0], seq.times[-1], n_steps)
    if np.array_equal(new_times, seq.times):
        return seq
    interp = PchipInterpolator(seq.times, seq.positions, axis=0)
    return MeshSequence(seq.faces, interp(new_times), new_times)


def _vertex_adjacency(faces: np.ndarray, n_vertices: int):
    from scipy import sparse

    he = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    data = np.ones(len(he))
    adj = sparse.coo_matrix(
        (data, (he[:, 0], he[:, 1])), shape=(n_vertices, n_vertices)
    )
    adj = adj + adj.T
    adj.data[:] = 1.0
    return adj.tocsr()


def _boundary_vertex_mask(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    und = np.sort(faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    edges, counts = np.unique(und, axis=0, return_counts=True)
    mask = np.zeros(n_vertices, dtype=bool)
    mask[edges[counts == 1].ravel()] = True
    return mask


def taubin_smooth(
    positions: np.ndarray,
    faces: np.ndarray,
    iterations: int,
    lam: float = TAUBIN_LAMBDA,
    mu: float = TAUBIN_MU,
) -> np.ndarray:
    """Alternating lambda/mu uniform-weight Laplacian smoothing of one frame.

    Boundary vertices are kept fixed. The shrink-compensating convention
    is lam > 0 and mu < -lam; violations only warn.
    """
    if lam <= 0 or mu >= -lam:
        warnings.warn(
            f"taubin_smooth: (lam={lam}, mu={mu}) is outside the shrink-"
            "compensating convention lam > 0, mu < -lam",
            stacklevel=2,
        )
    n_vertices = len(positions)
    adj = _vertex_adjacency(faces, n_vertices)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    deg[deg == 0] = 1.0
    movable = ~_boundary_vertex_mask(faces, n_vertices)
    p = positions.astype(np.float64, copy=True)
    for _ in range(iterations):
        for factor in (lam, mu):
            lap = adj @ p / deg[:, None] - p
            p[movable] += factor * lap[movable]
    return p


def loop_subdivide(
    positions: np.ndarray, faces: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One round of Loop subdivision of a single frame.

    Interior edge points use 3/8 (endpoints) + 1/8 (wing vertices), boundary
    edge points are midpoints; old interior vertices are relaxed with the
    valence weight beta(n) = (1/n) [5/8 - (3/8 + cos(2 pi / n) / 4)^2] and
    old boundary vertices with (1/8, 3/4, 1/8) along the boundary.
    """
    faces = np.asarray(faces, dtype=np.int64)
    n_vertices = len(positions)
    edges, edge_faces, _ = _derive_edges(faces, n_vertices)
    edge_id = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}

    p3 = positions
    # wing vertex per (edge, side): the face vertex opposite the edge
    wings = np.full((len(edges), 2), -1, dtype=np.int64)
    for e, (f1, f2) in enumerate(edge_faces):
        for slot, f in enumerate((f1, f2)):
            if f < 0:
                continue
            tri = faces[f]
            opp = [v for v in tri if v not in (edges[e, 0], edges[e, 1])]
            wings[e, slot] = opp[0]

    boundary_edge = edge_faces[:, 1] < 0
    edge_points = np.empty((len(edges), positions.shape[1]))
    a, b = edges[:, 0], edges[:, 1]
    edge_points[boundary_edge] = 0.5 * (p3[a[boundary_edge]] + p3[b[boundary_edge]])
    interior = ~boundary_edge
    edge_points[interior] = (
        0.375 * (p3[a[interior]] + p3[b[interior]])
        + 0.125 * (p3[wings[interior, 0]] + p3[wings[interior, 1]])
    )

    adj = _vertex_adjacency(faces, n_vertices)
    valence = np.asarray(adj.sum(axis=1)).ravel()
    boundary_v = _boundary_vertex_mask(faces, n_vertices)
    new_old = np.empty_like(p3, dtype=np.float64)

    n = np.maximum(valence, 3.0)
    beta = (0.625 - (0.375 + 0.25 * np.cos(2.0 * np.pi / n)) ** 2) / n
    neighbor_sum = adj @ p3
    new_old[:] = (1.0 - valence * beta)[:, None] * p3 + beta[:, None] * neighbor_sum

    if boundary_v.any():
        nbr_sum = np.zeros_like(p3)
        nbr_cnt = np.zeros(n_vertices)
        for e in np.nonzero(boundary_edge)[0]:
            va, vb = edges[e]
            nbr_sum[va] += p3[vb]
            nbr_sum[vb] += p3[va]
            nbr_cnt[va] += 1
            nbr_cnt[vb] += 1
        ok = boundary_v & (nbr_cnt == 2)
        new_old[ok] = 0.75 * p3[ok] + 0.125 * nbr_sum[ok]

    new_positions = np.vstack([new_old, edge_points])

    def eid(u, v):
        return edge_id[(min(u, v), max(u, v))] + n_vertices

    new_faces = np.empty((4 * len(faces), 3), dtype=np.int64)
    for i, (v0, v1, v2) in enumerate(faces):
        e01, e12, e20 = eid(v0, v1), eid(v1, v2), eid(v2, v0)
        new_faces[4 * i + 0] = (v0, e01, e20)
        new_faces[4 * i + 1] = (v1, e12, e01)
        new_faces[4 * i + 2] = (v2, e20, e12)
        new_faces[4 * i + 3] = (e01, e12, e20)
    return new_positions, new_faces


def subdivide_sequence(seq: MeshSequence) -> MeshSequence:
    """Loop-subdivide every frame with the shared refined connectivity."""
    frames = []
    new_faces = None
    for n in range(seq.n_frames):
        pos, nf = loop_subdivide(seq.positions[n], seq.faces)
        frames.append(pos)
        new_faces = nf
    return MeshSequence(new_faces, np.stack(frames), seq.times)


def _min_angles(points2d: np.ndarray, faces: np.ndarray) -> np.ndarray:
    angles = np.empty((len(faces), 3))
    for k in range(3):
        a = points2d[faces[:, k]]
        b = points2d[faces[:, (k + 1) % 3]]
        c = points2d[faces[:, (k + 2) % 3]]
        u = b - a
        v = c - a
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        denom = np.maximum(nu * nv, 1e-300)
        cosang = np.clip(np.einsum("ij,ij->i", u, v) / denom, -1.0, 1.0)
        angles[:, k] = np.arccos(cosang)
    return angles.min(axis=1)


def triangulate_point_cloud(
    points: np.ndarray, min_angle_deg: float = SLIVER_MIN_ANGLE_DEG
) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate scattered 3D points via best-fit-plane Delaunay.

    Points are projected onto their principal plane, triangulated there, and
    boundary triangles with a minimum angle below ``min_angle_deg`` are
    stripped before lifting the triangulation back to the 3D points.

    Returns (kept_points, faces) with unreferenced points dropped.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 3:
        raise DegenerateCloud("need at least 3 points")
    if points.shape[1] == 2:
        points = np.column_stack([points, np.zeros(len(points))])
    centered = points - points.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[1] <= 1e-12 * max(svals[0], 1.0):
        raise DegenerateCloud("points are collinear (rank < 2)")
    proj = centered @ vt[:2].T

    tri = Delaunay(proj)
    faces = tri.simplices.astype(np.int64)
    # consistent CCW orientation in the projection plane
    p0 = proj[faces[:, 0]]
    e1 = proj[faces[:, 1]] - p0
    e2 = proj[faces[:, 2]] - p0
    flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]

    threshold = np.deg2rad(min_angle_deg)
    while len(faces):
        und = np.sort(faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, inverse, counts = np.unique(
            und, axis=0, return_inverse=True, return_counts=True
        )
        on_boundary = (counts[inverse].reshape(-1, 3) == 1).any(axis=1)
        sliver = on_boundary & (_min_angles(proj, faces) < threshold)
        if not sliver.any():
            break
        faces = faces[~sliver]
    if len(faces) == 0:
        raise DegenerateCloud("no faces survive sliver removal")

    used = np.unique(faces)
    remap = np.full(len(points), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return points[used], remap[faces]
