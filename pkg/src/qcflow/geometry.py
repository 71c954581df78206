"""Per-face tangent frames, curvature estimation, boundary frames, and the
accumulated metric decomposition (conformal factor, eccentricity, Beltrami
coefficient)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFace, OrientationFlip
from .mesh import EPS_AREA, MeshSequence

_AXES = np.eye(3)


@dataclass
class FaceFrame:
    """Tangent frame of a single triangle."""

    E1: np.ndarray
    E2: np.ndarray
    E1_dual: np.ndarray
    E2_dual: np.ndarray
    normal: np.ndarray
    area: float
    centroid: np.ndarray
    projector: np.ndarray


class FaceFrameField:
    """Vectorized tangent frames for every face of one frame.

    Edge vectors E1 = P1 - P0 and E2 = P2 - P0 span each triangle; the dual
    row vectors solve the 2x2 Gram system so that E^i . E_j = delta^i_j, and
    the projector Q = E_i (x) E^i equals I - n (x) n on the face plane.
    """

    def __init__(self, positions3d: np.ndarray, faces: np.ndarray):
        p0 = positions3d[faces[:, 0]]
        p1 = positions3d[faces[:, 1]]
        p2 = positions3d[faces[:, 2]]
        self.E1 = p1 - p0
        self.E2 = p2 - p0
        cross = np.cross(self.E1, self.E2)
        cross_norm = np.linalg.norm(cross, axis=1)
        self.area = 0.5 * cross_norm
        if np.any(self.area <= EPS_AREA):
            m = int(np.argmax(self.area <= EPS_AREA))
            raise DegenerateFace(f"face {m} has area {self.area[m]:.3e}")
        self.normal = cross / cross_norm[:, None]
        self.centroid = (p0 + p1 + p2) / 3.0

        g11 = np.einsum("ij,ij->i", self.E1, self.E1)
        g12 = np.einsum("ij,ij->i", self.E1, self.E2)
        g22 = np.einsum("ij,ij->i", self.E2, self.E2)
        det = g11 * g22 - g12 * g12
        self.E1_dual = (g22[:, None] * self.E1 - g12[:, None] * self.E2) / det[:, None]
        self.E2_dual = (g11[:, None] * self.E2 - g12[:, None] * self.E1) / det[:, None]
        self.projector = np.einsum("ij,ik->ijk", self.E1, self.E1_dual) + np.einsum(
            "ij,ik->ijk", self.E2, self.E2_dual
        )
        # orthonormal in-plane basis, right-handed with the normal
        self.tan1 = self.E1 / np.linalg.norm(self.E1, axis=1)[:, None]
        self.tan2 = np.cross(self.normal, self.tan1)

    @property
    def n_faces(self) -> int:
        return len(self.area)

    def face(self, m: int) -> FaceFrame:
        return FaceFrame(
            E1=self.E1[m],
            E2=self.E2[m],
            E1_dual=self.E1_dual[m],
            E2_dual=self.E2_dual[m],
            normal=self.normal[m],
            area=float(self.area[m]),
            centroid=self.centroid[m],
            projector=self.projector[m],
        )


def build_face_frames(positions: np.ndarray, faces: np.ndarray) -> FaceFrameField:
    """Frames for one frame of positions (planar input is lifted to z = 0)."""
    p = np.asarray(positions, dtype=np.float64)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    return FaceFrameField(p, faces)


def face_frame(positions: np.ndarray, faces: np.ndarray, face_index: int) -> FaceFrame:
    """Tangent frame of a single face (see :class:`FaceFrameField`)."""
    return build_face_frames(positions, faces[face_index : face_index + 1]).face(0)


# -- curvature ----------------------------------------------------------------


@dataclass
class CurvatureField:
    """Per-face principal curvatures and directions (kappa1 >= kappa2).

    Sign convention: with outward normals, convex closed surfaces have
    positive curvatures (unit sphere: kappa1 = kappa2 = +1).
    """

    kappa1: np.ndarray
    kappa2: np.ndarray
    dir1: np.ndarray
    dir2: np.ndarray
    flags: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return 0.5 * (self.kappa1 + self.kappa2)

    @property
    def gaussian(self) -> np.ndarray:
        return self.kappa1 * self.kappa2

    @classmethod
    def zero(cls, frames: FaceFrameField) -> "CurvatureField":
        m = frames.n_faces
        return cls(
            kappa1=np.zeros(m),
            kappa2=np.zeros(m),
            dir1=frames.tan1.copy(),
            dir2=frames.tan2.copy(),
            flags=np.zeros(m, dtype=bool),
        )

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("face,kappa1,kappa2,H,K,dir1_x,dir1_y,dir1_z,dir2_x,dir2_y,dir2_z\n")
            H = self.mean
            K = self.gaussian
            for m in range(len(self.kappa1)):
                d1 = self.dir1[m]
                d2 = self.dir2[m]
                fh.write(
                    f"{m},{self.kappa1[m]:.17g},{self.kappa2[m]:.17g},"
                    f"{H[m]:.17g},{K[m]:.17g},"
                    f"{d1[0]:.17g},{d1[1]:.17g},{d1[2]:.17g},"
                    f"{d2[0]:.17g},{d2[1]:.17g},{d2[2]:.17g}\n"
                )


def _vertex_rings(faces: np.ndarray, n_vertices: int):
    neighbors = [set() for _ in range(n_vertices)]
    for v0, v1, v2 in faces:
        neighbors[v0].update((v1, v2))
        neighbors[v1].update((v0, v2))
        neighbors[v2].update((v0, v1))
    return neighbors


def _vertex_normals(positions: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p0 = positions[faces[:, 0]]
    cross = np.cross(positions[faces[:, 1]] - p0, positions[faces[:, 2]] - p0)
    normals = np.zeros_like(positions)
    for k in range(3):
        np.add.at(normals, faces[:, k], cross)  # cross has 2*area weighting
    norms = np.linalg.norm(normals, axis=1)
    norms[norms == 0] = 1.0
    return normals / norms[:, None]


def estimate_curvature(
    positions: np.ndarray, faces: np.ndarray, frames: FaceFrameField
) -> CurvatureField:
    """Principal curvatures per face from per-vertex quadric fits.

    Each vertex's neighborhood (2-ring, extended to 3-ring when fewer than 5
    neighbors) is expressed as a height function over the vertex tangent
    plane and fit with h = (a x^2 + 2 b x y + c y^2)/2 + d x + e y; the shape
    operator eigen-decomposition of the fit gives curvatures and directions.
    Face values average the three vertex values; averaged directions are
    re-orthonormalized in the face plane. Rank-deficient neighborhoods are
    flagged and carry zero curvature.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape[1] == 2:
        return CurvatureField.zero(frames)

    n_vertices = len(positions)
    rings1 = _vertex_rings(faces, n_vertices)
    normals = _vertex_normals(positions, faces)

    vk1 = np.zeros(n_vertices)
    vk2 = np.zeros(n_vertices)
    vdir1 = np.zeros((n_vertices, 3))
    vflag = np.zeros(n_vertices, dtype=bool)

    for v in range(n_vertices):
        nring = set(rings1[v])
        for u in list(nring):
            nring.update(rings1[u])
        nring.discard(v)
        if len(nring) < 5:
            for u in list(nring):
                nring.update(rings1[u])
            nring.discard(v)
        idx = np.fromiter(sorted(nring), dtype=np.int64)
        nv = normals[v]
        t1 = _AXES[np.argmin(np.abs(nv))]
        t1 = t1 - nv * (t1 @ nv)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(nv, t1)

        d = positions[idx] - positions[v]
        x = d @ t1
        y = d @ t2
        h = d @ nv
        design = np.column_stack([0.5 * x * x, x * y, 0.5 * y * y, x, y])
        coeff, _, rank, _ = np.linalg.lstsq(design, h, rcond=None)
        if rank < 5:
            vflag[v] = True
            vdir1[v] = t1
            continue
        a, b, c, dd, ee = coeff
        scale = np.sqrt(1.0 + dd * dd + ee * ee)
        first = np.array([[1.0 + dd * dd, dd * ee], [dd * ee, 1.0 + ee * ee]])
        second = -np.array([[a, b], [b, c]]) / scale
        # generalized symmetric eigenproblem II v = kappa I v
        from scipy.linalg import eigh

        w, vecs = eigh(second, first)
        k_small, k_big = w[0], w[1]
        dir_big = vecs[:, 1]
        vk1[v], vk2[v] = k_big, k_small
        d3 = dir_big[0] * t1 + dir_big[1] * t2
        vdir1[v] = d3 / np.linalg.norm(d3)

    # face aggregation: mean curvatures, sign-aligned direction average
    fk1 = vk1[faces].mean(axis=1)
    fk2 = vk2[faces].mean(axis=1)
    fflag = vflag[faces].any(axis=1)

    d_a = vdir1[faces[:, 0]]
    d_b = vdir1[faces[:, 1]]
    d_c = vdir1[faces[:, 2]]
    d_b = np.where((np.einsum("ij,ij->i", d_a, d_b) < 0)[:, None], -d_b, d_b)
    d_c = np.where((np.einsum("ij,ij->i", d_a, d_c) < 0)[:, None], -d_c, d_c)
    avg = d_a + d_b + d_c
    inplane = np.einsum("ijk,ik->ij", frames.projector, avg)
    norms = np.linalg.norm(inplane, axis=1)
    weak = norms < 1e-8
    dir1 = np.where(weak[:, None], frames.tan1, inplane / np.maximum(norms, 1e-300)[:, None])
    dir2 = np.cross(frames.normal, dir1)

    swap = fk1 < fk2
    fk1_, fk2_ = fk1.copy(), fk2.copy()
    fk1_[swap], fk2_[swap] = fk2[swap], fk1[swap]
    dir1_, dir2_ = dir1.copy(), dir2.copy()
    dir1_[swap], dir2_[swap] = dir2[swap], dir1[swap]

    fk1_[fflag] = 0.0
    fk2_[fflag] = 0.0
    return CurvatureField(fk1_, fk2_, dir1_, dir2_, fflag)


# -- boundary -----------------------------------------------------------------


@dataclass
class BoundaryFrameField:
    """Per boundary-edge tangent, outward co-normal, midpoint, and length."""

    edge_vertices: np.ndarray
    tangent: np.ndarray
    conormal: np.ndarray
    midpoint: np.ndarray
    length: np.ndarray
    adjacent_face: np.ndarray


def boundary_frames(
    seq_or_faces, positions: np.ndarray, frames: FaceFrameField
) -> BoundaryFrameField:
    """Boundary frames of one frame; closed surfaces yield empty arrays.

    The tangent follows consecutive boundary vertices; the co-normal is
    tangent x normal with the sign fixed to point away from the adjacent
    face centroid.
    """
    if isinstance(seq_or_faces, MeshSequence):
        boundary = seq_or_faces.boundary_edges
        faces = seq_or_faces.faces
    else:
        faces = np.asarray(seq_or_faces)
        from .mesh import _derive_edges

        _, _, boundary = _derive_edges(faces, int(positions.shape[0]))

    p = np.asarray(positions, dtype=np.float64)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    if len(boundary) == 0:
        empty3 = np.zeros((0, 3))
        return BoundaryFrameField(
            edge_vertices=np.zeros((0, 2), dtype=np.int64),
            tangent=empty3,
            conormal=empty3,
            midpoint=empty3,
            length=np.zeros(0),
            adjacent_face=np.zeros(0, dtype=np.int64),
        )

    # unique incident face per boundary edge
    key_to_face = {}
    for f, tri in enumerate(faces):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key_to_face.setdefault((min(a, b), max(a, b)), []).append(f)
    adj = np.array(
        [key_to_face[(min(a, b), max(a, b))][0] for a, b in boundary], dtype=np.int64
    )

    pa = p[boundary[:, 0]]
    pb = p[boundary[:, 1]]
    seg = pb - pa
    length = np.linalg.norm(seg, axis=1)
    tangent = seg / length[:, None]
    midpoint = 0.5 * (pa + pb)
    normal = frames.normal[adj]
    conormal = np.cross(tangent, normal)
    conormal /= np.linalg.norm(conormal, axis=1)[:, None]
    outward = np.einsum("ij,ij->i", conormal, midpoint - frames.centroid[adj])
    conormal[outward < 0] *= -1.0
    return BoundaryFrameField(boundary, tangent, conormal, midpoint, length, adj)


# -- accumulated metric decomposition ------------------------------------------


@dataclass
class MetricDecomposition:
    """Conformal factor, eccentricity, rotation, and Beltrami coefficient of
    the in-plane map from a reference face to a deformed face."""

    omega: float
    eccentricity: float
    theta: float
    mu: complex


def _plane_coords(frame: FaceFrame) -> np.ndarray:
    u1 = frame.E1 / np.linalg.norm(frame.E1)
    u2 = np.cross(frame.normal, u1)
    return np.array([[frame.E1 @ u1, frame.E2 @ u1], [frame.E1 @ u2, frame.E2 @ u2]])


def metric_decomposition(frame_0: FaceFrame, frame_t: FaceFrame) -> MetricDecomposition:
    """Decompose the deformation carrying ``frame_0`` onto ``frame_t``.

    The 2x2 in-plane deformation gradient (expressed in right-handed
    orthonormal tangent bases) is split by SVD: with singular values
    s1 >= s2 > 0, the conformal factor is s1*s2, the axis ratio is
    1 + eps = s1/s2, and theta (mod pi) orients the major axis in the
    reference tangent basis. The Beltrami coefficient is
    eps/(2 + eps) * exp(-2 i theta).
    """
    m0 = _plane_coords(frame_0)
    mt = _plane_coords(frame_t)
    F = mt @ np.linalg.inv(m0)
    if np.linalg.det(F) <= 0:
        raise OrientationFlip("in-plane deformation gradient has det <= 0")
    _, svals, vt = np.linalg.svd(F)
    s1, s2 = svals
    omega = s1 * s2
    eps = s1 / s2 - 1.0
    if eps <= 1e-14:
        theta = 0.0
        eps = max(eps, 0.0)
    else:
        v1 = vt[0]
        theta = float(np.arctan2(v1[1], v1[0])) % np.pi
    mu = eps / (2.0 + eps) * np.exp(-2j * theta)
    return MetricDecomposition(float(omega), float(eps), float(theta), complex(mu))
