"""Discrete kinematic tensors per face: strain rate, curvature tensor,
growth strain, bending strain, and scalar dilation/shear rates.

All tensors are 3x3 matrices in the embedding space, projected onto the
face planes. The stored growth strain uses the half-metric-rate convention
(G reduces to half the metric rate when the flow coefficients vanish), so
the trace of G is the dilation rate.
"""

from __future__ import annotations

import numpy as np

from .geometry import CurvatureField, FaceFrameField


def velocity_edge_diffs(faces: np.ndarray, velocities: np.ndarray):
    """Per-face edge-vector rates (dV1, dV2) from vertex velocities.

    Because E_i(t + dt) = E_i(t) + dt (V_i - V_0), the edge-vector rate is
    exactly the vertex velocity difference; planar velocities are lifted to
    3D with zero normal component.
    """
    v = np.asarray(velocities, dtype=np.float64)
    if v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(len(v))])
    dv1 = v[faces[:, 1]] - v[faces[:, 0]]
    dv2 = v[faces[:, 2]] - v[faces[:, 0]]
    return dv1, dv2


def strain_rate(
    frames: FaceFrameField, dv1: np.ndarray, dv2: np.ndarray
) -> np.ndarray:
    """Projected metric-rate tensor Q [dV_i (x) E^i + E^i (x) dV_i] Q.

    This is the full metric rate in mixed/ambient form: a uniform scaling
    flow V = P yields tangential eigenvalues of 2.
    """
    a = (
        np.einsum("ij,ik->ijk", dv1, frames.E1_dual)
        + np.einsum("ij,ik->ijk", frames.E1_dual, dv1)
        + np.einsum("ij,ik->ijk", dv2, frames.E2_dual)
        + np.einsum("ij,ik->ijk", frames.E2_dual, dv2)
    )
    q = frames.projector
    return np.einsum("ijk,ikl,ilm->ijm", q, a, q)


def curvature_tensor(curv: CurvatureField) -> np.ndarray:
    """Spectral curvature tensor B = k1 d1 (x) d1 + k2 d2 (x) d2 per face."""
    return curv.kappa1[:, None, None] * np.einsum(
        "ij,ik->ijk", curv.dir1, curv.dir1
    ) + curv.kappa2[:, None, None] * np.einsum("ij,ik->ijk", curv.dir2, curv.dir2)


def growth_strain(
    qdot: np.ndarray,
    frames: FaceFrameField,
    curvature_b: np.ndarray,
    mean_curv: np.ndarray,
    gauss_curv: np.ndarray,
    lam: np.ndarray,
) -> np.ndarray:
    """Growth strain: half the metric rate minus the geometric-flow terms.

    G = qdot/2 - lam1 Q - lam2 H B - lam3 K Q, with lam = (lam1, lam2, lam3)
    spatially constant. With lam = 0 this is exactly the half metric rate.
    """
    lam1, lam2, lam3 = lam
    g = 0.5 * qdot
    if lam1 != 0.0:
        g = g - lam1 * frames.projector
    if lam2 != 0.0:
        g = g - lam2 * mean_curv[:, None, None] * curvature_b
    if lam3 != 0.0:
        g = g - lam3 * gauss_curv[:, None, None] * frames.projector
    return g


def bending_strain(
    frames_t: FaceFrameField, frames_next: FaceFrameField, dt: float
) -> np.ndarray:
    """Rate of change of the unit face normal between consecutive frames."""
    return (frames_next.normal - frames_t.normal) / dt


def tangent_eigendecomposition(tensors: np.ndarray, frames: FaceFrameField):
    """In-plane eigenvalues/vectors of symmetric tangent tensors.

    The known null direction (the face normal) is deflated first, reducing
    each face to a 2x2 symmetric problem in the orthonormal tangent basis.
    Returns (g1, g2, vec1) with g1 >= g2 and vec1 the 3D unit eigenvector
    of g1 (zero vector for exactly-zero tensors).
    """
    u1 = frames.tan1
    u2 = frames.tan2
    t11 = np.einsum("ij,ijk,ik->i", u1, tensors, u1)
    t12 = np.einsum("ij,ijk,ik->i", u1, tensors, u2)
    t22 = np.einsum("ij,ijk,ik->i", u2, tensors, u2)

    half_tr = 0.5 * (t11 + t22)
    rad = np.sqrt(np.maximum(0.25 * (t11 - t22) ** 2 + t12 * t12, 0.0))
    g1 = half_tr + rad
    g2 = half_tr - rad

    # eigenvector of g1 in the (u1, u2) basis
    c1 = np.where(np.abs(t12) > 1e-300, t12, 0.0)
    c2 = g1 - t11
    # fall back to the dominant diagonal when the off-diagonal vanishes
    diag_pick = np.abs(t12) <= 1e-14 * np.maximum(np.abs(t11), np.abs(t22))
    c1 = np.where(diag_pick, np.where(t11 >= t22, 1.0, 0.0), c1)
    c2 = np.where(diag_pick, np.where(t11 >= t22, 0.0, 1.0), c2)
    vec = c1[:, None] * u1 + c2[:, None] * u2
    norm = np.linalg.norm(vec, axis=1)
    zero = norm == 0.0
    norm[zero] = 1.0
    vec = vec / norm[:, None]
    vec[zero] = 0.0

    exact_zero = np.max(np.abs(np.stack([t11, t12, t22], axis=1)), axis=1) == 0.0
    vec[exact_zero] = 0.0
    return g1, g2, vec


def dilation_shear_rates(q_half: np.ndarray, frames: FaceFrameField):
    """Dilation rate, shear rate, and major axis of half-metric-rate tensors.

    The in-plane eigenvalues g1 >= g2 give dilation = g1 + g2 and shear =
    g1 - g2 (nonnegative); the major axis is the eigenvector of g1, reported
    as the zero vector for exactly-zero tensors.
    """
    g1, g2, vec = tangent_eigendecomposition(q_half, frames)
    return g1 + g2, g1 - g2, vec
