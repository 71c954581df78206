"""Discrete spatial-gradient operator for per-face tensor fields.

For each interior edge, dotting the (unknown) face gradients with the
centroid-to-edge-midpoint displacement vectors should reproduce the
difference of the field across the edge. Stacking these rows gives a sparse
displacement matrix U (one row per interior edge, columns indexed by the
face/component multi-index 3*face + component) and a finite-difference
matrix Delta with one -1/+1 pair per row. The per-face gradient is the
minimum-norm least-squares solution, applied through the normal equations
of U; the operator depends on the frame geometry and is rebuilt per step.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ShapeMismatch, SingularSystem
from .geometry import FaceFrameField


class GradientOperator:
    """Assembled gradient operator for one frame.

    Attributes
    ----------
    delta : (L, M) csr matrix
        Finite-difference matrix over interior edges.
    U : (L, 3M) csr matrix
        Centroid/midpoint displacement components.
    face_areas : (M,) array
    isolated_faces : (M,) bool array
        Faces touching no interior edge; their gradient is defined as zero.
    """

    def __init__(self, delta, U, face_areas, isolated_faces):
        self.delta = delta
        self.U = U
        self.face_areas = face_areas
        self.isolated_faces = isolated_faces
        self.n_faces = len(face_areas)
        normal = (U @ U.T).tocsc()
        try:
            self._lu = splu(normal)
            self._dense_pinv = None
        except RuntimeError:
            warnings.warn(
                "gradient-operator normal equations are singular; "
                "falling back to a dense pseudoinverse",
                stacklevel=2,
            )
            if U.shape[1] > 6000:
                raise SingularSystem(
                    "singular normal equations on a mesh too large for the dense fallback"
                )
            self._lu = None
            self._dense_pinv = np.linalg.pinv(U.toarray())

    def _pinv_apply(self, rhs: np.ndarray) -> np.ndarray:
        """U^+ rhs for edge-space right-hand sides (columns allowed)."""
        if self._lu is not None:
            return self.U.T @ self._lu.solve(rhs)
        return self._dense_pinv @ rhs

    def apply(self, field: np.ndarray) -> np.ndarray:
        """Gradient of a per-face tensor field.

        Parameters
        ----------
        field : (M, 3, 3) array
            Symmetric tangent tensors per face.

        Returns
        -------
        (M, 3, 3, 3) array
            ``out[m, alpha]`` is the derivative of the field in embedding
            direction ``alpha`` at face ``m``.
        """
        field = np.asarray(field, dtype=np.float64)
        if field.shape != (self.n_faces, 3, 3):
            raise ShapeMismatch(
                f"field has shape {field.shape}, expected {(self.n_faces, 3, 3)}"
            )
        flat = field.reshape(self.n_faces, 9)
        rhs = self.delta @ flat
        grad = self._pinv_apply(rhs)
        return grad.reshape(self.n_faces, 3, 3, 3)

    def apply_adjoint(self, w: np.ndarray) -> np.ndarray:
        """Transpose action: maps (M, 3, 3, 3) sensitivities back to (M, 3, 3)."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.n_faces, 3, 3, 3):
            raise ShapeMismatch(
                f"sensitivity has shape {w.shape}, expected {(self.n_faces, 3, 3, 3)}"
            )
        flat = w.reshape(3 * self.n_faces, 9)
        if self._lu is not None:
            z = self._lu.solve(self.U @ flat)
        else:
            z = self._dense_pinv.T @ flat
        back = self.delta.T @ z
        return np.asarray(back).reshape(self.n_faces, 3, 3)

    def dense_composite(self) -> np.ndarray:
        """Dense (3M, M) matrix P with apply(field) = P @ field (test helper)."""
        rhs = self.delta.toarray()
        return self._pinv_apply(rhs)

    def pinv_residual(self, rng=None) -> float:
        """Max-norm residual of U U^+ U x - U x on random probes."""
        rng = rng or np.random.default_rng(0)
        x = rng.standard_normal((self.U.shape[1], 3))
        ux = self.U @ x
        back = self.U @ self._pinv_apply(ux)
        return float(np.abs(back - ux).max())


def build_gradient_operator(
    frames: FaceFrameField,
    edges: np.ndarray,
    edge_faces: np.ndarray,
    positions3d: np.ndarray,
) -> GradientOperator:
    """Assemble the operator for one frame.

    For an interior edge between faces (f, f') with f < f', the U row holds
    centroid(f) -> midpoint in the columns of f and midpoint -> centroid(f')
    in the columns of f'; Delta holds -1 at f and +1 at f'.
    """
    interior = edge_faces[:, 1] >= 0
    n_interior = int(interior.sum())
    m = frames.n_faces
    if m < 2 or n_interior == 0:
        raise SingularSystem("mesh has no interior edges")

    e_int = edges[interior]
    f_first = np.minimum(edge_faces[interior, 0], edge_faces[interior, 1])
    f_second = np.maximum(edge_faces[interior, 0], edge_faces[interior, 1])
    midpoints = 0.5 * (positions3d[e_int[:, 0]] + positions3d[e_int[:, 1]])

    rows = np.repeat(np.arange(n_interior), 2)
    cols = np.stack([f_first, f_second], axis=1).ravel()
    vals = np.tile([-1.0, 1.0], n_interior)
    delta = sparse.csr_matrix((vals, (rows, cols)), shape=(n_interior, m))

    u_rows = np.repeat(np.arange(n_interior), 6)
    u_cols = np.concatenate(
        [(3 * f_first[:, None] + np.arange(3)), (3 * f_second[:, None] + np.arange(3))],
        axis=1,
    ).ravel()
    disp_first = midpoints - frames.centroid[f_first]
    disp_second = frames.centroid[f_second] - midpoints
    u_vals = np.concatenate([disp_first, disp_second], axis=1).ravel()
    U = sparse.csr_matrix((u_vals, (u_rows, u_cols)), shape=(n_interior, 3 * m))

    touched = np.zeros(m, dtype=bool)
    touched[f_first] = True
    touched[f_second] = True
    return GradientOperator(delta, U, frames.area.copy(), ~touched)
