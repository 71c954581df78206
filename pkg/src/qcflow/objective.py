"""Model presets, prescribed-constraint extraction, and assembly of the
total per-step cost with its analytic gradient.

The per-step unknowns are the vertex velocities (2 components per vertex in
planar mode, 3 otherwise) plus any fitted flow coefficients. All model
terms are integrated with the step's time increment and face areas; the
soft-constraint terms pin the data-prescribed normal, boundary-normal, and
landmark velocities with large weights.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonFiniteCost, UnknownPreset
from .geometry import (
    BoundaryFrameField,
    CurvatureField,
    FaceFrameField,
    boundary_frames,
    build_face_frames,
    estimate_curvature,
)
from .gradop import GradientOperator, build_gradient_operator
from .mesh import LandmarkSet, MeshSequence
from .strain import curvature_tensor, growth_strain, velocity_edge_diffs

DEFAULT_CONSTRAINT_WEIGHT = 1e5

_EYE3 = np.eye(3)


@dataclass
class ModelSpec:
    """Moduli, constraint weights, and coefficient-fitting flags."""

    A1: float = 0.0
    B1: float = 0.0
    A2: float = 0.0
    B2: float = 0.0
    A3: float = 0.0
    Cg: float = 0.0
    Cn: float = DEFAULT_CONSTRAINT_WEIGHT
    Cb: float = DEFAULT_CONSTRAINT_WEIGHT
    CL: float = DEFAULT_CONSTRAINT_WEIGHT
    fit_lambda: tuple[bool, bool, bool] = (False, False, False)
    preset_name: str = "custom"

    def __post_init__(self):
        if self.A1 - self.B1 / 2 + self.B1 < 0 or self.A2 - self.B2 / 2 + self.B2 < 0:
            warnings.warn(
                "model moduli fail the coercivity check A - B/2 + B >= 0",
                stacklevel=2,
            )

    @property
    def fits_any_lambda(self) -> bool:
        return any(self.fit_lambda)

    @property
    def needs_growth_strain(self) -> bool:
        return any(v != 0.0 for v in (self.A1, self.B1, self.A2, self.B2))

    @property
    def needs_gradient_operator(self) -> bool:
        return self.A2 != 0.0 or self.B2 != 0.0

    def to_config(self) -> str:
        data = {
            "A1": self.A1,
            "B1": self.B1,
            "A2": self.A2,
            "B2": self.B2,
            "A3": self.A3,
            "Cg": self.Cg,
            "Cn": self.Cn,
            "Cb": self.Cb,
            "CL": self.CL,
            "fit_lambda1": self.fit_lambda[0],
            "fit_lambda2": self.fit_lambda[1],
            "fit_lambda3": self.fit_lambda[2],
            "preset": self.preset_name,
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_config(cls, text: str) -> "ModelSpec":
        data = json.loads(text)
        base = preset(data["preset"]) if data.get("preset", "custom") != "custom" else cls()
        kwargs = {}
        for key in ("A1", "B1", "A2", "B2", "A3", "Cg", "Cn", "Cb", "CL"):
            if key in data:
                kwargs[key] = float(data[key])
        if any(f"fit_lambda{i}" in data for i in (1, 2, 3)):
            kwargs["fit_lambda"] = tuple(
                bool(data.get(f"fit_lambda{i}", False)) for i in (1, 2, 3)
            )
        kwargs["preset_name"] = data.get("preset", "custom")
        return replace(base, **kwargs)


_PRESETS = {
    "almost_conformal": dict(A1=1.0),
    "viscous": dict(A1=1.0, B1=1.0, A3=1.0),
    "almost_uniform": dict(A2=1.0, B2=1.0),
    "geometric": dict(A1=1.0, B1=1.0, Cg=0.1, fit_lambda=(True, True, True)),
}


def preset(name: str) -> ModelSpec:
    """Named model preset (almost_conformal, viscous, almost_uniform, geometric)."""
    if name not in _PRESETS:
        raise UnknownPreset(
            f"unknown preset {name!r}; choose from {sorted(_PRESETS)}"
        )
    return ModelSpec(preset_name=name, **_PRESETS[name])


def _rigidity_coeffs(a: float, b: float) -> tuple[float, float]:
    # The A modulus drives the traceless (shear) response and the B modulus
    # the trace (dilation) response: the energy equals B * tr(G)^2 over the
    # tangent plane plus (A/2) * shear^2.
    return b - 0.5 * a, a


@dataclass
class CostBreakdown:
    """Values of the individual cost terms at one evaluation."""

    viscous: float = 0.0
    grad: float = 0.0
    bend: float = 0.0
    normal: float = 0.0
    boundary: float = 0.0
    landmark: float = 0.0
    lambda_reg: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.viscous
            + self.grad
            + self.bend
            + self.normal
            + self.boundary
            + self.landmark
            + self.lambda_reg
        )

    def as_dict(self) -> dict:
        return {
            "viscous": self.viscous,
            "grad": self.grad,
            "bend": self.bend,
            "normal": self.normal,
            "boundary": self.boundary,
            "landmark": self.landmark,
            "lambda_reg": self.lambda_reg,
            "total": self.total,
        }


@dataclass
class PrescribedFields:
    """Data-prescribed velocity components, fixed over the whole solve.

    ``vbar_normal`` is (n_steps, n_faces) or None in planar mode;
    ``vbar_boundary`` is (n_steps, n_boundary_edges) or None for closed
    surfaces; landmark velocities are (n_steps, n_landmarks, dim).
    """

    vbar_normal: np.ndarray | None
    vbar_boundary: np.ndarray | None
    landmark_indices: np.ndarray
    vbar_landmark: np.ndarray | None


def data_velocities(seq: MeshSequence, n: int) -> np.ndarray:
    """Input-registration vertex velocities for step n."""
    dt = seq.times[n + 1] - seq.times[n]
    return (seq.positions[n + 1] - seq.positions[n]) / dt


def extract_constraints(
    seq: MeshSequence, landmarks: LandmarkSet | None = None
) -> PrescribedFields:
    """Prescribed normal/boundary/landmark velocities from the input data.

    Per step, the face value is the centroid velocity dotted with the face
    normal and the boundary value is the edge-midpoint velocity dotted with
    the outward co-normal, both evaluated on the frame at the start of the
    step. Planar sequences skip the normal field (identically zero).
    """
    n_steps = seq.n_frames - 1
    vbar_normal = None if seq.is_planar else np.zeros((n_steps, seq.n_faces))
    vbar_boundary = (
        None if seq.is_closed else np.zeros((n_steps, len(seq.boundary_edges)))
    )
    for n in range(n_steps):
        frames = build_face_frames(seq.positions[n], seq.faces)
        vel = data_velocities(seq, n)
        vel3 = vel if seq.dim == 3 else np.column_stack([vel, np.zeros(len(vel))])
        if vbar_normal is not None:
            vc = (vel3[seq.faces[:, 0]] + vel3[seq.faces[:, 1]] + vel3[seq.faces[:, 2]]) / 3.0
            vbar_normal[n] = np.einsum("ij,ij->i", frames.normal, vc)
        if vbar_boundary is not None:
            bnd = boundary_frames(seq, seq.positions[n], frames)
            ve = 0.5 * (vel3[bnd.edge_vertices[:, 0]] + vel3[bnd.edge_vertices[:, 1]])
            vbar_boundary[n] = np.einsum("ij,ij->i", bnd.conormal, ve)

    if landmarks is None or len(landmarks.vertex_indices) == 0:
        indices = np.zeros(0, dtype=np.int64)
        vbar_landmark = None
    else:
        indices = landmarks.vertex_indices
        vbar_landmark = landmarks.velocities_for(seq)
    return PrescribedFields(vbar_normal, vbar_boundary, indices, vbar_landmark)


class StepContext:
    """Geometry and prescribed data for one time step, fixed during the solve."""

    def __init__(
        self,
        seq: MeshSequence,
        n: int,
        prescribed: PrescribedFields,
        need_curvature: bool = True,
    ):
        self.seq = seq
        self.n = n
        self.dim = seq.dim
        self.faces = seq.faces
        self.dt = float(seq.times[n + 1] - seq.times[n])
        self.positions3d = seq.frame3d(n)
        self.frames = build_face_frames(seq.positions[n], seq.faces)
        self.w = self.dt * self.frames.area

        if seq.is_planar or not need_curvature:
            curv = CurvatureField.zero(self.frames)
        else:
            curv = estimate_curvature(self.positions3d, seq.faces, self.frames)
        self.curvature = curv
        self.B = curvature_tensor(curv)
        self.H = curv.mean
        self.K = curv.gaussian

        self.boundary: BoundaryFrameField | None = None
        self.vbar_boundary = None
        if not seq.is_closed:
            self.boundary = boundary_frames(seq, seq.positions[n], self.frames)
            if prescribed.vbar_boundary is not None:
                self.vbar_boundary = prescribed.vbar_boundary[n]
        self.vbar_normal = (
            None if prescribed.vbar_normal is None else prescribed.vbar_normal[n]
        )
        self.landmark_indices = prescribed.landmark_indices
        self.vbar_landmark = (
            None
            if prescribed.vbar_landmark is None
            else prescribed.vbar_landmark[n]
        )
        self._gradop: GradientOperator | None = None

    def gradient_operator(self) -> GradientOperator:
        if self._gradop is None:
            self._gradop = build_gradient_operator(
                self.frames, self.seq.edges, self.seq.edge_faces, self.positions3d
            )
        return self._gradop


def evaluate_cost_terms(
    ctx: StepContext,
    spec: ModelSpec,
    velocities: np.ndarray,
    lam: np.ndarray,
    want_gradient: bool = True,
):
    """Cost breakdown and analytic gradient at one candidate velocity field.

    Returns (breakdown, grad_v, grad_lambda); the gradient arrays are None
    when ``want_gradient`` is False. Raises :class:`NonFiniteCost` when the
    evaluation produces non-finite values (degenerate mid-line-search
    geometry).
    """
    frames = ctx.frames
    faces = ctx.faces
    w = ctx.w
    lam = np.asarray(lam, dtype=np.float64)
    v = np.asarray(velocities, dtype=np.float64)
    v3 = v if v.shape[1] == 3 else np.column_stack([v, np.zeros(len(v))])

    bd = CostBreakdown()
    g_v3 = np.zeros_like(v3) if want_gradient else None
    g_lam = np.zeros(3) if want_gradient else None

    dv1, dv2 = velocity_edge_diffs(faces, v)
    t_adj = None

    if spec.needs_growth_strain or spec.fits_any_lambda:
        q = frames.projector
        a_expr = (
            np.einsum("ij,ik->ijk", dv1, frames.E1_dual)
            + np.einsum("ij,ik->ijk", frames.E1_dual, dv1)
            + np.einsum("ij,ik->ijk", dv2, frames.E2_dual)
            + np.einsum("ij,ik->ijk", frames.E2_dual, dv2)
        )
        qdot = q @ a_expr @ q
        growth = growth_strain(qdot, frames, ctx.B, ctx.H, ctx.K, lam)
        t_adj = np.zeros_like(growth)

        if spec.A1 != 0.0 or spec.B1 != 0.0:
            c_tr, c_sq = _rigidity_coeffs(spec.A1, spec.B1)
            tr_g = np.trace(growth, axis1=1, axis2=2)
            sq = np.einsum("ijk,ijk->i", growth, growth)
            bd.viscous = float(np.dot(w, c_tr * tr_g**2 + c_sq * sq))
            if want_gradient:
                t_adj += w[:, None, None] * (
                    2.0 * c_tr * tr_g[:, None, None] * _EYE3
                    + 2.0 * c_sq * growth
                )

        if spec.needs_gradient_operator:
            op = ctx.gradient_operator()
            c_tr2, c_sq2 = _rigidity_coeffs(spec.A2, spec.B2)
            dg = op.apply(growth)
            tr_dg = np.trace(dg, axis1=2, axis2=3)
            sq_dg = np.einsum("iajk,iajk->ia", dg, dg)
            bd.grad = float(np.dot(w, (c_tr2 * tr_dg**2 + c_sq2 * sq_dg).sum(axis=1)))
            if want_gradient:
                sens = w[:, None, None, None] * (
                    2.0 * c_tr2 * tr_dg[:, :, None, None] * _EYE3
                    + 2.0 * c_sq2 * dg
                )
                t_adj += op.apply_adjoint(sens)

        if want_gradient:
            # chain rule through G = Q A Q / 2 - lambda terms
            s_eff = frames.projector @ t_adj @ frames.projector
            gdv1 = 0.5 * 2.0 * np.einsum("ijk,ik->ij", s_eff, frames.E1_dual)
            gdv2 = 0.5 * 2.0 * np.einsum("ijk,ik->ij", s_eff, frames.E2_dual)
            np.add.at(g_v3, faces[:, 1], gdv1)
            np.add.at(g_v3, faces[:, 2], gdv2)
            np.add.at(g_v3, faces[:, 0], -(gdv1 + gdv2))
            g_lam[0] -= np.einsum("ijk,ijk->", t_adj, frames.projector)
            g_lam[1] -= np.einsum("i,ijk,ijk->", ctx.H, t_adj, ctx.B)
            g_lam[2] -= np.einsum("i,ijk,ijk->", ctx.K, t_adj, frames.projector)

    if spec.A3 != 0.0 and ctx.dim == 3:
        e1p = frames.E1 + ctx.dt * dv1
        e2p = frames.E2 + ctx.dt * dv2
        cr = np.cross(e1p, e2p)
        cn = np.linalg.norm(cr, axis=1)
        if np.any(cn <= 0.0) or not np.all(np.isfinite(cn)):
            raise NonFiniteCost("face collapses under candidate velocities")
        nxt = cr / cn[:, None]
        ndot = (nxt - frames.normal) / ctx.dt
        bd.bend = float(spec.A3 * np.dot(w, np.einsum("ij,ij->i", ndot, ndot)))
        if want_gradient:
            proj = ndot - nxt * np.einsum("ij,ij->i", nxt, ndot)[:, None]
            u = proj / cn[:, None]
            coeff = 2.0 * spec.A3 * w
            gdv1 = coeff[:, None] * np.cross(e2p, u)
            gdv2 = coeff[:, None] * np.cross(u, e1p)
            np.add.at(g_v3, faces[:, 1], gdv1)
            np.add.at(g_v3, faces[:, 2], gdv2)
            np.add.at(g_v3, faces[:, 0], -(gdv1 + gdv2))

    if ctx.vbar_normal is not None:
        vc = (v3[faces[:, 0]] + v3[faces[:, 1]] + v3[faces[:, 2]]) / 3.0
        r = np.einsum("ij,ij->i", frames.normal, vc) - ctx.vbar_normal
        bd.normal = float(spec.Cn * np.dot(w, r * r))
        if want_gradient:
            contrib = (2.0 * spec.Cn / 3.0) * (w * r)[:, None] * frames.normal
            for k in range(3):
                np.add.at(g_v3, faces[:, k], contrib)

    if ctx.boundary is not None and ctx.vbar_boundary is not None:
        bnd = ctx.boundary
        va = v3[bnd.edge_vertices[:, 0]]
        vb = v3[bnd.edge_vertices[:, 1]]
        r = np.einsum("ij,ij->i", bnd.conormal, 0.5 * (va + vb)) - ctx.vbar_boundary
        wl = ctx.dt * bnd.length
        bd.boundary = float(spec.Cb * np.dot(wl, r * r))
        if want_gradient:
            contrib = spec.Cb * (wl * r)[:, None] * bnd.conormal
            np.add.at(g_v3, bnd.edge_vertices[:, 0], contrib)
            np.add.at(g_v3, bnd.edge_vertices[:, 1], contrib)

    if ctx.vbar_landmark is not None and len(ctx.landmark_indices):
        r = v[ctx.landmark_indices] - ctx.vbar_landmark
        bd.landmark = float(spec.CL * ctx.dt * np.sum(r * r))
        if want_gradient:
            g_land = 2.0 * spec.CL * ctx.dt * r
            if v.shape[1] == 2:
                np.add.at(g_v3[:, :2], ctx.landmark_indices, g_land)
            else:
                np.add.at(g_v3, ctx.landmark_indices, g_land)

    if spec.Cg != 0.0:
        bd.lambda_reg = float(spec.Cg * ctx.dt * np.sum(lam * lam))
        if want_gradient:
            g_lam += 2.0 * spec.Cg * ctx.dt * lam

    if not np.isfinite(bd.total):
        raise NonFiniteCost("cost evaluated to a non-finite value")
    if want_gradient:
        g_vel = g_v3 if v.shape[1] == 3 else g_v3[:, :2]
        if not (np.all(np.isfinite(g_vel)) and np.all(np.isfinite(g_lam))):
            raise NonFiniteCost("gradient evaluated to a non-finite value")
        return bd, g_vel, g_lam
    return bd, None, None


def evaluate_total_cost(
    seq: MeshSequence,
    n: int,
    velocities: np.ndarray,
    lam,
    spec: ModelSpec,
    op: GradientOperator | None = None,
    prescribed: PrescribedFields | None = None,
    landmarks: LandmarkSet | None = None,
):
    """Total cost and flat gradient for step ``n`` of a sequence.

    Returns (CostBreakdown, gradient) where the gradient concatenates the
    flattened velocity components with the fitted lambda entries.
    """
    if prescribed is None:
        prescribed = extract_constraints(seq, landmarks)
    ctx = StepContext(seq, n, prescribed, need_curvature=True)
    if op is not None:
        ctx._gradop = op
    lam = np.asarray(lam, dtype=np.float64)
    bd, g_v, g_lam = evaluate_cost_terms(ctx, spec, velocities, lam)
    fitted = np.array(spec.fit_lambda, dtype=bool)
    grad = np.concatenate([g_v.ravel(), g_lam[fitted]])
    return bd, grad
