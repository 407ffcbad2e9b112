"""Residual evaluators for the light-source-eliminated shading relations.

For a Lambertian surface the second derivatives of image intensity can be
written purely in terms of the surface derivatives, the intensity, and the
brightness gradient: the light direction and albedo cancel.  In the
gradient/isophote frame {u, v} the three relations are

    I_vv = -I |dN(v)|^2                                   + grad(I) . H^-1 (v[H] v)
    I_uu = -I |dN(u)|^2 - 2 k <grad f, dN(u)>             + grad(I) . H^-1 (u[H] u)
    I_uv = -I <dN(v), dN(u)> - k <grad f, dN(v)>          + grad(I) . H^-1 (u[H] v)

with k = |grad I| / sqrt(1 + |grad f|^2), dN = G^-1 II the shape operator,
image vectors lifted to tangent coordinates, and <.,.> the metric inner
product.  This module evaluates each relation as LHS - RHS; the residuals
vanish for any consistent (surface, lights, point) regardless of the lights.

Two independent formulations are provided and cross-checked: the geometric
form above, and a fully expanded polynomial form in raw x/y derivatives
(re-derived here; the `verbatim` variant reproduces a published expansion
that is kept only to document its defects).  Specializations cover quadratic
patches, critical points (grad I = 0), and the 1D profile case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import (BadInputError, NonCriticalPoint, ShadowedPoint,
                         SingularFxx, SingularHessian)
from .flow import DEFAULT_GRAD_EPS, FlowFrame, frame_from_jet
from .geometry import MongePatch2, MongePatch3
from .imaging import ImageJet2

__all__ = [
    "ShadingResiduals",
    "Jet1D",
    "DEFAULT_HESS_EPS",
    "residuals_geometric",
    "residuals_pde",
    "residuals_second_order",
    "residuals_critical_point",
    "residual_1d",
    "critical_frame_from_jet",
    "render_curve_1d",
    "intensity_hessian_model",
]

DEFAULT_HESS_EPS = 1e-9


@dataclass(frozen=True)
class ShadingResiduals:
    """Signed LHS - RHS of the three relations, plus per-equation scales.

    `scale_*` is the largest absolute term entering the equation, so
    `normalized()` is scale-free and comparable across patches.
    """

    r_vv: float
    r_uu: float
    r_uv: float
    scale_vv: float = 1.0
    scale_uu: float = 1.0
    scale_uv: float = 1.0

    def normalized(self):
        return (self.r_vv / self.scale_vv,
                self.r_uu / self.scale_uu,
                self.r_uv / self.scale_uv)

    def max_abs(self) -> float:
        return max(abs(self.r_vv), abs(self.r_uu), abs(self.r_uv))

    def max_abs_normalized(self) -> float:
        return max(abs(v) for v in self.normalized())

    def to_dict(self, point=None) -> dict:
        n = self.normalized()
        rec = {"r_vv": self.r_vv, "r_uu": self.r_uu, "r_uv": self.r_uv,
               "normalized": {"r_vv": n[0], "r_uu": n[1], "r_uv": n[2]}}
        if point is not None:
            rec["point"] = [float(point[0]), float(point[1])]
        return rec


@dataclass(frozen=True)
class Jet1D:
    """1D profile data: intensity jet plus curve derivatives at one x."""

    I: float
    Ix: float
    Ixx: float
    a: float      # f_x
    fxx: float
    fxxx: float


def _as_frame(jet_or_frame, grad_eps: float) -> FlowFrame:
    if isinstance(jet_or_frame, FlowFrame):
        return jet_or_frame
    if isinstance(jet_or_frame, ImageJet2):
        return frame_from_jet(jet_or_frame, grad_eps)
    raise BadInputError("expected an ImageJet2 or a FlowFrame")


def _check_hessian(H: np.ndarray, hess_eps: float) -> None:
    det = float(np.linalg.det(H))
    scale = max(float(np.linalg.norm(H)) ** 2, 1e-300)
    if abs(det) <= hess_eps * scale:
        raise SingularHessian(f"|det H| = {abs(det):.3g} <= {hess_eps:.1g} * |H|^2")


def _scale(*terms) -> float:
    return max(max(abs(float(t)) for t in terms), 1e-300)


def residuals_geometric(patch: MongePatch3, jet_or_frame, point,
                        grad_eps: float = DEFAULT_GRAD_EPS,
                        hess_eps: float = DEFAULT_HESS_EPS) -> ShadingResiduals:
    """Geometric-form residuals at a point.

    The jet (or frame) must be the image data observed at `point`; the patch
    supplies the exact surface derivatives there.
    """
    frame = _as_frame(jet_or_frame, grad_eps)
    g = patch.gradient(point)
    H = patch.hessian(point)
    _check_hessian(H, hess_eps)
    G = np.eye(2) + np.outer(g, g)
    n3 = 1.0 / np.sqrt(1.0 + g @ g)
    dN = np.linalg.solve(G, n3 * H)
    Hinv = np.linalg.inv(H)
    u, v = frame.u, frame.v
    grad_I = frame.gradient
    k = frame.Iu * n3

    dNv = dN @ v
    dNu = dN @ u

    def ip(p, q):
        return float(p @ G @ q)

    t_vv = (-frame.I * ip(dNv, dNv),
            float(grad_I @ Hinv @ (patch.hessian_derivative(v) @ v)))
    t_uu = (-frame.I * ip(dNu, dNu),
            -2.0 * k * ip(g, dNu),
            float(grad_I @ Hinv @ (patch.hessian_derivative(u) @ u)))
    t_uv = (-frame.I * ip(dNv, dNu),
            -k * ip(g, dNv),
            float(grad_I @ Hinv @ (patch.hessian_derivative(u) @ v)))

    return ShadingResiduals(
        r_vv=frame.Ivv - sum(t_vv),
        r_uu=frame.Iuu - sum(t_uu),
        r_uv=frame.Iuv - sum(t_uv),
        scale_vv=_scale(frame.Ivv, *t_vv),
        scale_uu=_scale(frame.Iuu, *t_uu),
        scale_uv=_scale(frame.Iuv, *t_uv),
    )


def intensity_hessian_model(patch, point, I: float, grad_I: np.ndarray) -> np.ndarray:
    """Predicted intensity Hessian in image coordinates.

    This is the expanded form of the relations: with H_a the a-th column of
    the height Hessian and T_ab the third-derivative columns,

      I_ab = grad(I) . H^-1 T_ab
             - n3^2 [(grad f . H_a) I_b + (grad f . H_b) I_a]
             - n3^2 I [H_a . H_b - n3^2 (grad f . H_a)(grad f . H_b)].
    """
    g = patch.gradient(point)
    H = patch.hessian(point)
    fxxx, fxxy, fxyy, fyyy = patch.third_derivatives()
    n3sq = 1.0 / (1.0 + g @ g)
    Hinv = np.linalg.inv(H)
    T = np.empty((2, 2, 2))
    T[0, 0] = (fxxx, fxxy)
    T[0, 1] = T[1, 0] = (fxxy, fxyy)
    T[1, 1] = (fxyy, fyyy)
    pred = np.empty((2, 2))
    for a in range(2):
        for b in range(2):
            Ha, Hb = H[:, a], H[:, b]
            pred[a, b] = (float(grad_I @ Hinv @ T[a, b])
                          - n3sq * ((g @ Ha) * grad_I[b] + (g @ Hb) * grad_I[a])
                          - n3sq * I * ((Ha @ Hb) - n3sq * (g @ Ha) * (g @ Hb)))
    return pred


def residuals_pde(patch: MongePatch3, jet_or_frame, point,
                  grad_eps: float = DEFAULT_GRAD_EPS,
                  hess_eps: float = DEFAULT_HESS_EPS,
                  variant: str = "corrected") -> ShadingResiduals:
    """Expanded-PDE-form residuals.

    variant="corrected" (default) evaluates the re-derived expansion, whose
    residual matrix is contracted into the {v, u} frame so the result is
    directly comparable with `residuals_geometric`.

    variant="verbatim" evaluates the published expansion exactly as printed.
    That printout drops the intensity second derivative from the leading
    term and the 1/det(H) factor from the third-derivative bracket, so it
    does NOT vanish on consistent data; it is retained purely to document
    the discrepancy.  Its three components are the raw x/y-equation values
    (xx, yy, xy), stored in the (r_vv, r_uu, r_uv) slots in that order.
    """
    frame = _as_frame(jet_or_frame, grad_eps)
    H = patch.hessian(point)
    _check_hessian(H, hess_eps)
    if variant == "corrected":
        pred = intensity_hessian_model(patch, point, frame.I, frame.gradient)
        R = frame.hessian_image() - pred
        u, v = frame.u, frame.v
        s = _scale(frame.I, frame.Iu, frame.Ivv, frame.Iuu, frame.Iuv,
                   *np.abs(pred).ravel())
        return ShadingResiduals(
            r_vv=float(v @ R @ v), r_uu=float(u @ R @ u), r_uv=float(u @ R @ v),
            scale_vv=s, scale_uu=s, scale_uv=s)
    if variant == "verbatim":
        e = _verbatim_expansion(patch, point, frame)
        s = _scale(frame.I, frame.Iu, 1.0)
        return ShadingResiduals(r_vv=e[0], r_uu=e[1], r_uv=e[2],
                                scale_vv=s, scale_uu=s, scale_uv=s)
    raise BadInputError(f"unknown variant {variant!r}")


def _verbatim_expansion(patch: MongePatch3, point, frame: FlowFrame):
    """The published x/y expansion, evaluated exactly as printed."""
    g = patch.gradient(point)
    H = patch.hessian(point)
    fx, fy = g
    fxx, fxy, fyy = H[0, 0], H[0, 1], H[1, 1]
    fxxx, fxxy, fxyy, fyyy = patch.third_derivatives()
    I = frame.I
    Ix, Iy = frame.gradient
    w2 = 1.0 + fx * fx + fy * fy
    e_xx = (fxx
            + ((1 + fx * fx) * fxy ** 2 - 2 * fx * fy * fxy * fxx
               + (1 + fy * fy) * fxx ** 2) / w2 ** 2 * I
            + 2 * Ix * (fx * fxx + fy * fxy) / w2
            - (Ix * (fyy * fxxx - fxy * fxxy) + Iy * (-fxy * fxxx + fxx * fxxy)))
    e_yy = (fyy
            + ((1 + fx * fx) * fyy ** 2 - 2 * fx * fy * fxy * fyy
               + (1 + fy * fy) * fxy ** 2) / w2 ** 2 * I
            + 2 * Iy * (fx * fxy + fy * fyy) / w2
            - (Ix * (fyy * fxyy - fxy * fyyy) + Iy * (-fxy * fxyy + fxx * fyyy)))
    e_xy = (fxy
            + (fxy * (fxx + fyy + fy * fy * fxx + fx * fx * fyy)
               - fx * fy * (fxy ** 2 + fxx * fyy)) / w2 ** 2 * I
            + (fx * Iy * fxx + (fx * Ix + fy * Iy) * fxy + fy * Ix * fyy) / w2
            - (Ix * (fyy * fxxy - fxy * fxyy) + Iy * (-fxy * fxxy + fxx * fxyy)))
    return e_xx, e_yy, e_xy


def residuals_second_order(patch: MongePatch2, frame: FlowFrame) -> ShadingResiduals:
    """Residuals for a quadratic patch at its origin.

    The third-order terms vanish identically, so H^-1 never appears and no
    Hessian guard is needed.  Agrees with `residuals_geometric` on the
    embedded cubic wherever the latter's guard admits the patch.
    """
    g = np.array([patch.a, patch.b])
    H = patch.hessian()
    G = np.eye(2) + np.outer(g, g)
    n3 = 1.0 / np.sqrt(1.0 + g @ g)
    dN = np.linalg.solve(G, n3 * H)
    u, v = frame.u, frame.v
    k = frame.Iu * n3
    dNv, dNu = dN @ v, dN @ u

    def ip(p, q):
        return float(p @ G @ q)

    t_vv = (-frame.I * ip(dNv, dNv),)
    t_uu = (-frame.I * ip(dNu, dNu), -2.0 * k * ip(g, dNu))
    t_uv = (-frame.I * ip(dNv, dNu), -k * ip(g, dNv))
    return ShadingResiduals(
        r_vv=frame.Ivv - sum(t_vv),
        r_uu=frame.Iuu - sum(t_uu),
        r_uv=frame.Iuv - sum(t_uv),
        scale_vv=_scale(frame.Ivv, *t_vv),
        scale_uu=_scale(frame.Iuu, *t_uu),
        scale_uv=_scale(frame.Iuv, *t_uv),
    )


def critical_frame_from_jet(jet: ImageJet2) -> FlowFrame:
    """Limiting frame at a critical point: eigenvectors of the intensity
    Hessian, u along the larger-|eigenvalue| axis, v = rot90(u)."""
    evals, evecs = np.linalg.eigh(jet.hess)
    order = np.argsort(-np.abs(evals))
    u = evecs[:, order[0]]
    # deterministic sign: first nonzero component positive
    if u[0] < 0 or (u[0] == 0 and u[1] < 0):
        u = -u
    v = np.array([-u[1], u[0]])
    hess = jet.hess
    return FlowFrame(u=u, v=v, I=jet.I, Iu=0.0,
                     Ivv=float(v @ hess @ v),
                     Iuv=float(u @ hess @ v),
                     Iuu=float(u @ hess @ u))


def residuals_critical_point(patch, jet: ImageJet2, point=(0.0, 0.0),
                             crit_eps: float = None) -> ShadingResiduals:
    """Residuals of the reduced relations at a gradient zero.

    With grad I = 0 every gradient-carrying term drops, including all
    third-order surface terms, leaving
        I_vv = -I |dN(v)|^2,  I_uu = -I |dN(u)|^2,  I_uv = -I <dN(v), dN(u)>.
    The frame is the intensity-Hessian eigenframe.  `patch` may be quadratic
    or cubic.
    """
    if crit_eps is None:
        crit_eps = 1e-6 * max(abs(jet.I), 1e-12)
    gnorm = float(np.linalg.norm(jet.gradient))
    if gnorm > crit_eps:
        raise NonCriticalPoint(f"|grad I| = {gnorm:.3g} > {crit_eps:.3g}")
    if isinstance(patch, MongePatch2):
        patch = patch.to_cubic()
    frame = critical_frame_from_jet(jet)
    g = patch.gradient(point)
    H = patch.hessian(point)
    G = np.eye(2) + np.outer(g, g)
    n3 = 1.0 / np.sqrt(1.0 + g @ g)
    dN = np.linalg.solve(G, n3 * H)
    u, v = frame.u, frame.v
    dNv, dNu = dN @ v, dN @ u

    def ip(p, q):
        return float(p @ G @ q)

    t_vv = frame.I * ip(dNv, dNv)
    t_uu = frame.I * ip(dNu, dNu)
    t_uv = frame.I * ip(dNv, dNu)
    return ShadingResiduals(
        r_vv=frame.Ivv + t_vv, r_uu=frame.Iuu + t_uu, r_uv=frame.Iuv + t_uv,
        scale_vv=_scale(frame.Ivv, t_vv),
        scale_uu=_scale(frame.Iuu, t_uu),
        scale_uv=_scale(frame.Iuv, t_uv),
    )


# ---------------------------------------------------------------------------
# 1D profile case
# ---------------------------------------------------------------------------

def residual_1d(j: Jet1D) -> float:
    """Residual of the 1D relation

        I_xx = -I f_xx^2/(1+a^2)^2 - 2 I_x a f_xx/(1+a^2) + I_x f_xxx/f_xx.

    The curvature factor uses the image-step parameterization
    |dN(u)| = |f_xx|/(1+a^2); this normalization is the one the 1D rendering
    oracle validates exactly.
    """
    if j.fxx == 0.0:
        raise SingularFxx("f_xx = 0: the relation divides by f_xx")
    q = 1.0 + j.a * j.a
    rhs = (-j.I * j.fxx ** 2 / q ** 2
           - 2.0 * j.Ix * j.a * j.fxx / q
           + j.Ix * j.fxxx / j.fxx)
    return j.Ixx - rhs


def _curve_jet_1d(curve: Callable, l1: float, l2: float, albedo: float, x: float):
    _, s, c, t = curve(x)
    q = 1.0 + s * s
    cosine = (l2 - l1 * s) / np.sqrt(q)
    if cosine <= 0.0:
        raise ShadowedPoint(0, float(cosine))
    I = albedo * cosine
    Ix = -albedo * c * (l1 + l2 * s) / q ** 1.5
    Ixx = (albedo * (-t * (l1 + l2 * s) - c * c * l2) / q ** 1.5
           + 3.0 * albedo * s * c * c * (l1 + l2 * s) / q ** 2.5)
    return float(I), float(Ix), float(Ixx)


def render_curve_1d(curve: Callable, light: Sequence[float], x: float,
                    albedo: float = 1.0):
    """Closed-form 1D Lambertian jet (I, Ix, Ixx) for a profile curve.

    `curve` maps x to (f, f', f'', f'''); `light` is a unit 2-vector.
    Raises ShadowedPoint when the light is behind the profile normal.
    """
    L = np.asarray(light, dtype=float)
    if abs(np.linalg.norm(L) - 1.0) > 1e-9:
        raise BadInputError("1D light must be a unit 2-vector")
    return _curve_jet_1d(curve, float(L[0]), float(L[1]), albedo, x)
