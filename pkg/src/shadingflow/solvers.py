"""Inversion of the shading relations.

Four solvers, simple to general:
  * `solve_frontal_parallel`: quadratic patch, level tangent plane.  The
    system {x^2+y^2=q1, z^2+y^2=q2, (x+z)y=q3} reduces to a univariate
    quadratic in y^2; there are 0, 2, or 4 real solutions, closed under
    negation, and the two branches carry opposite Gaussian-curvature sign.
  * `solve_second_order`: quadratic patch, chosen tangent plane.  Three
    quadratic equations in (c, d, e), solved by grid-seeded damped Newton
    inside a box, deduplicated and verified.
  * `solve_critical_point`: at a gradient zero the relations determine
    H G^-1 H, so the candidates are the four symmetric square roots.
  * `solve_1d`: the third-order profile relation as a two-point boundary
    value problem by single shooting on the unknown initial curvature.

Every recovered patch gets an emergent light source: the unique scaled
direction reproducing the observed intensity and gradient, obtained by exact
inversion of the Lambertian jet relations.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.integrate import solve_ivp
from scipy.linalg import eigh as generalized_eigh
from scipy.optimize import brentq

from .exceptions import (BadInputError, BoxBoundaryRootWarning, Inconsistent,
                         NoBracket, NonCriticalPoint, RankDeficient,
                         SingularHessian, SingularityEncountered)
from .flow import FlowFrame
from .geometry import LightSource, MongePatch2, MongePatch3
from .imaging import ImageJet2, _atomic_write_text
from .shading_eqs import Jet1D, render_curve_1d, residual_1d

__all__ = [
    "QuadricTriple",
    "PatchSolution",
    "PatchSolutionSet",
    "SolveOptions",
    "Solve1DOptions",
    "Curve1DSolution",
    "IntensityCurve",
    "classify_patch",
    "emergent_light_from_frame",
    "solve_frontal_parallel",
    "frontal_solutions_to_image",
    "solve_second_order",
    "sweep_tangent_planes",
    "solve_critical_point",
    "recover_light",
    "solve_1d",
    "write_sweep_csv",
    "write_curve_csv",
    "read_curve_csv",
]


@dataclass(frozen=True)
class QuadricTriple:
    """Normalized second derivatives q = (-Ivv/I, -Iuu/I, -Iuv/I).

    q1 and q2 are sums of squares for any real surface, so nonnegativity is
    necessary for solvability.
    """

    q1: float
    q2: float
    q3: float

    @classmethod
    def from_frame(cls, frame: FlowFrame) -> "QuadricTriple":
        if not frame.I > 0:
            raise BadInputError("intensity must be positive to normalize")
        return cls(-frame.Ivv / frame.I, -frame.Iuu / frame.I, -frame.Iuv / frame.I)


@dataclass(frozen=True)
class PatchSolution:
    patch: MongePatch2
    classification: str
    emergent_light: Optional[LightSource] = None
    residual: float = 0.0


@dataclass(frozen=True)
class PatchSolutionSet:
    tangent_plane: tuple
    solutions: tuple
    residual_bound: float = 0.0
    degenerate: bool = False
    boundary_warning: bool = False

    def __len__(self):
        return len(self.solutions)

    def to_dict(self) -> dict:
        sols = []
        for s in self.solutions:
            p = s.patch
            rec = {"patch": {"a": p.a, "b": p.b, "c": p.c, "d": p.d, "e": p.e},
                   "class": s.classification,
                   "light": None if s.emergent_light is None else
                   {"dir": list(s.emergent_light.direction),
                    "albedo": s.emergent_light.albedo},
                   "residual": s.residual}
            sols.append(rec)
        return {"tangent_plane": [self.tangent_plane[0], self.tangent_plane[1]],
                "solutions": sols,
                "residual_bound": self.residual_bound,
                "degenerate": self.degenerate,
                "boundary_warning": self.boundary_warning}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj: dict) -> "PatchSolutionSet":
        try:
            sols = []
            for rec in obj["solutions"]:
                p = rec["patch"]
                light = rec.get("light")
                sols.append(PatchSolution(
                    patch=MongePatch2(p["a"], p["b"], p["c"], p["d"], p["e"]),
                    classification=rec["class"],
                    emergent_light=None if light is None else LightSource.from_dict(light),
                    residual=float(rec.get("residual", 0.0))))
            return cls(tangent_plane=tuple(obj["tangent_plane"]),
                       solutions=tuple(sols),
                       residual_bound=float(obj.get("residual_bound", 0.0)),
                       degenerate=bool(obj.get("degenerate", False)),
                       boundary_warning=bool(obj.get("boundary_warning", False)))
        except (KeyError, TypeError, ValueError) as exc:
            raise BadInputError(f"bad solution-set record: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "PatchSolutionSet":
        return cls.from_dict(json.loads(text))


def classify_patch(patch: MongePatch2, zero_tol: float = 1e-8) -> str:
    """Label a quadratic patch by the signs of its principal curvatures.

    Eigenvalues of the shape operator at the origin; an eigenvalue within
    zero_tol * |dN| of zero flags the patch parabolic (or planar when both
    vanish) instead of forcing a sign.  Saddles are split by the sign of
    the mean curvature.
    """
    g = np.array([patch.a, patch.b])
    H = patch.hessian()
    G = np.eye(2) + np.outer(g, g)
    n3 = 1.0 / np.sqrt(1.0 + g @ g)
    kappa = generalized_eigh(n3 * H, G, eigvals_only=True)
    scale = max(abs(kappa[0]), abs(kappa[1]))
    if scale < 1e-12:
        return "planar"
    if min(abs(kappa[0]), abs(kappa[1])) < zero_tol * scale:
        return "parabolic"
    if kappa[0] > 0 and kappa[1] > 0:
        return "convex"
    if kappa[0] < 0 and kappa[1] < 0:
        return "concave"
    return "saddle-positive" if kappa[0] + kappa[1] >= 0 else "saddle-negative"


def emergent_light_from_frame(patch: MongePatch2, frame: FlowFrame,
                              hess_eps: float = 1e-9) -> LightSource:
    """The unique scaled light reproducing the frame's intensity and
    gradient for this patch, by exact inversion of the jet relations."""
    g = np.array([patch.a, patch.b])
    H = patch.hessian()
    det = float(np.linalg.det(H))
    if abs(det) <= hess_eps * max(float(np.linalg.norm(H)) ** 2, 1e-300):
        raise SingularHessian("cannot invert the jet relations: H is singular")
    n3 = 1.0 / np.sqrt(1.0 + g @ g)
    m = -(np.linalg.solve(H, frame.gradient) + n3 ** 2 * frame.I * g) / n3
    lam = frame.I / n3 + m @ g
    s = np.array([m[0], m[1], lam])
    rho = float(np.linalg.norm(s))
    if rho == 0.0:
        raise BadInputError("degenerate frame: recovered light has zero power")
    return LightSource(s / rho, rho)


# ---------------------------------------------------------------------------
# frontal-parallel solver
# ---------------------------------------------------------------------------

def solve_frontal_parallel(q: QuadricTriple, tolerance: float = 1e-9) -> PatchSolutionSet:
    """All real (f_xx, f_xy, f_yy) with x^2+y^2=q1, z^2+y^2=q2, (x+z)y=q3.

    Axes follow the frame identification: x along the isophote direction v,
    y along the gradient direction u.  Patches are returned with a = b = 0;
    rotate with `frontal_solutions_to_image` to compare against solvers that
    work in image coordinates.

    Raises Inconsistent when no real solution exists within tolerance.
    Degenerate inputs (all zeros, or equal cylinders with q3 = 0, which
    admit a continuum of saddles) are deduplicated to representatives and
    flagged.
    """
    q1, q2, q3 = q.q1, q.q2, q.q3
    scale = max(abs(q1), abs(q2), abs(q3), 1e-300)
    if q1 < -tolerance * scale or q2 < -tolerance * scale:
        raise Inconsistent(f"q1, q2 must be nonnegative, got ({q1:.3g}, {q2:.3g})")
    q1, q2 = max(q1, 0.0), max(q2, 0.0)
    degenerate = False

    triples: List[np.ndarray] = []
    if scale <= 1e-300 or max(q1, q2, abs(q3)) == 0.0:
        triples.append(np.zeros(3))
        degenerate = True
    elif abs(q3) <= tolerance * scale:
        # y = 0 branch; if additionally q1 = q2 there is a continuum of
        # rotated saddles, reported by representatives only
        for sx in (1.0, -1.0):
            for sz in (1.0, -1.0):
                triples.append(np.array([sx * np.sqrt(q1), 0.0, sz * np.sqrt(q2)]))
        if abs(q1 - q2) <= tolerance * scale:
            degenerate = True
    else:
        D = (q1 - q2) ** 2 + 4.0 * q3 ** 2
        disc = 4.0 * q3 ** 4 * (q1 * q2 - q3 ** 2)
        if disc < -tolerance * scale ** 4:
            raise Inconsistent(
                f"q1*q2 - q3^2 = {q1 * q2 - q3 ** 2:.3g} < 0: no real surface")
        disc = max(disc, 0.0)
        for sgn in (1.0, -1.0):
            Y = (2.0 * q3 ** 2 * (q1 + q2) + sgn * 2.0 * np.sqrt(disc)) / (2.0 * D)
            if Y <= 0.0:
                continue
            for ysgn in (1.0, -1.0):
                yv = ysgn * np.sqrt(Y)
                xv = 0.5 * (q3 / yv + (q1 - q2) * yv / q3)
                zv = 0.5 * (q3 / yv - (q1 - q2) * yv / q3)
                triples.append(np.array([xv, yv, zv]))

    # verify, deduplicate
    kept: List[np.ndarray] = []
    residuals: List[float] = []
    for t in triples:
        x, y, z = t
        r = max(abs(x * x + y * y - q1), abs(z * z + y * y - q2),
                abs((x + z) * y - q3))
        if r > tolerance * max(scale, 1.0):
            continue
        if any(np.linalg.norm(t - k) <= 1e-9 * max(1.0, scale) for k in kept):
            degenerate = True
            continue
        kept.append(t)
        residuals.append(r / max(scale, 1.0))
    if not kept:
        raise Inconsistent("no candidate satisfied the system within tolerance")

    sols = tuple(
        PatchSolution(patch=MongePatch2(0.0, 0.0, t[0] / 2.0, t[1], t[2] / 2.0),
                      classification=classify_patch(
                          MongePatch2(0.0, 0.0, t[0] / 2.0, t[1], t[2] / 2.0)),
                      emergent_light=None, residual=r)
        for t, r in zip(kept, residuals))
    return PatchSolutionSet(tangent_plane=(0.0, 0.0), solutions=sols,
                            residual_bound=max(residuals), degenerate=degenerate)


def frontal_solutions_to_image(solset: PatchSolutionSet, frame: FlowFrame,
                               attach_lights: bool = True) -> PatchSolutionSet:
    """Rotate frontal-parallel solutions from the (v, u) axes into image
    coordinates and attach emergent lights from the frame."""
    R = np.column_stack([frame.v, frame.u])
    out = []
    for s in solset.solutions:
        Hvu = s.patch.hessian()
        Him = R @ Hvu @ R.T
        patch = MongePatch2(0.0, 0.0, Him[0, 0] / 2.0, Him[0, 1], Him[1, 1] / 2.0)
        light = None
        if attach_lights:
            try:
                light = emergent_light_from_frame(patch, frame)
            except (SingularHessian, BadInputError):
                light = None
        out.append(replace(s, patch=patch, emergent_light=light,
                           classification=classify_patch(patch)))
    return replace(solset, solutions=tuple(out))


# ---------------------------------------------------------------------------
# general second-order solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolveOptions:
    """Search parameters for the grid-seeded damped Newton solver."""

    box: float = 10.0
    seeds_per_axis: int = 17
    newton_tol: float = 1e-12
    verify_tol: float = 1e-8
    dedup_tol: float = 1e-6     # times box
    max_iter: int = 48
    boundary_margin: float = 0.01


def _second_order_target(frame: FlowFrame):
    return frame.I, frame.gradient, frame.hessian_image()


def _residual_batch(W: np.ndarray, target, ab) -> np.ndarray:
    """Residuals of the three relations for candidate (c, d, e) rows."""
    I, grad_I, hess_I = target
    a, b = ab
    g = np.array([a, b])
    n3sq = 1.0 / (1.0 + g @ g)
    Ginv = np.eye(2) - n3sq * np.outer(g, g)
    c, d, e = W[:, 0], W[:, 1], W[:, 2]
    H = np.empty((len(W), 2, 2))
    H[:, 0, 0] = 2 * c
    H[:, 0, 1] = H[:, 1, 0] = d
    H[:, 1, 1] = 2 * e
    Hg = H @ g
    HGH = np.einsum("bij,jk,bkl->bil", H, Ginv, H)
    E = n3sq * (Hg[:, :, None] * grad_I[None, None, :]
                + grad_I[None, :, None] * Hg[:, None, :]
                + I * HGH) + hess_I[None, :, :]
    return np.stack([E[:, 0, 0], E[:, 0, 1], E[:, 1, 1]], axis=1)


_BASIS = np.array([[[2.0, 0.0], [0.0, 0.0]],
                   [[0.0, 1.0], [1.0, 0.0]],
                   [[0.0, 0.0], [0.0, 2.0]]])


def _jacobian_batch(W: np.ndarray, target, ab) -> np.ndarray:
    I, grad_I, _ = target
    a, b = ab
    g = np.array([a, b])
    n3sq = 1.0 / (1.0 + g @ g)
    Ginv = np.eye(2) - n3sq * np.outer(g, g)
    c, d, e = W[:, 0], W[:, 1], W[:, 2]
    H = np.empty((len(W), 2, 2))
    H[:, 0, 0] = 2 * c
    H[:, 0, 1] = H[:, 1, 0] = d
    H[:, 1, 1] = 2 * e
    J = np.empty((len(W), 3, 3))
    for k in range(3):
        Dk = _BASIS[k]
        Dg = Dk @ g
        cross = np.einsum("ij,jk,bkl->bil", Dk, Ginv, H)
        dE = n3sq * (Dg[None, :, None] * grad_I[None, None, :]
                     + grad_I[None, :, None] * Dg[None, None, :]
                     + I * (cross + np.swapaxes(cross, 1, 2)))
        J[:, 0, k] = dE[:, 0, 0]
        J[:, 1, k] = dE[:, 0, 1]
        J[:, 2, k] = dE[:, 1, 1]
    return J


def solve_second_order(frame: FlowFrame, tangent_plane,
                       options: SolveOptions = None) -> PatchSolutionSet:
    """All quadratic patches with the chosen tangent plane matching the
    frame, found by dense multi-start damped Newton in a box.

    An empty solution set is a legal outcome (the no-solution region of
    tangent planes).  Roots within `boundary_margin` of the box boundary
    trigger a BoxBoundaryRootWarning, since solutions may exist outside.
    """
    if not frame.I > 0:
        raise BadInputError("frame intensity must be positive")
    opts = options or SolveOptions()
    a, b = float(tangent_plane[0]), float(tangent_plane[1])
    target = _second_order_target(frame)
    scale = max(float(np.abs(target[2]).max()), frame.I, 1e-12)

    axis = np.linspace(-opts.box, opts.box, opts.seeds_per_axis)
    seeds = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
    W = seeds.copy()
    alive = np.ones(len(W), dtype=bool)
    for _ in range(opts.max_iter):
        r = _residual_batch(W, target, (a, b))
        rmax = np.abs(r).max(axis=1)
        active = alive & (rmax > opts.newton_tol * scale)
        if not active.any():
            break
        J = _jacobian_batch(W[active], target, (a, b))
        dets = np.linalg.det(J)
        solvable = np.abs(dets) > 1e-300
        idx = np.where(active)[0]
        alive[idx[~solvable]] = False
        idx = idx[solvable]
        if len(idx) == 0:
            break
        step = np.linalg.solve(J[solvable], r[idx][:, :, None])[:, :, 0]
        # damped update: halve the step until the residual norm decreases;
        # seeds that cannot improve are abandoned
        t = np.ones(len(idx))
        base = np.linalg.norm(r[idx], axis=1)
        Wn = W[idx] - step
        for _ in range(20):
            rn = np.linalg.norm(_residual_batch(Wn, target, (a, b)), axis=1)
            bad = rn >= base
            if not bad.any():
                break
            t[bad] *= 0.5
            Wn[bad] = W[idx[bad]] - t[bad, None] * step[bad]
            if t.max() < 1e-6:
                break
        stalled = np.linalg.norm(_residual_batch(Wn, target, (a, b)), axis=1) >= base
        alive[idx[stalled]] = False
        W[idx[~stalled]] = Wn[~stalled]

    r = _residual_batch(W, target, (a, b))
    ok = (np.abs(r).max(axis=1) <= opts.verify_tol * scale) & \
        (np.abs(W).max(axis=1) <= opts.box)
    roots: List[np.ndarray] = []
    for w in W[ok]:
        if not any(np.linalg.norm(w - r0) <= opts.dedup_tol * opts.box for r0 in roots):
            roots.append(w)
    roots.sort(key=lambda w: (w[0], w[1], w[2]))

    boundary = False
    sols = []
    res_bound = 0.0
    for w in roots:
        if np.abs(w).max() >= opts.box * (1.0 - opts.boundary_margin):
            boundary = True
        patch = MongePatch2(a, b, float(w[0]), float(w[1]), float(w[2]))
        rr = float(np.abs(_residual_batch(w[None, :], target, (a, b))).max()) / scale
        res_bound = max(res_bound, rr)
        try:
            light = emergent_light_from_frame(patch, frame)
        except (SingularHessian, BadInputError):
            light = None
        sols.append(PatchSolution(patch=patch, classification=classify_patch(patch),
                                  emergent_light=light, residual=rr))
    if boundary:
        warnings.warn("root within 1% of the search box boundary; enlarge the box",
                      BoxBoundaryRootWarning)
    return PatchSolutionSet(tangent_plane=(a, b), solutions=tuple(sols),
                            residual_bound=res_bound, boundary_warning=boundary)


def sweep_tangent_planes(frame: FlowFrame, a_values, b_values,
                         options: SolveOptions = None) -> List[PatchSolutionSet]:
    """Solve over a tangent-plane grid; results ordered row-major in (b, a).

    The empty cells map the observed no-solution region around the origin;
    no structural shape is assumed for it.
    """
    a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
    b_values = np.atleast_1d(np.asarray(b_values, dtype=float))
    if a_values.size == 0 or b_values.size == 0:
        raise BadInputError("tangent-plane grid must be nonempty")
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoxBoundaryRootWarning)
        for b in b_values:
            for a in a_values:
                results.append(solve_second_order(frame, (a, b), options))
    return results


def write_sweep_csv(results: Sequence[PatchSolutionSet], path: str) -> None:
    lines = ["a,b,n_roots"]
    for r in results:
        lines.append(f"{r.tangent_plane[0]!r},{r.tangent_plane[1]!r},{len(r)}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# critical-point solver
# ---------------------------------------------------------------------------

def solve_critical_point(jet: ImageJet2, tangent_plane, crit_eps: float = None,
                         tolerance: float = 1e-9) -> PatchSolutionSet:
    """Recover the curvature matrix at a gradient zero.

    There the relations give the full matrix H G^-1 H, whose symmetric
    square roots are the candidate Hessians: up to four, closed under
    H -> -H, no assumption on the tangent plane.  The emergent light is the
    surface normal with albedo equal to the observed intensity.
    """
    if crit_eps is None:
        crit_eps = 1e-6 * max(abs(jet.I), 1e-12)
    gnorm = float(np.linalg.norm(jet.gradient))
    if gnorm > crit_eps:
        raise NonCriticalPoint(f"|grad I| = {gnorm:.3g} > {crit_eps:.3g}")
    if not jet.I > 0:
        raise BadInputError("intensity must be positive at the critical point")
    a, b = float(tangent_plane[0]), float(tangent_plane[1])
    g = np.array([a, b])
    n3sq = 1.0 / (1.0 + g @ g)
    G = np.eye(2) + np.outer(g, g)
    B = -jet.hess / (n3sq * jet.I)
    scale = max(float(np.abs(B).max()), 1e-300)

    evals_G, vecs_G = np.linalg.eigh(G)
    Gh = vecs_G @ np.diag(np.sqrt(evals_G)) @ vecs_G.T
    Ghi = vecs_G @ np.diag(1.0 / np.sqrt(evals_G)) @ vecs_G.T
    A = Ghi @ B @ Ghi
    A = 0.5 * (A + A.T)
    lam, P = np.linalg.eigh(A)
    if lam.min() < -tolerance * scale:
        raise Inconsistent(
            f"-Hess(I)/(n3^2 I) has a negative eigenvalue ({lam.min():.3g})")
    lam = np.clip(lam, 0.0, None)

    normal = np.array([-a, -b, 1.0])
    normal = normal / np.linalg.norm(normal)
    light = LightSource(normal, float(jet.I))

    kept: List[np.ndarray] = []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            C = P @ np.diag([s1 * np.sqrt(lam[0]), s2 * np.sqrt(lam[1])]) @ P.T
            H = Gh @ C @ Gh
            if any(np.linalg.norm(H - k) <= 1e-9 * max(1.0, scale) for k in kept):
                continue
            kept.append(H)
    degenerate = len(kept) < 4

    sols = []
    res_bound = 0.0
    for H in kept:
        patch = MongePatch2(a, b, H[0, 0] / 2.0, H[0, 1], H[1, 1] / 2.0)
        pred = -n3sq * jet.I * (H @ np.linalg.solve(G, H))
        rr = float(np.abs(jet.hess - pred).max()) / max(np.abs(jet.hess).max(), 1e-300)
        res_bound = max(res_bound, rr)
        sols.append(PatchSolution(patch=patch, classification=classify_patch(patch),
                                  emergent_light=light, residual=rr))
    return PatchSolutionSet(tangent_plane=(a, b), solutions=tuple(sols),
                            residual_bound=res_bound, degenerate=degenerate)


# ---------------------------------------------------------------------------
# light recovery from several samples
# ---------------------------------------------------------------------------

def recover_light(patch: MongePatch3, points, intensities,
                  cond_limit: float = 1e8):
    """Least-squares light recovery from intensities at several points.

    Solves I_k = (albedo * L) . N_k for the scaled direction.  Requires at
    least 3 points with normals of full rank; raises RankDeficient when the
    normal matrix condition number exceeds `cond_limit` (a planar patch has
    identical normals everywhere, for example).

    Returns (LightSource, residual_norm).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    intensities = np.asarray(intensities, dtype=float)
    if len(points) < 3 or len(points) != len(intensities):
        raise BadInputError("need intensities at >= 3 points")
    A = np.stack([patch.normal(p) for p in points])
    if np.linalg.cond(A) > cond_limit:
        raise RankDeficient(
            f"normal matrix condition number {np.linalg.cond(A):.3g} > {cond_limit:.3g}")
    s, *_ = np.linalg.lstsq(A, intensities, rcond=None)
    rho = float(np.linalg.norm(s))
    if rho == 0.0:
        raise RankDeficient("recovered light has zero power")
    residual = float(np.linalg.norm(A @ s - intensities))
    return LightSource(s / rho, rho), residual


# ---------------------------------------------------------------------------
# 1D boundary-value reconstruction
# ---------------------------------------------------------------------------

class IntensityCurve:
    """1D intensity data with two derivatives, from callables, samples, or a
    rendered profile."""

    def __init__(self, jet_fn):
        self._jet = jet_fn

    def jet(self, x: float):
        return self._jet(float(x))

    @classmethod
    def from_callables(cls, I, Ix, Ixx):
        return cls(lambda x: (float(I(x)), float(Ix(x)), float(Ixx(x))))

    @classmethod
    def from_samples(cls, xs, values):
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        if len(xs) < 8:
            raise BadInputError("need at least 8 samples for a usable spline")
        spline = CubicSpline(xs, values)
        d1 = spline.derivative(1)
        d2 = spline.derivative(2)
        return cls(lambda x: (float(spline(x)), float(d1(x)), float(d2(x))))

    @classmethod
    def from_profile(cls, curve, light, albedo: float = 1.0):
        """Render a profile curve (x -> (f, f', f'', f''')) under a unit
        2-vector light; the solver itself never sees the light."""
        from .shading_eqs import _curve_jet_1d

        L = np.asarray(light, dtype=float)
        if abs(np.linalg.norm(L) - 1.0) > 1e-9:
            raise BadInputError("1D light must be a unit 2-vector")
        l1, l2 = float(L[0]), float(L[1])
        return cls(lambda x: _curve_jet_1d(curve, l1, l2, albedo, x))


@dataclass(frozen=True)
class Solve1DOptions:
    sing_eps: float = 1e-6         # |f_xx| threshold during integration
    rtol: float = 1e-11
    atol: float = 1e-13
    scan_rtol: float = 1e-8        # cheaper tolerance while bracketing
    scan_atol: float = 1e-10
    grid_n: int = 401
    bracket: Optional[tuple] = None  # explicit (lo, hi) for f''(x0)
    scan_magnitudes: tuple = (1e-3, 30.0, 40)  # (lo, hi, count) per sign
    shoot_tol: float = 1e-12
    boundary_accept: float = 1e-7  # |miss| accepted at a feasibility boundary


@dataclass(frozen=True)
class Curve1DSolution:
    xs: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray
    bc: tuple                  # (f(x0), f(x1), f'(x0))
    fpp0: float                # recovered initial curvature
    residuals: np.ndarray      # defect of the 1D relation on the grid
    max_residual: float


_DIVERGENCE_LIMIT = 1e8


def _integrate_1d(intensity: IntensityCurve, domain, y0, opts: Solve1DOptions):
    x0, x1 = domain

    def rhs(x, y):
        s, cv = y[1], y[2]
        I, Ix, Ixx = intensity.jet(x)
        q = 1.0 + s * s
        return [s, cv, (cv / Ix) * (Ixx + I * cv * cv / q ** 2 + 2.0 * Ix * s * cv / q)]

    def curvature_event(x, y):
        return abs(y[2]) - opts.sing_eps

    curvature_event.terminal = True
    curvature_event.direction = -1

    def divergence_event(x, y):
        # cut off blowing trajectories instead of grinding the step size down
        return _DIVERGENCE_LIMIT - max(abs(y[1]), abs(y[2]))

    divergence_event.terminal = True
    divergence_event.direction = -1

    with np.errstate(all="ignore"):
        sol = solve_ivp(rhs, (x0, x1), y0, method="RK45", rtol=opts.rtol,
                        atol=opts.atol, dense_output=True,
                        events=[curvature_event, divergence_event])
    if sol.status == 1:  # a terminal event fired
        for ev in sol.t_events:
            if len(ev):
                x_ev = float(ev[0])
                raise SingularityEncountered(x_ev, float(sol.sol(x_ev)[2]))
    if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
        raise SingularityEncountered(float(sol.t[-1]), float(sol.y[2, -1]))
    return sol


def solve_1d(intensity: IntensityCurve, domain, bc,
             options: Solve1DOptions = None) -> Curve1DSolution:
    """Reconstruct a profile curve from its 1D intensity by single shooting.

    `bc` = (f(x0), f(x1), f'(x0)): both endpoint heights plus the initial
    slope.  The unknown initial curvature f''(x0) is bracketed by scanning
    both signs and resolved by scalar root finding; integration stops with
    SingularityEncountered (and the x location) if |f_xx| falls below the
    threshold, and NoBracket if no sign change of the endpoint mismatch is
    found.

    The reported residuals are the defect of the 1D relation along the
    returned curve, with the third derivative taken from the integrator's
    dense output.
    """
    opts = options or Solve1DOptions()
    x0, x1 = float(domain[0]), float(domain[1])
    f0, f1, fp0 = (float(v) for v in bc)
    accept = opts.boundary_accept * max(1.0, abs(f0), abs(f1))
    coarse = replace(opts, rtol=opts.scan_rtol, atol=opts.scan_atol)

    def endpoint_miss(c0, fine=True):
        o = opts if fine else coarse
        sol = _integrate_1d(intensity, (x0, x1), [f0, fp0, c0], o)
        return float(sol.sol(x1)[0]) - f1

    def try_miss(c0, fine=False):
        try:
            return endpoint_miss(c0, fine), None
        except SingularityEncountered as exc:
            return None, exc

    def brentq_sorted(a, b, fine, xtol):
        lo, hi = sorted((a, b))
        return brentq(lambda c: endpoint_miss(c, fine), lo, hi, xtol=xtol)

    def boundary_root(c_ok, m_ok, c_bad):
        # the endpoint mismatch can terminate on a fold of the feasible set;
        # bisect toward the boundary at full tolerance, switching to
        # ordinary root finding if a sign change appears, and accept the
        # boundary itself as the root when the feasible-side mismatch
        # collapses there
        m_ok, _ = try_miss(c_ok, fine=True)
        if m_ok is None:
            return None
        for _ in range(90):
            if abs(m_ok) <= accept:
                return c_ok
            mid = 0.5 * (c_ok + c_bad)
            if mid == c_ok or mid == c_bad:
                break
            m_mid, _ = try_miss(mid, fine=True)
            if m_mid is None:
                c_bad = mid
            elif m_mid * m_ok <= 0.0:
                return brentq_sorted(c_ok, mid, True, opts.shoot_tol)
            else:
                c_ok, m_ok = mid, m_mid
        return c_ok if abs(m_ok) <= accept else None

    def scan(candidates):
        evals = []
        for c0 in candidates:
            if abs(c0) <= opts.sing_eps:
                continue
            miss, failure = try_miss(c0)
            evals.append((c0, miss, failure))
        return evals

    def polish(c):
        # refine a coarse bracketing root at full tolerance
        w = 1e-4 * (1.0 + abs(c))
        lo, hi = c - w, c + w
        m_lo, _ = try_miss(lo, fine=True)
        m_hi, _ = try_miss(hi, fine=True)
        if m_lo is not None and m_hi is not None and m_lo * m_hi <= 0.0:
            return brentq_sorted(lo, hi, True, opts.shoot_tol)
        if m_lo is not None and m_hi is None:
            root = boundary_root(lo, m_lo, hi)
            if root is not None:
                return root
        if m_lo is None and m_hi is not None:
            root = boundary_root(hi, m_hi, lo)
            if root is not None:
                return root
        return c

    if opts.bracket is not None:
        lo, hi = sorted(float(v) for v in opts.bracket)
        branches = [scan(np.linspace(lo, hi, 9))]
    else:
        lo_m, hi_m, count = opts.scan_magnitudes
        mags = np.geomspace(lo_m, hi_m, int(count))
        branches = [scan(mags), scan(-mags)]

    c0_star = None
    # direct sign-change brackets first (cheap); feasibility boundaries only
    # if no ordinary bracket exists anywhere
    for evals in branches:
        for (c_prev, m_prev, _), (c0, miss, _) in zip(evals, evals[1:]):
            if m_prev is not None and miss is not None and m_prev * miss <= 0.0:
                c0_star = polish(brentq_sorted(c_prev, c0, False, 1e-5))
                break
        if c0_star is not None:
            break
    if c0_star is None:
        for evals in branches:
            for (c_prev, m_prev, _), (c0, miss, _) in zip(evals, evals[1:]):
                root = None
                if m_prev is not None and miss is None:
                    root = boundary_root(c_prev, m_prev, c0)
                elif m_prev is None and miss is not None:
                    root = boundary_root(c0, miss, c_prev)
                if root is not None:
                    c0_star = root
                    break
            if c0_star is not None:
                break
    if c0_star is None:
        failures = [f for evals in branches for _, m, f in evals if m is None]
        if failures and all(m is None for evals in branches for _, m, _ in evals):
            raise failures[0]
        raise NoBracket("endpoint mismatch does not change sign over the scan")

    sol = _integrate_1d(intensity, (x0, x1), [f0, fp0, c0_star], opts)
    xs = np.linspace(x0, x1, opts.grid_n)
    states = sol.sol(xs)
    f, fp, fpp = states[0], states[1], states[2]

    # defect of the relation on the dense curve; f''' from the interpolant,
    # with second-order one-sided stencils at the domain ends
    span = x1 - x0
    h = 1e-6 * max(1.0, abs(span))
    sgn = 1.0 if span > 0 else -1.0

    def third(x):
        if sgn * (x - x0) < h:
            return (-3 * sol.sol(x)[2] + 4 * sol.sol(x + sgn * h)[2]
                    - sol.sol(x + 2 * sgn * h)[2]) / (2 * sgn * h)
        if sgn * (x1 - x) < h:
            return (3 * sol.sol(x)[2] - 4 * sol.sol(x - sgn * h)[2]
                    + sol.sol(x - 2 * sgn * h)[2]) / (2 * sgn * h)
        return (sol.sol(x + sgn * h)[2] - sol.sol(x - sgn * h)[2]) / (2 * sgn * h)

    residuals = np.zeros_like(xs)
    for i, x in enumerate(xs):
        I, Ix, Ixx = intensity.jet(x)
        residuals[i] = residual_1d(Jet1D(I=I, Ix=Ix, Ixx=Ixx,
                                         a=float(fp[i]), fxx=float(fpp[i]),
                                         fxxx=float(third(x))))
    return Curve1DSolution(xs=xs, f=f, fp=fp, fpp=fpp, bc=(f0, f1, fp0),
                           fpp0=float(c0_star), residuals=residuals,
                           max_residual=float(np.abs(residuals).max()))


def write_curve_csv(solution: Curve1DSolution, path: str) -> None:
    lines = ["x,f,residual"]
    for x, f, r in zip(solution.xs, solution.f, solution.residuals):
        lines.append(f"{x!r},{f!r},{r!r}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_curve_csv(path: str) -> np.ndarray:
    import csv as _csv
    rows = []
    with open(path, newline="") as fh:
        for rec in _csv.DictReader(fh):
            try:
                rows.append([float(rec["x"]), float(rec["f"]), float(rec["residual"])])
            except (KeyError, ValueError) as exc:
                raise BadInputError(f"malformed curve CSV {path}: {exc}") from exc
    return np.array(rows)
