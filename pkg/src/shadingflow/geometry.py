"""Differential geometry of cubic Monge patches.

A local surface is the graph z = f(x, y) of a third-order polynomial with no
constant term.  Everything here is an exact polynomial/rational evaluation of
the nine coefficients: unit normal, fundamental forms, shape operator,
Christoffel symbols, and the tangent-plane projection of a light source.

Conventions (fixed once, used everywhere):
  * tangent basis {(1, 0, f_x), (0, 1, f_y)}; a tangent vector's basis
    coordinates are simply its first two ambient components;
  * II = n3 * H with H the height Hessian, so II is positive definite for a
    bowl f = x^2 + y^2;
  * shape_operator = G^-1 II (positive for a bowl).  The derivative of the
    unit normal along a tangent step is minus this operator applied to the
    step, which is where the signs in `brightness_gradient_from_surface` and
    `verify_light_transport` come from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import BadInputError

__all__ = [
    "MongePatch3",
    "MongePatch2",
    "LightSource",
    "SurfaceFrame",
    "surface_frame",
    "project_light",
    "brightness_gradient_from_surface",
    "christoffel",
    "verify_light_transport",
    "tangent_ambient",
]


@dataclass(frozen=True)
class MongePatch3:
    """Height function f = c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2
    + c6 x^3 + c7 x^2 y + c8 x y^2 + c9 y^3."""

    c: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.c)
        if len(c) != 9:
            raise BadInputError(f"expected 9 coefficients, got {len(c)}")
        object.__setattr__(self, "c", c)

    def value(self, point) -> float:
        x, y = point
        c1, c2, c3, c4, c5, c6, c7, c8, c9 = self.c
        return (c1 * x + c2 * y + c3 * x * x + c4 * x * y + c5 * y * y
                + c6 * x ** 3 + c7 * x * x * y + c8 * x * y * y + c9 * y ** 3)

    def gradient(self, point) -> np.ndarray:
        x, y = point
        c1, c2, c3, c4, c5, c6, c7, c8, c9 = self.c
        fx = c1 + 2 * c3 * x + c4 * y + 3 * c6 * x * x + 2 * c7 * x * y + c8 * y * y
        fy = c2 + c4 * x + 2 * c5 * y + c7 * x * x + 2 * c8 * x * y + 3 * c9 * y * y
        return np.array([fx, fy])

    def hessian(self, point) -> np.ndarray:
        x, y = point
        _, _, c3, c4, c5, c6, c7, c8, c9 = self.c
        fxx = 2 * c3 + 6 * c6 * x + 2 * c7 * y
        fxy = c4 + 2 * c7 * x + 2 * c8 * y
        fyy = 2 * c5 + 2 * c8 * x + 6 * c9 * y
        return np.array([[fxx, fxy], [fxy, fyy]])

    def third_derivatives(self) -> np.ndarray:
        """(f_xxx, f_xxy, f_xyy, f_yyy); constant for a cubic."""
        c6, c7, c8, c9 = self.c[5:]
        return np.array([6 * c6, 2 * c7, 2 * c8, 6 * c9])

    def hessian_derivative(self, direction) -> np.ndarray:
        """Directional derivative of the Hessian along an image vector,
        (w[H])_ij = sum_k f_ijk w_k."""
        fxxx, fxxy, fxyy, fyyy = self.third_derivatives()
        hx = np.array([[fxxx, fxxy], [fxxy, fxyy]])
        hy = np.array([[fxxy, fxyy], [fxyy, fyyy]])
        return direction[0] * hx + direction[1] * hy

    def normal(self, point) -> np.ndarray:
        g = self.gradient(point)
        n = np.array([-g[0], -g[1], 1.0])
        return n / np.linalg.norm(n)

    def to_json(self) -> str:
        return json.dumps({"c": list(self.c)})

    @classmethod
    def from_json(cls, text: str) -> "MongePatch3":
        try:
            obj = json.loads(text)
            return cls(tuple(obj["c"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise BadInputError(f"bad patch JSON: {exc}") from exc


@dataclass(frozen=True)
class MongePatch2:
    """Quadratic patch f = a x + b y + c x^2 + d xy + e y^2."""

    a: float
    b: float
    c: float
    d: float
    e: float

    def to_cubic(self) -> MongePatch3:
        return MongePatch3((self.a, self.b, self.c, self.d, self.e, 0.0, 0.0, 0.0, 0.0))

    def hessian(self) -> np.ndarray:
        return np.array([[2 * self.c, self.d], [self.d, 2 * self.e]])

    @property
    def tangent_plane(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class LightSource:
    """Unit direction in 3-space and a positive albedo factor."""

    direction: np.ndarray
    albedo: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,):
            raise BadInputError("light direction must be a 3-vector")
        norm = np.linalg.norm(d)
        if norm == 0.0:
            raise BadInputError("light direction must be nonzero")
        if abs(norm - 1.0) > 1e-12:
            d = d / norm
        object.__setattr__(self, "direction", d)
        if not self.albedo > 0:
            raise BadInputError("albedo must be positive")

    def to_json(self) -> str:
        return json.dumps({"dir": list(self.direction), "albedo": self.albedo})

    @classmethod
    def from_json(cls, text: str) -> "LightSource":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BadInputError(f"bad light JSON: {exc}") from exc
        return cls.from_dict(obj)

    @classmethod
    def from_dict(cls, obj) -> "LightSource":
        try:
            return cls(np.asarray(obj["dir"], dtype=float), float(obj.get("albedo", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise BadInputError(f"bad light spec: {exc}") from exc


@dataclass(frozen=True)
class SurfaceFrame:
    """All first/second-order surface quantities at one point."""

    point: np.ndarray
    normal: np.ndarray          # unit, positive third component
    metric: np.ndarray          # G, 2x2 SPD
    second_form: np.ndarray     # II = n3 * H
    hessian: np.ndarray         # H, height Hessian
    shape_operator: np.ndarray  # G^-1 II
    n3: float


def surface_frame(patch: MongePatch3, point) -> SurfaceFrame:
    """Exact frame of the patch at an image point."""
    point = np.asarray(point, dtype=float)
    g = patch.gradient(point)
    H = patch.hessian(point)
    n3 = 1.0 / np.sqrt(1.0 + g @ g)
    normal = n3 * np.array([-g[0], -g[1], 1.0])
    G = np.eye(2) + np.outer(g, g)
    II = n3 * H
    dN = np.linalg.solve(G, II)
    return SurfaceFrame(point=point, normal=normal, metric=G,
                        second_form=II, hessian=H, shape_operator=dN, n3=n3)


def tangent_ambient(frame: SurfaceFrame, coords) -> np.ndarray:
    """Ambient 3-vector of a tangent vector given in basis coordinates."""
    g = -frame.normal[:2] / frame.n3
    return np.array([coords[0], coords[1], coords[0] * g[0] + coords[1] * g[1]])


def project_light(light: LightSource, frame: SurfaceFrame):
    """Project the light direction onto the tangent plane.

    Returns (coords, ambient): the basis coordinates in the Monge tangent
    basis and the ambient 3-vector.  A zero vector (light along the normal)
    is a legal output.
    """
    L = light.direction
    ambient = L - (L @ frame.normal) * frame.normal
    # basis vectors are (1,0,f_x) and (0,1,f_y): coordinates are the first
    # two ambient components
    coords = ambient[:2].copy()
    return coords, ambient


def brightness_gradient_from_surface(patch: MongePatch3, light: LightSource, point) -> np.ndarray:
    """Brightness gradient of the rendered intensity via the tangent-plane
    route: the projected light contracted with the curvature form.

    Equals the analytic gradient of albedo * (L . N)(x, y).  The normal's
    derivative along a step w is -(G^-1 II) w, hence the leading sign.
    """
    frame = surface_frame(patch, point)
    lt, _ = project_light(light, frame)
    return -light.albedo * (lt @ frame.second_form)


def christoffel(patch: MongePatch3, point) -> np.ndarray:
    """Christoffel symbols Gamma[k, i, j] of the graph metric.

    For a Monge patch, Gamma^k_ij = f_k * f_ij / (1 + f_x^2 + f_y^2).
    """
    g = patch.gradient(point)
    H = patch.hessian(point)
    w2 = 1.0 + g @ g
    return np.stack([g[0] * H / w2, g[1] * H / w2])


def verify_light_transport(patch: MongePatch3, light: LightSource, point,
                           direction, h: float) -> float:
    """Residual of the closed form for the covariant derivative of the
    projected light along an image direction.

    A finite-difference covariant derivative (step, then project back to the
    tangent plane at the base point) is compared with
    (L . N) * (G^-1 II)(direction); the distance decays at first order in h.
    The formula depends on the light only through the observed intensity
    factor L . N.
    """
    if not 0.0 < h <= 1e-2:
        raise BadInputError("step h must lie in (0, 1e-2]")
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)

    frame0 = surface_frame(patch, point)
    _, lt0 = project_light(light, frame0)
    frame1 = surface_frame(patch, point + h * direction)
    _, lt1 = project_light(light, frame1)
    lt1_back = lt1 - (lt1 @ frame0.normal) * frame0.normal
    fd = (lt1_back - lt0) / h

    cosine = light.direction @ frame0.normal
    predicted = cosine * tangent_ambient(frame0, frame0.shape_operator @ direction)
    return float(np.linalg.norm(fd - predicted))
