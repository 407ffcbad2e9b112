"""Isophote flow frames and flow fields.

The flow frame at a point is the orthonormal image basis {u, v} with u along
the brightness gradient (uphill) and v its counterclockwise right angle, the
isophote tangent, together with the second derivatives of intensity rotated
into that basis.  Frames are undefined where the gradient vanishes; those
points are masked in fields and handled by the critical-point machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from .exceptions import BadInputError, DegenerateGradient
from .imaging import ImageJet2, RasterImage, _atomic_write_text, fd_jet

__all__ = [
    "FlowFrame",
    "FlowField",
    "DEFAULT_GRAD_EPS",
    "frame_from_jet",
    "flow_field_from_raster",
    "find_critical_points",
    "write_flow_csv",
    "read_flow_csv",
    "write_flow_svg",
]

DEFAULT_GRAD_EPS = 1e-9


@dataclass(frozen=True)
class FlowFrame:
    """Gradient/isophote frame and rotated second derivatives.

    u is the unit gradient direction, v = rot90(u) counterclockwise, so
    the derivative of intensity along v vanishes by construction.
    """

    u: np.ndarray
    v: np.ndarray
    I: float
    Iu: float    # gradient magnitude
    Ivv: float
    Iuv: float
    Iuu: float

    @property
    def gradient(self) -> np.ndarray:
        return self.Iu * self.u

    def hessian_image(self) -> np.ndarray:
        """Intensity Hessian back in image coordinates."""
        R = np.column_stack([self.v, self.u])
        huv = np.array([[self.Ivv, self.Iuv], [self.Iuv, self.Iuu]])
        return R @ huv @ R.T


def frame_from_jet(jet: ImageJet2, grad_eps: float = DEFAULT_GRAD_EPS) -> FlowFrame:
    """Rotate a jet into the gradient/isophote basis.

    Raises DegenerateGradient when the gradient magnitude is at or below
    grad_eps; such points belong to the critical-point solver instead.
    """
    g = jet.gradient
    gnorm = float(np.linalg.norm(g))
    if gnorm <= grad_eps:
        raise DegenerateGradient(f"|grad I| = {gnorm:.3g} <= {grad_eps:.3g}")
    u = g / gnorm
    v = np.array([-u[1], u[0]])
    hess = jet.hess
    return FlowFrame(u=u, v=v, I=jet.I, Iu=gnorm,
                     Ivv=float(v @ hess @ v),
                     Iuv=float(u @ hess @ v),
                     Iuu=float(u @ hess @ u))


@dataclass(frozen=True)
class FlowField:
    """Flow frames sampled on a pixel grid; degenerate samples are masked."""

    xs: np.ndarray      # (width,)
    ys: np.ndarray      # (height,)
    I: np.ndarray       # (height, width)
    Iu: np.ndarray
    Ivv: np.ndarray
    Iuv: np.ndarray
    Iuu: np.ndarray
    U: np.ndarray       # (height, width, 2) unit gradient direction
    mask: np.ndarray    # True where no valid frame (border or degenerate)

    def frame_at(self, i: int, j: int):
        if self.mask[i, j]:
            return None
        u = self.U[i, j]
        return FlowFrame(u=u, v=np.array([-u[1], u[0]]),
                         I=self.I[i, j], Iu=self.Iu[i, j],
                         Ivv=self.Ivv[i, j], Iuv=self.Iuv[i, j], Iuu=self.Iuu[i, j])


def flow_field_from_raster(img: RasterImage, grad_eps: float = DEFAULT_GRAD_EPS) -> FlowField:
    """Finite-difference jets plus frames at every interior pixel.

    Pixels within 2 of the border or with a degenerate gradient are masked,
    never errors.
    """
    if img.width < 5 or img.height < 5:
        raise BadInputError("raster must be at least 5x5")
    h, w = img.height, img.width
    sp = img.spacing
    v = img.values
    I = v.copy()
    Ix = np.zeros((h, w))
    Iy = np.zeros((h, w))
    Ixx = np.zeros((h, w))
    Iyy = np.zeros((h, w))
    Ixy = np.zeros((h, w))
    c = (slice(1, -1), slice(1, -1))
    Ix[c] = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * sp)
    Iy[c] = (v[:-2, 1:-1] - v[2:, 1:-1]) / (2 * sp)
    Ixx[c] = (v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / sp ** 2
    Iyy[c] = (v[:-2, 1:-1] - 2 * v[1:-1, 1:-1] + v[2:, 1:-1]) / sp ** 2
    Ixy[c] = (v[:-2, 2:] - v[:-2, :-2] - v[2:, 2:] + v[2:, :-2]) / (4 * sp ** 2)

    gnorm = np.hypot(Ix, Iy)
    mask = np.ones((h, w), dtype=bool)
    mask[2:-2, 2:-2] = False
    mask |= gnorm <= grad_eps

    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(gnorm > 0, Ix / np.where(gnorm > 0, gnorm, 1.0), 0.0)
        uy = np.where(gnorm > 0, Iy / np.where(gnorm > 0, gnorm, 1.0), 0.0)
    vx, vy = -uy, ux
    Ivv = vx * vx * Ixx + 2 * vx * vy * Ixy + vy * vy * Iyy
    Iuu = ux * ux * Ixx + 2 * ux * uy * Ixy + uy * uy * Iyy
    Iuv = ux * vx * Ixx + (ux * vy + uy * vx) * Ixy + uy * vy * Iyy

    X, Y = img.coordinate_grids()
    return FlowField(xs=X[0], ys=Y[:, 0], I=I, Iu=gnorm,
                     Ivv=Ivv, Iuv=Iuv, Iuu=Iuu,
                     U=np.stack([ux, uy], axis=-1), mask=mask)


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

def _cell_has_zero(f00, f01, f10, f11):
    lo = min(f00, f01, f10, f11)
    hi = max(f00, f01, f10, f11)
    return lo <= 0.0 <= hi


def _newton_on_jet(jet_fn: Callable, start: np.ndarray, tol: float, max_iter: int = 60):
    p = start.astype(float).copy()
    for _ in range(max_iter):
        jet = jet_fn(p)
        g = jet.gradient
        if np.linalg.norm(g) <= tol:
            return p
        try:
            step = np.linalg.solve(jet.hess, g)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(step) > 1.0:
            step = step / np.linalg.norm(step)
        p = p - step
    jet = jet_fn(p)
    return p if np.linalg.norm(jet.gradient) <= tol else None


def find_critical_points(source, window=None, samples: int = 41,
                         crit_eps: float = None) -> List[np.ndarray]:
    """Locate sub-pixel zeros of the brightness gradient.

    `source` is either a RasterImage (gradients by finite differences,
    refinement on the bilinear interpolant of the sampled gradient) or a
    callable point -> ImageJet2 (scanned over `window` = (center, extent),
    refined by Newton on the exact jet).  Every returned point satisfies
    |grad I| <= crit_eps on the data used for refinement; the default
    threshold is 1e-6 times the maximum intensity.  An empty list is a
    legal result.
    """
    if isinstance(source, RasterImage):
        return _critical_points_raster(source, crit_eps)
    if not callable(source):
        raise BadInputError("source must be a RasterImage or a jet callable")
    if window is None:
        raise BadInputError("a (center, extent) window is required for jet callables")
    return _critical_points_field(source, window, samples, crit_eps)


def _critical_points_field(jet_fn, window, samples, crit_eps):
    center, extent = np.asarray(window[0], dtype=float), float(window[1])
    xs = center[0] + np.linspace(-extent / 2, extent / 2, samples)
    ys = center[1] + np.linspace(-extent / 2, extent / 2, samples)
    jets = [[jet_fn(np.array([x, y])) for x in xs] for y in ys]
    gx = np.array([[j.Ix for j in row] for row in jets])
    gy = np.array([[j.Iy for j in row] for row in jets])
    Imax = max(1e-300, float(np.max(np.abs([[j.I for j in row] for row in jets]))))
    eps = 1e-6 * Imax if crit_eps is None else crit_eps
    found: List[np.ndarray] = []
    for iy in range(samples - 1):
        for ix in range(samples - 1):
            if not (_cell_has_zero(gx[iy, ix], gx[iy, ix + 1], gx[iy + 1, ix], gx[iy + 1, ix + 1])
                    and _cell_has_zero(gy[iy, ix], gy[iy, ix + 1], gy[iy + 1, ix], gy[iy + 1, ix + 1])):
                continue
            start = np.array([(xs[ix] + xs[ix + 1]) / 2, (ys[iy] + ys[iy + 1]) / 2])
            p = _newton_on_jet(jet_fn, start, eps)
            if p is None:
                continue
            if not any(np.linalg.norm(p - q) < 1e-8 * max(1.0, extent) for q in found):
                found.append(p)
    return found


def _critical_points_raster(img: RasterImage, crit_eps):
    field = flow_field_from_raster(img, grad_eps=0.0)
    h, w = img.height, img.width
    sp = img.spacing
    Ix = field.Iu * field.U[:, :, 0]
    Iy = field.Iu * field.U[:, :, 1]
    eps = 1e-6 * max(1e-300, float(img.values.max())) if crit_eps is None else crit_eps

    def bilinear(F, x, y):
        # x, y in pixel units relative to cell corner (i, j)
        return lambda i, j, s, t: ((1 - s) * (1 - t) * F[i, j] + s * (1 - t) * F[i, j + 1]
                                   + (1 - s) * t * F[i + 1, j] + s * t * F[i + 1, j + 1])

    fx = bilinear(Ix, 0, 0)
    fy = bilinear(Iy, 0, 0)
    found: List[np.ndarray] = []
    for i in range(2, h - 3):
        for j in range(2, w - 3):
            if not (_cell_has_zero(Ix[i, j], Ix[i, j + 1], Ix[i + 1, j], Ix[i + 1, j + 1])
                    and _cell_has_zero(Iy[i, j], Iy[i, j + 1], Iy[i + 1, j], Iy[i + 1, j + 1])):
                continue
            # Newton on the two bilinear interpolants inside the cell
            s, t = 0.5, 0.5
            ok = False
            for _ in range(50):
                r = np.array([fx(i, j, s, t), fy(i, j, s, t)])
                if np.linalg.norm(r) <= eps:
                    ok = True
                    break
                J = np.array([
                    [fx(i, j, 1.0, t) - fx(i, j, 0.0, t), fx(i, j, s, 1.0) - fx(i, j, s, 0.0)],
                    [fy(i, j, 1.0, t) - fy(i, j, 0.0, t), fy(i, j, s, 1.0) - fy(i, j, s, 0.0)],
                ])
                try:
                    ds, dt = np.linalg.solve(J, r)
                except np.linalg.LinAlgError:
                    break
                s, t = s - ds, t - dt
                if not (-0.5 <= s <= 1.5 and -0.5 <= t <= 1.5):
                    break
            if not ok:
                continue
            # s moves along +j (+x), t along +i (-y)
            base = img.pixel_center(i, j)
            p = base + np.array([s * sp, -t * sp])
            if not any(np.linalg.norm(p - q) < 0.25 * sp for q in found):
                found.append(p)
    return found


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

_FLOW_FIELDS = ["x", "y", "ux", "uy", "I", "Iu", "Iuu", "Iuv", "Ivv", "masked"]


def write_flow_csv(field: FlowField, path: str) -> None:
    lines = [",".join(_FLOW_FIELDS)]
    for i in range(len(field.ys)):
        for j in range(len(field.xs)):
            m = bool(field.mask[i, j])
            vals = [field.xs[j], field.ys[i],
                    field.U[i, j, 0], field.U[i, j, 1],
                    field.I[i, j], field.Iu[i, j],
                    field.Iuu[i, j], field.Iuv[i, j], field.Ivv[i, j]]
            lines.append(",".join(repr(float(v)) for v in vals) + f",{int(m)}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_flow_csv(path: str):
    """Rows of (x, y, ux, uy, I, Iu, Iuu, Iuv, Ivv, masked) as a float array."""
    import csv as _csv
    rows = []
    with open(path, newline="") as fh:
        for rec in _csv.DictReader(fh):
            try:
                rows.append([float(rec[k]) for k in _FLOW_FIELDS])
            except (KeyError, ValueError) as exc:
                raise BadInputError(f"malformed flow CSV {path}: {exc}") from exc
    return np.array(rows)


def write_flow_svg(field: FlowField, path: str, stroke: str = "#1a4a8a") -> None:
    """Quiver plot: one segment along the isophote direction per unmasked
    sample, a small dot per masked sample."""
    xs, ys = field.xs, field.ys
    if len(xs) < 2 or len(ys) < 2:
        raise BadInputError("field too small for a quiver plot")
    dx = abs(xs[1] - xs[0])
    seg = 0.8 * dx
    margin = dx
    x0, x1 = xs.min() - margin, xs.max() + margin
    y0, y1 = ys.min() - margin, ys.max() + margin
    scale = 600.0 / max(x1 - x0, y1 - y0)

    def sx(x):
        return (x - x0) * scale

    def sy(y):
        return (y1 - y) * scale  # svg y grows downward

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{sx(x1):.1f}" '
        f'height="{sy(y0):.1f}" viewBox="0 0 {sx(x1):.1f} {sy(y0):.1f}">',
        f'<g stroke="{stroke}" stroke-width="1">',
    ]
    for i in range(len(ys)):
        for j in range(len(xs)):
            x, y = xs[j], ys[i]
            if field.mask[i, j]:
                parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="0.8" '
                             'fill="#bbbbbb" stroke="none"/>')
                continue
            u = field.U[i, j]
            vx, vy = -u[1], u[0]
            xa, ya = x - 0.5 * seg * vx, y - 0.5 * seg * vy
            xb, yb = x + 0.5 * seg * vx, y + 0.5 * seg * vy
            parts.append(f'<line x1="{sx(xa):.2f}" y1="{sy(ya):.2f}" '
                         f'x2="{sx(xb):.2f}" y2="{sy(yb):.2f}"/>')
    parts.append("</g></svg>")
    _atomic_write_text(path, "\n".join(parts) + "\n")
