"""Lambertian rendering of Monge patches and image-derivative jets.

The forward model is I = sum_k albedo_k * max(L_k . N, 0), clamped per
source.  Analytic jets differentiate the unclamped model in closed form and
refuse shadowed points; finite-difference jets use second-order stencils and
serve as the independent oracle.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import BadInputError, BorderPixel, ShadowedPoint
from .geometry import LightSource, MongePatch3

__all__ = [
    "ImageJet2",
    "RasterImage",
    "render_intensity",
    "analytic_jet",
    "render_raster",
    "fd_jet",
    "write_pgm",
    "read_pgm",
    "write_jets_csv",
    "read_jets_csv",
]


@dataclass(frozen=True)
class ImageJet2:
    """Intensity and its first/second derivatives at a point."""

    I: float
    Ix: float
    Iy: float
    Ixx: float
    Ixy: float
    Iyy: float

    @property
    def gradient(self) -> np.ndarray:
        return np.array([self.Ix, self.Iy])

    @property
    def hess(self) -> np.ndarray:
        return np.array([[self.Ixx, self.Ixy], [self.Ixy, self.Iyy]])

    def scaled(self, s: float) -> "ImageJet2":
        return ImageJet2(*(s * v for v in
                           (self.I, self.Ix, self.Iy, self.Ixx, self.Ixy, self.Iyy)))

    def __add__(self, other: "ImageJet2") -> "ImageJet2":
        return ImageJet2(self.I + other.I, self.Ix + other.Ix, self.Iy + other.Iy,
                         self.Ixx + other.Ixx, self.Ixy + other.Ixy, self.Iyy + other.Iyy)


@dataclass(frozen=True)
class RasterImage:
    """Row-major nonnegative intensities on a square-pixel grid.

    Coordinates are centered: pixel (i, j) sits at
    x = (j - (width-1)/2) * spacing, y = ((height-1)/2 - i) * spacing,
    so row 0 is the top of the image and y increases upward.
    """

    width: int
    height: int
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.height, self.width)
        if not self.spacing > 0:
            raise BadInputError("spacing must be positive")
        object.__setattr__(self, "values", v)

    def pixel_center(self, i: int, j: int) -> np.ndarray:
        x = (j - (self.width - 1) / 2.0) * self.spacing
        y = ((self.height - 1) / 2.0 - i) * self.spacing
        return np.array([x, y])

    def coordinate_grids(self):
        """(X, Y) arrays of pixel-center coordinates, shape (height, width)."""
        j = np.arange(self.width)
        i = np.arange(self.height)
        x = (j - (self.width - 1) / 2.0) * self.spacing
        y = ((self.height - 1) / 2.0 - i) * self.spacing
        return np.meshgrid(x, y)


def render_intensity(patch: MongePatch3, lights: Sequence[LightSource], point) -> float:
    """Clamped Lambertian intensity at one image point."""
    if len(lights) == 0:
        raise BadInputError("at least one light source is required")
    n = patch.normal(point)
    return float(sum(ls.albedo * max(ls.direction @ n, 0.0) for ls in lights))


def _single_light_jet(patch: MongePatch3, light: LightSource, point) -> ImageJet2:
    g = patch.gradient(point)
    H = patch.hessian(point)
    fxxx, fxxy, fxyy, fyyy = patch.third_derivatives()
    p, q = g
    pd = H[0]                                   # (p_x, p_y)
    qd = H[1]                                   # (q_x, q_y)
    pdd = np.array([[fxxx, fxxy], [fxxy, fxyy]])
    qdd = np.array([[fxxy, fxyy], [fxyy, fyyy]])

    w = np.sqrt(1.0 + p * p + q * q)
    wd = (p * pd + q * qd) / w
    v = np.array([-p, -q, 1.0])
    vd = np.array([[-pd[0], -qd[0], 0.0], [-pd[1], -qd[1], 0.0]])

    L = light.albedo * light.direction
    I = L @ v / w
    Ia = np.array([L @ (vd[a] / w - v * wd[a] / w ** 2) for a in range(2)])
    Iab = np.empty((2, 2))
    for a in range(2):
        for b in range(2):
            wab = (pd[a] * pd[b] + p * pdd[a, b] + qd[a] * qd[b] + q * qdd[a, b]) / w \
                - wd[a] * wd[b] / w
            vab = np.array([-pdd[a, b], -qdd[a, b], 0.0])
            Nab = (vab / w - vd[a] * wd[b] / w ** 2 - vd[b] * wd[a] / w ** 2
                   - v * wab / w ** 2 + 2.0 * v * wd[a] * wd[b] / w ** 3)
            Iab[a, b] = L @ Nab
    return ImageJet2(I, Ia[0], Ia[1], Iab[0, 0], Iab[0, 1], Iab[1, 1])


def analytic_jet(patch: MongePatch3, lights: Sequence[LightSource], point) -> ImageJet2:
    """Closed-form jet of the rendered intensity.

    Raises ShadowedPoint if any light has L . N <= 0 there, since the clamp
    would make the derivatives one-sided.
    """
    if len(lights) == 0:
        raise BadInputError("at least one light source is required")
    n = patch.normal(point)
    for k, ls in enumerate(lights):
        cosine = float(ls.direction @ n)
        if cosine <= 0.0:
            raise ShadowedPoint(k, cosine)
    jet = _single_light_jet(patch, lights[0], point)
    for ls in lights[1:]:
        jet = jet + _single_light_jet(patch, ls, point)
    return jet


def render_raster(patch: MongePatch3, lights: Sequence[LightSource],
                  center, extent: float, resolution: int) -> RasterImage:
    """Sample the clamped intensity at pixel centers of a square window.

    The window is centered at `center` with full width `extent`; pixel
    centers span the window inclusively, so spacing = extent/(resolution-1).
    The raster's own coordinates are relative to the window center.
    """
    if resolution < 3:
        raise BadInputError("resolution must be at least 3x3")
    if len(lights) == 0:
        raise BadInputError("at least one light source is required")
    center = np.asarray(center, dtype=float)
    spacing = extent / (resolution - 1)
    img = RasterImage(resolution, resolution, spacing,
                      np.zeros((resolution, resolution)))
    X, Y = img.coordinate_grids()
    Xa, Ya = X + center[0], Y + center[1]

    c1, c2, c3, c4, c5, c6, c7, c8, c9 = patch.c
    fx = c1 + 2 * c3 * Xa + c4 * Ya + 3 * c6 * Xa ** 2 + 2 * c7 * Xa * Ya + c8 * Ya ** 2
    fy = c2 + c4 * Xa + 2 * c5 * Ya + c7 * Xa ** 2 + 2 * c8 * Xa * Ya + 3 * c9 * Ya ** 2
    w = np.sqrt(1.0 + fx ** 2 + fy ** 2)
    values = np.zeros_like(Xa)
    for ls in lights:
        d = ls.direction
        dot = (-d[0] * fx - d[1] * fy + d[2]) / w
        values += ls.albedo * np.clip(dot, 0.0, None)
    return RasterImage(resolution, resolution, spacing, values)


def fd_jet(img: RasterImage, pixel) -> ImageJet2:
    """Second-order central-difference jet at a pixel, O(spacing^2) accurate.

    The pixel must be at least 2 pixels from every border.
    """
    i, j = pixel
    if min(i, j, img.height - 1 - i, img.width - 1 - j) < 2:
        raise BorderPixel(f"pixel ({i}, {j}) is within 2 pixels of the border")
    v = img.values
    h = img.spacing
    # +x is +j; +y is -i (rows count downward)
    I = v[i, j]
    Ix = (v[i, j + 1] - v[i, j - 1]) / (2 * h)
    Iy = (v[i - 1, j] - v[i + 1, j]) / (2 * h)
    Ixx = (v[i, j + 1] - 2 * I + v[i, j - 1]) / h ** 2
    Iyy = (v[i - 1, j] - 2 * I + v[i + 1, j]) / h ** 2
    Ixy = (v[i - 1, j + 1] - v[i - 1, j - 1] - v[i + 1, j + 1] + v[i + 1, j - 1]) / (4 * h ** 2)
    return ImageJet2(I, Ix, Iy, Ixx, Ixy, Iyy)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

_PGM_MAXVAL = 65535


def _atomic_write_bytes(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _atomic_write_text(path: str, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def write_pgm(img: RasterImage, path: str, binary: bool = True, center=(0.0, 0.0)) -> None:
    """Write a 16-bit PGM (P5 binary or P2 ascii) plus a JSON sidecar.

    Intensities map linearly to [0, 65535]; the sidecar records the scale
    (image units per level), spacing, and the window center.
    """
    vmax = float(img.values.max())
    scale = vmax / _PGM_MAXVAL if vmax > 0 else 1.0
    levels = np.rint(img.values / scale).astype(np.uint16) if vmax > 0 \
        else np.zeros_like(img.values, dtype=np.uint16)
    header = f"P5 {img.width} {img.height} {_PGM_MAXVAL}\n" if binary \
        else f"P2\n{img.width} {img.height}\n{_PGM_MAXVAL}\n"
    if binary:
        body = levels.astype(">u2").tobytes()
        _atomic_write_bytes(path, header.encode("ascii") + body)
    else:
        lines = "\n".join(" ".join(str(int(x)) for x in row) for row in levels)
        _atomic_write_text(path, header + lines + "\n")
    sidecar = {"scale": scale, "spacing": img.spacing,
               "center": [float(center[0]), float(center[1])]}
    _atomic_write_text(path + ".json", json.dumps(sidecar, sort_keys=True))


def read_pgm(path: str):
    """Read a PGM written by `write_pgm`.  Returns (RasterImage, center)."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        tokens = []
        pos = 0
        while len(tokens) < 4:
            # tokenize header, skipping comments
            while pos < len(data) and data[pos:pos + 1].isspace():
                pos += 1
            if data[pos:pos + 1] == b"#":
                pos = data.index(b"\n", pos) + 1
                continue
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
        magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
        pos += 1  # single whitespace after maxval
        if magic == b"P5":
            count = w * h
            dtype = ">u2" if maxval > 255 else ">u1"
            levels = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        elif magic == b"P2":
            levels = np.array(data[pos:].split(), dtype=float)
        else:
            raise BadInputError(f"unsupported PGM magic {magic!r}")
        levels = levels.reshape(h, w).astype(float)
    except (ValueError, IndexError) as exc:
        raise BadInputError(f"malformed PGM file {path}: {exc}") from exc
    sidecar_path = path + ".json"
    try:
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
        scale = float(sidecar["scale"])
        spacing = float(sidecar["spacing"])
        center = np.asarray(sidecar.get("center", [0.0, 0.0]), dtype=float)
    except FileNotFoundError:
        scale, spacing, center = 1.0, 1.0, np.zeros(2)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise BadInputError(f"malformed sidecar {sidecar_path}: {exc}") from exc
    return RasterImage(w, h, spacing, levels * scale), center


_JET_FIELDS = ["x", "y", "I", "Ix", "Iy", "Ixx", "Ixy", "Iyy"]


def write_jets_csv(rows, path: str) -> None:
    """Write (point, ImageJet2) rows as CSV."""
    lines = [",".join(_JET_FIELDS)]
    for point, jet in rows:
        vals = [point[0], point[1], jet.I, jet.Ix, jet.Iy, jet.Ixx, jet.Ixy, jet.Iyy]
        lines.append(",".join(repr(float(v)) for v in vals))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_jets_csv(path: str):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            try:
                point = np.array([float(rec["x"]), float(rec["y"])])
                jet = ImageJet2(*(float(rec[k]) for k in _JET_FIELDS[2:]))
            except (KeyError, ValueError) as exc:
                raise BadInputError(f"malformed jet CSV {path}: {exc}") from exc
            rows.append((point, jet))
    return rows
