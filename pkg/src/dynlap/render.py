"""Deterministic raster heatmaps of box fields with contour overlays."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .coherent import ContourSet
from .errors import RenderError
from .grid import ScalarField

# fixed diverging colormap: cool blue -> near-white -> warm red
_LOW = np.array([59.0, 76.0, 192.0])
_MID = np.array([242.0, 242.0, 242.0])
_HIGH = np.array([180.0, 4.0, 38.0])


def _colormap(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)[..., None]
    lower = _LOW + (2.0 * t) * (_MID - _LOW)
    upper = _MID + (2.0 * t - 1.0) * (_HIGH - _MID)
    rgb = np.where(t < 0.5, lower, upper)
    return np.round(rgb).astype(np.uint8)


def render_heatmap(
    f: ScalarField,
    contours: ContourSet | list[ContourSet] | None = None,
    path=None,
    scale: int | None = None,
) -> bytes:
    """Write a PNG of the field (one colored block per box) with optional
    black contour polylines; returns the PNG bytes.

    Color is the fixed diverging map scaled to [min f, max f] (mid-gray for a
    constant field).  Pixel rows run top-down, so the image is vertically
    flipped relative to field storage.  Bytes are deterministic for identical
    inputs.
    """
    g = f.grid
    if g.n == 0:
        raise RenderError("cannot render a zero-size grid")
    s = scale or max(1, 512 // max(g.nx, g.ny))
    a = f.as_matrix()
    vmin = float(a.min())
    vmax = float(a.max())
    t = np.full_like(a, 0.5) if vmax == vmin else (a - vmin) / (vmax - vmin)
    rgb = _colormap(t)
    rgb = np.repeat(np.repeat(rgb, s, axis=0), s, axis=1)
    rgb = rgb[::-1, :, :]  # y axis points up in the domain
    img = Image.fromarray(rgb, mode="RGB")

    if contours is not None:
        sets = contours if isinstance(contours, list) else [contours]
        draw = ImageDraw.Draw(img)
        h = img.height
        ppx = s * g.nx / g.domain.width
        ppy = s * g.ny / g.domain.height

        def to_px(u):
            x = (u[:, 0] - g.domain.x_min) * ppx
            y = h - (u[:, 1] - g.domain.y_min) * ppy
            return x, y

        for cs in sets:
            for u in cs.unwrapped():
                for shift in _seam_shifts(cs, u):
                    x, y = to_px(u + shift)
                    pts = list(zip(x.tolist(), y.tolist()))
                    if len(pts) >= 2:
                        draw.line(pts, fill=(0, 0, 0), width=1)

    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        img.save(path, format="PNG")
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _seam_shifts(cs: ContourSet, u: np.ndarray) -> list[np.ndarray]:
    """Period translates needed so seam-crossing curves appear on both sides."""
    d = cs.grid.domain

    def krange(vals, lo, span, periodic):
        if not periodic:
            return [0]
        kmin = int(np.floor((vals.min() - lo) / span))
        kmax = int(np.floor((vals.max() - lo) / span))
        return list(range(kmin, kmax + 1))

    shifts = []
    for kx in krange(u[:, 0], d.x_min, d.width, d.periodic_x):
        for ky in krange(u[:, 1], d.y_min, d.height, d.periodic_y):
            shifts.append(np.array([-kx * d.width, -ky * d.height]))
    return shifts
