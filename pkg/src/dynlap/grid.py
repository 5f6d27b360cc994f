"""Flat 2D domains, uniform box grids, and box-centered scalar fields.

A :class:`Domain` is an axis-aligned rectangle with optional periodic
identification per axis (both periodic: torus, exactly one: cylinder, none:
plain rectangle).  A :class:`Grid` partitions it into ``nx * ny`` congruent
boxes, half-open along each axis, addressed either by the integer pair
``(ix, iy)`` or by the flat index ``iy * nx + ix``.  A :class:`ScalarField`
holds one value per box, interpreted at the box center.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import OutOfDomainError


@dataclass(frozen=True)
class Domain:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    periodic_x: bool = False
    periodic_y: bool = False

    def __post_init__(self):
        if not (self.x_max > self.x_min):
            raise ValueError("x_max must exceed x_min")
        if not (self.y_max > self.y_min):
            raise ValueError("y_max must exceed y_min")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def kind(self) -> str:
        if self.periodic_x and self.periodic_y:
            return "torus"
        if self.periodic_x or self.periodic_y:
            return "cylinder"
        return "rectangle"

    def _axes(self):
        return (
            (self.x_min, self.width, self.periodic_x),
            (self.y_min, self.height, self.periodic_y),
        )

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the domain (periodic axes always pass)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(pts.shape[0], dtype=bool)
        for ax, (lo, span, per) in enumerate(self._axes()):
            if not per:
                v = pts[:, ax]
                ok &= (v >= lo - tol) & (v <= lo + span + tol)
        return ok

    def wrap(self, points, clamp_tol: float = 0.0) -> np.ndarray:
        """Map points onto the domain.

        Periodic axes wrap modulo the period.  On non-periodic axes the
        coordinate must already lie inside; excursions up to ``clamp_tol``
        are clamped to the edge, anything larger raises
        :class:`OutOfDomainError`.
        """
        arr = np.asarray(points, dtype=float)
        scalar = arr.ndim == 1
        pts = np.array(np.atleast_2d(arr), dtype=float)
        for ax, (lo, span, per) in enumerate(self._axes()):
            v = pts[:, ax]
            if per:
                r = np.mod(v - lo, span)
                r[r >= span] -= span  # np.mod can round up to the period
                pts[:, ax] = lo + r
            else:
                bad = (v < lo - clamp_tol) | (v > lo + span + clamp_tol)
                if np.any(bad):
                    k = int(np.argmax(bad))
                    raise OutOfDomainError(
                        f"point {tuple(pts[k])} outside non-periodic axis "
                        f"{'xy'[ax]} range [{lo}, {lo + span}]"
                    )
                pts[:, ax] = np.clip(v, lo, lo + span)
        return pts[0] if scalar else pts


@dataclass(frozen=True)
class Grid:
    """Uniform partition of a domain into ``nx * ny`` half-open boxes."""

    domain: Domain
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one box per axis")

    @property
    def dx(self) -> float:
        return self.domain.width / self.nx

    @property
    def dy(self) -> float:
        return self.domain.height / self.ny

    @property
    def box_area(self) -> float:
        return self.dx * self.dy

    @property
    def box_diagonal(self) -> float:
        return float(np.hypot(self.dx, self.dy))

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """(ny, nx) layout of matrix views of fields on this grid."""
        return (self.ny, self.nx)

    @cached_property
    def centers_x(self) -> np.ndarray:
        return self.domain.x_min + (np.arange(self.nx) + 0.5) * self.dx

    @cached_property
    def centers_y(self) -> np.ndarray:
        return self.domain.y_min + (np.arange(self.ny) + 0.5) * self.dy

    def centers(self) -> np.ndarray:
        """(n, 2) array of box centers in flat-index order."""
        xg, yg = np.meshgrid(self.centers_x, self.centers_y)
        return np.column_stack([xg.ravel(), yg.ravel()])

    def box_index(self, ix, iy):
        return np.asarray(iy) * self.nx + np.asarray(ix)

    def box_coords(self, idx):
        idx = np.asarray(idx)
        return idx % self.nx, idx // self.nx

    def box_low_corners(self, idx) -> np.ndarray:
        ix, iy = self.box_coords(np.asarray(idx))
        return np.column_stack(
            [self.domain.x_min + ix * self.dx, self.domain.y_min + iy * self.dy]
        )

    # Points a hair below a box edge are treated as lying on it and assigned
    # upward, so mathematical edge ties broken either way by float rounding
    # resolve consistently with the half-open convention.
    _TIE_NUDGE = 1e-9

    def box_of_many(self, points, clamp_tol: float = 0.0):
        """Vectorized box lookup; returns (ix, iy) int64 arrays."""
        pts = self.domain.wrap(points, clamp_tol=clamp_tol)
        pts = np.atleast_2d(pts)
        out = []
        for ax, (nb, w) in enumerate(((self.nx, self.dx), (self.ny, self.dy))):
            lo = (self.domain.x_min, self.domain.y_min)[ax]
            per = (self.domain.periodic_x, self.domain.periodic_y)[ax]
            k = np.floor((pts[:, ax] - lo) / w + self._TIE_NUDGE).astype(np.int64)
            if per:
                k %= nb
            else:
                np.clip(k, 0, nb - 1, out=k)
            out.append(k)
        return out[0], out[1]

    def flat_box_of_many(self, points, clamp_tol: float = 0.0) -> np.ndarray:
        ix, iy = self.box_of_many(points, clamp_tol=clamp_tol)
        return iy * self.nx + ix


def box_of(grid: Grid, point, clamp_tol: float = 0.0) -> tuple[int, int]:
    """Return the (ix, iy) pair of the box containing ``point``.

    Boxes are half-open ``[low, high)`` per axis, so a point exactly on an
    interior edge belongs to the box with the larger index along that axis.
    Periodic axes wrap first; a point beyond a non-periodic axis range raises
    :class:`OutOfDomainError`.
    """
    ix, iy = grid.box_of_many(np.asarray(point, dtype=float)[None, :], clamp_tol)
    return int(ix[0]), int(iy[0])


def intra_box_offsets(grid: Grid, q_per_axis: int) -> np.ndarray:
    """(q^2, 2) offsets of a uniform sample grid relative to a box low corner.

    Samples sit at half sub-cell offsets, strictly inside the box, ordered
    row-major (x fastest).
    """
    if q_per_axis < 1:
        raise ValueError("q_per_axis must be >= 1")
    ox = (np.arange(q_per_axis) + 0.5) / q_per_axis * grid.dx
    oy = (np.arange(q_per_axis) + 0.5) / q_per_axis * grid.dy
    gx, gy = np.meshgrid(ox, oy)
    return np.column_stack([gx.ravel(), gy.ravel()])


def intra_box_points(grid: Grid, box, q_per_axis: int) -> np.ndarray:
    """Uniform grid of ``q_per_axis**2`` test points strictly inside a box.

    ``box`` is either a flat index or an (ix, iy) pair.
    """
    if np.isscalar(box):
        idx = int(box)
    else:
        ix, iy = box
        idx = int(iy) * grid.nx + int(ix)
    low = grid.box_low_corners(np.array([idx]))[0]
    return low[None, :] + intra_box_offsets(grid, q_per_axis)


@dataclass(frozen=True)
class ScalarField:
    """One real value per grid box, interpreted at the box center."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            if v.shape == self.grid.shape:
                v = v.ravel()
            else:
                raise ValueError(
                    f"field has {v.size} values for a grid of {self.grid.n} boxes"
                )
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "ScalarField":
        """Sample ``fn(x, y)`` at all box centers."""
        c = grid.centers()
        return cls(grid, np.asarray(fn(c[:, 0], c[:, 1]), dtype=float))

    def as_matrix(self) -> np.ndarray:
        """(ny, nx) view, rows indexed by iy."""
        return self.values.reshape(self.grid.shape)

    def l2_norm(self) -> float:
        """Area-weighted L2 norm."""
        return float(np.sqrt(self.grid.box_area * np.sum(self.values**2)))

    def l1_norm(self) -> float:
        return float(self.grid.box_area * np.sum(np.abs(self.values)))


def weighted_lower_median(values: np.ndarray) -> float:
    """Lower median under uniform weights: smallest v with cum. weight >= 1/2."""
    v = np.sort(np.asarray(values, dtype=float))
    return float(v[(v.size - 1) // 2]) if v.size % 2 else float(v[v.size // 2 - 1])
