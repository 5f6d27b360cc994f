"""Sparse transition matrices between box grids via test-point counting.

``build_ulam`` estimates conditional box-to-box transition probabilities of a
flow map by pushing a uniform intra-box grid of Q = q_per_axis**2 test points
through the map and counting arrivals.  The resulting row-stochastic matrix P
acts on densities; its transpose acts on vectors of function values and is
what the operator-assembly code consumes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite

from .dynamics import FlowMap
from .errors import DimensionError, UlamError
from .grid import Grid, ScalarField, intra_box_offsets


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic box transition matrix with its provenance."""

    matrix: sp.csr_matrix  # shape (n_source, n_image)
    source_grid: Grid
    image_grid: Grid
    q_per_axis: int
    fingerprint: str

    @property
    def ptilde(self) -> sp.csr_matrix:
        """Transpose acting on function-value vectors (image <- source)."""
        return self.matrix.T.tocsr()

    def row_sum_defect(self) -> float:
        return float(np.abs(self.matrix.sum(axis=1).A1 - 1.0).max())


def build_ulam(
    grid: Grid,
    image_grid: Grid,
    flow: FlowMap,
    q_per_axis: int,
    chunk_boxes: int | None = None,
) -> TransitionMatrix:
    """Assemble the transition matrix of ``flow`` between two grids.

    Counts are accumulated as integers per source box and divided by Q once at
    the end, so rows are stochastic to rounding.  Work proceeds in box-index
    order over fixed-size chunks; the result is independent of chunking.
    """
    if q_per_axis < 1:
        raise ValueError("q_per_axis must be >= 1")
    offsets = intra_box_offsets(grid, q_per_axis)
    q2 = q_per_axis * q_per_axis
    chunk = chunk_boxes or max(1, 2_000_000 // q2)
    n_img = image_grid.n

    rows_parts, cols_parts, cnt_parts = [], [], []
    for start in range(0, grid.n, chunk):
        idx = np.arange(start, min(start + chunk, grid.n))
        low = grid.box_low_corners(idx)
        pts = (low[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
        img = flow.map_many(pts)
        ok = image_grid.domain.contains(img, tol=1e-9)
        if not np.all(ok):
            k = int(np.argmax(~ok))
            bx, by = grid.box_coords(idx[k // q2])
            raise UlamError(
                f"test point {tuple(pts[k])} of source box ({int(bx)}, {int(by)}) "
                f"mapped to {tuple(img[k])}, outside the image domain"
            )
        col = image_grid.flat_box_of_many(img, clamp_tol=1e-9)
        row = np.repeat(idx, q2)
        key = row * np.int64(n_img) + col
        ukey, cnt = np.unique(key, return_counts=True)
        rows_parts.append(ukey // n_img)
        cols_parts.append(ukey % n_img)
        cnt_parts.append(cnt)

    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    counts = np.concatenate(cnt_parts).astype(np.float64)
    mat = sp.coo_matrix((counts, (rows, cols)), shape=(grid.n, n_img)).tocsr()
    mat.data /= q2
    return TransitionMatrix(
        matrix=mat,
        source_grid=grid,
        image_grid=image_grid,
        q_per_axis=q_per_axis,
        fingerprint=flow.fingerprint,
    )


def pushforward(tm: TransitionMatrix, f: ScalarField) -> ScalarField:
    """Push box-center function values forward through the dynamics."""
    if f.grid != tm.source_grid:
        raise DimensionError("field lives on a different grid than the transition matrix")
    return ScalarField(tm.image_grid, tm.ptilde @ f.values)


def _grid_meta(grid: Grid) -> dict:
    d = grid.domain
    return {
        "x_min": d.x_min,
        "x_max": d.x_max,
        "y_min": d.y_min,
        "y_max": d.y_max,
        "periodic_x": d.periodic_x,
        "periodic_y": d.periodic_y,
        "nx": grid.nx,
        "ny": grid.ny,
    }


def save_transition(tm: TransitionMatrix, path) -> list[Path]:
    """Write Matrix Market coordinate data plus a JSON metadata sidecar."""
    path = Path(path)
    mtx = path.with_suffix(".mtx")
    mmwrite(str(mtx), tm.matrix)
    meta = path.with_suffix(".meta.json")
    meta.write_text(
        json.dumps(
            {
                "kind": "transition_matrix",
                "q_per_axis": tm.q_per_axis,
                "dynamics": tm.fingerprint,
                "source_grid": _grid_meta(tm.source_grid),
                "image_grid": _grid_meta(tm.image_grid),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return [mtx, meta]


def load_transition(path) -> TransitionMatrix:
    from .grid import Domain  # local import to keep module top lean

    path = Path(path)
    meta = json.loads(path.with_suffix(".meta.json").read_text(encoding="utf-8"))

    def mk(g):
        return Grid(
            Domain(g["x_min"], g["x_max"], g["y_min"], g["y_max"],
                   g["periodic_x"], g["periodic_y"]),
            g["nx"], g["ny"],
        )

    mat = sp.csr_matrix(mmread(str(path.with_suffix(".mtx"))))
    return TransitionMatrix(
        matrix=mat,
        source_grid=mk(meta["source_grid"]),
        image_grid=mk(meta["image_grid"]),
        q_per_axis=meta["q_per_axis"],
        fingerprint=meta["dynamics"],
    )
