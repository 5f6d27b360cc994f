"""Discrete Laplacians and their dynamics-weighted combinations.

The static operator is the five-point stencil on box centers with periodic
closure on periodic axes and reflected ghost nodes on non-periodic ones
(zero-Neumann by symmetric extension).  The dynamic operator averages the
static stencil with its conjugation by the transition-matrix transpose; the
multistep variant takes a weighted sum over several transition stages.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .errors import (
    ConfigurationError,
    DimensionError,
    GridTooCoarseError,
    UnsupportedIsometryError,
)
from .grid import Grid, ScalarField


@dataclass(frozen=True)
class DiscreteOperator:
    matrix: sp.csr_matrix
    grid: Grid
    kind: str  # static_laplacian | dynamic_laplacian | multistep_laplacian

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def norm_inf(self) -> float:
        return float(np.abs(self.matrix).sum(axis=1).max())

    def apply(self, f: ScalarField) -> ScalarField:
        if f.grid != self.grid:
            raise DimensionError("field grid does not match operator grid")
        return ScalarField(self.grid, self.matrix @ f.values)


def _lap1d(n: int, periodic: bool) -> sp.csr_matrix:
    """Second-difference matrix in one axis (unit spacing).

    Periodic axes wrap; non-periodic ends replace the fictitious node by its
    mirror image, giving rows like (-2, 2) that keep row sums exactly zero.
    """
    if not periodic and n < 3:
        raise GridTooCoarseError(
            f"non-periodic axis needs at least 3 boxes, got {n}"
        )
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    mat = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if periodic:
        mat[0, n - 1] += 1.0
        mat[n - 1, 0] += 1.0
    else:
        mat[0, 1] = 2.0
        mat[n - 1, n - 2] = 2.0
    return mat.tocsr()


def assemble_laplacian(grid: Grid) -> DiscreteOperator:
    """Five-point-stencil Laplacian on box centers.

    Anisotropic boxes use the split form d2/dx2 + d2/dy2 with the respective
    spacings; every row sums to zero exactly, and the matrix is symmetric on
    fully periodic grids.
    """
    lx = _lap1d(grid.nx, grid.domain.periodic_x) * (1.0 / grid.dx**2)
    ly = _lap1d(grid.ny, grid.domain.periodic_y) * (1.0 / grid.dy**2)
    mat = sp.kron(sp.identity(grid.ny, format="csr"), lx, format="csr") + sp.kron(
        ly, sp.identity(grid.nx, format="csr"), format="csr"
    )
    mat.sort_indices()
    return DiscreteOperator(matrix=mat.tocsr(), grid=grid, kind="static_laplacian")


def sparse_identity(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr")


def _sandwich(ptilde: sp.spmatrix, lap: sp.spmatrix) -> sp.csr_matrix:
    """ptilde^T @ lap @ ptilde with a fixed association order."""
    return (ptilde.T.tocsr() @ (lap.tocsr() @ ptilde.tocsr())).tocsr()


def assemble_multistep(
    laps: Sequence[DiscreteOperator],
    ptildes: Sequence[sp.spmatrix],
    weights: Sequence[float],
) -> DiscreteOperator:
    """Weighted sum of stencils conjugated by per-stage transition transposes.

    ``ptildes[0]`` must be the identity (the undistorted initial-time term)
    and the weights must sum to one: uniform weights over n stages give the
    n-step operator, quadrature weights over time samples approximate the
    time-averaged one.
    """
    if not (len(laps) == len(ptildes) == len(weights)):
        raise ConfigurationError("laps, ptildes and weights must have equal length")
    if abs(sum(weights) - 1.0) > 1e-12:
        raise ConfigurationError(f"weights must sum to 1, got {sum(weights)!r}")
    first = ptildes[0]
    n = laps[0].matrix.shape[0]
    if (first - sparse_identity(first.shape[0])).nnz != 0:
        raise ConfigurationError("ptildes[0] must be the identity matrix")
    acc = None
    for lap, pt, w in zip(laps, ptildes, weights):
        if pt.shape[1] != n or lap.matrix.shape[0] != pt.shape[0]:
            raise DimensionError("stage shapes do not conform")
        term = _sandwich(pt, lap.matrix) * w
        acc = term if acc is None else acc + term
    acc.sort_indices()
    return DiscreteOperator(matrix=acc, grid=laps[0].grid, kind="multistep_laplacian")


def assemble_dynamic_laplacian(
    lap_source: DiscreteOperator,
    lap_image: DiscreteOperator,
    ptilde: sp.spmatrix,
) -> DiscreteOperator:
    """Average of the source stencil and its image-side conjugation.

    Equals the two-stage multistep operator with uniform weights, and is
    computed through the same code path so the two agree bit-for-bit.
    """
    op = assemble_multistep(
        [lap_source, lap_image],
        [sparse_identity(lap_source.matrix.shape[0]), ptilde],
        [0.5, 0.5],
    )
    return DiscreteOperator(matrix=op.matrix, grid=lap_source.grid, kind="dynamic_laplacian")


def symmetrize(op: DiscreteOperator) -> DiscreteOperator:
    m = (op.matrix + op.matrix.T) * 0.5
    return DiscreteOperator(matrix=m.tocsr(), grid=op.grid, kind=op.kind)


def save_operator(op: DiscreteOperator, path, provenance: dict | None = None) -> list[Path]:
    """Matrix Market data plus a JSON sidecar recording kind and grid."""
    path = Path(path)
    mtx = path.with_suffix(".mtx")
    mmwrite(str(mtx), op.matrix)
    d = op.grid.domain
    sidecar = path.with_suffix(".meta.json")
    sidecar.write_text(
        json.dumps(
            {
                "kind": op.kind,
                "grid": {
                    "x_min": d.x_min, "x_max": d.x_max,
                    "y_min": d.y_min, "y_max": d.y_max,
                    "periodic_x": d.periodic_x, "periodic_y": d.periodic_y,
                    "nx": op.grid.nx, "ny": op.grid.ny,
                },
                "provenance": provenance or {},
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return [mtx, sidecar]


# ---------------------------------------------------------------------------
# frame-invariance check under grid-compatible translations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectivityReport:
    eigenvalues: np.ndarray
    eigenvalues_shifted: np.ndarray
    max_eigenvalue_discrepancy: float
    max_subspace_discrepancy: float
    clusters: list


def shift_field_values(grid: Grid, values: np.ndarray, shift_boxes: tuple[int, int]) -> np.ndarray:
    """Values of v composed with the inverse whole-box translation."""
    arr = values.reshape(grid.shape)
    return np.roll(arr, shift=(shift_boxes[1], shift_boxes[0]), axis=(0, 1)).ravel()


def objectivity_check(
    grid: Grid,
    flow,
    shift_boxes: tuple[int, int],
    q_per_axis: int,
    k: int = 4,
    shift_source_boxes: tuple[int, int] = (0, 0),
    solver_kwargs: dict | None = None,
) -> ObjectivityReport:
    """Compare spectra of the operator for T and for the frame-shifted
    dynamics S_img o T o S_src^{-1}, where the S are whole-box translations
    along periodic axes.

    Eigenvalues must agree and eigenvectors of the shifted operator must be
    the source-shifted eigenvectors of the original, up to sign and up to
    rotation inside degenerate clusters (compared through principal angles).
    """
    from .spectral import solve_leading
    from .transfer import build_ulam

    for s, per, nb in (
        (shift_boxes[0], grid.domain.periodic_x, grid.nx),
        (shift_boxes[1], grid.domain.periodic_y, grid.ny),
        (shift_source_boxes[0], grid.domain.periodic_x, grid.nx),
        (shift_source_boxes[1], grid.domain.periodic_y, grid.ny),
    ):
        if s != 0 and not per:
            raise UnsupportedIsometryError("translation requires a periodic axis")
        if int(s) != s:
            raise UnsupportedIsometryError("shift must be a whole number of boxes")

    sx = shift_boxes[0] * grid.dx
    sy = shift_boxes[1] * grid.dy
    ssx = shift_source_boxes[0] * grid.dx
    ssy = shift_source_boxes[1] * grid.dy

    from .dynamics import FlowMap

    def shifted_fn(p):
        q = np.array(p, copy=True)
        if ssx or ssy:
            q[:, 0] -= ssx
            q[:, 1] -= ssy
            q = grid.domain.wrap(q)
        q = flow.map_many(q)
        if sx or sy:
            q[:, 0] += sx
            q[:, 1] += sy
            q = grid.domain.wrap(q)
        return q

    shifted = FlowMap(grid.domain, grid.domain, flow.name + "_shifted", shifted_fn)

    lap = assemble_laplacian(grid)
    kw = solver_kwargs or {}
    tm = build_ulam(grid, grid, flow, q_per_axis)
    op = assemble_dynamic_laplacian(lap, lap, tm.ptilde)
    spec = solve_leading(op, k, **kw)

    tm2 = build_ulam(grid, grid, shifted, q_per_axis)
    op2 = assemble_dynamic_laplacian(lap, lap, tm2.ptilde)
    spec2 = solve_leading(op2, k, **kw)

    lam = spec.eigenvalues
    lam2 = spec2.eigenvalues
    dl = float(np.abs(lam - lam2).max())

    # predicted eigenvectors: source-shifted originals; compare cluster-wise
    predicted = np.column_stack(
        [shift_field_values(grid, f.values, shift_source_boxes) for f in spec.fields]
    )
    actual = np.column_stack([f.values for f in spec2.fields])
    worst = 0.0
    for cluster in spec.clusters:
        qa, _ = np.linalg.qr(predicted[:, cluster])
        qb, _ = np.linalg.qr(actual[:, cluster])
        # sin of the largest principal angle, stable near zero
        resid = qb - qa @ (qa.T @ qb)
        sv = np.linalg.svd(resid, compute_uv=False)
        worst = max(worst, float(sv.max()) if sv.size else 0.0)
    return ObjectivityReport(
        eigenvalues=lam,
        eigenvalues_shifted=lam2,
        max_eigenvalue_discrepancy=dl,
        max_subspace_discrepancy=worst,
        clusters=spec.clusters,
    )
