"""Leading eigenpairs of the discrete operators.

The spectra of interest sit at the right (algebraically largest) end of a
nonpositive, nearly symmetric spectrum.  The iterative path is ARPACK in
shift-invert mode with a small positive shift, which orders eigenvalues by
descending real part; a dense solver doubles as the oracle for moderate n.
Results are fully deterministic: fixed start vector, descending sort, unit
area-weighted norm, and sign fixed by making the largest-magnitude entry
positive.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ComplexSpectrumError, DegenerateFieldError, DimensionError, EigensolverError
from .grid import ScalarField
from .operators import DiscreteOperator

DENSE_DEFAULT_LIMIT = 1500
CLUSTER_TOL = 1e-6


@dataclass(frozen=True)
class Spectrum:
    """Leading eigenpairs, sorted by descending eigenvalue."""

    eigenvalues: np.ndarray
    fields: list[ScalarField]
    residuals: np.ndarray
    operator_norm: float
    clusters: list[list[int]]

    @property
    def k(self) -> int:
        return self.eigenvalues.size


def _cluster(eigs: np.ndarray) -> list[list[int]]:
    """Group near-degenerate eigenvalues (gap below CLUSTER_TOL * scale)."""
    groups: list[list[int]] = []
    for i, lam in enumerate(eigs):
        if groups and abs(lam - eigs[groups[-1][-1]]) < CLUSTER_TOL * max(1.0, abs(lam)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _finalize(op, vals, vecs, k, tol):
    order = np.argsort(-vals.real, kind="stable")[:k]
    vals = vals[order]
    vecs = vecs[:, order]
    bad = np.abs(vals.imag) > 1e-6 * np.maximum(1.0, np.abs(vals.real))
    if np.any(bad):
        raise ComplexSpectrumError(
            f"eigenvalues with non-negligible imaginary part: {vals[bad]}"
        )
    vals = vals.real.copy()
    vecs = vecs.real.copy()
    w = op.grid.box_area
    fields = []
    residuals = np.empty(k)
    norm_a = op.norm_inf()
    for j in range(k):
        v = vecs[:, j]
        nrm = np.sqrt(w * np.sum(v * v))
        if nrm == 0:
            raise EigensolverError("eigensolver returned a zero vector")
        v = v / nrm
        if v[int(np.argmax(np.abs(v)))] < 0:
            v = -v
        r = op.matrix @ v - vals[j] * v
        residuals[j] = np.sqrt(w * np.sum(r * r))
        fields.append(ScalarField(op.grid, v))
    if np.any(residuals > tol * max(norm_a, 1e-300)):
        worst = float(residuals.max())
        raise EigensolverError(
            f"residual {worst:.3e} exceeds tol*||A|| = {tol * norm_a:.3e}"
        )
    return Spectrum(
        eigenvalues=vals,
        fields=fields,
        residuals=residuals,
        operator_norm=norm_a,
        clusters=_cluster(vals),
    )


def _default_sigma(norm_a: float) -> float:
    # a small positive shift above the (nonpositive) spectrum: close enough
    # to the wanted right end for fast convergence, far enough from zero to
    # keep the factorization well conditioned
    return min(0.5, max(1e-8, 0.01 * norm_a))


def solve_leading(
    op: DiscreteOperator,
    k: int,
    tol: float = 1e-8,
    method: str = "auto",
    sigma: float | None = None,
    deflate_constant: bool = False,
    seed: int = 0,
) -> Spectrum:
    """k eigenpairs with largest real part, deterministic ordering and signs.

    ``tol`` bounds the accepted residual relative to the operator norm.  With
    ``deflate_constant`` the pair whose eigenvector is most aligned with the
    constant function is dropped (one extra pair is computed to compensate).
    """
    n = op.matrix.shape[0]
    if not 0 < k < n:
        raise DimensionError(f"need 0 < k < n, got k={k}, n={n}")
    rs = np.abs(np.asarray(op.matrix.sum(axis=1)).ravel())
    if rs.max() > 1e-6 * max(op.norm_inf(), 1e-300):
        warnings.warn("operator rows do not sum to zero; spectrum may be shifted")

    want = k + 1 if deflate_constant else k
    if method not in ("auto", "dense", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    use_dense = method == "dense" or (method == "auto" and n <= DENSE_DEFAULT_LIMIT)

    if use_dense:
        vals, vecs = sla.eig(op.matrix.toarray())
    else:
        sig = _default_sigma(op.norm_inf()) if sigma is None else sigma
        v0 = np.random.default_rng(seed).standard_normal(n)
        ncv = min(n - 1, max(4 * want + 1, 40))
        try:
            vals, vecs = spla.eigs(
                op.matrix.tocsc(), k=want, sigma=sig, which="LM", v0=v0, ncv=ncv, tol=0
            )
        except spla.ArpackNoConvergence as exc:
            raise EigensolverError(
                f"ARPACK did not converge: {exc} "
                f"(n={n}, k={want}, sigma={sig}, ncv={ncv})"
            ) from exc

    spec = _finalize(op, vals, vecs, want, tol)
    if not deflate_constant:
        return spec
    ones = np.ones(n) / np.sqrt(op.grid.box_area * n)
    overlap = [abs(op.grid.box_area * np.dot(f.values, ones)) for f in spec.fields]
    drop = int(np.argmax(overlap))
    keep = [i for i in range(spec.k) if i != drop][:k]
    vals = spec.eigenvalues[keep]
    return Spectrum(
        eigenvalues=vals,
        fields=[spec.fields[i] for i in keep],
        residuals=spec.residuals[keep],
        operator_norm=spec.operator_norm,
        clusters=_cluster(vals),
    )


def rayleigh_quotient(op: DiscreteOperator, f: ScalarField) -> float:
    """Area-weighted <f, A f> / <f, f>."""
    if f.grid != op.grid:
        raise DimensionError("field grid does not match operator grid")
    v = f.values
    denom = np.sum(v * v)
    if denom == 0.0:
        raise DegenerateFieldError("rayleigh quotient of the zero field")
    return float(np.sum(v * (op.matrix @ v)) / denom)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------


def eigenvalues_to_json(spec: Spectrum) -> str:
    import json

    return json.dumps(
        {
            "eigenvalues": [float(v) for v in spec.eigenvalues],
            "residuals": [float(r) for r in spec.residuals],
            "clusters": spec.clusters,
            "operator_norm": spec.operator_norm,
        },
        indent=2,
        sort_keys=True,
    ) + "\n"


def eigenvector_to_csv(field: ScalarField) -> str:
    """CSV rows ``i,j,x,y,value`` (box indices, box centers, field value)."""
    g = field.grid
    ix, iy = g.box_coords(np.arange(g.n))
    xs = g.centers_x[ix]
    ys = g.centers_y[iy]
    lines = ["i,j,x,y,value"]
    for a, b, x, y, v in zip(ix, iy, xs, ys, field.values):
        lines.append(f"{int(a)},{int(b)},{float(x)!r},{float(y)!r},{float(v)!r}")
    return "\n".join(lines) + "\n"
