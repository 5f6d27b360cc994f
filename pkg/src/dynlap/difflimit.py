"""Compactly supported smoothing operators and the small-radius limit check.

The smoothing kernels are isotropic densities on a disk of radius eps with
covariance c * I.  Discretized on a box grid they become convolution stencils
whose zeroth and second moments are corrected to match the continuum exactly;
without that correction the quadrature error of the indicator profile would
mask the eps^2-scale signal the limit check measures.

``verify_limit`` composes smoothing, transfer, smoothing (and the adjoint
chain), subtracts the identity, rescales by eps^2 and compares against
c * (static + transferred) stencils, reporting the decay of the residual as
eps shrinks.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.signal as sig

from .errors import ConfigurationError, DimensionError, KernelResolutionError
from .grid import Grid, ScalarField
from .operators import assemble_laplacian
from .transfer import TransitionMatrix

_GAUSS_N = 64


def _radial_profile(profile: str):
    """Normalized radial density q(r) on the unit disk."""
    if profile == "uniform_ball":
        return lambda r: np.where(r <= 1.0, 1.0 / math.pi, 0.0)
    if profile == "truncated_quartic":
        # (1 - r^2)^2 normalized: integral over the disk is pi/3
        return lambda r: np.where(r <= 1.0, (3.0 / math.pi) * (1.0 - r**2) ** 2, 0.0)
    raise ConfigurationError(f"unknown kernel profile {profile!r}")


def _covariance_constant(profile: str) -> float:
    """c with covariance = c*I, via Gauss quadrature of the radial density."""
    q = _radial_profile(profile)
    x, w = np.polynomial.legendre.leggauss(_GAUSS_N)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w
    # int y_x^2 q dA = pi * int r^3 q(r) dr
    return float(math.pi * np.sum(wr * r**3 * q(r)))


@dataclass(frozen=True)
class SmoothingKernel:
    """Isotropic compactly supported smoothing profile at radius scale eps."""

    profile: str
    eps: float
    c: float

    @classmethod
    def make(cls, profile: str, eps: float) -> "SmoothingKernel":
        if eps <= 0:
            raise ConfigurationError("eps must be positive")
        c = 0.25 if profile == "uniform_ball" else _covariance_constant(profile)
        _radial_profile(profile)  # validates the name
        return cls(profile=profile, eps=float(eps), c=c)


def make_kernel(profile: str, eps: float) -> SmoothingKernel:
    return SmoothingKernel.make(profile, eps)


# ---------------------------------------------------------------------------
# exact disk/box overlap for the uniform profile
# ---------------------------------------------------------------------------


def _disk_strip_primitive(t: float, r: float) -> float:
    """Antiderivative of sqrt(r^2 - t^2) on [-r, r]."""
    t = min(max(t, -r), r)
    return 0.5 * (t * math.sqrt(max(r * r - t * t, 0.0)) + r * r * math.asin(t / r))


def disk_box_overlap(r: float, x0: float, x1: float, y0: float, y1: float) -> float:
    """Exact area of {x^2 + y^2 <= r^2} intersected with [x0,x1] x [y0,y1]."""
    a = max(x0, -r)
    b = min(x1, r)
    if b <= a:
        return 0.0
    cuts = {a, b}
    for yy in (y0, y1):
        if abs(yy) < r:
            tc = math.sqrt(r * r - yy * yy)
            for t in (-tc, tc):
                if a < t < b:
                    cuts.add(t)
    ts = sorted(cuts)
    area = 0.0
    for lo, hi in zip(ts, ts[1:]):
        mid = 0.5 * (lo + hi)
        s = math.sqrt(max(r * r - mid * mid, 0.0))
        upper_is_chord = y1 < s
        lower_is_chord = y0 > -s
        if min(y1, s) <= max(y0, -s):
            continue
        up = y1 * (hi - lo) if upper_is_chord else (
            _disk_strip_primitive(hi, r) - _disk_strip_primitive(lo, r)
        )
        low = y0 * (hi - lo) if lower_is_chord else -(
            _disk_strip_primitive(hi, r) - _disk_strip_primitive(lo, r)
        )
        area += up - low
    return area


@lru_cache(maxsize=64)
def _discrete_weights(profile: str, eps: float, dx: float, dy: float, c: float):
    """Convolution stencil (2Ky+1, 2Kx+1) with exact total mass and covariance.

    Raw weights come from exact disk/box overlap (uniform profile) or per-box
    Gauss quadrature (smooth profiles); a least-norm two-parameter correction
    then pins the zeroth moment to 1 and the radial second moment to
    2*c*eps^2, which symmetric stencils split evenly between the axes.
    """
    kx = int(math.floor(eps / dx + 0.5)) + 1
    ky = int(math.floor(eps / dy + 0.5)) + 1
    ox = (np.arange(-kx, kx + 1)) * dx
    oy = (np.arange(-ky, ky + 1)) * dy
    w = np.zeros((oy.size, ox.size))
    if profile == "uniform_ball":
        height = 1.0 / (math.pi * eps * eps)
        for jy, cy in enumerate(oy):
            for jx, cx in enumerate(ox):
                near_x = max(abs(cx) - 0.5 * dx, 0.0)
                near_y = max(abs(cy) - 0.5 * dy, 0.0)
                if near_x * near_x + near_y * near_y > eps * eps:
                    continue
                w[jy, jx] = height * disk_box_overlap(
                    eps, cx - 0.5 * dx, cx + 0.5 * dx, cy - 0.5 * dy, cy + 0.5 * dy
                )
    else:
        q = _radial_profile(profile)
        gx, gw = np.polynomial.legendre.leggauss(8)
        for jy, cy in enumerate(oy):
            for jx, cx in enumerate(ox):
                xs = cx + 0.5 * dx * gx
                ys = cy + 0.5 * dy * gx
                xg, yg = np.meshgrid(xs, ys)
                rg = np.hypot(xg, yg) / eps
                vals = q(rg) / (eps * eps)
                w[jy, jx] = 0.25 * dx * dy * float(gw @ vals @ gw)

    # moment correction on the support cells
    xg, yg = np.meshgrid(ox, oy)
    rho = xg**2 + yg**2
    mask = w > 0
    m = int(mask.sum())
    b = np.stack([np.ones(m), rho[mask]])
    target = np.array([1.0 - w.sum(), 2.0 * c * eps * eps - float((w * rho).sum())])
    delta = b.T @ np.linalg.solve(b @ b.T, target)
    w2 = w.copy()
    w2[mask] += delta
    w2.setflags(write=False)
    return w2


def kernel_weights(kernel: SmoothingKernel, grid: Grid) -> np.ndarray:
    if kernel.eps < 2.0 * max(grid.dx, grid.dy):
        raise KernelResolutionError(
            f"eps={kernel.eps} under-resolved: needs at least two box widths "
            f"(boxes are {grid.dx:.4g} x {grid.dy:.4g})"
        )
    return _discrete_weights(kernel.profile, kernel.eps, grid.dx, grid.dy, kernel.c)


def apply_smoothing(kernel: SmoothingKernel, f: ScalarField) -> ScalarField:
    """Convolve box-center values with the kernel quadrature weights.

    Periodic axes wrap, so the operation is mass-preserving and self-adjoint
    there.  On non-periodic axes values within eps of the boundary are
    renormalized truncations and carry no accuracy claim; the limit check
    therefore restricts itself to fully periodic domains.
    """
    g = f.grid
    w = kernel_weights(kernel, g)
    a = f.as_matrix()
    out = _convolve(a, w, g.domain.periodic_x, g.domain.periodic_y)
    if not (g.domain.periodic_x and g.domain.periodic_y):
        mass = _convolve(np.ones_like(a), w, g.domain.periodic_x, g.domain.periodic_y)
        out = out / mass
    return ScalarField(g, out.ravel())


def _convolve(a: np.ndarray, w: np.ndarray, per_x: bool, per_y: bool) -> np.ndarray:
    """Direct 2D convolution with wrap padding on periodic axes and zero
    padding (later renormalized) on non-periodic ones."""
    py = (w.shape[0] - 1) // 2
    px = (w.shape[1] - 1) // 2
    pad = np.pad(a, ((py, py), (0, 0)), mode="wrap" if per_y else "constant")
    pad = np.pad(pad, ((0, 0), (px, px)), mode="wrap" if per_x else "constant")
    return sig.convolve2d(pad, w, mode="valid")


def smoothing_matrix(kernel: SmoothingKernel, grid: Grid) -> np.ndarray:
    """Dense matrix of the smoothing operator (small grids only)."""
    n = grid.n
    if n > 20000:
        raise DimensionError("dense smoothing matrix requested for a large grid")
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(apply_smoothing(kernel, ScalarField(grid, e)).values)
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# zero-diffusion limit verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitEntry:
    eps: float
    residual: float
    ratio_vs_previous: float | None
    order_vs_previous: float | None


@dataclass(frozen=True)
class LimitReport:
    entries: list[LimitEntry]
    mean_order: float
    monotone: bool
    order_threshold: float

    @property
    def passes(self) -> bool:
        return self.monotone and self.mean_order >= self.order_threshold

    def to_json(self) -> str:
        return json.dumps(
            {
                "entries": [
                    {
                        "eps": e.eps,
                        "residual": e.residual,
                        "ratio": e.ratio_vs_previous,
                        "order": e.order_vs_previous,
                    }
                    for e in self.entries
                ],
                "mean_order": self.mean_order,
                "monotone": self.monotone,
                "order_threshold": self.order_threshold,
                "passes": self.passes,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


def verify_limit(
    grid: Grid,
    tm: TransitionMatrix,
    kernel: SmoothingKernel,
    f: ScalarField,
    eps_list,
    c_override: float | None = None,
    order_threshold: float = 1.5,
) -> LimitReport:
    """Residual decay of the smoothed push-pull chain toward its stencil limit.

    For each eps, builds L = D_eps P~ D_eps, forms (L^T L - I) f / eps^2 and
    subtracts c * (Lap + P~^T Lap P~) f; the max-norm over boxes is the
    residual r(eps).  Adjoints are plain transposes (uniform box areas), valid
    on the fully periodic domains this check requires.
    """
    if not (grid.domain.periodic_x and grid.domain.periodic_y):
        raise ConfigurationError("limit verification needs a fully periodic domain")
    if tm.source_grid != grid or tm.image_grid != grid:
        raise DimensionError("transition matrix must live on the verification grid")
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps_list must be strictly decreasing")

    c = kernel.c if c_override is None else float(c_override)
    lap = assemble_laplacian(grid).matrix
    pt = tm.ptilde
    ptT = pt.T.tocsr()
    v = f.values
    target = c * (lap @ v + ptT @ (lap @ (pt @ v)))

    entries: list[LimitEntry] = []
    prev_r = None
    prev_eps = None
    monotone = True
    orders = []
    for eps in eps_list:
        ker = SmoothingKernel(kernel.profile, eps, kernel.c)
        smooth = lambda vec: apply_smoothing(ker, ScalarField(grid, vec)).values
        lf = smooth(pt @ smooth(v))
        ltlf = smooth(ptT @ smooth(lf))
        resid = (ltlf - v) / (eps * eps) - target
        r = float(np.abs(resid).max())
        ratio = order = None
        if prev_r is not None:
            ratio = prev_r / r if r > 0 else math.inf
            order = math.log(ratio) / math.log(prev_eps / eps)
            orders.append(order)
            if r >= prev_r:
                monotone = False
        entries.append(LimitEntry(eps, r, ratio, order))
        prev_r, prev_eps = r, eps
    mean_order = float(np.mean(orders)) if orders else 0.0
    return LimitReport(
        entries=entries,
        mean_order=mean_order,
        monotone=monotone,
        order_threshold=order_threshold,
    )
