"""Level-set extraction and dynamic boundary-to-volume ratio optimization.

The pipeline end: take an eigenvector field, scan its level sets, measure the
separating curve before and after the dynamics, and report the level whose
combined curve length per enclosed volume is smallest.  Also provides the
functional (gradient-based) bound and the spectral bound used to sandwich
that ratio.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Union

import numpy as np

from .dynamics import FlowMap
from .errors import DegenerateFieldError, DimensionError, TransportError
from .grid import Grid, ScalarField, weighted_lower_median
from .transfer import TransitionMatrix, pushforward


@dataclass(frozen=True)
class Polyline:
    """Ordered vertices in wrapped domain coordinates plus per-vertex wrap
    counters; vertex k unwraps to ``vertices[k] + wraps[k] * period``."""

    vertices: np.ndarray  # (m, 2) float
    wraps: np.ndarray  # (m, 2) int

    def __len__(self):
        return self.vertices.shape[0]


@dataclass(frozen=True)
class ContourSet:
    level: float
    grid: Grid
    curves: list[Polyline] = dc_field(default_factory=list)

    @property
    def n_vertices(self) -> int:
        return sum(len(c) for c in self.curves)

    def unwrapped(self) -> list[np.ndarray]:
        lx = self.grid.domain.width
        ly = self.grid.domain.height
        out = []
        for c in self.curves:
            u = c.vertices.copy()
            u[:, 0] += c.wraps[:, 0] * lx
            u[:, 1] += c.wraps[:, 1] * ly
            out.append(u)
        return out

    def to_csv(self) -> str:
        lines = ["curve_id,vertex_id,x,y,wrap_x,wrap_y"]
        for ci, c in enumerate(self.curves):
            for vi in range(len(c)):
                x, y = c.vertices[vi]
                wx, wy = c.wraps[vi]
                lines.append(f"{ci},{vi},{float(x)!r},{float(y)!r},{int(wx)},{int(wy)}")
        return "\n".join(lines) + "\n"


def _polyline_from_unwrapped(u: np.ndarray, grid: Grid) -> Polyline:
    d = grid.domain
    wraps = np.zeros(u.shape, dtype=np.int64)
    verts = u.copy()
    if d.periodic_x:
        wraps[:, 0] = np.floor((u[:, 0] - d.x_min) / d.width).astype(np.int64)
        verts[:, 0] = u[:, 0] - wraps[:, 0] * d.width
    if d.periodic_y:
        wraps[:, 1] = np.floor((u[:, 1] - d.y_min) / d.height).astype(np.int64)
        verts[:, 1] = u[:, 1] - wraps[:, 1] * d.height
    return Polyline(verts, wraps)


# ---------------------------------------------------------------------------
# marching squares on the box-center lattice
# ---------------------------------------------------------------------------

# segments per case, as pairs of local edge names; case bit k set when corner
# k exceeds the level (corners counterclockwise from lower-left)
_CASE_SEGMENTS = {
    1: [("L", "B")],
    2: [("B", "R")],
    3: [("L", "R")],
    4: [("R", "T")],
    6: [("B", "T")],
    7: [("L", "T")],
    8: [("L", "T")],
    9: [("B", "T")],
    11: [("R", "T")],
    12: [("L", "R")],
    13: [("B", "R")],
    14: [("L", "B")],
}


def marching_squares(f: ScalarField, level: float) -> ContourSet:
    """Linear-interpolation level curves of a box-center field.

    Periodic axes are stitched through ghost rows/columns, so curves close
    around the torus/cylinder seam.  The ambiguous saddle cases are resolved
    by the sign of the cell-center average.  Output ordering is deterministic:
    open chains first (sorted by starting edge), then loops in discovery
    order.  A level outside the field range simply yields an empty set.
    """
    grid = f.grid
    per_x = grid.domain.periodic_x
    per_y = grid.domain.periodic_y
    a = f.as_matrix()
    if per_x:
        a = np.concatenate([a, a[:, :1]], axis=1)
    if per_y:
        a = np.concatenate([a, a[:1, :]], axis=0)
    if a.shape[0] < 2 or a.shape[1] < 2:
        return ContourSet(level, grid, [])
    v00 = a[:-1, :-1]
    v10 = a[:-1, 1:]
    v01 = a[1:, :-1]
    v11 = a[1:, 1:]
    case = (
        (v00 > level).astype(np.int8)
        + 2 * (v10 > level).astype(np.int8)
        + 4 * (v11 > level).astype(np.int8)
        + 8 * (v01 > level).astype(np.int8)
    )
    active = np.argwhere((case != 0) & (case != 15))
    if active.size == 0:
        return ContourSet(level, grid, [])

    nx, ny = grid.nx, grid.ny
    crossings: dict[tuple, tuple[float, float]] = {}
    segments: list[tuple[tuple, tuple]] = []

    def edge(name, i, j):
        """Canonical key and crossing position (wrapped lattice coords)."""
        if name == "B":
            va, vb = v00[j, i], v10[j, i]
            t = (level - va) / (vb - va)
            key = ("x", i, j)
            pos = (i + t, float(j))
        elif name == "T":
            va, vb = v01[j, i], v11[j, i]
            t = (level - va) / (vb - va)
            key = ("x", i, (j + 1) % ny if per_y else j + 1)
            pos = (i + t, float(key[2]))
        elif name == "L":
            va, vb = v00[j, i], v01[j, i]
            t = (level - va) / (vb - va)
            key = ("y", i, j)
            pos = (float(i), j + t)
        else:  # R
            va, vb = v10[j, i], v11[j, i]
            t = (level - va) / (vb - va)
            key = ("y", (i + 1) % nx if per_x else i + 1, j)
            pos = (float(key[1]), j + t)
        crossings[key] = pos
        return key

    for j, i in active:
        c = int(case[j, i])
        if c in (5, 10):
            center_above = (v00[j, i] + v10[j, i] + v11[j, i] + v01[j, i]) / 4.0 > level
            if c == 5:  # lower-left and upper-right above
                pairs = [("B", "R"), ("L", "T")] if center_above else [("L", "B"), ("R", "T")]
            else:  # lower-right and upper-left above
                pairs = [("L", "B"), ("R", "T")] if center_above else [("B", "R"), ("L", "T")]
        else:
            pairs = _CASE_SEGMENTS[c]
        for ea, eb in pairs:
            segments.append((edge(ea, i, j), edge(eb, i, j)))

    adj: dict[tuple, list[tuple[int, tuple]]] = {}
    for s, (ka, kb) in enumerate(segments):
        adj.setdefault(ka, []).append((s, kb))
        adj.setdefault(kb, []).append((s, ka))

    used = [False] * len(segments)

    def walk(start):
        keys = [start]
        cur = start
        while True:
            nxt = None
            for s, other in adj[cur]:
                if not used[s]:
                    nxt = (s, other)
                    break
            if nxt is None:
                return keys
            used[nxt[0]] = True
            keys.append(nxt[1])
            cur = nxt[1]

    chains = []
    for key in sorted(k for k, lst in adj.items() if len(lst) == 1):
        if any(not used[s] for s, _ in adj[key]):
            chains.append(walk(key))
    for s, (ka, _) in enumerate(segments):
        if not used[s]:
            chains.append(walk(ka))

    curves = []
    for keys in chains:
        pts = np.array([crossings[k] for k in keys], dtype=float)
        # unwrap along the chain (consecutive crossings share a cell)
        for ax, (per, nb) in enumerate(((per_x, nx), (per_y, ny))):
            if per:
                d = np.diff(pts[:, ax])
                k = np.round(d / nb)
                pts[1:, ax] -= np.cumsum(k) * nb
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
        pts = pts[keep]
        if len(pts) < 2:
            continue
        u = np.empty_like(pts)
        u[:, 0] = grid.domain.x_min + (pts[:, 0] + 0.5) * grid.dx
        u[:, 1] = grid.domain.y_min + (pts[:, 1] + 0.5) * grid.dy
        curves.append(_polyline_from_unwrapped(u, grid))
    return ContourSet(level, grid, curves)


def curve_length(c: ContourSet) -> float:
    """Total polygonal length with periodic unwrapping applied per vertex."""
    total = 0.0
    for u in c.unwrapped():
        total += float(np.sum(np.hypot(np.diff(u[:, 0]), np.diff(u[:, 1]))))
    return total


def transport_curve(
    c: ContourSet,
    flow: FlowMap,
    threshold: float | None = None,
    max_passes: int = 30,
    max_vertices: int = 2_000_000,
) -> ContourSet:
    """Map a curve vertex-wise through the dynamics.

    Midpoints of the original segments are inserted (recursively, in the
    source frame) until adjacent image vertices are within one box diagonal,
    which bounds how much the polygonal chord underestimates the image arc
    length.
    """
    img_domain = flow.image
    img_grid = Grid(img_domain, c.grid.nx, c.grid.ny)
    thr = threshold if threshold is not None else img_grid.box_diagonal
    src_domain = flow.source

    def map_src(u):
        w = src_domain.wrap(u, clamp_tol=1e-12)
        q = flow.map_many(w)
        ok = img_domain.contains(q, tol=1e-9)
        if not np.all(ok):
            k = int(np.argmax(~ok))
            raise TransportError(
                f"transported vertex {tuple(q[k])} (source {tuple(u[k])}) "
                f"left the non-periodic image domain"
            )
        return img_domain.wrap(q, clamp_tol=1e-9)

    curves = []
    for u in c.unwrapped():
        src = u
        img = map_src(src)
        for _ in range(max_passes):
            unw = _greedy_unwrap(img, img_domain)
            gaps = np.hypot(np.diff(unw[:, 0]), np.diff(unw[:, 1]))
            bad = np.nonzero(gaps > thr)[0]
            if bad.size == 0:
                break
            if len(src) + bad.size > max_vertices:
                raise TransportError("curve refinement did not converge")
            mid = 0.5 * (src[bad] + src[bad + 1])
            mid_img = map_src(mid)
            # splice the midpoints after their segment start vertices
            order = np.empty(len(src) + bad.size, dtype=np.int64)
            take = np.ones(len(src) + bad.size, dtype=bool)
            insert_at = bad + 1 + np.arange(bad.size)
            take[insert_at] = False
            order[take] = np.arange(len(src))
            src_new = np.empty((len(src) + bad.size, 2))
            img_new = np.empty_like(src_new)
            src_new[take] = src
            src_new[~take] = mid
            img_new[take] = img
            img_new[~take] = mid_img
            src, img = src_new, img_new
        unw = _greedy_unwrap(img, img_domain)
        curves.append(_polyline_from_unwrapped(unw, img_grid))
    return ContourSet(c.level, img_grid, curves)


def _greedy_unwrap(w: np.ndarray, domain) -> np.ndarray:
    """Unwrap a wrapped vertex chain by minimal image between neighbours."""
    u = w.copy()
    for ax, (per, span) in enumerate(
        ((domain.periodic_x, domain.width), (domain.periodic_y, domain.height))
    ):
        if per and len(u) > 1:
            d = np.diff(u[:, ax])
            k = np.round(d / span)
            u[1:, ax] -= np.cumsum(k) * span
    return u


def pushforward_contour(
    tm: TransitionMatrix, f: ScalarField, level: float
) -> ContourSet:
    """Level curve of the pushed-forward field at the same level."""
    return marching_squares(pushforward(tm, f), level)


def volumes(f: ScalarField, level: float) -> tuple[float, float]:
    """Box-counting volumes of the super- and sub-level sets."""
    vol1 = f.grid.box_area * float(np.count_nonzero(f.values > level))
    return vol1, f.grid.domain.area - vol1


@dataclass(frozen=True)
class CoherentSetResult:
    level: float
    gamma: ContourSet
    gamma_image: ContourSet
    len_gamma: float
    len_image: float
    vol1: float
    vol2: float
    hD: float
    method_image: str

    def to_dict(self, sobolev_bound=None, cheeger_bound=None) -> dict:
        out = {
            "level": self.level,
            "hD": self.hD,
            "len_gamma": self.len_gamma,
            "len_image": self.len_image,
            "vol1": self.vol1,
            "vol2": self.vol2,
            "sobolev_bound": sobolev_bound,
            "cheeger_bound": cheeger_bound,
        }
        return out


def optimize_cheeger(
    f: ScalarField,
    dynamics: Union[FlowMap, TransitionMatrix],
    n_levels: int = 100,
    method_image: str = "map_points",
) -> CoherentSetResult:
    """Scan level sets of ``f`` and return the one minimizing the dynamic
    boundary-to-volume ratio (len(curve) + len(image curve)) / (2 min vol).

    Levels are uniformly spaced strictly inside (min f, max f); exact ties
    are broken toward the level nearest the field median, then the lower
    level.
    """
    if n_levels < 2:
        raise ValueError("n_levels must be >= 2")
    vmin = float(f.values.min())
    vmax = float(f.values.max())
    if not vmax > vmin:
        raise DegenerateFieldError("cannot scan level sets of a constant field")
    if method_image == "map_points":
        if not isinstance(dynamics, FlowMap):
            raise DimensionError("map_points needs a FlowMap")
    elif method_image == "contour_of_pushforward":
        if not isinstance(dynamics, TransitionMatrix):
            raise DimensionError("contour_of_pushforward needs a TransitionMatrix")
    else:
        raise ValueError(f"unknown image-curve method {method_image!r}")

    levels = np.linspace(vmin, vmax, n_levels + 2)[1:-1]
    median = weighted_lower_median(f.values)
    best = None
    best_key = None
    for level in levels:
        gamma = marching_squares(f, float(level))
        if not gamma.curves:
            continue
        if method_image == "map_points":
            gimg = transport_curve(gamma, dynamics)
        else:
            gimg = pushforward_contour(dynamics, f, float(level))
        lg = curve_length(gamma)
        li = curve_length(gimg)
        v1, v2 = volumes(f, float(level))
        m = min(v1, v2)
        if m <= 0.0:
            continue
        hd = (lg + li) / (2.0 * m)
        key = (hd, abs(float(level) - median), float(level))
        if best_key is None or key < best_key:
            best_key = key
            best = CoherentSetResult(
                level=float(level),
                gamma=gamma,
                gamma_image=gimg,
                len_gamma=lg,
                len_image=li,
                vol1=v1,
                vol2=v2,
                hD=hd,
                method_image=method_image,
            )
    if best is None:
        raise DegenerateFieldError("no level produced a non-empty separating curve")
    return best


# ---------------------------------------------------------------------------
# functional and spectral bounds
# ---------------------------------------------------------------------------


def central_gradient(f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with the stencil's boundary closures.

    Periodic axes wrap; non-periodic boundaries use the reflected ghost node,
    which makes the normal derivative vanish there.
    """
    g = f.grid
    a = f.as_matrix()
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    if g.domain.periodic_x:
        gx = (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2.0 * g.dx)
    elif g.nx >= 3:
        gx[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / (2.0 * g.dx)
    if g.domain.periodic_y:
        gy = (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * g.dy)
    elif g.ny >= 3:
        gy[1:-1, :] = (a[2:, :] - a[:-2, :]) / (2.0 * g.dy)
    return gx, gy


def sobolev_ratio(f: ScalarField, tm: TransitionMatrix) -> float:
    """Gradient-mass functional bound on the dynamic boundary ratio.

    (|grad f|_1 + |grad(pushforward f)|_1) / (2 min_a |f - a|_1), with the
    minimizing shift taken as the area-weighted median of f.
    """
    if float(f.values.max()) == float(f.values.min()):
        raise DegenerateFieldError("sobolev ratio of a constant field")
    gx, gy = central_gradient(f)
    num = f.grid.box_area * float(np.sum(np.hypot(gx, gy)))
    fwd = pushforward(tm, f)
    gx2, gy2 = central_gradient(fwd)
    num += fwd.grid.box_area * float(np.sum(np.hypot(gx2, gy2)))
    alpha = weighted_lower_median(f.values)
    den = 2.0 * f.grid.box_area * float(np.sum(np.abs(f.values - alpha)))
    return num / den


def cheeger_upper_bound(lambda2: float) -> float:
    """Spectral upper bound 2 sqrt(-lambda2) on the dynamic boundary ratio."""
    if lambda2 > 1e-9:
        raise ValueError(f"second eigenvalue must be nonpositive, got {lambda2}")
    return 2.0 * float(np.sqrt(max(-lambda2, 0.0)))
