"""Hot numeric kernels: numba-compiled primary path, pure-numpy fallback.

The only runtime-dominant kernel is fixed-step RK4 integration of the
built-in time-dependent gyre field over millions of seed points.  The numba
version evaluates a branchless polynomial sin/cos pair so LLVM can vectorize
the per-point loop; the numpy version uses library trig on whole arrays.
Both follow the identical step schedule, so they agree to ~1e-12 per step.

Backend selection: environment variable ``DYNLAP_BACKEND`` in
``{"auto", "numba", "numpy"}`` (default ``auto`` = numba when importable),
or :func:`set_backend` at runtime.  ``benchmarks/bench_kernels.py`` compares
the two paths.
"""
from __future__ import annotations

import math
import os

import numpy as np

from .errors import ConfigurationError

_PI = math.pi

try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via DYNLAP_BACKEND=numpy
    numba = None
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


_BACKEND: str | None = None


def get_backend() -> str:
    """Resolve the active kernel backend ('numba' or 'numpy')."""
    global _BACKEND
    if _BACKEND is None:
        req = os.environ.get("DYNLAP_BACKEND", "auto").strip().lower()
        if req not in ("auto", "numba", "numpy"):
            raise ConfigurationError(f"DYNLAP_BACKEND must be auto|numba|numpy, got {req!r}")
        if req == "numba" and not HAS_NUMBA:
            raise ConfigurationError("DYNLAP_BACKEND=numba but numba is not importable")
        _BACKEND = "numpy" if req == "numpy" or not HAS_NUMBA else "numba"
    return _BACKEND


def set_backend(name: str | None) -> None:
    """Force a backend ('numba'/'numpy') or reset to env-based resolution (None)."""
    global _BACKEND
    if name is not None:
        if name not in ("numba", "numpy"):
            raise ConfigurationError(f"unknown backend {name!r}")
        if name == "numba" and not HAS_NUMBA:
            raise ConfigurationError("numba backend requested but numba is not importable")
    _BACKEND = name


def set_num_threads(n: int) -> None:
    if HAS_NUMBA and n >= 1:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def step_schedule(t0: float, t1: float, h: float) -> tuple[int, float]:
    """Number of RK4 steps and the (shortened) final step landing exactly on t1."""
    if h <= 0:
        raise ValueError("step size must be positive")
    if t1 <= t0:
        raise ValueError("integration window must have t1 > t0")
    span = t1 - t0
    nsteps = max(1, int(math.ceil(span / h - 1e-12)))
    h_last = t1 - (t0 + (nsteps - 1) * h)
    return nsteps, h_last


# ---------------------------------------------------------------------------
# Built-in transitory double-gyre field on the unit square.
#
#   psi(x, y, t) = (1-s) sin(2 pi x) sin(pi y) + s sin(pi x) sin(2 pi y)
#   s(t) = t^2 (3 - 2 t),  velocity = (-d psi/dy, +d psi/dx)
#
# With sx = sin(pi x) etc. and double-angle identities:
#   u = -2 pi sx (a cx cy + b (1 - 2 sy^2))
#   v = +2 pi sy (a (1 - 2 sx^2) + b cx cy),   a = 1-s, b = s
# ---------------------------------------------------------------------------


@njit(cache=True)
def blend_weight(t):
    """Cubic ramp s(t) = t^2 (3 - 2 t) blending the two gyre patterns."""
    return t * t * (3.0 - 2.0 * t)


def transitory_velocity_np(x, y, t):
    """Vectorized velocity of the built-in transitory field (numpy path)."""
    s = blend_weight(t)
    a = 1.0 - s
    b = s
    sx = np.sin(_PI * x)
    cx = np.cos(_PI * x)
    sy = np.sin(_PI * y)
    cy = np.cos(_PI * y)
    u = -2.0 * _PI * sx * (a * cx * cy + b * (1.0 - 2.0 * sy * sy))
    v = 2.0 * _PI * sy * (a * (1.0 - 2.0 * sx * sx) + b * cx * cy)
    return u, v


# degree-13/12 Taylor pair for sin/cos on |z| <= pi/4 (max abs error ~4e-13)
_S1, _S2, _S3 = -1.6666666666666666e-01, 8.3333333333333332e-03, -1.9841269841269841e-04
_S4, _S5, _S6 = 2.7557319223985893e-06, -2.5052108385441720e-08, 1.6059043836821613e-10
_C1, _C2, _C3 = -5.0e-01, 4.1666666666666664e-02, -1.3888888888888889e-03
_C4, _C5, _C6 = 2.4801587301587302e-05, -2.7557319223985888e-07, 2.0876756987868100e-09


@njit(cache=True, fastmath=True)
def _transitory_stage_nb(xs, ys, a, b, us, vs):  # pragma: no cover - compiled
    # branchless quadrant-reduced sincos(pi*u) so the loop vectorizes
    for i in range(xs.shape[0]):
        x = xs[i]
        y = ys[i]
        kx = np.rint(x * 2.0)
        ky = np.rint(y * 2.0)
        zx = _PI * (x - 0.5 * kx)
        zy = _PI * (y - 0.5 * ky)
        z2 = zx * zx
        sp = zx * (1.0 + z2 * (_S1 + z2 * (_S2 + z2 * (_S3 + z2 * (_S4 + z2 * (_S5 + z2 * _S6))))))
        cp = 1.0 + z2 * (_C1 + z2 * (_C2 + z2 * (_C3 + z2 * (_C4 + z2 * (_C5 + z2 * _C6)))))
        q = np.int64(kx) & 3
        odd = np.float64(q & 1)
        sgn_s = 1.0 - np.float64(q & 2)
        sgn_c = 1.0 - 2.0 * np.float64(((q + 1) >> 1) & 1)
        sx = sgn_s * (sp * (1.0 - odd) + cp * odd)
        cx = sgn_c * (cp * (1.0 - odd) + sp * odd)
        z2 = zy * zy
        sp = zy * (1.0 + z2 * (_S1 + z2 * (_S2 + z2 * (_S3 + z2 * (_S4 + z2 * (_S5 + z2 * _S6))))))
        cp = 1.0 + z2 * (_C1 + z2 * (_C2 + z2 * (_C3 + z2 * (_C4 + z2 * (_C5 + z2 * _C6)))))
        q = np.int64(ky) & 3
        odd = np.float64(q & 1)
        sgn_s = 1.0 - np.float64(q & 2)
        sgn_c = 1.0 - 2.0 * np.float64(((q + 1) >> 1) & 1)
        sy = sgn_s * (sp * (1.0 - odd) + cp * odd)
        cy = sgn_c * (cp * (1.0 - odd) + sp * odd)
        us[i] = -2.0 * _PI * sx * (a * cx * cy + b * (1.0 - 2.0 * sy * sy))
        vs[i] = 2.0 * _PI * sy * (a * (1.0 - 2.0 * sx * sx) + b * cx * cy)


@njit(cache=True, fastmath=True)
def _transitory_rk4_nb(x, y, t0, h, nsteps, h_last):  # pragma: no cover - compiled
    n = x.shape[0]
    k1x = np.empty(n)
    k1y = np.empty(n)
    k2x = np.empty(n)
    k2y = np.empty(n)
    k3x = np.empty(n)
    k3y = np.empty(n)
    k4x = np.empty(n)
    k4y = np.empty(n)
    tx = np.empty(n)
    ty = np.empty(n)
    for s in range(nsteps):
        hs = h_last if s == nsteps - 1 else h
        t = t0 + s * h
        sm = blend_weight(t)
        _transitory_stage_nb(x, y, 1.0 - sm, sm, k1x, k1y)
        for i in range(n):
            tx[i] = x[i] + 0.5 * hs * k1x[i]
            ty[i] = y[i] + 0.5 * hs * k1y[i]
        sm = blend_weight(t + 0.5 * hs)
        _transitory_stage_nb(tx, ty, 1.0 - sm, sm, k2x, k2y)
        for i in range(n):
            tx[i] = x[i] + 0.5 * hs * k2x[i]
            ty[i] = y[i] + 0.5 * hs * k2y[i]
        _transitory_stage_nb(tx, ty, 1.0 - sm, sm, k3x, k3y)
        for i in range(n):
            tx[i] = x[i] + hs * k3x[i]
            ty[i] = y[i] + hs * k3y[i]
        sm = blend_weight(t + hs)
        _transitory_stage_nb(tx, ty, 1.0 - sm, sm, k4x, k4y)
        c = hs / 6.0
        for i in range(n):
            x[i] += c * (k1x[i] + 2.0 * (k2x[i] + k3x[i]) + k4x[i])
            y[i] += c * (k1y[i] + 2.0 * (k2y[i] + k3y[i]) + k4y[i])


def _transitory_rk4_np(x, y, t0, h, nsteps, h_last):
    for s in range(nsteps):
        hs = h_last if s == nsteps - 1 else h
        t = t0 + s * h
        k1x, k1y = transitory_velocity_np(x, y, t)
        tm = t + 0.5 * hs
        k2x, k2y = transitory_velocity_np(x + 0.5 * hs * k1x, y + 0.5 * hs * k1y, tm)
        k3x, k3y = transitory_velocity_np(x + 0.5 * hs * k2x, y + 0.5 * hs * k2y, tm)
        k4x, k4y = transitory_velocity_np(x + hs * k3x, y + hs * k3y, t + hs)
        c = hs / 6.0
        x += c * (k1x + 2.0 * (k2x + k3x) + k4x)
        y += c * (k1y + 2.0 * (k2y + k3y) + k4y)


_CHUNK = 65536


def transitory_map_points(pts: np.ndarray, t0: float, t1: float, h: float) -> np.ndarray:
    """Integrate the built-in transitory field from t0 to t1 for (m, 2) points."""
    nsteps, h_last = step_schedule(t0, t1, h)
    pts = np.asarray(pts, dtype=float)
    out = np.empty_like(pts)
    use_numba = get_backend() == "numba"
    for lo in range(0, pts.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, pts.shape[0])
        x = np.ascontiguousarray(pts[lo:hi, 0])
        y = np.ascontiguousarray(pts[lo:hi, 1])
        if use_numba:
            _transitory_rk4_nb(x, y, t0, h, nsteps, h_last)
        else:
            _transitory_rk4_np(x, y, t0, h, nsteps, h_last)
        out[lo:hi, 0] = x
        out[lo:hi, 1] = y
    return out
