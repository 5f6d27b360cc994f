"""Flow maps: built-in analytic maps, ODE-integrated flows, and composition.

A :class:`FlowMap` transforms points of a source domain into an image domain.
Built-ins cover the bundled case studies; user ODE fields come either as
Python callables ``field(x, y, t) -> (u, v)`` or as a small arithmetic
expression language (see :func:`parse_vector_field`).  All map application is
pure and deterministic: identical inputs give bit-identical outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from . import accel
from .errors import CompositionError, ConfigurationError, IntegrationError
from .grid import Domain, Grid

TWO_PI = 2.0 * math.pi

# excursions beyond a closed non-periodic boundary up to this tolerance are
# clamped; larger ones indicate an inconsistent vector field or step size
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class FlowMap:
    """A point transformation from a source domain onto an image domain."""

    source: Domain
    image: Domain
    name: str
    _fn: Callable[[np.ndarray], np.ndarray]
    _inverse_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: tuple = dc_field(default_factory=tuple)

    @property
    def fingerprint(self) -> str:
        ps = ",".join(repr(p) for p in self.params)
        return f"{self.name}({ps})" if ps else self.name

    def map_many(self, pts) -> np.ndarray:
        """Apply the map to an (m, 2) array of points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = self._fn(pts)
        if not np.all(np.isfinite(out)):
            raise IntegrationError(f"{self.name}: non-finite state encountered")
        return out

    def __call__(self, point) -> tuple[float, float]:
        q = self.map_many(np.asarray(point, dtype=float)[None, :])[0]
        return float(q[0]), float(q[1])

    def inverse(self) -> "FlowMap":
        if self._inverse_fn is None:
            raise ConfigurationError(f"{self.name} has no analytic inverse")
        return FlowMap(
            source=self.image,
            image=self.source,
            name=f"{self.name}_inverse",
            _fn=self._inverse_fn,
            _inverse_fn=self._fn,
            params=self.params,
        )


def _wrap_coord(v, lo, span):
    r = np.mod(v - lo, span)
    r[r >= span] -= span
    return lo + r


# ---------------------------------------------------------------------------
# built-in maps
# ---------------------------------------------------------------------------

SHEAR_DOMAIN = Domain(0.0, 4.0, 0.0, 1.0, periodic_x=True, periodic_y=False)
TORUS_DOMAIN = Domain(0.0, TWO_PI, 0.0, TWO_PI, periodic_x=True, periodic_y=True)
SQUARE_DOMAIN = Domain(0.0, 1.0, 0.0, 1.0, periodic_x=False, periodic_y=False)


def builtin_identity(domain: Domain) -> FlowMap:
    return FlowMap(domain, domain, "identity", lambda p: np.array(p, copy=True))


def builtin_shear() -> FlowMap:
    """Horizontal shear (x, y) -> ((x + y) mod 4, y) on the cylinder [0,4) x [0,1]."""

    def fwd(p):
        out = np.empty_like(p)
        out[:, 0] = _wrap_coord(p[:, 0] + p[:, 1], 0.0, 4.0)
        out[:, 1] = p[:, 1]
        return out

    def inv(p):
        out = np.empty_like(p)
        out[:, 0] = _wrap_coord(p[:, 0] - p[:, 1], 0.0, 4.0)
        out[:, 1] = p[:, 1]
        return out

    return FlowMap(SHEAR_DOMAIN, SHEAR_DOMAIN, "shear", fwd, inv)


def builtin_torus_shear() -> FlowMap:
    """Shear (x, y) -> ((x + y) mod 2pi, y) on the flat torus [0,2pi)^2."""

    def fwd(p):
        out = np.empty_like(p)
        out[:, 0] = _wrap_coord(p[:, 0] + p[:, 1], 0.0, TWO_PI)
        out[:, 1] = p[:, 1]
        return out

    def inv(p):
        out = np.empty_like(p)
        out[:, 0] = _wrap_coord(p[:, 0] - p[:, 1], 0.0, TWO_PI)
        out[:, 1] = p[:, 1]
        return out

    return FlowMap(TORUS_DOMAIN, TORUS_DOMAIN, "torus_shear", fwd, inv)


def builtin_standard_map(kick: float = 8.0) -> FlowMap:
    """Chirikov-style map (x, y) -> (x + y, y + kick*sin(x + y)) mod 2pi on the torus."""

    def fwd(p):
        s = p[:, 0] + p[:, 1]
        out = np.empty_like(p)
        out[:, 0] = _wrap_coord(s, 0.0, TWO_PI)
        out[:, 1] = _wrap_coord(p[:, 1] + kick * np.sin(s), 0.0, TWO_PI)
        return out

    def inv(p):
        y0 = _wrap_coord(p[:, 1] - kick * np.sin(p[:, 0]), 0.0, TWO_PI)
        out = np.empty_like(p)
        out[:, 0] = _wrap_coord(p[:, 0] - y0, 0.0, TWO_PI)
        out[:, 1] = y0
        return out

    return FlowMap(TORUS_DOMAIN, TORUS_DOMAIN, "standard_map", fwd, inv, params=(kick,))


def transitory_velocity(x, y, t):
    """Velocity of the built-in transitory double-gyre field on the unit square."""
    return accel.transitory_velocity_np(np.asarray(x, dtype=float), np.asarray(y, dtype=float), t)


def builtin_transitory_flow(step_size: float = 0.01) -> FlowMap:
    """RK4-integrated transitory gyre flow on the unit square over t in [0, 1].

    The stream function interpolates between a side-by-side and a stacked
    gyre pair; the velocity field is divergence-free and tangent to the
    boundary, so trajectories stay inside the closed square up to rounding.
    """
    if step_size <= 0:
        raise ConfigurationError("step_size must be positive")

    def fwd(p):
        out = accel.transitory_map_points(p, 0.0, 1.0, step_size)
        return _clamp_into(out, SQUARE_DOMAIN, "transitory_flow")

    return FlowMap(SQUARE_DOMAIN, SQUARE_DOMAIN, "transitory_flow", fwd, params=(step_size,))


def _clamp_into(pts: np.ndarray, domain: Domain, name: str) -> np.ndarray:
    for ax, (lo, hi, per) in enumerate(
        (
            (domain.x_min, domain.x_max, domain.periodic_x),
            (domain.y_min, domain.y_max, domain.periodic_y),
        )
    ):
        if per:
            continue
        v = pts[:, ax]
        bad = (v < lo - BOUNDARY_TOL) | (v > hi + BOUNDARY_TOL)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise IntegrationError(
                f"{name}: trajectory left the domain at {tuple(pts[k])} "
                f"(axis {'xy'[ax]} beyond tolerance {BOUNDARY_TOL})"
            )
        np.clip(v, lo, hi, out=v)
    return pts


# ---------------------------------------------------------------------------
# generic RK4 and ODE-defined flows
# ---------------------------------------------------------------------------


def integrate_rk4(field: Callable, p, t0: float, t1: float, h: float):
    """Classical fixed-step RK4 from t0 to t1; the final step is shortened
    to land exactly on t1.

    ``field(x, y, t) -> (u, v)`` must accept numpy arrays.  ``p`` is a single
    (x, y) pair or an (m, 2) array.  Raises IntegrationError on non-finite
    states.
    """
    nsteps, h_last = accel.step_schedule(t0, t1, h)
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 1
    pts = np.array(np.atleast_2d(arr), dtype=float)
    x, y = pts[:, 0].copy(), pts[:, 1].copy()
    for s in range(nsteps):
        hs = h_last if s == nsteps - 1 else h
        t = t0 + s * h
        k1x, k1y = field(x, y, t)
        tm = t + 0.5 * hs
        k2x, k2y = field(x + 0.5 * hs * k1x, y + 0.5 * hs * k1y, tm)
        k3x, k3y = field(x + 0.5 * hs * k2x, y + 0.5 * hs * k2y, tm)
        k4x, k4y = field(x + hs * k3x, y + hs * k3y, t + hs)
        x = x + (hs / 6.0) * (k1x + 2.0 * (k2x + k3x) + k4x)
        y = y + (hs / 6.0) * (k1y + 2.0 * (k2y + k3y) + k4y)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise IntegrationError(f"RK4 produced a non-finite state at step {s}")
    out = np.column_stack([x, y])
    return (float(out[0, 0]), float(out[0, 1])) if scalar else out


def ode_flow(
    field: Callable,
    domain: Domain,
    t_start: float,
    t_end: float,
    step_size: float,
    name: str = "ode_flow",
    image: Optional[Domain] = None,
) -> FlowMap:
    """Wrap a velocity field into a FlowMap via fixed-step RK4 integration."""
    if t_end <= t_start:
        raise ConfigurationError("t_end must exceed t_start")
    if step_size <= 0:
        raise ConfigurationError("step_size must be positive")
    img = image or domain

    def fwd(p):
        out = integrate_rk4(field, p, t_start, t_end, step_size)
        return _clamp_into(np.atleast_2d(out), img, name)

    return FlowMap(domain, img, name, fwd, params=(t_start, t_end, step_size))


def compose(maps: Sequence[FlowMap]) -> list[FlowMap]:
    """Partial compositions [T1, T2 o T1, ..., Tn o ... o T1].

    The image domain of each map must equal the source domain of the next.
    """
    if not maps:
        raise CompositionError("need at least one map")
    for a, b in zip(maps, maps[1:]):
        if a.image != b.source:
            raise CompositionError(
                f"image domain of {a.name} does not match source domain of {b.name}"
            )
    out: list[FlowMap] = []
    for i in range(len(maps)):
        chain = tuple(maps[: i + 1])

        def fn(p, _chain=chain):
            q = np.array(p, copy=True)
            for m in _chain:
                q = m.map_many(q)
            return q

        inv_fn = None
        if all(m._inverse_fn is not None for m in chain):

            def inv_fn(p, _chain=chain):
                q = np.array(p, copy=True)
                for m in reversed(_chain):
                    q = m.inverse().map_many(q)
                return q

        out.append(
            FlowMap(
                source=maps[0].source,
                image=chain[-1].image,
                name="o".join(m.name for m in reversed(chain)),
                _fn=fn,
                _inverse_fn=inv_fn,
            )
        )
    return out


# ---------------------------------------------------------------------------
# expression sublanguage for config-supplied vector fields
#
# operators: + - * / ^ (right-assoc power), unary minus
# functions: sin cos exp; variables: x y t; numeric literals
# ---------------------------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


def _tokenize(src: str):
    tokens = []
    i = 0
    while i < len(src):
        ch = src[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*/^()":
            tokens.append(ch)
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < len(src) and (src[j].isdigit() or src[j] in ".eE" or
                                    (src[j] in "+-" and src[j - 1] in "eE")):
                j += 1
            tokens.append(float(src[i:j]))
            i = j
        elif ch.isalpha():
            j = i
            while j < len(src) and src[j].isalpha():
                j += 1
            tokens.append(src[i:j])
            i = j
        else:
            raise ConfigurationError(f"bad character {ch!r} in expression {src!r}")
    return tokens


def parse_expression(src: str) -> Callable:
    """Compile an arithmetic expression into ``f(x, y, t) -> ndarray``."""
    tokens = _tokenize(src)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take(expected=None):
        nonlocal pos
        if pos >= len(tokens):
            raise ConfigurationError(f"unexpected end of expression {src!r}")
        tok = tokens[pos]
        if expected is not None and tok != expected:
            raise ConfigurationError(f"expected {expected!r}, got {tok!r} in {src!r}")
        pos += 1
        return tok

    def expr():
        node = term()
        while peek() in ("+", "-"):
            op = take()
            rhs = term()
            node = (lambda a, b: lambda x, y, t: a(x, y, t) + b(x, y, t))(node, rhs) \
                if op == "+" else (lambda a, b: lambda x, y, t: a(x, y, t) - b(x, y, t))(node, rhs)
        return node

    def term():
        node = factor()
        while peek() in ("*", "/"):
            op = take()
            rhs = factor()
            node = (lambda a, b: lambda x, y, t: a(x, y, t) * b(x, y, t))(node, rhs) \
                if op == "*" else (lambda a, b: lambda x, y, t: a(x, y, t) / b(x, y, t))(node, rhs)
        return node

    def factor():
        # power binds tighter than unary minus: -x^2 == -(x^2)
        if peek() == "-":
            take()
            inner = factor()
            return lambda x, y, t, _f=inner: -_f(x, y, t)
        return power()

    def power():
        node = atom()
        if peek() == "^":
            take()
            rhs = factor()  # right associative, exponent may carry a sign
            node = (lambda a, b: lambda x, y, t: a(x, y, t) ** b(x, y, t))(node, rhs)
        return node

    def atom():
        tok = take()
        if isinstance(tok, float):
            return lambda x, y, t, _v=tok: np.broadcast_to(np.float64(_v), np.shape(x))
        if tok == "(":
            node = expr()
            take(")")
            return node
        if tok in _FUNCS:
            take("(")
            inner = expr()
            take(")")
            return lambda x, y, t, _f=_FUNCS[tok], _g=inner: _f(_g(x, y, t))
        if tok == "x":
            return lambda x, y, t: x
        if tok == "y":
            return lambda x, y, t: y
        if tok == "t":
            return lambda x, y, t: np.broadcast_to(np.float64(t), np.shape(x))
        raise ConfigurationError(f"unknown identifier {tok!r} in {src!r}")

    root = expr()
    if pos != len(tokens):
        raise ConfigurationError(f"trailing tokens in expression {src!r}")
    return root


def parse_vector_field(expr_u: str, expr_v: str) -> Callable:
    """Compile (u, v) expressions into a vector field ``f(x, y, t) -> (u, v)``."""
    fu = parse_expression(expr_u)
    fv = parse_expression(expr_v)

    def field(x, y, t):
        return (
            np.asarray(fu(x, y, t), dtype=float) + np.zeros_like(x),
            np.asarray(fv(x, y, t), dtype=float) + np.zeros_like(x),
        )

    return field


# ---------------------------------------------------------------------------
# statistical volume-preservation check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VolumeCheck:
    n_samples: int
    bins: tuple[int, int]
    max_abs_z: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= self.threshold


def check_volume_preservation(
    flow: FlowMap,
    n_samples: int = 200_000,
    bins: tuple[int, int] = (16, 16),
    seed: int = 0,
    threshold: float = 5.0,
) -> VolumeCheck:
    """Push a uniform sample forward and compare per-box counts with a
    multinomial model: every box count must be within ``threshold`` sigma of
    uniform."""
    rng = np.random.default_rng(seed)
    src = flow.source
    pts = np.column_stack(
        [
            src.x_min + src.width * rng.random(n_samples),
            src.y_min + src.height * rng.random(n_samples),
        ]
    )
    img = flow.map_many(pts)
    g = Grid(flow.image, bins[0], bins[1])
    idx = g.flat_box_of_many(img, clamp_tol=BOUNDARY_TOL)
    counts = np.bincount(idx, minlength=g.n)
    p = 1.0 / g.n
    sigma = math.sqrt(n_samples * p * (1.0 - p))
    z = np.abs(counts - n_samples * p) / sigma
    return VolumeCheck(n_samples, bins, float(z.max()), threshold)
