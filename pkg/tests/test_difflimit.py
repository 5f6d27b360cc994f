import math

import numpy as np
import pytest

from dynlap import (
    Domain,
    Grid,
    ScalarField,
    apply_smoothing,
    build_ulam,
    builtin_identity,
    make_kernel,
    verify_limit,
)
from dynlap.difflimit import disk_box_overlap, kernel_weights, smoothing_matrix
from dynlap.errors import ConfigurationError, KernelResolutionError

TWO_PI = 2 * math.pi
TORUS = Domain(0, TWO_PI, 0, TWO_PI, periodic_x=True, periodic_y=True)


# --- continuous-profile moment oracle: radial Simpson quadrature times the
# --- analytic angular factors, independent of the convolution weights
def polar_moments(profile, nr=4001):
    from scipy.integrate import simpson

    if profile == "uniform_ball":
        q = lambda r: np.full_like(r, 1.0 / math.pi)
    else:
        q = lambda r: (3.0 / math.pi) * (1 - r**2) ** 2
    r = np.linspace(0.0, 1.0, nr)
    radial = lambda k: simpson(q(r) * r ** (k + 1), x=r)
    # angular integrals of 1, cos, cos^2, cos*sin over a full turn
    return {
        "mass": TWO_PI * radial(0),
        "mx": 0.0 * radial(1),
        "my": 0.0 * radial(1),
        "cxx": math.pi * radial(2),
        "cyy": math.pi * radial(2),
        "cxy": 0.0 * radial(2),
    }


@pytest.mark.parametrize("profile,c", [("uniform_ball", 0.25), ("truncated_quartic", 0.125)])
def test_profile_moments_against_oracle(profile, c):
    m = polar_moments(profile)
    assert m["mass"] == pytest.approx(1.0, abs=1e-10)
    assert abs(m["mx"]) <= 1e-10 and abs(m["my"]) <= 1e-10
    assert m["cxx"] == pytest.approx(c, abs=1e-8)
    assert m["cyy"] == pytest.approx(c, abs=1e-8)
    assert abs(m["cxy"]) <= 1e-10
    kernel = make_kernel(profile, 0.3)
    assert kernel.c == pytest.approx(c, abs=1e-12)


def test_disk_box_overlap_against_midpoint_oracle():
    rng = np.random.default_rng(4)
    for _ in range(25):
        r = rng.uniform(0.2, 1.5)
        x0, y0 = rng.uniform(-2, 1.5, 2)
        x1 = x0 + rng.uniform(0.05, 1.0)
        y1 = y0 + rng.uniform(0.05, 1.0)
        exact = disk_box_overlap(r, x0, x1, y0, y1)
        n = 400
        xs = x0 + (np.arange(n) + 0.5) / n * (x1 - x0)
        ys = y0 + (np.arange(n) + 0.5) / n * (y1 - y0)
        xg, yg = np.meshgrid(xs, ys)
        approx = (xg**2 + yg**2 <= r * r).mean() * (x1 - x0) * (y1 - y0)
        assert exact == pytest.approx(approx, abs=3e-3 * max(1e-3, (x1 - x0) * (y1 - y0)))
        assert exact >= -1e-15


def test_disk_box_overlap_exact_cases():
    # box fully inside and fully containing the disk
    assert disk_box_overlap(2.0, -0.5, 0.5, -0.5, 0.5) == pytest.approx(1.0, abs=1e-14)
    assert disk_box_overlap(0.5, -2, 2, -2, 2) == pytest.approx(math.pi * 0.25, abs=1e-12)
    assert disk_box_overlap(0.5, 1.0, 2.0, 1.0, 2.0) == 0.0
    # exactly half the disk
    assert disk_box_overlap(1.0, 0.0, 3.0, -3.0, 3.0) == pytest.approx(math.pi / 2, abs=1e-12)


@pytest.mark.parametrize("profile", ["uniform_ball", "truncated_quartic"])
def test_discrete_weights_have_exact_moments(profile):
    g = Grid(TORUS, 128, 128)
    ker = make_kernel(profile, 0.3)
    w = kernel_weights(ker, g)
    ny, nx = w.shape
    ox = (np.arange(nx) - nx // 2) * g.dx
    oy = (np.arange(ny) - ny // 2) * g.dy
    X, Y = np.meshgrid(ox, oy)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert abs((w * X).sum()) <= 1e-12
    assert abs((w * Y).sum()) <= 1e-12
    assert (w * X * X).sum() == pytest.approx(ker.c * 0.09, abs=1e-12)
    assert (w * Y * Y).sum() == pytest.approx(ker.c * 0.09, abs=1e-12)
    assert abs((w * X * Y).sum()) <= 1e-12


def test_under_resolved_kernel_rejected():
    g = Grid(TORUS, 16, 16)  # dx ~ 0.39
    with pytest.raises(KernelResolutionError):
        apply_smoothing(make_kernel("uniform_ball", 0.5), ScalarField(g, np.zeros(g.n)))


def test_smoothing_preserves_constants_on_torus():
    g = Grid(TORUS, 64, 64)
    out = apply_smoothing(make_kernel("uniform_ball", 0.4), ScalarField(g, np.ones(g.n)))
    assert np.abs(out.values - 1.0).max() <= 1e-10


def test_smoothing_sine_curvature_response():
    g = Grid(TORUS, 128, 128)
    f = ScalarField.from_function(g, lambda x, y: np.sin(x))
    errs = []
    for eps in (0.5, 0.25):
        out = apply_smoothing(make_kernel("uniform_ball", eps), f)
        lhs = (out.values - f.values) / eps**2
        errs.append(np.abs(lhs - (-0.125) * f.values).max())
    assert errs[1] < errs[0]
    assert errs[1] <= 0.01


def test_smoothing_leaves_linear_field_alone_away_from_seam():
    g = Grid(TORUS, 128, 128)
    eps = 0.3
    f = ScalarField.from_function(g, lambda x, y: x)
    out = apply_smoothing(make_kernel("uniform_ball", eps), f)
    x = g.centers()[:, 0]
    interior = (x > eps + g.dx) & (x < TWO_PI - eps - g.dx)
    assert np.abs(out.values - f.values)[interior].max() <= 1e-8


def test_smoothing_matrix_self_adjoint_on_torus():
    g = Grid(TORUS, 24, 24)
    m = smoothing_matrix(make_kernel("uniform_ball", 4.1 * g.dx), g)
    assert np.abs(m - m.T).max() <= 1e-12


def test_verify_limit_identity_dynamics():
    g = Grid(TORUS, 128, 128)
    dom = g.domain
    tm = build_ulam(g, g, builtin_identity(dom), 3)
    f = ScalarField.from_function(g, lambda x, y: np.sin(x))
    ker = make_kernel("uniform_ball", 0.8)
    rep = verify_limit(g, tm, ker, f, [0.8, 0.56, 0.4])
    assert rep.monotone
    assert rep.mean_order >= 1.5
    # identity target is 2c * Lap f = -(1/2) sin x; check the first entry is
    # already far below that scale
    assert rep.entries[0].residual < 0.25


def test_verify_limit_wrong_constant_plateaus():
    g = Grid(TORUS, 128, 128)
    tm = build_ulam(g, g, builtin_identity(g.domain), 3)
    f = ScalarField.from_function(g, lambda x, y: np.sin(x))
    ker = make_kernel("uniform_ball", 0.8)
    ok = verify_limit(g, tm, ker, f, [0.8, 0.56, 0.4])
    bad = verify_limit(g, tm, ker, f, [0.8, 0.56, 0.4], c_override=1.0 / 3.0)
    # |1/3 - 1/4| * ||2 Lap f|| = 1/6 plateau, plus the correct-c remainder
    plateau = 1.0 / 6.0 + ok.entries[-1].residual
    assert bad.entries[-1].residual == pytest.approx(plateau, rel=0.05)
    assert bad.entries[-1].residual > 10 * ok.entries[-1].residual


def test_verify_limit_validation():
    g = Grid(TORUS, 32, 32)
    tm = build_ulam(g, g, builtin_identity(g.domain), 2)
    f = ScalarField.from_function(g, lambda x, y: np.sin(x))
    ker = make_kernel("uniform_ball", 0.8)
    with pytest.raises(ConfigurationError):
        verify_limit(g, tm, ker, f, [0.4, 0.8])
    cyl = Grid(Domain(0, 4, 0, 1, periodic_x=True), 32, 8)
    tm2 = build_ulam(cyl, cyl, builtin_identity(cyl.domain), 2)
    f2 = ScalarField.from_function(cyl, lambda x, y: np.sin(x * math.pi / 2))
    with pytest.raises(ConfigurationError):
        verify_limit(cyl, tm2, ker, f2, [0.8, 0.4])


def test_kernel_profile_validation():
    with pytest.raises(ConfigurationError):
        make_kernel("gaussian", 0.1)
    with pytest.raises(ConfigurationError):
        make_kernel("uniform_ball", -0.1)
