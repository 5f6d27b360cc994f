import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from dynlap import (
    Domain,
    Grid,
    RunConfig,
    ScalarField,
    assemble_laplacian,
    marching_squares,
    render_heatmap,
    run_pipeline,
    solve_leading,
)
from dynlap.cli import main
from dynlap.errors import ConfigurationError
from dynlap.pipeline import build_flow

TWO_PI = 2 * math.pi


def small_identity_config(out_dir=None, **kw):
    cfg = dict(
        domain={"x_min": 0.0, "x_max": TWO_PI, "y_min": 0.0, "y_max": TWO_PI,
                "periodic_x": True, "periodic_y": True},
        grid={"nx": 16, "ny": 16},
        dynamics={"kind": "builtin", "name": "identity"},
        q_per_axis=3,
        k=4,
        n_levels=12,
        out_dir=str(out_dir) if out_dir else None,
        render=True,
    )
    cfg.update(kw)
    return RunConfig.from_dict(cfg)


def test_config_round_trip(tmp_path):
    cfg = small_identity_config(tmp_path)
    blob = cfg.to_json()
    path = tmp_path / "cfg.json"
    path.write_text(blob)
    back = RunConfig.from_json_file(path)
    assert back == cfg
    assert back.to_json() == blob


def test_config_rejects_unknown_and_missing_keys():
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"domain": {}, "grid": {}, "dynamics": {}, "bogus": 1})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"grid": {}})


def test_identity_pipeline_reduces_to_static(tmp_path):
    cfg = small_identity_config(tmp_path / "run")
    res = run_pipeline(cfg)
    g = res.grid
    static = solve_leading(assemble_laplacian(g), cfg.k)
    assert np.allclose(res.spectrum.eigenvalues, static.eigenvalues, atol=1e-9)
    # files and manifest
    out = res.out_dir
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {f["path"] for f in manifest["files"]}
    on_disk = {
        str(p.relative_to(out))
        for p in out.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    }
    assert listed == on_disk
    import hashlib

    for f in manifest["files"]:
        digest = hashlib.sha256((out / f["path"]).read_bytes()).hexdigest()
        assert digest == f["sha256"]


def test_pipeline_reproducible_bitwise(tmp_path):
    res1 = run_pipeline(small_identity_config(tmp_path / "a"))
    res2 = run_pipeline(small_identity_config(tmp_path / "b"))
    for name in ("result.json", "eigenvalues.json", "heatmap_u2.png",
                 "contour_gamma.csv"):
        assert (res1.out_dir / name).read_bytes() == (res2.out_dir / name).read_bytes()


def test_two_step_multistep_matches_single_step(tmp_path):
    base = dict(
        domain={"x_min": 0.0, "x_max": TWO_PI, "y_min": 0.0, "y_max": TWO_PI,
                "periodic_x": True, "periodic_y": True},
        grid={"nx": 16, "ny": 16},
        dynamics={"kind": "builtin", "name": "torus_shear"},
        q_per_axis=4,
        k=3,
        n_levels=10,
    )
    single = run_pipeline(RunConfig.from_dict(base))
    multi = run_pipeline(RunConfig.from_dict({**base, "multistep": {"steps": 2}}))
    a = single.extras["operator"].matrix
    b = multi.extras["operator"].matrix
    assert (a != b).nnz == 0
    assert np.array_equal(a.data, b.data)


def test_user_ode_pipeline_with_expression_field(tmp_path):
    cfg = RunConfig.from_dict(
        dict(
            domain={"x_min": 0.0, "x_max": TWO_PI, "y_min": 0.0, "y_max": TWO_PI,
                    "periodic_x": True, "periodic_y": True},
            grid={"nx": 16, "ny": 16},
            dynamics={"kind": "ode", "u": "sin(y)", "v": "0", "t_start": 0.0,
                      "t_end": 1.0, "step_size": 0.05},
            q_per_axis=3,
            k=3,
            n_levels=10,
            out_dir=str(tmp_path / "ode"),
        )
    )
    res = run_pipeline(cfg)
    assert res.spectrum.eigenvalues[0] <= 1e-6
    assert (res.out_dir / "summary.json").exists() is False  # summary only for case studies
    assert (res.out_dir / "result.json").exists()


def test_non_volume_preserving_ode_rejected(tmp_path):
    cfg = RunConfig.from_dict(
        dict(
            domain={"x_min": 0.0, "x_max": TWO_PI, "y_min": 0.0, "y_max": TWO_PI,
                    "periodic_x": True, "periodic_y": True},
            grid={"nx": 8, "ny": 8},
            dynamics={"kind": "ode", "u": "sin(x)", "v": "0", "t_start": 0.0,
                      "t_end": 1.0, "step_size": 0.05},
            q_per_axis=2,
            k=2,
        )
    )
    with pytest.raises(ConfigurationError, match="volume-preservation"):
        run_pipeline(cfg)


def test_build_flow_validates_domain():
    cfg = small_identity_config()
    cfg.dynamics = {"kind": "builtin", "name": "shear"}
    with pytest.raises(ConfigurationError):
        build_flow(cfg, Domain(0, 1, 0, 1))


def test_render_constant_checkerboard_and_contours(tmp_path):
    g = Grid(Domain(0, 1, 0, 1), 2, 2)
    const = ScalarField(g, np.ones(4))
    png = render_heatmap(const, path=tmp_path / "c.png", scale=4)
    from PIL import Image
    import io

    img = np.asarray(Image.open(io.BytesIO(png)))
    assert img.shape == (8, 8, 3)
    assert len(np.unique(img.reshape(-1, 3), axis=0)) == 1

    checker = ScalarField(g, np.array([0.0, 1.0, 1.0, 0.0]))
    png2 = render_heatmap(checker, scale=4)
    img2 = np.asarray(Image.open(io.BytesIO(png2)))
    corners = {tuple(img2[0, 0]), tuple(img2[0, -1]), tuple(img2[-1, 0]), tuple(img2[-1, -1])}
    assert len(corners) == 2  # two-color checkerboard in 4 blocks

    gg = Grid(Domain(0, 1, 0, 1), 32, 32)
    f = ScalarField.from_function(gg, lambda x, y: np.hypot(x - 0.5, y - 0.5))
    cs = marching_squares(f, 0.25)
    a = render_heatmap(f, contours=cs)
    b = render_heatmap(f, contours=cs)
    assert a == b  # deterministic bytes
    assert a != render_heatmap(f)  # overlay visibly changes pixels


def test_render_rejects_empty():
    g = Grid(Domain(0, 1, 0, 1), 1, 1)
    f = ScalarField(g, np.zeros(1))
    png = render_heatmap(f)  # single box renders fine
    assert png[:4] == b"\x89PNG"


def test_cli_case_study_small(tmp_path):
    runner = CliRunner()
    out = tmp_path / "cs"
    result = runner.invoke(
        main,
        ["case-study", "shear", "--out", str(out), "--grid", "32", "8",
         "--q-per-axis", "4", "--levels", "10", "--k", "4"],
    )
    assert result.exit_code == 0, result.output
    assert (out / "summary.json").exists()
    assert "lambda2" in result.output


def test_cli_run_and_render(tmp_path):
    runner = CliRunner()
    cfg = small_identity_config(tmp_path / "run")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(cfg.to_json())
    result = runner.invoke(main, ["run", str(cfg_path)])
    assert result.exit_code == 0, result.output
    field_csv = tmp_path / "run" / "eigenvectors" / "vec_01.csv"
    contours_csv = tmp_path / "run" / "contour_gamma.csv"
    out = tmp_path / "png"
    result2 = runner.invoke(
        main, ["render", str(field_csv), str(contours_csv), "--out", str(out)]
    )
    assert result2.exit_code == 0, result2.output
    assert (out / "vec_01.png").exists()


def test_cli_difflimit(tmp_path):
    cfg = dict(
        domain={"x_min": 0.0, "x_max": TWO_PI, "y_min": 0.0, "y_max": TWO_PI,
                "periodic_x": True, "periodic_y": True},
        grid={"nx": 64, "ny": 64},
        dynamics={"kind": "builtin", "name": "torus_shear"},
        q_per_axis=4,
        difflimit={"profile": "uniform_ball", "eps_list": [1.2, 0.9, 0.7],
                   "field": "sin(x)"},
        out_dir=str(tmp_path / "dl"),
    )
    cfg_path = tmp_path / "dl.json"
    cfg_path.write_text(json.dumps(cfg))
    runner = CliRunner()
    result = runner.invoke(main, ["difflimit", str(cfg_path)])
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "dl" / "difflimit.json").read_text())
    assert len(report["entries"]) == 3


def test_cli_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DYNLAP_THREADS", "1")
    runner = CliRunner()
    cfg = small_identity_config(tmp_path / "thr")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(cfg.to_json())
    result = runner.invoke(main, ["run", str(cfg_path)])
    assert result.exit_code == 0, result.output


def test_time_sampled_multistep_runs(tmp_path):
    cfg = RunConfig.from_dict(
        dict(
            domain={"x_min": 0.0, "x_max": 1.0, "y_min": 0.0, "y_max": 1.0,
                    "periodic_x": False, "periodic_y": False},
            grid={"nx": 16, "ny": 16},
            dynamics={"kind": "builtin", "name": "transitory", "step_size": 0.05},
            q_per_axis=3,
            k=3,
            n_levels=8,
            multistep={"time_samples": 3},
        )
    )
    res = run_pipeline(cfg)
    assert res.extras["operator"].kind == "multistep_laplacian"
    assert res.spectrum.eigenvalues[1] < 0
    # trapezoid weighting over intermediate times gives a genuinely different
    # operator than the endpoint average
    single = run_pipeline(RunConfig.from_dict({**cfg.to_dict(), "multistep": None}))
    diff = (res.extras["operator"].matrix - single.extras["operator"].matrix)
    assert abs(diff).max() > 0


def test_symmetrize_flag(tmp_path):
    cfg = small_identity_config()
    cfg.dynamics = {"kind": "builtin", "name": "torus_shear"}
    cfg.symmetrize = True
    res = run_pipeline(cfg)
    m = res.extras["operator"].matrix
    assert abs((m - m.T)).max() == 0.0


def test_deflate_constant_flag():
    cfg = small_identity_config()
    plain = run_pipeline(cfg)
    cfg2 = small_identity_config(deflate_constant=True)
    defl = run_pipeline(cfg2)
    assert np.allclose(defl.spectrum.eigenvalues[:3], plain.spectrum.eigenvalues[1:4],
                       atol=1e-9)


def test_pipeline_with_difflimit_section_and_manifest(tmp_path):
    cfg = RunConfig.from_dict(
        dict(
            domain={"x_min": 0.0, "x_max": TWO_PI, "y_min": 0.0, "y_max": TWO_PI,
                    "periodic_x": True, "periodic_y": True},
            grid={"nx": 64, "ny": 64},
            dynamics={"kind": "builtin", "name": "torus_shear"},
            q_per_axis=4,
            k=3,
            n_levels=10,
            difflimit={"profile": "uniform_ball", "eps_list": [1.2, 0.9],
                       "field": "sin(x)"},
            out_dir=str(tmp_path / "dl_run"),
        )
    )
    res = run_pipeline(cfg)
    assert res.limit_report is not None
    assert "difflimit" in res.summary
    out = res.out_dir
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {f["path"] for f in manifest["files"]}
    on_disk = {
        str(p.relative_to(out))
        for p in out.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    }
    assert listed == on_disk
