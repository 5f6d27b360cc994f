"""Configuration-driven runs: grid -> dynamics -> transfer -> operator ->
spectrum -> coherent sets, with serialized artifacts and a manifest.

``run_case_study`` wires the three bundled benchmark flows with their
published reference values; ``run_pipeline`` executes an arbitrary
:class:`RunConfig`.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from . import accel
from .coherent import (
    CoherentSetResult,
    ContourSet,
    Polyline,
    cheeger_upper_bound,
    curve_length,
    optimize_cheeger,
    sobolev_ratio,
    transport_curve,
)
from .difflimit import LimitReport, make_kernel, verify_limit
from .dynamics import (
    FlowMap,
    builtin_identity,
    builtin_shear,
    builtin_standard_map,
    builtin_torus_shear,
    builtin_transitory_flow,
    check_volume_preservation,
    compose,
    ode_flow,
    parse_vector_field,
)
from .errors import ConfigurationError
from .grid import Domain, Grid, ScalarField
from .operators import (
    assemble_dynamic_laplacian,
    assemble_laplacian,
    assemble_multistep,
    save_operator,
    sparse_identity,
    symmetrize,
)
from .render import render_heatmap
from .spectral import Spectrum, eigenvalues_to_json, eigenvector_to_csv, solve_leading
from .transfer import TransitionMatrix, build_ulam, save_transition

DEFAULTS = {
    "q_per_axis": 40,
    "k": 6,
    "n_levels": 100,
    "tol": 1e-8,
    "image_curve_method": "map_points",
    "step_size": 0.01,
    "time_samples": 11,
    "symmetrize": False,
    "deflate_constant": False,
    "render": True,
}


@dataclass
class RunConfig:
    """JSON-serializable description of one pipeline run."""

    domain: dict
    grid: dict
    dynamics: dict
    q_per_axis: int = DEFAULTS["q_per_axis"]
    k: int = DEFAULTS["k"]
    n_levels: int = DEFAULTS["n_levels"]
    tol: float = DEFAULTS["tol"]
    image_curve_method: str = DEFAULTS["image_curve_method"]
    multistep: Optional[dict] = None
    difflimit: Optional[dict] = None
    out_dir: Optional[str] = None
    symmetrize: bool = DEFAULTS["symmetrize"]
    deflate_constant: bool = DEFAULTS["deflate_constant"]
    render: bool = DEFAULTS["render"]
    threads: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        missing = {"domain", "grid", "dynamics"} - set(d)
        if missing:
            raise ConfigurationError(f"missing config keys: {sorted(missing)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_domain(d: dict) -> Domain:
    return Domain(
        x_min=float(d["x_min"]),
        x_max=float(d["x_max"]),
        y_min=float(d["y_min"]),
        y_max=float(d["y_max"]),
        periodic_x=bool(d.get("periodic_x", False)),
        periodic_y=bool(d.get("periodic_y", False)),
    )


def build_flow(cfg: RunConfig, domain: Domain) -> FlowMap:
    dyn = cfg.dynamics
    kind = dyn.get("kind", "builtin")
    if kind == "builtin":
        name = dyn["name"]
        if name == "identity":
            return builtin_identity(domain)
        if name == "shear":
            flow = builtin_shear()
        elif name == "torus_shear":
            flow = builtin_torus_shear()
        elif name == "standard_map":
            flow = builtin_standard_map()
        elif name == "transitory":
            flow = builtin_transitory_flow(float(dyn.get("step_size", DEFAULTS["step_size"])))
        else:
            raise ConfigurationError(f"unknown builtin dynamics {name!r}")
        if flow.source != domain:
            raise ConfigurationError(
                f"builtin {name!r} is defined on {flow.source}, config says {domain}"
            )
        return flow
    if kind == "ode":
        field = parse_vector_field(dyn["u"], dyn["v"])
        return ode_flow(
            field,
            domain,
            t_start=float(dyn.get("t_start", 0.0)),
            t_end=float(dyn.get("t_end", 1.0)),
            step_size=float(dyn.get("step_size", DEFAULTS["step_size"])),
            name=dyn.get("name", "user_ode"),
        )
    raise ConfigurationError(f"unknown dynamics kind {kind!r}")


def _time_partial_flows(cfg: RunConfig, domain: Domain, samples: int) -> list[FlowMap]:
    """Flow maps from t_start to each of `samples` equispaced times."""
    dyn = cfg.dynamics
    if dyn.get("kind") == "builtin" and dyn.get("name") == "transitory":
        h = float(dyn.get("step_size", DEFAULTS["step_size"]))
        t0, t1 = 0.0, 1.0

        def make(tmid):
            def fn(p, _t=tmid):
                out = accel.transitory_map_points(p, t0, _t, h)
                return domain.wrap(out, clamp_tol=1e-9)

            return FlowMap(domain, domain, f"transitory[0,{tmid}]", fn)

    elif dyn.get("kind") == "ode":
        field = parse_vector_field(dyn["u"], dyn["v"])
        t0 = float(dyn.get("t_start", 0.0))
        t1 = float(dyn.get("t_end", 1.0))
        h = float(dyn.get("step_size", DEFAULTS["step_size"]))

        def make(tmid):
            return ode_flow(field, domain, t0, tmid, h, name=f"ode[{t0},{tmid}]")

    else:
        raise ConfigurationError("time-sampled multistep needs a time-dependent flow")
    times = np.linspace(t0, t1, samples)
    return [make(float(t)) for t in times[1:]]


@dataclass
class PipelineResult:
    config: RunConfig
    grid: Grid
    flow: FlowMap
    transition: TransitionMatrix
    spectrum: Spectrum
    coherent: CoherentSetResult
    sobolev: float
    bound: float
    summary: dict
    out_dir: Optional[Path]
    limit_report: Optional[LimitReport] = None
    extras: dict = dc_field(default_factory=dict)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class _Manifest:
    def __init__(self, config_text: str):
        self.stages: list[dict] = []
        self.files: list[dict] = []
        self.config_hash = hashlib.sha256(config_text.encode()).hexdigest()

    def stage(self, name: str, seconds: float):
        self.stages.append({"stage": name, "seconds": seconds})

    def add(self, stage: str, path: Path, root: Path):
        self.files.append(
            {
                "stage": stage,
                "path": str(path.relative_to(root)),
                "sha256": _sha256(path),
            }
        )

    def write(self, root: Path):
        out = root / "manifest.json"
        out.write_text(
            json.dumps(
                {
                    "config_sha256": self.config_hash,
                    "stages": self.stages,
                    "files": self.files,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    """Execute all stages of one configured run and write its artifacts."""
    threads = cfg.threads or int(os.environ.get("DYNLAP_THREADS", "0") or 0)
    if threads:
        accel.set_num_threads(threads)

    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(cfg.to_json())

    def record(stage, paths):
        if out is not None:
            for p in paths:
                manifest.add(stage, Path(p), out)

    if out is not None:
        cfg_path = out / "config.json"
        cfg_path.write_text(cfg.to_json(), encoding="utf-8")
        record("config", [cfg_path])

    t_start = time.perf_counter()
    domain = build_domain(cfg.domain)
    grid = Grid(domain, int(cfg.grid["nx"]), int(cfg.grid["ny"]))
    flow = build_flow(cfg, domain)
    manifest.stage("grid+dynamics", time.perf_counter() - t_start)

    if cfg.dynamics.get("kind") == "ode":
        vol = check_volume_preservation(flow)
        if not vol.passed:
            raise ConfigurationError(
                f"user ODE flow failed the volume-preservation check "
                f"(max |z| = {vol.max_abs_z:.2f} > {vol.threshold})"
            )

    t0 = time.perf_counter()
    tm = build_ulam(grid, grid, flow, cfg.q_per_axis)
    manifest.stage("ulam", time.perf_counter() - t0)
    if out is not None:
        record("ulam", save_transition(tm, out / "transition"))

    t0 = time.perf_counter()
    lap = assemble_laplacian(grid)
    prov = {"dynamics": flow.fingerprint, "q_per_axis": cfg.q_per_axis}
    if cfg.multistep:
        ms = cfg.multistep
        if "steps" in ms:
            nsteps = int(ms["steps"])
            partials = compose([flow] * (nsteps - 1)) if nsteps > 1 else []
            weights = [1.0 / nsteps] * nsteps
        elif "time_samples" in ms:
            samples = int(ms.get("time_samples", DEFAULTS["time_samples"]))
            partials = _time_partial_flows(cfg, domain, samples)
            h = 1.0 / (samples - 1)
            weights = [h / 2] + [h] * (samples - 2) + [h / 2]
        else:
            raise ConfigurationError("multistep needs 'steps' or 'time_samples'")
        ptildes = [sparse_identity(grid.n)]
        for pf in partials:
            ptildes.append(build_ulam(grid, grid, pf, cfg.q_per_axis).ptilde)
        op = assemble_multistep([lap] * len(ptildes), ptildes, weights)
    else:
        op = assemble_dynamic_laplacian(lap, lap, tm.ptilde)
    if cfg.symmetrize:
        op = symmetrize(op)
    manifest.stage("operator", time.perf_counter() - t0)
    if out is not None:
        record("operator", save_operator(lap, out / "laplacian", prov))
        record("operator", save_operator(op, out / "dynamic_laplacian", prov))

    t0 = time.perf_counter()
    spectrum = solve_leading(
        op, cfg.k, tol=cfg.tol, deflate_constant=cfg.deflate_constant
    )
    manifest.stage("spectral", time.perf_counter() - t0)
    if out is not None:
        p = out / "eigenvalues.json"
        p.write_text(eigenvalues_to_json(spectrum), encoding="utf-8")
        paths = [p]
        vec_dir = out / "eigenvectors"
        vec_dir.mkdir(exist_ok=True)
        for i, fld in enumerate(spectrum.fields):
            vp = vec_dir / f"vec_{i:02d}.csv"
            vp.write_text(eigenvector_to_csv(fld), encoding="utf-8")
            paths.append(vp)
        record("spectral", paths)

    t0 = time.perf_counter()
    u2 = spectrum.fields[1]
    dynamics_arg = flow if cfg.image_curve_method == "map_points" else tm
    result = optimize_cheeger(
        u2, dynamics_arg, n_levels=cfg.n_levels, method_image=cfg.image_curve_method
    )
    sob = sobolev_ratio(u2, tm)
    bound = cheeger_upper_bound(min(spectrum.eigenvalues[1], 0.0))
    manifest.stage("coherent", time.perf_counter() - t0)

    summary = {
        "dynamics": flow.fingerprint,
        "grid": {"nx": grid.nx, "ny": grid.ny},
        "eigenvalues": [float(v) for v in spectrum.eigenvalues],
        "result": result.to_dict(sobolev_bound=sob, cheeger_bound=bound),
    }

    limit_report = None
    if cfg.difflimit:
        t0 = time.perf_counter()
        limit_report = run_difflimit(cfg, grid, tm, out)
        manifest.stage("difflimit", time.perf_counter() - t0)
        if out is not None:
            record("difflimit", [out / "difflimit.json"])
        summary["difflimit"] = {
            "mean_order": limit_report.mean_order,
            "monotone": limit_report.monotone,
            "passes": limit_report.passes,
        }

    if out is not None:
        paths = []
        p = out / "contour_gamma.csv"
        p.write_text(result.gamma.to_csv(), encoding="utf-8")
        paths.append(p)
        p = out / "contour_gamma_image.csv"
        p.write_text(result.gamma_image.to_csv(), encoding="utf-8")
        paths.append(p)
        p = out / "result.json"
        p.write_text(
            json.dumps(result.to_dict(sobolev_bound=sob, cheeger_bound=bound),
                       indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        paths.append(p)
        if cfg.render:
            p = out / "heatmap_u2.png"
            render_heatmap(u2, contours=result.gamma, path=p)
            paths.append(p)
        record("coherent", paths)

    if out is not None:
        manifest.write(out)
    return PipelineResult(
        config=cfg,
        grid=grid,
        flow=flow,
        transition=tm,
        spectrum=spectrum,
        coherent=result,
        sobolev=sob,
        bound=bound,
        summary=summary,
        out_dir=out,
        limit_report=limit_report,
        extras={"laplacian": lap, "operator": op, "manifest": manifest},
    )


def run_difflimit(cfg: RunConfig, grid: Grid, tm: TransitionMatrix, out) -> LimitReport:
    dl = cfg.difflimit
    kernel = make_kernel(dl.get("profile", "uniform_ball"), float(dl["eps_list"][0]))
    expr = dl.get("field", "sin(x)")
    from .dynamics import parse_expression

    fn = parse_expression(expr)
    f = ScalarField.from_function(grid, lambda x, y: fn(x, y, 0.0))
    report = verify_limit(
        grid,
        tm,
        kernel,
        f,
        dl["eps_list"],
        c_override=dl.get("c_override"),
        order_threshold=float(dl.get("order_threshold", 1.5)),
    )
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "difflimit.json").write_text(report.to_json(), encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# bundled case studies with published reference values
# ---------------------------------------------------------------------------

SQRT5_HALF = math.sqrt(5.0) / 2.0

CASE_CONFIGS = {
    "shear": dict(
        domain={"x_min": 0.0, "x_max": 4.0, "y_min": 0.0, "y_max": 1.0,
                "periodic_x": True, "periodic_y": False},
        grid={"nx": 256, "ny": 64},
        dynamics={"kind": "builtin", "name": "shear"},
    ),
    "standard": dict(
        domain={"x_min": 0.0, "x_max": 2 * math.pi, "y_min": 0.0, "y_max": 2 * math.pi,
                "periodic_x": True, "periodic_y": True},
        grid={"nx": 128, "ny": 128},
        dynamics={"kind": "builtin", "name": "standard_map"},
    ),
    "transitory": dict(
        domain={"x_min": 0.0, "x_max": 1.0, "y_min": 0.0, "y_max": 1.0,
                "periodic_x": False, "periodic_y": False},
        grid={"nx": 128, "ny": 128},
        dynamics={"kind": "builtin", "name": "transitory", "step_size": 0.01},
    ),
}

# (target, relative tolerance) per reported metric
REFERENCES = {
    "shear": {
        "lambda2": (-3.0865, 0.02),
        "hD": (SQRT5_HALF, 0.02),
        "cheeger_bound": (3.5137, 0.01),
    },
    "standard": {
        "lambda2": (-1.6466, 0.02),
        "hD": (0.7685, 0.03),
        "sobolev_bound": (1.2278, 0.05),
        "cheeger_bound": (2.5664, 0.01),
    },
    "transitory": {
        "lambda2": (-87.1430, 0.05),
        "hD": (8.2749, 0.05),
        "min_vol": (0.3091, 0.05),
        "separatrix_image_length": (8.3057, 0.05),
    },
}


def separatrix_comparison(result_grid: Grid, flow: FlowMap, n_vertices: int = 257) -> dict:
    """Transport the vertical mid-line of the unit square and report its
    image length and the corresponding boundary-to-volume ratio."""
    ys = np.linspace(0.0, 1.0, n_vertices)
    verts = np.column_stack([np.full_like(ys, 0.5), ys])
    curve = ContourSet(
        level=0.0,
        grid=result_grid,
        curves=[Polyline(verts, np.zeros_like(verts, dtype=np.int64))],
    )
    image = transport_curve(curve, flow)
    li = curve_length(image)
    return {
        "length": 1.0,
        "image_length": li,
        "hD": (1.0 + li) / (2.0 * 0.5),
    }


def run_case_study(name: str, out_dir=None, **overrides) -> PipelineResult:
    """Run one bundled case study and compare metrics against the stored
    reference values; per-metric pass/fail lands in the summary (hard errors
    abort, tolerance misses do not)."""
    if name not in CASE_CONFIGS:
        raise ConfigurationError(
            f"unknown case study {name!r}; choose from {sorted(CASE_CONFIGS)}"
        )
    cfg_dict = {k: (dict(v) if isinstance(v, dict) else v)
                for k, v in CASE_CONFIGS[name].items()}
    cfg_dict["out_dir"] = str(out_dir) if out_dir else None
    cfg_dict.update(overrides)
    cfg = RunConfig.from_dict(cfg_dict)
    res = run_pipeline(cfg)

    metrics = {
        "lambda2": float(res.spectrum.eigenvalues[1]),
        "hD": res.coherent.hD,
        "sobolev_bound": res.sobolev,
        "cheeger_bound": res.bound,
        "min_vol": min(res.coherent.vol1, res.coherent.vol2),
    }
    if name == "transitory":
        sep = separatrix_comparison(res.grid, res.flow)
        res.extras["separatrix"] = sep
        metrics["separatrix_image_length"] = sep["image_length"]
        res.summary["separatrix"] = sep

    comparison = {}
    for key, (target, rtol) in REFERENCES[name].items():
        value = metrics[key]
        ok = abs(value - target) <= rtol * abs(target)
        comparison[key] = {
            "value": value,
            "target": target,
            "rel_tol": rtol,
            "pass": bool(ok),
        }
    res.summary["case"] = name
    res.summary["reference_comparison"] = comparison
    res.summary["bounds_ordering"] = {
        "hD_le_sobolev": bool(res.coherent.hD <= res.sobolev + 1e-12),
        "hD_le_cheeger_bound": bool(res.coherent.hD <= res.bound + 1e-12),
        "sobolev_le_cheeger_bound": bool(res.sobolev <= res.bound + 1e-12),
    }
    if name == "transitory":
        res.summary["separatrix_worse"] = bool(
            res.extras["separatrix"]["hD"] > res.coherent.hD
        )

    if res.out_dir is not None:
        p = res.out_dir / "summary.json"
        p.write_text(json.dumps(res.summary, indent=2, sort_keys=True) + "\n",
                     encoding="utf-8")
        manifest = res.extras.get("manifest")
        if manifest is not None:
            manifest.add("summary", p, res.out_dir)
            manifest.write(res.out_dir)
        for line in _summary_lines(res.summary):
            print(line)
    return res


def _summary_lines(summary: dict) -> list[str]:
    lines = []
    comp = summary.get("reference_comparison", {})
    for key, row in comp.items():
        status = "PASS" if row["pass"] else "FAIL"
        lines.append(
            f"[{summary.get('case', 'run')}] {key}: value={row['value']:.6g} "
            f"target={row['target']:.6g} tol={row['rel_tol']:.0%} {status}"
        )
    return lines
