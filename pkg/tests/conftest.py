import time
from dataclasses import dataclass

import numpy as np
import pytest

from dynlap import (
    Grid,
    ScalarField,
    build_ulam,
    builtin_torus_shear,
    make_kernel,
    run_case_study,
    verify_limit,
)
from dynlap.pipeline import PipelineResult


@dataclass
class TimedRun:
    result: PipelineResult
    seconds: float


def _run(name, tmp_path_factory) -> TimedRun:
    out = tmp_path_factory.mktemp(f"case_{name}")
    t0 = time.perf_counter()
    res = run_case_study(name, out_dir=out)
    return TimedRun(res, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def shear_case(tmp_path_factory) -> TimedRun:
    return _run("shear", tmp_path_factory)


@pytest.fixture(scope="session")
def standard_case(tmp_path_factory) -> TimedRun:
    return _run("standard", tmp_path_factory)


@pytest.fixture(scope="session")
def transitory_case(tmp_path_factory) -> TimedRun:
    return _run("transitory", tmp_path_factory)


@pytest.fixture(scope="session")
def limit_reports():
    """Smoothing-limit residual decay on the torus shear at 256^2, plus the
    deliberately mis-specified covariance control."""
    flow = builtin_torus_shear()
    g = Grid(flow.source, 256, 256)
    tm = build_ulam(g, g, flow, 40)
    f = ScalarField.from_function(g, lambda x, y: np.sin(x))
    kernel = make_kernel("uniform_ball", 0.4)
    eps_list = [0.4, 0.28, 0.2, 0.14]
    correct = verify_limit(g, tm, kernel, f, eps_list)
    wrong = verify_limit(g, tm, kernel, f, eps_list, c_override=1.0 / 3.0)
    return correct, wrong
