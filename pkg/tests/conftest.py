import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
import tomli

from metakg import spectral as sp
from metakg.config import load_config


@dataclass
class Problem:
    pot: sp.Potential
    op: sp.DiscreteOperator
    bs: sp.BoundState


def build_problem(name: str) -> Problem:
    cfg = load_config(name)
    grid = sp.RadialGrid(cfg.grid.r_max, cfg.grid.n)
    p = cfg.potential
    pot = sp.tune_potential_depth(p.kind, p.width, cfg.physics.mass, p.band, grid)
    op = sp.build_operator(pot, grid, cfg.physics.mass)
    return Problem(pot, op, sp.compute_bound_state(op))


@pytest.fixture(scope="session")
def small():
    """Gaussian well V0 = 1, sigma = 2, m = 1 on r_max = 60, n = 1200."""
    grid = sp.RadialGrid(60.0, 1200)
    pot = sp.Potential("gaussian_well", 1.0, 2.0)
    op = sp.build_operator(pot, grid, 1.0)
    return Problem(pot, op, sp.compute_bound_state(op))


@pytest.fixture(scope="session")
def narrow():
    return build_problem("narrow")


@pytest.fixture(scope="session")
def narrow_spec(narrow):
    return sp.compute_spectral_data(narrow.op, narrow.bs, 1.0)


@pytest.fixture(scope="session")
def default():
    return build_problem("default")


@pytest.fixture(scope="session")
def default_spec(default):
    return sp.compute_spectral_data(default.op, default.bs, 1.0)


@dataclass
class TimedRun:
    out: Path
    seconds: dict


def timed_pipeline(config, out: Path, stages=None) -> TimedRun:
    from metakg.cli import PIPELINE, run_command

    seconds = {}
    for stage in stages or PIPELINE:
        t0 = time.perf_counter()
        run_command(stage, config, out)
        seconds[stage] = time.perf_counter() - t0
    return TimedRun(out, seconds)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """Artifacts and per-stage wall times of the complete pipeline on the default scenario."""
    return timed_pipeline("default", tmp_path_factory.mktemp("default_run"))


@pytest.fixture(scope="session")
def narrow_run(tmp_path_factory):
    """Spectrum and envelope stages of the narrow scenario."""
    return timed_pipeline("narrow", tmp_path_factory.mktemp("narrow_run"), ("spectrum", "envelope"))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


TINY = Path(__file__).with_name("data") / "tiny.toml"


def tiny_raw() -> dict:
    return tomli.loads(TINY.read_text())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def write_config(raw: dict, path: Path) -> Path:
    """Minimal TOML writer for scenario dictionaries (scalars, arrays, one level of tables)."""
    lines = [f"{k} = {_toml_value(v)}" for k, v in raw.items() if not isinstance(v, dict)]
    for sec, body in raw.items():
        if isinstance(body, dict):
            lines.append(f"\n[{sec}]")
            lines += [f"{k} = {_toml_value(v)}" for k, v in body.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def tiny_config(tmp_path: Path, name: str = "tiny.toml", **sections) -> Path:
    raw = tiny_raw()
    for sec, upd in sections.items():
        raw.setdefault(sec, {}).update(upd)
    return write_config(raw, tmp_path / name)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """Artifacts of the complete pipeline on the small test scenario."""
    from metakg.cli import run_command

    out = tmp_path_factory.mktemp("tiny_run")
    run_command("all", TINY, out)
    return out
