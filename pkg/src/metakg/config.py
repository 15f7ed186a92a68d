"""Scenario configuration read from TOML files."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields
from dataclasses import field as dc_field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import tomli

from .errors import ConfigError, InputError

SCENARIO_DIR = Path(__file__).with_name("scenarios")


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "gaussian_well"
    width: float = 1.0
    depth: Optional[float] = None
    band: Optional[Tuple[float, float]] = None
    samples: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None


@dataclass(frozen=True)
class GridSpec:
    r_max: float = 400.0
    n: int = 4000


@dataclass(frozen=True)
class PhysicsSpec:
    mass: float = 1.0
    coupling: float = 1.0
    delta0: float = 0.005
    strict: bool = True


@dataclass(frozen=True)
class SpectralSpec:
    ladder: Tuple[float, ...] = (4.0, 6.0, 8.0, 12.0)
    max_disagreement: float = 0.05


@dataclass(frozen=True)
class EnvelopeSpec:
    t_end: float = 1e6
    rtol: float = 1e-10
    per_decade: int = 256
    remainder: str = "zero"
    remainder_delta: float = 0.25
    remainder_amplitude: float = 1.0
    m_coefficients: str = "unit"
    fit_window: Tuple[float, float] = (1e4, 1e6)
    damping_only: bool = False
    omega: Optional[float] = None


@dataclass(frozen=True)
class FieldSpec:
    dt: float = 0.05
    t_end: float = 2000.0
    sponge_fraction: float = 0.1
    sponge_strength: float = 1.0
    sample_dt: float = 0.5
    reflection_threshold: float = 1e-3


@dataclass(frozen=True)
class InitSpec:
    rho0: float = 0.005
    theta0: float = 0.0
    eta0_kind: str = "zero"
    eta0_amplitude: float = 1e-4


@dataclass(frozen=True)
class ScatteringSpec:
    t_tail: Optional[float] = None
    kernel: str = "leapfrog"
    tail_tolerance: Optional[float] = None
    checkpoint_dt: float = 10.0
    l_dt: float = 1.0


@dataclass(frozen=True)
class BackwardSpec:
    t_start: float = 2000.0
    rho_inf: Optional[float] = None
    theta_inf: Optional[float] = None
    profiles: str = "scatter"
    dt: float = 0.05
    smallness: float = 0.05


_SECTIONS = {
    "potential": PotentialSpec,
    "grid": GridSpec,
    "physics": PhysicsSpec,
    "spectral": SpectralSpec,
    "envelope": EnvelopeSpec,
    "field": FieldSpec,
    "init": InitSpec,
    "scattering": ScatteringSpec,
    "backward": BackwardSpec,
}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    potential: PotentialSpec = dc_field(default_factory=PotentialSpec)
    grid: GridSpec = dc_field(default_factory=GridSpec)
    physics: PhysicsSpec = dc_field(default_factory=PhysicsSpec)
    spectral: SpectralSpec = dc_field(default_factory=SpectralSpec)
    envelope: EnvelopeSpec = dc_field(default_factory=EnvelopeSpec)
    field: FieldSpec = dc_field(default_factory=FieldSpec)
    init: InitSpec = dc_field(default_factory=InitSpec)
    scattering: ScatteringSpec = dc_field(default_factory=ScatteringSpec)
    backward: BackwardSpec = dc_field(default_factory=BackwardSpec)

    def __post_init__(self):
        _validate(self)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(x):
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(type(x))


def _build(cls, raw: Dict[str, Any], where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in raw.items():
        default = getattr(cls(), k) if k in known else None
        if isinstance(v, list):
            v = tuple(tuple(float(y) for y in x) if isinstance(x, list) else float(x) for x in v)
        elif isinstance(default, float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        kw[k] = v
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def config_from_dict(raw: Dict[str, Any]) -> ScenarioConfig:
    raw = dict(raw)
    top = {k: raw.pop(k) for k in ("name", "seed") if k in raw}
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    parts = {name: _build(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}
    return ScenarioConfig(**top, **parts)


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """Read a scenario file; a bare name refers to a shipped scenario."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = SCENARIO_DIR / f"{path}.toml"
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return config_from_dict(raw)


def _validate(c: ScenarioConfig) -> None:
    pot, ph = c.potential, c.physics
    if pot.kind not in ("gaussian_well", "sech2_well", "tabulated"):
        raise ConfigError(f"unknown potential kind {pot.kind!r}")
    if pot.kind == "tabulated":
        if pot.samples is None:
            raise ConfigError("tabulated potential needs samples")
        if len(pot.samples) != 2 or len(pot.samples[0]) != len(pot.samples[1]) or len(pot.samples[0]) < 2:
            raise ConfigError("potential.samples must be two equal rows [r values], [V values]")
    elif (pot.depth is None) == (pot.band is None):
        raise ConfigError("give exactly one of potential.depth and potential.band")
    if pot.band is not None and len(pot.band) != 2:
        raise ConfigError("potential.band must have two entries")
    if c.grid.n < 16 or c.grid.r_max <= 0:
        raise ConfigError("grid needs r_max > 0 and n >= 16")
    if not ph.mass > 0:
        raise ConfigError("mass must be positive")
    if ph.coupling == 0 and ph.strict:
        raise ConfigError("coupling must be nonzero")
    if not ph.delta0 > 0:
        raise ConfigError("delta0 must be positive")
    if c.init.rho0 < 0 or (ph.strict and c.init.rho0 > ph.delta0):
        raise ConfigError("need 0 <= rho0 <= delta0")
    if c.envelope.remainder not in ("zero", "synthetic"):
        raise ConfigError("envelope.remainder must be 'zero' or 'synthetic'")
    if c.envelope.m_coefficients not in ("unit", "faithful"):
        raise ConfigError("envelope.m_coefficients must be 'unit' or 'faithful'")
    if c.init.eta0_kind not in ("zero", "packet"):
        raise ConfigError("init.eta0_kind must be 'zero' or 'packet'")
    if c.scattering.kernel not in ("filon", "leapfrog"):
        raise ConfigError("scattering.kernel must be 'filon' or 'leapfrog'")
    if c.backward.profiles not in ("scatter", "zero"):
        raise ConfigError("backward.profiles must be 'scatter' or 'zero'")
    f = c.field
    dr = c.grid.r_max / (c.grid.n + 1)
    if not 0 < f.dt <= 0.9 * dr:
        raise ConfigError(f"field.dt = {f.dt:g} violates 0 < dt <= 0.9*dr = {0.9 * dr:g}")
    if not 0 <= f.sponge_fraction < 1:
        raise ConfigError("field.sponge_fraction must lie in [0, 1)")
    no_sponge = f.sponge_fraction == 0 or f.sponge_strength == 0
    if no_sponge and f.t_end > 2.0 * c.grid.r_max:
        raise ConfigError(
            f"field.t_end = {f.t_end:g} exceeds the transit bound 2*r_max without a sponge"
        )
    if c.scattering.checkpoint_dt <= 0 or c.scattering.l_dt <= 0:
        raise ConfigError("scattering spacings must be positive")
    for name, val in (("checkpoint_dt", c.scattering.checkpoint_dt), ("l_dt", c.scattering.l_dt)):
        ratio = val / f.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(f"scattering.{name} must be a multiple of field.dt")
