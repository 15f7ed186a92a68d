"""Command-line pipeline: spectrum, envelope, field, scatter, backward, plots."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import platform
import struct
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from . import __version__
from . import envelope as env
from . import field as fd
from . import scattering as sc
from . import spectral as sp
from .config import ScenarioConfig, load_config
from .errors import (
    MetaKGError,
    MissingArtifactError,
    NumericalError,
    WindowTooShortError,
)
from .plots import emit_plots

A_STEPS_MAGIC = b"MKGA"
SECTIONS = ("spectral", "envelope", "field", "scattering", "backward")


# ---------------------------------------------------------------------------
# artifact helpers


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def write_json(path: Path, obj: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def read_json(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise MissingArtifactError(f"missing upstream artifact {path}")
    return json.loads(path.read_text())


def write_csv(path: Path, header, cols: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, cols, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def read_csv(path: Path) -> Dict[str, np.ndarray]:
    if not path.is_file():
        raise MissingArtifactError(f"missing upstream artifact {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    names = path.read_text().splitlines()[0].split(",")
    return {n: data[:, i] for i, n in enumerate(names)}


def write_a_steps(path: Path, a: np.ndarray, dt: float) -> None:
    """Little-endian: magic MKGA, uint64 count, float64 dt, then the samples as float64."""
    with open(path, "wb") as fh:
        fh.write(A_STEPS_MAGIC)
        fh.write(struct.pack("<Qd", a.size, dt))
        fh.write(np.asarray(a, dtype="<f8").tobytes())


def read_a_steps(path: Path) -> Tuple[np.ndarray, float]:
    if not path.is_file():
        raise MissingArtifactError(f"missing upstream artifact {path}")
    data = path.read_bytes()
    if data[:4] != A_STEPS_MAGIC:
        raise MissingArtifactError(f"{path}: not an amplitude series")
    if len(data) < 20:
        raise MissingArtifactError(f"{path}: truncated amplitude series")
    n, dt = struct.unpack("<Qd", data[4:20])
    if len(data) != 20 + 8 * n:
        raise MissingArtifactError(f"{path}: truncated amplitude series")
    a = np.frombuffer(data[20:], dtype="<f8").astype(float)
    return a, dt


@dataclass
class Context:
    cfg: ScenarioConfig
    out: Path
    force: bool = False

    def check_upstream(self, meta: Dict[str, Any], name: str) -> None:
        got = meta.get("config_hash")
        if got != self.cfg.hash and not self.force:
            raise MissingArtifactError(
                f"{name} was produced with config hash {got}, current is {self.cfg.hash}; rerun it or pass --force"
            )


# ---------------------------------------------------------------------------
# problem construction


def _grid(cfg: ScenarioConfig) -> sp.RadialGrid:
    return sp.RadialGrid(cfg.grid.r_max, cfg.grid.n)


def _potential(cfg: ScenarioConfig, grid: sp.RadialGrid, depth: Optional[float] = None) -> sp.Potential:
    p = cfg.potential
    if p.kind == "tabulated":
        return sp.Potential(p.kind, 0.0, p.width, (np.array(p.samples[0]), np.array(p.samples[1])))
    if depth is not None:
        return sp.Potential(p.kind, depth, p.width)
    if p.depth is not None:
        return sp.Potential(p.kind, p.depth, p.width)
    return sp.tune_potential_depth(p.kind, p.width, cfg.physics.mass, p.band, grid)


def _problem(ctx: Context, spec_meta: Optional[Dict[str, Any]] = None):
    """Operator and bound state, reusing the tuned depth of a previous spectrum run."""
    cfg = ctx.cfg
    grid = _grid(cfg)
    depth = spec_meta.get("depth") if spec_meta else None
    pot = _potential(cfg, grid, depth)
    op = sp.build_operator(pot, grid, cfg.physics.mass)
    bs = sp.compute_bound_state(op)
    return pot, op, bs


def _spectral_meta(ctx: Context) -> Dict[str, Any]:
    meta = read_json(ctx.out / "spectrum.json")
    ctx.check_upstream(meta, "spectrum.json")
    return meta


# ---------------------------------------------------------------------------
# stages


def cmd_spectrum(ctx: Context) -> Dict[str, Any]:
    cfg = ctx.cfg
    pot, op, bs = _problem(ctx)
    data = sp.compute_spectral_data(op, bs, cfg.physics.coupling, cfg.spectral.ladder)
    rel = abs(data.gamma - data.gamma_b) / max(data.gamma, data.gamma_b)
    if rel > cfg.spectral.max_disagreement:
        raise NumericalError(f"Gamma estimates disagree by {rel:.2%}")
    out = data.to_json()
    out.update(
        config_hash=cfg.hash,
        depth=pot.depth,
        kind=str(pot.kind.value),
        width=pot.width,
        r_max=cfg.grid.r_max,
        n=cfg.grid.n,
        gamma_rel_disagreement=rel,
        level_spacing=sp.level_spacing(op, 3.0 * bs.omega),
        ladder=list(cfg.spectral.ladder),
    )
    write_json(ctx.out / "spectrum.json", out)
    return out


def _envelope_params(ctx: Context, meta: Dict[str, Any], strict: Optional[bool] = None, **extra):
    cfg = ctx.cfg
    e = cfg.envelope
    data = sp.SpectralData.from_json(meta)
    rm = env.RemainderModel(e.remainder, e.remainder_delta, e.remainder_amplitude)
    over = dict(extra)
    if e.omega is not None and "omega" not in over:
        over["omega"] = e.omega
    par = env.derive_params(
        data, cfg.physics.delta0, rm, e.m_coefficients,
        cfg.physics.strict if strict is None else strict, **over,
    )
    return par.damping_only() if e.damping_only else par


def envelope_summary(traj: env.EnvelopeTrajectory, fit_window) -> Dict[str, Any]:
    par = traj.params
    try:
        fit: Any = env.fit_decay_exponent(traj, fit_window)
    except WindowTooShortError:
        fit = "window_too_short"
    bounds = env.check_decay_bounds(traj)
    eps = env.epsilon_series(traj)
    drift = env.theta_drift_check(traj)
    boot = env.monitor_bootstrap_integrals(traj)
    tp = np.linspace(0.0, traj.t[-1], 10_000)
    pres = env.parametrix_derivative(tp, traj.rho0, par) + par.damping * env.parametrix(tp, traj.rho0, par) ** 5
    sqd = math.sqrt(par.delta0)
    return {
        "omega": par.omega,
        "gamma": par.gamma,
        "coupling": par.coupling,
        "kappa": par.kappa_coeff * traj.rho0**4,
        "rho0": traj.rho0,
        "t_end": float(traj.t[-1]),
        "fit_exponent": fit,
        "fit_window": list(fit_window),
        "bounds_ok": bounds.ok,
        "bounds_first_violation": bounds.first_violation,
        "tight_bounds_ok": bounds.tight_ok,
        "ratio_min": bounds.min_ratio,
        "ratio_max": bounds.max_ratio,
        "sup_epsilon": eps.sup_abs,
        "epsilon_ok": eps.sup_abs <= 3.0 * sqd,
        "epsilon_equation_residual": eps.max_residual,
        "parametrix_residual": float(np.max(np.abs(pres))),
        "bootstrap_ok": boot.ok,
        "bootstrap_margin": boot.margin,
        "bootstrap_identity_residual": boot.identity_residual,
        "sup_theta_dev": drift.sup_dev,
        "theta_dev_ok": drift.ok,
        "drift_C": drift.drift_c,
        "drift_exponent": drift.drift_exponent,
        "theta_second_ok": drift.second_ok,
        "theta_second_max_ratio": drift.max_second_ratio,
        "damping_only": not par.oscillatory,
        "steps": traj.steps,
        "rejected": traj.rejected,
    }


def cmd_envelope(ctx: Context) -> Dict[str, Any]:
    cfg = ctx.cfg
    meta = _spectral_meta(ctx)
    par = _envelope_params(ctx, meta)
    e = cfg.envelope
    traj = env.integrate(par, cfg.init.rho0, cfg.init.theta0, e.t_end, e.rtol, per_decade=e.per_decade)
    header, cols = env.trajectory_table(traj)
    write_csv(ctx.out / "envelope.csv", header, cols)
    out = envelope_summary(traj, e.fit_window)
    out.update(config_hash=cfg.hash, m_coefficients=e.m_coefficients, remainder=e.remainder)
    write_json(ctx.out / "envelope.json", out)
    return out


def _eta0(cfg: ScenarioConfig, bs: sp.BoundState):
    if cfg.init.eta0_kind == "zero":
        return None, None
    g = bs.grid
    center = min(10.0, 0.05 * g.r_max)
    u, ut = fd.wave_packet(g, center, 2.0, 1.0, math.sqrt(1.0 + cfg.physics.mass**2))
    amp = cfg.init.eta0_amplitude
    return amp * sp.apply_pc(bs, u), amp * sp.apply_pc(bs, ut)


def _tail_time(cfg: ScenarioConfig, t_clean: float) -> float:
    sc_ = cfg.scattering
    if sc_.t_tail is not None:
        t = sc_.t_tail
    else:
        t = math.floor(max(t_clean, 0.0) / sc_.checkpoint_dt) * sc_.checkpoint_dt
    return min(t, cfg.field.t_end)


def _checkpoint_times(cfg: ScenarioConfig, t_tail: float) -> np.ndarray:
    """Uniform checkpoints up to t_tail, then logarithmic ones up to t_end."""
    f = cfg.field
    uni = np.arange(0.0, t_tail + 1e-9, cfg.scattering.checkpoint_dt)
    lo = max(t_tail, cfg.scattering.checkpoint_dt)
    log = np.geomspace(lo, f.t_end, 9) if f.t_end > lo else np.array([])
    ts = np.concatenate([uni, np.round(log / f.dt) * f.dt, [f.t_end]])
    return np.unique(np.round(ts, 9))


def _ck_name(t: float) -> str:
    return f"t_{t:013.6f}.mkg1"


def cmd_field(ctx: Context) -> Dict[str, Any]:
    cfg = ctx.cfg
    f = cfg.field
    meta = _spectral_meta(ctx)
    pot, op, bs = _problem(ctx, meta)
    fcfg = fd.FieldConfig.from_operator(
        op, cfg.physics.coupling, dt=f.dt, t_end=f.t_end, sponge_fraction=f.sponge_fraction,
        sponge_strength=f.sponge_strength, sample_dt=f.sample_dt,
    )
    reflection = None
    if fcfg.has_sponge:
        k = math.sqrt(max((3.0 * bs.omega) ** 2 - cfg.physics.mass**2, 1e-6))
        reflection = fd.reflection_monitor(fcfg, k)
        if reflection > f.reflection_threshold:
            raise NumericalError(
                f"sponge misconfiguration: reflection {reflection:.3g} exceeds {f.reflection_threshold:g}"
            )
    t_clean = fd.clean_time(fcfg, bs)
    t_tail = _tail_time(cfg, t_clean)
    cks = _checkpoint_times(cfg, t_tail)
    eta0, eta0_t = _eta0(cfg, bs)
    init = fd.init_field(bs, cfg.init.rho0, cfg.init.theta0, eta0, eta0_t)
    observers = []
    if t_tail > 0:
        modes = sc.active_modes(op, bs)
        obs = sc.Eta3Observer(op, bs, cfg.physics.coupling, f.dt, t_tail, modes)
        observers.append(obs)
    traj = fd.run(fcfg, bs, init, checkpoint_times=cks, observers=observers, overlap=True)

    fdir = ctx.out / "field"
    ckdir = fdir / "checkpoints"
    ckdir.mkdir(parents=True, exist_ok=True)
    for old in ckdir.glob("*.mkg1"):
        old.unlink()
    header, cols = traj.table()
    write_csv(fdir / "series.csv", header, cols)
    write_a_steps(fdir / "a_steps.bin", traj.a_steps, f.dt)
    listing = []
    orth = recon = 0.0
    for t, st in sorted(traj.checkpoints.items()):
        name = _ck_name(t)
        fd.write_checkpoint(ckdir / name, st)
        listing.append({"t": t, "file": f"checkpoints/{name}"})
        d = fd.decompose(st, bs)
        orth = max(orth, abs(bs.grid.inner(bs.psi, d.eta)))
        recon = max(recon, float(np.max(np.abs(d.a * bs.psi + d.eta - st.u))))
    if observers:
        observers[0].record().save(fdir / "eta3.npz")

    # envelope ODE sampled at the field times, with the bound-state frequency of this grid
    par = _envelope_params(ctx, meta, strict=False, omega=bs.omega)
    etraj = env.integrate(par, cfg.init.rho0, cfg.init.theta0, float(traj.t[-1]), 1e-10, times=traj.t)
    agreement = fd.envelope_agreement(traj, etraj.t, etraj.rho)
    amp_res = fd.amplitude_equation_residual(traj)
    l8_sup, l8_slope = fd.l8_decay_constant(traj)
    out = {
        "config_hash": cfg.hash,
        "dt": f.dt,
        "t_end": f.t_end,
        "omega": bs.omega,
        "coupling": cfg.physics.coupling,
        "energy_drift": traj.energy_drift(modified=True),
        "energy_drift_standard": traj.energy_drift(modified=False),
        "energy_drift_clean": traj.energy_drift(t_max=t_clean, modified=True),
        "envelope_agreement": agreement,
        "envelope_agreement_ok": agreement <= 0.15,
        "amplitude_relation_residual": float(np.max(np.abs(amp_res))),
        "amplitude_relation_scale": f.dt**2 * bs.omega**4 * float(np.max(np.abs(traj.a))) / 12.0,
        "l8_constant": l8_sup,
        "l8_slope_last_decade": l8_slope,
        "reflection": reflection,
        "clean_time": t_clean,
        "t_tail": t_tail,
        "max_orthogonality": orth,
        "max_reconstruction": recon,
        "checkpoints": listing,
        "eta3_record": "eta3.npz" if observers else None,
        "rho_final": float(traj.rho[-1]),
    }
    write_json(fdir / "field.json", out)
    return out


def _load_field(ctx: Context):
    fdir = ctx.out / "field"
    meta = read_json(fdir / "field.json")
    ctx.check_upstream(meta, "field/field.json")
    states = {}
    for item in meta["checkpoints"]:
        p = fdir / item["file"]
        if not p.is_file():
            raise MissingArtifactError(f"missing field checkpoint {p}")
        states[float(item["t"])] = fd.read_checkpoint(p)
    if not states:
        raise MissingArtifactError(f"no field checkpoints in {fdir}")
    return meta, states


def cmd_scatter(ctx: Context) -> Dict[str, Any]:
    cfg = ctx.cfg
    s = cfg.scattering
    fdir = ctx.out / "field"
    fmeta, states = _load_field(ctx)
    t_tail = float(fmeta["t_tail"])
    if t_tail <= 0 or fmeta.get("eta3_record") is None:
        raise WindowTooShortError("field run has no clean window for the scattering profiles")
    smeta = _spectral_meta(ctx)
    pot, op, bs = _problem(ctx, smeta)
    a_steps, dt = read_a_steps(fdir / "a_steps.bin")
    rec = sc.RemainderRecord.load(fdir / fmeta["eta3_record"])
    series = read_csv(fdir / "series.csv")
    lam = cfg.physics.coupling
    src = sc.make_source(op, bs, a_steps[: int(round(t_tail / dt)) + 1], dt, lam, modes=rec.modes, delta0=cfg.physics.delta0)
    tail_env = sc.EnvelopeTail.from_series(series["t"], series["rho"], series["theta"], t_tail)
    if 0.0 not in states:
        raise MissingArtifactError("field checkpoints lack the initial state")
    p_free = sc.free_profiles(op, bs, states[0.0], s.kernel, dt)
    p_tail = sc.tail_profiles(src, op, bs, t_tail, envelope=tail_env, kernel=s.kernel, tail_tol=s.tail_tolerance, coupling=lam)
    p_rem = sc.remainder_profiles(op, bs, rec, s.kernel)
    prof = sc.combine_profiles(op, bs, p_free, p_tail, p_rem)

    window = {t: st for t, st in states.items() if t <= t_tail + 1e-9}
    res = sc.scattering_residual(window, prof, op, bs)
    w_ck = sc.evolve_w(src, res.t)
    v_series = sc.evolve_v(rec)
    ltilde = dict(zip(np.round(v_series.times, 9), v_series.l))
    lt = np.array([ltilde.get(round(float(t), 9), np.nan) for t in res.t])

    l_times = np.arange(0.0, t_tail + 1e-9, s.l_dt)
    w = sc.evolve_w(src, l_times)
    lrep = sc.track_l(w, src)
    sdir = ctx.out / "scatter"
    sdir.mkdir(parents=True, exist_ok=True)
    sc.write_profiles(sdir / "profiles.mkgp", prof)
    write_csv(
        sdir / "residual.csv", ["t", "residual_h1", "residual_l2", "l_t", "l_tilde_t"],
        np.column_stack([res.t, res.residual_h1, res.residual_l2, w_ck.l, lt]),
    )
    pad = np.full(1, np.nan)
    write_csv(
        sdir / "l_series.csv", ["t", "l", "dl_fd", "dl_identity", "residual"],
        np.column_stack([
            lrep.times, lrep.l,
            np.concatenate([pad, lrep.dl_fd, pad]),
            np.concatenate([pad, lrep.dl_identity, pad]),
            np.concatenate([pad, lrep.residual, pad]),
        ]),
    )
    rel = res.relative
    decreasing = sc.eventually_decreasing(res.t[1:], res.residual_h1[1:]) if res.t.size > 3 else False
    o1, o2 = prof.orthogonality(bs)
    out = {
        "config_hash": cfg.hash,
        "kernel": s.kernel,
        "t_tail": t_tail,
        "active_modes": int(rec.modes.size),
        "sup_l": lrep.sup_l,
        "l_identity_residual": lrep.max_residual,
        "sup_l_tilde": float(np.nanmax(lt)) if np.isfinite(lt).any() else None,
        "final_residual_h1": float(res.residual_h1[-1]),
        "final_eta_h1": float(res.eta_h1[-1]),
        "final_relative": float(rel[-1]),
        "tail_bound_h1": prof.tail_bound_h1,
        "tail_bound_scalar_h1": p_tail.tail_bound_h1,
        "tail_bound_remainder_h1": p_rem.tail_bound_h1,
        "residual_decreasing": decreasing,
        "scattering_ok": bool(decreasing and rel[-1] < 0.1),
        "profile_orthogonality": max(o1, o2),
        "profile_norms": prof.norms(op.mu),
        "envelope_tail": {"rho": tail_env.rho, "theta": tail_env.theta, "omega_eff": tail_env.omega_eff},
    }
    write_json(sdir / "scatter.json", out)
    return out


def cmd_backward(ctx: Context) -> Dict[str, Any]:
    cfg = ctx.cfg
    b = cfg.backward
    smeta = _spectral_meta(ctx)
    pot, op, bs = _problem(ctx, smeta)
    grid = bs.grid
    if b.profiles == "scatter":
        smeta2 = read_json(ctx.out / "scatter" / "scatter.json")
        ctx.check_upstream(smeta2, "scatter/scatter.json")
        p = ctx.out / "scatter" / "profiles.mkgp"
        if not p.is_file():
            raise MissingArtifactError(f"missing upstream artifact {p}")
        s1, s2 = sc.read_profiles(p)
        if s1.size != grid.n:
            raise MissingArtifactError("stored profiles do not match the scenario grid")
        prof = sc.profiles_from_arrays(op, bs, s1, s2, cfg.scattering.kernel, cfg.field.dt)
        tail = float(smeta2.get("tail_bound_h1") or 0.0)
        rho_inf = cfg.init.rho0 if b.rho_inf is None else b.rho_inf
    else:
        z = np.zeros(grid.n)
        prof = sc.profiles_from_arrays(op, bs, z, z, cfg.scattering.kernel, cfg.field.dt)
        tail = 0.0
        rho_inf = 0.0 if b.rho_inf is None else b.rho_inf
    theta_inf = cfg.init.theta0 if b.theta_inf is None else b.theta_inf
    params = sc.BackwardParams(cfg.physics.mass, cfg.physics.coupling, pot, b.dt, b.smallness)
    res = sc.solve_backward(prof, grid, rho_inf, theta_inf, b.t_start, params)
    bdir = ctx.out / "backward"
    bdir.mkdir(parents=True, exist_ok=True)
    fd.write_checkpoint(bdir / "initial.mkg1", fd.FieldState(0.0, res.u0, res.u1))
    rt = sc.round_trip(res, params)
    tol = b.dt**2 + tail
    out = {
        "config_hash": cfg.hash,
        "profiles": b.profiles,
        "t_start": b.t_start,
        "rho_inf": rho_inf,
        "theta_inf": theta_inf,
        "rho_T": res.rho_T,
        "theta_T": res.theta_T,
        "omega": res.omega,
        "grid_r_max": res.grid.r_max,
        "grid_n": res.grid.n,
        "u0_l2": res.grid.norm(res.u0),
        "u1_l2": res.grid.norm(res.u1),
        "rho_mismatch": rt.rho_mismatch,
        "theta_mismatch": rt.theta_mismatch,
        "eta_mismatch": rt.eta_mismatch,
        "eta_norm": rt.eta_norm,
        "tolerance": tol,
        "round_trip_ok": max(rt.rho_mismatch, rt.eta_mismatch) <= tol and rt.theta_mismatch <= tol,
    }
    write_json(bdir / "backward.json", out)
    return out


def cmd_plots(ctx: Context) -> Dict[str, Any]:
    paths = emit_plots(ctx.out)
    return {"scripts": [p.name for p in paths]}


# ---------------------------------------------------------------------------
# report


def _versions() -> Dict[str, str]:
    import numba
    import scipy

    return {
        "metakg": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def write_report(ctx: Context) -> Dict[str, Any]:
    """Collect every stage summary; absent or stale stages are marked skipped."""
    files = {
        "spectral": ctx.out / "spectrum.json",
        "envelope": ctx.out / "envelope.json",
        "field": ctx.out / "field" / "field.json",
        "scattering": ctx.out / "scatter" / "scatter.json",
        "backward": ctx.out / "backward" / "backward.json",
    }
    rep: Dict[str, Any] = {}
    for name, p in files.items():
        if p.is_file():
            d = json.loads(p.read_text())
            if d.get("config_hash") == ctx.cfg.hash:
                d.pop("checkpoints", None)
                rep[name] = d
                continue
            rep[name] = {"skipped": True, "reason": "config hash mismatch"}
        else:
            rep[name] = {"skipped": True, "reason": "not run"}
    rep["provenance"] = {
        "config_hash": ctx.cfg.hash,
        "scenario": ctx.cfg.name,
        "seed": ctx.cfg.seed,
        "versions": _versions(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    write_json(ctx.out / "report.json", rep)
    return rep


STAGES = {
    "spectrum": cmd_spectrum,
    "envelope": cmd_envelope,
    "field": cmd_field,
    "scatter": cmd_scatter,
    "backward": cmd_backward,
    "plots": cmd_plots,
}
PIPELINE = ("spectrum", "envelope", "field", "scatter", "backward", "plots")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metakg", description=__doc__)
    ap.add_argument("command", choices=list(STAGES) + ["all"])
    ap.add_argument("--config", default="default", help="scenario TOML file or shipped scenario name")
    ap.add_argument("--out", default="run", help="artifact directory")
    ap.add_argument("--force", action="store_true", help="accept upstream artifacts with another config hash")
    ap.add_argument("--threads", type=int, default=None, help="numba thread count")
    return ap


def run_command(command: str, config, out, force: bool = False) -> Dict[str, Any]:
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    ctx = Context(cfg, Path(out), force)
    ctx.out.mkdir(parents=True, exist_ok=True)
    names = PIPELINE if command == "all" else (command,)
    results = {}
    try:
        for name in names:
            results[name] = STAGES[name](ctx)
    finally:
        write_report(ctx)
    return results


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        import numba

        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        run_command(args.command, args.config, args.out, args.force)
    except MetaKGError as exc:
        print(f"metakg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
