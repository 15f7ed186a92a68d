import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metakg import field as fd
from metakg import spectral as sp
from metakg.errors import GridMismatchError, InputError, NumericalError


@pytest.fixture(scope="module")
def well():
    """Gaussian well V0 = 3, sigma = 1.5, m = 1 on r_max = 40, n = 800 (Omega about 0.737)."""
    grid = sp.RadialGrid(40.0, 800)
    op = sp.build_operator(sp.Potential("gaussian_well", 3.0, 1.5), grid, 1.0)
    return op, sp.compute_bound_state(op)


def config(op, coupling=0.0, **kw):
    kw.setdefault("sponge_fraction", 0.0)
    return fd.FieldConfig.from_operator(op, coupling, **kw)


# ---------------------------------------------------------------- initial data


def test_init_vacuum(well):
    _, bs = well
    s = fd.init_field(bs, 0.0, 0.0)
    assert not s.u.any() and not s.ut.any()


def test_init_examples(well):
    _, bs = well
    d = fd.decompose(fd.init_field(bs, 0.005, 0.0), bs)
    assert d.a == pytest.approx(0.01, rel=1e-13) and d.a_t == 0.0
    d = fd.decompose(fd.init_field(bs, 0.005, math.pi / 2), bs)
    assert d.a == pytest.approx(0.0, abs=1e-17)
    assert d.a_t == pytest.approx(-2 * bs.omega * 0.005, rel=1e-13)


def test_init_rejects_unprojected(well, rng):
    _, bs = well
    with pytest.raises(InputError):
        fd.init_field(bs, 0.0, 0.0, rng.standard_normal(bs.grid.n))
    eta = sp.apply_pc(bs, rng.standard_normal(bs.grid.n))
    fd.init_field(bs, 0.0, 0.0, eta)
    with pytest.raises(GridMismatchError):
        fd.init_field(bs, 0.0, 0.0, np.zeros(3))


def test_extract_envelope_examples():
    assert fd.extract_envelope(2.0, 0.0, 1.0) == (1.0, 0.0)
    rho, th = fd.extract_envelope(0.0, -2.0, 1.0)
    assert rho == 1.0 and th == pytest.approx(math.pi / 2, abs=1e-15)
    with pytest.raises(InputError):
        fd.extract_envelope(1.0, 0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 10.0), st.floats(-3.1, 3.1), st.floats(0.05, 5.0))
def test_envelope_round_trip(rho0, theta0, omega):
    a = 2 * rho0 * math.cos(theta0)
    at = -2 * omega * rho0 * math.sin(theta0)
    rho, th = fd.extract_envelope(a, at, omega)
    assert rho == pytest.approx(rho0, rel=1e-13)
    assert th == pytest.approx(theta0, abs=1e-12)


# ---------------------------------------------------------------- decomposition


def test_decompose_examples(well, rng):
    op, bs = well
    d = fd.decompose(fd.FieldState(0.0, 3 * bs.psi, np.zeros_like(bs.psi)), bs)
    assert d.a == pytest.approx(3.0, rel=1e-13)
    assert np.max(np.abs(d.eta)) < 1e-13
    f = sp.apply_pc(bs, rng.standard_normal(bs.grid.n))
    d = fd.decompose(fd.FieldState(0.0, f, f), bs)
    assert abs(d.a) < 1e-12 and np.allclose(d.eta, f, atol=1e-12)
    u, ut = rng.standard_normal((2, bs.grid.n))
    d = fd.decompose(fd.FieldState(0.0, u, ut), bs)
    g = bs.grid
    assert np.max(np.abs(d.a * bs.psi + d.eta - u)) < 1e-12
    assert abs(g.inner(bs.psi, d.eta)) < 1e-12 * g.norm(u)
    assert abs(g.inner(bs.psi, d.eta_t)) < 1e-12 * g.norm(ut)
    with pytest.raises(GridMismatchError):
        fd.decompose(fd.FieldState(0.0, u[:-1], ut[:-1]), bs)


# ---------------------------------------------------------------- stepping


def test_cfl_violation(well):
    op, bs = well
    with pytest.raises(InputError):
        config(op, dt=0.05)
    cfg = config(op, dt=0.02)
    with pytest.raises(InputError):
        fd.step(fd.init_field(bs, 0.01, 0.0), 0.9, cfg)


def test_non_finite_state_rejected(well):
    _, bs = well
    u = bs.psi.copy()
    u[5] = np.nan
    with pytest.raises(NumericalError):
        fd.FieldState(0.0, u, bs.psi)


def test_blow_up_guard(well):
    op, bs = well
    cfg = config(op, coupling=50.0, dt=0.02, t_end=50.0)
    with pytest.raises(NumericalError):
        fd.run(cfg, bs, fd.init_field(bs, 3.0, 0.0))


def test_linear_eigenmode_period(well):
    op, bs = well
    cfg = config(op, dt=0.02)
    period = 2 * math.pi / bs.omega
    s = fd.evolve(cfg, fd.FieldState(0.0, bs.psi, np.zeros_like(bs.psi)), period, dt=period / round(period / 0.02))
    assert abs(fd.decompose(s, bs).a - 1.0) <= 1e-4


def test_discrete_dispersion_is_second_order(well):
    # a single eigenmode oscillates at its own frequency up to O(dt^2)
    op, bs = well
    k = 40
    phi = op.mode(k)
    mu = op.mu[k]
    g = op.grid
    errs = []
    for dt in (0.02, 0.01):
        cfg = config(op, dt=dt)
        s = fd.evolve(cfg, fd.FieldState(0.0, phi, np.zeros_like(phi)), 20.0)
        errs.append(abs(g.inner(phi, s.u) - math.cos(mu * 20.0)))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_self_convergence(well):
    # the dt/8 run is the reference; halving dt cuts the error about 4x
    op, bs = well
    init = fd.init_field(bs, 0.2, 0.3)
    cfg = config(op, coupling=1.0, dt=0.02)
    ref = fd.evolve(cfg, init, 20.0, dt=0.0025)
    e1 = op.grid.norm(fd.evolve(cfg, init, 20.0, dt=0.02).u - ref.u)
    e2 = op.grid.norm(fd.evolve(cfg, init, 20.0, dt=0.01).u - ref.u)
    assert 3.0 < e1 / e2 < 5.0


def test_time_reversibility(well, rng):
    op, bs = well
    cfg = config(op, coupling=1.0, dt=0.02)
    eta = sp.apply_pc(bs, 0.01 * np.exp(-((op.grid.r - 5.0) ** 2)))
    init = fd.init_field(bs, 0.1, 0.4, eta)
    fwd = fd.evolve(cfg, init, 10.0)
    back = fd.evolve(cfg, fwd, -10.0)
    scale = op.grid.norm(init.u)
    assert op.grid.norm(back.u - init.u) <= 1e-10 * scale
    assert op.grid.norm(back.ut - init.ut) <= 1e-10 * scale
    s = fd.step(fd.step(init, 0.02, cfg), -0.02, cfg)
    assert np.max(np.abs(s.u - init.u)) < 1e-14


def test_backward_needs_sponge_off(well):
    op, bs = well
    cfg = config(op, dt=0.02, sponge_fraction=0.1)
    with pytest.raises(InputError):
        fd.evolve(cfg, fd.init_field(bs, 0.01, 0.0), -1.0)


# ---------------------------------------------------------------- energy


def test_energy_examples(well):
    op, bs = well
    cfg = config(op, dt=0.02)
    z = np.zeros_like(bs.psi)
    assert fd.energy(fd.FieldState(0.0, z, z), cfg) == 0.0
    assert fd.energy(fd.FieldState(0.0, bs.psi, z), cfg) == pytest.approx(0.5 * bs.omega**2, rel=1e-12)
    # kinetic part alone: unit velocity along psi
    assert fd.energy(fd.FieldState(0.0, z, bs.psi), cfg) == pytest.approx(0.5, rel=1e-12)


def test_quartic_energy_term(well):
    op, bs = well
    cfg = config(op, coupling=2.0, dt=0.02)
    z = np.zeros_like(bs.psi)
    e = fd.energy(fd.FieldState(0.0, bs.psi, z), cfg)
    q4 = float(np.sum(op.grid.weights * bs.psi**4))
    assert e == pytest.approx(0.5 * bs.omega**2 - 0.5 * q4, rel=1e-12)


def test_energy_conservation_nonlinear(well):
    op, bs = well
    cfg = config(op, coupling=1.0, dt=0.02, t_end=100.0, sample_dt=0.5)
    tr = fd.run(cfg, bs, fd.init_field(bs, 0.1, 0.0))
    assert tr.energy_drift(modified=True) < 1e-5
    # unmodified energy carries the O(dt^2) kinetic mismatch but stays bounded
    assert tr.energy_drift(modified=False) < 1e-3


def test_standard_energy_error_is_second_order(well):
    op, bs = well
    drifts = []
    for dt in (0.02, 0.01):
        cfg = config(op, coupling=1.0, dt=dt, t_end=30.0, sample_dt=0.1)
        drifts.append(fd.run(cfg, bs, fd.init_field(bs, 0.1, 0.0)).energy_drift(modified=False))
    assert 3.0 < drifts[0] / drifts[1] < 5.0


def test_sponge_energy_monotone(well):
    op, bs = well
    cfg = config(op, dt=0.02, t_end=60.0, sample_dt=0.5, sponge_fraction=0.25, sponge_strength=2.0)
    u, ut = fd.wave_packet(op.grid, 15.0, 1.5, 2.0, math.sqrt(5.0))
    tr = fd.run(cfg, bs, fd.FieldState(0.0, u, ut))
    de = np.diff(tr.energy_modified)
    assert np.all(de <= 1e-12 * tr.energy_modified[0])
    assert tr.energy_modified[-1] < 0.5 * tr.energy_modified[0]


# ---------------------------------------------------------------- runs


def test_linear_bound_state_envelope_constant(well):
    op, bs = well
    periods = 1000 * 2 * math.pi / bs.omega
    cfg = config(op, dt=0.02, t_end=periods, sample_dt=5.0)
    tr = fd.run(cfg, bs, fd.init_field(bs, 0.005, 0.0))
    assert np.max(np.abs(tr.rho / 0.005 - 1.0)) < 1e-4
    assert np.max(tr.eta_l2) < 1e-12


def test_amplitude_relation_exact(well):
    op, bs = well
    cfg = config(op, coupling=1.0, dt=0.02, t_end=50.0)
    tr = fd.run(cfg, bs, fd.init_field(bs, 0.1, 0.0), overlap=True)
    res = fd.amplitude_equation_residual(tr)
    scale = np.max(np.abs(tr.coupling_overlap))
    assert np.max(np.abs(res)) <= 1e-9 * max(scale, bs.omega**2 * 0.2)
    tr2 = fd.run(cfg, bs, fd.init_field(bs, 0.1, 0.0))
    with pytest.raises(InputError):
        fd.amplitude_equation_residual(tr2)


def test_run_checkpoints_and_step_series(well):
    op, bs = well
    cfg = config(op, coupling=1.0, dt=0.02, t_end=4.0, sample_dt=0.5)
    init = fd.init_field(bs, 0.05, 0.0)
    tr = fd.run(cfg, bs, init, checkpoint_times=[1.0, 2.5, 99.0])
    assert sorted(tr.checkpoints) == [1.0, 2.5]
    ref = fd.evolve(cfg, init, 2.5)
    assert np.allclose(tr.checkpoints[2.5].u, ref.u, rtol=0, atol=1e-15)
    assert tr.a_steps.size == cfg.n_steps + 1
    assert tr.a_steps[125] == pytest.approx(op.grid.inner(bs.psi, ref.u), abs=1e-15)
    header, cols = tr.table()
    assert header[0] == "t" and cols.shape == (tr.t.size, 8)
    assert np.allclose(tr.t, np.arange(9) * 0.5)


def test_diagnostic_helpers(well):
    op, bs = well
    cfg = config(op, dt=0.02, t_end=1.0)
    tr = fd.run(cfg, bs, fd.init_field(bs, 0.005, 0.0))
    assert fd.envelope_agreement(tr, tr.t, tr.rho) == 0.0
    assert fd.envelope_agreement(tr, tr.t, 2 * tr.rho) == pytest.approx(0.5)
    const, slope = fd.l8_decay_constant(tr, t_min=0.0)
    assert const == pytest.approx(np.max((1 + tr.t) ** 0.75 * tr.eta_l8))


def test_clean_time(well):
    op, bs = well
    cfg = config(op, dt=0.02, sponge_fraction=0.1)
    r_s = fd._support_radius(bs, 1e-14)
    assert fd.clean_time(cfg, bs) == pytest.approx(36.0 - r_s)
    assert fd.clean_time(config(op, dt=0.02), bs) == pytest.approx(80.0 - 2 * r_s)


def test_reflection_monitor_sees_the_sponge(well):
    op, _ = well
    k = 2.0
    hard = fd.reflection_monitor(config(op, dt=0.02), k)
    soft = fd.reflection_monitor(config(op, dt=0.02, sponge_fraction=0.3, sponge_strength=2.0), k)
    assert hard > 0.1
    assert soft < 0.05 * hard


# ---------------------------------------------------------------- checkpoint files


def test_checkpoint_round_trip(tmp_path, rng):
    u, ut = rng.standard_normal((2, 17))
    s = fd.FieldState(12.5, u, ut)
    p = tmp_path / "t.mkg1"
    fd.write_checkpoint(p, s)
    data = p.read_bytes()
    assert data[:4] == b"MKG1" and len(data) == 4 + 16 + 2 * 17 * 8
    back = fd.read_checkpoint(p)
    assert back.t == 12.5
    assert np.array_equal(back.u, u) and np.array_equal(back.ut, ut)


def test_checkpoint_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.mkg1"
    p.write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(InputError):
        fd.read_checkpoint(p)
    s = fd.FieldState(0.0, np.ones(4), np.ones(4))
    fd.write_checkpoint(p, s)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(InputError):
        fd.read_checkpoint(p)
