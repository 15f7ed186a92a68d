import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from metakg import spectral as sp
from metakg.errors import (
    BoundStateError,
    GridMismatchError,
    InputError,
    NoResonanceError,
    ResolutionError,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def dense_lowest(pot, r_max, n, mass, k=2):
    """Lowest eigenvalues of the finite-difference matrix, assembled and solved densely."""
    dr = r_max / (n + 1)
    r = dr * np.arange(1, n + 1)
    h = np.diag(2.0 / dr**2 + pot(r) + mass**2)
    off = -np.ones(n - 1) / dr**2
    h += np.diag(off, 1) + np.diag(off, -1)
    return np.linalg.eigvalsh(h)[:k]


# ---------------------------------------------------------------- grid


def test_grid_quadrature_of_one():
    g = sp.RadialGrid(50.0, 400)
    vol = g.integrate(lambda r: np.ones_like(r))
    assert vol == pytest.approx(4.0 / 3.0 * math.pi * 50.0**3, rel=1e-8)
    assert np.all(g.weights > 0)
    assert g.dr == pytest.approx(50.0 / 401)


@pytest.mark.parametrize("r_max,n", [(0.0, 100), (10.0, 15), (float("inf"), 100)])
def test_grid_rejects_bad_input(r_max, n):
    with pytest.raises(InputError):
        sp.RadialGrid(r_max, n)


def test_isometry_of_mode_transform(small):
    c = small.op.to_modes(small.bs.psi)
    assert np.linalg.norm(c) == pytest.approx(1.0, abs=1e-10)
    f = np.exp(-small.op.grid.r)
    assert np.linalg.norm(small.op.to_modes(f)) == pytest.approx(small.op.grid.norm(f), rel=1e-12)


# ---------------------------------------------------------------- operator


def test_free_operator_has_no_bound_state():
    g = sp.RadialGrid(40.0, 400)
    op = sp.build_operator(sp.Potential("gaussian_well", 0.0, 1.0), g, 1.0)
    assert op.eigenvalues[0] >= 1.0
    with pytest.raises(BoundStateError):
        sp.compute_bound_state(op)


def test_gaussian_well_against_dense_oracle(small):
    # oracle: dense eigensolve at twice the resolution
    ev = small.op.eigenvalues
    assert np.sum(ev < 1.0) == 1
    ref = dense_lowest(small.pot, 60.0, 2401, 1.0)
    assert ev[0] == pytest.approx(ref[0], rel=1e-4)
    assert ref[1] >= 1.0


def test_eigenvectors_orthonormal(small):
    q = small.op.eigvecs
    assert np.max(np.abs(q.T @ q - np.eye(q.shape[1]))) < 1e-10


def test_tabulated_potential_with_nan_rejected():
    g = sp.RadialGrid(10.0, 100)
    r = np.linspace(0, 10, 20)
    v = -np.exp(-r)
    v[3] = np.nan
    with pytest.raises(InputError):
        sp.build_operator(sp.Potential("tabulated", samples=(r, v)), g, 1.0)


def test_tabulated_matches_builtin():
    g = sp.RadialGrid(30.0, 300)
    r = np.linspace(0.0, 30.0, 30001)
    tab = sp.Potential("tabulated", samples=(r, -2.0 * np.exp(-r**2)))
    a = sp.build_operator(tab, g, 1.0).eigenvalues[0]
    b = sp.build_operator(sp.Potential("gaussian_well", 2.0, 1.0), g, 1.0).eigenvalues[0]
    assert a == pytest.approx(b, rel=1e-6)


def test_decay_condition_on_builtins():
    g = sp.RadialGrid(60.0, 600)
    for kind in ("gaussian_well", "sech2_well"):
        assert np.isfinite(sp.Potential(kind, 1.0, 2.0).decay_constant(g))
    slow = sp.Potential("tabulated", samples=(g.r, -1.0 / (1.0 + g.r**2)))
    with pytest.raises(InputError):
        slow.decay_constant(g)


# ---------------------------------------------------------------- bound state


def test_bound_state_invariants(small):
    bs = small.bs
    g = bs.grid
    assert g.norm(bs.psi) == pytest.approx(1.0, abs=1e-10)
    res = small.op.apply(bs.psi) - bs.omega**2 * bs.psi
    assert g.norm(res) <= 1e-8 * bs.omega**2
    assert bs.psi[np.argmax(np.abs(bs.psi))] > 0
    assert 0 < bs.omega < 1.0
    assert bs.psi4 == pytest.approx(float(np.sum(g.weights * bs.psi**4)), rel=1e-12)


def test_tuned_well_near_point_eight():
    g = sp.RadialGrid(60.0, 600)
    pot = sp.tune_potential_depth("gaussian_well", 2.0, 1.0, (0.79, 0.81), g)
    op = sp.build_operator(pot, g, 1.0)
    bs = sp.compute_bound_state(op)
    assert 0.79 < bs.omega < 0.81
    assert g.norm(op.apply(bs.psi) - bs.omega**2 * bs.psi) <= 1e-8 * bs.omega**2


def test_second_bound_state_rejected():
    # deepen by bisection until the dense oracle shows a second eigenvalue below m^2
    m = 3.0
    pot = lambda d: sp.Potential("gaussian_well", d, 2.0)
    lo, hi = 1.0, 1e3
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if dense_lowest(pot(mid), 40.0, 399, m)[1] < m**2:
            hi = mid
        else:
            lo = mid
    g = sp.RadialGrid(40.0, 399)
    op = sp.build_operator(pot(hi * 1.01), g, m)
    assert op.eigenvalues[0] > 0 and op.eigenvalues[1] < m**2
    with pytest.raises(BoundStateError):
        sp.compute_bound_state(op)
    assert sp.compute_bound_state(op, require_unique=False).omega < m
    ok = sp.build_operator(pot(lo * 0.99), g, m)
    assert sp.compute_bound_state(ok).omega < m


def test_tune_band_examples():
    g = sp.RadialGrid(60.0, 600)
    pot = sp.tune_potential_depth("gaussian_well", 2.0, 1.0, (0.5, 0.9), g)
    bs = sp.compute_bound_state(sp.build_operator(pot, g, 1.0))
    assert 0.5 < bs.omega < 0.9
    with pytest.raises(InputError):
        sp.tune_potential_depth("gaussian_well", 2.0, 1.0, (0.7, 0.6), g)
    with pytest.raises(InputError):
        sp.tune_potential_depth("gaussian_well", 2.0, 1.0, (0.7, 1.0), g)


def test_band_below_third_of_mass_has_no_resonance():
    g = sp.RadialGrid(60.0, 600)
    with pytest.raises(NoResonanceError, match="no resonance"):
        sp.tune_potential_depth("gaussian_well", 2.0, 1.0, (0.2, 0.3), g)


# ---------------------------------------------------------------- projection and calculus


def test_pc_kills_psi_and_fixes_range(small):
    bs = small.bs
    assert np.max(np.abs(sp.apply_pc(bs, bs.psi))) < 1e-13
    f = sp.apply_pc(bs, np.exp(-small.op.grid.r / 3))
    assert np.array_equal(sp.apply_pc(bs, f), f) or np.max(np.abs(sp.apply_pc(bs, f) - f)) < 1e-15


def test_pc_grid_mismatch(small):
    with pytest.raises(GridMismatchError):
        sp.apply_pc(small.bs, np.ones(7))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, 1200, elements=finite), arrays(np.float64, 1200, elements=finite))
def test_pc_properties(small, f, g):
    bs, grid = small.bs, small.op.grid
    pf = sp.apply_pc(bs, f)
    scale = max(1.0, grid.norm(f)) * max(1.0, grid.norm(g))
    assert abs(grid.inner(bs.psi, pf)) <= 1e-12 * max(1.0, grid.norm(f))
    assert np.allclose(sp.apply_pc(bs, pf), pf, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(f))))
    assert abs(grid.inner(pf, g) - grid.inner(f, sp.apply_pc(bs, g))) <= 1e-12 * scale


def test_functional_calculus_identities(small, rng):
    op = small.op
    f = rng.standard_normal(op.grid.n)
    assert np.allclose(sp.functional_calculus(op, lambda m: np.ones_like(m), f), f, atol=1e-12)
    assert np.allclose(sp.functional_calculus(op, lambda m: np.sin(0 * m) / m, f), 0.0)
    t = 3.7
    c2 = sp.functional_calculus(op, lambda m: np.cos(m * t) ** 2, f)
    s2 = sp.functional_calculus(op, lambda m: np.sin(m * t) ** 2, f)
    assert np.allclose(c2 + s2, f, atol=1e-11)
    g1 = sp.functional_calculus(op, lambda m: np.cos(m), sp.functional_calculus(op, lambda m: 1 / m, f))
    g12 = sp.functional_calculus(op, lambda m: np.cos(m) / m, f)
    assert np.allclose(g1, g12, atol=1e-11)


def test_functional_calculus_rejects_nonfinite(small):
    with pytest.raises(InputError), np.errstate(divide="ignore"):
        sp.functional_calculus(small.op, lambda m: 1.0 / (m - m[3]), np.ones(small.op.grid.n))


def test_functional_calculus_matches_matrix_function(small, rng):
    # independent route: scipy matrix cosine of the dense B^2 square root
    from scipy.linalg import eigh_tridiagonal

    g = sp.RadialGrid(10.0, 120)
    op = sp.build_operator(sp.Potential("gaussian_well", 2.0, 1.0), g, 1.0)
    f = rng.standard_normal(g.n) * np.exp(-g.r)
    w, q = eigh_tridiagonal(op.diag, op.offdiag)
    v = f * g.scale
    ref = (q @ (np.cos(0.7 * np.sqrt(w)) * (q.T @ v))) / g.scale
    assert np.allclose(sp.functional_calculus(op, lambda m: np.cos(0.7 * m), f), ref, atol=1e-12)


# ---------------------------------------------------------------- resonance constants


def test_carrier_orthogonal(default):
    c = sp.carrier(default.bs)
    assert abs(default.op.grid.inner(c, default.bs.psi)) < 1e-12


@pytest.mark.parametrize("name", ["narrow", "default"])
def test_gamma_methods_agree(name, request):
    spec = request.getfixturevalue(f"{name}_spec")
    assert spec.gamma > 0 and spec.gamma_b > 0
    assert abs(spec.gamma - spec.gamma_b) / spec.gamma_b < 0.01


def test_gamma_converges_at_second_order(narrow):
    # fixed potential, spacing halved twice; differences shrink by about 4
    vals = []
    for n in (1499, 2999, 5999):
        op = sp.build_operator(narrow.pot, sp.RadialGrid(30.0, n), 1.6)
        bs = sp.compute_bound_state(op)
        g = sp.compute_gamma(op, bs)
        assert g.relative_disagreement < 0.01
        vals.append(g.value)
    ratio = (vals[0] - vals[1]) / (vals[1] - vals[2])
    assert 3.5 < ratio < 4.5


def test_no_resonance_error():
    # depth chosen by bisection so that Omega^2 = 0.05 < m^2 / 9
    lo, hi = 1.0, 10.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if dense_lowest(sp.Potential("gaussian_well", mid, 2.0), 40.0, 399, 1.0, 1)[0] > 0.05:
            lo = mid
        else:
            hi = mid
    g = sp.RadialGrid(40.0, 399)
    op = sp.build_operator(sp.Potential("gaussian_well", lo, 2.0), g, 1.0)
    bs = sp.compute_bound_state(op, require_unique=False)
    assert 3 * bs.omega < 1.0
    with pytest.raises(NoResonanceError, match="no resonance"):
        sp.compute_gamma(op, bs)


def test_symmetric_toy_spectrum_has_zero_pv():
    z = 3.0
    d = np.linspace(0.01, 2.0, 400)
    mu = np.concatenate([z - d[::-1], z + d])
    w = np.concatenate([np.exp(-d[::-1]), np.exp(-d)])
    vals = sp.resolvent_sum(mu, w, z, [0.05, 0.1, 0.2])
    assert np.max(np.abs(vals.real)) < 1e-12 * np.sum(w)
    assert np.all(vals.imag > 0)


def test_single_rung_error_is_first_order(default):
    # the regularized values are analytic in eps with a linear term; the
    # error of a single rung against the extrapolated limit scales like eps
    gam, lam = sp.resolvent_ladder(default.op, default.bs)
    eps = gam.eps
    err = np.abs(gam.values - gam.limit)
    slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
    assert 0.7 < slope < 1.3


def test_resolvent_form_values(narrow, narrow_spec):
    op, bs = narrow.op, narrow.bs
    om = bs.omega
    for key, z in (("omega", om), ("-omega", -om), ("-3omega", -3 * om)):
        v = sp.resolvent_form(op, bs, z)
        assert v.imag == 0.0
        assert v.real == pytest.approx(narrow_spec.rho_bar[key].real, rel=1e-12)
    res = sp.resolvent_form(op, bs, "3omega+i0")
    assert res.real == narrow_spec.lambda_pv
    assert res.imag == -narrow_spec.gamma
    with pytest.raises(InputError):
        sp.resolvent_form(op, bs, 3.0 * om)


def test_resolvent_at_omega_excludes_bound_mode(narrow):
    op, bs = narrow.op, narrow.bs
    c = op.to_modes(sp.carrier(bs))
    keep = np.arange(op.mu.size) != bs.index
    naive = np.sum(c[keep] ** 2 / (op.mu[keep] * (op.mu[keep] - bs.omega)))
    assert sp.resolvent_form(op, bs, bs.omega).real == pytest.approx(naive, rel=1e-10)
    assert abs(c[bs.index]) < 1e-12


def test_spectral_data_json_round_trip(narrow_spec):
    blob = json.dumps(narrow_spec.to_json())
    back = sp.SpectralData.from_json(json.loads(blob))
    assert back.gamma == narrow_spec.gamma and back.rho_bar == narrow_spec.rho_bar
    d = narrow_spec.to_json()
    assert set(d) >= {"omega", "gamma_A", "gamma_B", "lambda_pv", "rho_bar", "psi4"}


def test_frozen_narrow_constants(narrow_spec):
    # values recorded from this discretization (r_max = 60, n = 6000)
    assert narrow_spec.omega == pytest.approx(0.9997624, rel=1e-6)
    assert narrow_spec.gamma == pytest.approx(0.528862, rel=1e-4)
    assert narrow_spec.gamma_b == pytest.approx(0.528638, rel=1e-4)
    assert narrow_spec.lambda_pv == pytest.approx(-0.0422221, rel=1e-4)


def test_resolution_error_when_band_edge_exceeded():
    # 3 Omega above the largest frequency of a very coarse grid
    g = sp.RadialGrid(5.0, 16)
    op = sp.build_operator(sp.Potential("gaussian_well", 5.0, 1.0), g, 3.0)
    bs = sp.compute_bound_state(op, require_unique=False)
    assert 3 * bs.omega > op.mu[-1]
    with pytest.raises(ResolutionError):
        sp.compute_gamma(op, bs)
