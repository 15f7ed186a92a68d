"""Free-wave profiles of the radiation and the auxiliary first-order evolutions.

For a continuum mode k with frequency mu_k the radiation obeys
eta_k'' + mu_k^2 eta_k = f_k with f_k = lam <phi_k, u^3>.  The force splits
into the scalar channel lam a^3 c_k (c_k = <phi_k, P_c psi^3>) and the
remainder lam <phi_k, u^3 - a^3 psi^3>.  Writing

    eta(t) = (sin Bt / B) S1(t) + cos(Bt) S2(t),
    S1(t) = eta_t(0) + int_0^t cos(Bs) f ds,   S2(t) = eta(0) - int_0^t (sin Bs / B) f ds,

the profiles S1, S2 are S1(t), S2(t) at the end of the window.  Two kernels are offered:

* ``"filon"``: exact frequencies mu_k and a piecewise-linear source integrated
  against exact exponentials;
* ``"leapfrog"``: the frequencies omega_k = (2/dt) arcsin(mu_k dt / 2) seen by the
  leapfrog recursion, B_k = sin(omega_k dt) / dt and the trapezoid sum.  With
  this kernel the decomposition of a discrete field run is exact to rounding.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    GridMismatchError,
    InputError,
    MissingArtifactError,
    NumericalError,
    ResolutionError,
    SmallnessError,
    TailToleranceError,
)
from .field import FieldConfig, FieldState, FieldTrajectory, decompose, evolve, extract_envelope
from .spectral import BoundState, DiscreteOperator, RadialGrid, apply_pc, carrier, carrier_coefficients

PROFILE_MAGIC = b"MKGP"
KERNELS = ("filon", "leapfrog")


# ---------------------------------------------------------------------------
# quadrature helpers


def filon_weights(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(int_0^1 (1-x) e^{i theta x} dx, int_0^1 x e^{i theta x} dx), with a series for small theta."""
    theta = np.asarray(theta, dtype=float)
    a = np.empty(theta.shape, dtype=complex)
    b = np.empty(theta.shape, dtype=complex)
    small = np.abs(theta) < 0.5
    t = theta[~small]
    e = np.exp(1j * t)
    a[~small] = 1j / t - (e - 1.0) / t**2
    b[~small] = e / (1j * t) + (e - 1.0) / t**2
    ts = theta[small]
    z = 1j * ts
    sa = np.zeros(ts.shape, dtype=complex)
    sb = np.zeros(ts.shape, dtype=complex)
    term = np.ones(ts.shape, dtype=complex)
    for n in range(20):
        sa += term / ((n + 1) * (n + 2))
        sb += term / (n + 2)
        term = term * z / (n + 1)
    a[small] = sa
    b[small] = sb
    return a, b


def leapfrog_frequencies(mu: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """(omega, B) with 2 - 2 cos(omega dt) = mu^2 dt^2 and B = sin(omega dt)/dt."""
    x = np.asarray(mu) * abs(dt) / 2.0
    if np.any(x >= 1.0):
        raise ResolutionError("mode frequency above the leapfrog stability limit")
    om = 2.0 / abs(dt) * np.arcsin(x)
    return om, np.sin(om * abs(dt)) / abs(dt)


def active_modes(op: DiscreteOperator, bs: BoundState, rel: float = 1e-7) -> np.ndarray:
    """Continuum modes whose carrier coefficient exceeds rel * max |c_k|."""
    c = np.abs(carrier_coefficients(op, bs))
    idx = np.flatnonzero(c > rel * c.max())
    return idx[idx != bs.index]


def _kernel_freqs(mu: np.ndarray, dt: float, kernel: str):
    if kernel == "filon":
        return mu, mu
    if kernel == "leapfrog":
        return leapfrog_frequencies(mu, dt)
    raise InputError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def _scalar_duhamel(
    g: np.ndarray, dt: float, freqs: np.ndarray, out_steps: Sequence[int], rule: str, chunk: int = 1024
) -> np.ndarray:
    """Partial integrals int_0^{t_n} e^{-i nu s} g(s) ds for each nu in freqs and each n in out_steps.

    ``rule="filon"`` integrates the piecewise-linear interpolant exactly;
    ``rule="trapezoid"`` is the composite trapezoid sum.
    """
    out_steps = np.asarray(out_steps, dtype=int)
    if out_steps.size and (out_steps.min() < 0 or out_steps.max() >= g.size):
        raise InputError("requested times lie outside the source samples")
    order = np.argsort(out_steps)
    res = np.zeros((out_steps.size, freqs.size), dtype=complex)
    if out_steps.size == 0:
        return res
    nmax = int(out_steps.max())
    if rule == "filon":
        wa, wb = filon_weights(-freqs * dt)
    elif rule != "trapezoid":
        raise InputError(f"unknown quadrature rule {rule!r}")
    s_sorted = out_steps[order]
    total = np.zeros(freqs.size, dtype=complex)
    pos = 0
    while pos < s_sorted.size and s_sorted[pos] == 0:
        pos += 1
    for j0 in range(0, nmax, chunk):
        j1 = min(j0 + chunk, nmax)
        js = np.arange(j0, j1)
        ph = np.exp(-1j * np.outer(freqs, js * dt))
        if rule == "filon":
            inc = dt * ph * (wa[:, None] * g[js] + wb[:, None] * g[js + 1])
        else:
            ph1 = ph * np.exp(-1j * freqs * dt)[:, None]
            inc = 0.5 * dt * (ph * g[js] + ph1 * g[js + 1])
        # cum[:, i] is the integral up to step j0 + i + 1
        cum = total[:, None] + np.cumsum(inc, axis=1)
        while pos < s_sorted.size and s_sorted[pos] <= j1:
            res[order[pos]] = cum[:, s_sorted[pos] - j0 - 1]
            pos += 1
        total = cum[:, -1].copy()
    return res


# ---------------------------------------------------------------------------
# source and auxiliary fields


@dataclass(frozen=True, eq=False)
class SourceSeries:
    """Uniformly sampled scalar source lam a(t)^3 and the carrier P_c psi^3.

    ``coeffs`` are the carrier coefficients on the ``modes`` retained.
    """

    dt: float
    values: np.ndarray
    carrier: np.ndarray
    coeffs: np.ndarray
    modes: np.ndarray
    mu: np.ndarray
    amplitude_bound: float = float("nan")
    carrier_overlap: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    @property
    def t_end(self) -> float:
        return (self.values.size - 1) * self.dt

    def check_nyquist(self) -> None:
        mu_max = float(np.max(self.mu)) if self.mu.size else 0.0
        if mu_max > 0 and self.dt > math.pi / (4.0 * mu_max) * (1 + 1e-12):
            raise ResolutionError(
                f"source step {self.dt:g} exceeds pi/(4 mu_max) = {math.pi / (4 * mu_max):g}"
            )


def make_source(
    op: DiscreteOperator,
    bs: BoundState,
    a_samples: np.ndarray,
    dt: float,
    coupling: float,
    *,
    modes: Optional[np.ndarray] = None,
    delta0: Optional[float] = None,
) -> SourceSeries:
    """Source lam a^3 from amplitude samples a(n dt)."""
    if dt <= 0:
        raise InputError("source spacing must be positive")
    modes = active_modes(op, bs) if modes is None else np.asarray(modes)
    cr = carrier(bs)
    ov = abs(bs.grid.inner(cr, bs.psi))
    if ov > 1e-12:
        raise NumericalError(f"carrier is not orthogonal to psi ({ov:.3g})")
    c = carrier_coefficients(op, bs)[modes]
    a = np.asarray(a_samples, dtype=float)
    bound = 8.0 * delta0**3 if delta0 is not None else float("nan")
    return SourceSeries(dt, coupling * a**3, cr, c, modes, op.mu[modes], bound, ov)


def source_from_field(
    traj: FieldTrajectory, op: DiscreteOperator, bs: BoundState, t_end: Optional[float] = None, **kw
) -> SourceSeries:
    a = traj.a_steps
    if t_end is not None:
        a = a[: int(round(t_end / traj.config.dt)) + 1]
    return make_source(op, bs, a, traj.config.dt, traj.config.coupling, **kw)


@dataclass(frozen=True, eq=False)
class AuxiliaryField:
    t: float
    coeffs: np.ndarray


@dataclass(frozen=True, eq=False)
class AuxiliarySeries:
    """Coefficients of w (or v) on the retained continuum modes at several times."""

    times: np.ndarray
    coeffs: np.ndarray
    modes: np.ndarray
    mu: np.ndarray

    def __getitem__(self, i: int) -> AuxiliaryField:
        return AuxiliaryField(float(self.times[i]), self.coeffs[i])

    def __len__(self) -> int:
        return self.times.size

    @property
    def l(self) -> np.ndarray:
        """Squared L^2 norm (the grid transform is an isometry)."""
        return np.sum(np.abs(self.coeffs) ** 2, axis=1)

    def bound_state_coefficient(self) -> float:
        return 0.0


def _output_steps(times: Sequence[float], dt: float) -> np.ndarray:
    steps = np.rint(np.asarray(times, dtype=float) / dt).astype(int)
    if np.any(np.abs(steps * dt - np.asarray(times)) > 1e-9 * max(1.0, dt)):
        raise InputError("requested times must be multiples of the source spacing")
    return steps


def evolve_w(source: SourceSeries, times: Sequence[float]) -> AuxiliarySeries:
    """w_k(t) = -i c_k int_0^t e^{i mu_k (t-s)} lam a^3(s) ds at the requested times."""
    source.check_nyquist()
    times = np.asarray(times, dtype=float)
    if times.size and times.max() > source.t_end + 1e-9:
        raise InputError("requested times extend past the source")
    steps = _output_steps(times, source.dt)
    j = _scalar_duhamel(source.values, source.dt, source.mu, steps, "filon")
    w = -1j * np.exp(1j * np.outer(times, source.mu)) * j * source.coeffs[None, :]
    return AuxiliarySeries(times, w, source.modes, source.mu)


@dataclass(frozen=True)
class LReport:
    times: np.ndarray
    l: np.ndarray
    dl_fd: np.ndarray
    dl_identity: np.ndarray
    residual: np.ndarray
    sup_l: float

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def track_l(w: AuxiliarySeries, source: SourceSeries) -> LReport:
    """l(t) = |w|^2 and the residual of dl/dt = -2 sum_k Im(w_k) lam a^3 c_k.

    dl/dt is a centred difference on the (uniform) series times; the
    residual is reported at the interior times.
    """
    t = w.times
    if not np.array_equal(w.modes, source.modes):
        raise GridMismatchError("auxiliary series and source use different modes")
    if t.size < 3:
        raise InputError("need at least three times")
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise GridMismatchError("series times must be uniform")
    steps = _output_steps(t, source.dt)
    l = w.l
    dl_fd = (l[2:] - l[:-2]) / (2.0 * h[0])
    g = source.values[steps[1:-1]]
    ident = -2.0 * np.sum(np.imag(w.coeffs[1:-1]) * source.coeffs[None, :], axis=1) * g
    return LReport(t, l, dl_fd, ident, dl_fd - ident, float(l.max()))


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True, eq=False)
class ScatteringProfiles:
    """Free-wave data S1, S2 with their mode coefficients.

    ``tail_bound_h1`` bounds the H^1-type contribution of the omitted
    interval [t_tail, infinity) to the free-wave residual.
    """

    s1: np.ndarray
    s2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    kernel: str
    dt: float
    t_tail: float
    tail_bound_h1: float = 0.0
    tail_bound_l2: float = 0.0

    def orthogonality(self, bs: BoundState) -> Tuple[float, float]:
        g = bs.grid
        return abs(g.inner(self.s1, bs.psi)), abs(g.inner(self.s2, bs.psi))

    def check_orthogonality(self, bs: BoundState, tol: float = 1e-10) -> None:
        o1, o2 = self.orthogonality(bs)
        scale = max(1.0, bs.grid.norm(self.s1), bs.grid.norm(self.s2))
        if max(o1, o2) > tol * scale:
            raise InputError(f"profiles are not orthogonal to psi ({o1:.3g}, {o2:.3g})")

    def norms(self, mu: np.ndarray) -> Dict[str, float]:
        return {
            "s1_l2": float(np.linalg.norm(self.c1)),
            "s2_l2": float(np.linalg.norm(self.c2)),
            "s2_h1": float(np.sqrt(np.sum((1 + mu**2) * self.c2**2))),
        }


def _assemble(op: DiscreteOperator, bs: BoundState, c1, c2, kernel, dt, t_tail, tb_h1=0.0, tb_l2=0.0):
    c1 = np.array(c1, dtype=float)
    c2 = np.array(c2, dtype=float)
    c1[bs.index] = 0.0
    c2[bs.index] = 0.0
    return ScatteringProfiles(
        op.from_modes(c1), op.from_modes(c2), c1, c2, kernel, dt, t_tail, tb_h1, tb_l2
    )


def free_profiles(op: DiscreteOperator, bs: BoundState, state: FieldState, kernel: str = "leapfrog", dt: float = 0.05):
    """Profiles of the linear evolution of P_c u(0), P_c u_t(0)."""
    c2 = op.to_modes(apply_pc(bs, state.u))
    c1 = op.to_modes(apply_pc(bs, state.ut))
    return _assemble(op, bs, c1, c2, kernel, dt, 0.0)


@dataclass(frozen=True)
class EnvelopeTail:
    """Envelope data at t_tail used to extrapolate a(s) beyond the window.

    rho(s) = rho_T ((1 + kappa T) / (1 + kappa s))^{1/4}, theta(s) = theta_T + omega_eff (s - T).
    ``kappa=1`` is the (1 + s)^{-1/4} law.
    """

    rho: float
    theta: float
    omega_eff: float
    kappa: float = 1.0

    @classmethod
    def from_field(cls, traj: FieldTrajectory, t: float, window: float = 50.0, kappa: float = 1.0):
        return cls.from_series(traj.t, traj.rho, traj.theta, t, window, kappa)

    @classmethod
    def from_series(cls, ts, rho, theta, t: float, window: float = 50.0, kappa: float = 1.0):
        ts, rho, theta = (np.asarray(x, dtype=float) for x in (ts, rho, theta))
        sel = (ts >= t - window) & (ts <= t + 1e-9)
        if sel.sum() < 3:
            raise InputError("too few field samples to fit the envelope at t_tail")
        slope, icpt = np.polyfit(ts[sel], theta[sel], 1)
        rho_t = float(np.mean(rho[sel]))
        return cls(rho_t, float(slope * t + icpt), float(slope), kappa)


def _tail_scalar(mu: np.ndarray, coeffs: np.ndarray, t: float, env: EnvelopeTail, coupling: float):
    """Leading estimate and remainder bound of lam c_k int_T^inf e^{-i mu s} a^3 ds."""
    est = np.zeros(mu.size, dtype=complex)
    rem = np.zeros(mu.size)
    # (R^3)'(0) for R = ((1 + kappa T)/(1 + kappa (T + tau)))^{1/4}
    d3 = 0.75 * env.kappa / (1.0 + env.kappa * t)
    for p, cp in ((3, 1.0), (1, 3.0), (-1, 3.0), (-3, 1.0)):
        om = p * env.omega_eff - mu
        amp = cp * env.rho**3 * np.exp(1j * p * env.theta) * np.exp(-1j * mu * t)
        with np.errstate(divide="ignore"):
            est += amp * (1j / om)
            r = np.minimum(1.0 / np.abs(om), 2.0 * d3 / om**2)
        rem += np.abs(amp) * r
    return coupling * coeffs * est, np.abs(coupling * coeffs) * rem


def _tail_norms(per_mode: np.ndarray, bfreq: np.ndarray, mu: np.ndarray) -> Tuple[float, float]:
    e = math.sqrt(2.0) * per_mode / bfreq
    return float(np.sqrt(np.sum((1 + mu**2) * e**2))), float(np.sqrt(np.sum(e**2)))


def tail_profiles(
    source: SourceSeries,
    op: DiscreteOperator,
    bs: BoundState,
    t_tail: float,
    *,
    envelope: Optional[EnvelopeTail] = None,
    kernel: str = "leapfrog",
    tail_tol: Optional[float] = None,
    coupling: Optional[float] = None,
) -> ScatteringProfiles:
    """Profiles of the scalar channel lam a^3 P_c psi^3 over [0, t_tail] plus the analytic tail.

    Without ``envelope`` the source is taken to vanish after t_tail.
    ``tail_tol`` bounds the tail H^1 size relative to the profile H^1 size.
    """
    if kernel == "filon":
        source.check_nyquist()
    if t_tail > source.t_end + 1e-9:
        raise InputError("t_tail lies beyond the source samples")
    n = int(round(t_tail / source.dt))
    om, bb = _kernel_freqs(source.mu, source.dt, kernel)
    rule = "filon" if kernel == "filon" else "trapezoid"
    j = _scalar_duhamel(source.values, source.dt, om, [n], rule)[0] * source.coeffs
    tb_h1 = tb_l2 = 0.0
    if envelope is not None:
        lam = coupling if coupling is not None else _coupling_from(source)
        est, rem = _tail_scalar(om, source.coeffs, n * source.dt, envelope, lam)
        j = j + est
        tb_h1, tb_l2 = _tail_norms(rem, bb, source.mu)
    c1 = np.zeros(op.mu.size)
    c2 = np.zeros(op.mu.size)
    c1[source.modes] = j.real
    c2[source.modes] = j.imag / bb
    prof = _assemble(op, bs, c1, c2, kernel, source.dt, n * source.dt, tb_h1, tb_l2)
    if tail_tol is not None:
        size = math.sqrt(np.sum((1 + op.mu**2) * (prof.c1**2 / op.mu**2 + prof.c2**2)))
        if size > 0 and tb_h1 > tail_tol * size:
            raise TailToleranceError(
                f"tail bound {tb_h1:.3g} exceeds {tail_tol:g} x profile size {size:.3g}; increase t_tail"
            )
    return prof


def _coupling_from(source: SourceSeries) -> float:
    raise InputError("pass coupling= when requesting an envelope tail")


def partial_tail_norms(
    source: SourceSeries,
    times: Sequence[float],
    t_end: Optional[float] = None,
    *,
    envelope: Optional[EnvelopeTail] = None,
    coupling: Optional[float] = None,
) -> Dict[str, np.ndarray]:
    """L^2 norms of int_t^T {cos Bs, sin Bs, sin Bs / B} lam a^3 P_c psi^3 ds for t in times.

    With ``envelope`` the analytic estimate of [T, infinity) is added, so the
    upper limit becomes infinity.
    """
    t_end = source.t_end if t_end is None else t_end
    steps = _output_steps(list(times) + [t_end], source.dt)
    j = _scalar_duhamel(source.values, source.dt, source.mu, steps, "filon") * source.coeffs
    end = j[-1]
    if envelope is not None:
        lam = coupling if coupling is not None else _coupling_from(source)
        end = end + _tail_scalar(source.mu, source.coeffs, steps[-1] * source.dt, envelope, lam)[0]
    d = end[None, :] - j[:-1]
    return _tail_objects(d, source.mu)


def _tail_objects(d: np.ndarray, mu: np.ndarray) -> Dict[str, np.ndarray]:
    return {
        "cos": np.linalg.norm(d.real, axis=1),
        "sin": np.linalg.norm(d.imag, axis=1),
        "sin_over_b": np.linalg.norm(d.imag / mu, axis=1),
    }


def eventually_decreasing(t: np.ndarray, y: np.ndarray, fraction: float = 0.1, points: int = 12) -> bool:
    """y sampled at log-spaced points of the final decade (or ``fraction`` of the window) is non-increasing.

    A relative slack of 1e-12 absorbs rounding.
    """
    t = np.asarray(t)
    lo = max(t[-1] * fraction, t[0])
    probe = np.geomspace(max(lo, 1e-12), t[-1], points)
    vals = np.interp(probe, t, y)
    return bool(np.all(np.diff(vals) <= 1e-12 * max(1.0, np.max(np.abs(vals)))))


# ---------------------------------------------------------------------------
# remainder channel, accumulated during the field run


class Eta3Observer:
    """Online Duhamel sums of lam P_c(u^3 - a^3 psi^3) on the retained modes.

    Attach to :func:`metakg.field.run`; both kernels are accumulated.  At each
    checkpoint time up to ``t_end`` the partial sums are stored.
    """

    def __init__(
        self,
        op: DiscreteOperator,
        bs: BoundState,
        coupling: float,
        dt: float,
        t_end: float,
        modes: Optional[np.ndarray] = None,
    ):
        self.modes = active_modes(op, bs) if modes is None else np.asarray(modes)
        self.mu = op.mu[self.modes]
        self.dt = float(dt)
        self.t_end = float(t_end)
        self.coupling = float(coupling)
        self._basis = np.ascontiguousarray((op.eigvecs[:, self.modes] * op.grid.scale[:, None]).T)
        self._c = carrier_coefficients(op, bs)[self.modes]
        self._omega_lf, self.b_lf = leapfrog_frequencies(self.mu, dt)
        self._wa, self._wb = filon_weights(-self.mu * dt)
        self.filon = np.zeros(self.mu.size, dtype=complex)
        self._trap_open = np.zeros(self.mu.size, dtype=complex)
        self._last_f = None
        self._last_n = -1
        self.fmax_late = np.zeros(self.mu.size)
        self.snapshots: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}
        self.t_last = 0.0

    def active(self, t: float) -> bool:
        return t <= self.t_end + 1e-9

    def source(self, u: np.ndarray, a: float) -> np.ndarray:
        return self.coupling * (self._basis @ u**3 - a**3 * self._c)

    def observe(self, n: int, t: float, u: np.ndarray, a: float) -> None:
        f = self.source(u, a)
        dt = self.dt
        if self._last_f is not None:
            if n != self._last_n + 1:
                raise NumericalError("remainder observer missed a step")
            s = self._last_n * dt
            ph = np.exp(-1j * self.mu * s)
            self.filon += dt * ph * (self._wa * self._last_f + self._wb * f)
            self._trap_open += dt * np.exp(-1j * self._omega_lf * s) * self._last_f * (0.5 if self._last_n == 0 else 1.0)
        self._last_f = f
        self._last_n = n
        self.t_last = t
        if t >= 0.9 * self.t_end:
            np.maximum(self.fmax_late, np.abs(f), out=self.fmax_late)

    @property
    def trapezoid(self) -> np.ndarray:
        if self._last_n <= 0:
            return np.zeros(self.mu.size, dtype=complex)
        return self._trap_open + 0.5 * self.dt * np.exp(-1j * self._omega_lf * self._last_n * self.dt) * self._last_f

    def checkpoint(self, t: float) -> None:
        if self.active(t):
            self.snapshots[float(t)] = (self.filon.copy(), self.trapezoid.copy())

    def record(self) -> "RemainderRecord":
        if self._last_n < 0:
            raise MissingArtifactError("remainder observer saw no steps")
        times = np.array(sorted(self.snapshots))
        return RemainderRecord(
            self.modes, self.mu, self.b_lf, self.dt, self.t_last, self.filon.copy(),
            self.trapezoid, self.fmax_late.copy(), times,
            np.array([self.snapshots[t][0] for t in times]).reshape(times.size, self.mu.size),
            np.array([self.snapshots[t][1] for t in times]).reshape(times.size, self.mu.size),
        )


@dataclass(frozen=True, eq=False)
class RemainderRecord:
    """Final and checkpointed partial sums of the remainder channel."""

    modes: np.ndarray
    mu: np.ndarray
    b_lf: np.ndarray
    dt: float
    t_last: float
    filon: np.ndarray
    trapezoid: np.ndarray
    fmax_late: np.ndarray
    times: np.ndarray
    filon_at: np.ndarray
    trapezoid_at: np.ndarray

    def tail_bound(self) -> np.ndarray:
        """Per-mode bound 2 (1 + T) max|f_k| from a (1 + s)^{-3/2} source decay after T."""
        return 2.0 * (1.0 + self.t_last) * self.fmax_late

    def save(self, path) -> None:
        np.savez(path, **{f: getattr(self, f) for f in self.__dataclass_fields__})

    @classmethod
    def load(cls, path) -> "RemainderRecord":
        p = Path(path)
        if not p.is_file():
            raise MissingArtifactError(f"missing remainder-channel record {p}")
        with np.load(p) as d:
            kw = {f: d[f] for f in cls.__dataclass_fields__}
        kw["dt"] = float(kw["dt"])
        kw["t_last"] = float(kw["t_last"])
        return cls(**kw)


def _record(obs) -> RemainderRecord:
    return obs.record() if isinstance(obs, Eta3Observer) else obs


def evolve_v(obs) -> AuxiliarySeries:
    """v_k(t) = -i int_0^t e^{i mu_k (t - s)} f_k(s) ds at the recorded checkpoints."""
    rec = _record(obs)
    if rec.times.size == 0:
        raise MissingArtifactError("no remainder-channel checkpoints were recorded")
    v = -1j * np.exp(1j * np.outer(rec.times, rec.mu)) * rec.filon_at
    return AuxiliarySeries(rec.times, v, rec.modes, rec.mu)


def eta3_tail_norms(obs, times: Sequence[float]) -> Dict[str, np.ndarray]:
    """The three tail objects of the remainder channel, from the stored partial sums."""
    rec = _record(obs)
    idx = [int(np.argmin(np.abs(rec.times - t))) for t in times]
    d = rec.filon_at[-1][None, :] - rec.filon_at[idx]
    return _tail_objects(d, rec.mu)


def remainder_profiles(op: DiscreteOperator, bs: BoundState, obs, kernel: str = "leapfrog"):
    """Profiles of the remainder channel over the observer window, with the tail bound."""
    rec = _record(obs)
    j = rec.filon if kernel == "filon" else rec.trapezoid
    bb = rec.mu if kernel == "filon" else rec.b_lf
    c1 = np.zeros(op.mu.size)
    c2 = np.zeros(op.mu.size)
    c1[rec.modes] = j.real
    c2[rec.modes] = j.imag / bb
    tb_h1, tb_l2 = _tail_norms(rec.tail_bound(), bb, rec.mu)
    return _assemble(op, bs, c1, c2, kernel, rec.dt, rec.t_last, tb_h1, tb_l2)


def combine_profiles(op: DiscreteOperator, bs: BoundState, *parts: ScatteringProfiles) -> ScatteringProfiles:
    kernels = {p.kernel for p in parts}
    if len(kernels) != 1:
        raise InputError("profiles computed with different kernels cannot be combined")
    c1 = sum(p.c1 for p in parts)
    c2 = sum(p.c2 for p in parts)
    t_tail = max(p.t_tail for p in parts)
    return _assemble(
        op, bs, c1, c2, parts[0].kernel, parts[0].dt, t_tail,
        sum(p.tail_bound_h1 for p in parts), sum(p.tail_bound_l2 for p in parts),
    )


# ---------------------------------------------------------------------------
# residual


@dataclass(frozen=True)
class ResidualSeries:
    t: np.ndarray
    residual_h1: np.ndarray
    residual_l2: np.ndarray
    eta_h1: np.ndarray
    tail_bound_h1: float

    @property
    def relative(self) -> np.ndarray:
        return (self.residual_h1 + self.tail_bound_h1) / self.eta_h1


def free_wave_coefficients(op: DiscreteOperator, prof: ScatteringProfiles, t: float) -> np.ndarray:
    om, bb = _kernel_freqs(op.mu, prof.dt, prof.kernel)
    return np.cos(om * t) * prof.c2 + np.sin(om * t) / bb * prof.c1


def scattering_residual(
    states: Dict[float, FieldState], prof: ScatteringProfiles, op: DiscreteOperator, bs: BoundState
) -> ResidualSeries:
    """|| eta(t) - (sin Bt / B) S1 - cos(Bt) S2 || in the norm (|Bf|^2 + |f|^2)^{1/2}."""
    prof.check_orthogonality(bs)
    if prof.s1.shape != bs.psi.shape:
        raise GridMismatchError("profiles and field live on different grids")
    times = np.array(sorted(states))
    w = 1.0 + op.mu**2
    r1, r2, e1 = [], [], []
    for t in times:
        st = states[t]
        if st.u.shape != bs.psi.shape:
            raise GridMismatchError("field checkpoint does not match the profile grid")
        e = op.to_modes(apply_pc(bs, st.u))
        e[bs.index] = 0.0
        d = e - free_wave_coefficients(op, prof, t)
        r1.append(math.sqrt(float(np.sum(w * d**2))))
        r2.append(float(np.linalg.norm(d)))
        e1.append(math.sqrt(float(np.sum(w * e**2))))
    return ResidualSeries(times, np.array(r1), np.array(r2), np.array(e1), prof.tail_bound_h1)


# ---------------------------------------------------------------------------
# backward problem


@dataclass(frozen=True)
class BackwardParams:
    mass: float
    coupling: float
    potential_values_fn: object
    dt: float = 0.05
    smallness: float = 0.05
    margin: float = 50.0


@dataclass(frozen=True, eq=False)
class BackwardResult:
    u0: np.ndarray
    u1: np.ndarray
    grid: RadialGrid
    target: FieldState
    psi: np.ndarray
    omega: float
    rho_T: float
    theta_T: float


def _ground_state(cfg: FieldConfig) -> Tuple[float, np.ndarray]:
    g = cfg.grid
    w, q = eigh_tridiagonal(cfg.diag, np.full(g.n - 1, -1.0 / g.dr**2), select="i", select_range=(0, 0))
    if w[0] >= cfg.mass**2:
        raise SmallnessError("no bound state on the backward grid")
    v = q[:, 0] * np.sign(q[np.argmax(np.abs(q[:, 0])), 0])
    psi = v / g.scale
    return float(math.sqrt(w[0])), psi / g.norm(psi)


def _pad(f: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[: f.size] = f
    return out


def solve_backward(
    prof: ScatteringProfiles,
    profile_grid: RadialGrid,
    rho_inf: float,
    theta_inf: float,
    t_start: float,
    params: BackwardParams,
) -> BackwardResult:
    """Initial data whose evolution reaches the prescribed asymptotic state at t_start.

    At T = t_start the field is 2 rho(T) cos(theta(T)) psi plus the free wave of
    (S1, S2), with rho(T) = rho_inf (1 + T)^{-1/4} and theta(T) = theta_inf + Omega T.
    The free wave is produced by linear leapfrog on the enlarged grid, and the
    full equation is then stepped back to t = 0 with the sponge off.
    """
    if abs(rho_inf) > params.smallness:
        raise SmallnessError(f"|rho_inf| = {abs(rho_inf):g} exceeds {params.smallness:g}")
    for name, s in (("S1", prof.s1), ("S2", prof.s2)):
        nrm = profile_grid.norm(s)
        if nrm > params.smallness:
            raise SmallnessError(f"|{name}| = {nrm:g} exceeds {params.smallness:g}")
    dr = profile_grid.dr
    support = _support(profile_grid, prof)
    r_need = t_start + max(support, 1.0) + params.margin
    n_big = max(int(math.ceil(r_need / dr)) - 1, profile_grid.n)
    big = RadialGrid((n_big + 1) * dr, n_big)
    vpot = params.potential_values_fn(big.r)
    lin = FieldConfig(big, params.mass, vpot, 0.0, params.dt, t_start, 0.0, 0.0)
    non = lin.replace(coupling=params.coupling)
    omega, psi = _ground_state(lin)
    s1 = _pad(prof.s1, big.n)
    s2 = _pad(prof.s2, big.n)
    # remove any overlap created by the slightly different ground state of the larger grid
    s1 = s1 - big.inner(psi, s1) * psi
    s2 = s2 - big.inner(psi, s2) * psi
    free = evolve(lin, FieldState(0.0, s2, s1), t_start)
    rho_t = rho_inf * (1.0 + t_start) ** -0.25
    theta_t = theta_inf + omega * t_start
    u_t = 2.0 * rho_t * math.cos(theta_t) * psi + free.u
    ut_t = -2.0 * omega * rho_t * math.sin(theta_t) * psi + free.ut
    target = FieldState(t_start, u_t, ut_t)
    back = evolve(non, target, -t_start)
    return BackwardResult(back.u, back.ut, big, target, psi, omega, rho_t, theta_t)


def _support(grid: RadialGrid, prof: ScatteringProfiles, threshold: float = 1e-12) -> float:
    mag = np.abs(prof.s1) + np.abs(prof.s2)
    if not np.any(mag > 0):
        return 0.0
    idx = np.flatnonzero(mag > threshold * mag.max())
    return float(grid.r[idx[-1]])


@dataclass(frozen=True)
class RoundTripReport:
    rho_mismatch: float
    theta_mismatch: float
    eta_mismatch: float
    eta_norm: float


def round_trip(res: BackwardResult, params: BackwardParams) -> RoundTripReport:
    """Run the backward data forward to t_start and compare with the prescribed state."""
    g = res.grid
    cfg = FieldConfig(g, params.mass, params.potential_values_fn(g.r), params.coupling, params.dt, 0.0, 0.0, 0.0)
    fwd = evolve(cfg, FieldState(0.0, res.u0, res.u1), res.target.t)

    def split(st):
        a = g.inner(res.psi, st.u)
        at = g.inner(res.psi, st.ut)
        return a, at, st.u - a * res.psi

    a1, at1, e1 = split(fwd)
    a0, at0, e0 = split(res.target)
    r1, th1 = extract_envelope(a1, at1, res.omega)
    r0, th0 = extract_envelope(a0, at0, res.omega)
    dth = (th1 - th0 + math.pi) % (2 * math.pi) - math.pi if r0 > 0 else 0.0
    return RoundTripReport(abs(r1 - r0), abs(dth), g.norm(e1 - e0), g.norm(e0))


# ---------------------------------------------------------------------------
# profile files


def write_profiles(path, prof: ScatteringProfiles) -> None:
    """Little-endian: magic MKGP, uint64 n, then S1 and S2 as float64."""
    with open(path, "wb") as fh:
        fh.write(PROFILE_MAGIC)
        fh.write(struct.pack("<Q", prof.s1.size))
        fh.write(np.asarray(prof.s1, dtype="<f8").tobytes())
        fh.write(np.asarray(prof.s2, dtype="<f8").tobytes())


def read_profiles(path) -> Tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != PROFILE_MAGIC:
        raise InputError(f"{path}: not an MKGP profile file")
    (n,) = struct.unpack("<Q", data[4:12])
    if len(data) != 12 + 16 * n:
        raise InputError(f"{path}: truncated profile file")
    body = np.frombuffer(data[12:], dtype="<f8")
    return body[:n].astype(float), body[n:].astype(float)


def profiles_from_arrays(op: DiscreteOperator, bs: BoundState, s1, s2, kernel="leapfrog", dt=0.05, t_tail=0.0):
    """Rebuild a profile object from grid functions (for example after :func:`read_profiles`)."""
    return _assemble(op, bs, op.to_modes(s1), op.to_modes(s2), kernel, dt, t_tail)
