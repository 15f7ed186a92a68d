"""Polar envelope equations for the bound-state amplitude X = rho * exp(i theta).

The amplitude obeys

    rho'   = -(3 lam^2 Gamma / 4 Omega) rho^5 - (lam/Omega) p rho^3 sin 2theta
             - (lam / 2 Omega) p rho^3 sin 4theta + Re M + Re(e^{-i theta} e^{i Omega t} E)
    theta' = Omega - (3 lam / 2 Omega) p rho^2 - (3 lam^2 / 4 Omega) K rho^4
             - (2 lam / Omega) p rho^2 cos 2theta - (lam / 2 Omega) p rho^2 cos 4theta
             + Im M / rho + Im(e^{-i theta} e^{i Omega t} E) / rho

with p = |psi|_4^4, K = Lambda - 5 rho(Omega) + 3 rho(-Omega) + rho(-3 Omega) and
M = rho^5 sum_j c_j e^{i j theta} over j in (4, 2, -2, -4, -6).  The
parametrix rho_bar solves the damping part alone; epsilon = rho/rho_bar - 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from . import _envelope_kernel as kern
from .errors import InputError, NumericalError, SmallnessError, WindowTooShortError
from .spectral import RESONANT, SpectralData

M_ORDERS = (4, 2, -2, -4, -6)
UNIT_M = (1 + 0j,) * 5


@dataclass(frozen=True)
class RemainderModel:
    """Model of the remainder E(t).

    ``kind="zero"`` or ``kind="synthetic"``; the synthetic model is
    amplitude * delta0^2 * (1 + t)^(-5/4 - delta) * cos(frequency * t), with
    frequency defaulting to Omega.
    """

    kind: str = "zero"
    delta: float = 0.25
    amplitude: float = 1.0
    frequency: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("zero", "synthetic"):
            raise InputError(f"unknown remainder model {self.kind!r}")
        if self.kind == "synthetic" and not self.delta > 0:
            raise InputError("remainder exponent delta must be positive")


def faithful_m_coefficients(
    coupling: float, omega: float, gamma: float, lambda_pv: float, rho_bar: Dict[str, complex]
) -> Tuple[complex, ...]:
    """Bracketed coefficients of the quintic terms before they are replaced by 1.

    Ordered as the phases e^{4i}, e^{2i}, e^{-2i}, e^{-4i}, e^{-6i}.
    """
    pre = 3.0 * coupling**2 / (4.0 * omega)
    r1 = complex(rho_bar["omega"])
    rm1 = complex(rho_bar["-omega"])
    rm3 = complex(rho_bar["-3omega"])
    res = complex(rho_bar[RESONANT])
    lam, gam = lambda_pv, gamma
    c4 = -pre * (1j * lam + gam - rm3)
    c2 = -1j * pre * (-2 * lam + 2j * gam + r1 + 1j * rm3 + 3 * rm1)
    cm2 = -1j * pre * (7 * r1 + 9 * rm1 + rm3 + res)
    cm4 = -1j * pre * (3 * rm1 - 2j * rm3 + res + 3 * r1)
    cm6 = -1j * pre * (1j * rm3 - (4.0 / 3.0) * 1j * res)
    return (c4, c2, cm2, cm4, cm6)


@dataclass(frozen=True)
class EnvelopeParams:
    """Coefficients of the envelope system.

    ``strict=False`` lifts the smallness rule and the nonzero-coupling
    requirement; it exists for diagnostic and stress runs.
    """

    omega: float
    gamma: float
    lambda_pv: float
    psi4: float
    coupling: float
    rho_bar_vals: Dict[str, complex]
    delta0: float
    remainder_model: RemainderModel = field(default_factory=RemainderModel)
    m_coefficients: Tuple[complex, ...] = UNIT_M
    oscillatory: bool = True
    m_terms: bool = True
    strict: bool = True

    def __post_init__(self):
        if not self.omega > 0:
            raise InputError("Omega must be positive")
        if not self.gamma > 0:
            raise SmallnessError("Gamma must be positive (golden-rule condition)")
        if not self.delta0 > 0:
            raise InputError("delta0 must be positive")
        if len(self.m_coefficients) != 5:
            raise InputError("need five M coefficients")
        object.__setattr__(self, "m_coefficients", tuple(complex(c) for c in self.m_coefficients))
        if self.strict:
            if self.coupling == 0:
                raise InputError("coupling must be nonzero")
            bound = 0.01 * min(abs(self.coupling), self.gamma, 1.0 / self.omega)
            if self.delta0 > bound:
                raise SmallnessError(
                    f"delta0 = {self.delta0:g} exceeds 0.01*min(|lambda|, Gamma, 1/Omega) = {bound:g}"
                )

    # coefficient groups -------------------------------------------------
    @property
    def damping(self) -> float:
        return 3.0 * self.coupling**2 * self.gamma / (4.0 * self.omega)

    @property
    def kappa_coeff(self) -> float:
        """3 lam^2 Gamma / Omega; the parametrix rate is kappa_coeff * rho0^4."""
        return 4.0 * self.damping

    @property
    def phase_bracket(self) -> float:
        rb = self.rho_bar_vals
        return (
            self.lambda_pv
            - 5.0 * complex(rb["omega"]).real
            + 3.0 * complex(rb["-omega"]).real
            + complex(rb["-3omega"]).real
        )

    @property
    def shift2(self) -> float:
        return 1.5 * self.coupling / self.omega * self.psi4

    @property
    def shift4(self) -> float:
        return 3.0 * self.coupling**2 / (4.0 * self.omega) * self.phase_bracket

    @property
    def osc_sin2(self) -> float:
        return self.coupling / self.omega * self.psi4

    @property
    def osc_quarter(self) -> float:
        return 0.5 * self.coupling / self.omega * self.psi4

    @property
    def osc_cos2(self) -> float:
        return 2.0 * self.coupling / self.omega * self.psi4

    def damping_only(self) -> "EnvelopeParams":
        """Copy with the oscillatory, quintic and remainder terms switched off."""
        return replace(self, oscillatory=False, m_terms=False, remainder_model=RemainderModel())

    def pack(self, rho0: float) -> np.ndarray:
        p = np.zeros(kern.N_PARAMS)
        p[kern.P_OMEGA] = self.omega
        p[kern.P_DAMP] = self.damping
        p[kern.P_SIN2] = self.osc_sin2
        p[kern.P_QUART] = self.osc_quarter
        p[kern.P_SHIFT2] = self.shift2
        p[kern.P_SHIFT4] = self.shift4
        p[kern.P_COS2] = self.osc_cos2
        for j, c in enumerate(self.m_coefficients):
            p[kern.P_M + 2 * j] = c.real
            p[kern.P_M + 2 * j + 1] = c.imag
        rm = self.remainder_model
        if rm.kind == "synthetic":
            p[kern.P_EAMP] = rm.amplitude * self.delta0**2
            p[kern.P_EEXP] = 1.25 + rm.delta
            p[kern.P_EFREQ] = self.omega if rm.frequency is None else rm.frequency
            p[kern.P_EON] = 1.0
        p[kern.P_KAPPA] = self.kappa_coeff * rho0**4
        p[kern.P_RHO0] = rho0
        p[kern.P_OSC] = 1.0 if self.oscillatory else 0.0
        p[kern.P_MON] = 1.0 if self.m_terms else 0.0
        return p


def derive_params(
    spec: SpectralData,
    delta0: float,
    remainder_model: Optional[RemainderModel] = None,
    m_coefficients: Union[str, Sequence[complex]] = "unit",
    strict: bool = True,
    **overrides,
) -> EnvelopeParams:
    """Package the spectral constants into envelope coefficients.

    ``m_coefficients`` is ``"unit"``, ``"faithful"`` or five explicit complex
    numbers.  Keyword ``overrides`` replace individual fields (for instance
    ``omega=1.0``).
    """
    if not spec.gamma > 0:
        raise SmallnessError("golden-rule condition violated: Gamma must be positive")
    base = dict(
        omega=spec.omega,
        gamma=spec.gamma,
        lambda_pv=spec.lambda_pv,
        psi4=spec.psi4,
        coupling=spec.coupling,
        rho_bar_vals=dict(spec.rho_bar),
    )
    base.update(overrides)
    if isinstance(m_coefficients, str):
        if m_coefficients == "unit":
            mc = UNIT_M
        elif m_coefficients == "faithful":
            mc = faithful_m_coefficients(
                base["coupling"], base["omega"], base["gamma"], base["lambda_pv"],
                base["rho_bar_vals"],
            )
        else:
            raise InputError(f"unknown M coefficient set {m_coefficients!r}")
    else:
        mc = tuple(m_coefficients)
    return EnvelopeParams(
        delta0=delta0,
        remainder_model=remainder_model or RemainderModel(),
        m_coefficients=mc,
        strict=strict,
        **base,
    )


# ---------------------------------------------------------------------------
# state and rhs


@dataclass(frozen=True)
class EnvelopeState:
    t: float
    rho: float
    theta: float

    def __post_init__(self):
        if self.rho < 0:
            raise InputError("rho must be non-negative")


def rhs(state: EnvelopeState, params: EnvelopeParams) -> Tuple[float, float]:
    """(d rho/dt, d theta/dt) at the given state."""
    if state.rho < 0:
        raise InputError("rho must be non-negative")
    p = params.pack(state.rho)
    out = np.zeros(4)
    kern.terms(float(state.t), float(state.rho), float(state.theta), p, out)
    return float(out[0]), float(params.omega + out[1])


def parametrix(t, rho0: float, params: EnvelopeParams):
    """rho_bar(t) = rho0 / (1 + (3 lam^2 Gamma / Omega) rho0^4 t)^(1/4)."""
    t = np.asarray(t, dtype=float)
    val = rho0 * (1.0 + params.kappa_coeff * rho0**4 * t) ** -0.25
    return float(val) if val.ndim == 0 else val


def parametrix_derivative(t, rho0: float, params: EnvelopeParams):
    """Analytic time derivative of :func:`parametrix`."""
    t = np.asarray(t, dtype=float)
    kap = params.kappa_coeff * rho0**4
    val = -0.25 * kap * rho0 * (1.0 + kap * t) ** -1.25
    return float(val) if val.ndim == 0 else val


def log_times(t_end: float, per_decade: int = 256, t_first: float = 1e-2) -> np.ndarray:
    """0 followed by logarithmically spaced times up to and including t_end."""
    if t_end <= 0:
        raise InputError("t_end must be positive")
    t_first = min(t_first, t_end)
    decades = math.log10(t_end / t_first)
    npts = max(int(math.ceil(decades * per_decade)), 1)
    ts = t_first * 10.0 ** (decades * np.arange(npts + 1) / npts)
    ts[-1] = t_end
    return np.concatenate([[0.0], ts])


@dataclass(frozen=True, eq=False)
class EnvelopeTrajectory:
    """Sampled envelope solution with parametrix and bootstrap diagnostics.

    ``integrals`` has columns I..V in the unit-coefficient form; ``i_exact``
    is the first integral with the exact polynomial coefficients.
    """

    params: EnvelopeParams
    rho0: float
    theta0: float
    t: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    parametrix: np.ndarray
    epsilon: np.ndarray
    theta_prime_minus_omega: np.ndarray
    theta_second: np.ndarray
    drho: np.ndarray
    integrals: np.ndarray
    i_exact: np.ndarray
    steps: int = 0
    rejected: int = 0

    def state(self, i: int) -> EnvelopeState:
        return EnvelopeState(float(self.t[i]), float(self.rho[i]), float(self.theta[i]))

    def __len__(self) -> int:
        return self.t.size


_STATUS = {
    kern.NEGATIVE_RHO: "rho became negative beyond -1e-12",
    kern.STEP_UNDERFLOW: "step size underflow",
    kern.MAX_STEPS: "maximum number of steps exceeded",
    kern.NON_FINITE: "non-finite state",
}


def integrate(
    params: EnvelopeParams,
    rho0: float,
    theta0: float,
    t_end: float,
    rtol: float = 1e-10,
    atol: Optional[Sequence[float]] = None,
    *,
    times: Optional[np.ndarray] = None,
    per_decade: int = 256,
    t_first: float = 1e-2,
    fixed_step: Optional[float] = None,
    max_steps: int = 50_000_000,
) -> EnvelopeTrajectory:
    """Integrate the envelope system and fill all diagnostics.

    Steps are adaptive (DOP853 pair, error measured on rho and theta - Omega t)
    unless ``fixed_step`` is given.  Output times default to :func:`log_times`.
    """
    if not (0 < rho0 <= params.delta0) and params.strict:
        raise InputError(f"need 0 < rho0 <= delta0, got rho0={rho0}")
    if rho0 < 0:
        raise InputError("rho0 must be non-negative")
    if rtol > 1e-9:
        raise InputError("relative tolerance must be at most 1e-9")
    ts = log_times(t_end, per_decade, t_first) if times is None else np.asarray(times, float)
    if ts[0] != 0.0 or np.any(np.diff(ts) <= 0):
        raise InputError("output times must start at 0 and increase")
    p = params.pack(rho0)
    y0 = np.zeros(kern.N_STATE)
    y0[0] = rho0
    y0[1] = theta0
    if atol is None:
        atol = (rtol * max(rho0, 1e-300), rtol)
    atol = np.asarray(atol, dtype=float)
    h0 = 0.01 / params.omega
    Y, status, acc, rej = kern.integrate_kernel(
        p, y0, ts, float(rtol), atol, h0, float(fixed_step or 0.0), int(max_steps)
    )
    if status != kern.OK:
        raise NumericalError(f"envelope integration failed: {_STATUS[status]}")
    rho = Y[:, 0]
    theta = Y[:, 1] + params.omega * ts
    rb = parametrix(ts, rho0, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(rb > 0, rho / rb - 1.0, 0.0)
    eps[0] = 0.0
    drho, dphi, d2 = _derivatives(p, ts, Y, params.omega)
    return EnvelopeTrajectory(
        params, rho0, theta0, ts, rho, theta, rb, eps, dphi, d2, drho,
        Y[:, 2:7].copy(), Y[:, 7].copy(), int(acc), int(rej),
    )


def _derivatives(p, ts, Y, omega):
    """rho', theta' - Omega and theta'' (centred difference along the flow)."""
    n = ts.size
    drho = np.empty(n)
    dphi = np.empty(n)
    d2 = np.empty(n)
    dy = np.zeros(kern.N_STATE)
    dyp = np.zeros(kern.N_STATE)
    dym = np.zeros(kern.N_STATE)
    work = np.zeros(4)
    h = 1e-4 / omega
    for i in range(n):
        y = Y[i]
        kern.rhs(ts[i], y, p, dy, work)
        drho[i] = dy[0]
        dphi[i] = dy[1]
        kern.rhs(ts[i] + h, y + h * dy, p, dyp, work)
        if ts[i] - h >= 0:
            kern.rhs(ts[i] - h, y - h * dy, p, dym, work)
            d2[i] = (dyp[1] - dym[1]) / (2.0 * h)
        else:
            d2[i] = (dyp[1] - dy[1]) / h
    return drho, dphi, d2


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class EpsilonReport:
    epsilon: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.epsilon)))


def epsilon_series(traj: EnvelopeTrajectory) -> EpsilonReport:
    """epsilon = rho / rho_bar - 1 and the residual of its evolution equation.

    The derivative epsilon' is formed from the sampled rho' and the analytic
    rho_bar', then compared with the right-hand side of the epsilon equation
    assembled term by term from its own coefficients.
    """
    par = traj.params
    rb = traj.parametrix
    if np.any((rb == 0) & (traj.rho > 0)):
        raise NumericalError("parametrix vanishes where rho does not")
    t = traj.t
    eps = traj.rho / rb - 1.0
    eps[0] = 0.0
    drb = parametrix_derivative(t, traj.rho0, par)
    deps = (traj.drho * rb - traj.rho * drb) / rb**2
    theta = traj.theta
    c = par.damping
    osc = 1.0 if par.oscillatory else 0.0
    g3 = (1.0 + eps) ** 3
    p = par.pack(traj.rho0)
    mre = np.empty(t.size)
    ere = np.empty(t.size)
    out = np.zeros(4)
    for i in range(t.size):
        kern.terms(t[i], traj.rho[i], theta[i], p, out)
        mre[i], ere[i] = out[2], out[3]
    rhs_eps = (
        -c * rb**4 * (10 * eps**2 + 10 * eps**3 + 5 * eps**4 + eps**5)
        - osc * par.osc_sin2 * rb**2 * g3 * np.sin(2 * theta)
        - osc * par.osc_quarter * rb**2 * g3 * np.sin(4 * theta)
        + (mre + ere) / rb
    )
    resid = deps + par.kappa_coeff * rb**4 * eps - rhs_eps
    return EpsilonReport(eps, resid)


@dataclass(frozen=True)
class DecayReport:
    ok: bool
    first_violation: Optional[float]
    tight_ok: bool
    tight_first_violation: Optional[float]
    min_ratio: float
    max_ratio: float
    tight_band: float


def check_decay_bounds(traj: EnvelopeTrajectory) -> DecayReport:
    """Check rho_bar/2 <= rho <= 3 rho_bar/2 and the (1 +- 2 sqrt(delta0)) band."""
    if len(traj) == 0:
        raise InputError("empty trajectory")
    ratio = np.where(traj.parametrix > 0, traj.rho / np.where(traj.parametrix > 0, traj.parametrix, 1.0), 1.0)
    bad = (ratio < 0.5) | (ratio > 1.5)
    band = 2.0 * math.sqrt(traj.params.delta0)
    tbad = (ratio < 1 - band) | (ratio > 1 + band)

    def first(mask):
        idx = np.flatnonzero(mask)
        return float(traj.t[idx[0]]) if idx.size else None

    return DecayReport(
        not bad.any(), first(bad), not tbad.any(), first(tbad),
        float(ratio.min()), float(ratio.max()), band,
    )


def fit_decay_exponent(traj: EnvelopeTrajectory, window: Tuple[float, float]) -> float:
    """Least-squares slope of log rho against log t on the window."""
    t_lo, t_hi = map(float, window)
    if t_lo <= 0 or t_hi < 10 * t_lo:
        raise WindowTooShortError(f"window {window} spans less than one decade")
    if t_hi > traj.t[-1] * (1 + 1e-12):
        raise WindowTooShortError(f"window ends after the trajectory (t_end={traj.t[-1]:g})")
    sel = (traj.t >= t_lo * (1 - 1e-12)) & (traj.t <= t_hi * (1 + 1e-12))
    if sel.sum() < 3:
        raise WindowTooShortError("fewer than three samples in the window")
    lt = np.log(traj.t[sel])
    lr = np.log(traj.rho[sel])
    return float(np.polyfit(lt, lr, 1)[0])


@dataclass(frozen=True)
class DriftReport:
    sup_dev: float
    ok: bool
    drift_c: float
    drift_exponent: float
    second_ok: bool
    max_second_ratio: float
    window: Tuple[float, float]


def theta_drift_check(
    traj: EnvelopeTrajectory, window: Optional[Tuple[float, float]] = None
) -> DriftReport:
    """Phase-drift diagnostics.

    sup |theta' - Omega| against delta0; fit of |theta - Omega t - theta0| by
    C t^(1/2) (t >= 1) and by a free power law on ``window`` (default: the
    last two decades); |theta''| against min((1+t)^(-1/2), delta0 (1+t)^(-1/4)).
    """
    par = traj.params
    t = traj.t
    sup_dev = float(np.max(np.abs(traj.theta_prime_minus_omega)))
    drift = np.abs(traj.theta - par.omega * t - traj.theta0)
    late = t >= 1.0
    if late.any():
        c_fit = float(np.sum(drift[late] * np.sqrt(t[late])) / np.sum(t[late]))
    else:
        c_fit = float("nan")
    if window is None:
        window = (t[-1] / 100.0, t[-1])
    sel = (t >= window[0]) & (t <= window[1]) & (drift > 0)
    if sel.sum() >= 3:
        expo = float(np.polyfit(np.log(t[sel]), np.log(drift[sel]), 1)[0])
    else:
        expo = 0.0
    bound2 = np.minimum((1 + t) ** -0.5, par.delta0 * (1 + t) ** -0.25)
    ratio2 = np.abs(traj.theta_second) / bound2
    return DriftReport(
        sup_dev, sup_dev <= par.delta0, c_fit, expo, bool(np.all(ratio2 <= 1.0)),
        float(ratio2.max()), (float(window[0]), float(window[1])),
    )


@dataclass(frozen=True)
class BootstrapReport:
    integrals: np.ndarray
    total: np.ndarray
    bound: np.ndarray
    ok: bool
    margin: float
    identity_residual: float
    iv_majorant: np.ndarray


def monitor_bootstrap_integrals(traj: EnvelopeTrajectory) -> BootstrapReport:
    """Integrals I..V accumulated along the run and the bound 2 sqrt(delta0)(1 + kappa t).

    ``identity_residual`` is max |(1 + kappa t) eps - (I_exact + II + III + IV_exact + V_exact)|
    where the exact versions carry the coefficients of the epsilon equation.
    ``iv_majorant`` is the non-oscillatory comparison integral of IV.
    """
    par = traj.params
    t = traj.t
    kap = par.kappa_coeff * traj.rho0**4
    wgt = 1.0 + kap * t
    ints = traj.integrals
    total = np.sum(np.abs(ints), axis=1)
    bound = 2.0 * math.sqrt(par.delta0) * wgt
    osc = 1.0 if par.oscillatory else 0.0
    exact_sum = (
        traj.i_exact + ints[:, 1] + ints[:, 2]
        - osc * par.osc_sin2 * ints[:, 3] - osc * par.osc_quarter * ints[:, 4]
    )
    ident = float(np.max(np.abs(wgt * traj.epsilon - exact_sum)))
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = float(np.min(np.where(total > 0, bound / total, np.inf)))
    if kap > 0:
        maj = traj.rho0**2 * (2.0 / (3.0 * kap)) * (wgt**1.5 - 1.0)
    else:
        maj = traj.rho0**2 * t
    return BootstrapReport(ints, total, bound, bool(np.all(total <= bound)), margin, ident, maj)


def trajectory_table(traj: EnvelopeTrajectory) -> Tuple[list, np.ndarray]:
    """Header and numeric columns for the CSV trajectory output."""
    header = [
        "t", "rho", "theta", "rho_parametrix", "epsilon", "theta_prime_minus_omega",
        "I", "II", "III", "IV", "V",
    ]
    cols = np.column_stack(
        [traj.t, traj.rho, traj.theta, traj.parametrix, traj.epsilon,
         traj.theta_prime_minus_omega, traj.integrals]
    )
    return header, cols
