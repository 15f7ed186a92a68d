"""Compiled right-hand side and embedded Runge-Kutta driver for the envelope system.

State layout (8 components)::

    0  rho
    1  phi = theta - Omega*t
    2  I   (unit-coefficient form)
    3  II
    4  III
    5  IV  (unit-coefficient form)
    6  V   (unit-coefficient form)
    7  I   with the exact coefficients of the epsilon equation

Only the first two components enter the error norm; the integrals are
quadratures driven by them.
"""
import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

# parameter vector layout
P_OMEGA = 0
P_DAMP = 1  # 3 lam^2 Gamma / (4 Omega)
P_SIN2 = 2  # (lam / Omega) |psi|_4^4
P_QUART = 3  # (lam / (2 Omega)) |psi|_4^4, multiplies sin 4theta and cos 4theta
P_SHIFT2 = 4  # (3 lam / (2 Omega)) |psi|_4^4
P_SHIFT4 = 5  # (3 lam^2 / (4 Omega)) [Lambda - 5 rho(Omega) + 3 rho(-Omega) + rho(-3 Omega)]
P_COS2 = 6  # (2 lam / Omega) |psi|_4^4
P_M = 7  # 10 entries: (re, im) for e^{4i}, e^{2i}, e^{-2i}, e^{-4i}, e^{-6i}
P_EAMP = 17  # amplitude * delta0^2
P_EEXP = 18  # 5/4 + delta
P_EFREQ = 19
P_KAPPA = 20  # 3 lam^2 Gamma rho0^4 / Omega
P_RHO0 = 21
P_OSC = 22
P_MON = 23
P_EON = 24
N_PARAMS = 25
N_STATE = 8

M_ORDERS = np.array([4.0, 2.0, -2.0, -4.0, -6.0])

N_STAGES = _dop.N_STAGES
A = np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES])
B = np.ascontiguousarray(_dop.B)
C = np.ascontiguousarray(_dop.C[:N_STAGES])
E3 = np.ascontiguousarray(_dop.E3)
E5 = np.ascontiguousarray(_dop.E5)

OK = 0
NEGATIVE_RHO = 1
STEP_UNDERFLOW = 2
MAX_STEPS = 3
NON_FINITE = 4


@njit(cache=True)
def terms(t, rho, theta, p, out):
    """Fill out[0..3] with (drho, dtheta - Omega, Re M, Re remainder)."""
    om = p[P_OMEGA]
    s2 = np.sin(2.0 * theta)
    s4 = np.sin(4.0 * theta)
    c2 = np.cos(2.0 * theta)
    c4 = np.cos(4.0 * theta)
    r2 = rho * rho
    r3 = r2 * rho
    r4 = r2 * r2
    drho = -p[P_DAMP] * r4 * rho
    dphi = -p[P_SHIFT2] * r2 - p[P_SHIFT4] * r4
    if p[P_OSC] != 0.0:
        drho -= p[P_SIN2] * r3 * s2 + p[P_QUART] * r3 * s4
        dphi -= p[P_COS2] * r2 * c2 + p[P_QUART] * r2 * c4
    mre = 0.0
    mim = 0.0
    if p[P_MON] != 0.0:
        r5 = r4 * rho
        for j in range(5):
            ang = M_ORDERS[j] * theta
            ca = np.cos(ang)
            sa = np.sin(ang)
            cr = p[P_M + 2 * j]
            ci = p[P_M + 2 * j + 1]
            mre += r5 * (cr * ca - ci * sa)
            mim += r5 * (cr * sa + ci * ca)
        drho += mre
        if rho > 0.0:
            dphi += mim / rho
    ere = 0.0
    if p[P_EON] != 0.0:
        e = p[P_EAMP] * (1.0 + t) ** (-p[P_EEXP]) * np.cos(p[P_EFREQ] * t)
        # e^{-i theta} e^{i Omega t} E with phase Omega t - theta
        ph = om * t - theta
        ere = e * np.cos(ph)
        drho += ere
        if rho > 0.0:
            dphi += e * np.sin(ph) / rho
    out[0] = drho
    out[1] = dphi
    out[2] = mre
    out[3] = ere


@njit(cache=True)
def rhs(t, y, p, dy, work):
    om = p[P_OMEGA]
    rho = y[0]
    theta = y[1] + om * t
    terms(t, rho, theta, p, work)
    dy[0] = work[0]
    dy[1] = work[1]
    kap = p[P_KAPPA]
    wgt = 1.0 + kap * t
    rb = p[P_RHO0] * wgt ** (-0.25)
    if rb > 0.0:
        eps = rho / rb - 1.0
        rb2 = rb * rb
        rb4 = rb2 * rb2
        e2 = eps * eps
        g = (1.0 + eps) ** 3
        dy[2] = wgt * rb4 * (e2 + e2 * eps + e2 * e2 + e2 * e2 * eps)
        dy[3] = wgt * work[3] / rb
        dy[4] = wgt * work[2] / rb
        if p[P_OSC] != 0.0:
            dy[5] = wgt * rb2 * g * np.sin(2.0 * theta)
            dy[6] = wgt * rb2 * g * np.sin(4.0 * theta)
        else:
            dy[5] = 0.0
            dy[6] = 0.0
        dy[7] = -wgt * p[P_DAMP] * rb4 * (
            10.0 * e2 + 10.0 * e2 * eps + 5.0 * e2 * e2 + e2 * e2 * eps
        )
    else:
        for k in range(2, N_STATE):
            dy[k] = 0.0


@njit(cache=True)
def integrate_kernel(p, y0, t_out, rtol, atol, h_init, h_fixed, max_steps):
    """Advance y0 through the increasing times t_out.

    Returns (Y, status, n_accepted, n_rejected).  With h_fixed > 0 every step
    has that length (shortened only to land on output times) and no error
    control is applied.
    """
    nout = t_out.size
    ny = y0.size
    nerr = 2
    Y = np.zeros((nout, ny))
    K = np.zeros((N_STAGES + 1, ny))
    work = np.zeros(4)
    ys = np.zeros(ny)
    ynew = np.zeros(ny)
    fnew = np.zeros(ny)
    y = y0.copy()
    t = t_out[0]
    Y[0] = y
    f = np.zeros(ny)
    rhs(t, y, p, f, work)
    h = h_init if h_fixed <= 0.0 else h_fixed
    accepted = 0
    rejected = 0
    for k in range(1, nout):
        target = t_out[k]
        while t < target:
            remaining = target - t
            clamped = False
            hh = h
            if hh >= remaining:
                hh = remaining
                clamped = True
            for j in range(ny):
                K[0, j] = f[j]
            for s in range(1, N_STAGES):
                for j in range(ny):
                    acc = 0.0
                    for q in range(s):
                        acc += A[s, q] * K[q, j]
                    ys[j] = y[j] + hh * acc
                rhs(t + C[s] * hh, ys, p, K[s], work)
            for j in range(ny):
                acc = 0.0
                for q in range(N_STAGES):
                    acc += B[q] * K[q, j]
                ynew[j] = y[j] + hh * acc
            rhs(t + hh, ynew, p, fnew, work)
            for j in range(ny):
                K[N_STAGES, j] = fnew[j]
            finite = True
            for j in range(ny):
                if not np.isfinite(ynew[j]):
                    finite = False
            if not finite:
                return Y, NON_FINITE, accepted, rejected
            factor = 1.0
            if h_fixed <= 0.0:
                e5 = 0.0
                e3 = 0.0
                for j in range(nerr):
                    sc = atol[j] + rtol * max(abs(y[j]), abs(ynew[j]))
                    a5 = 0.0
                    a3 = 0.0
                    for q in range(N_STAGES + 1):
                        a5 += E5[q] * K[q, j]
                        a3 += E3[q] * K[q, j]
                    e5 += (a5 / sc) ** 2
                    e3 += (a3 / sc) ** 2
                if e5 == 0.0 and e3 == 0.0:
                    enorm = 0.0
                else:
                    enorm = hh * e5 / np.sqrt((e5 + 0.01 * e3) * nerr)
                if enorm < 1.0:
                    factor = 10.0 if enorm == 0.0 else min(10.0, 0.9 * enorm ** (-1.0 / 8.0))
                else:
                    rejected += 1
                    h = hh * max(0.2, 0.9 * enorm ** (-1.0 / 8.0))
                    if h < 1e-14 * max(1.0, abs(t)):
                        return Y, STEP_UNDERFLOW, accepted, rejected
                    continue
            if clamped:
                t = target
            else:
                t = t + hh
            for j in range(ny):
                y[j] = ynew[j]
                f[j] = fnew[j]
            if y[0] < 0.0:
                if y[0] >= -1e-12:
                    y[0] = 0.0
                    rhs(t, y, p, f, work)
                else:
                    Y[k] = y
                    return Y, NEGATIVE_RHO, accepted, rejected
            accepted += 1
            if accepted > max_steps:
                return Y, MAX_STEPS, accepted, rejected
            if h_fixed <= 0.0:
                hn = hh * factor
                h = max(h, hn) if clamped else hn
        for j in range(ny):
            Y[k, j] = y[j]
    return Y, OK, accepted, rejected
