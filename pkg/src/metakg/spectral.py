"""Radial discretization of B^2 = -Laplacian + V + m^2 and the resonance constants.

Radial functions u(r) are represented through v = r*u on the interior nodes
r_i = i*dr, i = 1..n, with v(0) = v(r_max) = 0.  The operator acting on v is
the symmetric tridiagonal matrix tridiag(-1, 2, -1)/dr^2 + diag(V + m^2).

Inner products of u-functions use the weights 4*pi*r_i^2*dr, so that the map
u -> r*sqrt(4*pi*dr)*u is an isometry onto Euclidean R^n.  In that picture the
orthonormal eigenvectors of the matrix are the discrete B^2 eigenfunctions and
every spectral quantity below is an exact finite sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    BoundStateError,
    GridMismatchError,
    InputError,
    NoResonanceError,
    NumericalError,
    ResolutionError,
)

RESONANT = "3omega+i0"
ZETA_KEYS = ("omega", "-omega", "-3omega", RESONANT)
DEFAULT_LADDER = (4.0, 6.0, 8.0, 12.0)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid on (0, r_max) with n interior nodes.

    Attributes
    ----------
    r_max : float
        Domain radius.
    n : int
        Number of interior nodes; ``dr = r_max / (n + 1)``.
    """

    r_max: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.r_max) and self.r_max > 0):
            raise InputError(f"r_max must be positive and finite, got {self.r_max}")
        if int(self.n) != self.n or self.n < 16:
            raise InputError(f"need at least 16 interior nodes, got n={self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def dr(self) -> float:
        return self.r_max / (self.n + 1)

    @cached_property
    def r(self) -> np.ndarray:
        """Interior nodes."""
        return self.dr * np.arange(1, self.n + 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Inner-product weights 4*pi*r_i^2*dr on the interior nodes."""
        return 4.0 * np.pi * self.r**2 * self.dr

    @cached_property
    def scale(self) -> np.ndarray:
        """Isometry factor r*sqrt(4*pi*dr) taking u-functions to Euclidean vectors."""
        return self.r * math.sqrt(4.0 * np.pi * self.dr)

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Weights on all n+2 nodes (origin and r_max included) for int f 4 pi r^2 dr.

        Gregory end corrections (3/8, 7/6, 23/24) make the rule exact for cubic
        integrands.  The weight at the origin is zero because of the r^2 factor.
        """
        h = self.dr
        g = np.ones(self.n + 2)
        g[[0, -1]] = 3.0 / 8.0
        g[[1, -2]] = 7.0 / 6.0
        g[[2, -3]] = 23.0 / 24.0
        rf = h * np.arange(self.n + 2)
        return 4.0 * np.pi * rf**2 * h * g

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integrate a callable f(r) against 4*pi*r^2 dr over [0, r_max]."""
        rf = self.dr * np.arange(self.n + 2)
        vals = np.asarray(f(rf), dtype=float)
        return float(np.sum(self.quadrature_weights * vals))

    def inner(self, f: np.ndarray, g: np.ndarray):
        """Grid inner product of two u-functions (complex-conjugates f)."""
        self._check(f)
        self._check(g)
        return np.sum(self.weights * np.conj(f) * g)

    def norm(self, f: np.ndarray) -> float:
        return float(math.sqrt(np.sum(self.weights * np.abs(f) ** 2)))

    def lp_norm(self, f: np.ndarray, p: float) -> float:
        """Radial L^p norm (sum_i w_i |f_i|^p)^(1/p)."""
        self._check(f)
        return float(np.sum(self.weights * np.abs(f) ** p) ** (1.0 / p))

    def _check(self, f: np.ndarray) -> None:
        if np.shape(f)[-1:] != (self.n,):
            raise GridMismatchError(
                f"grid function of shape {np.shape(f)} does not match n={self.n}"
            )


# ---------------------------------------------------------------------------
# potentials


class PotentialKind(str, Enum):
    GAUSSIAN = "gaussian_well"
    SECH2 = "sech2_well"
    TABULATED = "tabulated"


@dataclass(frozen=True, eq=False)
class Potential:
    """Radial potential V(r).

    Built-in families are attractive wells ``-depth * exp(-r^2 / width^2)`` and
    ``-depth * sech(r / width)^2``.  A tabulated potential is a pair of
    arrays (r, V) interpolated linearly and set to zero past the last sample.
    """

    kind: PotentialKind
    depth: float = 0.0
    width: float = 1.0
    samples: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        try:
            kind = PotentialKind(self.kind)
        except ValueError as exc:
            raise InputError(f"unknown potential kind {self.kind!r}") from exc
        object.__setattr__(self, "kind", kind)
        if kind is PotentialKind.TABULATED:
            if self.samples is None:
                raise InputError("tabulated potential needs samples (r, V)")
            rs, vs = (np.asarray(a, dtype=float) for a in self.samples)
            if rs.shape != vs.shape or rs.ndim != 1 or rs.size < 2:
                raise InputError("tabulated samples must be two equal 1-D arrays")
            object.__setattr__(self, "samples", (rs, vs))
        elif not (self.width > 0):
            raise InputError(f"well width must be positive, got {self.width}")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind is PotentialKind.GAUSSIAN:
            return -self.depth * np.exp(-((r / self.width) ** 2))
        if self.kind is PotentialKind.SECH2:
            return -self.depth / np.cosh(np.minimum(r / self.width, 350.0)) ** 2
        rs, vs = self.samples
        return np.interp(r, rs, vs, left=vs[0], right=0.0)

    def with_depth(self, depth: float) -> "Potential":
        return Potential(self.kind, depth, self.width, self.samples)

    def decay_constant(self, grid: RadialGrid, delta: float = 6.0) -> float:
        """Return C with |V(r)| <= C (1 + r^2)^(-delta/2) on the grid.

        Raises if the weighted profile is not dominated by its inner half,
        which signals a potential that does not decay faster than r^-delta.
        """
        if delta <= 5:
            raise InputError("decay exponent must exceed 5")
        wv = np.abs(self(grid.r)) * (1.0 + grid.r**2) ** (delta / 2.0)
        half = grid.n // 2
        c = float(np.max(wv))
        if np.max(wv[half:]) > np.max(wv[:half]):
            raise InputError("potential does not decay like (1+r^2)^(-delta/2) on this grid")
        return c


# ---------------------------------------------------------------------------
# operator


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Tridiagonal B^2 on v = r*u with its full eigendecomposition.

    ``eigenvalues`` are ascending; column k of ``eigvecs`` is the Euclidean
    orthonormal eigenvector in the v-picture, so the u-space eigenfunction is
    ``eigvecs[:, k] / grid.scale``.
    """

    grid: RadialGrid
    mass: float
    potential: Potential
    potential_values: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray
    eigenvalues: np.ndarray
    eigvecs: np.ndarray

    @cached_property
    def mu(self) -> np.ndarray:
        """Square roots of the eigenvalues (frequencies of B)."""
        if self.eigenvalues[0] <= 0:
            raise NumericalError("B^2 has a non-positive eigenvalue; B is undefined")
        return np.sqrt(self.eigenvalues)

    def to_modes(self, f: np.ndarray) -> np.ndarray:
        """Coefficients <phi_k, f> of a u-function (last axis is space)."""
        self.grid._check(f)
        return (np.asarray(f) * self.grid.scale) @ self.eigvecs

    def from_modes(self, c: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_modes`."""
        return (self.eigvecs @ c) / self.grid.scale

    def mode(self, k: int) -> np.ndarray:
        return self.eigvecs[:, k] / self.grid.scale

    def apply(self, f: np.ndarray) -> np.ndarray:
        """B^2 f for a u-function f, via the tridiagonal matrix."""
        self.grid._check(f)
        v = f * self.grid.r
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out / self.grid.r

    def continuum_mask(self) -> np.ndarray:
        return self.eigenvalues >= self.mass**2


def build_operator(potential: Potential, grid: RadialGrid, mass: float) -> DiscreteOperator:
    """Assemble B^2 on the grid and cache its eigendecomposition."""
    if not (np.isfinite(mass) and mass > 0):
        raise InputError(f"mass must be positive, got {mass}")
    vals = potential(grid.r)
    if not np.all(np.isfinite(vals)):
        raise InputError("potential has non-finite samples on the grid")
    dr = grid.dr
    diag = 2.0 / dr**2 + vals + mass**2
    off = np.full(grid.n - 1, -1.0 / dr**2)
    w, q = eigh_tridiagonal(diag, off)
    return DiscreteOperator(grid, float(mass), potential, vals, diag, off, w, q)


def _lowest_eigenvalues(potential: Potential, grid: RadialGrid, mass: float, count: int = 2):
    vals = potential(grid.r)
    dr = grid.dr
    diag = 2.0 / dr**2 + vals + mass**2
    off = np.full(grid.n - 1, -1.0 / dr**2)
    return eigh_tridiagonal(
        diag, off, eigvals_only=True, select="i", select_range=(0, count - 1)
    )


# ---------------------------------------------------------------------------
# bound state


@dataclass(frozen=True, eq=False)
class BoundState:
    """Normalized ground state of B^2 in the u-representation."""

    omega: float
    psi: np.ndarray
    psi4: float
    grid: RadialGrid
    index: int = 0


def compute_bound_state(op: DiscreteOperator, require_unique: bool = True) -> BoundState:
    """Smallest eigenpair below m^2, as u = v/r with unit L^2 norm and psi > 0 at its peak."""
    m2 = op.mass**2
    below = int(np.sum(op.eigenvalues < m2))
    if below == 0:
        raise BoundStateError("no eigenvalue below m^2: potential too shallow")
    if below > 1 and require_unique:
        raise BoundStateError(f"{below} eigenvalues below m^2: potential too deep")
    if op.eigenvalues[0] <= 0:
        raise BoundStateError("lowest eigenvalue of B^2 is not positive")
    v = op.eigvecs[:, 0]
    v = v * np.sign(v[np.argmax(np.abs(v))])
    psi = v / op.grid.scale
    psi = psi / op.grid.norm(psi)
    psi4 = float(np.sum(op.grid.weights * psi**4))
    return BoundState(float(math.sqrt(op.eigenvalues[0])), psi, psi4, op.grid)


def tune_potential_depth(
    family: Union[str, PotentialKind],
    sigma: float,
    mass: float,
    target_band: Tuple[float, float],
    grid: RadialGrid,
    depth_bracket: Tuple[float, float] = (1e-8, 1e8),
    max_steps: int = 100,
) -> Potential:
    """Bisect the well depth until the unique bound-state frequency lies in the band.

    The depth is bisected geometrically inside ``depth_bracket`` (in units of
    m^2).  Deeper wells lower Omega monotonically.
    """
    lo_band, hi_band = map(float, target_band)
    if not lo_band < hi_band:
        raise InputError(f"empty target band {target_band}")
    if hi_band >= mass:
        raise InputError("target band must lie below the mass (Omega < m)")
    if lo_band <= mass / 3:
        raise NoResonanceError("no resonance: target band must lie above m/3 so that 3*Omega is in the continuum")
    kind = PotentialKind(family)
    if kind is PotentialKind.TABULATED:
        raise InputError("depth tuning applies to the built-in families only")
    m2 = mass**2
    lo, hi = depth_bracket[0] * m2, depth_bracket[1] * m2
    for _ in range(max_steps):
        mid = math.sqrt(lo * hi)
        pot = Potential(kind, mid, sigma)
        e0, e1 = _lowest_eigenvalues(pot, grid, mass)
        if e0 >= m2:
            lo = mid
            continue
        om = math.sqrt(e0) if e0 > 0 else 0.0
        if om > hi_band:
            lo = mid
        elif om < lo_band:
            hi = mid
        else:
            if e1 < m2:
                raise BoundStateError(
                    "band reached only with a second bound state; pick a narrower well"
                )
            return pot
    raise BoundStateError(f"band {target_band} unreachable after {max_steps} bisection steps")


def apply_pc(bs: BoundState, f: np.ndarray) -> np.ndarray:
    """Continuum projection f - <psi, f> psi."""
    f = np.asarray(f)
    if f.shape[-1:] != bs.psi.shape:
        raise GridMismatchError(f"shape {f.shape} does not match bound state {bs.psi.shape}")
    a = np.sum(bs.grid.weights * bs.psi * f, axis=-1)
    return f - np.multiply.outer(a, bs.psi) if f.ndim > 1 else f - a * bs.psi


def functional_calculus(
    op: DiscreteOperator, g: Callable[[np.ndarray], np.ndarray], f: np.ndarray
) -> np.ndarray:
    """Evaluate g(B) f = sum_k g(mu_k) <phi_k, f> phi_k."""
    vals = np.asarray(g(op.mu))
    if vals.shape != op.mu.shape:
        vals = np.broadcast_to(vals, op.mu.shape)
    if not np.all(np.isfinite(vals)):
        raise InputError("spectral function is not finite at every eigenvalue")
    return op.from_modes(vals * op.to_modes(f))


# ---------------------------------------------------------------------------
# resonance constants


def carrier(bs: BoundState) -> np.ndarray:
    """P_c psi^3."""
    return apply_pc(bs, bs.psi**3)


def carrier_coefficients(op: DiscreteOperator, bs: BoundState) -> np.ndarray:
    """Coefficients c_k = <phi_k, P_c psi^3>; the bound-state entry is set to zero."""
    c = op.to_modes(carrier(bs))
    c[bs.index] = 0.0
    return c


def level_spacing(op: DiscreteOperator, z: float, half_width: int = 5) -> float:
    """Mean spacing of the frequencies mu_k near z."""
    mu = op.mu
    i = int(np.searchsorted(mu, z))
    lo, hi = max(i - half_width, 1), min(i + half_width, mu.size - 1)
    if hi - lo < 2:
        raise ResolutionError("too few modes near the resonant frequency")
    return float(np.mean(np.diff(mu[lo : hi + 1])))


def _check_resonance(op: DiscreteOperator, bs: BoundState) -> float:
    z = 3.0 * bs.omega
    if z <= op.mass:
        raise NoResonanceError(
            f"no resonance: 3*Omega = {z:.6g} lies below the continuum threshold m = {op.mass:.6g}"
        )
    if z >= op.mu[-1]:
        raise ResolutionError("3*Omega exceeds the largest grid frequency")
    return z


@dataclass(frozen=True)
class LadderExtrapolation:
    """Regularized values on an eps ladder and their polynomial limit at eps = 0.

    ``limit`` interpolates all ladder points by a polynomial in eps;
    ``sub_limit`` uses only the smallest len-1 points.  G(3*Omega + i*eps) is
    analytic in eps, so its real and imaginary parts carry a linear term and
    the interpolant is taken in eps itself.
    """

    eps: np.ndarray
    values: np.ndarray
    limit: float
    sub_limit: float

    def __float__(self) -> float:
        return float(self.limit)


def _lagrange_at_zero(x: np.ndarray, y: np.ndarray) -> float:
    total = 0.0
    for j in range(x.size):
        wj = 1.0
        for i in range(x.size):
            if i != j:
                wj *= (0.0 - x[i]) / (x[j] - x[i])
        total += wj * y[j]
    return float(total)


def regularized_resolvent(
    op: DiscreteOperator, bs: BoundState, eps: Union[float, np.ndarray]
) -> np.ndarray:
    """G(3*Omega + i*eps) = <P_c psi^3, B^-1 (B - 3*Omega - i*eps)^-1 P_c psi^3>."""
    c2 = carrier_coefficients(op, bs) ** 2
    keep = np.arange(op.mu.size) != bs.index
    mu = op.mu[keep]
    return resolvent_sum(mu, c2[keep] / mu, 3.0 * bs.omega, eps)


def resolvent_sum(mu: np.ndarray, weights: np.ndarray, z: float, eps) -> np.ndarray:
    """sum_k weights_k / (mu_k - z - i eps) for each eps."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    return np.array([np.sum(weights / (mu - z - 1j * e)) for e in eps])


def resolvent_ladder(
    op: DiscreteOperator, bs: BoundState, ladder: Sequence[float] = DEFAULT_LADDER
) -> Tuple[LadderExtrapolation, LadderExtrapolation]:
    """Extrapolated (Gamma, Lambda) ladders from eps = factor * local level spacing."""
    z = _check_resonance(op, bs)
    eps = np.sort(np.asarray(ladder, dtype=float)) * level_spacing(op, z)
    g = regularized_resolvent(op, bs, eps)
    out = []
    for vals in (g.imag, g.real):
        out.append(
            LadderExtrapolation(
                eps,
                vals,
                _lagrange_at_zero(eps, vals),
                _lagrange_at_zero(eps[:-1], vals[:-1]),
            )
        )
    return out[0], out[1]


def distorted_wave(op: DiscreteOperator, frequency: float) -> np.ndarray:
    """Generalized eigenfunction of the grid operator at B = frequency, in the u-picture.

    The discrete radial equation is solved by forward recurrence from the
    origin; far from the well the solution is a discrete sine of wavenumber
    kappa with (2/dr) sin(kappa dr / 2) = sqrt(frequency^2 - m^2).  It is
    scaled to unit density in the spectral variable mu, i.e. to the
    large-box limit phi_k / sqrt(d mu).
    """
    grid = op.grid
    dr = grid.dr
    k2 = frequency**2 - op.mass**2
    if k2 <= 0:
        raise NoResonanceError("distorted wave requested below the continuum threshold")
    s = math.sqrt(k2) * dr / 2.0
    if s >= 1.0:
        raise ResolutionError("frequency above the grid band edge")
    kap_dr = 2.0 * math.asin(s)
    n = grid.n
    coef = 2.0 + dr**2 * (op.potential_values + op.mass**2 - frequency**2)
    v = np.empty(n + 2)
    v[0], v[1] = 0.0, 1.0
    for j in range(1, n + 1):
        v[j + 1] = coef[j - 1] * v[j] - v[j - 1]
    outer = slice(3 * n // 4, n)
    vj, vj1 = v[1:-1][outer], v[2:][outer]
    amp2 = (vj**2 + vj1**2 - 2.0 * vj * vj1 * math.cos(kap_dr)) / math.sin(kap_dr) ** 2
    amp2 = float(np.mean(amp2))
    target = dr * frequency / (2.0 * np.pi**2 * math.sin(kap_dr))
    ev = v[1:-1] * math.sqrt(target / amp2)
    return ev / grid.r


@dataclass(frozen=True)
class GammaEstimate:
    """Golden-rule constant from the eps ladder, with the distorted-wave cross-check."""

    value: float
    method_b: float
    ladder: LadderExtrapolation

    @property
    def relative_disagreement(self) -> float:
        return abs(self.value - self.method_b) / max(abs(self.method_b), 1e-300)

    def __float__(self) -> float:
        return float(self.value)


def gamma_distorted_wave(op: DiscreteOperator, bs: BoundState) -> float:
    """Gamma = (pi / (3 Omega)) <e_{3 Omega}, P_c psi^3>^2."""
    z = _check_resonance(op, bs)
    e = distorted_wave(op, z)
    ov = float(np.sum(op.grid.weights * e * carrier(bs)))
    return math.pi / (3.0 * bs.omega) * ov**2


def compute_gamma(
    op: DiscreteOperator,
    bs: BoundState,
    ladder: Sequence[float] = DEFAULT_LADDER,
    max_disagreement: float = 0.05,
) -> GammaEstimate:
    """Golden-rule constant by eps-ladder extrapolation and by the distorted wave."""
    gam, _ = resolvent_ladder(op, bs, ladder)
    gb = gamma_distorted_wave(op, bs)
    est = GammaEstimate(float(gam.limit), gb, gam)
    if est.relative_disagreement > max_disagreement:
        raise ResolutionError(
            f"Gamma methods disagree: ladder {est.value:.6g} vs distorted wave {gb:.6g}"
        )
    return est


def compute_lambda_pv(
    op: DiscreteOperator,
    bs: BoundState,
    ladder: Sequence[float] = DEFAULT_LADDER,
    cauchy_tol: float = 0.02,
) -> LadderExtrapolation:
    """Principal-value constant Lambda from the real part of the eps ladder.

    Convergence is judged by comparing the full-ladder limit with the limit of
    the smallest three rungs, relative to |Lambda - i Gamma|.
    """
    gam, lam = resolvent_ladder(op, bs, ladder)
    scale = math.hypot(gam.limit, lam.limit)
    if abs(lam.limit - lam.sub_limit) > cauchy_tol * scale:
        raise NumericalError(
            f"Lambda extrapolation not convergent: {lam.limit:.6g} vs {lam.sub_limit:.6g}"
        )
    return lam


def resolvent_form(op: DiscreteOperator, bs: BoundState, zeta) -> complex:
    """rho(zeta) = <P_c psi^3, B^-1 (B - zeta)^-1 P_c psi^3>.

    ``zeta`` is a real number off the continuum, a complex number off the
    real axis, or the string ``"3omega+i0"`` for the boundary value, which is
    assembled as Lambda - i Gamma.
    """
    if isinstance(zeta, str):
        if zeta != RESONANT:
            raise InputError(f"unknown spectral point {zeta!r}")
        gam, lam = resolvent_ladder(op, bs)
        return complex(lam.limit, -gam.limit)
    zeta = complex(zeta)
    keep = np.arange(op.mu.size) != bs.index
    mu = op.mu[keep]
    if zeta.imag == 0.0 and mu[0] <= zeta.real <= mu[-1]:
        raise InputError(
            "zeta lies inside the continuous spectrum; use the '3omega+i0' boundary value"
        )
    c2 = carrier_coefficients(op, bs)[keep] ** 2
    val = complex(np.sum(c2 / (mu * (mu - zeta))))
    return complex(val.real, 0.0) if zeta.imag == 0.0 else val


# ---------------------------------------------------------------------------
# packaged constants


@dataclass(frozen=True)
class SpectralData:
    """Constants entering the envelope equations."""

    omega: float
    gamma: float
    gamma_b: float
    lambda_pv: float
    rho_bar: Dict[str, complex]
    psi4: float
    mass: float
    coupling: float

    def __post_init__(self):
        if self.gamma < 0:
            raise NumericalError("Gamma must be non-negative")
        if self.coupling == 0:
            raise InputError("coupling must be nonzero")
        missing = set(ZETA_KEYS) - set(self.rho_bar)
        if missing:
            raise InputError(f"rho_bar lacks values at {sorted(missing)}")

    def rho_bar_fn(self, key: str) -> complex:
        return self.rho_bar[key]

    def to_json(self) -> dict:
        rb = {}
        for k, v in self.rho_bar.items():
            v = complex(v)
            rb[k] = v.real if v.imag == 0 else {"re": v.real, "im": v.imag}
        return {
            "omega": self.omega,
            "gamma_A": self.gamma,
            "gamma_B": self.gamma_b,
            "lambda_pv": self.lambda_pv,
            "rho_bar": rb,
            "psi4": self.psi4,
            "mass": self.mass,
            "coupling": self.coupling,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SpectralData":
        rb = {}
        for k, v in d["rho_bar"].items():
            rb[k] = complex(v["re"], v["im"]) if isinstance(v, dict) else complex(v)
        return cls(
            d["omega"], d["gamma_A"], d["gamma_B"], d["lambda_pv"], rb, d["psi4"],
            d["mass"], d["coupling"],
        )


def compute_spectral_data(
    op: DiscreteOperator, bs: BoundState, coupling: float, ladder: Sequence[float] = DEFAULT_LADDER
) -> SpectralData:
    """All constants for one scenario."""
    gam = compute_gamma(op, bs, ladder)
    lam = compute_lambda_pv(op, bs, ladder)
    om = bs.omega
    rho = {
        "omega": resolvent_form(op, bs, om),
        "-omega": resolvent_form(op, bs, -om),
        "-3omega": resolvent_form(op, bs, -3.0 * om),
        RESONANT: complex(lam.limit, -gam.value),
    }
    return SpectralData(
        om, gam.value, gam.method_b, float(lam.limit), rho, bs.psi4, op.mass, float(coupling)
    )
