"""Von Neumann stability analysis for the explicit RKDG discretization.

The semi-discrete operator D(kh) is the single-wavenumber symbol of a 1D
nodal DG discretization of the ideal two-fluid system, built from the flux
and source Jacobians (J_A, J_S), per-block Rusanov speeds, and the
reference mass/advection/lift operators.  Its eigenvalues, swept over
kh in [0, 2 pi], must lie inside a time integrator's region of absolute
stability for the explicit scheme to be stable.

The source-term spectrum (eigenvalues of J_S) is also available in closed
form: zero, a plasma-oscillation pair, and pairs from the roots of a cubic
whose roots are provably real and non-positive for quasi-neutral states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import RefBasis1D, make_basis
from .systems.twofluid import PlasmaParams, TwoFluidState, ideal_jacobians

# ideal 1D field layout: ion block, electron block, Maxwell block
_ION_SLOTS = slice(0, 5)
_ELECTRON_SLOTS = slice(5, 10)
_EM_SLOTS = slice(10, 16)
N_IDEAL_FIELDS = 16


# ---------------------------------------------------------------------------
# source spectrum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpectrum:
    """Closed-form eigenvalue data of the pointwise source Jacobian J_S."""

    lambda_S: np.ndarray   # all distinct eigenvalues (complex)
    z_roots: np.ndarray    # roots of the cubic (complex dtype, real values)
    a2: float
    a1: float
    a0: float
    Gamma_a: float
    Gamma_b: float
    Delta: float
    omega_p_tau: float
    omega_p_i: float
    omega_p_e: float
    omega_c_i: float
    omega_c_e: float


@dataclass(frozen=True)
class HurwitzReport:
    """Numeric verdicts on the source-cubic stability properties."""

    discriminant_ok: bool    # Delta >= -tol * scale (three real roots)
    hurwitz_ok: bool         # a2 a1 > a0 when a0 != 0 (left half plane)
    roots_real_ok: bool      # imaginary parts below tolerance
    roots_nonpositive_ok: bool
    a0_zero: bool            # degenerate branch (e.g. B = 0)

    @property
    def all_ok(self) -> bool:
        return (self.discriminant_ok and self.hurwitz_ok
                and self.roots_real_ok and self.roots_nonpositive_ok)


def _solve_cubic(a2, a1, a0):
    """Roots of z^3 + a2 z^2 + a1 z + a0 with three real roots expected.

    Uses the trigonometric method on the depressed cubic; falls back to a
    companion-matrix solve when near-degeneracy makes it unreliable.
    """
    p = a1 - a2**2 / 3.0
    q = 2.0 * a2**3 / 27.0 - a2 * a1 / 3.0 + a0
    scale = max(abs(a2), abs(a1) ** 0.5, abs(a0) ** (1.0 / 3.0), 1.0)
    if p < 0.0:
        m = 2.0 * np.sqrt(-p / 3.0)
        arg = np.clip(3.0 * q / (p * m), -1.0, 1.0)
        theta = np.arccos(arg) / 3.0
        k = np.arange(3)
        roots = m * np.cos(theta - 2.0 * np.pi * k / 3.0) - a2 / 3.0
        resid = np.abs(((roots + a2) * roots + a1) * roots + a0)
        if resid.max() <= 1e-8 * scale**3:
            return roots.astype(complex)
    return np.roots([1.0, a2, a1, a0])


def source_spectrum(state: TwoFluidState, params: PlasmaParams) -> SourceSpectrum:
    """Closed-form eigenvalues of the source Jacobian of the ideal system.

    Only quasi-neutral-capable parameter sets (Z_i Z_e < 0) are accepted;
    the realness/negativity properties of the cubic roots rely on it.
    """
    if not params.quasi_neutral_capable:
        raise ValueError("source spectrum requires oppositely charged species"
                         " (Z_i * Z_e < 0)")
    c = params.c_light
    c2 = c * c
    n_i = state.rho_i / params.m_i
    n_e = state.rho_e / params.m_e
    wpi2 = n_i * params.Z_i**2 / params.m_i
    wpe2 = n_e * params.Z_e**2 / params.m_e
    B2 = float(state.B @ state.B)
    wci = np.sqrt(params.Z_i**2 / params.m_i**2 * B2)
    wce = np.sqrt(params.Z_e**2 / params.m_e**2 * B2)

    a2 = wci**2 + wce**2 + 2.0 * (wpi2 + wpe2) * c2
    a1 = (wci**2 * wce**2
          + 2.0 * (wpi2 * wce**2 + wpe2 * wci**2) * c2
          + (wpi2 + wpe2) ** 2 * c2**2)
    sgn = np.sign(params.Z_i * params.Z_e)
    a0 = (wpe2 * wci + sgn * wpi2 * wce) ** 2 * c2**2
    z = _solve_cubic(a2, a1, a0)
    # a0 cancels exactly for quasi-neutral states with |Z_i| = |Z_e|; snap
    # the roundoff-sized root to zero so sqrt(z) does not inflate the noise
    z_scale = float(np.abs(z).max())
    z[np.abs(z) <= 1e-10 * z_scale] = 0.0

    # discriminant of the monic cubic; >= 0 means three real roots
    Delta = (18.0 * a2 * a1 * a0 - 4.0 * a2**3 * a0
             + a2**2 * a1**2 - 4.0 * a1**3 - 27.0 * a0**2)
    den_a = wci * (wci + wce)
    den_b = wce * (wci + wce)
    Gamma_a = wpe2 * c2 / den_a if den_a > 0.0 else np.inf
    Gamma_b = wpi2 * c2 / den_b if den_b > 0.0 else np.inf

    w_p_tau = c * params.L_dp
    osc = w_p_tau * np.sqrt(wpi2 + wpe2)
    lam = np.concatenate([
        [0.0 + 0.0j],
        [1j * osc, -1j * osc],
        params.L_dp * np.sqrt(z.astype(complex)),
        -params.L_dp * np.sqrt(z.astype(complex)),
    ])
    return SourceSpectrum(
        lambda_S=lam, z_roots=z, a2=float(a2), a1=float(a1), a0=float(a0),
        Gamma_a=float(Gamma_a), Gamma_b=float(Gamma_b), Delta=float(Delta),
        omega_p_tau=float(w_p_tau),
        omega_p_i=float(np.sqrt(wpi2)), omega_p_e=float(np.sqrt(wpe2)),
        omega_c_i=float(wci), omega_c_e=float(wce),
    )


def hurwitz_checks(spec: SourceSpectrum, tol: float = 1e-10) -> HurwitzReport:
    """Verify the proven cubic properties numerically; never raises."""
    d_scale = max(abs(18.0 * spec.a2 * spec.a1 * spec.a0),
                  abs(4.0 * spec.a2**3 * spec.a0),
                  (spec.a2 * spec.a1) ** 2,
                  4.0 * abs(spec.a1) ** 3,
                  27.0 * spec.a0**2, 1.0)
    z_scale = max(1.0, float(np.abs(spec.z_roots).max()))
    a0_zero = spec.a0 == 0.0
    return HurwitzReport(
        discriminant_ok=spec.Delta >= -tol * d_scale,
        hurwitz_ok=a0_zero or (spec.a2 * spec.a1 > spec.a0),
        roots_real_ok=bool(np.abs(spec.z_roots.imag).max() <= tol * z_scale),
        roots_nonpositive_ok=bool(spec.z_roots.real.max() <= tol * z_scale),
        a0_zero=bool(a0_zero),
    )


# ---------------------------------------------------------------------------
# semi-discrete operator
# ---------------------------------------------------------------------------


def rusanov_speeds(state: TwoFluidState, params: PlasmaParams) -> np.ndarray:
    """Per-block Rusanov speeds (tau_i, tau_e, tau_EM) at a uniform state."""
    out = []
    for sp in ("i", "e"):
        u_x = state.velocity(sp)[0]
        P = state.pressure(sp, params)
        out.append(abs(u_x) + np.sqrt(params.gamma * P / state.rho(sp)))
    out.append(params.c_light)
    return np.array(out)


@dataclass(frozen=True)
class SemiDiscreteOperator:
    """Single-wavenumber symbol of the 1D explicit DG discretization.

    Works for any hyperbolic-plus-source system given its pointwise
    Jacobians and per-field penalty speeds; the two-fluid constructor is
    :func:`semi_discrete_operator`.
    """

    order: int
    h: float
    J_A: np.ndarray
    J_S: np.ndarray
    tau: np.ndarray          # per-field penalty speed
    basis: RefBasis1D

    @property
    def n_fields(self) -> int:
        return self.J_A.shape[0]

    @property
    def size(self) -> int:
        return self.n_fields * self.basis.n

    def matrix(self, kh: float) -> np.ndarray:
        """Complex D(kh) such that dG/dt = D G for Fourier mode e^{jkx}."""
        b = self.basis
        minv = np.linalg.inv(b.mass) * (2.0 / self.h)
        vol = minv @ b.advection.T
        lm, lp = b.lift_minus, b.lift_plus
        em = np.exp(-1j * kh)
        ep = np.exp(1j * kh)
        # jump penalty and central average of the upwind-split face flux
        pen = 0.5 * (minv @ (np.outer(lm, lp * em - lm)
                             - np.outer(lp, lp - lm * ep)))
        avg = 0.5 * (minv @ (np.outer(lm, lm + lp * em)
                             - np.outer(lp, lp + lm * ep)))
        return (np.kron(self.J_A, vol + avg)
                + np.kron(self.J_S, np.eye(b.n))
                + np.kron(np.diag(self.tau), pen))


def semi_discrete_operator(state: TwoFluidState, params: PlasmaParams,
                           N: int, h: float) -> SemiDiscreteOperator:
    """Two-fluid operator at a uniform background state."""
    J_A, J_S = ideal_jacobians(state, params)
    tau_i, tau_e, tau_em = rusanov_speeds(state, params)
    tau = np.empty(N_IDEAL_FIELDS)
    tau[_ION_SLOTS] = tau_i
    tau[_ELECTRON_SLOTS] = tau_e
    tau[_EM_SLOTS] = tau_em
    return SemiDiscreteOperator(order=N, h=float(h), J_A=J_A, J_S=J_S,
                                tau=tau, basis=make_basis(N))


def assemble_D(kh: float, state: TwoFluidState, params: PlasmaParams,
               N: int, h: float) -> np.ndarray:
    """D(kh) for the ideal two-fluid system; shape 16(N+1) square."""
    return semi_discrete_operator(state, params, N, h).matrix(kh)


@dataclass(frozen=True)
class EigencurveSet:
    """Eigenvalues of D as a parametric function of kh in [0, 2 pi]."""

    kh: np.ndarray            # (samples,)
    eigenvalues: np.ndarray   # (samples, size), unsorted per sample
    order: int
    h: float
    lambda_S: np.ndarray | None = None


def eigencurves(state: TwoFluidState, params: PlasmaParams, N: int, h: float,
                samples: int = 257) -> EigencurveSet:
    """Dense eigensolve of D over a uniform kh sweep including endpoints."""
    if samples < 2:
        raise ValueError("eigencurve sweep needs at least 2 samples")
    op = semi_discrete_operator(state, params, N, h)
    kh = np.linspace(0.0, 2.0 * np.pi, samples)
    eigs = np.empty((samples, op.size), dtype=complex)
    for i, k in enumerate(kh):
        eigs[i] = np.linalg.eigvals(op.matrix(k))
    lam_S = source_spectrum(state, params).lambda_S \
        if params.quasi_neutral_capable else None
    return EigencurveSet(kh=kh, eigenvalues=eigs, order=N, h=float(h),
                         lambda_S=lam_S)


# ---------------------------------------------------------------------------
# explicit stability bounds
# ---------------------------------------------------------------------------

# stability polynomial coefficients R(z) = sum c_k z^k, low order first
RK_SCHEMES = {
    "fe": np.array([1.0, 1.0]),
    "rk4": np.array([1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0]),
}


def stability_polynomial(rk: str):
    """R(z) evaluator of an explicit scheme; |R| <= 1 is the stable region."""
    try:
        coeffs = RK_SCHEMES[rk]
    except KeyError:
        raise ValueError(f"unknown explicit scheme {rk!r}; "
                         f"have {sorted(RK_SCHEMES)}") from None
    return lambda z: np.polynomial.polynomial.polyval(z, coeffs)


def max_stable_dt(curves, rk: str = "rk4", rel_tol: float = 1e-4,
                  margin: float = 1e-12) -> float:
    """Largest dt with every eigenvalue inside the scheme's stable region.

    ``curves`` is an :class:`EigencurveSet` or a plain array of eigenvalues.
    Bisection to ``rel_tol`` relative on |R(lambda dt)| <= 1 + margin.
    """
    lam = curves.eigenvalues if isinstance(curves, EigencurveSet) else curves
    lam = np.asarray(lam, dtype=complex).ravel()
    lam = lam[np.abs(lam) > 0.0]
    if lam.size == 0:
        return np.inf
    R = stability_polynomial(rk)

    def stable(dt):
        return np.abs(R(lam * dt)).max() <= 1.0 + margin

    hi = 10.0 / np.abs(lam).max()
    while stable(hi):
        hi *= 2.0
        if hi > 1e12:
            return np.inf
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def timestep_gain(implicit_dt: float, curves, rk: str = "rk4") -> float:
    """Implicit-over-explicit timestep ratio for a given explicit scheme."""
    return implicit_dt / max_stable_dt(curves, rk)
