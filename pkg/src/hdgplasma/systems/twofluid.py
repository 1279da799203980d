"""Two-fluid plasma models: collisional (42 fields) and ideal (16 fields).

The collisional model evolves mass, momentum, and internal energy per
species plus Maxwell fields with mixed hyperbolic-parabolic divergence
cleaning.  Velocity gradients G = grad u and temperature gradients
h = grad T are first-order auxiliary fields (the viscous stress W is an
algebraic function of G), which keeps the non-conservative pressure work
term P div u expressible.  The ideal model evolves total energy and is
used for the linear stability analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from .. import dual
from .base import InadmissibleStateError, PdeModel


@dataclass(frozen=True)
class PlasmaParams:
    """Normalized physical constants of the two-fluid system."""

    gamma: float = 5.0 / 3.0
    m_i: float = 1.0
    m_e: float = 1.0 / 1836.0
    Z_i: float = 1.0
    Z_e: float = -1.0
    c_light: float = 1.0   # c0 / VA
    skin: float = 1.0      # delta_p / L
    c_h: float = 1.0       # hyperbolic cleaning speed
    c_p: float = 1.0       # parabolic cleaning damping
    mu_c: float = 0.0      # viscosity
    kappa_c: float = 0.0   # thermal diffusivity
    R_c: float = 0.0       # interspecies momentum transfer
    Q_c: float = 0.0       # interspecies heat transfer

    def __post_init__(self):
        for name in ("m_i", "m_e", "gamma", "c_light", "skin"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("mu_c", "kappa_c", "R_c", "Q_c", "c_h", "c_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def L_dp(self) -> float:
        """L / delta_p, the reciprocal normalized skin depth."""
        return 1.0 / self.skin

    @property
    def quasi_neutral_capable(self) -> bool:
        return self.Z_i * self.Z_e < 0

    def mass(self, species: str) -> float:
        return self.m_i if species == "i" else self.m_e

    def charge(self, species: str) -> float:
        return self.Z_i if species == "i" else self.Z_e


def _species_names(tag):
    names = [f"rho_{tag}"]
    names += [f"p{d}_{tag}" for d in "xyz"]
    names += [f"U_{tag}"]
    names += [f"G{r}{c}_{tag}" for r in "xyz" for c in "xyz"]
    names += [f"h{d}_{tag}" for d in "xyz"]
    return names


COLLISIONAL_FIELDS = (
    _species_names("i") + _species_names("e")
    + [f"E{d}" for d in "xyz"] + [f"B{d}" for d in "xyz"] + ["psi", "theta"]
)

IDEAL_FIELDS = (
    ["rho_i", "px_i", "py_i", "pz_i", "e_i",
     "rho_e", "px_e", "py_e", "pz_e", "e_e"]
    + [f"E{d}" for d in "xyz"] + [f"B{d}" for d in "xyz"]
)

# collisional layout offsets
_NSP = 17          # fields per species: rho, p(3), U, G(9), h(3)
_OFF = {"i": 0, "e": _NSP}
_E0, _B0, _PSI, _THETA = 34, 37, 40, 41


@dataclass
class TwoFluidState:
    """Pointwise two-fluid state in conserved variables.

    Gradient auxiliaries default to zero, which is exact for uniform and
    piecewise-constant initial data.
    """

    rho_i: float
    U_i: float
    rho_e: float
    U_e: float
    p_i: np.ndarray = dfield(default_factory=lambda: np.zeros(3))
    p_e: np.ndarray = dfield(default_factory=lambda: np.zeros(3))
    E: np.ndarray = dfield(default_factory=lambda: np.zeros(3))
    B: np.ndarray = dfield(default_factory=lambda: np.zeros(3))
    psi: float = 0.0
    theta: float = 0.0
    G_i: np.ndarray = dfield(default_factory=lambda: np.zeros((3, 3)))
    G_e: np.ndarray = dfield(default_factory=lambda: np.zeros((3, 3)))
    h_i: np.ndarray = dfield(default_factory=lambda: np.zeros(3))
    h_e: np.ndarray = dfield(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("p_i", "p_e", "E", "B", "h_i", "h_e"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.G_i = np.asarray(self.G_i, dtype=float).reshape(3, 3)
        self.G_e = np.asarray(self.G_e, dtype=float).reshape(3, 3)

    @classmethod
    def from_primitives(cls, params: PlasmaParams, n_i, n_e, U_i, U_e,
                        B=(0.0, 0.0, 0.0), E=(0.0, 0.0, 0.0),
                        u_i=(0.0, 0.0, 0.0), u_e=(0.0, 0.0, 0.0)):
        rho_i = params.m_i * n_i
        rho_e = params.m_e * n_e
        return cls(
            rho_i=rho_i, U_i=U_i, rho_e=rho_e, U_e=U_e,
            p_i=rho_i * np.asarray(u_i, dtype=float),
            p_e=rho_e * np.asarray(u_e, dtype=float),
            E=E, B=B,
        )

    # -- derived quantities (exact algebraic substitutions) -----------------

    def velocity(self, species: str) -> np.ndarray:
        return (self.p_i if species == "i" else self.p_e) / self.rho(species)

    def rho(self, species: str) -> float:
        return self.rho_i if species == "i" else self.rho_e

    def pressure(self, species: str, params: PlasmaParams) -> float:
        U = self.U_i if species == "i" else self.U_e
        return U * (params.gamma - 1.0)

    def temperature(self, species: str, params: PlasmaParams) -> float:
        return params.mass(species) * self.pressure(species, params) / self.rho(species)

    def charge_density(self, params: PlasmaParams) -> float:
        return (params.Z_i / params.m_i) * self.rho_i + (params.Z_e / params.m_e) * self.rho_e

    def current(self, params: PlasmaParams) -> np.ndarray:
        return (params.Z_i / params.m_i) * self.p_i + (params.Z_e / params.m_e) * self.p_e

    def total_energy(self, species: str) -> float:
        p = self.p_i if species == "i" else self.p_e
        U = self.U_i if species == "i" else self.U_e
        return U + 0.5 * float(p @ p) / self.rho(species)

    # -- packed layouts ------------------------------------------------------

    def collisional_array(self) -> np.ndarray:
        q = np.zeros(42)
        for tag in ("i", "e"):
            o = _OFF[tag]
            q[o] = self.rho(tag)
            q[o + 1:o + 4] = self.p_i if tag == "i" else self.p_e
            q[o + 4] = self.U_i if tag == "i" else self.U_e
            q[o + 5:o + 14] = (self.G_i if tag == "i" else self.G_e).ravel()
            q[o + 14:o + 17] = self.h_i if tag == "i" else self.h_e
        q[_E0:_E0 + 3] = self.E
        q[_B0:_B0 + 3] = self.B
        q[_PSI] = self.psi
        q[_THETA] = self.theta
        return q

    def ideal_array(self) -> np.ndarray:
        return np.concatenate([
            [self.rho_i], self.p_i, [self.total_energy("i")],
            [self.rho_e], self.p_e, [self.total_energy("e")],
            self.E, self.B,
        ])


def _cross(a, b):
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]


def _check_positive(q, slots, names, element_ids=None):
    bad = [n for s, n in zip(slots, names) if np.any(dual.value(q[s]) <= 0.0)]
    if bad:
        raise InadmissibleStateError(
            f"non-positive {', '.join(bad)} in evaluated state", element_ids
        )


def two_fluid_model(params: PlasmaParams, collisional: bool = True) -> PdeModel:
    """Two-fluid plasma PDE model; collisional (42 fields) or ideal (16)."""
    return _collisional_model(params) if collisional else _ideal_model(params)


def _collisional_model(p: PlasmaParams) -> PdeModel:
    gm1 = p.gamma - 1.0
    c2 = p.c_light**2
    ch2 = p.c_h**2
    cc = c2 * p.L_dp  # c0^2 L / (VA^2 delta_p)

    def species_flux(q, tag):
        o = _OFF[tag]
        m = p.mass(tag)
        rho = q[o]
        mom = [q[o + 1 + d] for d in range(3)]
        U = q[o + 4]
        G = [[q[o + 5 + 3 * r + c] for c in range(3)] for r in range(3)]
        h = [q[o + 14 + r] for r in range(3)]
        inv_rho = 1.0 / rho
        u = [mom[d] * inv_rho for d in range(3)]
        P = gm1 * U
        Tsc = m * P * inv_rho
        trG = G[0][0] + G[1][1] + G[2][2]
        mus = p.mu_c * np.sqrt(m)
        z = rho * 0.0

        rows = [mom]  # mass flux
        for r in range(3):
            rows.append([
                mom[r] * u[d]
                + ((P - mus * (2.0 * G[r][r] - (2.0 / 3.0) * trG)) if r == d
                   else (-mus * (G[r][d] + G[d][r])))
                for d in range(3)
            ])
        rows.append([U * u[d] - (p.kappa_c / np.sqrt(m)) * h[d] for d in range(3)])
        for r in range(3):
            for c in range(3):
                rows.append([-u[r] if d == c else z for d in range(3)])
        for r in range(3):
            rows.append([-Tsc if d == r else z for d in range(3)])
        return rows

    def flux(t, q, u_g):
        E = [q[_E0 + d] for d in range(3)]
        B = [q[_B0 + d] for d in range(3)]
        psi, theta = q[_PSI], q[_THETA]
        rows = species_flux(q, "i") + species_flux(q, "e")
        # T_E = -c^2 crossmat(B) - theta I; crossmat(v)[r,d] = eps_{rdk} v_k
        rows.append([-theta, -c2 * B[2], c2 * B[1]])
        rows.append([c2 * B[2], -theta, -c2 * B[0]])
        rows.append([-c2 * B[1], c2 * B[0], -theta])
        # T_B = crossmat(E) - psi I
        rows.append([-psi, E[2], -E[1]])
        rows.append([-E[2], -psi, E[0]])
        rows.append([E[1], -E[0], -psi])
        # cleaning equations scaled by c_h^2 so their time weight is 1
        rows.append([-ch2 * B[0], -ch2 * B[1], -ch2 * B[2]])
        rows.append([-ch2 * E[0], -ch2 * E[1], -ch2 * E[2]])
        return dual.stack([dual.stack(r) for r in rows])

    def species_source(q, tag, other):
        o = _OFF[tag]
        oo = _OFF[other]
        m = p.mass(tag)
        Z = p.charge(tag)
        rho = q[o]
        mom = [q[o + 1 + d] for d in range(3)]
        U = q[o + 4]
        G = [[q[o + 5 + 3 * r + c] for c in range(3)] for r in range(3)]
        h = [q[o + 14 + r] for r in range(3)]
        u = [mom[d] / rho for d in range(3)]
        u_b = [q[oo + 1 + d] / q[oo] for d in range(3)]
        P = gm1 * U
        Tsc = m * P / rho
        T_b = p.mass(other) * gm1 * q[oo + 4] / q[oo]
        E = [q[_E0 + d] for d in range(3)]
        B = [q[_B0 + d] for d in range(3)]
        pxB = _cross(mom, B)
        zl = Z * p.L_dp / m
        mus = p.mu_c * np.sqrt(m)
        trG = G[0][0] + G[1][1] + G[2][2]

        rows = [rho * 0.0]  # mass: pure conservation
        for r in range(3):
            rows.append(
                -p.R_c * rho * (u_b[r] - u[r]) - zl * (rho * E[r] + pxB[r])
            )
        # pressure work + viscous dissipation, contracted against G = grad u
        WG = sum(
            (G[r][c] + G[c][r]) * G[r][c] for r in range(3) for c in range(3)
        ) - (2.0 / 3.0) * trG * trG
        rows.append(-p.Q_c * (T_b - Tsc) + P * trG - mus * WG)
        for r in range(3):
            for c in range(3):
                rows.append(G[r][c])
        for r in range(3):
            rows.append(h[r])
        return rows

    def source(t, q, u_g):
        j = [
            (p.Z_i / p.m_i) * q[1 + d] + (p.Z_e / p.m_e) * q[_NSP + 1 + d]
            for d in range(3)
        ]
        rho_c = (p.Z_i / p.m_i) * q[0] + (p.Z_e / p.m_e) * q[_NSP]
        rows = species_source(q, "i", "e") + species_source(q, "e", "i")
        rows += [cc * j[d] for d in range(3)]
        rows += [q[0] * 0.0] * 3
        rows.append(ch2 * p.c_p * q[_PSI])
        rows.append(ch2 * (p.c_p * q[_THETA] + cc * rho_c))
        return dual.stack(rows)

    def tau(t, lam_rot, u_g, axis):
        # Rusanov speeds per physical block, evaluated at the trace; the
        # rotated layout puts the normal momentum at slot offset + 1
        entries = []
        for tag in ("i", "e"):
            o = _OFF[tag]
            rho = lam_rot[o]
            speed = dual.absolute(lam_rot[o + 1] / rho) + dual.sqrt(
                p.gamma * gm1 * lam_rot[o + 4] / rho
            )
            entries += [speed] * 5
            entries += [1.0 + 0.0 * dual.value(rho)] * 12
        entries += [p.c_light + 0.0 * dual.value(lam_rot[0])] * 8
        return dual.stack(entries)

    def check_admissible(q, element_ids=None):
        _check_positive(
            q, [0, 4, _NSP, _NSP + 4],
            ["rho_i", "U_i", "rho_e", "U_e"], element_ids,
        )

    # G = grad u and h = grad T are algebraic constraints: no d/dt weight
    wt = np.ones(42)
    for o in (_OFF["i"], _OFF["e"]):
        wt[o + 5:o + 17] = 0.0

    vec = [(1, 2, 3), (14, 15, 16), (18, 19, 20), (31, 32, 33),
           (_E0, _E0 + 1, _E0 + 2), (_B0, _B0 + 1, _B0 + 2)]
    ten = [tuple(range(5, 14)), tuple(range(22, 31))]
    # rotated slots with identically-zero normal flux that no kept flux row
    # reads: G_tb, G_bt, h_t, h_b per species
    elim = frozenset({10, 12, 15, 16, 27, 29, 32, 33})

    return PdeModel(
        name="two_fluid",
        field_names=list(COLLISIONAL_FIELDS),
        source=source,
        flux=flux,
        vector_blocks=vec,
        tensor_blocks=ten,
        eliminated=elim,
        tau=tau,
        time_weight=wt,
        check_admissible=check_admissible,
        params=p,
    )


def _ideal_model(p: PlasmaParams) -> PdeModel:
    gm1 = p.gamma - 1.0
    c2 = p.c_light**2
    cc = c2 * p.L_dp

    def species_terms(q, o):
        rho = q[o]
        mom = [q[o + 1 + d] for d in range(3)]
        e = q[o + 4]
        u = [mom[d] / rho for d in range(3)]
        P = gm1 * (e - 0.5 * (mom[0] * u[0] + mom[1] * u[1] + mom[2] * u[2]))
        return rho, mom, e, u, P

    def flux(t, q, u_g):
        rows = []
        for o in (0, 5):
            rho, mom, e, u, P = species_terms(q, o)
            rows.append(mom)
            for r in range(3):
                rows.append([mom[r] * u[d] + (P if r == d else rho * 0.0)
                             for d in range(3)])
            rows.append([(e + P) * u[d] for d in range(3)])
        E = [q[10 + d] for d in range(3)]
        B = [q[13 + d] for d in range(3)]
        z = q[0] * 0.0
        rows.append([z, -c2 * B[2], c2 * B[1]])
        rows.append([c2 * B[2], z, -c2 * B[0]])
        rows.append([-c2 * B[1], c2 * B[0], z])
        rows.append([z, E[2], -E[1]])
        rows.append([-E[2], z, E[0]])
        rows.append([E[1], -E[0], z])
        return dual.stack([dual.stack(r) for r in rows])

    def source(t, q, u_g):
        E = [q[10 + d] for d in range(3)]
        B = [q[13 + d] for d in range(3)]
        rows = []
        for o, m, Z in ((0, p.m_i, p.Z_i), (5, p.m_e, p.Z_e)):
            rho = q[o]
            mom = [q[o + 1 + d] for d in range(3)]
            zl = Z * p.L_dp / m
            pxB = _cross(mom, B)
            rows.append(rho * 0.0)
            for r in range(3):
                rows.append(-zl * (rho * E[r] + pxB[r]))
            rows.append(-zl * (mom[0] * E[0] + mom[1] * E[1] + mom[2] * E[2]))
        j = [(p.Z_i / p.m_i) * q[1 + d] + (p.Z_e / p.m_e) * q[6 + d]
             for d in range(3)]
        rows += [cc * j[d] for d in range(3)]
        rows += [q[0] * 0.0] * 3
        return dual.stack(rows)

    def tau(t, lam_rot, u_g, axis):
        entries = []
        for o in (0, 5):
            rho = lam_rot[o]
            mom_n = lam_rot[o + 1]
            e = lam_rot[o + 4]
            ke = 0.5 * (
                lam_rot[o + 1] ** 2 + lam_rot[o + 2] ** 2 + lam_rot[o + 3] ** 2
            ) / rho
            P = gm1 * (e - ke)
            entries += [dual.absolute(mom_n / rho) + dual.sqrt(p.gamma * P / rho)] * 5
        entries += [p.c_light + 0.0 * dual.value(lam_rot[0])] * 6
        return dual.stack(entries)

    def check_admissible(q, element_ids=None):
        _check_positive(q, [0, 5], ["rho_i", "rho_e"], element_ids)
        for o, name in ((0, "i"), (5, "e")):
            rho = dual.value(q[o])
            ke = 0.5 * sum(dual.value(q[o + 1 + d]) ** 2 for d in range(3)) / rho
            if np.any(dual.value(q[o + 4]) - ke <= 0.0):
                raise InadmissibleStateError(
                    f"non-positive internal energy for species {name}", element_ids
                )

    return PdeModel(
        name="two_fluid_ideal",
        field_names=list(IDEAL_FIELDS),
        source=source,
        flux=flux,
        vector_blocks=[(1, 2, 3), (6, 7, 8), (10, 11, 12), (13, 14, 15)],
        # normal E and B components carry no normal flux without cleaning
        eliminated=frozenset({10, 13}),
        tau=tau,
        check_admissible=check_admissible,
        params=p,
    )


def ideal_jacobians(state: TwoFluidState, params: PlasmaParams):
    """Pointwise 1D flux and source Jacobians (J_A, J_S) of the ideal system.

    Follows the convention dq/dt + J_A dq/dx = J_S q, so J_S is the negative
    Jacobian of the prototype-form source.
    """
    model = _ideal_model(params)
    q = state.ideal_array()
    model.check_admissible(q)
    qd = dual.seed(q)
    J_A = model.flux(0.0, qd, None).der[:, 0, :]
    J_S = -model.source(0.0, qd, None).der
    return J_A, J_S


def lr_dispersion(k, params: PlasmaParams, state: TwoFluidState, branch=+1):
    """Real frequencies of the L/R circularly polarized electron modes.

    Solves c^2 k^2 / omega^2 = 1 - omega_pe^2 / (omega (omega +/- omega_ce))
    with B along x; ``branch`` selects the sign in the resonance factor.
    """
    if branch not in (+1, -1):
        raise ValueError("branch must be +1 or -1")
    c = params.c_light
    n_e = state.rho_e / params.m_e
    w_pe = c * params.L_dp * np.sqrt(n_e * params.Z_e**2 / params.m_e)
    w_ce = params.L_dp * abs(params.Z_e) * np.linalg.norm(state.B) / params.m_e
    s = float(branch)
    # omega^2 (omega +/- w_ce) - w_pe^2 omega - c^2 k^2 (omega +/- w_ce) = 0
    coeffs = [1.0, s * w_ce, -(w_pe**2 + c**2 * k**2), -s * c**2 * k**2 * w_ce]
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots))].real
    if real.size == 0:
        raise RuntimeError("no real dispersion roots found")
    return np.sort(real)
