"""HDG discretization and implicit solver.

Residuals follow the prototype S(t,q,u) + div T(t,q,u) = 0 with the time
derivative handled by method of lines: each DIRK stage solves the steady
problem with S replaced by S + time_weight (q - q_ref) / (a_ii dt).

The element weak residual f, the face flux-conservation residual g, and
the global residual h are linearized with forward-mode AD; the interior
blocks are condensed element by element into a sparse Schur system over
the face unknowns (A, B, C are never formed globally).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dual
from .basis import gauss_legendre, make_basis
from .mesh import FRAME_AXES, StructuredMesh
from .systems.base import (
    DirichletBC,
    InadmissibleStateError,
    NeumannBC,
    PdeModel,
    numerical_flux,
)


# ---------------------------------------------------------------------------
# DIRK schemes


@dataclass(frozen=True)
class DirkScheme:
    name: str
    a: np.ndarray       # lower triangular, nonzero diagonal
    b: np.ndarray
    order: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if np.any(np.triu(a, 1) != 0.0):
            raise ValueError("DIRK table must be lower triangular")
        if np.any(np.diag(a) <= 0.0):
            raise ValueError("DIRK diagonal entries must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))

    @property
    def stages(self) -> int:
        return self.a.shape[0]

    @property
    def c(self) -> np.ndarray:
        return self.a.sum(axis=1)

    @property
    def stiffly_accurate(self) -> bool:
        return bool(np.allclose(self.a[-1], self.b))


def _sdirk2():
    g = 1.0 - np.sqrt(2.0) / 2.0
    return DirkScheme("sdirk2", [[g, 0.0], [1.0 - g, g]], [1.0 - g, g], 2)


def _sdirk3():
    # Alexander's 3-stage, 3rd-order, L-stable SDIRK
    g = 0.435866521508459
    b1 = -1.5 * g * g + 4.0 * g - 0.25
    b2 = 1.5 * g * g - 5.0 * g + 1.25
    return DirkScheme(
        "sdirk3",
        [[g, 0.0, 0.0], [(1.0 - g) / 2.0, g, 0.0], [b1, b2, g]],
        [b1, b2, g], 3,
    )


DIRK_SCHEMES = {"sdirk2": _sdirk2(), "sdirk3": _sdirk3()}


# ---------------------------------------------------------------------------
# Field state


@dataclass
class FieldState:
    """Coefficients of (q_h, lambda_h, u).

    ``q``: (n_elems, n_fields, n_interior_nodes); ``lam[axis]``:
    (n_faces_axis, n_face_fields, n_face_nodes_axis); ``u``: (n_globals,).
    """

    q: np.ndarray
    lam: list
    u: np.ndarray

    def copy(self) -> "FieldState":
        return FieldState(self.q.copy(), [l.copy() for l in self.lam], self.u.copy())

    def axpy(self, alpha, dq, dlam, du) -> "FieldState":
        return FieldState(
            self.q + alpha * dq,
            [l + alpha * d for l, d in zip(self.lam, dlam)],
            self.u + alpha * du,
        )


@dataclass
class SchurSystem:
    S: sp.csr_matrix
    b: np.ndarray
    n_lam: int
    n_glob: int


@dataclass
class LocalFactors:
    """Per-element condensation factors; `gamma` may be shared when every
    element block is identical (linear constant-coefficient periodic runs).
    """

    xi: np.ndarray             # (n_elems, nq_dof)
    gamma: np.ndarray          # (n_elems, nq_dof, n_face_dof) or (nq_dof, n_face_dof)
    omega: np.ndarray | None   # (n_elems, nq_dof, n_glob)
    face_dofs: np.ndarray      # (n_elems, n_face_dof) global dof index or -1
    shared: bool


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    merit_history: list
    alphas: list
    message: str = ""


@dataclass
class NewtonConfig:
    tol: float = 1e-10
    step_tol: float = 1e-12
    max_iter: int = 50
    armijo: float = 1e-4
    backtrack: float = 0.5
    alpha_min: float = 1e-4
    line_search: bool = True
    # reuse the condensed Jacobian between iterations/steps (quasi-Newton);
    # it is rebuilt automatically whenever progress stalls
    reuse_jacobian: bool = True


def _kron3(ax, ay, az):
    return np.einsum("pa,qb,rc->pqrabc", ax, ay, az).reshape(
        ax.shape[0] * ay.shape[0] * az.shape[0],
        ax.shape[1] * ay.shape[1] * az.shape[1],
    )


class Discretization:
    """Tensor-product nodal HDG discretization of a model on a mesh.

    ``order`` may be a single integer or a per-axis triple; quadrature uses
    N+2 Gauss-Legendre points per axis with order N >= 1 (exact for the
    linear models, over-integrating nonlinear fluxes) and a single point on
    order-0 axes.
    """

    def __init__(self, model: PdeModel, mesh: StructuredMesh, order):
        if np.isscalar(order):
            order = (int(order),) * 3
        self.model = model
        self.mesh = mesh
        self.order = tuple(int(N) for N in order)
        self.bases = [make_basis(N) for N in self.order]
        self.nb = tuple(N + 1 for N in self.order)
        self.NB = int(np.prod(self.nb))
        # one extra point per axis to over-integrate nonlinear terms; a
        # single point is exact for the constant factors of order-0 axes
        self.nq = tuple(N + 2 if N >= 1 else 1 for N in self.order)
        self.NP = int(np.prod(self.nq))
        self.nf = model.n_fields
        self.nff = model.n_face_fields

        xq, wq, phi, dphi = [], [], [], []
        for d in range(3):
            x, w = gauss_legendre(self.nq[d])
            xq.append(x)
            wq.append(w)
            phi.append(self.bases[d].eval(x))
            dphi.append(self.bases[d].deriv(x))
        self.xq, self.wq = xq, wq

        h = mesh.h
        self.PHI = _kron3(phi[0], phi[1], phi[2])
        self.DPHI = [
            _kron3(*[(dphi[a] * 2.0 / h[a]) if a == d else phi[a] for a in range(3)])
            for d in range(3)
        ]
        self.W3 = np.einsum("p,q,r->pqr", wq[0], wq[1], wq[2]).ravel() * np.prod(h) / 8.0
        M3 = self.PHI.T @ (self.W3[:, None] * self.PHI)
        self.PROJ = np.linalg.solve(M3, self.PHI.T * self.W3)

        # reference quad coordinates (3, NP)
        grid = np.meshgrid(xq[0], xq[1], xq[2], indexing="ij")
        self.ref3 = np.stack([g.ravel() for g in grid])

        # per-axis face machinery; face tangent axes follow the face frame
        self.face_axes = [FRAME_AXES[d][1:] for d in range(3)]
        self.NBF, self.NPF = [], []
        self.LPHI, self.LPROJ, self.FW, self.QTR, self.fref = [], [], [], [], []
        for d in range(3):
            ta, tb = self.face_axes[d]
            npf = self.nq[ta] * self.nq[tb]
            nbf = self.nb[ta] * self.nb[tb]
            lphi = np.einsum("pa,qb->pqab", phi[ta], phi[tb]).reshape(npf, nbf)
            fw = np.outer(wq[ta], wq[tb]).ravel() * h[ta] * h[tb] / 4.0
            mf = lphi.T @ (fw[:, None] * lphi)
            self.LPHI.append(lphi)
            self.LPROJ.append(np.linalg.solve(mf, lphi.T * fw))
            self.FW.append(fw)
            self.NPF.append(npf)
            self.NBF.append(nbf)
            # element basis trace at face quad points, per side (lo=-1, hi=+1);
            # factors[a][p, q, n_a] with face point index (p_ta, p_tb) C-order
            P, Q = self.nq[ta], self.nq[tb]
            qtr = []
            for val in (-1.0, 1.0):
                tr = self.bases[d].eval(np.array([val]))[0]
                factors = [None, None, None]
                factors[d] = np.broadcast_to(tr, (P, Q, self.nb[d]))
                factors[ta] = np.broadcast_to(
                    phi[ta][:, None, :], (P, Q, self.nb[ta]))
                factors[tb] = np.broadcast_to(
                    phi[tb][None, :, :], (P, Q, self.nb[tb]))
                t3 = (factors[0][:, :, :, None, None]
                      * factors[1][:, :, None, :, None]
                      * factors[2][:, :, None, None, :])
                qtr.append(t3.reshape(npf, self.NB))
            self.QTR.append(qtr)
            grid2 = np.meshgrid(xq[ta], xq[tb], indexing="ij")
            self.fref.append(np.stack([g.ravel() for g in grid2]))

        self.n_lam_blk = [self.nff * self.NBF[d] for d in range(3)]
        self._init_face_dofs()

    def _init_face_dofs(self):
        mesh, model = self.mesh, self.model
        self.dirichlet = []
        self.neumann_bc = []
        for d in range(3):
            tags = mesh.face_tags[d]
            dmask = np.zeros(len(tags), dtype=bool)
            nmap = {}
            for i, tag in enumerate(tags):
                if tag is None:
                    continue
                if tag not in model.boundary:
                    raise ValueError(f"no boundary condition for tag {tag!r}")
                bc = model.boundary[tag]
                if isinstance(bc, DirichletBC):
                    dmask[i] = True
                elif isinstance(bc, NeumannBC):
                    nmap[i] = bc
                else:
                    raise TypeError(f"unknown BC type for tag {tag!r}")
            self.dirichlet.append(dmask)
            self.neumann_bc.append(nmap)

        # global dof numbering over non-Dirichlet faces, axis by axis
        self.face_dof_start = []
        offset = 0
        for d in range(3):
            start = np.full(self.mesh.n_faces_axis[d], -1, dtype=np.int64)
            free = np.flatnonzero(~self.dirichlet[d])
            start[free] = offset + np.arange(len(free)) * self.n_lam_blk[d]
            offset += len(free) * self.n_lam_blk[d]
            self.face_dof_start.append(start)
        self.n_lam_dof = offset
        self.nq_dof = self.nf * self.NB

        # element -> stacked face-slot dof map (x-lo, x-hi, y-lo, y-hi, z-lo, z-hi)
        cols = []
        for d in range(3):
            for side in range(2):
                faces = self.mesh.elem_faces[d][:, side]
                base = self.face_dof_start[d][faces]
                local = np.arange(self.n_lam_blk[d])
                c = base[:, None] + local[None, :]
                c[base < 0] = -1
                cols.append(c)
        self.elem_face_dofs = np.concatenate(cols, axis=1)
        self.slot_offsets = np.concatenate(
            [[0], np.cumsum([self.n_lam_blk[d] for d in range(3) for _ in range(2)])]
        )
        self.n_face_dof = int(self.slot_offsets[-1])

    # -- geometry ------------------------------------------------------------

    def volume_points(self) -> np.ndarray:
        """Global quad point coordinates, shape (3, n_elems, NP)."""
        c = self.mesh.element_centers.T[:, :, None]
        return c + (self.mesh.h[:, None, None] / 2.0) * self.ref3[:, None, :]

    def face_points(self, axis: int) -> np.ndarray:
        """Quad points of every axis-normal face, shape (3, n_faces, NPF)."""
        ta, tb = self.face_axes[axis]
        c = self.mesh.face_centers[axis].T[:, :, None]
        out = np.repeat(c, self.NPF[axis], axis=2).astype(float)
        out[ta] = c[ta] + (self.mesh.h[ta] / 2.0) * self.fref[axis][0]
        out[tb] = c[tb] + (self.mesh.h[tb] / 2.0) * self.fref[axis][1]
        return out

    # -- projections and evaluation -------------------------------------------

    def project_function(self, fn: Callable, t=None) -> np.ndarray:
        """L2-project a pointwise field function onto the interior space."""
        x = self.volume_points()
        vals = fn(x.reshape(3, -1)) if t is None else fn(x.reshape(3, -1), t)
        vals = np.asarray(vals).reshape(self.nf, self.mesh.n_elems, self.NP)
        return np.einsum("fep,bp->efb", vals, self.PROJ)

    def init_state(self, fn: Callable | None = None, t0: float = 0.0) -> FieldState:
        fn = fn if fn is not None else self.model.initial
        if fn is None:
            raise ValueError("model has no initial condition")
        q = self.project_function(fn)
        lam = self.trace_average(q)
        u = np.zeros(self.model.n_globals)
        return FieldState(q, lam, u)

    def trace_average(self, q) -> list:
        """Face coefficients from the mean of adjacent rotated interior traces."""
        lam = []
        for d in range(3):
            acc = np.zeros((self.mesh.n_faces_axis[d], self.nff, self.NPF[d]))
            cnt = np.zeros(self.mesh.n_faces_axis[d])
            for side in range(2):
                tr = np.einsum("efb,pb->efp", q, self.QTR[d][side])
                tr = tr[:, self.model.perm[d]][:, self.model.face_fields]
                faces = self.mesh.elem_faces[d][:, side]
                np.add.at(acc, faces, tr)
                np.add.at(cnt, faces, 1.0)
            acc /= np.maximum(cnt, 1.0)[:, None, None]
            lam.append(np.einsum("fIp,mp->fIm", acc, self.LPROJ[d]))
        return lam

    def eval_state(self, state: FieldState, ref_point) -> np.ndarray:
        """Field values at one reference point of every element, (nf, nE)."""
        px, py, pz = (self.bases[d].eval(np.array([ref_point[d]]))[0] for d in range(3))
        basis = np.einsum("a,b,c->abc", px, py, pz).ravel()
        return np.einsum("efb,b->fe", state.q, basis)

    def integrate(self, state: FieldState, fields=None) -> np.ndarray:
        """Volume integral of (selected) fields over the whole domain."""
        vals = np.einsum("efb,pb->efp", state.q, self.PHI)
        tot = np.einsum("efp,p->f", vals, self.W3)
        return tot if fields is None else tot[fields]


# ---------------------------------------------------------------------------
# Solver


class HdgSolver:
    """Implicit HDG solver: residuals, condensation, Newton, DIRK stepping."""

    def __init__(self, disc: Discretization, newton: NewtonConfig | None = None,
                 chunk_bytes: float = 2e8):
        self.disc = disc
        self.model = disc.model
        self.mesh = disc.mesh
        self.newton = newton or NewtonConfig()
        nE = self.mesh.n_elems
        per_elem = 8.0 * (disc.nq_dof + disc.n_face_dof) ** 2
        self.chunk = max(1, min(nE, int(chunk_bytes / max(per_elem, 1.0))))
        self._linear_cache = None
        self._frozen = None
        self._wt = self._weighted_tensors()
        self._scatter_cache = {}

    # -- shared helpers --------------------------------------------------------

    def _dirichlet_values(self, t):
        """Rotated kept-component coefficients of r(t) on Dirichlet faces."""
        out = []
        for d in range(3):
            vals = {}
            for f in np.flatnonzero(self.disc.dirichlet[d]):
                tag = self.mesh.face_tags[d][f]
                bc = self.model.boundary[tag]
                x = self.disc.face_points(d)[:, f]
                r = np.asarray(bc.state(t, x))
                r_rot = r[self.model.perm[d]][self.model.face_fields]
                vals[f] = np.einsum("Ip,mp->Im", r_rot, self.disc.LPROJ[d])
            out.append(vals)
        return out

    def apply_dirichlet(self, state: FieldState, t) -> None:
        for d, vals in enumerate(self._dirichlet_values(t)):
            for f, coeff in vals.items():
                state.lam[d][f] = coeff

    def _stage_source(self, t, q_pts, u, shift, qref_pts):
        s = self.model.source(t, q_pts, u)
        if shift != 0.0:
            w = self.model.time_weight[:, None]
            s = s + (q_pts - qref_pts) * (w * shift)
        return s

    def _check_admissible(self, q_pts):
        if self.model.check_admissible is not None:
            self.model.check_admissible(q_pts)

    # -- residuals -------------------------------------------------------------

    def residuals(self, state: FieldState, t, shift=0.0, qref=None):
        """Element residual f, per-axis face residuals g, global residual h."""
        d = self.disc
        model = self.model
        nE = self.mesh.n_elems
        q_pts = np.matmul(state.q, d.PHI.T).transpose(1, 0, 2).reshape(d.nf, -1)
        self._check_admissible(q_pts)
        qref_pts = None
        if shift != 0.0:
            qref_pts = np.matmul(qref, d.PHI.T).transpose(1, 0, 2).reshape(d.nf, -1)
        S = dual.value(self._stage_source(t, q_pts, state.u, shift, qref_pts))
        T = dual.value(model.flux(t, q_pts, state.u))
        S = S.reshape(d.nf, nE, d.NP)
        T = T.reshape(d.nf, 3, nE, d.NP)

        wt = self._wt
        f = np.tensordot(S, wt["F_vol"], axes=([2], [0])).transpose(1, 0, 2)
        for ax in range(3):
            f -= np.tensordot(T[:, ax], wt["F_div"][ax], axes=([2], [0])).transpose(1, 0, 2)

        g = [np.zeros((self.mesh.n_faces_axis[ax], d.nff, d.NBF[ax]))
             for ax in range(3)]
        for ax in range(3):
            for side_idx, sign in ((0, -1), (1, +1)):
                flux_rot, faces = self._face_flux_values(state, t, ax, side_idx, sign)
                f += np.tensordot(
                    flux_rot[model.iperm[ax]], wt[("FQ", ax, side_idx)],
                    axes=([2], [0]),
                ).transpose(1, 0, 2)
                kept = flux_rot[model.face_fields]
                contrib = np.tensordot(
                    kept, wt[("FL", ax)], axes=([2], [0])
                ).transpose(1, 0, 2)
                interior = ~self.disc.dirichlet[ax][faces]
                np.add.at(g[ax], faces[interior], contrib[interior])
            # Neumann data enters the face residual once per face
            for fidx, bc in self.disc.neumann_bc[ax].items():
                x = d.face_points(ax)[:, fidx]
                s_val = np.asarray(bc.flux(t, x))
                g[ax][fidx] -= np.tensordot(s_val, wt[("FL", ax)], axes=([1], [0]))

        h = (np.asarray(self.model.global_residual(t, state.u))
             if self.model.n_globals else np.zeros(0))
        return f, g, h

    def _face_trace(self, q, ax, side_idx):
        tr = np.matmul(q, self.disc.QTR[ax][side_idx].T).transpose(1, 0, 2)
        return tr[self.model.perm[ax]]

    def _face_flux_values(self, state, t, ax, side_idx, sign):
        """Rotated numerical flux values on one element side, (nf, nE, NPF)."""
        d = self.disc
        faces = self.mesh.elem_faces[ax][:, side_idx]
        q_rot = self._face_trace(state.q, ax, side_idx)
        lam_vals = np.matmul(state.lam[ax][faces], d.LPHI[ax].T).transpose(1, 0, 2)
        nf_rot = numerical_flux(
            self.model, t,
            q_rot.reshape(d.nf, -1),
            lam_vals.reshape(d.nff, -1),
            state.u, ax, sign,
        )
        return dual.value(nf_rot).reshape(d.nf, self.mesh.n_elems, d.NPF[ax]), faces

    def merit(self, state, t, shift=0.0, qref=None):
        try:
            f, g, h = self.residuals(state, t, shift, qref)
        except InadmissibleStateError:
            return np.inf
        return _norm(f) + sum(_norm(x) for x in g) + _norm(h)

    # -- Jacobian blocks --------------------------------------------------------

    def _weighted_tensors(self):
        """Precomputed quadrature-weighted basis products for contractions."""
        d = self.disc
        wt = {
            "G_vol": np.einsum("pa,pb,p->pab", d.PHI, d.PHI, d.W3),
            "G_div": [np.einsum("pa,pb,p->pab", d.DPHI[ax], d.PHI, d.W3)
                      for ax in range(3)],
            "F_vol": d.PHI * d.W3[:, None],
            "F_div": [d.DPHI[ax] * d.W3[:, None] for ax in range(3)],
        }
        for ax in range(3):
            fw, lphi = d.FW[ax], d.LPHI[ax]
            for side in range(2):
                qtr = d.QTR[ax][side]
                wt[("GQQ", ax, side)] = np.einsum("pa,pb,p->pab", qtr, qtr, fw)
                wt[("GQL", ax, side)] = np.einsum("pa,pm,p->pam", qtr, lphi, fw)
                wt[("GLQ", ax, side)] = np.einsum("pm,pb,p->pmb", lphi, qtr, fw)
                wt[("FQ", ax, side)] = qtr * fw[:, None]
            wt[("GLL", ax)] = np.einsum("pm,pn,p->pmn", lphi, lphi, fw)
            wt[("FL", ax)] = lphi * fw[:, None]
        return wt

    @staticmethod
    def _contract(J, G):
        """(rows, elems, pts, cols) x (pts, A, B) -> (elems, rows, A, cols, B)."""
        out = np.tensordot(J, G, axes=([2], [0]))
        return np.ascontiguousarray(out.transpose(1, 0, 3, 2, 4))

    def _element_blocks(self, state, t, shift, qref, elems):
        """Dense A, B, C, D blocks and residuals for a chunk of elements.

        Returns (A, B, C, D, f, g_rows) where B, C, D use the stacked
        six-face-slot layout of ``elem_face_dofs``.
        """
        d = self.disc
        model = self.model
        wt = self._wt
        ne = len(elems)
        nqd, nfd = d.nq_dof, d.n_face_dof
        q = state.q[elems]

        q_pts = np.matmul(q, d.PHI.T).transpose(1, 0, 2).reshape(d.nf, -1)
        self._check_admissible(q_pts)
        qref_pts = None
        if shift != 0.0:
            qref_pts = np.matmul(qref[elems], d.PHI.T).transpose(1, 0, 2).reshape(d.nf, -1)
        qd = dual.seed(q_pts)
        S = self._stage_source(t, qd, state.u, shift, qref_pts)
        T = model.flux(t, qd, state.u)
        Sv = S.val.reshape(d.nf, ne, d.NP)
        Tv = T.val.reshape(d.nf, 3, ne, d.NP)
        JS = S.der.reshape(d.nf, ne, d.NP, d.nf)
        JT = T.der.reshape(d.nf, 3, ne, d.NP, d.nf)

        f = np.tensordot(Sv, wt["F_vol"], axes=([2], [0])).transpose(1, 0, 2)
        A = self._contract(JS, wt["G_vol"])
        for ax in range(3):
            f -= np.tensordot(Tv[:, ax], wt["F_div"][ax], axes=([2], [0])).transpose(1, 0, 2)
            A -= self._contract(JT[:, ax], wt["G_div"][ax])

        B = np.zeros((ne, d.nf, d.NB, nfd))
        C = np.zeros((ne, nfd, d.nf, d.NB))
        D = np.zeros((ne, nfd, nfd))
        g_rows = np.zeros((ne, nfd))

        slot = 0
        for ax in range(3):
            iperm = model.iperm[ax]
            kept = model.face_fields
            blk = d.n_lam_blk[ax]
            for side_idx, sign in ((0, -1), (1, +1)):
                faces = self.mesh.elem_faces[ax][elems, side_idx]
                q_rot = self._face_trace(q, ax, side_idx)
                lam_vals = np.matmul(
                    state.lam[ax][faces], d.LPHI[ax].T
                ).transpose(1, 0, 2)
                qdr, lamd = dual.seed_pair(
                    q_rot.reshape(d.nf, -1), lam_vals.reshape(d.nff, -1)
                )
                nfl = numerical_flux(model, t, qdr, lamd, state.u, ax, sign)
                val = nfl.val.reshape(d.nf, ne, d.NPF[ax])
                der = nfl.der.reshape(d.nf, ne, d.NPF[ax], d.nf + d.nff)
                Jq = der[..., :d.nf][..., iperm]        # wrt global interior fields
                Jl = der[..., d.nf:]

                f += np.tensordot(
                    val[iperm], wt[("FQ", ax, side_idx)], axes=([2], [0])
                ).transpose(1, 0, 2)
                A += self._contract(Jq[iperm], wt[("GQQ", ax, side_idx)])
                Bblk = self._contract(
                    Jl[iperm], wt[("GQL", ax, side_idx)]
                ).reshape(ne, d.nf, d.NB, blk)
                B[..., slot:slot + blk] += Bblk

                interior = ~self.disc.dirichlet[ax][faces]
                gk = np.tensordot(
                    val[kept], wt[("FL", ax)], axes=([2], [0])
                ).transpose(1, 0, 2)
                Ck = self._contract(
                    Jq[kept], wt[("GLQ", ax, side_idx)]
                ).reshape(ne, blk, d.nf, d.NB)
                Dk = self._contract(Jl[kept], wt[("GLL", ax)]).reshape(ne, blk, blk)
                sl = slice(slot, slot + blk)
                g_rows[interior, sl] = g_rows[interior, sl] + \
                    gk.reshape(ne, blk)[interior]
                C[interior, sl] = C[interior, sl] + Ck[interior]
                D[np.ix_(interior, range(slot, slot + blk),
                         range(slot, slot + blk))] += Dk[interior]
                slot += blk

        A = A.reshape(ne, nqd, nqd)
        B = B.reshape(ne, nqd, nfd)
        C = C.reshape(ne, nfd, nqd)
        f = f.reshape(ne, nqd)
        return A, B, C, D, f, g_rows

    # -- assembly and condensation ----------------------------------------------

    def assemble_and_condense(self, state: FieldState, t, shift=0.0, qref=None,
                              reuse=False):
        """Schur system over (lambda, u) plus local recovery factors.

        With ``reuse=True`` a previously condensed Jacobian (same shift) is
        kept and only the residual-dependent right-hand side is rebuilt,
        giving a quasi-Newton step at a fraction of the assembly cost.
        """
        if self._use_linear_cache():
            return self._assemble_linear(state, t, shift, qref)
        frozen = self._frozen
        if reuse and frozen is not None and frozen["shift"] == shift:
            return self._rhs_only(state, t, shift, qref, frozen)
        return self._assemble_generic(state, t, shift, qref)

    def _use_linear_cache(self):
        m = self.model
        return (m.is_linear and m.constant_jacobian and m.n_globals == 0
                and not any(d.any() for d in self.disc.dirichlet)
                and not any(self.disc.neumann_bc))

    def _assemble_generic(self, state, t, shift, qref):
        d = self.disc
        nE = self.mesh.n_elems
        nqd, nfd = d.nq_dof, d.n_face_dof
        n_glob = self.model.n_globals
        n = d.n_lam_dof + n_glob

        xi = np.zeros((nE, nqd))
        gamma = np.zeros((nE, nqd, nfd))
        ainv = np.zeros((nE, nqd, nqd))
        cmat = np.zeros((nE, nfd, nqd))
        omega = np.zeros((nE, nqd, n_glob)) if n_glob else None
        b = np.zeros(n)
        rows_all, cols_all, vals_all = [], [], []

        for lo in range(0, nE, self.chunk):
            elems = np.arange(lo, min(lo + self.chunk, nE))
            A, B, C, D, f, g_rows = self._element_blocks(state, t, shift, qref, elems)
            try:
                ainv[elems] = np.linalg.inv(A)
            except np.linalg.LinAlgError as exc:
                conds = [np.linalg.cond(A[i]) for i in range(len(elems))]
                worst = int(elems[int(np.argmax(conds))])
                raise RuntimeError(
                    f"singular interior block in element {worst} "
                    f"(cond ~ {max(conds):.2e})"
                ) from exc
            xi[elems] = np.einsum("eij,ej->ei", ainv[elems], f)
            gamma[elems] = np.matmul(ainv[elems], B)
            cmat[elems] = C
            if n_glob:
                E = self._global_coupling_E(state, t, shift, qref, elems, f)
                omega[elems] = np.matmul(ainv[elems], E)

            Se = D - np.matmul(C, gamma[elems])
            be = np.einsum("eij,ej->ei", C, xi[elems]) - g_rows
            fd = d.elem_face_dofs[elems]
            mask = fd >= 0
            np.add.at(b, fd[mask], be[mask])
            key = (int(elems[0]), int(elems[-1]))
            cached = self._scatter_cache.get(key)
            if cached is None:
                r = np.repeat(fd[:, :, None], nfd, axis=2)
                c = np.repeat(fd[:, None, :], nfd, axis=1)
                keep = (r >= 0) & (c >= 0)
                cached = (r[keep], c[keep], keep)
                self._scatter_cache[key] = cached
            rows_all.append(cached[0])
            cols_all.append(cached[1])
            vals_all.append(Se[cached[2]])
            if n_glob:
                Fe = -np.einsum("eij,ejk->eik", C, omega[elems])
                gcols = d.n_lam_dof + np.arange(n_glob)
                rr = np.repeat(fd[:, :, None], n_glob, axis=2)
                cc = np.broadcast_to(gcols, rr.shape)
                km = rr >= 0
                rows_all.append(rr[km])
                cols_all.append(cc[km])
                vals_all.append(Fe[km])

        # Neumann data enters g as -int(s mu), hence +int(s mu) in b = -g + ...
        for ax in range(3):
            for fidx, bc in d.neumann_bc[ax].items():
                start = d.face_dof_start[ax][fidx]
                x = d.face_points(ax)[:, fidx]
                s_val = np.asarray(bc.flux(t, x))
                term = np.tensordot(s_val, self._wt[("FL", ax)], axes=([1], [0]))
                b[start:start + d.n_lam_blk[ax]] += term.ravel()

        if n_glob:
            K = self._global_K(state, t)
            gi = d.n_lam_dof + np.arange(n_glob)
            rows_all.append(np.repeat(gi, n_glob))
            cols_all.append(np.tile(gi, n_glob))
            vals_all.append(K.ravel())
            b[d.n_lam_dof:] -= np.asarray(self.model.global_residual(t, state.u))

        S = sp.coo_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(n, n),
        ).tocsr()
        factors = LocalFactors(xi=xi, gamma=gamma, omega=omega,
                               face_dofs=d.elem_face_dofs, shared=False)
        system = SchurSystem(S=S, b=b, n_lam=d.n_lam_dof, n_glob=n_glob)
        system.cached_solve = make_schur_solver(S, self.mesh, d)
        self._frozen = {
            "shift": shift, "ainv": ainv, "cmat": cmat, "gamma": gamma,
            "omega": omega, "S": S, "solve": system.cached_solve,
        }
        return system, factors

    def _rhs_only(self, state, t, shift, qref, frozen):
        """Right-hand side against a frozen condensed Jacobian."""
        d = self.disc
        n_glob = self.model.n_globals
        n = d.n_lam_dof + n_glob
        f_res, g_res, h_res = self.residuals(state, t, shift, qref)
        xi = np.einsum("eij,ej->ei", frozen["ainv"],
                       f_res.reshape(self.mesh.n_elems, -1))
        b = np.zeros(n)
        for ax in range(3):
            interior = ~d.dirichlet[ax]
            starts = d.face_dof_start[ax][interior]
            idx = (starts[:, None] + np.arange(d.n_lam_blk[ax])).ravel()
            b[idx] -= g_res[ax][interior].reshape(-1)
        be = np.einsum("eij,ej->ei", frozen["cmat"], xi)
        fd = d.elem_face_dofs
        mask = fd >= 0
        np.add.at(b, fd[mask], be[mask])
        if n_glob:
            b[d.n_lam_dof:] -= h_res
        factors = LocalFactors(xi=xi, gamma=frozen["gamma"], omega=frozen["omega"],
                               face_dofs=fd, shared=False)
        system = SchurSystem(S=frozen["S"], b=b, n_lam=d.n_lam_dof, n_glob=n_glob)
        system.cached_solve = frozen["solve"]
        return system, factors

    def _global_coupling_E(self, state, t, shift, qref, elems, f0):
        """E = df/du by central differences; |u| is small by assumption."""
        n_glob = self.model.n_globals
        E = np.zeros((len(elems), self.disc.nq_dof, n_glob))
        for j in range(n_glob):
            eps = 1e-7 * (1.0 + abs(state.u[j]))
            for sgn in (1.0, -1.0):
                up = state.u.copy()
                up[j] += sgn * eps
                st = FieldState(state.q, state.lam, up)
                fj, _, _ = self.residuals(st, t, shift, qref)
                E[:, :, j] += sgn * fj[elems].reshape(len(elems), -1) / (2 * eps)
        return E

    def _global_K(self, state, t):
        n_glob = self.model.n_globals
        K = np.zeros((n_glob, n_glob))
        for j in range(n_glob):
            eps = 1e-7 * (1.0 + abs(state.u[j]))
            up, um = state.u.copy(), state.u.copy()
            up[j] += eps
            um[j] -= eps
            K[:, j] = (
                np.asarray(self.model.global_residual(t, up))
                - np.asarray(self.model.global_residual(t, um))
            ) / (2 * eps)
        return K

    # linear constant-coefficient fast path: all element blocks are identical,
    # so the Jacobian and its condensation are computed once per (shift, dt)

    def _assemble_linear(self, state, t, shift, qref):
        d = self.disc
        nE = self.mesh.n_elems
        cache = self._linear_cache
        if cache is None or cache["shift"] != shift:
            A, B, C, D, _, _ = self._element_blocks(state, t, shift, qref, np.array([0]))
            A, B, C, D = A[0], B[0], C[0], D[0]
            lu = scipy.linalg.lu_factor(A)
            gamma = scipy.linalg.lu_solve(lu, B)
            Se = D - C @ gamma
            S = self._tile_schur(Se)
            cache = {
                "shift": shift, "lu": lu, "C": C, "gamma": gamma,
                "S": S, "solve": make_schur_solver(S, self.mesh, d),
            }
            self._linear_cache = cache

        f_res, g_res, _ = self.residuals(state, t, shift, qref)
        b = np.zeros(d.n_lam_dof)
        for ax in range(3):
            starts = d.face_dof_start[ax]
            idx = (starts[:, None] + np.arange(d.n_lam_blk[ax])).ravel()
            b[idx] -= g_res[ax].reshape(-1)
        xi = scipy.linalg.lu_solve(cache["lu"], f_res.reshape(nE, -1).T).T
        be = xi @ cache["C"].T
        fd = d.elem_face_dofs
        np.add.at(b, fd.ravel(), be.ravel())
        factors = LocalFactors(xi=xi, gamma=cache["gamma"], omega=None,
                               face_dofs=fd, shared=True)
        system = SchurSystem(S=cache["S"], b=b, n_lam=d.n_lam_dof, n_glob=0)
        system.cached_solve = cache["solve"]
        return system, factors

    def _tile_schur(self, Se):
        """Scatter one element's condensed block to all elements."""
        d = self.disc
        fd = d.elem_face_dofs
        nfd = d.n_face_dof
        n = d.n_lam_dof
        S = sp.csr_matrix((n, n))
        for i in range(6):
            si = slice(d.slot_offsets[i], d.slot_offsets[i + 1])
            ri = fd[:, si]
            for j in range(6):
                sj = slice(d.slot_offsets[j], d.slot_offsets[j + 1])
                blk = Se[si, sj]
                rows = np.repeat(ri, blk.shape[1], axis=1)
                cols = np.tile(fd[:, sj], (1, blk.shape[0]))
                vals = np.broadcast_to(blk.ravel(), (fd.shape[0], blk.size))
                S = S + sp.coo_matrix(
                    (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
                ).tocsr()
        return S

    # -- Schur solve and recovery -------------------------------------------------

    def solve_schur(self, system: SchurSystem):
        solver = getattr(system, "cached_solve", None)
        if solver is None:
            solver = make_schur_solver(system.S, self.mesh, self.disc)
        return solver(system.b)

    def recover_interior(self, factors: LocalFactors, dlam_flat, du=None):
        """Interior step direction via dq = -xi - Gamma dlam - Omega du."""
        pad = np.concatenate([dlam_flat, [0.0]])
        dl = pad[factors.face_dofs]  # -1 indexes the trailing zero
        if factors.shared:
            dq = -factors.xi - dl @ factors.gamma.T
        else:
            dq = -factors.xi - np.einsum("eij,ej->ei", factors.gamma, dl)
        if factors.omega is not None and du is not None and len(du):
            dq -= np.einsum("eij,j->ei", factors.omega, du)
        return dq

    def _split_dlam(self, dlam_flat):
        d = self.disc
        out = []
        for ax in range(3):
            arr = np.zeros((self.mesh.n_faces_axis[ax], d.n_lam_blk[ax]))
            interior = ~d.dirichlet[ax]
            starts = d.face_dof_start[ax][interior]
            idx = (starts[:, None] + np.arange(d.n_lam_blk[ax]))
            arr[interior] = dlam_flat[idx]
            out.append(arr.reshape(self.mesh.n_faces_axis[ax], d.nff, d.NBF[ax]))
        return out

    # -- Newton ---------------------------------------------------------------

    def newton_solve(self, state: FieldState, t, shift=0.0, qref=None,
                     config: NewtonConfig | None = None):
        cfg = config or self.newton
        st = state.copy()
        self.apply_dirichlet(st, t)
        merit0 = self.merit(st, t, shift, qref)
        if not np.isfinite(merit0):
            raise InadmissibleStateError("initial Newton guess is inadmissible")
        history, alphas = [merit0], []
        tol = cfg.tol * (1.0 + merit0)
        if merit0 < tol:
            return st, NewtonReport(True, 0, history, alphas, "already converged")

        it = 0
        while it < cfg.max_iter:
            reusing = (cfg.reuse_jacobian and self._frozen is not None
                       and self._frozen["shift"] == shift)
            system, factors = self.assemble_and_condense(
                st, t, shift, qref, reuse=cfg.reuse_jacobian
            )
            delta = self.solve_schur(system)
            dlam_flat = delta[:system.n_lam]
            du = delta[system.n_lam:]
            dq = self.recover_interior(factors, dlam_flat, du)
            dq = dq.reshape(st.q.shape)
            dlam = self._split_dlam(dlam_flat)

            step = _norm(dq) + _norm(dlam_flat) + _norm(du)
            merit_prev = history[-1]
            alpha = 1.0
            accepted = False
            while alpha >= cfg.alpha_min:
                trial = st.axpy(alpha, dq, dlam, du)
                m = self.merit(trial, t, shift, qref)
                if cfg.line_search:
                    ok = m * m <= (1.0 - 2.0 * cfg.armijo * alpha) * merit_prev**2
                else:
                    ok = np.isfinite(m)
                if ok:
                    accepted = True
                    break
                alpha *= cfg.backtrack
            if not accepted:
                if reusing:
                    # stale Jacobian; rebuild and retry this iteration
                    self._frozen = None
                    continue
                return st, NewtonReport(
                    False, it + 1, history, alphas,
                    f"line search failed (alpha < {cfg.alpha_min})",
                )
            st = trial
            history.append(m)
            alphas.append(alpha)
            it += 1
            if m < tol or alpha * step < cfg.step_tol:
                return st, NewtonReport(True, it, history, alphas, "converged")
            if reusing and m > 0.3 * merit_prev:
                # slow contraction with a frozen Jacobian: refresh
                self._frozen = None
        return st, NewtonReport(
            False, cfg.max_iter, history, alphas, "max iterations exceeded"
        )

    # -- DIRK time stepping -----------------------------------------------------

    def dirk_step(self, state: FieldState, t, dt, scheme: DirkScheme,
                  config: NewtonConfig | None = None):
        """Advance one implicit step; schemes are stiffly accurate, so the
        last stage is the new state."""
        if not scheme.stiffly_accurate:
            raise ValueError("only stiffly accurate DIRK schemes are supported")
        a, c = scheme.a, scheme.c
        q_n = state.q
        ks = []
        reports = []
        st = state
        for i in range(scheme.stages):
            qref = q_n.copy()
            for j in range(i):
                qref += dt * a[i, j] * ks[j]
            shift = 1.0 / (a[i, i] * dt)
            t_i = t + c[i] * dt
            try:
                st, report = self.newton_solve(st, t_i, shift, qref, config)
            except InadmissibleStateError as exc:
                raise RuntimeError(f"stage {i}: inadmissible state: {exc}") from exc
            if not report.converged:
                raise RuntimeError(f"stage {i}: Newton failed: {report.message}")
            reports.append(report)
            st.last_report = report
            st.stage_reports = reports
            ks.append((st.q - qref) * shift)
        return st

    def advance(self, state: FieldState, t0, dt, n_steps, scheme="sdirk2",
                config=None, callback=None):
        scheme = DIRK_SCHEMES[scheme] if isinstance(scheme, str) else scheme
        st, t = state, t0
        if callback is not None:
            callback(0, t, st)
        for step in range(n_steps):
            st = self.dirk_step(st, t, dt, scheme, config)
            t = t0 + (step + 1) * dt
            if callback is not None:
                callback(step + 1, t, st)
        return st, t


def _norm(x):
    x = np.asarray(x)
    return float(np.linalg.norm(x.ravel())) if x.size else 0.0


def make_schur_solver(S: sp.csr_matrix, mesh: StructuredMesh, disc: Discretization):
    """Direct factorization for small or quasi-1D systems, otherwise GMRES
    with a block-Jacobi (per-face block) preconditioner."""
    n = S.shape[0]
    quasi_1d = sorted(mesh.dims)[:2] == [1, 1]
    if n <= 4000 or quasi_1d:
        # direct factorization; cheap for banded quasi-1D and small systems,
        # but 3D fill-in makes it impractical beyond a few thousand unknowns
        lu = spla.splu(S.tocsc())
        return lambda b: lu.solve(b)

    # block-Jacobi preconditioner over per-face diagonal blocks
    blocks = []
    starts = []
    for ax in range(3):
        blk = disc.n_lam_blk[ax]
        for s in disc.face_dof_start[ax]:
            if s >= 0:
                starts.append((s, blk))
    inv_blocks = []
    Sc = S.tocsc()
    for s, blk in starts:
        inv_blocks.append((s, np.linalg.inv(Sc[s:s + blk, s:s + blk].toarray())))

    def precond(x):
        y = np.empty_like(x)
        for s, inv in inv_blocks:
            y[s:s + inv.shape[0]] = inv @ x[s:s + inv.shape[0]]
        return y

    M = spla.LinearOperator(S.shape, matvec=precond)

    def solve(b):
        scale = np.linalg.norm(b)
        if scale == 0.0:
            return np.zeros_like(b)
        x, info = spla.gmres(S, b, rtol=1e-12, atol=1e-14 * scale,
                             restart=100, maxiter=50, M=M)
        if info != 0:
            raise RuntimeError(f"GMRES failed to converge (info={info})")
        return x

    return solve
