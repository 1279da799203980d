"""1D nodal reference bases and quadrature rules.

Nodal Lagrange bases on Gauss-Lobatto points supply the mass matrix,
advection (weak derivative) matrix, and endpoint lift vectors used by both
the HDG assembly and the semi-discrete stability operator.  All reference
matrices are h-free; element size enters only through metric factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def gauss_legendre(n: int):
    if n < 1:
        raise ValueError("Gauss-Legendre rule needs n >= 1")
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_lobatto(n: int):
    """n-point Gauss-Lobatto rule on [-1, 1], exact to degree 2n - 3."""
    if n < 2:
        raise ValueError("Gauss-Lobatto rule needs n >= 2")
    if n == 2:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    # interior nodes: roots of P'_{n-1}
    cP = np.zeros(n)
    cP[-1] = 1.0
    xi = np.polynomial.legendre.Legendre(cP).deriv().roots()
    x = np.concatenate(([-1.0], np.sort(xi), [1.0]))
    Pn1 = np.polynomial.legendre.legval(x, cP)
    w = 2.0 / (n * (n - 1) * Pn1**2)
    return x, w


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    kind: str  # "gauss-legendre" | "gauss-lobatto"

    @property
    def exactness(self) -> int:
        n = len(self.points)
        return 2 * n - 1 if self.kind == "gauss-legendre" else 2 * n - 3


def quadrature(n: int, kind: str = "gauss-legendre") -> QuadRule:
    if kind == "gauss-legendre":
        x, w = gauss_legendre(n)
    elif kind == "gauss-lobatto":
        x, w = gauss_lobatto(n)
    else:
        raise ValueError(f"unknown quadrature kind {kind!r}")
    return QuadRule(points=x, weights=w, kind=kind)


@dataclass(frozen=True)
class RefBasis1D:
    """Nodal Lagrange basis of order ``order`` on Gauss-Lobatto nodes."""

    order: int
    nodes: np.ndarray
    mass: np.ndarray       # int phi_a phi_b dxi (reference, h-free)
    advection: np.ndarray  # int phi_a dphi_b dxi
    lift_minus: np.ndarray  # phi_a(-1)
    lift_plus: np.ndarray   # phi_a(+1)
    _leg_coeffs: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.order + 1

    def eval(self, x) -> np.ndarray:
        """Basis values; shape ``(len(x), order + 1)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        P = _legendre_vandermonde(x, self.order)
        return P @ self._leg_coeffs

    def deriv(self, x) -> np.ndarray:
        """Basis first derivatives; shape ``(len(x), order + 1)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        dP = _legendre_vandermonde(x, self.order, deriv=1)
        return dP @ self._leg_coeffs


def _legendre_vandermonde(x, order, deriv=0):
    cols = []
    for j in range(order + 1):
        c = np.zeros(j + 1)
        c[-1] = 1.0
        series = np.polynomial.legendre.Legendre(c)
        if deriv:
            series = series.deriv(deriv)
        cols.append(series(x))
    return np.stack(cols, axis=-1)


def make_basis(N: int) -> RefBasis1D:
    """Nodal Lagrange basis of order N >= 0 on Gauss-Lobatto nodes."""
    if N < 0:
        raise ValueError("basis order must be >= 0")
    nodes = np.array([0.0]) if N == 0 else gauss_lobatto(N + 1)[0]
    # Lagrange basis expressed in the Legendre basis: columns of V^{-1}
    V = _legendre_vandermonde(nodes, N)
    coeffs = np.linalg.inv(V)

    # exact integration: degree-2N integrands need N+1 Gauss-Legendre points
    xq, wq = gauss_legendre(N + 1)
    phi = _legendre_vandermonde(xq, N) @ coeffs
    dphi = _legendre_vandermonde(xq, N, deriv=1) @ coeffs
    mass = (phi * wq[:, None]).T @ phi
    adv = (phi * wq[:, None]).T @ dphi
    lm = (_legendre_vandermonde(np.array([-1.0]), N) @ coeffs)[0]
    lp = (_legendre_vandermonde(np.array([1.0]), N) @ coeffs)[0]
    return RefBasis1D(
        order=N, nodes=nodes, mass=mass, advection=adv,
        lift_minus=lm, lift_plus=lp, _leg_coeffs=coeffs,
    )


def tensor_eval(basis: RefBasis1D, coeffs, point) -> float:
    """Evaluate a tensor-product field at a reference point in [-1, 1]^3.

    ``coeffs`` holds ``(N+1)**3`` entries indexed ``[ix, iy, iz]`` (C order
    if flat).
    """
    n = basis.n
    c = np.asarray(coeffs, dtype=float).reshape(n, n, n)
    px, py, pz = (basis.eval(np.array([t]))[0] for t in point)
    return float(np.einsum("xyz,x,y,z->", c, px, py, pz))
