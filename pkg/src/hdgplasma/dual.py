"""Forward-mode automatic differentiation on numpy arrays.

A :class:`Dual` carries a value array and a derivative array with one
trailing axis per seed direction.  Model source/flux evaluations written
against plain numpy also work on duals, which is how all pointwise
Jacobians in the assembly are obtained.
"""

from __future__ import annotations

import numpy as np


class Dual:
    """Value/derivative pair; ``der.shape == val.shape + (nseed,)``."""

    __slots__ = ("val", "der")
    __array_priority__ = 100  # keep numpy from absorbing us in mixed ops

    def __init__(self, val, der):
        self.val = np.asarray(val)
        self.der = np.asarray(der)

    @property
    def nseed(self):
        return self.der.shape[-1]

    @property
    def shape(self):
        return self.val.shape

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.der[idx])

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        return Dual(self.val + other, _bcast(self.der, np.shape(other)))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.der - other.der)
        return Dual(self.val - other, _bcast(self.der, np.shape(other)))

    def __rsub__(self, other):
        return Dual(other - self.val, _bcast(-self.der, np.shape(other)))

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.der * other.val[..., None] + other.der * self.val[..., None],
            )
        other = np.asarray(other)
        return Dual(self.val * other, self.der * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            val = self.val * inv
            der = (self.der - other.der * val[..., None]) * inv[..., None]
            return Dual(val, der)
        other = np.asarray(other)
        return Dual(self.val / other, self.der / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other)
        val = other / self.val
        der = -self.der * (val / self.val)[..., None]
        return Dual(val, der)

    def __pow__(self, p):
        if not np.isscalar(p):
            raise TypeError("dual power only supports scalar exponents")
        val = self.val**p
        der = self.der * (p * self.val ** (p - 1))[..., None]
        return Dual(val, der)

    # comparisons act on values (used for admissibility checks / abs)

    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    def __repr__(self):
        return f"Dual(val={self.val!r}, nseed={self.der.shape[-1]})"


def _value(x):
    return x.val if isinstance(x, Dual) else x


def _bcast(der, other_shape):
    """Broadcast a derivative array against the value-shape of a constant."""
    shape = np.broadcast_shapes(der.shape[:-1], other_shape)
    return np.broadcast_to(der, shape + der.shape[-1:]).copy() if shape != der.shape[:-1] else der


def value(x):
    """Value part of ``x`` whether dual or plain array."""
    return x.val if isinstance(x, Dual) else np.asarray(x)


def seed(q):
    """Seed ``q`` of shape ``(n, ...)`` with identity derivatives over axis 0.

    The returned dual has ``nseed == n``, so the trailing derivative axis of
    any function of it is the pointwise Jacobian w.r.t. the ``n`` components.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    der = np.zeros(q.shape + (n,))
    idx = np.arange(n)
    der[idx, ..., idx] = 1.0
    return Dual(q, der)


def seed_pair(q, lam):
    """Seed two stacked inputs with a shared derivative space.

    Returns duals for ``q`` (shape ``(nq, ...)``) and ``lam`` (``(nl, ...)``)
    whose seed axes are the concatenation (q first, lam second).
    """
    q = np.asarray(q, dtype=float)
    lam = np.asarray(lam, dtype=float)
    nq, nl = q.shape[0], lam.shape[0]
    dq = np.zeros(q.shape + (nq + nl,))
    dl = np.zeros(lam.shape + (nq + nl,))
    dq[np.arange(nq), ..., np.arange(nq)] = 1.0
    dl[np.arange(nl), ..., nq + np.arange(nl)] = 1.0
    return Dual(q, dq), Dual(lam, dl)


def sqrt(x):
    if isinstance(x, Dual):
        v = np.sqrt(x.val)
        return Dual(v, x.der * (0.5 / v)[..., None])
    return np.sqrt(x)


def absolute(x):
    if isinstance(x, Dual):
        return Dual(np.abs(x.val), x.der * np.sign(x.val)[..., None])
    return np.abs(x)


def exp(x):
    if isinstance(x, Dual):
        v = np.exp(x.val)
        return Dual(v, x.der * v[..., None])
    return np.exp(x)


def stack(parts):
    """Stack a list of duals/arrays along a new leading axis."""
    if not any(isinstance(p, Dual) for p in parts):
        shape = np.broadcast_shapes(*[np.shape(p) for p in parts])
        return np.stack(
            [np.broadcast_to(np.asarray(p, dtype=float), shape) for p in parts]
        )
    duals = [p for p in parts if isinstance(p, Dual)]
    m = duals[0].nseed
    shape = np.broadcast_shapes(*[np.shape(value(p)) for p in parts])
    vals, ders = [], []
    for p in parts:
        if isinstance(p, Dual):
            vals.append(np.broadcast_to(p.val, shape))
            ders.append(np.broadcast_to(p.der, shape + (m,)))
        else:
            vals.append(np.broadcast_to(np.asarray(p, dtype=float), shape))
            ders.append(np.zeros(shape + (m,)))
    return Dual(np.stack(vals), np.stack(ders))
