"""Linear model problems with known analytic solutions.

All three systems are written in the prototype form
``S(t, q) + div T(t, q) = 0`` with the time derivative split off as
``time_weight * dq/dt``, matching what the implicit assembly expects.
Analytic solutions live on the periodic unit cube.
"""

from __future__ import annotations

import numpy as np

from .base import PdeModel

TWO_PI = 2.0 * np.pi


def _zeros_like_row(q):
    # works for both plain arrays and duals
    return q[0] * 0.0


def advection_model(a=(1.0, 0.5, 2.0)) -> PdeModel:
    """Scalar advection dq/dt + div(a q) = 0 with a separable cosine wave."""
    a = np.asarray(a, dtype=float)

    def flux(t, q, u):
        from .. import dual
        return dual.stack([dual.stack([a[0] * q[0], a[1] * q[0], a[2] * q[0]])])

    def source(t, q, u):
        from .. import dual
        return dual.stack([_zeros_like_row(q)])

    def tau(t, lam_rot, u, axis):
        # upwind penalty: the exact normal wave speed of each face frame
        return abs(a[axis])

    def analytic(x, t):
        x = np.asarray(x, dtype=float)
        vals = np.cos(TWO_PI * (x[0] - a[0] * t))
        vals = vals * np.cos(TWO_PI * (x[1] - a[1] * t))
        vals = vals * np.cos(TWO_PI * (x[2] - a[2] * t))
        return vals[None]

    return PdeModel(
        name="advection",
        field_names=["q"],
        source=source,
        flux=flux,
        tau=tau,
        analytic=analytic,
        initial=lambda x: analytic(x, 0.0),
        is_linear=True,
        constant_jacobian=True,
        params={"a": a},
    )


def diffusion_model(k=1e-2) -> PdeModel:
    """Heat equation dq/dt = div(k grad q) in first-order form.

    The auxiliary gradient u = grad q enters algebraically (zero time
    weight); only its normal component carries a face unknown.
    """
    k = float(k)

    def flux(t, q, u):
        from .. import dual
        z = _zeros_like_row(q)
        return dual.stack([
            dual.stack([-k * q[1], -k * q[2], -k * q[3]]),
            dual.stack([-q[0], z, z]),
            dual.stack([z, -q[0], z]),
            dual.stack([z, z, -q[0]]),
        ])

    def source(t, q, u):
        from .. import dual
        return dual.stack([_zeros_like_row(q), q[1], q[2], q[3]])

    def analytic(x, t):
        x = np.asarray(x, dtype=float)
        decay = np.exp(-3.0 * TWO_PI**2 * k * t)
        sx, sy, sz = (np.sin(TWO_PI * x[d]) for d in range(3))
        cx, cy, cz = (np.cos(TWO_PI * x[d]) for d in range(3))
        q = decay * sx * sy * sz
        return np.stack([
            q,
            decay * TWO_PI * cx * sy * sz,
            decay * TWO_PI * sx * cy * sz,
            decay * TWO_PI * sx * sy * cz,
        ])

    return PdeModel(
        name="diffusion",
        field_names=["q", "u_x", "u_y", "u_z"],
        source=source,
        flux=flux,
        vector_blocks=[(1, 2, 3)],
        eliminated=frozenset({2, 3}),  # tangential gradient has no normal flux
        time_weight=np.array([1.0, 0.0, 0.0, 0.0]),
        analytic=analytic,
        initial=lambda x: analytic(x, 0.0),
        is_linear=True,
        constant_jacobian=True,
        params={"k": k},
    )


def wave_model(c=1.0, order=None) -> PdeModel:
    """Second-order wave equation split into (q, u = grad q, v = dq/dt).

    ``order`` selects an order-aware trace penalty 3c/(order + 1); the
    default is the plain characteristic speed c.  Larger penalties damp the
    dispersive error that dominates low-order runs on coarse meshes, while
    high-order runs keep the smaller penalty that preserves their
    superconvergence.
    """
    c = float(c)
    c2 = c * c
    tau_val = c if order is None else 3.0 * c / (float(order) + 1.0)

    def flux(t, q, u):
        from .. import dual
        z = _zeros_like_row(q)
        return dual.stack([
            dual.stack([z, z, z]),
            dual.stack([-q[4], z, z]),
            dual.stack([z, -q[4], z]),
            dual.stack([z, z, -q[4]]),
            dual.stack([-c2 * q[1], -c2 * q[2], -c2 * q[3]]),
        ])

    def source(t, q, u):
        from .. import dual
        z = _zeros_like_row(q)
        return dual.stack([-q[4], z, z, z, z])

    def tau(t, lam_rot, u, axis):
        return tau_val

    omega = TWO_PI * np.sqrt(3.0 * c2)

    def analytic(x, t):
        x = np.asarray(x, dtype=float)
        sx, sy, sz = (np.sin(TWO_PI * x[d]) for d in range(3))
        cx, cy, cz = (np.cos(TWO_PI * x[d]) for d in range(3))
        cwt = np.cos(omega * t)
        return np.stack([
            cwt * sx * sy * sz,
            cwt * TWO_PI * cx * sy * sz,
            cwt * TWO_PI * sx * cy * sz,
            cwt * TWO_PI * sx * sy * cz,
            -omega * np.sin(omega * t) * sx * sy * sz,
        ])

    return PdeModel(
        name="wave",
        field_names=["q", "u_x", "u_y", "u_z", "v"],
        source=source,
        flux=flux,
        vector_blocks=[(1, 2, 3)],
        # q has no flux at all; tangential u components have no normal flux
        eliminated=frozenset({0, 2, 3}),
        tau=tau,
        analytic=analytic,
        initial=lambda x: analytic(x, 0.0),
        is_linear=True,
        constant_jacobian=True,
        params={"c": c, "tau": tau_val},
    )
