"""PDE model descriptors and the face-frame numerical flux.

A :class:`PdeModel` bundles pointwise source/flux evaluations with layout
metadata (which field triples rotate as vectors, which 9-blocks as
tensors, which rotated components carry face unknowns).  Because all face
frames are cyclic permutations of the coordinate axes, rotating a state to
a face frame is a permutation of field indices; the engine exploits this
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from typing import Callable

import numpy as np

from .. import dual
from ..mesh import FRAME_AXES


class InadmissibleStateError(ValueError):
    """Raised when an evaluated state violates physical admissibility."""

    def __init__(self, message, element_ids=None):
        super().__init__(message)
        self.element_ids = element_ids


@dataclass(frozen=True)
class DirichletBC:
    """Fixed-trace boundary: face unknowns come from the prescribed state.

    ``state(t, x)`` maps time and points ``(3, P)`` to field values
    ``(n_fields, P)``.
    """

    state: Callable


@dataclass(frozen=True)
class NeumannBC:
    """Prescribed numerical flux: the trace stays unknown and the face
    residual enforces ``(T . n)* = flux(t, x)`` on the kept components.

    ``flux(t, x)`` returns rotated-frame values ``(n_face_fields, P)``.
    """

    flux: Callable


@dataclass
class PdeModel:
    name: str
    field_names: list[str]
    source: Callable       # (t, q, u) -> (n_fields, P)
    flux: Callable         # (t, q, u) -> (n_fields, 3, P)
    vector_blocks: list[tuple[int, int, int]] = dfield(default_factory=list)
    tensor_blocks: list[tuple[int, ...]] = dfield(default_factory=list)
    eliminated: frozenset[int] = frozenset()   # rotated slots without face DOFs
    time_weight: np.ndarray | None = None      # d/dt coefficient per field
    tau: Callable | None = None                # (t, lam_rot, u, axis) -> (n_fields, P)
    analytic: Callable | None = None           # (x, t) -> (n_fields, P)
    initial: Callable | None = None            # (x) -> (n_fields, P)
    boundary: dict = dfield(default_factory=dict)   # tag -> DirichletBC | NeumannBC
    is_linear: bool = False
    constant_jacobian: bool = False
    n_globals: int = 0
    global_residual: Callable | None = None    # (t, u) -> (n_globals,)
    check_admissible: Callable | None = None   # (q, element_ids) -> None
    params: object = None

    def __post_init__(self):
        n = self.n_fields
        if self.time_weight is None:
            self.time_weight = np.ones(n)
        else:
            self.time_weight = np.asarray(self.time_weight, dtype=float)
        self.face_fields = np.array(
            [i for i in range(n) if i not in self.eliminated], dtype=np.int64
        )
        self.face_field_names = [self.field_names[i] for i in self.face_fields]
        # q_rot = q[perm]; perm maps rotated slot -> global field index
        self.perm = []
        self.iperm = []
        for ax in range(3):
            p = _rotation_permutation(n, self.vector_blocks, self.tensor_blocks, ax)
            self.perm.append(p)
            self.iperm.append(np.argsort(p))

    @property
    def n_fields(self) -> int:
        return len(self.field_names)

    @property
    def n_face_fields(self) -> int:
        return len(self.face_fields)


def _rotation_permutation(n, vector_blocks, tensor_blocks, axis):
    axes = FRAME_AXES[axis]
    perm = np.arange(n, dtype=np.int64)
    for blk in vector_blocks:
        for slot in range(3):
            perm[blk[slot]] = blk[axes[slot]]
    for blk in tensor_blocks:
        for r in range(3):
            for c in range(3):
                perm[blk[3 * r + c]] = blk[3 * axes[r] + axes[c]]
    return perm


def rotate_fields(q, model: PdeModel, axis: int):
    """State components in the face frame of an axis-normal face."""
    return q[model.perm[axis]]


def unrotate_fields(q_rot, model: PdeModel, axis: int):
    return q_rot[model.iperm[axis]]


def embed_face_values(lam, model: PdeModel, fill=0.0):
    """Expand kept-component face values to the full rotated layout."""
    kept = model.face_fields
    n = model.n_fields
    if isinstance(lam, dual.Dual):
        val = np.full((n,) + lam.val.shape[1:], fill)
        der = np.zeros((n,) + lam.der.shape[1:])
        val[kept] = lam.val
        der[kept] = lam.der
        return dual.Dual(val, der)
    lam = np.asarray(lam)
    full = np.full((n,) + lam.shape[1:], fill)
    full[kept] = lam
    return full


def normal_flux_rotated(model: PdeModel, t, q_rot, u, axis: int):
    """Physical normal flux ``T . n`` of every equation, in rotated rows.

    ``q_rot`` is a full rotated state; the result's row ``r`` is the
    rotated-frame normal flux of the equation sitting in rotated slot ``r``.
    """
    q_glob = q_rot[model.iperm[axis]]
    T = model.flux(t, q_glob, u)
    Tn = T[:, axis]
    return Tn[model.perm[axis]]


def numerical_flux(model: PdeModel, t, q_minus_rot, lam, u, axis: int, side: int,
                   tau=None):
    """Central HDG flux ``(T . n^-)*`` in rotated rows for one element side.

    ``lam`` holds the kept face components; ``side`` is +1 when the stored
    face normal is outward for the element supplying ``q_minus_rot``.
    Eliminated rows carry no penalty (their physical normal flux vanishes
    by construction).
    """
    lam_full = embed_face_values(lam, model)
    base = normal_flux_rotated(model, t, lam_full, u, axis)
    if tau is None:
        tau = model.tau(t, lam_full, u, axis) if model.tau is not None else 1.0
    mask = np.zeros((model.n_fields, 1))
    mask[model.face_fields] = 1.0
    pen = (q_minus_rot - lam_full) * tau * mask
    return base * float(side) + pen


def rotate_state_frame(q, model: PdeModel, rotation: np.ndarray):
    """General-frame rotation (matrix form) of a state; vectors map by R v,
    tensors by R X R^T.  The assembly itself uses the permutation fast path.
    """
    q = np.asarray(q, dtype=float)
    out = q.copy()
    for blk in model.vector_blocks:
        out[list(blk)] = np.einsum("ij,j...->i...", rotation, q[list(blk)])
    for blk in model.tensor_blocks:
        X = q[list(blk)].reshape(3, 3, *q.shape[1:])
        Xr = np.einsum("ai,ij...,bj->ab...", rotation, X, rotation)
        out[list(blk)] = Xr.reshape(9, *q.shape[1:])
    return out
