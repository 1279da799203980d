"""Structured tensor-product hexahedral meshes.

Elements are axis-aligned boxes on a regular grid; faces are grouped by
their normal axis.  Each face stores the element on its lower side
(``minus_elem``, which sees the stored normal pointing outward, sign +1)
and on its upper side (``plus_elem``, sign -1); boundary faces have -1 on
the missing side plus a tag.  The mesh is immutable after construction and
safe to share across assembly workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Face orientation frames by normal axis.  Axis-aligned faces use the fixed
# right-handed convention (n, t, b) = (x,y,z), (y,z,x), (z,x,y), so every
# rotation is a cyclic permutation of the coordinate axes.
FRAME_AXES = ((0, 1, 2), (1, 2, 0), (2, 0, 1))

_SIDE_NAMES = (("xlo", "xhi"), ("ylo", "yhi"), ("zlo", "zhi"))


@dataclass(frozen=True)
class FaceFrame:
    normal: np.ndarray
    tangent: np.ndarray
    binormal: np.ndarray

    def rotation(self, side: int = 1) -> np.ndarray:
        """Orthogonal matrix mapping global vectors to (n, t, b) components.

        ``side`` is the sign of the adjacent element (+1 if the stored
        normal points out of it).  For the -1 side the normal and binormal
        flip so the rotated frame stays right-handed.
        """
        if side not in (1, -1):
            raise ValueError("side must be +1 or -1")
        return np.array([side * self.normal, self.tangent, side * self.binormal])


@dataclass(frozen=True)
class Face:
    id: int
    axis: int
    minus_elem: int  # element seeing the stored normal as outward (sign +1)
    plus_elem: int   # element on the other side (sign -1); -1 at boundaries
    tag: str | None
    center: np.ndarray

    @property
    def is_boundary(self) -> bool:
        return self.minus_elem < 0 or self.plus_elem < 0


class StructuredMesh:
    def __init__(self, dims, extents, periodic, boundary_tags=None):
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be >= 1 per axis, got {dims}")
        extents = tuple((float(a), float(b)) for a, b in extents)
        if any(b <= a for a, b in extents):
            raise ValueError(f"degenerate extents {extents}")
        periodic = tuple(bool(p) for p in periodic)

        self.dims = dims
        self.extents = extents
        self.periodic = periodic
        self.h = np.array([(b - a) / d for (a, b), d in zip(extents, dims)])
        self.n_elems = dims[0] * dims[1] * dims[2]
        self.boundary_tags = self._resolve_tags(boundary_tags)

        self._build_connectivity()
        self._build_geometry()

    # element flat index: x fastest
    def elem_index(self, i: int, j: int, k: int) -> int:
        nx, ny, _ = self.dims
        return i + nx * (j + ny * k)

    def _resolve_tags(self, boundary_tags):
        tags = {}
        for ax in range(3):
            if self.periodic[ax]:
                continue
            for side in range(2):
                name = _SIDE_NAMES[ax][side]
                if boundary_tags is None:
                    tags[name] = name
                elif name not in boundary_tags:
                    raise ValueError(f"boundary_tags missing entry for {name!r}")
                else:
                    tags[name] = boundary_tags[name]
        return tags

    def _build_connectivity(self):
        nx, ny, nz = self.dims
        grids = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        ii, jj, kk = (g.ravel(order="F") for g in grids)
        # ravel order chosen so flat index == elem_index(i, j, k)
        eidx = self.elem_index(ii, jj, kk)
        order = np.argsort(eidx)
        ii, jj, kk = ii[order], jj[order], kk[order]
        self._ijk = np.stack([ii, jj, kk], axis=1)

        self.face_minus = []   # per axis: lower-side element of each face
        self.face_plus = []    # per axis: upper-side element
        self.face_tags = []    # per axis: tag or None per face
        self.elem_faces = []   # per axis: (n_elems, 2) face ids [lower, upper]
        self.n_faces_axis = []

        axis_index = (ii, jj, kk)
        for ax in range(3):
            n_ax = self.dims[ax]
            nplanes = n_ax if self.periodic[ax] else n_ax + 1
            # number faces by (plane, transverse element position)
            other = [a for a in range(3) if a != ax]
            n_trans = self.dims[other[0]] * self.dims[other[1]]
            n_faces = nplanes * n_trans
            minus = np.full(n_faces, -1, dtype=np.int64)
            plus = np.full(n_faces, -1, dtype=np.int64)
            tags = [None] * n_faces

            t0 = axis_index[other[0]]
            t1 = axis_index[other[1]]
            trans = t0 + self.dims[other[0]] * t1
            pos = axis_index[ax]

            lower_plane = pos  # plane at the element's lower coordinate
            upper_plane = pos + 1
            if self.periodic[ax]:
                upper_plane = upper_plane % n_ax
            lower_face = lower_plane * n_trans + trans
            upper_face = upper_plane * n_trans + trans
            # element is above its lower plane (sign -1 there) and below its
            # upper plane (sign +1 there)
            plus[lower_face] = np.arange(self.n_elems)
            minus[upper_face] = np.arange(self.n_elems)
            if not self.periodic[ax]:
                lo_tag = self.boundary_tags[_SIDE_NAMES[ax][0]]
                hi_tag = self.boundary_tags[_SIDE_NAMES[ax][1]]
                for f in range(n_trans):
                    tags[f] = lo_tag
                for f in range((nplanes - 1) * n_trans, n_faces):
                    tags[f] = hi_tag

            self.face_minus.append(minus)
            self.face_plus.append(plus)
            self.face_tags.append(tags)
            self.elem_faces.append(np.stack([lower_face, upper_face], axis=1))
            self.n_faces_axis.append(n_faces)

        self.face_offsets = np.concatenate([[0], np.cumsum(self.n_faces_axis)])
        self.n_faces = int(self.face_offsets[-1])

    def _build_geometry(self):
        lo = np.array([a for a, _ in self.extents])
        self.element_centers = lo + (self._ijk + 0.5) * self.h

        centers = []
        for ax in range(3):
            other = [a for a in range(3) if a != ax]
            n_ax = self.dims[ax]
            nplanes = n_ax if self.periodic[ax] else n_ax + 1
            c = np.zeros((self.n_faces_axis[ax], 3))
            n_trans0 = self.dims[other[0]]
            for p in range(nplanes):
                for t1 in range(self.dims[other[1]]):
                    for t0 in range(n_trans0):
                        f = p * n_trans0 * self.dims[other[1]] + t0 + n_trans0 * t1
                        c[f, ax] = lo[ax] + p * self.h[ax]
                        c[f, other[0]] = lo[other[0]] + (t0 + 0.5) * self.h[other[0]]
                        c[f, other[1]] = lo[other[1]] + (t1 + 0.5) * self.h[other[1]]
            centers.append(c)
        self.face_centers = centers

    # -- face-level API -----------------------------------------------------

    def face_axis(self, face_id: int) -> int:
        return int(np.searchsorted(self.face_offsets, face_id, side="right") - 1)

    def face(self, face_id: int) -> Face:
        ax = self.face_axis(face_id)
        local = face_id - self.face_offsets[ax]
        return Face(
            id=face_id,
            axis=ax,
            minus_elem=int(self.face_minus[ax][local]),
            plus_elem=int(self.face_plus[ax][local]),
            tag=self.face_tags[ax][local],
            center=self.face_centers[ax][local],
        )

    @property
    def faces(self) -> list[Face]:
        return [self.face(f) for f in range(self.n_faces)]

    @property
    def elements(self) -> list[tuple[int, int, int]]:
        return [tuple(ijk) for ijk in self._ijk]


def build_mesh(dims, extents, periodic, boundary_tags=None) -> StructuredMesh:
    return StructuredMesh(dims, extents, periodic, boundary_tags)


def face_frame(face: Face) -> FaceFrame:
    n_ax, t_ax, b_ax = FRAME_AXES[face.axis]
    eye = np.eye(3)
    return FaceFrame(normal=eye[n_ax], tangent=eye[t_ax], binormal=eye[b_ax])


def frame_for_axis(axis: int) -> FaceFrame:
    n_ax, t_ax, b_ax = FRAME_AXES[axis]
    eye = np.eye(3)
    return FaceFrame(normal=eye[n_ax], tangent=eye[t_ax], binormal=eye[b_ax])


def rotate_to_face(v, frame: FaceFrame, side: int = 1) -> np.ndarray:
    """Components of ``v`` in the face frame of the given element side."""
    return frame.rotation(side) @ np.asarray(v, dtype=float)


def rotate_from_face(v, frame: FaceFrame, side: int = 1) -> np.ndarray:
    return frame.rotation(side).T @ np.asarray(v, dtype=float)
