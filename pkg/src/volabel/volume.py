"""Dense 3D label volumes, coordinate arithmetic and grid adjacency.

Axis order is fixed to (z, y, x) with x fastest-varying, matching the
slice-stack order of EM acquisitions. All flat indexing in the package
derives from :func:`linear_index` under that convention, so the unique
per-voxel ids used by the propagation code are reproducible bit-exactly.

Volumes are treated as immutable after construction: every operation in
the package builds a fresh buffer instead of mutating its input, which
makes concurrent reads safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

ROLES = ("semantic", "instance", "binary", "probability_quantized")

LABEL_DTYPES = (np.uint8, np.uint16, np.uint32, np.uint64)


class VoxelCoord(NamedTuple):
    """A (z, y, x) voxel coordinate."""

    z: int
    y: int
    x: int


class Connectivity(IntEnum):
    """3D neighborhood structure: faces, faces+edges, or the full cube."""

    C6 = 6
    C18 = 18
    C26 = 26

    def offsets(self) -> np.ndarray:
        """Neighbor offsets as an (n, 3) int64 array of (dz, dy, dx).

        Offsets are sorted lexicographically by (dz, dy, dx), which makes
        neighbor enumeration ascend in linear index.
        """
        return _OFFSETS[self]


def _build_offsets(kind: int) -> np.ndarray:
    offs = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dz == dy == dx == 0:
                    continue
                order = abs(dz) + abs(dy) + abs(dx)
                if kind == 6 and order > 1:
                    continue
                if kind == 18 and order > 2:
                    continue
                offs.append((dz, dy, dx))
    return np.array(sorted(offs), dtype=np.int64)


_OFFSETS = {
    Connectivity.C6: _build_offsets(6),
    Connectivity.C18: _build_offsets(18),
    Connectivity.C26: _build_offsets(26),
}


def _check_dims(dims) -> tuple[int, int, int]:
    if len(dims) != 3:
        raise ValueError(f"dims must be (Dz, Dy, Dx), got {dims!r}")
    dz, dy, dx = (int(d) for d in dims)
    if dz <= 0 or dy <= 0 or dx <= 0:
        raise ValueError(f"all dimensions must be positive, got {dims!r}")
    return dz, dy, dx


def _check_voxel_size(voxel_size_nm) -> tuple[float, float, float]:
    if len(voxel_size_nm) != 3:
        raise ValueError(f"voxel_size_nm must be (sz, sy, sx), got {voxel_size_nm!r}")
    sz, sy, sx = (float(s) for s in voxel_size_nm)
    if not (sz > 0 and sy > 0 and sx > 0):
        raise ValueError(f"voxel sizes must be positive, got {voxel_size_nm!r}")
    return sz, sy, sx


@dataclass(frozen=True)
class LabeledVolume:
    """Dense (Dz, Dy, Dx) grid of unsigned integer labels.

    ``data`` is C-ordered, so the flat view is z-major with x fastest.
    Label 0 is background in every role. ``voxel_size_nm`` is metadata
    only; adjacency is purely grid-topological.
    """

    data: np.ndarray
    voxel_size_nm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    role: str = "semantic"

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {arr.shape}")
        if arr.dtype not in [np.dtype(t) for t in LABEL_DTYPES]:
            raise ValueError(f"label dtype must be unsigned integer, got {arr.dtype}")
        _check_dims(arr.shape)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "voxel_size_nm", _check_voxel_size(self.voxel_size_nm))
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}, expected one of {ROLES}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def num_voxels(self) -> int:
        return int(self.data.size)

    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.data))

    def with_data(self, data: np.ndarray, role: str | None = None) -> "LabeledVolume":
        """New volume sharing this volume's voxel size."""
        return LabeledVolume(data, self.voxel_size_nm, role if role is not None else self.role)


def new_volume(dims, voxel_size_nm=(1.0, 1.0, 1.0), fill: int = 0,
               role: str = "semantic", dtype=np.uint64) -> LabeledVolume:
    """Construct a volume of the given shape with every voxel set to ``fill``."""
    dims = _check_dims(dims)
    data = np.full(dims, fill, dtype=dtype)
    return LabeledVolume(data, voxel_size_nm, role)


def linear_index(p, dims) -> int:
    """Flat z-major index of coordinate ``p``: z*(Dy*Dx) + y*Dx + x.

    Bijective over the volume; raises on out-of-bounds coordinates.
    The unique initial label of a foreground voxel is this index plus 1.
    """
    dz, dy, dx = dims
    z, y, x = p
    if not (0 <= z < dz and 0 <= y < dy and 0 <= x < dx):
        raise IndexError(f"coordinate {tuple(p)} out of bounds for dims {tuple(dims)}")
    return (z * dy + y) * dx + x


def coord_of(index: int, dims) -> VoxelCoord:
    """Inverse of :func:`linear_index`."""
    dz, dy, dx = dims
    n = dz * dy * dx
    if not 0 <= index < n:
        raise IndexError(f"linear index {index} out of range for dims {tuple(dims)}")
    z, rem = divmod(index, dy * dx)
    y, x = divmod(rem, dx)
    return VoxelCoord(z, y, x)


def neighbors(p, conn: Connectivity, dims) -> list[VoxelCoord]:
    """In-bounds neighbors of ``p``, in ascending linear-index order."""
    dz, dy, dx = dims
    z, y, x = p
    if not (0 <= z < dz and 0 <= y < dy and 0 <= x < dx):
        raise IndexError(f"coordinate {tuple(p)} out of bounds for dims {tuple(dims)}")
    out = []
    for oz, oy, ox in conn.offsets():
        nz, ny, nx = z + oz, y + oy, x + ox
        if 0 <= nz < dz and 0 <= ny < dy and 0 <= nx < dx:
            out.append(VoxelCoord(int(nz), int(ny), int(nx)))
    return out
