"""Resolution alignment, crops, tiling/stitching and fragmentation accounting.

Resampling maps heterogeneous native resolutions onto one target
resolution (nanometers per voxel) using half-pixel-center sampling:
output voxel ``i`` samples source coordinate ``(i+0.5)*scale - 0.5``
with ``scale = target/source`` per axis. Labels use nearest-neighbor,
intensity/probability data trilinear interpolation.

Tiling cuts a volume into overlapping tiles at a fixed stride, clamping
the last tile to the volume edge; stitching inverts it exactly. When a
voxel is covered by several tiles, the tile whose center is nearest in
Chebyshev distance owns it (ties go to the tile with the lower origin
linear index), which also makes the fragmentation counts well defined
under overlap.

The fragmentation report quantifies how patch-wise processing breaks
global instances: components are labeled on the full volume and again
independently per tile, and instances whose owned voxels fall into two
or more per-tile components count as split.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decode import ProbabilityVolume
from .lpa import LpaConfig, run_lpa
from .volume import Connectivity, LabeledVolume, _check_dims

INTERP_MODES = ("nearest", "trilinear")


@dataclass(frozen=True)
class ResampleSpec:
    source_res_nm: tuple[float, float, float]
    target_res_nm: tuple[float, float, float]
    interp: str = "nearest"

    def __post_init__(self):
        for res in (self.source_res_nm, self.target_res_nm):
            if len(res) != 3 or any(r <= 0 for r in res):
                raise ValueError(f"resolutions must be three positive values, got {res!r}")
        if self.interp not in INTERP_MODES:
            raise ValueError(f"interp must be one of {INTERP_MODES}, got {self.interp!r}")


@dataclass(frozen=True)
class TileIndex:
    """Deterministic mapping between a volume and its overlapping tiles."""

    dims: tuple[int, int, int]
    tile_size: tuple[int, int, int]
    overlap: tuple[int, int, int]
    origins: tuple[tuple[int, int, int], ...]

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "tile_size": list(self.tile_size),
            "overlap": list(self.overlap),
            "origins": [list(o) for o in self.origins],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TileIndex":
        return cls(
            dims=tuple(d["dims"]),
            tile_size=tuple(d["tile_size"]),
            overlap=tuple(d["overlap"]),
            origins=tuple(tuple(o) for o in d["origins"]),
        )


@dataclass(frozen=True)
class FragmentationReport:
    instances_global: int
    instances_after_tiling: int
    split_instances: int
    per_instance_fragments: dict[int, int]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _axis_size(dim: int, source: float, target: float) -> int:
    return max(1, _round_half_up(dim * source / target))


def resample(volume, spec: ResampleSpec):
    """Resample to the target resolution; returns the same volume type.

    Output dims are ``round(dims * source/target)`` per axis (at least 1).
    Label volumes must use nearest-neighbor; equal resolutions reproduce
    the input bit-exactly.
    """
    is_labels = isinstance(volume, LabeledVolume)
    if is_labels and spec.interp != "nearest":
        raise ValueError("label volumes must be resampled with nearest interpolation")

    src = volume.data
    out_dims = tuple(_axis_size(d, s, t)
                     for d, s, t in zip(src.shape, spec.source_res_nm, spec.target_res_nm))
    scales = [t / s for s, t in zip(spec.source_res_nm, spec.target_res_nm)]

    if spec.interp == "nearest":
        idx = []
        for ax in range(3):
            centers = (np.arange(out_dims[ax]) + 0.5) * scales[ax] - 0.5
            nearest = np.floor(centers + 0.5).astype(np.int64)
            idx.append(np.clip(nearest, 0, src.shape[ax] - 1))
        out = src[np.ix_(idx[0], idx[1], idx[2])]
    else:
        grids = []
        for ax in range(3):
            centers = (np.arange(out_dims[ax]) + 0.5) * scales[ax] - 0.5
            lo = np.floor(centers).astype(np.int64)
            frac = centers - lo
            lo0 = np.clip(lo, 0, src.shape[ax] - 1)
            lo1 = np.clip(lo + 1, 0, src.shape[ax] - 1)
            grids.append((lo0, lo1, frac))
        (z0, z1, fz), (y0, y1, fy), (x0, x1, fx) = grids
        fz = fz[:, None, None]
        fy = fy[None, :, None]
        fx = fx[None, None, :]
        data = src.astype(np.float64)

        def corner(zi, yi, xi):
            return data[np.ix_(zi, yi, xi)]

        out = ((1 - fz) * (1 - fy) * (1 - fx) * corner(z0, y0, x0)
               + (1 - fz) * (1 - fy) * fx * corner(z0, y0, x1)
               + (1 - fz) * fy * (1 - fx) * corner(z0, y1, x0)
               + (1 - fz) * fy * fx * corner(z0, y1, x1)
               + fz * (1 - fy) * (1 - fx) * corner(z1, y0, x0)
               + fz * (1 - fy) * fx * corner(z1, y0, x1)
               + fz * fy * (1 - fx) * corner(z1, y1, x0)
               + fz * fy * fx * corner(z1, y1, x1))

    target = tuple(float(t) for t in spec.target_res_nm)
    if is_labels:
        return LabeledVolume(out, target, volume.role)
    return ProbabilityVolume(np.clip(out, 0.0, 1.0), target)


def _normalize_size(size) -> tuple[int, int, int]:
    size = tuple(int(s) for s in size)
    if len(size) == 2:
        size = (1,) + size  # 2D patches are degenerate 3D tiles
    if len(size) != 3 or any(s <= 0 for s in size):
        raise ValueError(f"size must be (cy, cx) or (cz, cy, cx) positive, got {size!r}")
    return size


def random_crop(volume, size, seed: int):
    """Uniformly placed crop of the given size; returns (patch, origin).

    The origin is drawn from the seeded generator (one draw per axis in
    z, y, x order), so identical seeds give identical crops.
    """
    size = _normalize_size(size)
    dims = volume.data.shape
    if any(s > d for s, d in zip(size, dims)):
        raise ValueError(f"crop size {size} exceeds volume dims {tuple(dims)}")
    rng = np.random.default_rng(seed)
    origin = tuple(int(rng.integers(0, d - s + 1)) for s, d in zip(size, dims))
    sl = tuple(slice(o, o + s) for o, s in zip(origin, size))
    patch = volume.data[sl].copy()
    if isinstance(volume, LabeledVolume):
        return LabeledVolume(patch, volume.voxel_size_nm, volume.role), origin
    return ProbabilityVolume(patch, volume.voxel_size_nm), origin


def _axis_origins(dim: int, tile: int, overlap: int) -> list[int]:
    if tile > dim:
        raise ValueError(f"tile size {tile} exceeds dimension {dim}")
    if not 0 <= overlap < tile:
        raise ValueError(f"overlap must satisfy 0 <= overlap < tile, got {overlap}")
    stride = tile - overlap
    origins = list(range(0, dim - tile + 1, stride))
    if origins[-1] + tile < dim:
        origins.append(dim - tile)
    return origins


def make_tile_index(dims, tile_size, overlap) -> TileIndex:
    """Tile origins at stride tile-overlap, last tile clamped to the edge."""
    dims = _check_dims(dims)
    tile_size = _normalize_size(tile_size)
    if isinstance(overlap, int):
        overlap = (overlap,) * 3
    overlap = tuple(int(o) for o in overlap)
    per_axis = [_axis_origins(d, t, o) for d, t, o in zip(dims, tile_size, overlap)]
    origins = tuple((oz, oy, ox)
                    for oz in per_axis[0] for oy in per_axis[1] for ox in per_axis[2])
    return TileIndex(dims=dims, tile_size=tile_size, overlap=overlap, origins=origins)


def tile(volume, tile_size, overlap=0):
    """Cut the volume into overlapping tiles; returns (tiles, TileIndex)."""
    index = make_tile_index(volume.data.shape, tile_size, overlap)
    tiles = []
    for origin in index.origins:
        sl = tuple(slice(o, o + t) for o, t in zip(origin, index.tile_size))
        patch = volume.data[sl].copy()
        if isinstance(volume, LabeledVolume):
            tiles.append(LabeledVolume(patch, volume.voxel_size_nm, volume.role))
        else:
            tiles.append(ProbabilityVolume(patch, volume.voxel_size_nm))
    return tiles, index


def _owner_map(index: TileIndex) -> np.ndarray:
    """Tile owning each voxel: nearest tile center in Chebyshev distance.

    Ties go to the earlier tile; origins are enumerated z-major, so the
    earlier tile is the one with the lower origin linear index.
    """
    owner = np.full(index.dims, -1, dtype=np.int32)
    best = np.full(index.dims, np.inf, dtype=np.float64)
    for t_idx, origin in enumerate(index.origins):
        sl = tuple(slice(o, o + t) for o, t in zip(origin, index.tile_size))
        az, ay, ax = (np.abs(np.arange(o, o + t) - (o + (t - 1) / 2.0))
                      for o, t in zip(origin, index.tile_size))
        cheb = np.maximum(np.maximum(az[:, None, None], ay[None, :, None]),
                          ax[None, None, :])
        region_best = best[sl]
        take = cheb < region_best
        region_best[take] = cheb[take]
        owner_region = owner[sl]
        owner_region[take] = t_idx
    return owner


def stitch(tiles, index: TileIndex):
    """Reassemble tiles into a full volume using the ownership rule.

    Exact inverse of :func:`tile` when the tiles are unmodified crops.
    """
    if len(tiles) != len(index.origins):
        raise ValueError(f"expected {len(index.origins)} tiles, got {len(tiles)}")
    for t in tiles:
        if tuple(t.data.shape) != index.tile_size:
            raise ValueError(
                f"tile shape {tuple(t.data.shape)} does not match index {index.tile_size}")
    owner = _owner_map(index)
    first = tiles[0]
    out = np.zeros(index.dims, dtype=first.data.dtype)
    for t_idx, (origin, t) in enumerate(zip(index.origins, tiles)):
        sl = tuple(slice(o, o + s) for o, s in zip(origin, index.tile_size))
        take = owner[sl] == t_idx
        out[sl][take] = t.data[take]
    if isinstance(first, LabeledVolume):
        return LabeledVolume(out, first.voxel_size_nm, first.role)
    return ProbabilityVolume(out, first.voxel_size_nm)


def fragmentation_report(semantic: LabeledVolume, tile_size, overlap=0,
                         conn: Connectivity = Connectivity.C26,
                         threads: int = 1) -> FragmentationReport:
    """Quantify how per-tile labeling fragments global instances.

    Global instances come from labeling the full volume; per-tile labeling
    runs independently on every tile (no cross-tile merging) and tile
    labels are composited with the stitch ownership rule so that overlap
    voxels are counted once. An instance counts as split when its owned
    voxels carry two or more distinct per-tile labels.
    """
    cfg = LpaConfig(connectivity=conn)
    global_res = run_lpa(semantic, cfg)
    glob = global_res.instances.data

    tiles_list, index = tile(semantic, tile_size, overlap)

    def label_tile(t):
        return run_lpa(t, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tile_results = list(pool.map(label_tile, tiles_list))
    else:
        tile_results = [label_tile(t) for t in tiles_list]

    # Offset tile ids to be globally unique, then composite by ownership.
    offset = 0
    relabeled = []
    for res in tile_results:
        lab = res.instances.data
        if offset:
            lab = np.where(lab > 0, lab + np.uint64(offset), lab)
        relabeled.append(res.instances.with_data(lab, role="instance"))
        offset += res.num_instances
    composite = stitch(relabeled, index).data

    fg = glob > 0
    pairs = np.stack([glob[fg], composite[fg]], axis=1)
    uniq = np.unique(pairs, axis=0) if pairs.size else pairs.reshape(0, 2)
    per_instance: dict[int, int] = {}
    for g in uniq[:, 0] if uniq.size else []:
        per_instance[int(g)] = per_instance.get(int(g), 0) + 1
    k_prime = int(np.unique(composite[fg]).size) if fg.any() else 0
    split = sum(1 for n in per_instance.values() if n >= 2)
    return FragmentationReport(
        instances_global=global_res.num_instances,
        instances_after_tiling=k_prime,
        split_instances=split,
        per_instance_fragments=per_instance,
    )
