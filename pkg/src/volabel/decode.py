"""Instance decoding from per-class probability volumes.

Pipeline: threshold the probabilities to a binary mask, compute the
exact Euclidean distance to the nearest background voxel, seed markers
on the ridges of the distance map, then flood the mask from the markers
in descending-distance order (marker-controlled watershed). Touching
objects are split along the distance valleys between their markers.

The distance transform is the separable lower-envelope algorithm on
squared distances: a two-scan pass along x followed by exact parabola
envelopes along y and z, then a square root. Distances are measured to
the nearest background voxel of the volume itself; only when a mask has
no background at all does the volume boundary step in as background so
the transform stays finite.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from numba import njit

from .instances import filter_small
from .lpa import LpaConfig, run_lpa
from .volume import Connectivity, LabeledVolume, _check_voxel_size


@dataclass(frozen=True)
class ProbabilityVolume:
    """Single-class per-voxel probabilities in [0, 1], stored as float32."""

    data: np.ndarray
    voxel_size_nm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"probability data must be 3D, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("probability volume must be non-empty")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"probabilities must lie in [0, 1], got range [{lo}, {hi}]")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "voxel_size_nm", _check_voxel_size(self.voxel_size_nm))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class DecodeParams:
    threshold: float = 0.5
    marker_fraction: float = 0.5
    connectivity: Connectivity = Connectivity.C26
    min_instance_size: int = 1

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if not 0.0 < self.marker_fraction <= 1.0:
            raise ValueError(f"marker_fraction must be in (0, 1], got {self.marker_fraction}")
        if self.min_instance_size < 0:
            raise ValueError("min_instance_size must be >= 0")


def threshold_semantic(prob: ProbabilityVolume, threshold: float) -> LabeledVolume:
    """Binary mask: 1 where probability >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    mask = (prob.data >= threshold).astype(np.uint8)
    return LabeledVolume(mask, prob.voxel_size_nm, role="binary")


@njit(cache=True, nogil=True)
def _scan_x(f, w):
    """Squared distance to nearest zero along x, padded borders included."""
    nz, ny, nx = f.shape
    big = 1e30
    for z in range(nz):
        for y in range(ny):
            d = big
            for x in range(nx):
                if f[z, y, x] == 0.0:
                    d = 0.0
                else:
                    d += w
                f[z, y, x] = d
            d = big
            for x in range(nx - 1, -1, -1):
                if f[z, y, x] == 0.0:
                    d = 0.0
                else:
                    d += w
                    if d < f[z, y, x]:
                        f[z, y, x] = d
            for x in range(nx):
                f[z, y, x] = f[z, y, x] * f[z, y, x]


@njit(cache=True, nogil=True)
def _envelope_line(f, d, v, zbreak, w):
    """Exact 1D lower envelope of parabolas: d[q] = min_r (w(q-r))^2 + f[r]."""
    n = f.shape[0]
    k = 0
    v[0] = 0
    zbreak[0] = -1e300
    zbreak[1] = 1e300
    w2 = w * w
    for q in range(1, n):
        s = ((f[q] + w2 * q * q) - (f[v[k]] + w2 * v[k] * v[k])) / (2.0 * w2 * (q - v[k]))
        while s <= zbreak[k]:
            k -= 1
            s = ((f[q] + w2 * q * q) - (f[v[k]] + w2 * v[k] * v[k])) / (2.0 * w2 * (q - v[k]))
        k += 1
        v[k] = q
        zbreak[k] = s
        zbreak[k + 1] = 1e300
    k = 0
    for q in range(n):
        while zbreak[k + 1] < q:
            k += 1
        d[q] = w2 * (q - v[k]) * (q - v[k]) + f[v[k]]


@njit(cache=True, nogil=True)
def _envelope_y(f, w):
    nz, ny, nx = f.shape
    line = np.empty(ny, dtype=np.float64)
    dist = np.empty(ny, dtype=np.float64)
    v = np.empty(ny, dtype=np.int64)
    zbreak = np.empty(ny + 1, dtype=np.float64)
    for z in range(nz):
        for x in range(nx):
            for y in range(ny):
                line[y] = f[z, y, x]
            _envelope_line(line, dist, v, zbreak, w)
            for y in range(ny):
                f[z, y, x] = dist[y]


@njit(cache=True, nogil=True)
def _envelope_z(f, w):
    nz, ny, nx = f.shape
    line = np.empty(nz, dtype=np.float64)
    dist = np.empty(nz, dtype=np.float64)
    v = np.empty(nz, dtype=np.int64)
    zbreak = np.empty(nz + 1, dtype=np.float64)
    for y in range(ny):
        for x in range(nx):
            for z in range(nz):
                line[z] = f[z, y, x]
            _envelope_line(line, dist, v, zbreak, w)
            for z in range(nz):
                f[z, y, x] = dist[z]


_FAR = 1e30


def distance_transform(mask: LabeledVolume, anisotropic: bool = False) -> np.ndarray:
    """Exact Euclidean distance from foreground to the nearest background.

    Background voxels map to exactly 0. A mask without any background
    voxel falls back to treating the volume boundary as background so
    every distance is finite. Distances are in voxel units by default;
    with ``anisotropic=True`` axis steps are weighted by
    ``mask.voxel_size_nm`` and the result is in nanometers.
    """
    if mask.role not in ("binary", "semantic"):
        raise ValueError(f"expected a binary mask, got role {mask.role!r}")
    wz, wy, wx = mask.voxel_size_nm if anisotropic else (1.0, 1.0, 1.0)
    fg = mask.data > 0
    if fg.all():
        # one-voxel background border keeps the all-foreground case finite
        f = np.zeros(tuple(d + 2 for d in mask.dims), dtype=np.float64)
        f[1:-1, 1:-1, 1:-1] = _FAR
        _scan_x(f, wx)
        _envelope_y(f, wy)
        _envelope_z(f, wz)
        return np.sqrt(f[1:-1, 1:-1, 1:-1])
    f = np.where(fg, _FAR, 0.0)
    _scan_x(f, wx)
    _envelope_y(f, wy)
    _envelope_z(f, wz)
    return np.sqrt(f)


def extract_markers(dist: np.ndarray, marker_fraction: float,
                    voxel_size_nm=(1.0, 1.0, 1.0)) -> LabeledVolume:
    """Marker seeds on the distance ridges, labeled by connected components.

    A voxel becomes a marker when its distance reaches ``marker_fraction``
    times the maximum distance of its own connected foreground region, so
    every region with positive distance yields at least one marker. The
    region-relative rule keeps small and large objects seeded alike.
    Marker components are labeled under 26-connectivity.
    """
    if not 0.0 < marker_fraction <= 1.0:
        raise ValueError(f"marker_fraction must be in (0, 1], got {marker_fraction}")
    fg = dist > 0
    if not fg.any():
        return LabeledVolume(np.zeros(dist.shape, dtype=np.uint64), voxel_size_nm,
                             role="instance")
    regions = run_lpa(LabeledVolume(fg.astype(np.uint8), voxel_size_nm, role="binary"),
                      LpaConfig(connectivity=Connectivity.C26))
    lab = regions.instances.data
    peak = np.zeros(regions.num_instances + 1, dtype=np.float64)
    np.maximum.at(peak, lab.ravel(), dist.ravel())
    marker_mask = fg & (dist >= marker_fraction * peak[lab])
    markers = run_lpa(LabeledVolume(marker_mask.astype(np.uint8), voxel_size_nm,
                                    role="binary"),
                      LpaConfig(connectivity=Connectivity.C26))
    return markers.instances


def watershed(dist: np.ndarray, markers: LabeledVolume, mask: LabeledVolume,
              conn: Connectivity = Connectivity.C26) -> LabeledVolume:
    """Priority flood of the mask foreground from labeled markers.

    Voxels are claimed in descending-distance order, ties broken by
    lower linear index, so the output is deterministic across runs and
    thread counts. Marker voxels keep their own ids, hence every marker
    id survives, and the assigned labels partition the foreground of all
    components that contain at least one marker (a component with no
    marker stays background; the decoding pipeline never produces one).
    """
    if markers.dims != mask.dims or dist.shape != mask.dims:
        raise ValueError("dist, markers and mask must share dimensions")
    fg = mask.data > 0
    if np.any((markers.data > 0) & ~fg):
        raise ValueError("markers lie outside the mask foreground")

    dz, dy, dx = mask.dims
    flat_dist = dist.ravel()
    fg_flat = fg.ravel()
    out = markers.data.astype(np.uint64).ravel()
    offsets = [(int(oz), int(oy), int(ox)) for oz, oy, ox in conn.offsets()]

    # All heap entries for a voxel share the priority (-dist, lin), so the
    # claiming label is fixed at first discovery ("reached first"): a voxel
    # enters the heap exactly once, carrying the label of the claimed
    # neighbor that found it first.
    pushed = out != 0
    heap: list[tuple[float, int]] = [(-flat_dist[lin], int(lin))
                                     for lin in np.flatnonzero(out)]
    heapq.heapify(heap)

    while heap:
        _negd, lin = heapq.heappop(heap)
        label = out[lin]
        z, rem = divmod(lin, dy * dx)
        y, x = divmod(rem, dx)
        for oz, oy, ox in offsets:
            nz, ny, nx = z + oz, y + oy, x + ox
            if 0 <= nz < dz and 0 <= ny < dy and 0 <= nx < dx:
                nlin = (nz * dy + ny) * dx + nx
                if fg_flat[nlin] and not pushed[nlin]:
                    pushed[nlin] = True
                    out[nlin] = label
                    heapq.heappush(heap, (-flat_dist[nlin], nlin))
    return mask.with_data(out.reshape(mask.dims), role="instance")


def decode_instances(prob: ProbabilityVolume, params: DecodeParams | None = None) -> LabeledVolume:
    """Full decoding pipeline from probabilities to compact instance labels."""
    if params is None:
        params = DecodeParams()
    mask = threshold_semantic(prob, params.threshold)
    if mask.foreground_count() == 0:
        return LabeledVolume(np.zeros(mask.dims, dtype=np.uint64), prob.voxel_size_nm,
                             role="instance")
    dist = distance_transform(mask)
    markers = extract_markers(dist, params.marker_fraction, prob.voxel_size_nm)
    labels = watershed(dist, markers, mask, params.connectivity)
    return filter_small(labels, params.min_instance_size)
