"""Instance-level statistics: size census, size classes, filtering.

Size classes follow the benchmark convention: small below 5k voxels,
large above 10k, medium in between (both 5000 and 10000 fall in the
medium band so the three classes partition all positive counts).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lpa import compact_labels
from .volume import LabeledVolume

SMALL_BELOW = 5000
LARGE_ABOVE = 10000


@dataclass(frozen=True)
class InstanceReport:
    """Per-instance census over a compacted instance volume."""

    sizes: dict[int, int]
    size_class: dict[int, str]
    total_instances: int
    classes: dict[int, int] | None = None


def instance_sizes(instances: LabeledVolume) -> dict[int, int]:
    """Exact voxel count per nonzero label."""
    if instances.role != "instance":
        raise ValueError(f"expected an instance volume, got role {instances.role!r}")
    ids, counts = np.unique(instances.data, return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts) if i > 0}


def size_class(count: int) -> str:
    """Size band of an instance: 'small', 'medium' or 'large'."""
    if count < 1:
        raise ValueError(f"instance size must be >= 1, got {count}")
    if count < SMALL_BELOW:
        return "small"
    if count > LARGE_ABOVE:
        return "large"
    return "medium"


def build_instance_report(instances: LabeledVolume,
                          classes: dict[int, int] | None = None) -> InstanceReport:
    """Census over a compacted instance volume (ids exactly 1..K)."""
    sizes = instance_sizes(instances)
    k = len(sizes)
    if sizes and sorted(sizes) != list(range(1, k + 1)):
        raise ValueError("instance ids are not compacted to 1..K")
    if classes is not None:
        missing = set(sizes) - set(classes)
        if missing:
            raise ValueError(f"instance ids without a class: {sorted(missing)}")
        classes = {i: int(classes[i]) for i in sizes}
    bands = {i: size_class(c) for i, c in sizes.items()}
    return InstanceReport(sizes=sizes, size_class=bands, total_instances=k, classes=classes)


def size_histogram(sizes: dict[int, int], bin_edges) -> np.ndarray:
    """Histogram of instance sizes over half-open bins [e_i, e_{i+1}).

    A size equal to the last edge is not counted. Edges must be strictly
    ascending with at least two entries.
    """
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("bin_edges must be a 1D sequence of at least two edges")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must be strictly ascending")
    counts = np.zeros(edges.size - 1, dtype=np.int64)
    if not sizes:
        return counts
    vals = np.fromiter(sizes.values(), dtype=np.float64, count=len(sizes))
    bins = np.searchsorted(edges, vals, side="right") - 1
    ok = (bins >= 0) & (vals < edges[-1])
    np.add.at(counts, bins[ok], 1)
    return counts


def log_spaced_edges(lo: float, hi: float, num_bins: int) -> np.ndarray:
    """Logarithmically spaced edges for size-distribution plots."""
    if not (lo > 0 and hi > lo and num_bins >= 1):
        raise ValueError("need 0 < lo < hi and num_bins >= 1")
    return np.logspace(np.log10(lo), np.log10(hi), num_bins + 1)


def filter_small(instances: LabeledVolume, min_size: int) -> LabeledVolume:
    """Suppress instances below ``min_size`` voxels and recompact to 1..K'."""
    if instances.role != "instance":
        raise ValueError(f"expected an instance volume, got role {instances.role!r}")
    sizes = instance_sizes(instances)
    drop = np.array([i for i, c in sizes.items() if c < min_size], dtype=np.uint64)
    data = instances.data
    if drop.size:
        data = np.where(np.isin(data, drop), np.uint64(0), data)
    out, _ = compact_labels(instances.with_data(data.astype(np.uint64), role="instance"))
    return out
