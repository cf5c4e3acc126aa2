"""Per-class Dice/IoU evaluation and report assembly.

Scores are computed on class masks (all voxels of a class, regardless
of instance identity). When a class is empty in both volumes it scores
1.0, so reports stay total when a class is absent from a patch. The
identity dice == 2*iou/(1+iou) holds for every entry by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import LabeledVolume

# Canonical class order of the five-organelle benchmark reports.
DEFAULT_CLASS_NAMES = {1: "Mito", 2: "Nucleus", 3: "ER", 4: "Endo", 5: "Golgi"}

AVERAGING_SCHEMES = ("macro_unweighted", "voxel_weighted")


@dataclass(frozen=True)
class ClassScores:
    dice: float
    iou: float


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[int, ClassScores]
    average: ClassScores
    averaging_scheme: str


def _as_bool(mask) -> np.ndarray:
    data = mask.data if isinstance(mask, LabeledVolume) else np.asarray(mask)
    return data != 0


def _overlap_counts(pred_mask, gt_mask) -> tuple[int, int, int]:
    a = _as_bool(pred_mask)
    b = _as_bool(gt_mask)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a & b))
    return inter, int(np.count_nonzero(a)), int(np.count_nonzero(b))


def dice(pred_mask, gt_mask) -> float:
    """2|A∩B| / (|A|+|B|); 1.0 when both masks are empty."""
    inter, na, nb = _overlap_counts(pred_mask, gt_mask)
    if na + nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def iou(pred_mask, gt_mask) -> float:
    """|A∩B| / |A∪B|; 1.0 when both masks are empty."""
    inter, na, nb = _overlap_counts(pred_mask, gt_mask)
    union = na + nb - inter
    if union == 0:
        return 1.0
    return inter / union


def per_class_report(pred: LabeledVolume, gt: LabeledVolume, classes,
                     scheme: str = "macro_unweighted") -> MetricsReport:
    """Dice/IoU per class plus an average.

    ``macro_unweighted`` averages equally over classes; ``voxel_weighted``
    weights each class by its ground-truth foreground voxel count (equal
    weights if every class is empty in the ground truth).
    """
    if pred.dims != gt.dims:
        raise ValueError(f"shape mismatch: pred {pred.dims} vs gt {gt.dims}")
    if scheme not in AVERAGING_SCHEMES:
        raise ValueError(f"unknown averaging scheme {scheme!r}")
    classes = [int(c) for c in classes]
    if not classes:
        raise ValueError("need at least one class")

    per_class: dict[int, ClassScores] = {}
    weights = []
    for c in classes:
        pm = pred.data == c
        gm = gt.data == c
        per_class[c] = ClassScores(dice=dice(pm, gm), iou=iou(pm, gm))
        weights.append(float(np.count_nonzero(gm)))

    w = np.asarray(weights)
    if scheme == "macro_unweighted" or w.sum() == 0:
        w = np.ones(len(classes))
    w = w / w.sum()
    avg = ClassScores(
        dice=float(np.dot(w, [per_class[c].dice for c in classes])),
        iou=float(np.dot(w, [per_class[c].iou for c in classes])),
    )
    return MetricsReport(per_class=per_class, average=avg, averaging_scheme=scheme)


def instances_to_class_masks(instances: LabeledVolume,
                             instance_class: dict[int, int]) -> LabeledVolume:
    """Replace each voxel's instance id with its semantic class."""
    ids = np.unique(instances.data)
    ids = ids[ids > 0]
    missing = [int(i) for i in ids if int(i) not in instance_class]
    if missing:
        raise ValueError(f"instance ids without a class mapping: {missing}")
    max_id = int(ids.max()) if ids.size else 0
    lut = np.zeros(max_id + 1, dtype=np.uint64)
    for i in ids:
        lut[int(i)] = instance_class[int(i)]
    out = lut[instances.data]
    return instances.with_data(out, role="semantic")


def format_report_table(report: MetricsReport,
                        class_names: dict[int, str] | None = None) -> str:
    """Plain-text table: one row per class in report order, then Average."""
    names = class_names or {}
    rows = [(names.get(c, f"class_{c}"), s) for c, s in report.per_class.items()]
    rows.append(("Average", report.average))
    width = max(len(n) for n, _ in rows)
    lines = [f"{'':<{width}}  {'Dice':>6}  {'IoU':>6}"]
    for name, s in rows:
        lines.append(f"{name:<{width}}  {s.dice:6.3f}  {s.iou:6.3f}")
    return "\n".join(lines)
