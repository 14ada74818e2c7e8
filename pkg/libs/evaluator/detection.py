from __future__ import annotations

import logging
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from libs.core.errors import InputError
from libs.core.models import LESION_CLASSES, LesionBox

logger = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.4

BoxLike = Union[LesionBox, Sequence[float]]


def _corners(box: BoxLike) -> Tuple[float, float, float, float]:
    if isinstance(box, LesionBox):
        return box.x_min, box.y_min, box.x_max, box.y_max
    if len(box) != 4:
        raise InputError(f"box must have 4 coordinates, got {len(box)}")
    x_min, y_min, x_max, y_max = (float(v) for v in box)
    return x_min, y_min, x_max, y_max


def iou(a: BoxLike, b: BoxLike) -> float:
    """Intersection over union of two [x_min, y_min, x_max, y_max] boxes."""
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if inter <= 0.0 or union <= 0.0:
        return 0.0
    return inter / union


def area_under_pr(tp: np.ndarray, fp: np.ndarray, n_truths: int) -> float:
    """All-point interpolated AP from per-rank tp/fp flags."""
    if n_truths == 0:
        return 0.0
    tp_cum = np.cumsum(tp, dtype=float)
    fp_cum = np.cumsum(fp, dtype=float)
    rec = tp_cum / float(n_truths)
    prec = tp_cum / np.maximum(tp_cum + fp_cum, np.finfo(np.float64).eps)

    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    # precision envelope
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    changes = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changes + 1] - mrec[changes]) * mpre[changes + 1]))


def _single_class(boxes: Sequence[LesionBox]) -> str | None:
    classes = {b.lesion_class for b in boxes}
    unknown = sorted(c for c in classes if c not in LESION_CLASSES)
    if unknown:
        raise InputError(f"Undefined lesion classes: {unknown}")
    if len(classes) > 1:
        raise InputError(f"average_precision is per class, got {sorted(classes)}")
    return next(iter(classes), None)


def _match_image(
    ranked: Sequence[LesionBox], truths: Sequence[LesionBox], iou_threshold: float
) -> List[bool]:
    # Each prediction, in rank order, takes the best still-unmatched truth.
    taken = [False] * len(truths)
    hits: List[bool] = []
    for pred in ranked:
        best, best_iou = -1, iou_threshold
        for j, truth in enumerate(truths):
            if taken[j]:
                continue
            overlap = iou(pred, truth)
            if overlap >= best_iou and (best < 0 or overlap > best_iou):
                best, best_iou = j, overlap
        if best >= 0:
            taken[best] = True
        hits.append(best >= 0)
    return hits


def _ap_over_images(
    predictions: Mapping[str, Sequence[LesionBox]],
    truths: Mapping[str, Sequence[LesionBox]],
    iou_threshold: float,
) -> float:
    n_truths = sum(len(v) for v in truths.values())
    ranked: List[Tuple[float, str, int]] = [
        (-box.confidence, image_id, k)
        for image_id in sorted(predictions)
        for k, box in enumerate(predictions[image_id])
    ]
    # stable: ties keep image order then list order
    ranked.sort(key=lambda item: item[0])

    hit_by_key: Dict[Tuple[str, int], bool] = {}
    for image_id, preds in predictions.items():
        order = sorted(range(len(preds)), key=lambda k: -preds[k].confidence)
        flags = _match_image([preds[k] for k in order], truths.get(image_id, ()), iou_threshold)
        for k, flag in zip(order, flags):
            hit_by_key[(image_id, k)] = flag

    tp = np.array([hit_by_key[(i, k)] for _, i, k in ranked], dtype=float)
    return area_under_pr(tp, 1.0 - tp, n_truths)


def average_precision(
    predictions: Sequence[LesionBox],
    truths: Sequence[LesionBox],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> float:
    """AP for one class on one image; 0.0 when there are no truths."""
    _single_class([*predictions, *truths])
    return _ap_over_images({"": list(predictions)}, {"": list(truths)}, iou_threshold)


def mean_ap(per_class_ap: Mapping[str, float]) -> float:
    missing = [c for c in LESION_CLASSES if c not in per_class_ap]
    extra = sorted(c for c in per_class_ap if c not in LESION_CLASSES)
    if missing or extra:
        raise InputError(f"mean_ap needs exactly the 17 classes; missing={missing} extra={extra}")
    return float(np.mean([per_class_ap[c] for c in LESION_CLASSES]))


def evaluate_detections(
    predictions_by_image: Mapping[str, Sequence[LesionBox]],
    truths_by_image: Mapping[str, Sequence[LesionBox]],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> Dict[str, object]:
    """Per-class AP over a set of images plus their mean.

    Matching happens within each image; ranking by confidence spans all images.
    A class with no ground-truth boxes scores 0.0.
    """
    per_class: Dict[str, float] = {}
    for lesion_class in LESION_CLASSES:
        preds = {
            image_id: [b for b in boxes if b.lesion_class == lesion_class]
            for image_id, boxes in predictions_by_image.items()
        }
        truths = {
            image_id: [b for b in boxes if b.lesion_class == lesion_class]
            for image_id, boxes in truths_by_image.items()
        }
        per_class[lesion_class] = _ap_over_images(preds, truths, iou_threshold)
    result = {
        "iou_threshold": iou_threshold,
        "per_class_ap": per_class,
        "mAP": mean_ap(per_class),
    }
    logger.info("Detection mAP@%.2f = %.4f", iou_threshold, result["mAP"])
    return result
