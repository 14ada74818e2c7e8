from .bootstrap import RNG_NAME, bootstrap_f1, f1_vector, histogram, resample_counts
from .detection import (
    DEFAULT_IOU_THRESHOLD,
    area_under_pr,
    average_precision,
    evaluate_detections,
    iou,
    mean_ap,
)
from .metrics import confusion, f1, precision, prevalence, recall

__all__ = [
    "DEFAULT_IOU_THRESHOLD",
    "RNG_NAME",
    "area_under_pr",
    "average_precision",
    "bootstrap_f1",
    "confusion",
    "evaluate_detections",
    "f1",
    "f1_vector",
    "histogram",
    "iou",
    "mean_ap",
    "precision",
    "prevalence",
    "recall",
    "resample_counts",
]
