import random

import pytest

from libs.core.errors import InputError
from libs.core.models import LESION_CLASSES
from libs.evaluator import average_precision, evaluate_detections, iou, mean_ap
from tests.builders import box

# fmt: off
PUBLISHED_AP = [
    0.663, 0.231, 0.272, 0.860, 0.459, 0.281, 0.185, 0.256, 0.318,
    0.315, 0.251, 0.197, 0.387, 0.228, 0.579, 0.340, 0.381,
]
# fmt: on

GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def test_iou_of_half_overlapping_squares():
    assert iou([0, 0, 2, 2], [1, 0, 3, 2]) == 1 / 3


def test_iou_identical_and_disjoint():
    assert iou([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert iou([0, 0, 1, 1], [2, 2, 3, 3]) == 0.0
    assert iou([0, 0, 1, 1], [1, 0, 2, 1]) == 0.0
    assert iou(box(), box()) == 1.0


def test_iou_rejects_wrong_arity():
    with pytest.raises(InputError):
        iou([0, 0, 1], [0, 0, 1, 1])


def test_average_precision_basics():
    truth = box(0.1, 0.1, 0.4, 0.4)
    assert average_precision([box(0.1, 0.1, 0.4, 0.4)], [truth]) == 1.0
    assert average_precision([box(0.6, 0.6, 0.9, 0.9)], [truth]) == 0.0
    assert average_precision([], [truth]) == 0.0
    assert average_precision([box()], []) == 0.0


def test_false_positive_ranked_first_halves_precision():
    truth = box(0.1, 0.1, 0.4, 0.4)
    preds = [box(0.6, 0.6, 0.9, 0.9, confidence=0.9), box(0.1, 0.1, 0.4, 0.4, confidence=0.5)]
    assert average_precision(preds, [truth]) == pytest.approx(0.5)


def test_duplicate_detection_counts_as_false_positive():
    truth = box(0.1, 0.1, 0.4, 0.4)
    preds = [box(confidence=0.9), box(confidence=0.8)]
    assert average_precision(preds, [truth]) == 1.0
    # recall tops out at 1/2 with precision 1 at that point
    assert average_precision(preds, [truth, box(0.6, 0.6, 0.9, 0.9)]) == pytest.approx(0.5)


def test_iou_threshold_is_inclusive():
    truth = box(0.0, 0.0, 0.5, 0.5)
    pred = box(0.0, 0.0, 0.5, 0.2)  # iou 0.4
    assert iou(pred, truth) == pytest.approx(0.4)
    assert average_precision([pred], [truth], iou_threshold=iou(pred, truth)) == 1.0
    assert average_precision([pred], [truth], iou_threshold=0.5) == 0.0


def test_average_precision_rejects_mixed_classes():
    with pytest.raises(InputError):
        average_precision([box(lesion_class="Nodule/Mass")], [box(lesion_class="Cardiomegaly")])


def _oracle_ap(preds, truths, thr):
    """Sum over true positives of (1/N) * best precision at that rank or later."""
    if not truths:
        return 0.0
    order = sorted(range(len(preds)), key=lambda k: -preds[k].confidence)
    taken = set()
    hits = []
    for k in order:
        candidates = [
            (iou(preds[k], t), -j) for j, t in enumerate(truths) if j not in taken
        ]
        candidates = [c for c in candidates if c[0] >= thr]
        if candidates:
            taken.add(-max(candidates)[1])
        hits.append(bool(candidates))
    precisions = []
    tp = 0
    for rank, hit in enumerate(hits, start=1):
        tp += hit
        precisions.append(tp / rank)
    return sum(
        max(precisions[i:]) / len(truths) for i, hit in enumerate(hits) if hit
    )


def _random_box(rnd, lesion_class="Nodule/Mass"):
    x1, x2 = sorted(rnd.sample(GRID, 2))
    y1, y2 = sorted(rnd.sample(GRID, 2))
    return box(x1, y1, x2, y2, confidence=round(rnd.random(), 6), lesion_class=lesion_class)


def test_average_precision_agrees_with_oracle():
    rnd = random.Random(7)
    for _ in range(3000):
        preds = [_random_box(rnd) for _ in range(rnd.randint(0, 5))]
        truths = [_random_box(rnd) for _ in range(rnd.randint(0, 3))]
        for thr in (0.1, 0.4, 0.5):
            assert average_precision(preds, truths, thr) == pytest.approx(
                _oracle_ap(preds, truths, thr), abs=1e-9
            )


def test_mean_ap_of_published_per_class_values():
    assert len(PUBLISHED_AP) == len(LESION_CLASSES)
    assert mean_ap(dict(zip(LESION_CLASSES, PUBLISHED_AP))) == pytest.approx(0.365, abs=5e-4)


def test_mean_ap_needs_every_class():
    partial = dict(zip(LESION_CLASSES[:-1], PUBLISHED_AP[:-1]))
    with pytest.raises(InputError):
        mean_ap(partial)
    with pytest.raises(InputError):
        mean_ap({**dict(zip(LESION_CLASSES, PUBLISHED_AP)), "Fracture": 0.5})


def test_evaluate_detections_across_images():
    truths = {
        "img1": [box(0.1, 0.1, 0.4, 0.4), box(0.5, 0.5, 0.9, 0.9, lesion_class="Cardiomegaly")],
        "img2": [box(0.2, 0.2, 0.6, 0.6)],
    }
    preds = {
        "img1": [
            box(0.1, 0.1, 0.4, 0.4, confidence=0.9),
            box(0.5, 0.5, 0.9, 0.9, confidence=0.7, lesion_class="Cardiomegaly"),
        ],
        # matched per image: this box misses img2's truth
        "img2": [box(0.7, 0.7, 0.9, 0.9, confidence=0.8)],
    }
    result = evaluate_detections(preds, truths)
    per_class = result["per_class_ap"]
    assert set(per_class) == set(LESION_CLASSES)
    assert per_class["Nodule/Mass"] == pytest.approx(0.5)
    assert per_class["Cardiomegaly"] == 1.0
    assert per_class["Rib fracture"] == 0.0
    assert result["mAP"] == pytest.approx(1.5 / 17)
    assert result["iou_threshold"] == 0.4
