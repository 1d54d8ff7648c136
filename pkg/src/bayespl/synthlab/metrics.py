"""Evaluation metrics for the three pseudo-label tasks.

Semantic: per-class IoU, mIoU over classes with a non-empty union, and
S-Acc (accuracy over labeled points). Instance: I-Acc under the subset
criterion (a mask counts as correct when its intersection with its
associated ground-truth instance equals the mask itself) and a simplified
AP@50. Grounding: G-Acc over labeled utterances. Points or utterances
labeled -1 are excluded everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import assignment, kernels

IGNORE = -1


@dataclass(frozen=True)
class SemanticMetrics:
    per_class_iou: tuple  # None for classes with an empty union
    miou: float | None
    s_acc: float | None
    labeled_fraction: float

    def as_dict(self) -> dict:
        return {
            "per_class_iou": list(self.per_class_iou),
            "miou": self.miou,
            "s_acc": self.s_acc,
            "labeled_fraction": self.labeled_fraction,
        }


@dataclass(frozen=True)
class InstanceMetrics:
    i_acc: float | None  # None when there are no predicted masks
    ap50: float
    n_predicted: int
    n_correct: int

    def as_dict(self) -> dict:
        return {
            "i_acc": self.i_acc,
            "ap50": self.ap50,
            "n_predicted": self.n_predicted,
            "n_correct": self.n_correct,
        }


@dataclass(frozen=True)
class GroundingMetrics:
    g_acc: float | None  # None when no utterance is labeled
    labeled_fraction: float

    def as_dict(self) -> dict:
        return {"g_acc": self.g_acc, "labeled_fraction": self.labeled_fraction}


def confusion_matrix(pred, gt, num_classes: int) -> np.ndarray:
    """Counts[gt, pred] over points with pred != IGNORE."""
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    C = int(num_classes)
    keep = pred != IGNORE
    idx = gt[keep] * C + pred[keep]
    return np.bincount(idx, minlength=C * C).reshape(C, C)


def iou_from_confusion(confusion: np.ndarray):
    """Per-class IoU (None on empty union) and their mean."""
    tp = np.diag(confusion).astype(np.float64)
    union = confusion.sum(axis=0) + confusion.sum(axis=1) - tp
    ious = [float(tp[c] / union[c]) if union[c] > 0 else None for c in range(confusion.shape[0])]
    valid = [v for v in ious if v is not None]
    miou = float(np.mean(valid)) if valid else None
    return tuple(ious), miou


def semantic_metrics(pred, gt, num_classes: int) -> SemanticMetrics:
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    conf = confusion_matrix(pred, gt, num_classes)
    ious, miou = iou_from_confusion(conf)
    labeled = pred != IGNORE
    n_labeled = int(labeled.sum())
    s_acc = float((pred[labeled] == gt[labeled]).mean()) if n_labeled else None
    frac = n_labeled / pred.shape[0] if pred.shape[0] else 0.0
    return SemanticMetrics(per_class_iou=ious, miou=miou, s_acc=s_acc, labeled_fraction=frac)


def instance_metrics(masks, gt_masks) -> InstanceMetrics:
    """Subset-criterion accuracy plus a simplified AP@50.

    Only non-empty predicted masks count as predictions. AP@50 matches
    predictions to ground truth by assignment on IoU and scores
    TP / (n_pred + n_gt - TP) with IoU >= 0.5 as a true positive.
    """
    masks = np.asarray(masks, dtype=bool)
    gt_masks = np.asarray(gt_masks, dtype=bool)
    if masks.ndim != 2 or gt_masks.ndim != 2 or masks.shape[1] != gt_masks.shape[1]:
        raise ValueError(f"mask shapes {masks.shape} and {gt_masks.shape} do not align")
    pred = masks[masks.any(axis=1)]
    n_pred, n_gt = pred.shape[0], gt_masks.shape[0]

    n_correct = 0
    if n_pred and n_gt:
        inter = (pred.astype(np.int64) @ gt_masks.T.astype(np.int64))
        sizes = pred.sum(axis=1)
        associated = np.argmax(inter, axis=1)  # ties resolve to the lowest index
        n_correct = int((inter[np.arange(n_pred), associated] == sizes).sum())
    i_acc = (n_correct / n_pred) if n_pred else None

    if n_pred == 0 and n_gt == 0:
        ap50 = 1.0
    elif n_pred == 0 or n_gt == 0:
        ap50 = 0.0
    else:
        iou = kernels.pairwise_iou(pred, gt_masks)
        pairs = assignment.lsa(-iou).pairs
        tp = sum(1 for r, c in pairs if iou[r, c] >= 0.5)
        ap50 = tp / (n_pred + n_gt - tp)
    return InstanceMetrics(i_acc=i_acc, ap50=float(ap50), n_predicted=n_pred, n_correct=n_correct)


def grounding_metrics(indices, gt) -> GroundingMetrics:
    indices = np.asarray(indices, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if indices.shape != gt.shape:
        raise ValueError(f"prediction shape {indices.shape} does not match ground truth {gt.shape}")
    labeled = indices != IGNORE
    n = int(labeled.sum())
    g_acc = float((indices[labeled] == gt[labeled]).mean()) if n else None
    frac = n / indices.shape[0] if indices.shape[0] else 0.0
    return GroundingMetrics(g_acc=g_acc, labeled_fraction=frac)


def evaluate(task: str, predictions, ground_truth, num_classes: int | None = None):
    """Dispatch to the task-specific metric computation."""
    if task == "semantic":
        if num_classes is None:
            raise ValueError("semantic evaluation needs num_classes")
        return semantic_metrics(predictions, ground_truth, num_classes)
    if task == "instance":
        return instance_metrics(predictions, ground_truth)
    if task == "grounding":
        return grounding_metrics(predictions, ground_truth)
    raise ValueError(f"unknown task {task!r}, expected semantic, instance, or grounding")
