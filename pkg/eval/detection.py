'''
Per-category average precision and recall for 3D box predictions.
'''
import sys, os
sys.path.append(os.pardir)
from dataclasses import dataclass, field

import numpy as np

from utils.geometry import box_iou_3d


@dataclass
class Detection:
    scene_id: str
    category: str
    box: object
    confidence: float


@dataclass
class GroundTruth:
    scene_id: str
    category: str
    box: object


@dataclass
class DetectionEval:
    predictions: list = field(default_factory=list)
    ground_truth: list = field(default_factory=list)


def average_precision(recall, precision):
    ''' all-point interpolated area under the precision-recall curve '''
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def match_category(predictions, ground_truth, threshold):
    '''
    Greedy matching in descending confidence (input order on ties): each prediction takes
    the unmatched same-scene box of highest IoU, a true positive when that IoU >= threshold.
    Returns (tp flags in ranked order, number of matched ground-truth boxes).
    '''
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].confidence)
    matched = set()
    tp = []
    for i in order:
        pred = predictions[i]
        best, best_iou = None, -1.0
        for j, gt in enumerate(ground_truth):
            if j in matched or gt.scene_id != pred.scene_id:
                continue
            iou = box_iou_3d(pred.box, gt.box)
            if iou > best_iou:
                best, best_iou = j, iou
        if best is not None and best_iou >= threshold:
            matched.add(best)
            tp.append(1)
        else:
            tp.append(0)
    return np.array(tp, dtype=np.float64), len(matched)


def detection_pr(ev, thresholds=(0.25, 0.5)):
    '''
    {threshold: {'mAP', 'AR', 'per_class': {category: {'AP', 'AR', 'n_gt', 'n_pred'}}}}
    mAP and AR are means over the categories with at least one ground-truth box.
    '''
    categories = sorted(set(gt.category for gt in ev.ground_truth))
    result = {}
    for thr in thresholds:
        per_class = {}
        for category in categories:
            preds = [p for p in ev.predictions if p.category == category]
            gts = [g for g in ev.ground_truth if g.category == category]
            tp, n_matched = match_category(preds, gts, thr)
            if len(tp):
                cum_tp = np.cumsum(tp)
                recall = cum_tp / len(gts)
                precision = cum_tp / np.arange(1, len(tp) + 1)
                ap = average_precision(recall, precision)
            else:
                ap = 0.0
            per_class[category] = {'AP': ap, 'AR': n_matched / len(gts), 'n_gt': len(gts), 'n_pred': len(preds)}
        result[thr] = {
            'mAP': float(np.mean([c['AP'] for c in per_class.values()])) if per_class else 0.0,
            'AR': float(np.mean([c['AR'] for c in per_class.values()])) if per_class else 0.0,
            'per_class': per_class,
        }
    return result
