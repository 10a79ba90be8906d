import sys, os
sys.path.append(os.pardir)
from dataclasses import dataclass, field

from utils.geometry import box_iou_3d
from utils.errors import DataError, UsageError
from eval.metrics import bleu4, rouge_l, CiderD

METRICS = ('bleu4', 'rouge_l', 'cider_d')


@dataclass
class CaptionEval:
    ''' predictions : {key: (caption, Box3D)}, references : {key: ([captions], Box3D)} '''
    predictions: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)

    def validate(self):
        if len(self.references) == 0:
            raise DataError("caption evaluation needs at least one reference")
        for key in self.predictions:
            if key not in self.references:
                raise DataError("prediction {!r} has no reference".format(key))
        return self


def caption_scores(ev, metric):
    ''' {key: metric(predicted caption, reference captions)} over the predicted keys '''
    if metric not in METRICS:
        raise UsageError("unknown caption metric {!r}, expected one of {}".format(metric, METRICS))
    if metric == 'cider_d':
        gts = {key: list(refs) for key, (refs, _) in ev.references.items()}
        res = {key: [caption] for key, (caption, _) in ev.predictions.items()}
        _, scores = CiderD().compute_score(gts, res)
        return scores
    fn = bleu4 if metric == 'bleu4' else rouge_l
    return {key: fn(caption, ev.references[key][0]) for key, (caption, _) in ev.predictions.items()}


def m_at_k_iou(ev, metric, k, scores=None):
    '''
    (1/N) sum_i m(c_pred_i, c_gt_i) * [IoU(b_pred_i, b_gt_i) >= k], N = number of references;
    references without a prediction contribute 0
    '''
    ev.validate()
    if scores is None:
        scores = caption_scores(ev, metric)
    total = 0.0
    for key, (_, box) in ev.predictions.items():
        if box is not None and box_iou_3d(box, ev.references[key][1]) >= k:
            total += scores[key]
    return total / len(ev.references)
