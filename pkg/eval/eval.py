'''
`eval`: generates responses for one task over a dataset split and scores them.
'''
import sys, os
sys.path.append(os.pardir)
import json
import math
import time

import numpy as np
import regex
import torch
from tqdm import tqdm

from utils.utils import sec2str
from utils.geometry import Box3D, Click, farthest_point_sampling, box_iou_3d
from utils.errors import DataError, UsageError
from utils.makemodel import load_assistant
from langmodels.vocab import decode_tokens, encode_text
from langmodels.instructions import format_instruction
from langmodels.spatial import parse_boxes, SPAN_RE
from dataset.synthetic import CATEGORIES, sample_click
from dataset.samples import decompose_dialogue, decompose_planning
from dataset.instruct3d import load_scenes
from eval.metrics import bleu4, rouge_l, CiderD, exact_match
from eval.densecap import CaptionEval, caption_scores, m_at_k_iou, METRICS
from eval.detection import Detection, GroundTruth, DetectionEval, detection_pr
from eval.report import metric_row, write_report, print_report

EVAL_TASKS = ('densecap', 'qa', 'scene_description', 'dialogue', 'planning', 'detect')
IOU_THRESHOLDS = (0.25, 0.5)
DETECT_RE = regex.compile(r"the (\w+) is localized at")


class Responder:
    ''' greedy / beam / sampled response text for (scene, prompts, instruction text) '''

    def __init__(self, model, vocab, gen):
        self.model = model
        self.vocab = vocab
        self.gen = gen

    def __call__(self, scene, prompts, instruction):
        emb = self.model.encode_scene(scene.point_cloud, key=scene.scene_id)
        hyp = self.model.respond(emb, prompts, encode_text(instruction, self.vocab), self.gen)
        return decode_tokens(hyp.ids, self.vocab), hyp


def strip_spatial_prefix(text):
    ''' caption part of "the object is localized at <obj>...</obj>, caption" '''
    spans = list(SPAN_RE.finditer(text))
    if not spans:
        return text.strip()
    return text[spans[-1].end():].lstrip(" ,").strip()


def answer_of(text):
    if "the answer is:" in text:
        text = text.split("the answer is:", 1)[1]
    return text.strip().rstrip(".").strip()


def text_rows(candidates, references):
    ''' caption metric rows for parallel lists of candidate texts and reference lists '''
    n = len(candidates)
    _, cider = CiderD().compute_score({i: list(r) for i, r in enumerate(references)},
                                      {i: [c] for i, c in enumerate(candidates)})
    return [
        metric_row('bleu4', np.mean([bleu4(c, r) for c, r in zip(candidates, references)]), n),
        metric_row('rouge_l', np.mean([rouge_l(c, r) for c, r in zip(candidates, references)]), n),
        metric_row('cider_d', np.mean([cider[i] for i in range(n)]), n),
    ]


def load_proposals(path):
    ''' {scene_id: [Box3D]} from {scene_id: [[cx, cy, cz, w, h, l], ...]} '''
    try:
        with open(path, 'r') as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise UsageError("proposal file {} does not exist".format(path))
    try:
        return {key: [Box3D(b[:3], b[3:]) for b in boxes] for key, boxes in doc.items()}
    except (TypeError, IndexError, ValueError) as e:
        raise DataError("malformed proposal file {}: {}".format(path, e))


def eval_densecap(scenes, respond, localize=False, proposals=None):
    '''
    One prediction per instance, keyed "<scene id>/<instance index>". Prompts are the
    ground-truth boxes, or proposals assigned to the instance they overlap most.
    With localize the predicted box is read back from the generated text.
    '''
    task = 'densecap_localize' if localize else 'densecap'
    instruction = format_instruction(task)
    ev = CaptionEval()
    for scene in tqdm(scenes.values(), desc='densecap'):
        for i, inst in enumerate(scene.instances):
            ev.references["{}/{}".format(scene.scene_id, i)] = (list(inst.captions), inst.box)
        if proposals is None:
            prompts = [(i, inst.box) for i, inst in enumerate(scene.instances)]
        else:
            best = {}
            for box in proposals.get(scene.scene_id, []):
                ious = [box_iou_3d(box, inst.box) for inst in scene.instances]
                i = int(np.argmax(ious))
                if ious[i] > 0 and (i not in best or ious[i] > best[i][0]):
                    best[i] = (ious[i], box)
            prompts = [(i, best[i][1]) for i in sorted(best)]
        for i, box in prompts:
            text, _ = respond(scene, [box], instruction)
            if localize:
                boxes, _ = parse_boxes(text, scene.bounds)
                pred_box = boxes[0] if boxes else None
            else:
                pred_box = box
            ev.predictions["{}/{}".format(scene.scene_id, i)] = (strip_spatial_prefix(text), pred_box)

    rows = []
    n = len(ev.references)
    for metric in METRICS:
        scores = caption_scores(ev.validate(), metric)
        rows.append(metric_row(metric, sum(scores.values()) / n, n))
        for k in IOU_THRESHOLDS:
            rows.append(metric_row(metric, m_at_k_iou(ev, metric, k, scores), n, threshold=k))
    return rows


def eval_qa(scenes, respond, click='none', seed=0):
    if click not in ('none', 'related'):
        raise UsageError("--click must be none or related, got {!r}".format(click))
    rng = np.random.default_rng(seed)
    candidates, references = [], []
    for scene in tqdm(scenes.values(), desc='qa'):
        for pair in scene.qa:
            prompts = []
            if click == 'related':
                prompts = [Click(sample_click(rng, scene.instances[r].box)) for r in pair.related]
            text, _ = respond(scene, prompts, format_instruction('qa', {'Question': pair.question}))
            candidates.append(answer_of(text))
            references.append([pair.answer])
    if not candidates:
        raise DataError("the split has no question answering annotations")
    rows = text_rows(candidates, references)
    rows.append(metric_row('exact_match', np.mean([exact_match(c, r) for c, r in zip(candidates, references)]),
                           len(candidates)))
    return rows


def eval_samples(scenes, respond, task):
    ''' scene_description, dialogue and planning: every assembled sample scored against its response '''
    candidates, references = [], []
    for scene in tqdm(scenes.values(), desc=task):
        if task == 'scene_description':
            items = [(format_instruction('scene_description'), scene.descriptions)] if scene.descriptions else []
        elif task == 'dialogue':
            items = [(s.instruction, [s.response]) for turns in scene.dialogues
                     for s in decompose_dialogue(turns, scene.scene_id)]
        else:
            items = [(s.instruction, [s.response]) for plan in scene.plans
                     for s in decompose_planning(plan.goal, plan.steps, scene.scene_id)]
        for instruction, refs in items:
            text, _ = respond(scene, [], instruction)
            candidates.append(text)
            references.append(list(refs))
    if not candidates:
        raise DataError("the split has no {} annotations".format(task))
    return text_rows(candidates, references)


def parse_detection(text, bounds):
    ''' (category, box) named by a detection response, or None '''
    match = DETECT_RE.search(text)
    if match is None or match.group(1) not in CATEGORIES:
        return None
    boxes, _ = parse_boxes(text, bounds)
    if not boxes:
        return None
    return match.group(1), boxes[0]


def eval_detect(scenes, respond, n_clicks=32):
    '''
    Clicks at farthest-point-sampled scene points, each answered with "what is this object?".
    The confidence of a detection is the per-token geometric mean probability of its response.
    '''
    instruction = format_instruction('detect')
    ev = DetectionEval()
    for scene in tqdm(scenes.values(), desc='detect'):
        for inst in scene.instances:
            ev.ground_truth.append(GroundTruth(scene.scene_id, inst.category, inst.box))
        coords = scene.points[:, :3]
        for index in farthest_point_sampling(coords, min(n_clicks, len(coords))):
            text, hyp = respond(scene, [Click(tuple(coords[index]))], instruction)
            parsed = parse_detection(text, scene.bounds)
            if parsed is None:
                continue
            confidence = math.exp(hyp.logprob / max(1, len(hyp.ids)))
            ev.predictions.append(Detection(scene.scene_id, parsed[0], parsed[1], confidence))
    if not ev.ground_truth:
        raise DataError("the split has no instances to detect")

    rows = []
    result = detection_pr(ev, IOU_THRESHOLDS)
    for k in IOU_THRESHOLDS:
        n_gt = len(ev.ground_truth)
        rows.append(metric_row('mAP', result[k]['mAP'], n_gt, threshold=k))
        rows.append(metric_row('AR', result[k]['AR'], n_gt, threshold=k))
        for category, stats in result[k]['per_class'].items():
            rows.append(metric_row('AP/{}'.format(category), stats['AP'], stats['n_gt'], threshold=k))
    return rows


def cmd_eval(checkpoint, task, data_root=None, split='val', click='none', localize=False,
             proposals=None, report=None, gen=None, n_clicks=32):
    if task not in EVAL_TASKS:
        raise UsageError("unknown task {!r}, expected one of {}".format(task, EVAL_TASKS))
    if (localize or proposals is not None) and task != 'densecap':
        raise UsageError("--localize and --proposals only apply to densecap")
    begin = time.time()
    model, cfg, vocab, ckpt = load_assistant(checkpoint, data_root=data_root)
    model.eval()
    gen = gen or cfg.generation
    print(gen, flush=True)
    scenes = load_scenes(cfg.data.root, split)
    respond = Responder(model, vocab, gen)

    with torch.no_grad():
        if task == 'densecap':
            rows = eval_densecap(scenes, respond, localize, load_proposals(proposals) if proposals else None)
        elif task == 'qa':
            rows = eval_qa(scenes, respond, click, cfg.seed)
        elif task == 'detect':
            rows = eval_detect(scenes, respond, n_clicks)
        else:
            rows = eval_samples(scenes, respond, task)

    print("{} | {} evaluation done on {} scenes".format(sec2str(time.time() - begin), task, len(scenes)), flush=True)
    print_report(rows)
    if report is None:
        report = os.path.join(os.path.dirname(checkpoint) or '.', 'report_{}_{}'.format(task, split))
    meta = {'task': task, 'split': split, 'checkpoint': checkpoint, 'step': ckpt.step,
            'click': click, 'localize': localize}
    write_report(rows, report, meta)
    return rows
