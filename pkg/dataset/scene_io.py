'''
Scene documents.

{id, points: [[x,y,z,r,g,b]], instances: [{box: [cx,cy,cz,w,h,l], category, attributes, captions}],
 qa: [{question, answer, related}], dialogues: [[{role, text}]], plans: [{goal, steps}], descriptions}

Reals are decimal strings with 17 significant digits so float64 values round-trip exactly.
'''
import sys, os
sys.path.append(os.pardir)
import json

import numpy as np

from utils.geometry import Box3D
from utils.errors import DataError
from dataset.synthetic import SceneRecord, Instance, QAPair, Turn, Plan

REQUIRED = ('id', 'points', 'instances')


def real_to_str(x):
    return format(float(x), '.17g')


def _real(value, where):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise DataError("scene field {!r}: expected a decimal real, got {!r}".format(where, value))
    if not np.isfinite(out):
        raise DataError("scene field {!r}: non-finite value {!r}".format(where, value))
    return out


def _field(doc, key, where, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise DataError("scene field {!r} is missing".format(where))
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise DataError("scene field {!r} must be a {}".format(where, kind.__name__))
    return value


def scene_to_dict(record):
    return {
        'id': record.scene_id,
        'points': [[real_to_str(v) for v in row] for row in record.points],
        'instances': [{
            'box': [real_to_str(v) for v in inst.box.as_list()],
            'category': inst.category,
            'attributes': dict(inst.attributes),
            'captions': list(inst.captions)} for inst in record.instances],
        'qa': [{'question': p.question, 'answer': p.answer, 'related': list(p.related)} for p in record.qa],
        'dialogues': [[{'role': t.role, 'text': t.text} for t in d] for d in record.dialogues],
        'plans': [{'goal': p.goal, 'steps': list(p.steps)} for p in record.plans],
        'descriptions': list(record.descriptions),
    }


def scene_from_dict(doc):
    if not isinstance(doc, dict):
        raise DataError("scene document must be a JSON object")
    for key in REQUIRED:
        _field(doc, key, key)
    scene_id = _field(doc, 'id', 'id', str)

    rows = _field(doc, 'points', 'points', list)
    if len(rows) == 0:
        raise DataError("scene field 'points' is empty")
    points = np.empty((len(rows), 6), dtype=np.float64)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 6:
            raise DataError("scene field 'points[{}]' must hold 6 values".format(i))
        for j, v in enumerate(row):
            points[i, j] = _real(v, "points[{}][{}]".format(i, j))

    instances = []
    for i, inst in enumerate(_field(doc, 'instances', 'instances', list)):
        where = "instances[{}]".format(i)
        box = _field(inst, 'box', where + ".box", list)
        if len(box) != 6:
            raise DataError("scene field {!r} must hold 6 values".format(where + ".box"))
        values = [_real(v, "{}.box[{}]".format(where, j)) for j, v in enumerate(box)]
        try:
            box = Box3D(values[:3], values[3:])
        except DataError as e:
            raise DataError("scene field {!r}: {}".format(where + ".box", e))
        instances.append(Instance(
            box,
            _field(inst, 'category', where + ".category", str),
            dict(_field(inst, 'attributes', where + ".attributes", dict)),
            list(inst.get('captions', []))))

    qa = []
    for i, pair in enumerate(doc.get('qa', [])):
        where = "qa[{}]".format(i)
        related = _field(pair, 'related', where + ".related", list)
        if not all(isinstance(r, int) for r in related):
            raise DataError("scene field {!r} must hold instance ids".format(where + ".related"))
        qa.append(QAPair(_field(pair, 'question', where + ".question", str),
                         _field(pair, 'answer', where + ".answer", str), list(related)))

    dialogues = []
    for i, dialogue in enumerate(doc.get('dialogues', [])):
        turns = []
        for j, turn in enumerate(dialogue):
            where = "dialogues[{}][{}]".format(i, j)
            turns.append(Turn(_field(turn, 'role', where + ".role", str), _field(turn, 'text', where + ".text", str)))
        dialogues.append(turns)

    plans = []
    for i, plan in enumerate(doc.get('plans', [])):
        where = "plans[{}]".format(i)
        plans.append(Plan(_field(plan, 'goal', where + ".goal", str), list(_field(plan, 'steps', where + ".steps", list))))

    record = SceneRecord(scene_id, points, instances, qa, dialogues, plans, list(doc.get('descriptions', [])))
    return record.validate()


def write_scene(record, path):
    with open(path, 'w') as f:
        json.dump(scene_to_dict(record), f, indent=1)


def read_scene(path):
    try:
        with open(path, 'r') as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError("{} is not a JSON document: {}".format(path, e))
    return scene_from_dict(doc)
