import sys, os
sys.path.append(os.pardir)

import torch

from utils.geometry import Box3D, Click
from utils.errors import UsageError, DataError
from utils.makemodel import load_assistant
from langmodels.vocab import decode_tokens, encode_text
from langmodels.instructions import HUMAN, ASSISTANT
from dataset.scene_io import read_scene


def parse_reals(text, n, flag):
    parts = text.split(",")
    if len(parts) != n:
        raise UsageError("{} expects {} comma-separated numbers, got {!r}".format(flag, n, text))
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise UsageError("{} expects numbers, got {!r}".format(flag, text))


def parse_prompts(clicks=(), boxes=()):
    ''' "x,y,z" clicks then "cx,cy,cz,w,h,l" boxes, each group in flag order '''
    prompts = [Click(tuple(parse_reals(c, 3, '--click'))) for c in clicks]
    for b in boxes:
        values = parse_reals(b, 6, '--box')
        try:
            prompts.append(Box3D(values[:3], values[3:]))
        except DataError as e:
            raise UsageError("--box {!r}: {}".format(b, e))
    return prompts


def as_instruction(text):
    ''' wraps free text in the human / assistant identifiers unless it already carries them '''
    text = text.strip()
    if not text:
        raise UsageError("empty instruction")
    if ASSISTANT in text.lower():
        return text
    return "{} {} {}".format(HUMAN, text, ASSISTANT)


def generate_response(model, vocab, record, instruction, prompts, gen):
    model.eval()
    with torch.no_grad():
        emb = model.encode_scene(record.point_cloud, key=record.scene_id)
        hyp = model.respond(emb, prompts, encode_text(as_instruction(instruction), vocab), gen)
    return decode_tokens(hyp.ids, vocab), hyp


def cmd_generate(checkpoint, scene_path, instruction, clicks=(), boxes=(), gen=None, data_root=None):
    prompts = parse_prompts(clicks, boxes)
    record = read_scene(scene_path)
    model, cfg, vocab, _ = load_assistant(checkpoint, data_root=data_root)
    text, hyp = generate_response(model, vocab, record, instruction, prompts, gen or cfg.generation)
    print(text, flush=True)
    return text
