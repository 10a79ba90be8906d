'''
Training samples assembled from scene annotations.

Samples keep their instruction and response as text; token sequences are produced
against a vocabulary on demand so the vocabulary can be built from the samples.
'''
import sys, os
sys.path.append(os.pardir)
from dataclasses import dataclass, field

from utils.geometry import Click
from utils.errors import DataError, UsageError
from langmodels.vocab import TokenSequence, BOS, encode_text
from langmodels.instructions import (format_instruction, format_response, build_response,
                                     format_plan, format_done_steps)
from langmodels.spatial import render_box
from dataset.synthetic import sample_click

TASKS = ('densecap', 'qa', 'scene_description', 'dialogue', 'planning', 'detect')
PLAN_DONE = "all tasks are done."


@dataclass
class TrainingSample:
    scene_id: str
    task: str
    instruction: str
    response: str
    prompts: list = field(default_factory=list)
    # instance ids the sample talks about, used by evaluation
    targets: list = field(default_factory=list)

    def instruction_tokens(self, vocab):
        return encode_text(self.instruction, vocab, loss=False)

    def response_tokens(self, vocab):
        return build_response(self.response, vocab)

    def sequence(self, vocab):
        ''' <bos> instruction response <eos>, loss_mask true on the response only '''
        return TokenSequence([BOS], [False]) + self.instruction_tokens(vocab) + self.response_tokens(vocab)

    def text(self):
        return "{} {}".format(self.instruction, self.response)


def _prompt_for(rng, box):
    if rng.random() < 0.5:
        return box
    return Click(sample_click(rng, box))


def densecap_samples(scene, rng):
    bounds = scene.bounds
    out = []
    for i, inst in enumerate(scene.instances):
        if not inst.captions:
            continue
        caption = inst.captions[int(rng.integers(len(inst.captions)))]
        prompt = _prompt_for(rng, inst.box)
        localize = rng.random() < 0.5
        task = 'densecap_localize' if localize else 'densecap'
        response = format_response(task, {'Caption': caption, 'Box': render_box(inst.box, bounds)})
        out.append(TrainingSample(scene.scene_id, 'densecap', format_instruction(task), response, [prompt], [i]))
    return out


def qa_samples(scene, rng):
    bounds = scene.bounds
    out = []
    for pair in scene.qa:
        localize = rng.random() < 0.5
        prompts = []
        if rng.random() < 0.5:
            prompts = [Click(sample_click(rng, scene.instances[r].box)) for r in pair.related]
        task = 'qa_localize' if localize else 'qa'
        boxes = ", ".join(render_box(scene.instances[r].box, bounds) for r in pair.related)
        response = format_response(task, {'Answer': pair.answer, 'Box': boxes})
        out.append(TrainingSample(scene.scene_id, 'qa', format_instruction(task, {'Question': pair.question}),
                                  response, prompts, list(pair.related)))
    return out


def scene_description_samples(scene, rng):
    return [TrainingSample(scene.scene_id, 'scene_description', format_instruction('scene_description'), d)
            for d in scene.descriptions]


def detect_samples(scene, rng):
    bounds = scene.bounds
    out = []
    for i, inst in enumerate(scene.instances):
        prompt = Click(sample_click(rng, inst.box))
        response = format_response('detect', {'Category': inst.category, 'Box': render_box(inst.box, bounds)})
        out.append(TrainingSample(scene.scene_id, 'detect', format_instruction('detect'), response, [prompt], [i]))
    return out


def decompose_dialogue(turns, scene_id=""):
    '''
    n alternating human / assistant turn pairs -> n samples; sample i carries every
    earlier exchange verbatim in front of the i-th human message
    '''
    if len(turns) == 0 or len(turns) % 2 != 0:
        raise DataError("a dialogue needs a nonempty even number of turns, got {}".format(len(turns)))
    for j, turn in enumerate(turns):
        expected = 'human' if j % 2 == 0 else 'assistant'
        if turn.role != expected:
            raise DataError("dialogue turn {} should come from {}, got {}".format(j, expected, turn.role))
    out = []
    context = ""
    for j in range(0, len(turns), 2):
        human, reply = turns[j].text, turns[j + 1].text
        instruction = format_instruction('dialogue', {'Message': human}, context)
        out.append(TrainingSample(scene_id, 'dialogue', instruction, reply))
        context = "{} {}".format(instruction, reply)
    return out


def decompose_planning(goal, steps, scene_id=""):
    '''
    n steps -> n+1 samples: the full enumerated plan, then for i = 1..n the next step
    after steps 1..i are done, the last one acknowledging completion
    '''
    if len(steps) == 0:
        raise DataError("a plan needs at least one step")
    out = [TrainingSample(scene_id, 'planning', format_instruction('planning', {'Goal': goal}), format_plan(steps))]
    for i in range(1, len(steps) + 1):
        instruction = format_instruction('planning_next', {'Goal': goal, 'Done': format_done_steps(steps[:i])})
        target = steps[i] if i < len(steps) else PLAN_DONE
        out.append(TrainingSample(scene_id, 'planning', instruction, target))
    return out


def dialogue_samples(scene, rng):
    out = []
    for turns in scene.dialogues:
        out.extend(decompose_dialogue(turns, scene.scene_id))
    return out


def planning_samples(scene, rng):
    out = []
    for plan in scene.plans:
        out.extend(decompose_planning(plan.goal, plan.steps, scene.scene_id))
    return out


ASSEMBLERS = {
    'densecap': densecap_samples,
    'qa': qa_samples,
    'scene_description': scene_description_samples,
    'dialogue': dialogue_samples,
    'planning': planning_samples,
    'detect': detect_samples,
}


def assemble_samples(scene, task, rng):
    if task not in ASSEMBLERS:
        raise UsageError("unknown task {!r}, expected one of {}".format(task, TASKS))
    return ASSEMBLERS[task](scene, rng)
