'''
Task instruction and response templates.

An instruction reads "### human: <template> ### assistant:", a multi-turn context is
the verbatim text of the prior turns placed in front of it.
'''
import regex

from utils.errors import UsageError
from langmodels.vocab import encode_text, EOS, TokenSequence

HUMAN = "### human:"
ASSISTANT = "### assistant:"

TEMPLATES = {
    'densecap': "describe this object in the given 3D scene.",
    'densecap_localize': "given the 3D scene, localize and describe this object.",
    'qa': 'given the 3D scene, answer the question: "[Question]"',
    'qa_localize': 'answer the question: "[Question]" with the related object locations in the input 3D scene.',
    'scene_description': "describe this 3D scene",
    'detect': "what is this object?",
    'planning': "I want to [Goal]. What should I do?",
    'planning_next': "I want to [Goal]. I have done these things: [Done] What should I do next?",
    'dialogue': "[Message]",
}

RESPONSES = {
    'densecap': "[Caption]",
    'densecap_localize': "the object is localized at [Box], [Caption]",
    'qa': "[Answer].",
    'qa_localize': "the related objects are localized at [Box]. the answer is: [Answer].",
    'scene_description': "[Caption]",
    'detect': "the [Category] is localized at [Box].",
    'planning': "[Plan]",
    'planning_next': "[Step]",
    'dialogue': "[Response]",
}

PLACEHOLDER_RE = regex.compile(r"\[(\w+)\]")


def fill_template(template, fields):
    def replace(match):
        name = match.group(1)
        if name not in fields:
            raise UsageError("missing template field [{}] in {!r}".format(name, template))
        return str(fields[name])
    return PLACEHOLDER_RE.sub(replace, template)


def format_instruction(task, fields=None, context=""):
    if task not in TEMPLATES:
        raise UsageError("unknown instruction template {!r}".format(task))
    turn = "{} {} {}".format(HUMAN, fill_template(TEMPLATES[task], fields or {}), ASSISTANT)
    return "{} {}".format(context.strip(), turn) if context.strip() else turn


def format_response(task, fields=None):
    if task not in RESPONSES:
        raise UsageError("unknown response template {!r}".format(task))
    return fill_template(RESPONSES[task], fields or {})


def build_instruction(task, fields, vocab, context=""):
    ''' instruction TokenSequence, loss_mask false throughout '''
    return encode_text(format_instruction(task, fields, context), vocab, loss=False)


def build_response(text, vocab):
    ''' response TokenSequence terminated by <eos>, loss_mask true throughout '''
    seq = encode_text(text, vocab, loss=True)
    return seq + TokenSequence([EOS], [True])


def format_done_steps(steps):
    return " ".join("{}. {}.".format(i + 1, step) for i, step in enumerate(steps))


def format_plan(steps):
    return "\n".join("{}. {}".format(i + 1, step) for i, step in enumerate(steps))
