import pytest

from langmodels.instructions import (format_instruction, format_response, build_instruction, build_response,
                                     fill_template, format_plan, format_done_steps, TEMPLATES, RESPONSES)
from langmodels.vocab import build_vocab, EOS, HUMAN, ASSISTANT
from utils.errors import UsageError


def test_qa_instruction_text():
    text = format_instruction('qa', {'Question': 'what color is the chair?'})
    assert text == '### human: given the 3D scene, answer the question: "what color is the chair?" ### assistant:'


def test_context_goes_first():
    text = format_instruction('dialogue', {'Message': 'and the table?'}, context='### human: hi ### assistant: hello.')
    assert text.startswith('### human: hi ### assistant: hello. ### human: and the table?')


def test_missing_field_and_unknown_template():
    with pytest.raises(UsageError):
        format_instruction('qa', {})
    with pytest.raises(UsageError):
        format_instruction('translate')
    with pytest.raises(UsageError):
        format_response('translate')


def test_every_template_has_a_response():
    assert set(TEMPLATES) == set(RESPONSES)


def test_fill_template_leaves_text():
    assert fill_template("the [Category] is here", {'Category': 'sofa'}) == "the sofa is here"


def test_build_sequences():
    vocab = build_vocab(["describe this 3d scene", "a room with a chair."])
    instr = build_instruction('scene_description', {}, vocab)
    assert instr.ids[0] == HUMAN and instr.ids[-1] == ASSISTANT
    assert not any(instr.loss_mask)
    resp = build_response("a room with a chair.", vocab)
    assert resp.ids[-1] == EOS
    assert all(resp.loss_mask)


def test_plan_formatting():
    assert format_plan(['walk to the desk', 'sit down']) == "1. walk to the desk\n2. sit down"
    assert format_done_steps(['walk to the desk']) == "1. walk to the desk."
