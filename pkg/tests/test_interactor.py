import numpy as np
import pytest
import torch

from langmodels.interactor import Interactor, InteractorLayer, MMTConfig, mmt_forward, project_prefix
from langmodels.assistant import TRAINABLE
from langmodels.decoding import GenerationConfig
from langmodels.vocab import decode_tokens, TokenSequence
from dataset.samples import assemble_samples
from utils.numerics import zero_grad, backward, finite_difference_check
from utils.geometry import SceneBounds
from pointmodels.scene_encoder import SceneEmbedding
from pointmodels.prompt_encoder import PromptTokens
from utils.errors import DataError, DimensionError, UsageError


def densecap_sample(scene):
    return assemble_samples(scene, 'densecap', np.random.default_rng(0))[0]


def test_config_validation():
    with pytest.raises(UsageError):
        MMTConfig(vocab_size=10, fusion='late')
    with pytest.raises(DimensionError):
        MMTConfig(vocab_size=10, d_mmt=10, n_head=4)


@pytest.mark.parametrize('fusion', ['early', 'direct'])
def test_query_shape(fusion):
    torch.manual_seed(0)
    mmt = Interactor(MMTConfig(vocab_size=300, n_queries=4, n_layers=2, n_head=2, d_mmt=16, d_enc=8,
                               d_inner=32, fusion=fusion))
    out = mmt(torch.randn(16, 16), [1, 4, 20, 5], torch.randn(6, 8))
    assert out.shape == (4, 16)


@pytest.mark.parametrize('fusion', ['early', 'direct'])
def test_prompts_change_queries(fusion):
    torch.manual_seed(0)
    mmt = Interactor(MMTConfig(vocab_size=300, n_queries=4, n_layers=2, n_head=2, d_mmt=16, d_enc=8,
                               d_inner=32, fusion=fusion))
    scene = torch.randn(6, 8)
    a = mmt(torch.zeros(0, 16), [4, 20, 5], scene)
    b = mmt(torch.randn(8, 16), [4, 20, 5], scene)
    assert not torch.allclose(a, b)


def test_empty_scene_and_long_instruction():
    mmt = Interactor(MMTConfig(vocab_size=300, n_queries=4, n_layers=1, n_head=2, d_mmt=16, d_enc=8,
                               d_inner=32, max_positions=8))
    with pytest.raises(DataError):
        mmt(torch.zeros(0, 16), [4, 5], torch.zeros(0, 8))
    with pytest.raises(DimensionError):
        mmt(torch.zeros(0, 16), list(range(9)), torch.randn(3, 8))


def test_trainable_split(model):
    names = [n for n, _ in model.trainable_parameters()]
    assert names and all(n.startswith(TRAINABLE) for n in names)
    frozen = [n for n, _ in model.frozen_parameters()]
    assert any(n.startswith('lm.') for n in frozen)
    assert any(n.startswith('scene_encoder.') for n in frozen)
    assert not any(n.startswith(TRAINABLE) for n in frozen)


def test_scene_cache(model, scene):
    a = model.encode_scene(scene.point_cloud, key=scene.scene_id)
    assert model.encode_scene(scene.point_cloud, key=scene.scene_id) is a
    model.clear_cache()
    assert model.encode_scene(scene.point_cloud, key=scene.scene_id) is not a


def test_gradients_reach_only_trainable_parameters(model, scene, vocab):
    sample = densecap_sample(scene)
    emb = model.encode_scene(scene.point_cloud)
    nll, logits, seq = model(emb, sample.prompts, sample.instruction_tokens(vocab), sample.response_tokens(vocab))
    assert bool(torch.isfinite(nll))
    assert logits.shape == (len(seq) - 1, len(vocab))

    params = [p for _, p in model.trainable_parameters()]
    zero_grad(params)
    backward(nll, params)
    assert all(p.grad is None for _, p in model.frozen_parameters())
    assert model.interactor.query_embed.grad is not None
    assert model.projector.weight.grad is not None


def test_respond(model, scene, vocab):
    sample = densecap_sample(scene)
    emb = model.encode_scene(scene.point_cloud)
    for strategy in ('greedy', 'beam', 'sample'):
        gen = GenerationConfig(strategy=strategy, beam_size=2, max_new_tokens=5)
        hyp = model.respond(emb, sample.prompts, sample.instruction_tokens(vocab), gen)
        assert 1 <= len(hyp.ids) <= 5
        assert isinstance(decode_tokens(hyp.ids, vocab), str)


def test_greedy_respond_is_deterministic(model, scene, vocab):
    sample = densecap_sample(scene)
    emb = model.encode_scene(scene.point_cloud)
    gen = GenerationConfig(strategy='greedy', max_new_tokens=6)
    instr = sample.instruction_tokens(vocab)
    assert model.respond(emb, sample.prompts, instr, gen).ids == model.respond(emb, sample.prompts, instr, gen).ids


def small_interactor(fusion='early', seed=0):
    torch.manual_seed(seed)
    return Interactor(MMTConfig(vocab_size=300, n_queries=4, n_layers=2, n_head=2, d_mmt=16, d_enc=8,
                                d_inner=32, fusion=fusion))


def scene_embedding(tokens):
    return SceneEmbedding(tokens, np.zeros((tokens.size(0), 3)), SceneBounds((0, 0, 0), (1, 1, 1)))


@pytest.mark.parametrize('fusion', ['early', 'direct'])
def test_scene_row_order_does_not_matter(fusion):
    mmt = small_interactor(fusion)
    g = torch.Generator().manual_seed(3)
    scene = torch.randn(10, 8, generator=g)
    prompts = PromptTokens(torch.randn(8, 16, generator=g), ['click'])
    instruction = TokenSequence([1, 40, 41, 42], [False] * 4)
    base = mmt_forward(mmt, prompts, instruction, scene_embedding(scene))
    for seed in range(5):
        perm = torch.randperm(10, generator=torch.Generator().manual_seed(seed))
        out = mmt_forward(mmt, prompts, instruction, scene_embedding(scene[perm]))
        assert ((out - base).abs().max() / base.abs().max()).item() <= 1e-9


def test_instruction_changes_queries():
    mmt = small_interactor()
    rng = np.random.default_rng(0)
    scene = scene_embedding(torch.randn(6, 8, generator=torch.Generator().manual_seed(0)))
    prompts = PromptTokens(torch.zeros(0, 16), [])
    for _ in range(20):
        ids = rng.integers(6, 300, size=int(rng.integers(1, 10))).tolist()
        other = list(ids)
        j = int(rng.integers(len(ids)))
        other[j] = 6 + (other[j] - 6 + 1) % 294
        a = mmt_forward(mmt, prompts, TokenSequence(ids, [False] * len(ids)), scene)
        b = mmt_forward(mmt, prompts, TokenSequence(other, [False] * len(other)), scene)
        assert (a - b).abs().max().item() > 0


def test_fusions_agree_without_prompts():
    early = small_interactor('early')
    direct = small_interactor('direct', seed=1)
    direct.load_state_dict(early.state_dict())
    scene = torch.randn(7, 8, generator=torch.Generator().manual_seed(5))
    no_prompts = torch.zeros(0, 16)
    torch.testing.assert_close(early(no_prompts, [1, 9, 10], scene), direct(no_prompts, [1, 9, 10], scene),
                               rtol=0, atol=1e-12)
    torch.testing.assert_close(early(no_prompts, [], scene), direct(no_prompts, [], scene), rtol=0, atol=1e-12)


def test_layer_gradient_matches_finite_differences():
    torch.manual_seed(0)
    layer = InteractorLayer(d_mmt=8, d_enc=6, d_inner=16, n_head=2)
    g = torch.Generator().manual_seed(1)
    scene = torch.randn(5, 6, generator=g)
    w = torch.randn(7, 8, generator=g)
    x = torch.randn(7, 8, generator=g)
    assert finite_difference_check(lambda t: (layer(t, 4, scene) * w).sum(), x) < 1e-4
    assert finite_difference_check(lambda s: (layer(x, 4, s) * w).sum(), scene) < 1e-4


def test_project_prefix():
    torch.manual_seed(0)
    projector = torch.nn.Linear(16, 12)
    q = torch.randn(4, 16)
    assert project_prefix(projector, q).shape == (4, 12)
    torch.testing.assert_close(project_prefix(projector, torch.zeros(4, 16)), projector.bias.expand(4, 12))
    w = torch.randn(4, 12)
    assert finite_difference_check(lambda t: (project_prefix(projector, t) * w).sum(), q) < 1e-6
