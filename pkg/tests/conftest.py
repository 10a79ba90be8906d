import numpy as np
import pytest
import torch

import utils.numerics  # noqa: F401  float64 default dtype
from options import RunConfig
from langmodels.vocab import build_vocab
from dataset.synthetic import SceneConfig, generate_scene
from dataset.samples import assemble_samples, TASKS
from dataset.preparedataset import template_texts
from utils.makemodel import generate_assistant


def tiny_config(root='data'):
    cfg = RunConfig()
    cfg.data.root = root
    cfg.data.n_scenes = 3
    cfg.data.n_val_scenes = 1
    cfg.data.n_points = 256
    cfg.data.max_instances = 4

    cfg.encoder.n_tokens = 16
    cfg.encoder.n_out_tokens = 8
    cfg.encoder.k_nn = 8
    cfg.encoder.d_enc = 16
    cfg.encoder.d_inner = 32
    cfg.encoder.n_head = 2
    cfg.encoder.warmup_steps = 2

    cfg.mmt.n_queries = 4
    cfg.mmt.n_layers = 2
    cfg.mmt.n_head = 2
    cfg.mmt.d_mmt = 16
    cfg.mmt.d_inner = 32
    cfg.mmt.d_pe = 8
    cfg.mmt.max_positions = 256

    cfg.lm.n_layers = 1
    cfg.lm.n_head = 2
    cfg.lm.d_lm = 16
    cfg.lm.d_inner = 32
    cfg.lm.max_positions = 320
    cfg.lm.pretrain_steps = 3

    cfg.train.batch_size = 2
    cfg.train.total_steps = 2
    cfg.train.eval_every = 1000
    cfg.train.save_every = 1000
    cfg.train.log_every = 1

    cfg.generation.beam_size = 2
    cfg.generation.max_new_tokens = 8
    return cfg


@pytest.fixture
def cfg(tmp_path):
    return tiny_config(str(tmp_path / 'data'))


@pytest.fixture(scope='session')
def scene():
    return generate_scene(0, SceneConfig(n_points=256, max_instances=4))


@pytest.fixture(scope='session')
def vocab(scene):
    rng = np.random.default_rng(0)
    texts = [s.text() for task in TASKS for s in assemble_samples(scene, task, rng)]
    return build_vocab(texts + template_texts())


@pytest.fixture
def model(vocab):
    torch.manual_seed(0)
    return generate_assistant(tiny_config(), len(vocab))
