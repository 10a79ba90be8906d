import sys, os
sys.path.append(os.pardir)

from utils.checkpoint import load_checkpoint, apply_checkpoint, check_config_dims
from utils.utils import set_seed
from options import config_from_dict, config_to_dict
from langmodels.transformer import CausalLM
from langmodels.interactor import Interactor, MMTConfig
from langmodels.assistant import Assistant
from langmodels.vocab import Vocabulary
from pointmodels.scene_encoder import SceneEncoder
from pointmodels.prompt_encoder import PromptEncoder


def generate_scene_encoder(cfg):
    enc = cfg.encoder
    return SceneEncoder(
        in_features=enc.in_features, n_tokens=enc.n_tokens, n_out_tokens=enc.n_out_tokens,
        k_nn=enc.k_nn, d_enc=enc.d_enc, d_inner=enc.d_inner, n_head=enc.n_head, radii=enc.radii)


def generate_lm(cfg, vocab_size):
    lm = cfg.lm
    return CausalLM(
        vocab_size=vocab_size, max_positions=lm.max_positions, d_model=lm.d_lm,
        d_inner=lm.d_inner, n_layers=lm.n_layers, n_head=lm.n_head)


def mmt_config(cfg, vocab_size):
    mmt = cfg.mmt
    return MMTConfig(
        vocab_size=vocab_size, n_queries=mmt.n_queries, n_layers=mmt.n_layers, n_head=mmt.n_head,
        d_mmt=mmt.d_mmt, d_enc=cfg.encoder.d_enc, d_inner=mmt.d_inner,
        max_positions=mmt.max_positions, fusion=cfg.fusion)


def generate_assistant(cfg, vocab_size):
    set_seed(cfg.seed)
    scene_encoder = generate_scene_encoder(cfg)
    prompt_encoder = PromptEncoder(d_enc=cfg.encoder.d_enc, d_mmt=cfg.mmt.d_mmt, d_pe=cfg.mmt.d_pe)
    interactor = Interactor(mmt_config(cfg, vocab_size))
    lm = generate_lm(cfg, vocab_size)
    return Assistant(scene_encoder, prompt_encoder, interactor, lm)


def load_vocab(cfg):
    path = os.path.join(cfg.data.root, 'vocab.txt')
    print('loading vocabulary from {}'.format(path), flush=True)
    return Vocabulary.load(path)


def load_assistant(path, cfg=None, strict=True, data_root=None):
    '''
    Builds the assistant described by the checkpoint's config echo (or by cfg, whose
    model dimensions must then agree with the echo) and loads its parameters.
    Returns (model, cfg, vocab, ckpt).
    '''
    print('loading checkpoint from {}'.format(path), flush=True)
    ckpt = load_checkpoint(path)
    if cfg is None:
        cfg = config_from_dict(ckpt.config)
    else:
        check_config_dims(ckpt.config, config_to_dict(cfg))
    if data_root is not None:
        cfg.data.root = data_root
    vocab = load_vocab(cfg)
    model = generate_assistant(cfg, len(vocab))
    apply_checkpoint(model, ckpt, strict=strict)
    return model, cfg, vocab, ckpt
