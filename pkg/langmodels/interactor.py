'''
Multi-modal transformer with learnable querying tokens.

Each layer runs a shared self-attention over [queries; prompts; instruction], then lets
the queries and prompts cross-attend to the scene tokens, then a feed forward.
The `direct` fusion keeps prompts out of self-attention and appends them to the scene
tokens as extra keys and values instead.
'''
import sys, os
sys.path.append(os.pardir)
from dataclasses import dataclass

import torch
import torch.nn as nn

from utils.utils import weight_init
from utils.errors import DataError, DimensionError, UsageError
from langmodels.transformer import MultiHeadAttention, PositionwiseFeedForward

FUSIONS = ('early', 'direct')


@dataclass
class MMTConfig:
    vocab_size: int
    n_queries: int = 32
    n_layers: int = 6
    n_head: int = 4
    d_mmt: int = 64
    d_enc: int = 32
    d_inner: int = 128
    max_positions: int = 256
    fusion: str = 'early'

    def __post_init__(self):
        if self.d_mmt % self.n_head != 0:
            raise DimensionError("d_mmt {} is not divisible by {} heads".format(self.d_mmt, self.n_head))
        if self.fusion not in FUSIONS:
            raise UsageError("unknown fusion mode {!r}, expected one of {}".format(self.fusion, FUSIONS))


class InteractorLayer(nn.Module):

    def __init__(self, d_mmt, d_enc, d_inner, n_head):
        super().__init__()
        self.slf_attn = MultiHeadAttention(n_head, d_mmt)
        self.scene_proj = nn.Linear(d_enc, d_mmt)
        self.crs_attn = MultiHeadAttention(n_head, d_mmt)
        self.pos_ffn = PositionwiseFeedForward(d_mmt, d_inner)

    # x : (seq x d_mmt), the first n_cross rows attend to the scene
    # scene : (M x d_enc), extra_kv : (P x d_mmt) appended to the projected scene
    def forward(self, x, n_cross, scene, extra_kv=None):
        x = self.slf_attn(x, x, x)
        kv = self.scene_proj(scene)
        if extra_kv is not None:
            kv = torch.cat([kv, extra_kv], dim=0)
        head = self.crs_attn(x[:n_cross], kv, kv)
        x = torch.cat([head, x[n_cross:]], dim=0)
        return self.pos_ffn(x)


class Interactor(nn.Module):
    ''' Aggregates prompts, instruction and scene into n_queries rows. '''

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.query_embed = nn.Parameter(torch.empty(cfg.n_queries, cfg.d_mmt))
        self.word_emb = nn.Embedding(cfg.vocab_size, cfg.d_mmt)
        self.pos_emb = nn.Embedding(cfg.max_positions, cfg.d_mmt)
        self.layer_stack = nn.ModuleList([
            InteractorLayer(cfg.d_mmt, cfg.d_enc, cfg.d_inner, cfg.n_head)
            for _ in range(cfg.n_layers)])
        self.apply(weight_init)
        nn.init.normal_(self.query_embed, mean=0, std=0.02)

    def embed_instruction(self, ids):
        ids = torch.as_tensor(ids, dtype=torch.long).reshape(-1)
        if ids.size(0) > self.cfg.max_positions:
            raise DimensionError("instruction of {} tokens exceeds max_positions {}".format(ids.size(0), self.cfg.max_positions))
        return self.word_emb(ids) + self.pos_emb(torch.arange(ids.size(0)))

    # prompts : (8*P x d_mmt), instruction ids : (len_i), scene : (M x d_enc)
    # returns queries : (n_queries x d_mmt)
    def forward(self, prompts, instruction, scene):
        cfg = self.cfg
        if scene.dim() != 2 or scene.size(0) == 0:
            raise DataError("multi-modal transformer needs a nonempty scene, got shape {}".format(tuple(scene.shape)))
        if scene.size(1) != cfg.d_enc or prompts.size(-1) != cfg.d_mmt:
            raise DimensionError("scene width {} / prompt width {} do not match d_enc {} / d_mmt {}".format(
                scene.size(1), prompts.size(-1), cfg.d_enc, cfg.d_mmt))
        n_q = cfg.n_queries
        words = self.embed_instruction(instruction)

        if cfg.fusion == 'early':
            x = torch.cat([self.query_embed, prompts, words], dim=0)
            n_cross = n_q + prompts.size(0)
            for layer in self.layer_stack:
                x = layer(x, n_cross, scene)
        else:
            x = torch.cat([self.query_embed, words], dim=0)
            for layer in self.layer_stack:
                x = layer(x, n_q, scene, extra_kv=prompts)
        return x[:n_q]


def mmt_forward(interactor, prompts, instruction, scene):
    return interactor(prompts.tokens, instruction.ids, scene.tokens)


def project_prefix(projector, queries):
    return projector(queries)
