'''
The composed 3D assistant.

frozen scene encoder -> prompt encoder -> multi-modal transformer -> projector -> frozen LM.
Only the prompt encoder, the multi-modal transformer (with its querying tokens) and the
projector are trainable; gradients still flow through the frozen LM into the prefix.
'''
import sys, os
sys.path.append(os.pardir)

import torch
import torch.nn as nn

from utils.utils import freeze, weight_init
from langmodels.vocab import TokenSequence, BOS
from langmodels.interactor import mmt_forward, project_prefix
from langmodels.transformer import sequence_loss
from langmodels.decoding import generate
from pointmodels.scene_encoder import encode_scene

TRAINABLE = ('prompt_encoder', 'interactor', 'projector')


class Assistant(nn.Module):

    def __init__(self, scene_encoder, prompt_encoder, interactor, lm):
        super().__init__()
        self.scene_encoder = freeze(scene_encoder)
        self.prompt_encoder = prompt_encoder
        self.interactor = interactor
        self.projector = nn.Linear(interactor.cfg.d_mmt, lm.d_model)
        self.lm = freeze(lm)
        self.projector.apply(weight_init)
        self._scene_cache = {}

    def trainable_parameters(self):
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    def frozen_parameters(self):
        return [(n, p) for n, p in self.named_parameters() if not p.requires_grad]

    def encode_scene(self, pc, key=None):
        ''' frozen scene embedding, cached per key '''
        if key is not None and key in self._scene_cache:
            return self._scene_cache[key]
        emb = encode_scene(self.scene_encoder, pc)
        if key is not None:
            self._scene_cache[key] = emb
        return emb

    def clear_cache(self):
        self._scene_cache = {}

    # scene : SceneEmbedding, prompts : list of Click / Box3D, instruction : TokenSequence
    # returns prefix : (n_queries x d_lm)
    def prefix(self, scene, prompts, instruction):
        prompt_tokens = self.prompt_encoder(prompts, scene)
        queries = mmt_forward(self.interactor, prompt_tokens, instruction, scene)
        return project_prefix(self.projector, queries)

    # returns (nll, logits, sequence), logits row i is scored against sequence token i+1
    def forward(self, scene, prompts, instruction, response):
        seq = TokenSequence([BOS], [False]) + instruction + response
        nll, logits = sequence_loss(self.lm, self.prefix(scene, prompts, instruction), seq)
        return nll, logits, seq

    def step_fn(self, prefix, instruction):
        context = [BOS] + list(instruction.ids)

        def step(history):
            with torch.no_grad():
                logits = self.lm(prefix, context + list(history))[-1]
                return torch.log_softmax(logits, dim=-1)
        return step

    def respond(self, scene, prompts, instruction, gen):
        ''' Hypothesis generated after the assistant identifier '''
        with torch.no_grad():
            prefix = self.prefix(scene, prompts, instruction)
        return generate(self.step_fn(prefix, instruction), gen)
