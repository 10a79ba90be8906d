import sys, os
sys.path.append(os.pardir)
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from utils.utils import weight_init
from utils.numerics import DTYPE
from utils.geometry import Click, Box3D, points_in_box, normalize_point
from utils.errors import DataError

N_PROMPT_TOKENS = 8


@dataclass
class PromptTokens:
    ''' tokens : (8*P x d_mmt), kinds : per-prompt 'click' or 'box' '''
    tokens: torch.Tensor
    kinds: list = field(default_factory=list)

    def __len__(self):
        return len(self.kinds)


# p : (... x 3) in [0,1], B : (3 x d/2)
# returns (... x d)
def fourier_pe(p, B):
    proj = 2 * math.pi * (torch.as_tensor(p, dtype=DTYPE) @ B)
    return torch.cat([torch.sin(proj), torch.cos(proj)], dim=-1)


class PromptEncoder(nn.Module):
    ''' Encodes clicks and boxes into blocks of 8 tokens each. '''

    def __init__(self, d_enc=32, d_mmt=64, d_pe=32, d_hidden=128, n_tokens=N_PROMPT_TOKENS):
        super().__init__()
        self.d_mmt = d_mmt
        self.n_tokens = n_tokens
        self.B = nn.Parameter(torch.randn(3, d_pe // 2))
        self.ffn_click = nn.Sequential(
            nn.Linear(d_pe, d_hidden), nn.GELU(), nn.Linear(d_hidden, n_tokens * d_mmt))
        self.ffn_box = nn.Sequential(
            nn.Linear(d_enc + 6, d_hidden), nn.GELU(), nn.Linear(d_hidden, n_tokens * d_mmt))
        self.fallback_count = 0
        self.apply(weight_init)

    def roi_feature(self, box, scene):
        ''' mean of the scene tokens inside the box, or the nearest token when none is '''
        inside = points_in_box(scene.positions, box)
        if len(inside) == 0:
            self.fallback_count += 1
            print("warning: no scene token inside box prompt at {}, using the nearest token".format(
                tuple(round(c, 3) for c in box.center)), file=sys.stderr, flush=True)
            diff = scene.positions - np.array(box.center)
            dist = (diff * diff).sum(axis=1)
            inside = [int(np.lexsort((np.arange(len(dist)), dist))[0])]
        return scene.tokens[torch.as_tensor(np.asarray(inside))].mean(dim=0)

    def encode_click(self, click, scene):
        if not scene.bounds.contains(click.point):
            raise DataError("click {} lies outside the scene bounds".format(click.point))
        u = normalize_point(click.point, scene.bounds)
        return self.ffn_click(fourier_pe(u, self.B)).view(self.n_tokens, self.d_mmt)

    def encode_box(self, box, scene):
        bounds = scene.bounds
        geometry = np.concatenate([normalize_point(box.center, bounds), np.array(box.size) / bounds.extent])
        feature = torch.cat([self.roi_feature(box, scene), torch.as_tensor(geometry)])
        return self.ffn_box(feature).view(self.n_tokens, self.d_mmt)

    def encode_visual_prompt(self, prompt, scene):
        if isinstance(prompt, Click):
            return self.encode_click(prompt, scene)
        elif isinstance(prompt, Box3D):
            return self.encode_box(prompt, scene)
        raise DataError("unsupported visual prompt {!r}".format(prompt))

    # prompts : list of Click / Box3D, concatenated in input order
    def forward(self, prompts, scene):
        if len(prompts) == 0:
            return PromptTokens(torch.zeros(0, self.d_mmt), [])
        blocks = [self.encode_visual_prompt(p, scene) for p in prompts]
        kinds = ['click' if isinstance(p, Click) else 'box' for p in prompts]
        return PromptTokens(torch.cat(blocks, dim=0), kinds)
