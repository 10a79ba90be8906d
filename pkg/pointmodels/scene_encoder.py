import sys, os
sys.path.append(os.pardir)
import time
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
from tqdm import tqdm

from utils.utils import weight_init, freeze, sec2str
from utils.numerics import gelu, AdamW, zero_grad, backward, cosine_lr
from utils.geometry import SceneBounds, farthest_point_sampling, normalize_point
from utils.errors import ContractError, NonFiniteError, DataError
from langmodels.transformer import EncoderLayer


@dataclass
class SceneEmbedding:
    ''' tokens : (M x d_enc), positions : (M x 3) token centroids in meters '''
    tokens: torch.Tensor
    positions: np.ndarray
    bounds: SceneBounds

    def __len__(self):
        return self.tokens.size(0)


# k nearest points of every centroid, ties broken by coordinates so that the
# neighborhood depends only on the point set
# returns (n_centroids x k) indices
def knn_indices(coords, centroids, k):
    out = np.empty((len(centroids), k), dtype=np.int64)
    for i, c in enumerate(centroids):
        diff = coords - c
        dist = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
        order = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0], dist))
        out[i] = order[:k]
    return out


def radius_mask(positions, radius):
    ''' (M x M) bool, token i attends to j iff their centroids lie within radius '''
    positions = torch.as_tensor(positions)
    dist = torch.cdist(positions, positions)
    mask = dist <= radius
    mask.fill_diagonal_(True)
    return mask


class SetAbstraction(nn.Module):
    ''' FPS centroids, kNN grouping, shared pointwise FFN over [rel_xyz; features], max-pool '''

    def __init__(self, d_in, d_out, k_nn):
        super().__init__()
        self.k_nn = k_nn
        self.w_1 = nn.Linear(3 + d_in, d_out)
        self.w_2 = nn.Linear(d_out, d_out)

    # coords : (N x 3) numpy, features : (N x d_in) tensor
    # returns centroids : (n_tokens x 3) numpy, tokens : (n_tokens x d_out)
    def forward(self, coords, features, n_tokens):
        n = coords.shape[0]
        if not 1 <= n_tokens <= n:
            raise ContractError("cannot draw {} tokens from {} points".format(n_tokens, n))
        centroid_idx = farthest_point_sampling(coords, n_tokens)
        centroids = coords[centroid_idx]
        neighbors = knn_indices(coords, centroids, min(self.k_nn, n))

        # grouped : (n_tokens x k x 3+d_in)
        rel = torch.as_tensor(coords[neighbors] - centroids[:, None, :])
        grouped = torch.cat([rel, features[torch.as_tensor(neighbors)]], dim=-1)
        output = self.w_2(gelu(self.w_1(grouped)))
        return centroids, output.max(dim=1).values


def tokenize_points(sa, pc, n_tokens):
    return sa(pc.coords, torch.as_tensor(pc.features), n_tokens)


class SceneEncoder(nn.Module):
    '''
    Set abstraction into point tokens, then radius-masked self-attention blocks.
    A second set abstraction after the first block halves the token count.
    Radii are fractions of the scene diagonal.
    '''

    def __init__(self, in_features=4, n_tokens=64, n_out_tokens=32, k_nn=16, d_enc=32,
                 d_inner=64, n_head=4, radii=(0.16, 0.64, 1.44)):
        super().__init__()
        self.n_tokens = n_tokens
        self.n_out_tokens = n_out_tokens
        self.radii = tuple(radii)
        self.d_enc = d_enc

        self.sa1 = SetAbstraction(in_features, d_enc, k_nn)
        self.sa2 = SetAbstraction(d_enc, d_enc, max(1, k_nn // 4))
        self.pos_emb = nn.Linear(3, d_enc)
        self.layer_stack = nn.ModuleList([
            EncoderLayer(d_enc, d_inner, n_head)
            for _ in self.radii])

        self.apply(weight_init)
        freeze(self.pos_emb)

    def forward(self, pc):
        if not np.isfinite(pc.features).all():
            raise NonFiniteError("non-finite point features")
        bounds = SceneBounds.from_points(pc.coords)
        diagonal = bounds.diagonal
        if diagonal <= 0:
            raise DataError("scene has zero extent")

        positions, tokens = tokenize_points(self.sa1, pc, self.n_tokens)
        unit = torch.as_tensor(normalize_point(positions, bounds))
        tokens = tokens + self.pos_emb(unit)

        for i, (enc_layer, radius) in enumerate(zip(self.layer_stack, self.radii)):
            tokens = enc_layer(tokens, slf_attn_mask=radius_mask(positions, radius * diagonal))
            if i == 0 and self.n_out_tokens < len(positions):
                positions, tokens = self.sa2(positions, tokens, self.n_out_tokens)

        if not bool(torch.isfinite(tokens).all()):
            raise NonFiniteError("non-finite scene token features")
        return SceneEmbedding(tokens, positions, bounds)


def encode_scene(encoder, pc):
    with torch.no_grad():
        return encoder(pc)


def warmup_scene_encoder(encoder, clouds, steps=200, lr=1e-3, log_every=50):
    '''
    Self-supervised warm-up: a temporary linear head reconstructs every token's
    normalized centroid. The encoder is frozen afterwards.
    Returns the per-step losses.
    '''
    before = time.time()
    head = nn.Linear(encoder.d_enc, 3)
    named = [(n, p) for n, p in encoder.named_parameters() if p.requires_grad]
    named += [("head." + n, p) for n, p in head.named_parameters()]
    optimizer = AdamW(named, weight_decay=0.0)
    losses = []
    for step in tqdm(range(steps), desc="encoder warm-up", disable=steps < log_every):
        pc = clouds[step % len(clouds)]
        emb = encoder(pc)
        target = torch.as_tensor(normalize_point(emb.positions, emb.bounds))
        loss = ((head(emb.tokens) - target) ** 2).mean()
        zero_grad(optimizer.parameters())
        backward(loss, optimizer.parameters())
        optimizer.step(cosine_lr(step, steps, lr, lr * 0.01))
        losses.append(loss.item())
        if (step + 1) % log_every == 0:
            print("{} | warm-up step {:06d}/{:06d} | centroid loss: {:.6f}".format(
                sec2str(time.time() - before), step + 1, steps, loss.item()), flush=True)
    freeze(encoder)
    return losses
