import numpy as np
import pytest
import torch

from pointmodels.scene_encoder import SceneEncoder, encode_scene, knn_indices, radius_mask, warmup_scene_encoder
from utils.geometry import PointCloud
from utils.errors import NonFiniteError, ContractError


def small_encoder():
    torch.manual_seed(0)
    return SceneEncoder(n_tokens=16, n_out_tokens=8, k_nn=8, d_enc=16, d_inner=32, n_head=2)


def test_embedding_shapes(scene):
    emb = encode_scene(small_encoder(), scene.point_cloud)
    assert emb.tokens.shape == (8, 16)
    assert emb.positions.shape == (8, 3)
    assert len(emb) == 8
    assert emb.bounds == scene.bounds


def test_permutation_invariance(scene):
    enc = small_encoder()
    pc = scene.point_cloud
    order = np.random.default_rng(1).permutation(len(pc))
    a = encode_scene(enc, pc)
    b = encode_scene(enc, pc.permuted(order))
    np.testing.assert_array_equal(a.positions, b.positions)
    torch.testing.assert_close(a.tokens, b.tokens)


def test_too_many_tokens():
    enc = SceneEncoder(n_tokens=16, n_out_tokens=8, k_nn=4, d_enc=16, d_inner=32, n_head=2)
    pc = PointCloud(np.random.default_rng(0).uniform(0, 1, size=(10, 3)), np.zeros((10, 4)))
    with pytest.raises(ContractError):
        encode_scene(enc, pc)


def test_non_finite_features(scene):
    pc = scene.point_cloud
    pc.features[0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        encode_scene(small_encoder(), pc)


def test_knn_indices_nearest_first():
    coords = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0], [0.5, 0, 0]])
    idx = knn_indices(coords, coords[:1], 3)
    assert idx.tolist() == [[0, 3, 1]]


def test_radius_mask():
    positions = np.array([[0.0, 0, 0], [1.0, 0, 0], [5.0, 0, 0]])
    mask = radius_mask(positions, 1.5)
    assert mask.tolist() == [[True, True, False], [True, True, False], [False, False, True]]
    assert bool(radius_mask(positions, 0.0).diagonal().all())


def test_pos_emb_is_frozen():
    enc = small_encoder()
    assert not any(p.requires_grad for p in enc.pos_emb.parameters())
    assert any(p.requires_grad for p in enc.sa1.parameters())


def test_warmup_freezes_encoder(scene):
    enc = small_encoder()
    losses = warmup_scene_encoder(enc, [scene.point_cloud], steps=3, lr=1e-3, log_every=1)
    assert len(losses) == 3
    assert all(np.isfinite(losses))
    assert not any(p.requires_grad for p in enc.parameters())
