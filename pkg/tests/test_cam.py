"""Mask construction, pseudo-ground-truth assembly (against a per-cell
brute-force oracle), and the embedding-swap augmentations."""
from types import SimpleNamespace

import numpy as np
import pytest

from sirmetric.autodiff import Tensor
from sirmetric.cam import (CamArtifacts, augment_negative, augment_positive,
                           build_cam_artifacts, build_pseudo_gt, cam_masks,
                           write_cam_debug_csv)
from sirmetric.networks import DisentangledEmbedding, NetworkConfig, ReidModel

CFG = NetworkConfig(image_shape=(1, 4, 4), feature_shape=(3, 2, 2),
                    id_dim=4, app_dim=2, num_identities=3, id_dropout=0.0)


def _artifacts(id_mask):
    id_mask = np.asarray(id_mask, dtype=np.float64)
    return CamArtifacts(id_mask.copy(), 0.5, id_mask, 1.0 - id_mask)


def test_cam_masks_hand_example():
    id_mask, app_mask = cam_masks(np.array([[1.0, 3.0], [5.0, 7.0]]))
    np.testing.assert_array_equal(id_mask, [[0.0, 0.0], [1.0, 1.0]])
    np.testing.assert_array_equal(app_mask, [[1.0, 1.0], [0.0, 0.0]])


def test_cam_masks_constant_map_ties_to_id():
    id_mask, app_mask = cam_masks(np.full((2, 3), 2.5))
    np.testing.assert_array_equal(id_mask, np.ones((2, 3)))
    np.testing.assert_array_equal(app_mask, np.zeros((2, 3)))


def test_cam_masks_scale_invariant():
    rng = np.random.default_rng(0)
    cam = rng.normal(size=(4, 2))
    a, _ = cam_masks(cam)
    b, _ = cam_masks(3.7 * cam)
    np.testing.assert_array_equal(a, b)


def test_cam_masks_partition_random_maps():
    rng = np.random.default_rng(1)
    cams = rng.normal(size=(500, 4, 2))
    id_mask, app_mask = cam_masks(cams)
    np.testing.assert_array_equal(id_mask + app_mask, np.ones_like(id_mask))
    np.testing.assert_array_equal(id_mask * app_mask, np.zeros_like(id_mask))


def test_build_cam_artifacts_uses_true_label_map():
    model = ReidModel(CFG, seed=0)
    rng = np.random.default_rng(2)
    f = rng.uniform(size=(3, 2, 2))
    art = build_cam_artifacts(f, 1, model)
    expected_cam = model.cam_maps(f[None], np.array([1]))[0]
    np.testing.assert_array_equal(art.cam, expected_cam)
    assert art.threshold == expected_cam.mean()
    np.testing.assert_array_equal(art.id_mask, (expected_cam >= expected_cam.mean()))


def test_cam_artifacts_reject_broken_partition():
    with pytest.raises(ValueError):
        CamArtifacts(np.zeros((2, 2)), 0.0, np.ones((2, 2)), np.ones((2, 2)))


def test_pseudo_gt_hand_example():
    f_q = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    f_n = np.array([[[5.0, 6.0], [7.0, 8.0]]])
    art_q = _artifacts([[1.0, 0.0], [0.0, 0.0]])   # app_q = [[0,1],[1,1]]
    art_n = _artifacts([[0.0, 1.0], [0.0, 0.0]])   # app_n = [[1,0],[1,1]] -> joint [[0,0],[1,1]]
    pseudo = build_pseudo_gt(f_q, f_n, art_q, art_n)
    np.testing.assert_array_equal(pseudo.id_from_query, [[[1.0, 0.0], [7.0, 8.0]]])
    np.testing.assert_array_equal(pseudo.id_from_negative, [[[0.0, 6.0], [3.0, 4.0]]])


def test_pseudo_gt_vanishing_joint_region():
    rng = np.random.default_rng(3)
    f_q, f_n = rng.uniform(size=(2, 2, 2, 2))
    art_q = _artifacts([[1.0, 1.0], [0.0, 0.0]])
    art_n = _artifacts([[0.0, 0.0], [1.0, 1.0]])  # app masks are disjoint
    pseudo = build_pseudo_gt(f_q, f_n, art_q, art_n)
    np.testing.assert_array_equal(pseudo.id_from_query, art_q.id_mask[None] * f_q)


def _brute_force_pseudo(f_keep, f_fill, id_keep, app_keep, app_fill):
    """Independent per-cell case analysis of the re-entanglement rule."""
    out = np.zeros_like(f_keep)
    channels, height, width = f_keep.shape
    for c in range(channels):
        for i in range(height):
            for j in range(width):
                if id_keep[i, j] == 1.0:
                    out[c, i, j] += f_keep[c, i, j]
                if app_keep[i, j] == 1.0 and app_fill[i, j] == 1.0:
                    out[c, i, j] += f_fill[c, i, j]
    return out


def test_pseudo_gt_matches_brute_force_oracle():
    rng = np.random.default_rng(4)
    for _ in range(100):
        f_q = rng.uniform(size=(2, 3, 2))
        f_n = rng.uniform(size=(2, 3, 2))
        id_q, app_q = cam_masks(rng.normal(size=(3, 2)))
        id_n, app_n = cam_masks(rng.normal(size=(3, 2)))
        art_q = CamArtifacts(np.zeros((3, 2)), 0.0, id_q, app_q)
        art_n = CamArtifacts(np.zeros((3, 2)), 0.0, id_n, app_n)
        pseudo = build_pseudo_gt(f_q, f_n, art_q, art_n)
        np.testing.assert_array_equal(
            pseudo.id_from_query, _brute_force_pseudo(f_q, f_n, id_q, app_q, app_n))
        np.testing.assert_array_equal(
            pseudo.id_from_negative, _brute_force_pseudo(f_n, f_q, id_n, app_n, app_q))


def test_pseudo_gt_role_swap_symmetry():
    rng = np.random.default_rng(5)
    f_q, f_n = rng.uniform(size=(2, 2, 2, 2))
    id_q, app_q = cam_masks(rng.normal(size=(2, 2)))
    id_n, app_n = cam_masks(rng.normal(size=(2, 2)))
    art_q = CamArtifacts(np.zeros((2, 2)), 0.0, id_q, app_q)
    art_n = CamArtifacts(np.zeros((2, 2)), 0.0, id_n, app_n)
    forward = build_pseudo_gt(f_q, f_n, art_q, art_n)
    swapped = build_pseudo_gt(f_n, f_q, art_n, art_q)
    np.testing.assert_array_equal(forward.id_from_query, swapped.id_from_negative)
    np.testing.assert_array_equal(forward.id_from_negative, swapped.id_from_query)


def test_pseudo_gt_batch_matches_per_sample():
    from sirmetric.cam import build_pseudo_gt_batch
    rng = np.random.default_rng(15)
    f_q = rng.uniform(size=(6, 2, 3, 2))
    f_n = rng.uniform(size=(6, 2, 3, 2))
    cam_q = rng.normal(size=(6, 3, 2))
    cam_n = rng.normal(size=(6, 3, 2))
    batch_q, batch_n = build_pseudo_gt_batch(f_q, f_n, cam_q, cam_n)
    for b in range(6):
        id_q, app_q = cam_masks(cam_q[b])
        id_n, app_n = cam_masks(cam_n[b])
        art_q = CamArtifacts(cam_q[b], float(cam_q[b].mean()), id_q, app_q)
        art_n = CamArtifacts(cam_n[b], float(cam_n[b].mean()), id_n, app_n)
        single = build_pseudo_gt(f_q[b], f_n[b], art_q, art_n)
        np.testing.assert_array_equal(batch_q[b], single.id_from_query)
        np.testing.assert_array_equal(batch_n[b], single.id_from_negative)


def test_pseudo_gt_support_invariant():
    rng = np.random.default_rng(6)
    f_q = rng.uniform(0.5, 1.0, size=(2, 3, 3))
    f_n = rng.uniform(0.5, 1.0, size=(2, 3, 3))
    id_q, app_q = cam_masks(rng.normal(size=(3, 3)))
    id_n, app_n = cam_masks(rng.normal(size=(3, 3)))
    art_q = CamArtifacts(np.zeros((3, 3)), 0.0, id_q, app_q)
    art_n = CamArtifacts(np.zeros((3, 3)), 0.0, id_n, app_n)
    pseudo = build_pseudo_gt(f_q, f_n, art_q, art_n)
    outside = (id_q + app_q * app_n) == 0.0
    assert np.all(pseudo.id_from_query[:, outside] == 0.0)


def _embeddings(model, batch, seed):
    rng = np.random.default_rng(seed)
    f = model.backbone_forward(rng.uniform(size=(batch, 1, 4, 4)))
    return model.separator_forward(f)


def test_augment_positive_order_and_shapes():
    model = ReidModel(CFG, seed=1)
    emb_q = _embeddings(model, 2, 7)
    emb_p = _embeddings(model, 2, 8)
    outs = augment_positive(emb_q, emb_p, model)
    assert len(outs) == 3
    for out in outs:
        assert out.shape == (2, 1, 4, 4)
    # against individual generator calls
    _, first = model.generator_forward(emb_p.id_feat, emb_q.app_feat)
    _, second = model.generator_forward(emb_q.id_feat, emb_p.app_feat)
    _, third = model.generator_forward(emb_q.id_feat, emb_q.app_feat)
    np.testing.assert_allclose(outs[0].data, first.data, rtol=0, atol=1e-15)
    np.testing.assert_allclose(outs[1].data, second.data, rtol=0, atol=1e-15)
    np.testing.assert_allclose(outs[2].data, third.data, rtol=0, atol=1e-15)


def test_augment_positive_identical_pair_collapses():
    model = ReidModel(CFG, seed=1)
    emb = _embeddings(model, 3, 9)
    outs = augment_positive(emb, emb, model)
    np.testing.assert_array_equal(outs[0].data, outs[1].data)
    np.testing.assert_array_equal(outs[1].data, outs[2].data)


def test_augment_negative_shapes_and_swap_flag():
    model = ReidModel(CFG, seed=2)
    emb_q = _embeddings(model, 2, 10)
    emb_n = _embeddings(model, 2, 11)
    emb_p = _embeddings(model, 2, 12)
    tap_a, tap_b = augment_negative(emb_q, emb_n, model)
    assert tap_a.shape == (2, 3, 2, 2) and tap_b.shape == (2, 3, 2, 2)
    swapped_a, swapped_b = augment_negative(emb_q, emb_n, model,
                                            swap_second_appearance=True,
                                            emb_positive=emb_p)
    np.testing.assert_array_equal(tap_a.data, swapped_a.data)  # first tap untouched
    assert np.any(tap_b.data != swapped_b.data)
    with pytest.raises(ValueError):
        augment_negative(emb_q, emb_n, model, swap_second_appearance=True)


def test_augment_negative_identical_pair_collapses():
    model = ReidModel(CFG, seed=2)
    emb = _embeddings(model, 2, 13)
    tap_a, tap_b = augment_negative(emb, emb, model)
    np.testing.assert_array_equal(tap_a.data, tap_b.data)


def test_cam_debug_csv_dump(tmp_path):
    model = ReidModel(CFG, seed=3)
    rng = np.random.default_rng(14)
    f_q = rng.uniform(size=(3, 2, 2))
    f_n = rng.uniform(size=(3, 2, 2))
    art_q = build_cam_artifacts(f_q, 0, model)
    art_n = build_cam_artifacts(f_n, 1, model)
    pseudo = build_pseudo_gt(f_q, f_n, art_q, art_n)
    path = tmp_path / "debug.csv"
    write_cam_debug_csv(path, art_q, pseudo)
    text = path.read_text()
    for section in ("# cam", "# threshold", "# id_mask", "# app_mask",
                    "# id_from_query_channel_0", "# id_from_negative_channel_2"):
        assert section in text
