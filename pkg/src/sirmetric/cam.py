"""Activation-map masks, pseudo-ground-truth feature re-entanglement, and
the embedding-swap augmentations feeding the reconstruction losses.

Masks and pseudo-ground-truth maps are plain numpy: they act as detached
reconstruction targets, never as gradient paths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError
from .networks import DisentangledEmbedding, ReidModel


@dataclass
class CamArtifacts:
    """One sample's activation map with its threshold and indicator masks.

    ``id_mask`` marks cells at or above the map mean (ties count as
    id-relevant so the two masks always partition the grid); ``app_mask``
    is the complement.
    """

    cam: np.ndarray
    threshold: float
    id_mask: np.ndarray
    app_mask: np.ndarray

    def __post_init__(self):
        if not np.array_equal(self.id_mask + self.app_mask, np.ones_like(self.id_mask)):
            raise ValueError("id_mask and app_mask must partition the grid")


@dataclass
class PseudoGroundTruth:
    """Re-entangled target maps for one (query, negative) pair.

    ``id_from_query`` keeps the query's id-relevant cells and fills the
    jointly id-irrelevant cells from the negative; ``id_from_negative`` is
    the mirror image.  Cells covered by neither mask are zero.
    """

    id_from_query: np.ndarray
    id_from_negative: np.ndarray
    query_masks: CamArtifacts
    negative_masks: CamArtifacts


def cam_masks(cam: np.ndarray):
    """Threshold maps at their own mean: (..., H, W) -> (id_mask, app_mask),
    float arrays of 0/1.  Works on a single map or any batch of maps."""
    cam = np.asarray(cam, dtype=np.float64)
    threshold = cam.mean(axis=(-2, -1), keepdims=True)
    id_mask = (cam >= threshold).astype(np.float64)
    return id_mask, 1.0 - id_mask


def build_cam_artifacts(feature_values: np.ndarray, label: int,
                        model: ReidModel) -> CamArtifacts:
    """Feature map (C_b, H_b, W_b) + true label -> map, mean threshold, and
    the id/appearance indicator masks."""
    feature_values = np.asarray(feature_values, dtype=np.float64)
    if feature_values.shape != model.config.feature_shape:
        raise ShapeError(f"expected feature shape {model.config.feature_shape}, "
                         f"got {feature_values.shape}")
    cam = model.cam_maps(feature_values[None], np.array([label]))[0]
    id_mask, app_mask = cam_masks(cam)
    return CamArtifacts(cam, float(cam.mean()), id_mask, app_mask)


def build_pseudo_gt(f_query: np.ndarray, f_negative: np.ndarray,
                    art_query: CamArtifacts,
                    art_negative: CamArtifacts) -> PseudoGroundTruth:
    """Assemble both re-entangled target maps for a (query, negative) pair.

    id_from_query = id_mask_q * f_q + (app_mask_q * app_mask_n) * f_n, with
    masks broadcast over channels; id_from_negative swaps the roles.
    """
    f_query = np.asarray(f_query, dtype=np.float64)
    f_negative = np.asarray(f_negative, dtype=np.float64)
    if f_query.shape != f_negative.shape or f_query.ndim != 3:
        raise ShapeError(f"feature maps must share a (C, H, W) shape, got "
                         f"{f_query.shape} and {f_negative.shape}")
    if f_query.shape[1:] != art_query.id_mask.shape:
        raise ShapeError("mask spatial shape does not match the feature maps")
    joint_app = art_query.app_mask * art_negative.app_mask
    id_from_query = art_query.id_mask[None] * f_query + joint_app[None] * f_negative
    id_from_negative = art_negative.id_mask[None] * f_negative + joint_app[None] * f_query
    return PseudoGroundTruth(id_from_query, id_from_negative, art_query, art_negative)


def build_pseudo_gt_batch(f_query: np.ndarray, f_negative: np.ndarray,
                          cam_query: np.ndarray, cam_negative: np.ndarray):
    """Vectorized re-entanglement over a batch: feature arrays (B, C, H, W)
    and raw activation maps (B, H, W) in, the two target stacks out.
    Same arithmetic as build_pseudo_gt, batched."""
    id_q, app_q = cam_masks(cam_query)
    id_n, app_n = cam_masks(cam_negative)
    joint = (app_q * app_n)[:, None]
    id_from_query = id_q[:, None] * f_query + joint * f_negative
    id_from_negative = id_n[:, None] * f_negative + joint * f_query
    return id_from_query, id_from_negative


def augment_positive(emb_query: DisentangledEmbedding,
                     emb_positive: DisentangledEmbedding, model: ReidModel):
    """Three generator images from swapped embeddings, in the order
    (id_p + app_q, id_q + app_p, id_q + app_q).  One stacked forward."""
    batch = emb_query.id_feat.shape[0]
    ids = ad.concat([emb_positive.id_feat, emb_query.id_feat, emb_query.id_feat], axis=0)
    apps = ad.concat([emb_query.app_feat, emb_positive.app_feat, emb_query.app_feat], axis=0)
    _, images = model.generator_forward(ids, apps)
    rows = np.arange(batch)
    return images[rows], images[rows + batch], images[rows + 2 * batch]


def augment_negative(emb_query: DisentangledEmbedding,
                     emb_negative: DisentangledEmbedding, model: ReidModel,
                     swap_second_appearance: bool = False,
                     emb_positive: DisentangledEmbedding | None = None):
    """Two generator feature taps: (id_q + app_n, id_n + app_q).

    With ``swap_second_appearance`` the second tap takes the positive's
    appearance instead of the query's (the alternative printed reading of
    the objective); that requires ``emb_positive``.
    """
    if swap_second_appearance:
        if emb_positive is None:
            raise ValueError("swapped reading needs the positive embedding")
        second_app = emb_positive.app_feat
    else:
        second_app = emb_query.app_feat
    batch = emb_query.id_feat.shape[0]
    ids = ad.concat([emb_query.id_feat, emb_negative.id_feat], axis=0)
    apps = ad.concat([emb_negative.app_feat, second_app], axis=0)
    taps, _ = model.generator_forward(ids, apps)
    rows = np.arange(batch)
    return taps[rows], taps[rows + batch]


def write_cam_debug_csv(path, artifacts: CamArtifacts,
                        pseudo: PseudoGroundTruth | None = None) -> None:
    """Dump map/mask grids (and optionally the pseudo-ground-truth channels)
    as labeled CSV blocks for eyeballing."""

    def block(handle, name, grid):
        handle.write(f"# {name}\n")
        for row in np.atleast_2d(grid):
            handle.write(",".join(repr(float(v)) for v in row) + "\n")

    with open(path, "w") as handle:
        block(handle, "cam", artifacts.cam)
        handle.write(f"# threshold\n{artifacts.threshold!r}\n")
        block(handle, "id_mask", artifacts.id_mask)
        block(handle, "app_mask", artifacts.app_mask)
        if pseudo is not None:
            for c in range(pseudo.id_from_query.shape[0]):
                block(handle, f"id_from_query_channel_{c}", pseudo.id_from_query[c])
            for c in range(pseudo.id_from_negative.shape[0]):
                block(handle, f"id_from_negative_channel_{c}", pseudo.id_from_negative[c])
