"""Retrieval evaluation: embedding fusion, distance ranking, CMC, and mAP.

Fused vector = [id embedding | appearance embedding | alpha * pooled
backbone features], optionally averaged with the horizontally flipped
image's vector.  Ranking is ascending Euclidean distance with ties broken
by gallery index.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Dataset, horizontal_flip
from .networks import ReidModel


@dataclass
class FusedEmbedding:
    """One sample's retrieval vector plus the alpha it was built with."""

    vector: np.ndarray
    alpha: float


@dataclass
class RetrievalResult:
    ranked_labels: np.ndarray   # (num_queries, num_gallery)
    cmc: np.ndarray             # (num_gallery,), cumulative match rate at k=1..N_g
    mean_ap: float
    num_queries_without_match: int

    @property
    def num_queries(self) -> int:
        return int(self.ranked_labels.shape[0])

    @property
    def num_gallery(self) -> int:
        return int(self.ranked_labels.shape[1])

    def rank_k(self, k: int) -> float:
        """CMC at rank k, clamped to the gallery size."""
        if k < 1:
            raise ValueError("rank index starts at 1")
        return float(self.cmc[min(k, self.num_gallery) - 1])


def fuse_embeddings(images: np.ndarray, model: ReidModel, alpha: float = 0.55,
                    use_flip: bool = True, batch_size: int = 64) -> np.ndarray:
    """Batch of images -> (N, d_I + d_A + C_b) fused vectors, eval mode."""
    images = np.asarray(images, dtype=np.float64)
    out = np.empty((images.shape[0],
                    model.config.embed_dim + model.config.feature_shape[0]))
    with ad.no_grad():
        for start in range(0, images.shape[0], batch_size):
            chunk = images[start:start + batch_size]
            fused = _fuse_chunk(chunk, model, alpha)
            if use_flip:
                fused = 0.5 * (fused + _fuse_chunk(horizontal_flip(chunk), model, alpha))
            out[start:start + batch_size] = fused
    return out


def _fuse_chunk(chunk: np.ndarray, model: ReidModel, alpha: float) -> np.ndarray:
    features = model.backbone_forward(chunk)
    emb = model.separator_forward(features)
    pooled = features.data.mean(axis=(2, 3))
    return np.concatenate([emb.id_feat.data, emb.app_feat.data, alpha * pooled], axis=1)


def embed_for_eval(image: np.ndarray, model: ReidModel, alpha: float = 0.55,
                   use_flip: bool = True) -> FusedEmbedding:
    """Single-image wrapper around fuse_embeddings."""
    vec = fuse_embeddings(np.asarray(image)[None], model, alpha, use_flip)[0]
    return FusedEmbedding(vec, alpha)


def rank_gallery(query_vector: np.ndarray, gallery_vectors: np.ndarray):
    """Ascending-Euclidean gallery order for one query: (indices, distances
    in that order).  Equal distances keep gallery-index order."""
    gallery_vectors = np.asarray(gallery_vectors, dtype=np.float64)
    if gallery_vectors.ndim != 2 or gallery_vectors.shape[0] == 0:
        raise ValueError("gallery must be a non-empty (N, dim) matrix")
    distances = np.linalg.norm(gallery_vectors - np.asarray(query_vector)[None, :], axis=1)
    order = np.argsort(distances, kind="stable")
    return order, distances[order]


def rank_all(query_vectors: np.ndarray, gallery_vectors: np.ndarray):
    """All queries at once: (Q, N_g) index matrix and matching distances."""
    diffs = query_vectors[:, None, :] - gallery_vectors[None, :, :]
    distances = np.linalg.norm(diffs, axis=2)
    order = np.argsort(distances, axis=1, kind="stable")
    return order, np.take_along_axis(distances, order, axis=1)


def cmc_and_map(rank_indices: np.ndarray, query_labels: np.ndarray,
                gallery_labels: np.ndarray) -> RetrievalResult:
    """Cumulative match curve over k = 1..N_g and mean average precision.

    CMC counts every query; queries with no relevant gallery item can never
    hit.  Such queries are excluded from mAP and reported in
    ``num_queries_without_match``.
    """
    rank_indices = np.asarray(rank_indices)
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)
    if gallery_labels.size == 0:
        raise ValueError("empty gallery")
    ranked_labels = gallery_labels[rank_indices]
    matches = ranked_labels == query_labels[:, None]
    hit_by_k = np.cumsum(matches, axis=1) > 0
    cmc = hit_by_k.mean(axis=0)
    aps = []
    skipped = 0
    for row in matches:
        total_relevant = int(row.sum())
        if total_relevant == 0:
            skipped += 1
            continue
        positions = np.flatnonzero(row) + 1  # 1-based ranks of the hits
        precisions = np.cumsum(row)[positions - 1] / positions
        aps.append(precisions.sum() / total_relevant)
    mean_ap = float(np.mean(aps)) if aps else 0.0
    return RetrievalResult(ranked_labels, cmc, mean_ap, skipped)


def evaluate_retrieval(dataset: Dataset, model: ReidModel, alpha: float = 0.55,
                       use_flip: bool = True):
    """Embed the query and gallery splits, rank, and score.  Returns
    (RetrievalResult, rank index matrix, ranked distance matrix)."""
    query_vecs = fuse_embeddings(dataset.images[dataset.query_idx], model,
                                 alpha, use_flip)
    gallery_vecs = fuse_embeddings(dataset.images[dataset.gallery_idx], model,
                                   alpha, use_flip)
    order, distances = rank_all(query_vecs, gallery_vecs)
    result = cmc_and_map(order, dataset.labels[dataset.query_idx],
                         dataset.labels[dataset.gallery_idx])
    return result, order, distances


def metrics_json(result: RetrievalResult, alpha: float) -> str:
    """The metrics document consumed by scripts and the eval command."""
    return json.dumps({
        "rank1": result.rank_k(1),
        "rank5": result.rank_k(5),
        "rank10": result.rank_k(10),
        "map": result.mean_ap,
        "num_queries": result.num_queries,
        "num_gallery": result.num_gallery,
        "alpha": alpha,
    }, indent=2)


def write_rankings_csv(path, rank_indices: np.ndarray, distances: np.ndarray,
                       query_ids, gallery_ids) -> None:
    """Per-query ranking dump: one row per (query, rank) pair."""
    query_ids = np.asarray(query_ids)
    gallery_ids = np.asarray(gallery_ids)
    with open(path, "w") as handle:
        handle.write("query_id,rank,gallery_id,distance\n")
        for qi, (order, dist) in enumerate(zip(rank_indices, distances)):
            for rank, (gi, d) in enumerate(zip(order, dist), start=1):
                handle.write(f"{query_ids[qi]},{rank},{gallery_ids[gi]},{float(d)!r}\n")


def write_embeddings_csv(path, sample_ids, labels, id_feats: np.ndarray,
                         app_feats: np.ndarray) -> None:
    """Embedding table for external plotting: sample_id, label, then the id
    and appearance components."""
    id_feats = np.asarray(id_feats)
    app_feats = np.asarray(app_feats)
    header = (["sample_id", "label"]
              + [f"id_{i}" for i in range(id_feats.shape[1])]
              + [f"app_{i}" for i in range(app_feats.shape[1])])
    with open(path, "w") as handle:
        handle.write(",".join(header) + "\n")
        for sid, label, id_row, app_row in zip(sample_ids, labels, id_feats, app_feats):
            cells = [str(sid), str(int(label))]
            cells += [repr(float(v)) for v in id_row]
            cells += [repr(float(v)) for v in app_row]
            handle.write(",".join(cells) + "\n")
