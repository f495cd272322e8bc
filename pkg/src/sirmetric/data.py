"""Synthetic long-term re-identification data: each identity has a fixed
"face" band at the top of the image and draws a fresh appearance (clothes
and background stand-in) for every sample, so matching across samples only
works through the identity band.

Also hosts the random triplet sampler and the image transforms used in
training and evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blobio import read_archive, write_archive

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class DatasetManifest:
    """Counts, shapes, and seed that fully determine a synthetic dataset.

    Per identity the first ``train_per_identity`` samples form the train
    split, then ``query_per_identity``, then ``gallery_per_identity``; the
    splits are disjoint by construction and every query identity has
    gallery samples.
    """

    num_identities: int = 10
    samples_per_identity: int = 20
    train_per_identity: int = 12
    query_per_identity: int = 4
    gallery_per_identity: int = 4
    seed: int = 0
    image_shape: tuple = (1, 16, 8)
    appearance_bands: int = 6

    def __post_init__(self):
        if self.num_identities < 2:
            raise ValueError("need at least 2 identities")
        split = self.train_per_identity + self.query_per_identity + self.gallery_per_identity
        if split != self.samples_per_identity:
            raise ValueError(f"splits sum to {split}, expected {self.samples_per_identity}")
        if self.train_per_identity < 2:
            raise ValueError("triplet sampling needs >= 2 train samples per identity")
        if self.query_per_identity >= 1 and self.gallery_per_identity < 1:
            raise ValueError("every query identity must appear in the gallery")
        channels, height, width = self.image_shape
        if channels < 1 or height < 4 or width < 1:
            raise ValueError(f"image shape too small: {self.image_shape}")
        if (height - self.identity_rows) % self.appearance_bands:
            raise ValueError("appearance bands must tile the non-identity rows evenly")

    @property
    def identity_rows(self) -> int:
        # the "face" band: top quarter of the image
        return self.image_shape[1] // 4

    @property
    def band_rows(self) -> int:
        return (self.image_shape[1] - self.identity_rows) // self.appearance_bands


@dataclass
class SyntheticPerson:
    """One identity: a fixed signature for the face band plus one appearance
    vector per sample."""

    identity: int
    signature: np.ndarray       # (C, identity_rows, W)
    appearances: np.ndarray     # (samples, C, appearance_bands)


@dataclass
class Dataset:
    images: np.ndarray          # (N, C, H, W), values in [0, 1]
    labels: np.ndarray          # (N,) int
    train_idx: np.ndarray
    query_idx: np.ndarray
    gallery_idx: np.ndarray
    manifest: DatasetManifest
    _train_by_identity: dict = field(default_factory=dict, repr=False)
    _sampler_cache: dict = field(default_factory=dict, repr=False)

    def train_indices_by_identity(self) -> dict:
        if not self._train_by_identity:
            for idx in self.train_idx:
                self._train_by_identity.setdefault(int(self.labels[idx]), []).append(int(idx))
        return self._train_by_identity


def render_sample(manifest: DatasetManifest, signature: np.ndarray,
                  appearance: np.ndarray) -> np.ndarray:
    """Compose one image: signature pixels on top, constant horizontal
    bands from the appearance vector below."""
    channels, height, width = manifest.image_shape
    image = np.empty((channels, height, width))
    rows = manifest.identity_rows
    image[:, :rows, :] = signature
    for band in range(manifest.appearance_bands):
        start = rows + band * manifest.band_rows
        stop = start + manifest.band_rows
        image[:, start:stop, :] = appearance[:, band, None, None]
    return image


def synthesize_people(manifest: DatasetManifest) -> list:
    """Draw every identity's signature and per-sample appearance vectors."""
    rng = np.random.default_rng(np.random.SeedSequence((int(manifest.seed), 2)))
    channels, _, width = manifest.image_shape
    people = []
    for identity in range(manifest.num_identities):
        signature = rng.uniform(size=(channels, manifest.identity_rows, width))
        appearances = rng.uniform(
            size=(manifest.samples_per_identity, channels, manifest.appearance_bands))
        people.append(SyntheticPerson(identity, signature, appearances))
    return people


def generate(manifest: DatasetManifest) -> Dataset:
    """Render the full dataset with its per-identity train/query/gallery
    split, deterministically from the manifest."""
    people = synthesize_people(manifest)
    channels, height, width = manifest.image_shape
    total = manifest.num_identities * manifest.samples_per_identity
    images = np.empty((total, channels, height, width))
    labels = np.empty(total, dtype=np.int64)
    train, query, gallery = [], [], []
    cursor = 0
    for person in people:
        for j in range(manifest.samples_per_identity):
            images[cursor] = render_sample(manifest, person.signature,
                                           person.appearances[j])
            labels[cursor] = person.identity
            if j < manifest.train_per_identity:
                train.append(cursor)
            elif j < manifest.train_per_identity + manifest.query_per_identity:
                query.append(cursor)
            else:
                gallery.append(cursor)
            cursor += 1
    return Dataset(images, labels, np.array(train), np.array(query),
                   np.array(gallery), manifest)


def sample_triplet(dataset: Dataset, rng) -> tuple:
    """Uniform random (query, positive, negative) train indices.

    Query is uniform over train samples of identities with at least two
    train samples; positive is a different sample of the same identity;
    negative is any train sample of another identity.
    """
    cache = dataset._sampler_cache
    if not cache:
        by_id = dataset.train_indices_by_identity()
        cache["eligible"] = [idx for ident, idxs in sorted(by_id.items())
                             if len(idxs) >= 2 for idx in idxs]
        cache["others"] = {ident: [int(i) for i in dataset.train_idx
                                   if dataset.labels[i] != ident]
                           for ident in by_id}
    eligible = cache["eligible"]
    if not eligible:
        raise ValueError("no identity has >= 2 train samples")
    q_idx = eligible[int(rng.integers(len(eligible)))]
    identity = int(dataset.labels[q_idx])
    same = [i for i in dataset.train_indices_by_identity()[identity] if i != q_idx]
    p_idx = same[int(rng.integers(len(same)))]
    others = cache["others"][identity]
    if not others:
        raise ValueError("no negative candidates outside the query identity")
    n_idx = others[int(rng.integers(len(others)))]
    return q_idx, p_idx, n_idx


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """(3, H, W) -> (1, H, W) luminance; single-channel input passes
    through unchanged."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ValueError(f"expected (C, H, W), got {image.shape}")
    if image.shape[0] == 1:
        return image.copy()
    if image.shape[0] == 3:
        return np.einsum("c,chw->hw", LUMA_WEIGHTS, image)[None]
    raise ValueError(f"grayscale conversion needs 1 or 3 channels, got {image.shape[0]}")


def horizontal_flip(image: np.ndarray) -> np.ndarray:
    """Reverse the width axis; works on single images or batches."""
    return np.asarray(image)[..., ::-1].copy()


def randomly_grayscale(images: np.ndarray, rng, probability: float = 0.1):
    """Per-image coin flip: replace hit images with their grayscale version
    replicated across channels.  Returns (images, applied mask).  Always
    consumes exactly one uniform draw per image."""
    images = np.asarray(images, dtype=np.float64)
    coins = rng.random(images.shape[0])
    applied = coins < probability
    out = images.copy()
    for i in np.flatnonzero(applied):
        gray = to_grayscale(images[i])
        out[i] = np.broadcast_to(gray, images[i].shape)
    return out, applied


def save_dataset(dataset: Dataset, dir_path) -> None:
    m = dataset.manifest
    meta = {
        "kind": "dataset",
        "num_identities": m.num_identities,
        "samples_per_identity": m.samples_per_identity,
        "train_per_identity": m.train_per_identity,
        "query_per_identity": m.query_per_identity,
        "gallery_per_identity": m.gallery_per_identity,
        "seed": m.seed,
        "image_shape": ",".join(str(d) for d in m.image_shape),
        "appearance_bands": m.appearance_bands,
    }
    tensors = {
        "images": dataset.images,
        "labels": dataset.labels.astype(np.float64),
        "train_idx": dataset.train_idx.astype(np.float64),
        "query_idx": dataset.query_idx.astype(np.float64),
        "gallery_idx": dataset.gallery_idx.astype(np.float64),
    }
    write_archive(dir_path, meta, tensors)


def load_dataset(dir_path) -> Dataset:
    meta, tensors = read_archive(dir_path)
    if meta.get("kind") != "dataset":
        raise ValueError(f"archive at {dir_path} is not a dataset "
                         f"(kind={meta.get('kind')!r})")
    manifest = DatasetManifest(
        num_identities=int(meta["num_identities"]),
        samples_per_identity=int(meta["samples_per_identity"]),
        train_per_identity=int(meta["train_per_identity"]),
        query_per_identity=int(meta["query_per_identity"]),
        gallery_per_identity=int(meta["gallery_per_identity"]),
        seed=int(meta["seed"]),
        image_shape=tuple(int(d) for d in meta["image_shape"].split(",")),
        appearance_bands=int(meta["appearance_bands"]),
    )
    return Dataset(
        images=tensors["images"],
        labels=tensors["labels"].astype(np.int64),
        train_idx=tensors["train_idx"].astype(np.int64),
        query_idx=tensors["query_idx"].astype(np.int64),
        gallery_idx=tensors["gallery_idx"].astype(np.int64),
        manifest=manifest,
    )
