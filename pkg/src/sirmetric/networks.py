"""Network graph: backbone, embedding separator, generator, activation-map
head, and identity classifier over one shared parameter set.

All forward passes are batch-first.  Everything is dense layers at desk
scale: the losses under test care about the interfaces (norm-bounded
disentangled embeddings, a backbone-shaped feature tap, a single-channel
image output, spatial activation maps), not about convolutional capacity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


@dataclass(frozen=True)
class NetworkConfig:
    """Shapes and widths of the network graph.

    Backbone spatial dims must divide the image dims so the feature grid is
    a coarsening of the image grid.
    """

    image_shape: tuple = (1, 16, 8)
    feature_shape: tuple = (8, 4, 2)
    id_dim: int = 16
    app_dim: int = 4
    num_identities: int = 10
    backbone_hidden: int = 64
    separator_hidden: int = 64
    generator_hidden: int = 64
    id_dropout: float = 0.1

    def __post_init__(self):
        if len(self.image_shape) != 3 or len(self.feature_shape) != 3:
            raise ValueError("image_shape and feature_shape must be (channels, height, width)")
        if any(int(v) < 1 for v in self.image_shape + self.feature_shape):
            raise ValueError("all shape entries must be >= 1")
        if self.id_dim < 1 or self.app_dim < 1:
            raise ValueError("id_dim and app_dim must be >= 1")
        if self.num_identities < 2:
            raise ValueError("num_identities must be >= 2")
        if self.image_shape[1] % self.feature_shape[1] or self.image_shape[2] % self.feature_shape[2]:
            raise ValueError("backbone spatial dims must divide image spatial dims")
        if not 0.0 <= self.id_dropout < 1.0:
            raise ValueError("id_dropout must be in [0, 1)")
        if min(self.backbone_hidden, self.separator_hidden, self.generator_hidden) < 1:
            raise ValueError("hidden widths must be >= 1")

    @property
    def image_size(self) -> int:
        c, h, w = self.image_shape
        return c * h * w

    @property
    def feature_size(self) -> int:
        c, h, w = self.feature_shape
        return c * h * w

    @property
    def embed_dim(self) -> int:
        return self.id_dim + self.app_dim


@dataclass
class DisentangledEmbedding:
    """Separator output: id-carrying and appearance-carrying halves, each a
    (batch, dim) tensor with row norms < 1."""

    id_feat: Tensor
    app_feat: Tensor


class ReidModel:
    """The shared parameter set and every forward pass over it.

    Query, positive, and negative branches all run through this one object,
    so a gradient step taken through any branch moves them all.
    """

    def __init__(self, config: NetworkConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0)))
        c = config
        plan = [
            ("backbone.w1", (c.image_size, c.backbone_hidden)),
            ("backbone.b1", (c.backbone_hidden,)),
            ("backbone.w2", (c.backbone_hidden, c.feature_size)),
            ("backbone.b2", (c.feature_size,)),
            ("separator.w1", (c.feature_size, c.separator_hidden)),
            ("separator.b1", (c.separator_hidden,)),
            ("separator.w_id", (c.separator_hidden, c.id_dim)),
            ("separator.b_id", (c.id_dim,)),
            ("separator.w_app", (c.separator_hidden, c.app_dim)),
            ("separator.b_app", (c.app_dim,)),
            ("generator.w1", (c.embed_dim, c.generator_hidden)),
            ("generator.b1", (c.generator_hidden,)),
            ("generator.w2", (c.generator_hidden, c.feature_size)),
            ("generator.b2", (c.feature_size,)),
            ("generator.w3", (c.feature_size, c.image_shape[1] * c.image_shape[2])),
            ("generator.b3", (c.image_shape[1] * c.image_shape[2],)),
            ("cam.w", (c.feature_shape[0], c.num_identities)),
            ("cam.b", (c.num_identities,)),
            ("classifier.w", (c.embed_dim, c.num_identities)),
            ("classifier.b", (c.num_identities,)),
        ]
        self.params: dict[str, Tensor] = {}
        for name, shape in plan:
            if len(shape) == 1:  # biases start at zero
                data = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                data = rng.uniform(-bound, bound, size=shape)
            self.params[name] = Tensor(data, requires_grad=True)

    def _dense(self, x: Tensor, prefix: str, index: str) -> Tensor:
        return x @ self.params[f"{prefix}.w{index}"] + self.params[f"{prefix}.b{index}"]

    def backbone_forward(self, x) -> Tensor:
        """Image batch (B, C, H, W) -> nonnegative feature maps (B, C_b, H_b, W_b)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 4 or x.data.shape[1:] != self.config.image_shape:
            raise ShapeError(
                f"backbone expects (B, {self.config.image_shape}), got {x.data.shape}")
        batch = x.data.shape[0]
        h = self._dense(x.reshape((batch, self.config.image_size)), "backbone", "1").relu()
        f = self._dense(h, "backbone", "2").relu()
        return f.reshape((batch,) + self.config.feature_shape)

    def separator_forward(self, features: Tensor, train_mode: bool = False,
                          rng=None) -> DisentangledEmbedding:
        """Feature maps -> norm-bounded (id, appearance) embedding pair.

        In train mode, id components are dropped at the configured rate with
        no rescaling, so the norm bound survives.
        """
        if features.data.ndim != 4 or features.data.shape[1:] != self.config.feature_shape:
            raise ShapeError(
                f"separator expects (B, {self.config.feature_shape}), got {features.data.shape}")
        batch = features.data.shape[0]
        flat = features.reshape((batch, self.config.feature_size))
        shared = self._dense(flat, "separator", "1").relu()
        id_feat = self._dense(shared, "separator", "_id").squash()
        app_feat = self._dense(shared, "separator", "_app").squash()
        if train_mode and self.config.id_dropout > 0.0:
            if rng is None:
                raise ValueError("train-mode separator needs an rng for the dropout mask")
            keep = (rng.random(id_feat.shape) >= self.config.id_dropout).astype(np.float64)
            id_feat = ad.mask_mul(id_feat, keep)
        return DisentangledEmbedding(id_feat, app_feat)

    def generator_forward(self, id_feat: Tensor, app_feat: Tensor):
        """Embedding pair -> (feature tap (B, C_b, H_b, W_b), image (B, 1, H, W)).

        The tap is the second hidden layer reshaped to the backbone grid;
        the image head maps it through a sigmoid into [0, 1].
        """
        if id_feat.data.ndim != 2 or id_feat.data.shape[1] != self.config.id_dim:
            raise ShapeError(f"generator id input needs (B, {self.config.id_dim}), "
                             f"got {id_feat.data.shape}")
        if app_feat.data.ndim != 2 or app_feat.data.shape[1] != self.config.app_dim:
            raise ShapeError(f"generator appearance input needs (B, {self.config.app_dim}), "
                             f"got {app_feat.data.shape}")
        batch = id_feat.data.shape[0]
        joined = ad.concat([id_feat, app_feat], axis=1)
        h = self._dense(joined, "generator", "1").relu()
        tap_flat = self._dense(h, "generator", "2").relu()
        tap = tap_flat.reshape((batch,) + self.config.feature_shape)
        image = self._dense(tap_flat, "generator", "3").sigmoid()
        _, height, width = self.config.image_shape
        return tap, image.reshape((batch, 1, height, width))

    def cam_logits(self, features: Tensor) -> Tensor:
        """Feature maps -> class logits via global average pooling + dense."""
        pooled = features.mean(axis=(2, 3))
        return pooled @ self.params["cam.w"] + self.params["cam.b"]

    def cam_maps(self, feature_values: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Per-sample spatial activation maps for the given labels.

        Pure numpy: the maps feed mask construction, never gradients.
        map[b] = sum_c W[c, labels[b]] * features[b, c].
        """
        labels = np.asarray(labels)
        if np.any(labels < 0) or np.any(labels >= self.config.num_identities):
            raise ValueError(f"labels must lie in [0, {self.config.num_identities})")
        weights = self.params["cam.w"].data[:, labels]  # (C_b, B)
        return np.einsum("bchw,cb->bhw", feature_values, weights)

    def classifier_forward(self, emb: DisentangledEmbedding) -> Tensor:
        """Concatenated embedding -> identity logits."""
        joined = ad.concat([emb.id_feat, emb.app_feat], axis=1)
        return joined @ self.params["classifier.w"] + self.params["classifier.b"]
