"""Generate a synthetic long-term re-identification dataset and poke at
its structure: identity signatures, appearance bands, splits, and the
grayscale / flip augmentations used during training."""
import numpy as np

from sirmetric.data import (DatasetManifest, generate, horizontal_flip,
                            randomly_grayscale, sample_triplet, to_grayscale)

manifest = DatasetManifest()  # 10 identities x 20 samples, 12/4/4 split
dataset = generate(manifest)

print("images:", dataset.images.shape, dataset.images.dtype)
print("labels:", np.bincount(dataset.labels))
print("splits: train", len(dataset.train_idx), "query", len(dataset.query_idx),
      "gallery", len(dataset.gallery_idx))

# Every sample of an identity shares the same top-quarter signature rows;
# the remaining rows are per-sample appearance bands.  Two samples of one
# identity agree exactly on the signature and differ below it.
a, b = dataset.train_idx[0], dataset.train_idx[1]
rows = manifest.identity_rows
print("same identity:", dataset.labels[a] == dataset.labels[b])
print("signature rows equal:", np.array_equal(dataset.images[a][:, :rows],
                                              dataset.images[b][:, :rows]))
print("appearance rows equal:", np.array_equal(dataset.images[a][:, rows:],
                                               dataset.images[b][:, rows:]))

# Query and gallery use appearance vectors never seen in training, which
# is what makes the benchmark "long-term": clothing changes, identity
# does not.
q = dataset.query_idx[0]
same_id_train = dataset.train_idx[dataset.labels[dataset.train_idx]
                                  == dataset.labels[q]]
gaps = [np.abs(dataset.images[q][:, rows:] - dataset.images[t][:, rows:]).max()
        for t in same_id_train]
print("min appearance gap between a query and its training samples:",
      f"{min(gaps):.3f}")

# Triplets are drawn query/positive from one identity, negative from
# another, using only the train split.
rng = np.random.default_rng(7)
qi, pi, ni = sample_triplet(dataset, rng)
print("triplet labels:", dataset.labels[qi], dataset.labels[pi], dataset.labels[ni])

# Training-time augmentation: a coin per image converts it to its
# luminance (0.299 R + 0.587 G + 0.114 B for multi-channel input), and
# horizontal flips are used at evaluation time for feature averaging.
batch = dataset.images[dataset.train_idx[:8]]
grayed, applied = randomly_grayscale(batch, np.random.default_rng(0), probability=0.5)
print("grayscale applied to", int(applied.sum()), "of", len(batch), "images")
print("single-channel grayscale is identity:",
      np.array_equal(to_grayscale(batch[0]), batch[0]))
flipped = horizontal_flip(batch)
print("double flip restores input:", np.array_equal(horizontal_flip(flipped), batch))
