"""Class-activation maps, mean-threshold masks, and the re-entangled
pseudo-ground-truth targets that supervise the hard-negative
reconstruction."""
import numpy as np

from sirmetric import autodiff as ad
from sirmetric.cam import (build_cam_artifacts, build_pseudo_gt, cam_masks,
                           write_cam_debug_csv)
from sirmetric.networks import NetworkConfig, ReidModel

# Masks come straight from thresholding a map at its own mean; ties count
# as id-relevant, so the two masks always partition the grid.
cam = np.array([[1.0, 3.0], [5.0, 7.0]])
id_mask, app_mask = cam_masks(cam)
print("cam:\n", cam)
print("mean threshold:", cam.mean())
print("id_mask:\n", id_mask)
print("app_mask:\n", app_mask)
print("partition holds:", np.array_equal(id_mask + app_mask, np.ones((2, 2))))

# On a model, the map projects the true label's classifier column onto
# the backbone feature map: map[h,w] = sum_c W[c, y] * f[c, h, w].
model = ReidModel(NetworkConfig(), seed=0)
rng = np.random.default_rng(3)
features = rng.uniform(size=model.config.feature_shape)
art = build_cam_artifacts(features, label=4, model=model)
print("\nmodel CAM shape:", art.cam.shape, " threshold:", round(art.threshold, 4))
print("id cells:", int(art.id_mask.sum()), "of", art.id_mask.size)

# Pseudo-ground-truth for a (query, negative) pair: keep the query's
# id-relevant cells, fill cells both maps call id-irrelevant from the
# negative, zero out the rest.  The mirror-image map swaps the roles.
f_q = rng.uniform(size=model.config.feature_shape)
f_n = rng.uniform(size=model.config.feature_shape)
art_q = build_cam_artifacts(f_q, label=1, model=model)
art_n = build_cam_artifacts(f_n, label=6, model=model)
pseudo = build_pseudo_gt(f_q, f_n, art_q, art_n)

cell_sources = np.zeros(art_q.id_mask.shape, dtype=object)
for h in range(cell_sources.shape[0]):
    for w in range(cell_sources.shape[1]):
        if art_q.id_mask[h, w]:
            cell_sources[h, w] = "query"
        elif art_n.app_mask[h, w]:
            cell_sources[h, w] = "negative"
        else:
            cell_sources[h, w] = "zero"
print("\nid_from_query cell sources:")
for row in cell_sources:
    print("  ", " ".join(f"{s:8s}" for s in row))

# The targets are detached numpy arrays: reconstruction gradients flow
# into the generator, never back through the mask logic.
print("targets are numpy:", type(pseudo.id_from_query).__name__)

# Everything above can be dumped as labeled CSV blocks for inspection.
write_cam_debug_csv("/tmp/cam_debug.csv", art_q, pseudo)
print("\nwrote /tmp/cam_debug.csv; first lines:")
with open("/tmp/cam_debug.csv") as handle:
    for line in list(handle)[:6]:
        print("  " + line.rstrip())
