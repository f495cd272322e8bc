"""Each loss in the objective evaluated on hand-sized inputs, with the
arithmetic spelled out next to the result."""
import numpy as np

from sirmetric.autodiff import Tensor
from sirmetric.losses import (LossWeights, TripletBatch, center_discrepancy_loss,
                              classification_loss, total_loss, triplet_loss)
from sirmetric.networks import DisentangledEmbedding


def emb(rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    return DisentangledEmbedding(Tensor(rows, requires_grad=True),
                                 Tensor(np.zeros((rows.shape[0], 2))))


# Triplet loss: hinge on squared Euclidean distances between id-relevant
# embeddings.  q=[1,0], p=[0,1], n=[1,1]: d(q,p)=2, d(q,n)=1, so the hinge
# holds 2 - 1 + 0.9 = 1.9.
batch = TripletBatch(emb([[1.0, 0.0]]), emb([[0.0, 1.0]]), emb([[1.0, 1.0]]),
                     np.array([0]), np.array([1]))
print("triplet hand example:", triplet_loss(batch, margin=0.9).item())

# Degenerate case: all three embeddings identical leaves just the margin.
same = [[0.3, 0.4]]
batch = TripletBatch(emb(same), emb(same), emb(same), np.array([0]), np.array([1]))
print("triplet degenerate  :", triplet_loss(batch, margin=0.9).item())

# Center discrepancy: softmax over exp(-squared distance) to every
# identity center, no triplet sampling involved.  A point equidistant from
# both centers has probability 1/2 on the right one: loss = ln 2.
value = center_discrepancy_loss(Tensor(np.array([[0.0, 0.0]]), requires_grad=True),
                                np.array([0]),
                                np.array([[1.0, 0.0], [-1.0, 0.0]]))
print("center equidistant  :", value.item(), "   ln 2 =", np.log(2.0))

# Moving the point toward its own center drives the loss down.
value = center_discrepancy_loss(Tensor(np.array([[0.8, 0.0]]), requires_grad=True),
                                np.array([0]),
                                np.array([[1.0, 0.0], [-1.0, 0.0]]))
print("center near own     :", value.item())

# Classification: mean cross-entropy.  Uniform logits over N classes cost
# exactly ln N regardless of the label.
logits = Tensor(np.full((2, 10), 0.3), requires_grad=True)
print("uniform-logit CE    :", classification_loss(logits, np.array([2, 7])).item(),
      "   ln 10 =", np.log(10.0))

# The total objective groups the terms:
#   id_weight    * (0.05 * cls + 1.0 * triplet + 0.5 * center)
# + recon_weight * (1e-4 * pos + 1e-4 * neg + 1.0 * cam)
# With every component equal to 1 the default weights give 2.5502.
one = lambda: Tensor(np.array(1.0), requires_grad=True)
print("total @ unit terms  :", total_loss(one(), one(), one(), one(), one(), one(),
                                          LossWeights()).item())

# All losses are graph nodes: backward flows into the embeddings.
batch = TripletBatch(emb([[1.0, 0.0]]), emb([[0.0, 1.0]]), emb([[1.0, 1.0]]),
                     np.array([0]), np.array([1]))
loss = triplet_loss(batch, margin=0.9)
loss.backward()
print("triplet grad wrt query embedding:", batch.query.id_feat.grad[0])
