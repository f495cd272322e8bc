"""Desk-scale metric-learning engine for long-term re-identification.

The package trains a small disentangled-embedding network with a combined
objective (classification, triplet, cluster-center discrepancy, activation-
map guided reconstruction) on synthetic appearance-change data, and
evaluates retrieval quality with CMC and mAP.  Everything runs on numpy
float64 through a hand-rolled reverse-mode autodiff core.
"""

__version__ = "0.1.0"
