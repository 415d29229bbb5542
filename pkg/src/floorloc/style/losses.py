"""Pseudo-label centroids and the room-style training losses."""
from __future__ import annotations

import math

import numpy as np

from ..errors import (BadLabel, EmptyCluster, LengthMismatch, NormalizationUnderflow,
                      ValidationError)
from .constraints import FeatureRecord

PROB_CLAMP = 1e-12


def compute_centroids(features, labels, k: int | None = None) -> np.ndarray:
    """Unit-normalised mean vector of every cluster, shape (K, d)."""
    X = np.array([f.vector if isinstance(f, FeatureRecord) else f for f in features],
                 dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.shape[0] != labels.shape[0]:
        raise LengthMismatch(f"{X.shape[0]} features but {labels.shape[0]} labels")
    if labels.size and labels.min() < 0:
        raise BadLabel("labels must be >= 0")
    k = int(labels.max()) + 1 if k is None else k
    out = np.empty((k, X.shape[1]))
    for c in range(k):
        members = X[labels == c]
        if len(members) == 0:
            raise EmptyCluster(f"cluster {c} has no members")
        mean = members.mean(axis=0)
        n = np.linalg.norm(mean)
        if n <= 1e-12 * max(1.0, np.abs(members).max()):
            raise NormalizationUnderflow(f"cluster {c} has a (near) zero mean vector")
        out[c] = mean / n
    return out


def contrastive_loss(feature, positive_label: int, centroids, tau: float
                     ) -> tuple[float, np.ndarray]:
    """Cluster-level InfoNCE: -log softmax(f . phi / tau)[positive].

    Returns the loss and its gradient with respect to ``feature``.
    """
    f = np.asarray(feature, dtype=np.float64)
    C = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    if not tau > 0:
        raise ValidationError("tau must be positive")
    k = C.shape[0]
    if not (isinstance(positive_label, (int, np.integer)) and 0 <= positive_label < k):
        raise BadLabel(f"label {positive_label!r} outside [0, {k})")
    z = C @ f / tau
    zmax = z.max()
    e = np.exp(z - zmax)
    lse = zmax + math.log(e.sum())
    loss = lse - z[positive_label]
    soft = e / e.sum()
    grad = (soft @ C - C[positive_label]) / tau
    return float(loss), grad


def style_pair_loss(probs, labels) -> tuple[float, np.ndarray]:
    """Summed binary cross-entropy of same-room predictions and its gradient."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise LengthMismatch(f"{p.size} probabilities but {y.size} labels")
    if np.any((y != 0) & (y != 1)):
        raise ValidationError("pair labels must be 0 or 1")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -np.sum(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    grad = -y / pc + (1.0 - y) / (1.0 - pc)
    return float(loss), grad


def pair_targets(labels, pairs) -> np.ndarray:
    """1 where both images of a pair carry the same pseudo-label."""
    labels = np.asarray(labels)
    return np.array([1.0 if labels[i] == labels[j] else 0.0 for i, j in pairs])


def total_loss(l_c: float, l_pred: float, gamma: float = 1.0) -> float:
    if gamma < 0:
        raise ValidationError("gamma must be >= 0")
    return l_c + gamma * l_pred
