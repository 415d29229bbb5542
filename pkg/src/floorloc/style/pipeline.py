"""End-to-end pseudo-labelling: blank filter, distances, constraints, InfoMap."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import LengthMismatch, ValidationError
from .constraints import (EpisodeMeta, FeatureRecord, build_constraints, distance_matrix,
                          filter_blank, refine)
from .infomap import Flow, infomap_cluster, map_equation, similarity_graph
from .losses import compute_centroids, contrastive_loss


@dataclass(frozen=True)
class StyleParams:
    lam: float = 0.25
    tau: float = 0.07
    gamma: float = 1.0
    knn: int = 10
    teleport: float = 0.15
    seed: int = 0
    blank_threshold: int = 0
    trials: int = 8

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError("tau must be positive")
        if self.gamma < 0:
            raise ValidationError("gamma must be >= 0")
        if self.knn < 1:
            raise ValidationError("knn must be >= 1")
        if not 0 < self.teleport < 1:
            raise ValidationError("teleport must lie in (0, 1)")
        if self.blank_threshold < 0:
            raise ValidationError("blank_threshold must be >= 0")


@dataclass(frozen=True, eq=False)
class ClusterModel:
    ids: list[str]
    labels: np.ndarray
    centroids: np.ndarray
    tau: float
    lam: float
    gamma: float
    codelength: float = field(default=float("nan"))

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    def sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()


def cluster_images(metas: list[EpisodeMeta], features: list[FeatureRecord],
                   params: StyleParams) -> ClusterModel:
    """Pseudo-label the non-blank images that have both metadata and a feature."""
    by_id = {f.image_id: f for f in features}
    kept = filter_blank(metas, params.blank_threshold)
    missing = [i for i in kept if i not in by_id]
    if missing:
        raise LengthMismatch(f"{len(missing)} images lack feature vectors, e.g. {missing[0]!r}")
    meta_by_id = {m.image_id: m for m in metas}
    kept_meta = [meta_by_id[i] for i in kept]
    vecs = [by_id[i].vector for i in kept]
    if not kept:
        raise ValidationError("no image survives the blank filter")
    D = distance_matrix(vecs)
    M = build_constraints(kept_meta)
    R = refine(D, M, params.lam)
    labels = infomap_cluster(R, params.knn, params.teleport, params.seed, params.trials)
    L = map_equation(Flow(similarity_graph(R, params.knn), params.teleport), labels)
    cents = compute_centroids(vecs, labels)
    return ClusterModel(kept, labels, cents, params.tau, params.lam, params.gamma, L)


def mean_contrastive_loss(model: ClusterModel, features: list[FeatureRecord]) -> float:
    by_id = {f.image_id: f for f in features}
    losses = [contrastive_loss(by_id[i].vector, int(y), model.centroids, model.tau)[0]
              for i, y in zip(model.ids, model.labels)]
    return float(np.mean(losses)) if losses else 0.0
