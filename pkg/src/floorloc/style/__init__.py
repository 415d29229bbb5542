"""Room-style pseudo-labelling: constraints, InfoMap clustering and losses."""
from .constraints import (EpisodeMeta, FeatureRecord, build_constraints, difficulty_for_length,
                          distance_matrix, filter_blank, refine)
from .infomap import Flow, infomap, infomap_cluster, map_equation, similarity_graph
from .losses import (compute_centroids, contrastive_loss, pair_targets, style_pair_loss,
                     total_loss)
from .pipeline import ClusterModel, StyleParams, cluster_images, mean_contrastive_loss

__all__ = [
    "EpisodeMeta", "FeatureRecord", "build_constraints", "difficulty_for_length",
    "distance_matrix", "filter_blank", "refine", "Flow", "infomap", "infomap_cluster",
    "map_equation", "similarity_graph", "compute_centroids", "contrastive_loss",
    "pair_targets", "style_pair_loss", "total_loss", "ClusterModel", "StyleParams",
    "cluster_images", "mean_contrastive_loss",
]
