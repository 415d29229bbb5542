"""Episode metadata, room-relation constraints and distance refinement."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DuplicateId, ShapeMismatch, ValidationError, ZeroVector

DIFFICULTIES = ("easy", "medium", "hard")
# navigation-episode path length bands, meters (upper bound of hard is 10 m)
DIFFICULTY_BANDS = {"easy": (1.5, 3.0), "medium": (3.0, 5.0), "hard": (5.0, 10.0)}


def difficulty_for_length(length_m: float) -> str:
    """Difficulty band of an episode from its trajectory length."""
    if length_m < 3.0:
        return "easy"
    if length_m < 5.0:
        return "medium"
    return "hard"


@dataclass(frozen=True)
class EpisodeMeta:
    image_id: str
    scene: str
    episode: str
    difficulty: str
    position_tag: str
    object_count: int = 0

    def __post_init__(self):
        if self.difficulty not in DIFFICULTIES:
            raise ValidationError(f"difficulty must be one of {DIFFICULTIES}, "
                                  f"got {self.difficulty!r}")
        if self.object_count < 0:
            raise ValidationError("object_count must be >= 0")


@dataclass(frozen=True, eq=False)
class FeatureRecord:
    image_id: str
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        n = np.linalg.norm(v)
        if not n > 0:
            raise ZeroVector(f"feature {self.image_id!r} is the zero vector")
        v = v / n
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


def build_constraints(metas: Sequence[EpisodeMeta]) -> np.ndarray:
    """N x N room-relation prior.

    Rules are applied in priority order: different scene -1; same capture
    position +1; same easy episode +0.5; same hard episode -0.5; else 0.
    The diagonal is 1.
    """
    ids = [m.image_id for m in metas]
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise DuplicateId(f"image id {dup!r} appears more than once")
    n = len(metas)
    M = np.zeros((n, n))
    for i in range(n):
        a = metas[i]
        for j in range(i + 1, n):
            b = metas[j]
            if a.scene != b.scene:
                v = -1.0
            elif a.position_tag == b.position_tag:
                v = 1.0
            elif a.episode == b.episode and a.difficulty == b.difficulty == "easy":
                v = 0.5
            elif a.episode == b.episode and a.difficulty == b.difficulty == "hard":
                v = -0.5
            else:
                v = 0.0
            M[i, j] = M[j, i] = v
    np.fill_diagonal(M, 1.0)
    return M


def distance_matrix(features) -> np.ndarray:
    """Cosine distance 1 - cos(v_i, v_j), clipped to [0, 2], zero diagonal."""
    X = np.array([f.vector if isinstance(f, FeatureRecord) else f for f in features],
                 dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch("feature vectors must share one dimension")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ZeroVector(f"zero feature vector at index {int(np.argmin(norms))}")
    U = X / norms[:, None]
    D = 1.0 - U @ U.T
    D = np.clip((D + D.T) / 2.0, 0.0, 2.0)
    np.fill_diagonal(D, 0.0)
    return D


def refine(D: np.ndarray, M: np.ndarray, lam: float) -> np.ndarray:
    """Refined distance D - lam * M."""
    D = np.asarray(D, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if D.shape != M.shape or D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ShapeMismatch(f"distance {D.shape} and constraint {M.shape} must be equal squares")
    return D - lam * M


def filter_blank(metas: Sequence[EpisodeMeta], threshold: int) -> list[str]:
    """Ids of images with at least ``threshold`` segmented objects, in input order."""
    if threshold < 0:
        raise ValidationError("threshold must be >= 0")
    return [m.image_id for m in metas if m.object_count >= threshold]
