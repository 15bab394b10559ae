"""Motion embeddings, embedding-based rigidity weights and motion segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigurationError, DimensionError, DomainError
from .geometry import sigmoid
from .priors import WeightAssignment, as_edges


@dataclass(frozen=True)
class EmbeddingField:
    """Per-point embedding of the motion between views ``view_pair``.

    Components live in [0, 1]; they are the logistic image of ``raw``.
    """

    raw: np.ndarray
    view_pair: tuple = (0, 1)

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        if raw.ndim != 2:
            raise DimensionError(f"embedding raw values must be (n, v), got {raw.shape}")
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "view_pair", tuple(int(i) for i in self.view_pair))

    @classmethod
    def from_vectors(cls, vectors, view_pair=(0, 1)) -> "EmbeddingField":
        vectors = np.asarray(vectors, dtype=np.float64)
        if np.any(vectors <= 0) or np.any(vectors >= 1):
            raise DomainError("embedding components must lie strictly inside (0, 1)")
        return cls(np.log(vectors) - np.log1p(-vectors), view_pair)

    @property
    def vectors(self) -> np.ndarray:
        return sigmoid(self.raw)

    @property
    def v(self) -> int:
        return self.raw.shape[1]

    def __len__(self):
        return self.raw.shape[0]


@dataclass(frozen=True)
class SegmentationMask:
    labels: np.ndarray  # True = dynamic
    threshold: float
    static_embedding: np.ndarray

    def __len__(self):
        return len(self.labels)


def similarity_weight(m_i, m_j) -> float:
    """``1 - tanh(||m_i - m_j||)``."""
    m_i = np.asarray(m_i, dtype=np.float64)
    m_j = np.asarray(m_j, dtype=np.float64)
    if m_i.shape != m_j.shape:
        raise DimensionError(f"embedding shapes differ: {m_i.shape} vs {m_j.shape}")
    return float(1.0 - np.tanh(np.linalg.norm(m_i - m_j)))


def _embedding_distances(vectors: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if len(edges) and (edges.min() < 0 or edges.max() >= len(vectors)):
        raise IndexError("edge index out of range")
    diff = vectors[edges[:, 0]] - vectors[edges[:, 1]]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def weights_for_edges(field: EmbeddingField, edges) -> WeightAssignment:
    """Similarity weight of the endpoint embeddings, for the sampled edges only."""
    edges = as_edges(edges)
    dist = _embedding_distances(field.vectors, edges)
    return WeightAssignment(edges, 1.0 - np.tanh(dist), "arap")


def tau_offset(weights, tau: float) -> np.ndarray:
    if not 0.0 <= tau < 1.0:
        raise ConfigurationError(f"tau must lie in [0, 1), got {tau}")
    return np.clip((np.asarray(weights, dtype=np.float64) + tau) / (1.0 + tau), 0.0, 1.0)


def apply_tau_offset(weights: WeightAssignment, tau: float) -> WeightAssignment:
    """Rescale to ``(w + tau) / (1 + tau)`` and clamp, giving a floor of ``tau / (1 + tau)``."""
    return weights.with_weights(tau_offset(weights.weights, tau))


def border_mask(pixels, image_size, border_width: float) -> np.ndarray:
    """Points within ``border_width`` pixels of any image edge."""
    p = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    width, height = image_size
    return (
        (p[:, 0] < border_width) | (p[:, 0] > width - 1 - border_width)
        | (p[:, 1] < border_width) | (p[:, 1] > height - 1 - border_width)
    )


def static_embedding(fields, border_width: float, layout) -> np.ndarray:
    """Channel-wise median of the border embeddings.

    ``fields`` is one :class:`EmbeddingField` or a sequence of them (pooled over
    the whole sequence); ``layout`` is a ``(pixels, image_size)`` pair, or a list of
    such pairs matching ``fields``.
    """
    if isinstance(fields, EmbeddingField):
        fields, layout = [fields], [layout]
    elif len(layout) == 2 and not isinstance(layout[0], tuple):
        layout = [layout] * len(fields)
    pooled = []
    for f, (pixels, image_size) in zip(fields, layout):
        mask = border_mask(pixels, image_size, border_width)
        if len(mask) != len(f):
            raise DimensionError(f"layout has {len(mask)} points, field has {len(f)}")
        pooled.append(f.vectors[mask])
    pooled = np.concatenate(pooled) if pooled else np.zeros((0, 1))
    if len(pooled) == 0:
        raise ConfigurationError(f"no points within {border_width} px of the image border")
    return np.median(pooled, axis=0)


def segment_motion(field: EmbeddingField, static_vec, threshold: float = 0.1) -> SegmentationMask:
    """Label a point dynamic when its embedding is farther than ``threshold`` from ``static_vec``."""
    if not threshold > 0:
        raise ConfigurationError(f"threshold must be positive, got {threshold}")
    static_vec = np.asarray(static_vec, dtype=np.float64)
    dist = np.linalg.norm(field.vectors - static_vec, axis=1)
    return SegmentationMask(dist > threshold, threshold, static_vec)


class MotionSegmenter(BaseEstimator):
    """Static/dynamic split from motion embeddings.

    ``fit`` estimates the static background embedding from image-border points;
    ``predict`` thresholds each point's distance to it.

    Parameters
    ----------
    threshold : float
        Distance above which a point counts as dynamic.
    border_width : float
        Width in pixels of the border band assumed to be static.
    """

    def __init__(self, threshold=0.1, border_width=10.0):
        self.threshold = threshold
        self.border_width = border_width

    def fit(self, fields, layout):
        self.static_embedding_ = static_embedding(fields, self.border_width, layout)
        return self

    def predict(self, field: EmbeddingField) -> np.ndarray:
        return self.segment(field).labels

    def segment(self, field: EmbeddingField) -> SegmentationMask:
        check_is_fitted(self, "static_embedding_")
        return segment_motion(field, self.static_embedding_, self.threshold)
