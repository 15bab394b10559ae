"""Rigidity weight structures for the classical priors and low-rank EDM rank checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .exceptions import DimensionError, DomainError, InputError
from .geometry import PointCloud, compute_edm, edm_difference

SOURCES = ("rigid", "isometric", "arap", "override")


def as_edges(edges) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64)
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return edges.reshape(-1, 2)


def edge_keys(edges: np.ndarray) -> np.ndarray:
    """Order-independent integer key per edge."""
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return (lo << 32) | hi


@dataclass(frozen=True)
class WeightAssignment:
    edges: np.ndarray
    weights: np.ndarray
    source: str

    def __post_init__(self):
        edges = as_edges(self.edges)
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(weights) != len(edges):
            raise DimensionError(f"{len(edges)} edges but {len(weights)} weights")
        if np.any(weights < 0) or np.any(weights > 1):
            raise DomainError("weights must lie in [0, 1]")
        if self.source not in SOURCES:
            raise DomainError(f"unknown weight source {self.source!r}")
        if len(np.unique(edge_keys(edges))) != len(edges):
            raise DomainError("duplicate unordered edge in weight assignment")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.edges)

    def with_weights(self, weights, source=None) -> "WeightAssignment":
        return WeightAssignment(self.edges, weights, source or self.source)


def rigid_weights(edges) -> WeightAssignment:
    """Every pairwise distance is preserved: all weights are one."""
    edges = as_edges(edges)
    return WeightAssignment(edges, np.ones(len(edges)), "rigid")


def isometric_weights(points2d, r: float, edges) -> WeightAssignment:
    """Binary weights: 1 when the endpoints are within ``r`` pixels in the image."""
    if not r > 0:
        raise DomainError(f"neighbourhood radius must be positive, got {r}")
    p = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    edges = as_edges(edges)
    if len(edges) and (edges.min() < 0 or edges.max() >= len(p)):
        raise IndexError("edge index out of range")
    diff = p[edges[:, 0]] - p[edges[:, 1]]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return WeightAssignment(edges, (dist <= r).astype(np.float64), "isometric")


def neighbour_edges(points2d, r: float) -> np.ndarray:
    """All unordered pairs within ``r`` pixels, sorted lexicographically."""
    from scipy.spatial import cKDTree

    p = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    pairs = cKDTree(p).query_pairs(r, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.sort(pairs.astype(np.int64), axis=1)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def apply_score_overrides(base: WeightAssignment, overrides) -> WeightAssignment:
    """Replace the weights of known edges by externally measured rigidity scores."""
    overrides = list(overrides)
    if not overrides:
        return base
    keys = edge_keys(base.edges)
    order = np.argsort(keys)
    weights = base.weights.copy()
    for edge, score in overrides:
        if not 0.0 <= score <= 1.0:
            raise DomainError(f"score {score} outside [0, 1]")
        key = edge_keys(as_edges(edge))[0]
        pos = np.searchsorted(keys, key, sorter=order)
        if pos >= len(keys) or keys[order[pos]] != key:
            raise KeyError(f"edge {tuple(edge)} not in base assignment")
        weights[order[pos]] = score
    return WeightAssignment(base.edges, weights, "override")


@dataclass(frozen=True)
class LowRankStructure:
    """Shapes ``X_k = M_k @ B`` spanned by ``b`` basis rows over ``n`` points."""

    basis: np.ndarray
    projections: tuple

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=np.float64))
        projs = tuple(np.asarray(m, dtype=np.float64).reshape(3, -1) for m in self.projections)
        if basis.shape[0] < 1:
            raise DimensionError("basis needs at least one row")
        for m in projs:
            if m.shape[1] != basis.shape[0]:
                raise DimensionError(f"projection of shape {m.shape} incompatible with basis {basis.shape}")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "projections", projs)

    @property
    def b(self) -> int:
        return self.basis.shape[0]

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def m(self) -> int:
        return len(self.projections)


@dataclass
class RankReport:
    per_pair_ranks: dict
    stacked_rank: int
    bounds: tuple
    tolerance: float
    degenerate: bool = False
    per_pair_ok: bool = field(init=False)
    stacked_ok: bool = field(init=False)

    def __post_init__(self):
        pair_bound, stacked_bound = self.bounds
        self.per_pair_ok = all(r <= pair_bound for r in self.per_pair_ranks.values())
        self.stacked_ok = self.stacked_rank <= stacked_bound

    @property
    def ok(self) -> bool:
        return self.per_pair_ok and self.stacked_ok

    def to_dict(self) -> dict:
        return {
            "per_pair_ranks": {f"{k},{l}": r for (k, l), r in self.per_pair_ranks.items()},
            "stacked_rank": self.stacked_rank,
            "bounds": {"per_pair": self.bounds[0], "stacked": self.bounds[1]},
            "tolerance": self.tolerance,
            "degenerate": self.degenerate,
            "per_pair_ok": self.per_pair_ok,
            "stacked_ok": self.stacked_ok,
        }


def build_low_rank_views(structure: LowRankStructure) -> list[PointCloud]:
    return [PointCloud((m @ structure.basis).T) for m in structure.projections]


def numerical_rank(a: np.ndarray, tol: float = 1e-8) -> int:
    """Count of singular values above ``tol * sigma_max`` (zero for a zero matrix)."""
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def low_rank_bounds(b: int) -> tuple[int, int]:
    return min(8, b + 2), (b + 1) * (b + 2) // 2


def rank_check(structure: LowRankStructure, tolerance: float = 1e-8) -> RankReport:
    """Numerical ranks of all EDM differences of a low-rank structure.

    ``D_kl = E(X_k) - E(X_l)`` for every view pair ``k < l``; the stacked matrix
    concatenates them vertically.
    """
    if structure.m < 2:
        raise InputError("rank check needs at least two views")
    edms = [compute_edm(c) for c in build_low_rank_views(structure)]
    degenerate = any(not np.any(e.entries) for e in edms)
    diffs = {}
    for k, l in combinations(range(structure.m), 2):
        diffs[(k, l)] = edm_difference(edms[k], edms[l])
    ranks = {kl: numerical_rank(d, tolerance) for kl, d in diffs.items()}
    stacked = numerical_rank(np.vstack(list(diffs.values())), tolerance)
    return RankReport(ranks, stacked, low_rank_bounds(structure.b), tolerance, degenerate)
