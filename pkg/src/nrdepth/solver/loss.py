"""Weighted EDM-difference objective between two views and its exact gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..embedding import EmbeddingField
from ..exceptions import (
    ConfigurationError,
    DegenerateGeometryError,
    DegenerateWeightsError,
    DimensionError,
    InputError,
)
from ..geometry import DepthField, ViewObservation, decode_depth_grad, sigmoid
from ..priors import WeightAssignment, as_edges


@dataclass(frozen=True)
class CorrespondenceMap:
    """Index of each view-k point in view l, ``-1`` where no correspondence exists."""

    target: np.ndarray
    n_target: int

    def __post_init__(self):
        target = np.asarray(self.target, dtype=np.int64).ravel()
        if np.any(target < -1) or np.any(target >= self.n_target):
            raise DimensionError("correspondence target out of range")
        object.__setattr__(self, "target", target)

    @property
    def valid(self) -> np.ndarray:
        return self.target >= 0

    def __len__(self):
        return len(self.target)

    @classmethod
    def from_point_ids(cls, view_k: ViewObservation, view_l: ViewObservation) -> "CorrespondenceMap":
        """Match tracked points by identity."""
        order = np.argsort(view_l.point_ids)
        sorted_ids = view_l.point_ids[order]
        pos = np.clip(np.searchsorted(sorted_ids, view_k.point_ids), 0, max(len(sorted_ids) - 1, 0))
        hit = sorted_ids[pos] == view_k.point_ids if len(sorted_ids) else np.zeros(view_k.n_points, bool)
        target = np.where(hit, order[pos], -1)
        return cls(target, view_l.n_points)

    @classmethod
    def from_flow(cls, view_k: ViewObservation, view_l: ViewObservation, flow) -> "CorrespondenceMap":
        """Dense correspondences from a ``(H, W, 2)`` flow field of view k.

        The flow end point is rounded to the nearest pixel and matched to the view-l
        point at that pixel; end points outside the image or on untracked pixels are
        marked invalid.
        """
        flow = np.asarray(flow, dtype=np.float64)
        intr_l = view_l.intrinsics
        px = view_k.pixels
        cols = np.rint(px[:, 0]).astype(np.int64)
        rows = np.rint(px[:, 1]).astype(np.int64)
        if flow.ndim != 3 or flow.shape[2] != 2:
            raise DimensionError(f"flow must be (H, W, 2), got {flow.shape}")
        inside_k = (rows >= 0) & (rows < flow.shape[0]) & (cols >= 0) & (cols < flow.shape[1])
        end = np.full((len(px), 2), np.nan)
        end[inside_k] = px[inside_k] + flow[rows[inside_k], cols[inside_k]]
        lookup = np.full((intr_l.height, intr_l.width), -1, dtype=np.int64)
        pl = np.rint(view_l.pixels).astype(np.int64)
        ok = (pl[:, 0] >= 0) & (pl[:, 0] < intr_l.width) & (pl[:, 1] >= 0) & (pl[:, 1] < intr_l.height)
        lookup[pl[ok, 1], pl[ok, 0]] = np.nonzero(ok)[0]
        target = np.full(len(px), -1, dtype=np.int64)
        finite = np.all(np.isfinite(end), axis=1)
        ec = np.rint(np.where(finite[:, None], end, -1)).astype(np.int64)
        good = finite & (ec[:, 0] >= 0) & (ec[:, 0] < intr_l.width) & (ec[:, 1] >= 0) & (ec[:, 1] < intr_l.height)
        target[good] = lookup[ec[good, 1], ec[good, 0]]
        return cls(target, view_l.n_points)


@dataclass(frozen=True)
class EdgeSample:
    edges: np.ndarray  # indices in view k
    edges_l: np.ndarray  # the same edges resolved in view l
    sample_size: int
    rng_seed: object

    def __len__(self):
        return len(self.edges)


def _unrank_pairs(t: np.ndarray, p: int) -> np.ndarray:
    """Map linear indices to pairs ``(i, j), i < j`` in row-major upper-triangular order."""
    t = np.asarray(t, dtype=np.int64)
    # count from the end: the last q+1 rows hold (q+1)(q+2)/2 pairs
    rev = p * (p - 1) // 2 - 1 - t
    q = np.floor((np.sqrt(8.0 * rev + 1.0) - 1.0) / 2.0).astype(np.int64)
    q += ((q + 1) * (q + 2) // 2 <= rev).astype(np.int64)
    q -= (q * (q + 1) // 2 > rev).astype(np.int64)
    i = p - 2 - q
    j = p - 1 - (rev - q * (q + 1) // 2)
    return np.column_stack([i, j])


def all_pairs(p: int) -> np.ndarray:
    i, j = np.triu_indices(p, 1)
    return np.column_stack([i, j]).astype(np.int64)


def sample_edges(view_k: ViewObservation, corr: CorrespondenceMap, size: int = 100_000,
                 seed=0, candidates=None) -> EdgeSample:
    """Uniform sample of distinct unordered pairs among points with a correspondence.

    ``candidates`` optionally restricts the population to a given edge list (e.g.
    image-space neighbours); otherwise all pairs of valid points are eligible.
    When fewer eligible pairs exist than ``size`` all of them are returned.
    """
    if len(corr) != view_k.n_points:
        raise DimensionError(f"correspondence map covers {len(corr)} points, view has {view_k.n_points}")
    valid_idx = np.nonzero(corr.valid)[0]
    if len(valid_idx) < 2:
        raise InputError("fewer than two points with valid correspondences")
    rng = np.random.default_rng(seed)
    if candidates is None:
        p = len(valid_idx)
        total = p * (p - 1) // 2
        if size >= total:
            local = all_pairs(p)
        else:
            local = _unrank_pairs(rng.choice(total, size=size, replace=False), p)
        edges = valid_idx[local]
    else:
        cand = as_edges(candidates)
        cand = cand[corr.valid[cand[:, 0]] & corr.valid[cand[:, 1]] & (cand[:, 0] != cand[:, 1])]
        if len(cand) == 0:
            raise InputError("no candidate edge has valid correspondences")
        if size < len(cand):
            cand = cand[rng.choice(len(cand), size=size, replace=False)]
        edges = cand
    return EdgeSample(edges, corr.target[edges], size, seed)


def normalize_distances(e) -> np.ndarray:
    """Scale squared distances to sum to one."""
    e = np.asarray(e, dtype=np.float64)
    total = e.sum()
    if not total > 0:
        raise DegenerateGeometryError("all sampled squared distances are zero")
    return e / total


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    data_term: float
    weight_reg_term: float
    numerator: float
    denominator: float
    weight_sum: float
    alpha: float
    residuals: np.ndarray | None = None


@dataclass(frozen=True)
class ObjectiveSettings:
    beta_reg: float = 0.01
    reg_sign: int = -1
    alpha_mode: str = "normalized"

    def __post_init__(self):
        if self.reg_sign not in (1, -1):
            raise ConfigurationError(f"reg_sign must be +1 or -1, got {self.reg_sign}")
        if self.alpha_mode not in ("normalized", "raw"):
            raise ConfigurationError(f"alpha_mode must be 'normalized' or 'raw', got {self.alpha_mode!r}")
        if self.beta_reg < 0:
            raise ConfigurationError("beta_reg must be nonnegative")


def objective(raw_k, raw_l, bounds, rays_k, rays_l, edges_k, edges_l, settings: ObjectiveSettings,
              weights=None, embed_raw=None, tau=None, need_grad=True, keep_residuals=False):
    """Array-level objective shared by the public API and the solver loop.

    Exactly one of ``weights`` (fixed per-edge weights) or ``embed_raw`` (per-point
    raw embeddings of view k, weights via ``1 - tanh`` and optional tau offset) is
    given.  Returns ``(LossBreakdown, grad_raw_k, grad_raw_l, grad_embed)``.
    """
    d_min, d_max = bounds
    n_edges = len(edges_k)
    if n_edges == 0:
        raise InputError("no edges to evaluate")
    scale = 1.0 + (tau or 0.0)
    keep = slice(None)
    ik, jk = np.ascontiguousarray(edges_k[:, 0]), np.ascontiguousarray(edges_k[:, 1])
    il, jl = np.ascontiguousarray(edges_l[:, 0]), np.ascontiguousarray(edges_l[:, 1])

    if embed_raw is not None:
        emb = sigmoid(embed_raw)
        ediff = np.take(emb, ik, axis=0) - np.take(emb, jk, axis=0)
        edist = np.sqrt(np.einsum("ij,ij->i", ediff, ediff))
        th = np.tanh(edist)
        w = 1.0 - th
        if tau is not None:
            w = np.clip((w + tau) / scale, 0.0, 1.0)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if not np.all(w > 0):
            # only nonzero entries of the sparse weight matrix take part
            keep = np.nonzero(w > 0)[0]
            w = w[keep]
    if not isinstance(keep, slice):
        ik, jk, il, jl = ik[keep], jk[keep], il[keep], jl[keep]
    weight_sum_all = w.sum()
    if not weight_sum_all > 0:
        raise DegenerateWeightsError("sum of weights is zero")

    lam_k, dlam_k = decode_depth_grad(DepthField(raw_k, d_min, d_max))
    lam_l, dlam_l = decode_depth_grad(DepthField(raw_l, d_min, d_max))
    xk = lam_k[:, None] * rays_k
    xl = lam_l[:, None] * rays_l
    dk = np.take(xk, ik, axis=0) - np.take(xk, jk, axis=0)
    dl = np.take(xl, il, axis=0) - np.take(xl, jl, axis=0)
    e_k = np.einsum("ij,ij->i", dk, dk)
    e_l = np.einsum("ij,ij->i", dl, dl)
    s_k, s_l = e_k.sum(), e_l.sum()
    if not (s_k > 0 and s_l > 0):
        raise DegenerateGeometryError("all sampled squared distances are zero")
    nk, nl = e_k / s_k, e_l / s_l
    res = nk - nl
    r = np.abs(res)
    alpha = (nk + nl).sum() if settings.alpha_mode == "normalized" else s_k + s_l

    numerator = float(np.dot(w, r))
    denominator = float(alpha * weight_sum_all)
    data = numerator / denominator
    reg = settings.reg_sign * settings.beta_reg * weight_sum_all / n_edges
    out = LossBreakdown(data + reg, data, reg, numerator, denominator, weight_sum_all, float(alpha),
                        r if keep_residuals else None)
    if not need_grad:
        return out, None, None, None

    g = np.sign(res) * w / denominator  # d data / d res
    gk = (g - np.dot(g, nk)) / s_k
    gl = (-g + np.dot(g, nl)) / s_l
    if settings.alpha_mode == "raw":
        # alpha = s_k + s_l, so every squared distance feeds alpha with unit weight
        d_alpha = -data / alpha
        gk = gk + d_alpha
        gl = gl + d_alpha
    grad_k = _scatter_depth(gk, dk, ik, jk, rays_k, len(raw_k)) * dlam_k
    grad_l = _scatter_depth(gl, dl, il, jl, rays_l, len(raw_l)) * dlam_l

    grad_e = None
    if embed_raw is not None:
        dw = (r - data * alpha) / denominator + settings.reg_sign * settings.beta_reg / n_edges
        dd = dw * (-(1.0 - th * th) / scale)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(edist[:, None] > 0, ediff / edist[:, None], 0.0)
        contrib = dd[:, None] * unit
        v = embed_raw.shape[1]
        grad_m = np.zeros_like(embed_raw)
        for c in range(v):
            grad_m[:, c] = (np.bincount(ik, contrib[:, c], len(embed_raw))
                            - np.bincount(jk, contrib[:, c], len(embed_raw)))
        grad_e = grad_m * emb * (1.0 - emb)
    return out, grad_k, grad_l, grad_e


def _scatter_depth(coef, diff, i, j, rays, n):
    """Gradient w.r.t. depths of ``sum_t coef_t * ||x_i - x_j||^2``."""
    c2 = 2.0 * coef
    gi = c2 * np.einsum("ij,ij->i", diff, np.take(rays, i, axis=0))
    gj = -c2 * np.einsum("ij,ij->i", diff, np.take(rays, j, axis=0))
    return np.bincount(i, gi, n) + np.bincount(j, gj, n)


def _resolve(depth_k, depth_l, view_k, view_l, corr, weights, embedding, edges):
    if depth_k.raw.shape[0] != view_k.n_points or depth_l.raw.shape[0] != view_l.n_points:
        raise DimensionError("depth field size does not match its view")
    if (depth_k.d_min, depth_k.d_max) != (depth_l.d_min, depth_l.d_max):
        raise ConfigurationError("both depth fields must share depth bounds")
    if embedding is not None:
        edges_k = as_edges(edges if edges is not None else weights.edges)
    else:
        if weights is None:
            raise InputError("either weights or an embedding field is required")
        edges_k = weights.edges
    if len(edges_k) and (edges_k.min() < 0 or edges_k.max() >= view_k.n_points):
        raise IndexError("edge index out of range")
    edges_l = corr.target[edges_k]
    if np.any(edges_l < 0):
        raise InputError("every edge endpoint needs a valid correspondence")
    return edges_k, edges_l


def compute_loss(depth_k: DepthField, depth_l: DepthField, view_k: ViewObservation,
                 view_l: ViewObservation, corr: CorrespondenceMap, weights: WeightAssignment | None,
                 cfg, embedding: EmbeddingField | None = None, edges=None, tau=None,
                 keep_residuals=False) -> LossBreakdown:
    """Weighted mean of normalized EDM differences over the sampled edges.

    ``data = sum_t w_t |e~k_t - e~l_t| / (alpha * sum_t w_t)`` with per-view
    normalized squared distances ``e~``; the total adds ``reg_sign * beta * mean(w)``.
    """
    loss, *_ = loss_and_gradient(depth_k, depth_l, view_k, view_l, corr, weights, cfg,
                                 embedding=embedding, edges=edges, tau=tau, need_grad=False,
                                 keep_residuals=keep_residuals)
    return loss


def loss_and_gradient(depth_k, depth_l, view_k, view_l, corr, weights, cfg, embedding=None,
                      edges=None, tau=None, differentiate_embeddings=None, need_grad=True,
                      keep_residuals=False):
    """Loss and gradients w.r.t. raw depth of both views (and raw embeddings).

    Weights come either from ``weights`` or, when ``embedding`` is given, from the
    embedding distances on ``edges`` (defaulting to ``weights.edges``) with an
    optional ``tau`` offset.  Returns ``(loss, grad_k, grad_l, grad_embedding)``;
    ``grad_embedding`` is ``None`` unless embedding gradients are requested.
    """
    settings = _settings(cfg)
    edges_k, edges_l = _resolve(depth_k, depth_l, view_k, view_l, corr, weights, embedding, edges)
    loss, gk, gl, ge = objective(
        depth_k.raw, depth_l.raw, (depth_k.d_min, depth_k.d_max), view_k.rays, view_l.rays,
        edges_k, edges_l, settings,
        weights=None if embedding is not None else weights.weights,
        embed_raw=embedding.raw if embedding is not None else None,
        tau=tau, need_grad=need_grad, keep_residuals=keep_residuals,
    )
    if differentiate_embeddings is False:
        ge = None
    return loss, gk, gl, ge


def _settings(cfg) -> ObjectiveSettings:
    if cfg is None:
        return ObjectiveSettings()
    if isinstance(cfg, ObjectiveSettings):
        return cfg
    return ObjectiveSettings(cfg.beta_reg, cfg.reg_sign, cfg.alpha_mode)
