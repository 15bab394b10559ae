"""Two-stage direct optimization of per-view depth and per-pair motion embeddings."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..embedding import EmbeddingField, tau_offset
from ..exceptions import DimensionError, InputError, SolverDivergedError
from ..geometry import DepthField, ViewObservation, sigmoid
from ..priors import WeightAssignment, neighbour_edges
from .config import PRIORS, SolverConfig
from .loss import CorrespondenceMap, ObjectiveSettings, all_pairs, objective, sample_edges
from .optim import Adam

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("stage", "epoch", "pair", "data_term", "reg_term", "total", "lr")


@dataclass
class TwoStageResult:
    depths: list
    embeddings: list | None
    weights: list
    log: list = field(default_factory=list)


def _rng(cfg: SolverConfig, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *key]))


class _PairData:
    """Per-pair constants: valid points, candidate edges and a cached full edge set."""

    def __init__(self, k, view_k, view_l, corr, cfg, prior):
        if len(corr) != view_k.n_points or corr.n_target != view_l.n_points:
            raise DimensionError(f"correspondence map of pair ({k}, {k + 1}) does not match its views")
        self.k = k
        self.view_k, self.view_l, self.corr = view_k, view_l, corr
        valid = np.nonzero(corr.valid)[0]
        if len(valid) < 2:
            raise InputError(f"pair ({k}, {k + 1}) has fewer than two valid correspondences")
        self.candidates = None
        if prior == "isometric":
            local = neighbour_edges(view_k.pixels[valid], cfg.iso_radius)
            if len(local) == 0:
                raise InputError(f"pair ({k}, {k + 1}) has no image neighbours within {cfg.iso_radius} px")
            self.candidates = valid[local]
            population = len(self.candidates)
        else:
            population = len(valid) * (len(valid) - 1) // 2
        self.fixed_edges = None
        if cfg.sample_size >= population:
            self.fixed_edges = self.candidates if self.candidates is not None else valid[all_pairs(len(valid))]

    def edges(self, cfg, rng_key):
        if self.fixed_edges is not None:
            return self.fixed_edges
        seed = np.random.SeedSequence([cfg.seed, *rng_key])
        return sample_edges(self.view_k, self.corr, cfg.sample_size, seed, self.candidates).edges


def _weights(prior, pair: _PairData, edges, cfg, embed_raw=None, tau=None):
    if prior == "arap":
        emb = sigmoid(embed_raw)
        diff = emb[edges[:, 0]] - emb[edges[:, 1]]
        w = 1.0 - np.tanh(np.sqrt(np.einsum("ij,ij->i", diff, diff)))
    elif prior == "isometric":
        px = pair.view_k.pixels
        d = px[edges[:, 0]] - px[edges[:, 1]]
        w = (np.sqrt(np.einsum("ij,ij->i", d, d)) <= cfg.iso_radius).astype(np.float64)
    else:
        w = np.ones(len(edges))
    return w if tau is None else tau_offset(w, tau)


def _initial_embedding(pair: _PairData, cfg: SolverConfig) -> np.ndarray:
    """Random raw embeddings, or standardized image displacement of the pair in the first channels."""
    n, v = pair.view_k.n_points, cfg.embedding_dim
    rng = _rng(cfg, 0, pair.k)
    raw = cfg.embedding_init_scale * rng.standard_normal((n, v))
    if cfg.embedding_init == "flow":
        valid = pair.corr.valid
        disp = np.zeros((n, 2))
        disp[valid] = pair.view_l.pixels[pair.corr.target[valid]] - pair.view_k.pixels[valid]
        spread = disp[valid].std(axis=0)
        disp[valid] = (disp[valid] - disp[valid].mean(axis=0)) / np.where(spread > 0, spread, 1.0)
        c = min(2, v)
        raw[:, :c] = disp[:, :c]
        raw[:, c:] = 0.0
    return raw


def run_two_stage(views, corrs, cfg: SolverConfig | None = None, prior: str = "arap",
                  callback=None) -> TwoStageResult:
    """Recover per-view depth (and per-pair embeddings) from consecutive-pair correspondences.

    Stage 1 optimizes depth and, under the ARAP prior, embeddings jointly.  Stage 2
    freezes the embeddings, resets depth to the neutral raw value 0, applies the
    tau offset to the weights and optimizes depth alone.
    """
    cfg = cfg or SolverConfig()
    if prior not in PRIORS:
        raise InputError(f"unknown prior {prior!r}; expected one of {PRIORS}")
    views = list(views)
    corrs = list(corrs)
    if len(views) < 2:
        raise InputError("need at least two views")
    if len(corrs) != len(views) - 1:
        raise InputError(f"{len(views)} views need {len(views) - 1} consecutive correspondence maps")
    for v in views:
        if not isinstance(v, ViewObservation):
            raise InputError("views must be ViewObservation instances")
    for c in corrs:
        if not isinstance(c, CorrespondenceMap):
            raise InputError("correspondences must be CorrespondenceMap instances")

    pairs = [_PairData(k, views[k], views[k + 1], corrs[k], cfg, prior) for k in range(len(corrs))]
    settings = ObjectiveSettings(cfg.beta_reg, cfg.reg_sign, cfg.alpha_mode)
    bounds = (cfg.d_min, cfg.d_max)
    params = {f"depth{k}": np.zeros(v.n_points) for k, v in enumerate(views)}
    if prior == "arap":
        for p in pairs:
            params[f"embed{p.k}"] = _initial_embedding(p, cfg)
    log = []

    def run_stage(stage, epochs):
        opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
        tau = cfg.tau if stage == 2 else None
        for epoch in range(epochs):
            opt.lr = cfg.lr_at(epoch)
            sums = np.zeros((len(pairs), 3))
            for step in range(cfg.steps_per_epoch):
                for p in pairs:
                    edges = p.edges(cfg, (stage, epoch, step, p.k))
                    edges_l = p.corr.target[edges]
                    kd, ld = f"depth{p.k}", f"depth{p.k + 1}"
                    joint = prior == "arap" and stage == 1
                    if joint:
                        w, embed = None, params[f"embed{p.k}"]
                    else:
                        embed = None
                        w = _weights(prior, p, edges, cfg, params.get(f"embed{p.k}"), tau)
                    loss, gk, gl, ge = objective(
                        params[kd], params[ld], bounds, p.view_k.rays, p.view_l.rays,
                        edges, edges_l, settings, weights=w, embed_raw=embed)
                    if not math.isfinite(loss.total):
                        raise SolverDivergedError(
                            f"non-finite loss at stage {stage}, epoch {epoch}, pair ({p.k}, {p.k + 1}): "
                            f"data={loss.data_term}, reg={loss.weight_reg_term}")
                    grads = {kd: gk, ld: gl}
                    if joint:
                        grads[f"embed{p.k}"] = ge
                    opt.step(params, grads)
                    sums[p.k] += (loss.data_term, loss.weight_reg_term, loss.total)
            for p in pairs:
                d, r, t = sums[p.k] / cfg.steps_per_epoch
                log.append({"stage": stage, "epoch": epoch, "pair": f"{p.k}-{p.k + 1}",
                            "data_term": d, "reg_term": r, "total": t, "lr": opt.lr})
            logger.debug("stage %d epoch %d mean total %.6g", stage, epoch, sums[:, 2].mean())
            if callback is not None:
                callback(stage, epoch, params)

    run_stage(1, cfg.stage1_epochs)
    for k in range(len(views)):
        params[f"depth{k}"] = np.zeros(views[k].n_points)
    run_stage(2, cfg.stage2_epochs)

    depths = [DepthField(params[f"depth{k}"].copy(), cfg.d_min, cfg.d_max) for k in range(len(views))]
    embeddings = None
    if prior == "arap":
        embeddings = [EmbeddingField(params[f"embed{p.k}"].copy(), (p.k, p.k + 1)) for p in pairs]
    weights = []
    for p in pairs:
        edges = p.edges(cfg, (3, 0, 0, p.k))
        w = _weights(prior, p, edges, cfg, params.get(f"embed{p.k}"), cfg.tau)
        weights.append(WeightAssignment(edges, w, prior))
    return TwoStageResult(depths, embeddings, weights, log)
