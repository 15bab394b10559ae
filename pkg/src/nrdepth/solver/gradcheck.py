"""Central finite-difference check of :func:`loss_and_gradient` on random configurations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..embedding import EmbeddingField
from ..geometry import CameraIntrinsics, DepthField, ViewObservation
from ..priors import WeightAssignment
from .loss import CorrespondenceMap, ObjectiveSettings, all_pairs, loss_and_gradient

REL_TOL = 1e-5
ABS_TOL = 1e-9
KINK_MARGIN = 1e-4  # relative to the mean residual
WEIGHT_MODES = ("ones", "random", "sparse", "arap", "arap_tau")


@dataclass
class GradCheckCase:
    depth_k: DepthField
    depth_l: DepthField
    view_k: ViewObservation
    view_l: ViewObservation
    corr: CorrespondenceMap
    weights: WeightAssignment
    settings: ObjectiveSettings
    embedding: EmbeddingField | None = None
    tau: float | None = None
    mode: str = "ones"


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_cases: int
    n_components: int
    n_failures: int
    worst_case: int
    per_mode: dict = field(default_factory=dict)
    n_redrawn: int = 0

    @property
    def ok(self) -> bool:
        return self.n_failures == 0

    def to_dict(self) -> dict:
        return {"max_rel_error": self.max_rel_error, "n_cases": self.n_cases,
                "n_components": self.n_components, "n_failures": self.n_failures,
                "worst_case": self.worst_case, "per_mode": self.per_mode, "n_redrawn": self.n_redrawn,
                "rel_tol": REL_TOL, "abs_tol": ABS_TOL, "ok": self.ok}


def near_kink(case: GradCheckCase) -> bool:
    """True when some residual sits so close to zero that the |.| kink may fall inside the stencil."""
    loss, *_ = loss_and_gradient(case.depth_k, case.depth_l, case.view_k, case.view_l, case.corr,
                                 case.weights, case.settings, embedding=case.embedding, tau=case.tau,
                                 need_grad=False, keep_residuals=True)
    r = loss.residuals
    return bool(r.min() < KINK_MARGIN * r.mean())


def random_case(rng: np.random.Generator, mode: str | None = None) -> GradCheckCase:
    """Two views of 4..30 random points with a shuffled correspondence and a random weight path.

    The absolute value is not differentiable where a residual vanishes, so draws
    with a residual near zero (see :func:`near_kink`) should be discarded.
    """
    intr = CameraIntrinsics.default()
    n = int(rng.integers(4, 31))
    mode = mode or WEIGHT_MODES[int(rng.integers(len(WEIGHT_MODES)))]
    size = np.array([intr.width - 1, intr.height - 1])
    view_k = ViewObservation.from_pixels(intr, rng.uniform(0, 1, (n, 2)) * size, np.arange(n))
    perm = rng.permutation(n)
    view_l = ViewObservation.from_pixels(intr, rng.uniform(0, 1, (n, 2)) * size, perm)
    corr = CorrespondenceMap.from_point_ids(view_k, view_l)
    depth_k = DepthField(rng.normal(0.0, 1.0, n))
    depth_l = DepthField(rng.normal(0.0, 1.0, n))
    edges = all_pairs(n)
    if rng.random() < 0.5 and len(edges) > 6:
        edges = edges[np.sort(rng.choice(len(edges), int(rng.integers(6, len(edges) + 1)), replace=False))]
    w = np.ones(len(edges))
    if mode == "random":
        w = rng.uniform(0.05, 1.0, len(edges))
    elif mode == "sparse":
        w = rng.uniform(0.05, 1.0, len(edges)) * (rng.random(len(edges)) < 0.6)
        w[0] = max(w[0], 0.5)
    weights = WeightAssignment(edges, w, "arap" if mode.startswith("arap") else "override")
    settings = ObjectiveSettings(
        beta_reg=float(rng.choice([0.0, 0.01, 0.3])),
        reg_sign=int(rng.choice([-1, 1])),
        alpha_mode=str(rng.choice(["normalized", "raw"])),
    )
    embedding = tau = None
    if mode.startswith("arap"):
        embedding = EmbeddingField(rng.normal(0.0, 1.0, (n, int(rng.integers(1, 5)))))
        if mode == "arap_tau":
            tau = float(rng.uniform(0.0, 0.9))
    return GradCheckCase(depth_k, depth_l, view_k, view_l, corr, weights, settings, embedding, tau, mode)


def _loss(case: GradCheckCase, raw_k, raw_l, embed_raw=None) -> float:
    emb = case.embedding
    if emb is not None and embed_raw is not None:
        emb = EmbeddingField(embed_raw, emb.view_pair)
    loss, *_ = loss_and_gradient(
        DepthField(raw_k, case.depth_k.d_min, case.depth_k.d_max),
        DepthField(raw_l, case.depth_l.d_min, case.depth_l.d_max),
        case.view_k, case.view_l, case.corr, case.weights, case.settings,
        embedding=emb, tau=case.tau, need_grad=False)
    return loss.total


def relative_error(analytic, numeric) -> np.ndarray:
    """``|a - f| / max(|a|, |f|, ABS_TOL / REL_TOL)``: below ``REL_TOL`` means within either tolerance."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ABS_TOL / REL_TOL)
    return np.abs(analytic - numeric) / scale


def check_case(case: GradCheckCase, h: float = 1e-5) -> np.ndarray:
    """Relative error of every gradient component against central differences."""
    _, gk, gl, ge = loss_and_gradient(case.depth_k, case.depth_l, case.view_k, case.view_l, case.corr,
                                      case.weights, case.settings, embedding=case.embedding, tau=case.tau)
    rk, rl = case.depth_k.raw.copy(), case.depth_l.raw.copy()
    errors = []
    for raw, grad in ((rk, gk), (rl, gl)):
        fd = np.empty_like(raw)
        for i in range(len(raw)):
            old = raw[i]
            raw[i] = old + h
            up = _loss(case, rk, rl)
            raw[i] = old - h
            down = _loss(case, rk, rl)
            raw[i] = old
            fd[i] = (up - down) / (2 * h)
        errors.append(relative_error(grad, fd))
    if case.embedding is not None:
        er = case.embedding.raw.copy()
        fd = np.empty_like(er)
        for idx in np.ndindex(er.shape):
            old = er[idx]
            er[idx] = old + h
            up = _loss(case, rk, rl, er)
            er[idx] = old - h
            down = _loss(case, rk, rl, er)
            er[idx] = old
            fd[idx] = (up - down) / (2 * h)
        errors.append(relative_error(ge, fd).ravel())
    return np.concatenate(errors)


def run_gradcheck(n_cases: int = 200, seed: int = 0, h: float = 1e-5) -> GradCheckReport:
    """Cycle through every weight path so each is covered about equally."""
    rng = np.random.default_rng(seed)
    worst, worst_case, total, failures, redrawn = 0.0, -1, 0, 0, 0
    per_mode = {m: 0.0 for m in WEIGHT_MODES}
    for c in range(n_cases):
        mode = WEIGHT_MODES[c % len(WEIGHT_MODES)]
        case = random_case(rng, mode)
        while near_kink(case):
            redrawn += 1
            case = random_case(rng, mode)
        err = check_case(case, h)
        total += err.size
        failures += int(np.sum(err >= REL_TOL))
        per_mode[mode] = max(per_mode[mode], float(err.max()))
        if err.max() > worst:
            worst, worst_case = float(err.max()), c
    return GradCheckReport(worst, n_cases, total, failures, worst_case, per_mode, redrawn)
