"""Scikit-learn style front end to the two-stage solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import InputError
from .config import PRIORS, SolverConfig
from .loss import CorrespondenceMap
from .two_stage import run_two_stage

_D = SolverConfig()


class NonRigidDepthSolver(BaseEstimator):
    """Per-view depth from consecutive-pair correspondences by direct optimization.

    Hyper-parameters mirror :class:`SolverConfig` plus the choice of ``prior``.
    ``fit`` takes a list of :class:`ViewObservation` and, optionally, the
    consecutive correspondence maps (matched by point id when omitted).

    Attributes
    ----------
    depths_ : list of DepthField
    embeddings_ : list of EmbeddingField or None
        Only under the ARAP prior.
    weights_ : list of WeightAssignment
        Final (stage-2) weights per consecutive pair.
    log_ : list of dict
        One row per stage, epoch and pair.
    """

    def __init__(self, prior="arap", stage1_epochs=_D.stage1_epochs, stage2_epochs=_D.stage2_epochs,
                 steps_per_epoch=_D.steps_per_epoch, learning_rate=_D.learning_rate,
                 lr_decay_factor=_D.lr_decay_factor, lr_decay_every=_D.lr_decay_every,
                 adam_beta1=_D.adam_beta1, adam_beta2=_D.adam_beta2, adam_epsilon=_D.adam_epsilon,
                 tau=_D.tau, beta_reg=_D.beta_reg, reg_sign=_D.reg_sign, alpha_mode=_D.alpha_mode,
                 sample_size=_D.sample_size, seed=_D.seed, deterministic=_D.deterministic,
                 d_min=_D.d_min, d_max=_D.d_max, embedding_dim=_D.embedding_dim,
                 embedding_init_scale=_D.embedding_init_scale, embedding_init=_D.embedding_init,
                 iso_radius=_D.iso_radius):
        self.prior = prior
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.steps_per_epoch = steps_per_epoch
        self.learning_rate = learning_rate
        self.lr_decay_factor = lr_decay_factor
        self.lr_decay_every = lr_decay_every
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_epsilon = adam_epsilon
        self.tau = tau
        self.beta_reg = beta_reg
        self.reg_sign = reg_sign
        self.alpha_mode = alpha_mode
        self.sample_size = sample_size
        self.seed = seed
        self.deterministic = deterministic
        self.d_min = d_min
        self.d_max = d_max
        self.embedding_dim = embedding_dim
        self.embedding_init_scale = embedding_init_scale
        self.embedding_init = embedding_init
        self.iso_radius = iso_radius

    @classmethod
    def from_config(cls, cfg: SolverConfig, prior: str = "arap") -> "NonRigidDepthSolver":
        return cls(prior=prior, **cfg.to_dict())

    def solver_config(self) -> SolverConfig:
        params = self.get_params()
        params.pop("prior")
        return SolverConfig(**params)

    def fit(self, views, corrs=None, callback=None):
        if self.prior not in PRIORS:
            raise InputError(f"unknown prior {self.prior!r}; expected one of {PRIORS}")
        views = list(views)
        if corrs is None:
            corrs = [CorrespondenceMap.from_point_ids(views[k], views[k + 1]) for k in range(len(views) - 1)]
        result = run_two_stage(views, corrs, self.solver_config(), self.prior, callback=callback)
        self.depths_ = result.depths
        self.embeddings_ = result.embeddings
        self.weights_ = result.weights
        self.log_ = result.log
        self.n_views_ = len(views)
        return self

    def predict(self, views=None) -> list[np.ndarray]:
        """Decoded depth per fitted view (up to the usual monocular scale).

        Depth is a per-view variable rather than a function of the input, so
        ``views`` is only checked for consistency with what was fitted.
        """
        check_is_fitted(self, "depths_")
        if views is not None:
            views = list(views)
            if len(views) != self.n_views_ or any(
                    v.n_points != len(d.raw) for v, d in zip(views, self.depths_)):
                raise InputError("predict() views do not match the fitted views")
        return [d.decode() for d in self.depths_]

    def fit_predict(self, views, corrs=None) -> list[np.ndarray]:
        return self.fit(views, corrs).predict()
