"""Scikit-learn estimator wrapping the full optimization pipeline.

The text side (a bound prompt library plus its text embeddings) is the
model component and arrives at construction; training images and labels
arrive at fit time as a plain (n_samples, dim) array, so the optimizer
composes with sklearn tooling (clone, get_params, CV splitters).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .bundle import EmbeddingStore
from .driver import (
    TraceRow,
    _Evaluator,
    build_desc_pools,
    optimize_descriptions,
    optimize_templates,
)
from .sampling import SamplingConfig, group_sample
from .scoring import Scorer, predict
from .search import SearchConfig
from .validation import check_labels, check_matrix


class PromptEnsembleClassifier(ClassifierMixin, BaseEstimator):
    """Zero-shot classifier whose prompt ensemble is fit by evolutionary search.

    Parameters mirror the run configuration: `library` must be a bound
    PromptLibrary and `text_store` the EmbeddingStore holding its text
    embeddings. `fit(X, y)` consumes image embeddings; the text side is
    never retrained.
    """

    def __init__(
        self,
        library=None,
        text_store=None,
        T=4,
        M=8,
        N=8,
        k=4,
        alpha=1e3,
        tau=100.0,
        T_sample=32,
        K_max=5,
        n_wst=None,
        n_sln=None,
        include_synonyms=False,
        base_template="a photo of a {}.",
        seed=0,
        workers=1,
    ):
        self.library = library
        self.text_store = text_store
        self.T = T
        self.M = M
        self.N = N
        self.k = k
        self.alpha = alpha
        self.tau = tau
        self.T_sample = T_sample
        self.K_max = K_max
        self.n_wst = n_wst
        self.n_sln = n_sln
        self.include_synonyms = include_synonyms
        self.base_template = base_template
        self.seed = seed
        self.workers = workers

    def _check_ready(self):
        if self.library is None or self.text_store is None:
            raise ValueError("library and text_store are required before fit/predict")

    def _store_for(self, X, y=None) -> EmbeddingStore:
        X = check_matrix(X)
        n_classes = self.library.n_classes
        if X.shape[1] != self.text_store.dim:
            raise ValueError(
                f"X has {X.shape[1]} features, text embeddings have {self.text_store.dim}"
            )
        labels = (
            np.zeros(X.shape[0], dtype=np.int64)
            if y is None
            else check_labels(y, n_classes, n_rows=X.shape[0])
        )
        return EmbeddingStore(
            dim=self.text_store.dim,
            n_classes=n_classes,
            image_matrix=X,
            image_labels=labels,
        ).with_texts(self.text_store)

    def fit(self, X, y):
        self._check_ready()
        store = self._store_for(X, y)
        search_cfg = SearchConfig(
            T=self.T, M=self.M, N=self.N, k=self.k,
            alpha=self.alpha, tau=self.tau, seed=self.seed,
        )
        sampling_cfg = SamplingConfig(
            T_sample=self.T_sample, K_max=self.K_max,
            n_wst=self.n_wst, n_sln=self.n_sln, seed=self.seed,
        )
        streams = np.random.SeedSequence(self.seed).spawn(2)
        scorer = Scorer(
            store, self.library, alpha=self.alpha, tau=self.tau,
            include_synonyms=self.include_synonyms,
        )
        evaluator = _Evaluator(scorer, self.workers)
        trace: list[TraceRow] = []
        p_t_star, p_t_score = optimize_templates(
            evaluator, self.library, search_cfg,
            np.random.default_rng(streams[0]), trace, self.base_template,
        )
        desc_pools = build_desc_pools(self.library, p_t_star, self.include_synonyms)
        plan = group_sample(scorer, p_t_star, desc_pools, sampling_cfg)
        best, best_score = optimize_descriptions(
            evaluator, scorer, desc_pools, p_t_star, p_t_score, plan,
            search_cfg, sampling_cfg, np.random.default_rng(streams[1]), trace,
        )
        self.best_candidate_ = best
        self.best_score_ = best_score
        self.template_candidate_ = p_t_star
        self.group_plan_ = plan
        self.trace_ = trace
        self.evaluations_ = evaluator.count
        self.classes_ = np.arange(self.library.n_classes)
        self.n_features_in_ = store.dim
        return self

    def decision_function(self, X) -> np.ndarray:
        self._check_ready()
        if not hasattr(self, "best_candidate_"):
            raise ValueError("estimator is not fitted")
        store = self._store_for(X)
        scorer = Scorer(
            store, self.library, alpha=self.alpha, tau=self.tau,
            include_synonyms=self.include_synonyms,
        )
        return scorer.class_scores(self.best_candidate_)

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[predict(scores)]
