"""Class scores, predictions, fitness, and incremental score caching.

An image's score for a class is the mean cosine similarity between the
image embedding and the class's selected text embeddings. Predictions take
the argmax; fitness combines accuracy with a confidence term, the mean log
softmax probability of the true class under temperature-scaled scores.
All vectors are unit norm, so cosines are plain dot products; sums
accumulate in float64.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVarianceError, RemoveAbsentError, UnboundIdError


@dataclass(frozen=True)
class CandidatePrompt:
    """Search state: shared template ids plus per-class description ids.

    Candidates compare by value on (template_ids, desc_ids); generation_tag
    only records creation order and breaks fitness ties.
    """

    template_ids: frozenset[int]
    desc_ids: tuple[frozenset[int], ...]
    generation_tag: int = 0

    def __post_init__(self):
        if not self.template_ids:
            raise ValueError("template_ids must be non-empty")
        object.__setattr__(self, "template_ids", frozenset(self.template_ids))
        object.__setattr__(self, "desc_ids", tuple(frozenset(s) for s in self.desc_ids))

    def __eq__(self, other):
        if not isinstance(other, CandidatePrompt):
            return NotImplemented
        return self.template_ids == other.template_ids and self.desc_ids == other.desc_ids

    def __hash__(self):
        return hash((self.template_ids, self.desc_ids))

    @staticmethod
    def initial(template_ids, n_classes: int, tag: int = 0) -> "CandidatePrompt":
        return CandidatePrompt(
            template_ids=frozenset(template_ids),
            desc_ids=tuple(frozenset() for _ in range(n_classes)),
            generation_tag=tag,
        )

    def with_templates(self, template_ids, tag: int) -> "CandidatePrompt":
        return CandidatePrompt(frozenset(template_ids), self.desc_ids, tag)

    def with_class_descs(self, class_id: int, ids, tag: int) -> "CandidatePrompt":
        descs = list(self.desc_ids)
        descs[class_id] = frozenset(ids)
        return CandidatePrompt(self.template_ids, tuple(descs), tag)

    def union(self, other: "CandidatePrompt", tag: int) -> "CandidatePrompt":
        return CandidatePrompt(
            self.template_ids | other.template_ids,
            tuple(a | b for a, b in zip(self.desc_ids, other.desc_ids)),
            tag,
        )

    def digest(self) -> str:
        payload = {
            "templates": sorted(self.template_ids),
            "descs": [sorted(s) for s in self.desc_ids],
        }
        return hashlib.sha256(json.dumps(payload).encode()).hexdigest()


@dataclass(frozen=True)
class ScoreBreakdown:
    """Evaluation of one candidate on one image set."""

    accuracy: float
    mean_true_logprob: float
    fitness: float
    n_samples: int

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "mean_true_logprob": self.mean_true_logprob,
            "fitness": self.fitness,
            "n_samples": self.n_samples,
        }


def _check_ids(class_text_ids, n_texts: int) -> None:
    for c, ids in enumerate(class_text_ids):
        for i in ids:
            if not 0 <= i < n_texts:
                raise UnboundIdError(f"class {c} references text id {i} of {n_texts}")


def class_scores(store, class_text_ids) -> np.ndarray:
    """Mean image-text dot product per (image, class), float64.

    `class_text_ids[c]` lists the text ids describing class c; classes with
    no texts score 0 for every image.
    """
    _check_ids(class_text_ids, store.n_texts)
    n_img = store.n_images
    out = np.zeros((n_img, len(class_text_ids)), dtype=np.float64)
    images = store.image_matrix.astype(np.float64, copy=False)
    texts = store.text_matrix.astype(np.float64, copy=False)
    for c, ids in enumerate(class_text_ids):
        if len(ids):
            out[:, c] = (images @ texts[sorted(ids)].T).mean(axis=1)
    return out


def predict(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(scores, axis=1)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def breakdown_from_scores(scores, labels, alpha: float, tau: float) -> ScoreBreakdown:
    """Accuracy plus the confidence term, combined into fitness.

    Fitness = accuracy + alpha * mean log softmax(tau * score) at the true
    label, so higher fitness means more confident correct predictions.
    """
    labels = np.asarray(labels)
    n = scores.shape[0]
    preds = predict(scores)
    acc = float(np.count_nonzero(preds == labels)) / n
    logprobs = log_softmax(tau * scores)
    mean_true = float(logprobs[np.arange(n), labels].mean())
    return ScoreBreakdown(
        accuracy=acc,
        mean_true_logprob=mean_true,
        fitness=acc + alpha * mean_true,
        n_samples=n,
    )


def fitness(store, class_text_ids, alpha: float, tau: float = 100.0) -> ScoreBreakdown:
    if store.n_images == 0:
        raise ValueError("store has no images to evaluate")
    scores = class_scores(store, class_text_ids)
    return breakdown_from_scores(scores, store.image_labels, alpha, tau)


def pcc(xs, ys) -> float:
    """Pearson correlation coefficient of two equal-length series."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pcc needs two equal-length 1-D series of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise DegenerateVarianceError("a series has zero variance")
    return float(dx @ dy) / math.sqrt(vx * vy)


@dataclass
class ScoreCache:
    """Per-class similarity sums for one candidate's text selection.

    `sums[:, c]` is the sum over the cached id set of dot(image_i, text_d);
    dividing by `counts[c]` reproduces class_scores. Deltas recompute only
    the edited class's column, so cached and fresh scores agree exactly.
    """

    store: object
    id_sets: tuple[frozenset[int], ...]
    sums: np.ndarray
    counts: np.ndarray

    def scores(self) -> np.ndarray:
        counts = np.where(self.counts == 0, 1, self.counts)
        return self.sums / counts

    def breakdown(self, alpha: float, tau: float = 100.0) -> ScoreBreakdown:
        return breakdown_from_scores(self.scores(), self.store.image_labels, alpha, tau)


def _column_sum(store, ids) -> np.ndarray:
    if not ids:
        return np.zeros(store.n_images, dtype=np.float64)
    images = store.image_matrix.astype(np.float64, copy=False)
    texts = store.text_matrix.astype(np.float64, copy=False)
    return (images @ texts[sorted(ids)].T).sum(axis=1)


def make_cache(store, class_text_ids) -> ScoreCache:
    id_sets = tuple(frozenset(ids) for ids in class_text_ids)
    _check_ids(id_sets, store.n_texts)
    sums = np.empty((store.n_images, len(id_sets)), dtype=np.float64)
    for c, ids in enumerate(id_sets):
        sums[:, c] = _column_sum(store, ids)
    counts = np.array([len(ids) for ids in id_sets], dtype=np.int64)
    return ScoreCache(store=store, id_sets=id_sets, sums=sums, counts=counts)


def apply_delta(cache: ScoreCache, class_id: int, add_ids=(), remove_ids=()) -> ScoreCache:
    """Return a cache for the candidate with one class's id set edited."""
    current = cache.id_sets[class_id]
    remove = frozenset(remove_ids)
    absent = remove - current
    if absent:
        raise RemoveAbsentError(
            f"class {class_id} cannot remove ids {sorted(absent)}: not cached"
        )
    add = frozenset(add_ids)
    _check_ids([add], cache.store.n_texts)
    new_set = (current - remove) | add
    if new_set == current:
        return cache
    id_sets = list(cache.id_sets)
    id_sets[class_id] = new_set
    sums = cache.sums.copy()
    sums[:, class_id] = _column_sum(cache.store, new_set)
    counts = cache.counts.copy()
    counts[class_id] = len(new_set)
    return ScoreCache(store=cache.store, id_sets=tuple(id_sets), sums=sums, counts=counts)


class Scorer:
    """Candidate evaluator bound to one store and one library.

    Precomputes the full image-text similarity table once, then scores any
    candidate by gathering and averaging columns, in the canonical order the
    library resolution yields. Pure reads after construction; safe to share
    across worker threads.
    """

    def __init__(self, store, lib, alpha: float, tau: float = 100.0,
                 include_synonyms: bool = False, image_rows=None):
        self.store = store
        self.library = lib
        self.alpha = alpha
        self.tau = tau
        self.include_synonyms = include_synonyms
        images = store.image_matrix.astype(np.float64)
        texts = store.text_matrix.astype(np.float64)
        self._sims = images @ texts.T
        self._labels = np.asarray(store.image_labels)
        self._rows = None if image_rows is None else np.asarray(image_rows)
        self.evaluations = 0

    def restricted(self, image_rows) -> "Scorer":
        """A view of this scorer over a subset of image rows (shares the table)."""
        clone = object.__new__(Scorer)
        clone.__dict__.update(self.__dict__)
        clone._rows = np.asarray(image_rows)
        clone.evaluations = 0
        return clone

    def d_sets(self, candidate) -> tuple[tuple[int, ...], ...]:
        return self.library.d_sets(candidate, include_synonyms=self.include_synonyms)

    def class_scores(self, candidate) -> np.ndarray:
        sets = self.d_sets(candidate)
        sims = self._sims if self._rows is None else self._sims[self._rows]
        out = np.zeros((sims.shape[0], len(sets)), dtype=np.float64)
        for c, ids in enumerate(sets):
            if ids:
                out[:, c] = sims[:, list(ids)].mean(axis=1)
        return out

    def score(self, candidate) -> ScoreBreakdown:
        self.evaluations += 1
        labels = self._labels if self._rows is None else self._labels[self._rows]
        return breakdown_from_scores(self.class_scores(candidate), labels, self.alpha, self.tau)
