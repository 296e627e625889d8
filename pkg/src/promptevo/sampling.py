"""Description-phase initialization and salient class-group selection.

Prompt sampling draws random per-class description subsets on top of the
optimized template candidate and keeps the best-scoring draw as the
description-phase start. Group sampling picks the worst-accuracy classes
and the classes that gain most from their full description set, each
bundled with the classes they get confused with, as the only groups whose
descriptions are optimized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scoring import CandidatePrompt, ScoreBreakdown, predict


@dataclass(frozen=True)
class SamplingConfig:
    T_sample: int = 32
    K_max: int = 5
    n_wst: int | None = None
    n_sln: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.T_sample < 0 or self.K_max < 1:
            raise ValueError("need T_sample >= 0 and K_max >= 1")

    def group_counts(self, n_classes: int) -> tuple[int, int]:
        default = default_group_count(n_classes)
        return (
            default if self.n_wst is None else self.n_wst,
            default if self.n_sln is None else self.n_sln,
        )


def default_group_count(n_classes: int) -> int:
    return max(2, math.ceil(math.log10(max(n_classes, 1))))


@dataclass(frozen=True)
class Group:
    anchor_class: int
    class_ids: frozenset[int]
    provenance: str  # "worst" | "salient"

    def as_dict(self) -> dict:
        return {
            "anchor_class": self.anchor_class,
            "class_ids": sorted(self.class_ids),
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class GroupPlan:
    groups: tuple[Group, ...]
    n_wst: int
    n_sln: int
    misclass: tuple[tuple[int, ...], ...]  # per class: confused-with class ids

    def as_dict(self) -> dict:
        return {
            "n_wst": self.n_wst,
            "n_sln": self.n_sln,
            "groups": [g.as_dict() for g in self.groups],
            "misclass": {str(c): list(ids) for c, ids in enumerate(self.misclass) if ids},
        }

    @staticmethod
    def from_dict(payload: dict, n_classes: int) -> "GroupPlan":
        misclass = [() for _ in range(n_classes)]
        for c, ids in payload.get("misclass", {}).items():
            misclass[int(c)] = tuple(ids)
        return GroupPlan(
            groups=tuple(
                Group(g["anchor_class"], frozenset(g["class_ids"]), g["provenance"])
                for g in payload["groups"]
            ),
            n_wst=payload["n_wst"],
            n_sln=payload["n_sln"],
            misclass=tuple(misclass),
        )


def prompt_sample_init(
    evaluate_batch,
    seed_candidate: CandidatePrompt,
    seed_score: ScoreBreakdown,
    desc_pools: dict[int, list[int]],
    cfg: SamplingConfig,
    rng,
    tagger,
):
    """Best of T_sample random description assignments (seed included).

    Every class with descriptions gets a uniform random subset of size
    uniform in [1, min(K_max, pool size)]; the seed candidate stays in the
    pool, so the result never scores below it. Ties go to the earliest
    generated. Returns (candidate, score, evaluations).
    """
    classes = sorted(c for c, ids in desc_pools.items() if ids)
    drawn = []
    for _ in range(cfg.T_sample):
        tag = next(tagger)
        cand = seed_candidate
        for c in classes:
            ids = desc_pools[c]
            size = int(rng.integers(1, min(cfg.K_max, len(ids)) + 1))
            picks = rng.choice(len(ids), size=size, replace=False)
            cand = cand.with_class_descs(c, (ids[i] for i in picks), tag)
        drawn.append(cand)
    pool = [(seed_candidate, seed_score)] + list(zip(drawn, evaluate_batch(drawn)))
    best_idx = max(range(len(pool)), key=lambda i: (pool[i][1].fitness, -i))
    cand, score = pool[best_idx]
    return cand, score, len(drawn)


def group_sample(
    scorer,
    p_t_star: CandidatePrompt,
    desc_pools: dict[int, list[int]],
    cfg: SamplingConfig,
) -> GroupPlan:
    """Select worst-accuracy and highest-description-gain class groups.

    Deterministic: no randomness, ties to the lower class id. Each group is
    its anchor class plus the classes the anchor's training images were
    misclassified as, under the template-phase candidate.
    """
    labels = np.asarray(scorer.store.image_labels)
    n_classes = scorer.store.n_classes
    preds = predict(scorer.class_scores(p_t_star))

    misclass = [set() for _ in range(n_classes)]
    for pred, label in zip(preds, labels):
        if pred != label:
            misclass[label].add(int(pred))

    accuracy = np.ones(n_classes)
    gain = np.full(n_classes, -np.inf)
    for c in range(n_classes):
        rows = np.flatnonzero(labels == c)
        if rows.size == 0:
            continue
        accuracy[c] = float(np.count_nonzero(preds[rows] == c)) / rows.size
        pool = desc_pools.get(c, [])
        if not pool:
            continue
        class_scorer = scorer.restricted(rows)
        base = class_scorer.score(p_t_star)
        full = class_scorer.score(
            p_t_star.with_class_descs(c, pool, p_t_star.generation_tag)
        )
        gain[c] = full.fitness - base.fitness

    n_wst, n_sln = cfg.group_counts(n_classes)
    worst = sorted(range(n_classes), key=lambda c: (accuracy[c], c))[:n_wst]
    salient = sorted(range(n_classes), key=lambda c: (-gain[c], c))[:n_sln]

    groups: list[Group] = []
    seen: set[frozenset[int]] = set()
    for provenance, anchors in (("worst", worst), ("salient", salient)):
        for anchor in anchors:
            ids = frozenset({anchor} | misclass[anchor])
            if ids not in seen:
                seen.add(ids)
                groups.append(Group(anchor_class=anchor, class_ids=ids, provenance=provenance))
    return GroupPlan(
        groups=tuple(groups),
        n_wst=n_wst,
        n_sln=n_sln,
        misclass=tuple(tuple(sorted(m)) for m in misclass),
    )
