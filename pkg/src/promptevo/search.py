"""Candidate generation operators and the iterative optimization loop.

Edits move a candidate by exactly one element (add, delete, replace);
evolution combines population members (set union) and resamples element
subsets of preserved size. Each loop iteration scores the new candidates
and keeps the top-k by fitness, so the incumbent best never regresses.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EmptyPopulationError
from .scoring import CandidatePrompt, ScoreBreakdown


@dataclass(frozen=True)
class SearchConfig:
    """Iteration and generation budget of one optimization loop."""

    T: int = 4
    M: int = 8
    N: int = 8
    k: int = 4
    alpha: float = 1e3
    tau: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.T < 1 or self.M < 0 or self.N < 0 or self.k < 1:
            raise ValueError("need T >= 1, M >= 0, N >= 0, k >= 1")


class TemplatePool:
    """Element scope of the template phase: shared template ids."""

    def __init__(self, template_ids):
        self._pool = sorted(template_ids)

    def elements(self):
        return list(self._pool)

    def members(self, cand: CandidatePrompt):
        return sorted(cand.template_ids)

    def removable(self, cand: CandidatePrompt):
        # deleting the last template would leave classes undescribed
        members = self.members(cand)
        return members if len(members) > 1 else []

    def add(self, cand, element, tag):
        return cand.with_templates(cand.template_ids | {element}, tag)

    def remove(self, cand, element, tag):
        return cand.with_templates(cand.template_ids - {element}, tag)

    def replace(self, cand, incoming, outgoing, tag):
        kept = (cand.template_ids | {incoming}) - {outgoing}
        if not kept:  # incoming == outgoing on a single-template candidate
            return None
        return cand.with_templates(kept, tag)

    def mutated(self, cand, rng, tag):
        universe = sorted(set(self._pool) | cand.template_ids)
        k = len(cand.template_ids)
        picks = rng.choice(len(universe), size=k, replace=False)
        return cand.with_templates((universe[i] for i in picks), tag)


class DescriptionPool:
    """Element scope of a description phase group: (class, text-id) pairs."""

    def __init__(self, class_pools: dict[int, list[int]]):
        self.class_ids = sorted(class_pools)
        self._pools = {c: list(class_pools[c]) for c in self.class_ids}

    def elements(self):
        return [(c, t) for c in self.class_ids for t in self._pools[c]]

    def members(self, cand: CandidatePrompt):
        return [
            (c, t)
            for c in self.class_ids
            for t in self._pools[c]
            if t in cand.desc_ids[c]
        ]

    def removable(self, cand):
        # a class's description subset may empty out; its template texts remain
        return self.members(cand)

    def add(self, cand, element, tag):
        c, t = element
        return cand.with_class_descs(c, cand.desc_ids[c] | {t}, tag)

    def remove(self, cand, element, tag):
        c, t = element
        return cand.with_class_descs(c, cand.desc_ids[c] - {t}, tag)

    def replace(self, cand, incoming, outgoing, tag):
        added = self.add(cand, incoming, tag)
        c, t = outgoing
        return added.with_class_descs(c, added.desc_ids[c] - {t}, tag)

    def mutated(self, cand, rng, tag):
        out = cand
        for c in self.class_ids:
            current = cand.desc_ids[c]
            if not current:
                continue
            universe = list(self._pools[c])
            universe.extend(sorted(t for t in current if t not in self._pools[c]))
            picks = rng.choice(len(universe), size=len(current), replace=False)
            out = out.with_class_descs(c, (universe[i] for i in picks), tag)
        return out


def edit_generate(parent: CandidatePrompt, pool, m_steps: int, rng, tagger) -> list[CandidatePrompt]:
    """Up to three one-element edits of `parent` per step: add, delete, replace.

    Degenerate draws (empty library pool, unremovable element) skip that
    operation for the step. Candidates equal to the parent or to an earlier
    output are dropped.
    """
    out: list[CandidatePrompt] = []
    seen = {parent}

    def push(cand):
        if cand is not None and cand not in seen:
            seen.add(cand)
            out.append(cand)

    library = pool.elements()
    for _ in range(m_steps):
        if library:
            push(pool.add(parent, library[rng.integers(len(library))], next(tagger)))
        removable = pool.removable(parent)
        if removable:
            push(pool.remove(parent, removable[rng.integers(len(removable))], next(tagger)))
        members = pool.members(parent)
        if library and members:
            incoming = library[rng.integers(len(library))]
            outgoing = members[rng.integers(len(members))]
            push(pool.replace(parent, incoming, outgoing, next(tagger)))
    return out


def evolve_generate(population: "Population", pool, n_steps: int, rng, tagger) -> list[CandidatePrompt]:
    """Crossover (union of two sampled members) and size-preserving mutation."""
    candidates = population.candidates()
    if not candidates:
        raise EmptyPopulationError("cannot evolve an empty population")
    out: list[CandidatePrompt] = []
    seen = set(candidates)

    def push(cand):
        if cand not in seen:
            seen.add(cand)
            out.append(cand)

    for _ in range(n_steps):
        first = candidates[rng.integers(len(candidates))]
        second = candidates[rng.integers(len(candidates))]
        crossed = first.union(second, next(tagger))
        mutant = pool.mutated(crossed, rng, next(tagger))
        push(crossed)
        push(mutant)
    return out


@dataclass(frozen=True)
class Population:
    """Top-k scored candidates, best first; ties resolved by age."""

    members: tuple[tuple[CandidatePrompt, ScoreBreakdown], ...]

    @staticmethod
    def from_scored(pairs, k: int) -> "Population":
        ordered = sorted(pairs, key=lambda p: (-p[1].fitness, p[0].generation_tag))
        kept, seen = [], set()
        for cand, score in ordered:
            if cand not in seen:
                seen.add(cand)
                kept.append((cand, score))
            if len(kept) == k:
                break
        return Population(members=tuple(kept))

    def merged(self, new_pairs, k: int) -> "Population":
        return Population.from_scored(list(self.members) + list(new_pairs), k)

    def candidates(self):
        return [cand for cand, _ in self.members]

    @property
    def best(self):
        return self.members[0]

    @property
    def best_fitness(self) -> float:
        return self.members[0][1].fitness

    def __len__(self):
        return len(self.members)

    def __contains__(self, candidate):
        return any(cand == candidate for cand, _ in self.members)


def serial_batch(score_fn):
    """Wrap a single-candidate scorer into the batch interface apo_loop uses."""

    def run(cands):
        return [score_fn(c) for c in cands]

    return run


def apo_loop(
    evaluate_batch,
    population: Population,
    pool,
    cfg: SearchConfig,
    rng=None,
    tagger=None,
    on_update=None,
) -> Population:
    """Run T iterations of generate / score / retain-top-k.

    Each iteration edit-generates from every member, scores and merges, then
    evolution-generates from the updated population, scores and merges.
    `on_update(iteration, step, population, evaluations)` observes both
    per-iteration update points.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if tagger is None:
        tagger = itertools.count(1)
    u = population
    for t in range(cfg.T):
        generated: list[CandidatePrompt] = []
        seen = set(u.candidates())
        for parent in u.candidates():
            for cand in edit_generate(parent, pool, cfg.M, rng, tagger):
                if cand not in seen:
                    seen.add(cand)
                    generated.append(cand)
        scored = list(zip(generated, evaluate_batch(generated)))
        u = u.merged(scored, cfg.k)
        if on_update is not None:
            on_update(t, "edit", u, len(scored))

        evolved = evolve_generate(u, pool, cfg.N, rng, tagger)
        scored = list(zip(evolved, evaluate_batch(evolved)))
        u = u.merged(scored, cfg.k)
        if on_update is not None:
            on_update(t, "evolve", u, len(scored))
    return u
