"""Acceptance suite: one test per primary criterion, at stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion. Synthetic-world checks use tau values matched to the synthetic
embedding geometry (its cosine spreads are several times wider than a real
encoder's, so the temperature that reproduces comparable softmax sharpness
is correspondingly lower); tau stays configurable and defaults to 100.
"""
import itertools
import json
import math
import time

import numpy as np
import pytest

from promptevo import driver
from promptevo.bundle import load_bundle, save_bundle
from promptevo.errors import ManifestPendingError
from promptevo.library import save_library
from promptevo.scoring import (
    CandidatePrompt,
    Scorer,
    apply_delta,
    class_scores,
    fitness,
    make_cache,
    pcc,
)
from promptevo.search import (
    DescriptionPool,
    Population,
    SearchConfig,
    TemplatePool,
    apo_loop,
    edit_generate,
    serial_batch,
)
from promptevo.synth import SynthSpec, planted_recall, synth_benchmark
from helpers import (
    base_config,
    brute_force_breakdown,
    brute_force_scores,
    edit_distance,
    fulfill_manifest,
    random_instance,
    split_two_phase,
    store_from_parts,
    write_config,
    write_synth_dataset,
)


def report(name: str, detail: str):
    print(f"[PASS] {name} — {detail}")


# ---------------------------------------------------------------- criterion 1

def test_scoring_oracle_equivalence():
    """class_scores/predict/accuracy/fitness match a scalar brute-force
    re-implementation within 1e-9 on 50 random instances, in under 5 s."""
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    max_err = 0.0
    for _ in range(50):
        store, d_sets = random_instance(rng, max_classes=5, max_images=8, max_texts=6)
        alpha = float(rng.uniform(0, 2000))
        tau = float(rng.uniform(5, 120))
        fast_scores = class_scores(store, d_sets)
        slow_scores = brute_force_scores(store, d_sets)
        max_err = max(max_err, float(np.abs(fast_scores - slow_scores).max()))
        got = fitness(store, d_sets, alpha, tau)
        acc, mean_lp, fit = brute_force_breakdown(store, d_sets, alpha, tau)
        assert got.accuracy == acc, "accuracy must match exactly"
        assert abs(got.mean_true_logprob - mean_lp) <= 1e-9
        assert abs(got.fitness - fit) <= 1e-9
        max_err = max(max_err, abs(got.fitness - fit))
    elapsed = time.perf_counter() - started
    assert max_err <= 1e-9
    assert elapsed < 5.0
    report("scoring-oracle-equivalence",
           f"50 instances, max abs err {max_err:.2e}, {elapsed:.2f}s")


# ---------------------------------------------------------------- criterion 2

def test_cache_coherence():
    """200 random apply_delta sequences agree with fresh class_scores
    within 1e-9."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        store, d_sets = random_instance(rng)
        cache = make_cache(store, d_sets)
        current = [set(ids) for ids in d_sets]
        for _ in range(int(rng.integers(1, 10))):
            c = int(rng.integers(len(current)))
            pool = list(range(store.n_texts))
            n_add = min(int(rng.integers(0, 3)), len(pool))
            add = set(rng.choice(pool, size=n_add, replace=False).tolist())
            remove = set()
            removable = sorted(current[c] - add)
            if removable and rng.random() < 0.6:
                remove = {removable[int(rng.integers(len(removable)))]}
            cache = apply_delta(cache, c, add_ids=add, remove_ids=remove)
            current[c] = (current[c] - remove) | add
        fresh = class_scores(store, [tuple(sorted(s)) for s in current])
        worst = max(worst, float(np.abs(cache.scores() - fresh).max()))
    assert worst <= 1e-9
    report("cache-coherence", f"200 delta sequences, max abs err {worst:.2e}")


# ---------------------------------------------------------------- criterion 3

MONO_WORLD = dict(n_classes=5, n_img_train=40, n_img_test=40, dim=24, n_templates=3,
                  n_desc_per_class=6, n_planted_per_class=2, noise_sigma=0.25)


def test_monotonicity(tmp_path):
    """Across 20 seeded full runs, every per-iteration best-fitness sequence
    is non-decreasing and fitness(P*) >= fitness(init) >= fitness(P_t*)."""
    violations = 0
    for seed in range(20):
        data = tmp_path / f"data{seed}"
        write_synth_dataset(data, seed=seed, **MONO_WORLD)
        config = base_config(data, str(tmp_path / f"run{seed}"), seed=seed)
        result = driver.run_from_file(write_config(tmp_path / f"c{seed}.json", config))
        fits = [r.best_fitness for r in result.trace]
        if any(b < a for a, b in zip(fits, fits[1:])):
            violations += 1
        template_best = [r for r in result.trace if r.phase == "template"][-1].best_fitness
        init_fit = [r for r in result.trace if r.phase == "sampling"][0].best_fitness
        final = result.best_score.fitness
        if not (final >= init_fit >= template_best):
            violations += 1
    assert violations == 0
    report("monotonicity", "20 seeded runs, zero violations")


# ---------------------------------------------------------------- criterion 4

def test_exhaustive_oracle_optimality():
    """On template spaces with <= 7 reachable subsets, apo_loop (T=6, M=3,
    N=3, k=4) attains the enumerated global optimum in >= 95 of 100 seeds."""
    hits = 0
    for seed in range(100):
        train, _, lib, _ = synth_benchmark(SynthSpec(
            n_classes=2, n_img_train=16, n_img_test=16, dim=8, n_templates=3,
            n_desc_per_class=2, n_planted_per_class=1, noise_sigma=0.3, seed=seed,
        ))
        scorer = Scorer(train, lib, alpha=1e3, tau=20.0)
        optimum = max(
            scorer.score(CandidatePrompt.initial(list(subset), 2)).fitness
            for r in range(1, 4)
            for subset in itertools.combinations(range(3), r)
        )
        seed_cand = CandidatePrompt.initial([0], 2)
        population = Population.from_scored([(seed_cand, scorer.score(seed_cand))], k=4)
        out = apo_loop(
            serial_batch(scorer.score), population, TemplatePool(lib.template_pool()),
            SearchConfig(T=6, M=3, N=3, k=4), np.random.default_rng(seed),
        )
        if out.best_fitness >= optimum - 1e-12:
            hits += 1
    assert hits >= 95
    report("exhaustive-oracle-optimality", f"{hits}/100 seeds reached the enumerated optimum")


# ---------------------------------------------------------------- criterion 5

RECOVERY_SPEC = dict(n_classes=10, n_img_train=200, n_img_test=200, dim=64,
                     n_templates=8, n_desc_per_class=20, n_planted_per_class=4,
                     noise_sigma=0.3)
# T=4, M=N=8, alpha=1e3, T_sample=32 are the published defaults; the group
# counts mirror the published 10-class dataset setting (n_wst = n_sln = 3);
# tau follows the synthetic-geometry scaling noted in the module docstring.
RECOVERY_CONFIG = dict(
    search={"T": 4, "M": 8, "N": 8, "k": 4}, alpha=1e3, tau=20.0,
    sampling={"T_sample": 32, "K_max": 5, "n_wst": 3, "n_sln": 3},
)


def test_planted_recovery(tmp_path):
    """Mean test accuracy over 5 seeds beats the random-K-subset baseline by
    >= 10 points and mean planted recall >= 0.6, each run < 60 s."""
    recalls, optimized, baseline = [], [], []
    for seed in range(5):
        data = tmp_path / f"data{seed}"
        write_synth_dataset(data, seed=seed, **RECOVERY_SPEC)
        config = base_config(data, str(tmp_path / f"run{seed}"), seed=seed, **RECOVERY_CONFIG)
        started = time.perf_counter()
        result = driver.run_from_file(write_config(tmp_path / f"c{seed}.json", config))
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"run took {elapsed:.1f}s"

        train, test, lib, key = synth_benchmark(SynthSpec(seed=seed, **RECOVERY_SPEC))
        recalls.append(planted_recall(result.best_candidate, key))
        test_scorer = Scorer(test, lib, alpha=0.0, tau=20.0)
        optimized.append(test_scorer.score(result.best_candidate).accuracy)
        rng = np.random.default_rng(10_000 + seed)
        random_subsets = tuple(
            frozenset(rng.choice(lib.desc_pool(c), size=5, replace=False).tolist())
            for c in range(10)
        )
        baseline.append(
            test_scorer.score(CandidatePrompt(frozenset([0]), random_subsets)).accuracy
        )
    gap = float(np.mean(optimized) - np.mean(baseline))
    recall = float(np.mean(recalls))
    assert gap >= 0.10, f"gap {gap:.3f}"
    assert recall >= 0.6, f"recall {recall:.3f}"
    report("planted-recovery",
           f"test acc {np.mean(optimized):.3f} vs baseline {np.mean(baseline):.3f} "
           f"(gap {gap * 100:.1f} pts), recall {recall:.2f}")


# ---------------------------------------------------------------- criterion 6

def test_operator_laws():
    """1000 seeded draws per law: edit distance exactly 1, mutation
    cardinality preserved, crossover idempotent and commutative."""
    rng = np.random.default_rng(99)
    tagger = itertools.count(1)

    # edit locality, template phase and description phase alternating
    template_pool = TemplatePool(range(12))
    desc_pool = DescriptionPool({0: list(range(100, 108)), 1: list(range(200, 206))})
    checked = 0
    while checked < 1000:
        if rng.random() < 0.5:
            size = int(rng.integers(1, 5))
            parent = CandidatePrompt.initial(
                rng.choice(12, size=size, replace=False).tolist(), 2)
            pool = template_pool
        else:
            parent = CandidatePrompt(
                frozenset([0]),
                (frozenset(rng.choice(list(range(100, 108)),
                                      size=int(rng.integers(0, 4)), replace=False).tolist()),
                 frozenset(rng.choice(list(range(200, 206)),
                                      size=int(rng.integers(0, 4)), replace=False).tolist())),
            )
            pool = desc_pool
        for child in edit_generate(parent, pool, 2, rng, tagger):
            added, removed = edit_distance(child, parent)
            assert (added, removed) in ((1, 0), (0, 1), (1, 1)), (added, removed)
            checked += 1

    # mutation cardinality
    for _ in range(1000):
        size = int(rng.integers(1, 6))
        cand = CandidatePrompt.initial(rng.choice(12, size=size, replace=False).tolist(), 2)
        mutant = template_pool.mutated(cand, rng, next(tagger))
        assert len(mutant.template_ids) == size
        assert mutant.template_ids <= set(range(12)) | cand.template_ids

    # crossover laws
    for _ in range(1000):
        def rand_cand():
            t = rng.choice(12, size=int(rng.integers(1, 4)), replace=False).tolist()
            d0 = rng.choice(list(range(100, 108)), size=int(rng.integers(0, 3)), replace=False).tolist()
            d1 = rng.choice(list(range(200, 206)), size=int(rng.integers(0, 3)), replace=False).tolist()
            return CandidatePrompt(frozenset(t), (frozenset(d0), frozenset(d1)))

        a, b = rand_cand(), rand_cand()
        assert a.union(a, 0) == a
        assert a.union(b, 0) == b.union(a, 0)
        assert a.union(b, 0).template_ids == a.template_ids | b.template_ids
    report("operator-laws", "1000 draws per law, zero violations")


# ---------------------------------------------------------------- criterion 7

def margin_pair_store(base, margin, n_classes, dim):
    """One image, `n_classes` texts: the true class at cosine `base`, the
    strongest distractor at `base - margin`, the rest lower."""
    texts = []
    for c in range(n_classes):
        cos = base if c == 0 else base - margin - 0.05 * (c - 1)
        spread = math.sqrt(max(1 - cos * cos, 1e-9))
        row = [0.0] * dim
        row[0] = cos
        row[1 + c] = spread
        texts.append(row)
    return store_from_parts([[1.0] + [0.0] * (dim - 1)], [0], texts, n_classes)


def test_entropy_constraint_ordering(tmp_path):
    """Wider true-class margins strictly raise fitness at equal accuracy
    (100/100 constructed cases), and on the 1-shot synthetic config the
    train-fitness/test-accuracy PCC at alpha=1e3 beats alpha=0 in a
    majority of 5 seeds."""
    rng = np.random.default_rng(5)
    for case in range(100):
        n_classes = int(rng.integers(2, 5))
        dim = n_classes + 2
        base = float(rng.uniform(0.3, 0.7))
        wide = float(rng.uniform(0.1, 0.28))
        narrow = float(rng.uniform(0.01, wide - 0.005))
        alpha = float(10 ** rng.uniform(-2, 4))
        d_sets = [(c,) for c in range(n_classes)]
        hi = fitness(margin_pair_store(base, wide, n_classes, dim), d_sets, alpha, tau=100.0)
        lo = fitness(margin_pair_store(base, narrow, n_classes, dim), d_sets, alpha, tau=100.0)
        assert hi.accuracy == lo.accuracy == 1.0
        assert hi.fitness > lo.fitness, f"case {case}"

    # qualitative overfitting check on the 1-shot world
    one_shot = dict(n_classes=10, n_img_train=10, n_img_test=200, dim=64,
                    n_templates=8, n_desc_per_class=20, n_planted_per_class=4,
                    noise_sigma=0.1)
    wins = 0
    for seed in range(5):
        data = tmp_path / f"data{seed}"
        write_synth_dataset(data, seed=seed, **one_shot)
        _, test, lib, _ = synth_benchmark(SynthSpec(seed=seed, **one_shot))
        test_sims = test.image_matrix.astype(np.float64) @ test.text_matrix.astype(np.float64).T
        labels = np.asarray(test.image_labels)
        pccs = {}
        for alpha in (1e3, 0.0):
            out = tmp_path / f"run{seed}_{alpha}"
            config = base_config(
                data, str(out), seed=seed,
                search={"T": 4, "M": 8, "N": 8, "k": 4}, alpha=alpha, tau=40.0,
                sampling={"T_sample": 32, "K_max": 5, "n_wst": 3, "n_sln": 3},
                log_candidates=True,
            )
            driver.run_from_file(write_config(tmp_path / f"c{seed}_{alpha}.json", config))
            fits, accs = [], []
            for line in (out / "candidates.jsonl").read_text().splitlines():
                entry = json.loads(line)
                scores = np.stack([
                    test_sims[:, ids].mean(axis=1) if ids else np.zeros(len(labels))
                    for ids in entry["d_sets"]
                ], axis=1)
                accs.append(float(np.mean(np.argmax(scores, axis=1) == labels)))
                fits.append(entry["fitness"])
            pccs[alpha] = pcc(fits, accs)
        wins += pccs[1e3] >= pccs[0.0]
    assert wins >= 3, f"alpha=1e3 PCC won only {wins}/5 seeds"
    report("entropy-constraint-ordering",
           f"100/100 margin pairs ordered; PCC wins {wins}/5 seeds")


# ---------------------------------------------------------------- criterion 8

def test_determinism_and_persistence(tmp_path):
    """Identical seeds give byte-identical result digests; bundles round-trip
    bit-exactly; a two-phase stop/resume equals the single-phase run."""
    data = tmp_path / "data"
    train, test, lib, _ = write_synth_dataset(data, seed=6, **MONO_WORLD)

    # identical seeds -> identical digests
    r1 = driver.run_from_file(write_config(
        tmp_path / "c1.json", base_config(data, str(tmp_path / "o1"), seed=21)))
    r2 = driver.run_from_file(write_config(
        tmp_path / "c2.json", base_config(data, str(tmp_path / "o2"), seed=21)))
    d1 = json.loads((tmp_path / "o1" / "result.json").read_text())["best"]["digest"]
    d2 = json.loads((tmp_path / "o2" / "result.json").read_text())["best"]["digest"]
    assert d1 == d2 == r1.best_digest == r2.best_digest

    # bundle round trip, bit-exact
    reloaded = load_bundle(data / "train.bundle")
    assert reloaded.image_matrix.tobytes() == train.image_matrix.tobytes()
    again = tmp_path / "again.bundle"
    save_bundle(reloaded, again, kind=0)
    assert again.read_bytes() == (data / "train.bundle").read_bytes()

    # two-phase stop/resume == single-phase
    tp = tmp_path / "tp"
    tp.mkdir()
    save_bundle(train, tp / "train.bundle", kind=0)
    desc_store = split_two_phase(train, lib, tp)
    save_library(lib, tp / "library.json")
    overrides = dict(
        text_bundle=str(tp / "templates.bundle"),
        description_bundle=str(tp / "descs.bundle"),
        mode="two_phase", integration="standalone",
    )
    save_bundle(desc_store, tp / "descs.bundle")
    straight = driver.run_from_file(write_config(
        tmp_path / "cs.json", base_config(tp, str(tmp_path / "straight"), seed=4,
                                          train_bundle=str(tp / "train.bundle"),
                                          library=str(tp / "library.json"), **overrides)))
    (tp / "descs.bundle").unlink()
    (tp / "descs.bundle.meta.json").unlink()
    resume_cfg = write_config(
        tmp_path / "ct.json", base_config(tp, str(tmp_path / "resumed"), seed=4,
                                          train_bundle=str(tp / "train.bundle"),
                                          library=str(tp / "library.json"), **overrides))
    with pytest.raises(ManifestPendingError):
        driver.run_from_file(resume_cfg)
    fulfill_manifest(tmp_path / "resumed" / "manifest.json", train, tp / "descs.bundle")
    resumed = driver.run_from_file(resume_cfg)
    assert resumed.best_digest == straight.best_digest
    assert resumed.best_score == straight.best_score
    assert [r.as_dict() for r in resumed.trace] == [r.as_dict() for r in straight.trace]
    report("determinism-and-persistence",
           "digests equal, bundles bit-exact, stop/resume == single-phase")
