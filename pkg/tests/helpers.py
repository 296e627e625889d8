"""Shared test fixtures: crafted stores, synth worlds, two-phase splitting."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from promptevo.bundle import KIND_IMAGE, EmbeddingStore, TextMeta, save_bundle
from promptevo.library import read_manifest, save_library
from promptevo.scoring import CandidatePrompt
from promptevo.synth import SynthSpec, synth_benchmark


def unit_rows(matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def store_from_parts(images, labels, texts, classes, kinds=None):
    """Build a full store from raw (unnormalized) vectors.

    `kinds[i]` is (kind, class_id, template_id); defaults to one description
    per class in order.
    """
    texts = unit_rows(texts)
    if kinds is None:
        kinds = [("description", i % classes, None) for i in range(len(texts))]
    meta = tuple(
        TextMeta(kind=k, class_id=c, template_id=t, source_text=f"text {i}")
        for i, (k, c, t) in enumerate(kinds)
    )
    return EmbeddingStore(
        dim=texts.shape[1],
        n_classes=classes,
        image_matrix=unit_rows(images).astype(np.float32),
        image_labels=np.asarray(labels),
        text_matrix=texts.astype(np.float32),
        text_meta=meta,
    )


def random_instance(rng, max_classes=5, max_images=8, max_texts=6):
    """A random scoring instance: store plus per-class text-id sets."""
    n_classes = int(rng.integers(1, max_classes + 1))
    n_img = int(rng.integers(1, max_images + 1))
    dim = int(rng.integers(3, 12))
    per_class = [int(rng.integers(1, max_texts + 1)) for _ in range(n_classes)]
    n_txt = sum(per_class)
    images = rng.standard_normal((n_img, dim))
    texts = rng.standard_normal((n_txt, dim))
    labels = rng.integers(0, n_classes, size=n_img)
    kinds = []
    for c, k in enumerate(per_class):
        kinds.extend([("description", c, None)] * k)
    store = store_from_parts(images, labels, texts, n_classes, kinds)
    d_sets, start = [], 0
    for k in per_class:
        d_sets.append(tuple(range(start, start + k)))
        start += k
    return store, d_sets


def brute_force_scores(store, d_sets):
    """Scalar-loop re-implementation of mean-cosine class scores."""
    n_img, n_classes = store.n_images, len(d_sets)
    out = [[0.0] * n_classes for _ in range(n_img)]
    for i in range(n_img):
        for c in range(n_classes):
            if not d_sets[c]:
                continue
            total = 0.0
            for d in d_sets[c]:
                dot = 0.0
                for k in range(store.dim):
                    dot += float(store.image_matrix[i, k]) * float(store.text_matrix[d, k])
                total += dot
            out[i][c] = total / len(d_sets[c])
    return np.asarray(out)


def brute_force_breakdown(store, d_sets, alpha, tau):
    """Scalar-loop accuracy / mean true log-softmax / fitness."""
    import math

    scores = brute_force_scores(store, d_sets)
    n = store.n_images
    correct = 0
    total_lp = 0.0
    for i in range(n):
        row = [tau * s for s in scores[i]]
        best = 0
        for c in range(1, len(row)):
            if row[c] > row[best]:
                best = c
        y = int(store.image_labels[i])
        if best == y:
            correct += 1
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total_lp += row[y] - lse
    acc = correct / n
    mean_lp = total_lp / n
    return acc, mean_lp, acc + alpha * mean_lp


def synth_world(**kwargs):
    spec = SynthSpec(**kwargs)
    return synth_benchmark(spec)


def write_synth_dataset(out: Path, **kwargs):
    """Persist a synth world the way `promptevo synth` does."""
    out.mkdir(parents=True, exist_ok=True)
    train, test, lib, key = synth_world(**kwargs)
    save_bundle(train, out / "train.bundle", kind=KIND_IMAGE)
    save_bundle(test, out / "test.bundle", kind=KIND_IMAGE)
    save_bundle(train, out / "texts.bundle", kind=1)
    save_library(lib, out / "library.json")
    (out / "answer_key.json").write_text(
        json.dumps({str(c): ids for c, ids in key.items()})
    )
    return train, test, lib, key


def base_config(data: Path, outdir: str, seed: int = 0, **overrides) -> dict:
    config = {
        "train_bundle": str(data / "train.bundle"),
        "text_bundle": str(data / "texts.bundle"),
        "library": str(data / "library.json"),
        "output_dir": outdir,
        "search": {"T": 3, "M": 4, "N": 4, "k": 4},
        "alpha": 1e3,
        "tau": 20.0,
        "sampling": {"T_sample": 16, "n_wst": 2, "n_sln": 2},
        "seed": seed,
    }
    config.update(overrides)
    return config


def write_config(path: Path, config: dict) -> Path:
    path.write_text(json.dumps(config))
    return path


def split_two_phase(train_store, lib, data: Path):
    """Write template and description bundles for a two-phase run."""
    m_t = lib.instantiate_manifest(include_descriptions=False)
    m_d = lib.instantiate_manifest(None, include_templates=False)
    n_t = len(m_t.entries)

    def block(lo, hi, fingerprint):
        return EmbeddingStore(
            dim=train_store.dim,
            n_classes=train_store.n_classes,
            text_matrix=train_store.text_matrix[lo:hi].copy(),
            text_meta=train_store.text_meta[lo:hi],
            text_fingerprint=fingerprint,
        )

    save_bundle(block(0, n_t, m_t.fingerprint), data / "templates.bundle")
    return block(n_t, train_store.n_texts, m_d.fingerprint)


def fulfill_manifest(manifest_path: Path, source_store, bundle_path: Path):
    """Encode a manifest by copying matching rows from a reference store."""
    manifest = read_manifest(manifest_path)
    index = {(m.class_id, m.source_text): i for i, m in enumerate(source_store.text_meta)}
    rows = np.stack(
        [source_store.text_matrix[index[(e.class_id, e.full_text)]] for e in manifest.entries]
    )
    meta = tuple(
        source_store.text_meta[index[(e.class_id, e.full_text)]] for e in manifest.entries
    )
    save_bundle(
        EmbeddingStore(
            dim=source_store.dim,
            n_classes=source_store.n_classes,
            text_matrix=rows,
            text_meta=meta,
            text_fingerprint=manifest.fingerprint,
        ),
        bundle_path,
    )


def element_set(candidate: CandidatePrompt):
    """Candidate as a flat element set, for edit-distance checks."""
    elems = {("template", t) for t in candidate.template_ids}
    for c, ids in enumerate(candidate.desc_ids):
        elems.update((c, d) for d in ids)
    return elems


def edit_distance(a: CandidatePrompt, b: CandidatePrompt) -> tuple[int, int]:
    ea, eb = element_set(a), element_set(b)
    return len(eb - ea), len(ea - eb)
