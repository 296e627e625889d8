"""Synthetic planted benchmark: embedding worlds with a known optimum.

Each class owns an orthonormal direction. Images are noisy copies of their
class direction. A few "planted" descriptions per class point almost
exactly at that direction; the remaining descriptions are confusers aimed
at a mixture of two other class directions, so including them actively
hurts. Template instances mix a class signal of template-dependent
strength with a context direction near the dataset mean. The planted
description subset is therefore the known-optimal selection, and at zero
noise it classifies every image correctly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import EmbeddingStore, TextMeta
from .errors import SpecInvalidError
from .library import PromptLibrary
from .scoring import CandidatePrompt

_BASE_TEMPLATE = "a photo of a {}."
_EXTRA_TEMPLATES = [
    "an image of a {}.",
    "a blurry photo of a {}.",
    "a close-up photo of a {}.",
    "a rendering of a {}.",
    "a cropped photo of a {}.",
    "a bright photo of a {}.",
    "a drawing of a {}.",
]

PLANTED_ALIGNMENT = 0.95  # guarantees cos(description, class direction) >= 0.9
TEXT_CONE = 0.2           # mean-direction component shared by all description texts
CONTEXT_NOISE = 0.12      # spread of template context around the dataset mean
INSTANCE_JITTER = 0.02    # per-(template, class) instance perturbation
SIGNAL_RANGE = (0.08, 0.25)  # class-signal strength of template instances


@dataclass(frozen=True)
class SynthSpec:
    """Shape and difficulty of a synthetic benchmark."""

    n_classes: int = 10
    n_img_train: int = 200
    n_img_test: int = 200
    dim: int = 64
    n_templates: int = 8
    n_desc_per_class: int = 20
    n_planted_per_class: int = 4
    noise_sigma: float = 0.3
    seed: int = 0

    def validate(self) -> None:
        positive = {
            "n_classes": self.n_classes,
            "n_img_train": self.n_img_train,
            "n_img_test": self.n_img_test,
            "dim": self.dim,
            "n_templates": self.n_templates,
            "n_desc_per_class": self.n_desc_per_class,
        }
        for name, value in positive.items():
            if value <= 0:
                raise SpecInvalidError(f"{name} must be positive, got {value}")
        if self.n_planted_per_class < 0:
            raise SpecInvalidError("n_planted_per_class must be >= 0")
        if self.n_planted_per_class > self.n_desc_per_class:
            raise SpecInvalidError("n_planted_per_class exceeds n_desc_per_class")
        if self.dim < self.n_classes:
            raise SpecInvalidError("dim must be >= n_classes for orthonormal class directions")
        if self.noise_sigma < 0:
            raise SpecInvalidError("noise_sigma must be >= 0")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _noisy_unit(direction: np.ndarray, sigma: float, rng) -> np.ndarray:
    if sigma == 0.0:
        return direction.copy()
    return _unit(direction + sigma * rng.standard_normal(direction.shape[0]))


def synth_benchmark(spec: SynthSpec):
    """Build (train, test, bound library, answer key) for a spec.

    Deterministic in the seed. The answer key maps each class id to the
    text ids of its planted descriptions; selecting exactly those ids is
    the intended optimum, with train and test accuracy 1.0 at sigma 0.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    c, dim = spec.n_classes, spec.dim
    class_dirs = np.eye(dim, dtype=np.float64)[:c]
    mean_dir = _unit(class_dirs.sum(axis=0))

    templates = [_BASE_TEMPLATE] + _EXTRA_TEMPLATES[: spec.n_templates - 1]
    while len(templates) < spec.n_templates:
        templates.append(f"a photo variant {len(templates)} of a {{}}.")
    lib = PromptLibrary(
        templates=templates,
        class_names=[f"class_{i}" for i in range(c)],
        descriptions=[
            [f"class_{i} shows trait {d}." for d in range(spec.n_desc_per_class)]
            for i in range(c)
        ],
    )

    # Template context directions sit near the dataset mean with noise small
    # enough that every class-dim component stays positive, mirroring the
    # all-positive similarity profiles of real encoders. The class-signal
    # strength varies per template, so some templates separate better.
    context = np.array(
        [_unit(mean_dir + CONTEXT_NOISE * rng.standard_normal(dim)) for _ in templates]
    )
    signal = rng.uniform(*SIGNAL_RANGE, size=len(templates))
    instances = np.empty((len(templates), c, dim), dtype=np.float64)
    for t in range(len(templates)):
        for ci in range(c):
            instances[t, ci] = _unit(
                signal[t] * class_dirs[ci]
                + (1 - signal[t]) * context[t]
                + INSTANCE_JITTER * rng.standard_normal(dim)
            )

    planted_idx = [
        np.sort(rng.choice(spec.n_desc_per_class, size=spec.n_planted_per_class, replace=False))
        for _ in range(c)
    ]
    # Like all encoded texts, descriptions share a small component along the
    # dataset mean (the text cone); their dominant component is the class
    # direction for planted descriptions and a two-class mixture for
    # confusers. Planted cosine with the class direction stays >= 0.9.
    desc_dirs = np.empty((c, spec.n_desc_per_class, dim), dtype=np.float64)
    for ci in range(c):
        planted = set(int(i) for i in planted_idx[ci])
        for d in range(spec.n_desc_per_class):
            jitter = _unit(rng.standard_normal(dim))
            if d in planted:
                base = class_dirs[ci]
            else:
                others = [o for o in range(c) if o != ci]
                if len(others) >= 2:
                    pair = rng.choice(len(others), size=2, replace=False)
                    base = _unit(class_dirs[others[pair[0]]] + class_dirs[others[pair[1]]])
                elif others:
                    base = class_dirs[others[0]]
                else:
                    base = jitter
            pointed = _unit(PLANTED_ALIGNMENT * base + (1 - PLANTED_ALIGNMENT) * jitter)
            desc_dirs[ci, d] = _unit((1 - TEXT_CONE) * pointed + TEXT_CONE * mean_dir)

    manifest = lib.instantiate_manifest(integration_templates=None)
    rows = np.empty((len(manifest.entries), dim), dtype=np.float64)
    meta = []
    for e in manifest.entries:
        if e.kind == "template_instance":
            rows[e.manifest_id] = instances[e.template_id, e.class_id]
        else:
            rows[e.manifest_id] = desc_dirs[e.class_id, e.description_id]
        meta.append(
            TextMeta(
                kind=e.kind,
                class_id=e.class_id,
                template_id=e.template_id,
                source_text=e.full_text,
            )
        )

    text_side = EmbeddingStore(
        dim=dim,
        n_classes=c,
        text_matrix=rows.astype(np.float32),
        text_meta=tuple(meta),
        text_fingerprint=manifest.fingerprint,
    )
    lib.bind_embeddings(manifest, text_side)

    def image_split(n_img: int) -> EmbeddingStore:
        labels = np.arange(n_img) % c
        imgs = np.stack(
            [_noisy_unit(class_dirs[y], spec.noise_sigma, rng) for y in labels]
        )
        return EmbeddingStore(
            dim=dim,
            n_classes=c,
            image_matrix=imgs.astype(np.float32),
            image_labels=labels,
        ).with_texts(text_side)

    train = image_split(spec.n_img_train)
    test = image_split(spec.n_img_test)

    answer_key = {}
    for ci in range(c):
        ids = [lib.desc_pool(ci)[int(d)] for d in planted_idx[ci]]
        answer_key[ci] = sorted(ids)
    return train, test, lib, answer_key


def planted_candidate(lib: PromptLibrary, answer_key: dict, template_ids=(0,), tag: int = 0) -> CandidatePrompt:
    """The known-optimal candidate: given templates plus the planted ids."""
    n = lib.n_classes
    return CandidatePrompt(
        template_ids=frozenset(template_ids),
        desc_ids=tuple(frozenset(answer_key.get(ci, ())) for ci in range(n)),
        generation_tag=tag,
    )


def planted_recall(candidate: CandidatePrompt, answer_key: dict) -> float:
    """Mean per-class fraction of planted descriptions the candidate selected."""
    fractions = []
    for ci, planted in answer_key.items():
        if planted:
            hit = len(set(planted) & candidate.desc_ids[ci])
            fractions.append(hit / len(planted))
    return float(np.mean(fractions)) if fractions else 1.0
