"""Evolutionary optimization of classification prompt ensembles.

Vision-language classifiers score an image against per-class text
embeddings; this package searches the discrete space of template sets and
per-class description subsets for the ensemble that maximizes a
confidence-regularized accuracy on a small labeled set, entirely over
precomputed embedding bundles.
"""

from .bundle import EmbeddingStore, TextMeta, load_bundle, save_bundle
from .errors import PromptEvoError
from .estimator import PromptEnsembleClassifier
from .library import (
    EncodeManifest,
    PromptLibrary,
    augment_templates,
    load_library,
    read_manifest,
    save_library,
    write_manifest,
)
from .sampling import GroupPlan, SamplingConfig, group_sample, prompt_sample_init
from .scoring import (
    CandidatePrompt,
    ScoreBreakdown,
    Scorer,
    apply_delta,
    class_scores,
    fitness,
    make_cache,
    pcc,
    predict,
)
from .search import (
    DescriptionPool,
    Population,
    SearchConfig,
    TemplatePool,
    apo_loop,
    edit_generate,
    evolve_generate,
)
from .synth import SynthSpec, planted_candidate, planted_recall, synth_benchmark

__version__ = "0.1.0"

__all__ = [
    "CandidatePrompt",
    "DescriptionPool",
    "EmbeddingStore",
    "EncodeManifest",
    "GroupPlan",
    "Population",
    "PromptEnsembleClassifier",
    "PromptEvoError",
    "PromptLibrary",
    "SamplingConfig",
    "ScoreBreakdown",
    "Scorer",
    "SearchConfig",
    "SynthSpec",
    "TemplatePool",
    "TextMeta",
    "apo_loop",
    "apply_delta",
    "augment_templates",
    "class_scores",
    "edit_generate",
    "evolve_generate",
    "fitness",
    "group_sample",
    "load_bundle",
    "load_library",
    "make_cache",
    "pcc",
    "planted_candidate",
    "planted_recall",
    "predict",
    "prompt_sample_init",
    "read_manifest",
    "save_bundle",
    "save_library",
    "synth_benchmark",
    "write_manifest",
]
