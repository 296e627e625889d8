"""End-to-end optimization runs: template phase, sampling, description phase.

A run loads embedding bundles and a prompt library, optimizes the shared
template set, picks a description-phase starting candidate by prompt
sampling, selects salient class groups, and optimizes each group's
descriptions in turn, carrying the population across groups. Runs persist
`result.json`, `prompt.json`, and `trace.csv`; two-phase runs stop after
the template phase when description embeddings are missing, writing the
encode manifest a bridge must fulfill before the run is resumed.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bundle import EmbeddingStore, load_bundle
from .errors import (
    ConfigError,
    ManifestPendingError,
    MissingInputError,
    NoTemplatesError,
)
from .library import PromptLibrary, load_library, write_manifest
from .sampling import GroupPlan, SamplingConfig, group_sample, prompt_sample_init
from .scoring import CandidatePrompt, ScoreBreakdown, Scorer
from .search import DescriptionPool, Population, SearchConfig, TemplatePool, apo_loop

DEFAULT_BASE_TEMPLATE = "a photo of a {}."

_CONFIG_KEYS = {
    "train_bundle", "text_bundle", "description_bundle", "library", "output_dir",
    "mode", "scope", "integration", "base_template", "include_synonyms",
    "search", "sampling", "alpha", "tau", "seed", "workers", "log_candidates",
}


@dataclass
class RunConfig:
    train_bundle: str
    text_bundle: str
    library: str
    output_dir: str
    description_bundle: str | None = None
    mode: str = "pre_integrated"
    scope: str = "full"
    integration: object = "standalone"  # "standalone" | "best" | [template ids]
    base_template: str = DEFAULT_BASE_TEMPLATE
    include_synonyms: bool = False
    search: SearchConfig = field(default_factory=SearchConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    seed: int = 0
    workers: int = 1
    log_candidates: bool = False

    def __post_init__(self):
        if self.mode not in ("pre_integrated", "two_phase"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        aliases = {"full_scope": "full", "group_scope": "group"}
        self.scope = aliases.get(self.scope, self.scope)
        if self.scope not in ("full", "group"):
            raise ConfigError(f"unknown scope {self.scope!r}")
        if self.mode == "two_phase" and not self.description_bundle:
            raise ConfigError("two_phase mode requires a description_bundle path")
        if self.mode == "pre_integrated" and self.integration == "best":
            raise ConfigError('integration "best" needs a two_phase run')
        if not (isinstance(self.integration, list) or self.integration in ("standalone", "best")):
            raise ConfigError(f"bad integration {self.integration!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @staticmethod
    def from_json(path) -> "RunConfig":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise MissingInputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        unknown = set(payload) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            search = SearchConfig(
                **{
                    **payload.get("search", {}),
                    "alpha": payload.get("alpha", payload.get("search", {}).get("alpha", 1e3)),
                    "tau": payload.get("tau", payload.get("search", {}).get("tau", 100.0)),
                    "seed": payload.get("seed", 0),
                }
            )
            sampling = SamplingConfig(
                **{**payload.get("sampling", {}), "seed": payload.get("seed", 0)}
            )
            kwargs = {
                k: v
                for k, v in payload.items()
                if k in _CONFIG_KEYS - {"search", "sampling", "alpha", "tau"}
            }
            config = RunConfig(search=search, sampling=sampling, **kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config {path}: {exc}") from exc
        # paths are relative to the config file
        base = path.parent
        for attr in ("train_bundle", "text_bundle", "description_bundle", "library", "output_dir"):
            value = getattr(config, attr)
            if value is not None:
                setattr(config, attr, str((base / value).resolve()))
        return config

    def snapshot(self) -> dict:
        snap = {
            k: getattr(self, k)
            for k in sorted(_CONFIG_KEYS - {"search", "sampling", "alpha", "tau"})
        }
        snap["search"] = asdict(self.search)
        snap["sampling"] = asdict(self.sampling)
        return snap

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.snapshot(), sort_keys=True).encode()
        ).hexdigest()


@dataclass(frozen=True)
class TraceRow:
    phase: str
    group: int
    iteration: int
    step: str
    best_fitness: float
    population: int
    evaluations: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    best_candidate: CandidatePrompt
    best_score: ScoreBreakdown
    best_digest: str
    trace: list[TraceRow]
    group_plan: GroupPlan | None
    config_snapshot: dict
    phase_completed: str  # "template" | "description"

    def as_dict(self) -> dict:
        return {
            "phase_completed": self.phase_completed,
            "best": {
                "digest": self.best_digest,
                "template_ids": sorted(self.best_candidate.template_ids),
                "n_descriptions": sum(len(s) for s in self.best_candidate.desc_ids),
                "score": self.best_score.as_dict(),
            },
            "trace": [row.as_dict() for row in self.trace],
            "group_plan": None if self.group_plan is None else self.group_plan.as_dict(),
            "config": self.config_snapshot,
        }


class _Evaluator:
    """Batch scorer with optional worker fan-out and candidate logging."""

    def __init__(self, scorer: Scorer, workers: int = 1, log: list | None = None):
        self.scorer = scorer
        self.workers = workers
        self.log = log
        self.count = 0

    def __call__(self, candidates):
        if self.workers > 1 and len(candidates) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                scores = list(pool.map(self.scorer.score, candidates))
        else:
            scores = [self.scorer.score(c) for c in candidates]
        self.count += len(candidates)
        if self.log is not None:
            for cand, score in zip(candidates, scores):
                self.log.append(
                    {
                        "digest": cand.digest(),
                        "fitness": score.fitness,
                        "accuracy": score.accuracy,
                        "d_sets": [list(ids) for ids in self.scorer.d_sets(cand)],
                    }
                )
        return scores


def candidate_texts(store: EmbeddingStore, d_sets) -> list[list[str]]:
    return [[store.text_meta[i].source_text for i in ids] for ids in d_sets]


def semantic_digest(store: EmbeddingStore, d_sets) -> str:
    """Digest of the candidate's selected texts; stable across id layouts."""
    payload = [sorted(texts) for texts in candidate_texts(store, d_sets)]
    return hashlib.sha256(json.dumps(payload, ensure_ascii=False).encode("utf-8")).hexdigest()


def resolve_base_template(library: PromptLibrary, base_template: str) -> int:
    if not library.templates:
        raise NoTemplatesError("the library has no templates")
    if base_template in library.templates:
        return library.templates.index(base_template)
    return 0


def optimize_templates(
    evaluator, library, cfg: SearchConfig, rng, trace, base_template=DEFAULT_BASE_TEMPLATE
):
    """Optimize the shared template set seeded with the base template."""
    seed_id = resolve_base_template(library, base_template)
    tagger = itertools.count(1)
    seed = CandidatePrompt.initial([seed_id], library.n_classes, tag=0)
    seed_score = evaluator([seed])[0]
    population = Population.from_scored([(seed, seed_score)], cfg.k)
    pool = TemplatePool(library.template_pool())

    def record(iteration, step, u, evals):
        trace.append(TraceRow("template", -1, iteration, step, u.best_fitness, len(u), evals))

    final = apo_loop(evaluator, population, pool, cfg, rng, tagger, on_update=record)
    return final.best


def build_desc_pools(library: PromptLibrary, p_t_star: CandidatePrompt, include_synonyms: bool):
    """Per-class selectable description ids; synonym instances ride the
    chosen template set unless synonyms are already folded into scoring."""
    template_filter = [] if include_synonyms else sorted(p_t_star.template_ids)
    return {
        c: library.desc_pool(c, template_filter=template_filter)
        for c in range(library.n_classes)
    }


def optimize_descriptions(
    evaluator,
    scorer: Scorer,
    desc_pools: dict,
    p_t_star: CandidatePrompt,
    p_t_score: ScoreBreakdown,
    plan: GroupPlan,
    cfg: SearchConfig,
    sampling_cfg: SamplingConfig,
    rng,
    trace,
    scope: str = "full",
):
    """Prompt-sample an init, then run one APO loop per group, carrying the
    population across groups. Returns the best candidate on the full store."""
    tagger = itertools.count(1)
    init, init_score, evals = prompt_sample_init(
        evaluator, p_t_star, p_t_score, desc_pools, sampling_cfg, rng, tagger
    )
    trace.append(TraceRow("sampling", -1, 0, "init", init_score.fitness, 1, evals))

    population = Population.from_scored([(init, init_score)], cfg.k)
    for g_index, group in enumerate(plan.groups):
        pool = DescriptionPool({c: desc_pools.get(c, []) for c in group.class_ids})
        group_eval = evaluator
        if scope == "group":
            targets = set(group.class_ids)
            for c in group.class_ids:
                targets.update(plan.misclass[c])
            rows = np.flatnonzero(np.isin(scorer.store.image_labels, sorted(targets)))
            group_eval = _Evaluator(scorer.restricted(rows), evaluator.workers, evaluator.log)
            rescored = group_eval(population.candidates())
            population = Population.from_scored(
                list(zip(population.candidates(), rescored)), cfg.k
            )

        def record(iteration, step, u, evals, _g=g_index):
            trace.append(TraceRow("description", _g, iteration, step, u.best_fitness, len(u), evals))

        population = apo_loop(group_eval, population, pool, cfg, rng, tagger, on_update=record)
        if scope == "group":
            evaluator.count += group_eval.count

    if scope == "group" and plan.groups:
        # group-scope fitness values are not comparable across groups; the
        # final selection is re-scored on the full store
        scores = evaluator(population.candidates())
        population = Population.from_scored(list(zip(population.candidates(), scores)), cfg.k)
    return population.best


def _resolve_integration(config: RunConfig, p_t_star: CandidatePrompt | None):
    if config.integration == "standalone":
        return None
    if config.integration == "best":
        return sorted(p_t_star.template_ids)
    return list(config.integration)


def require_path(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"{what} not found: {path}")
    return path


def _breakdown_from_dict(d: dict) -> ScoreBreakdown:
    return ScoreBreakdown(
        accuracy=d["accuracy"],
        mean_true_logprob=d["mean_true_logprob"],
        fitness=d["fitness"],
        n_samples=d["n_samples"],
    )


def run(config: RunConfig) -> RunResult:
    """Execute a full optimization run per the config; see module docstring."""
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    library = load_library(require_path(config.library, "library"))
    train_side = load_bundle(require_path(config.train_bundle, "train bundle"))
    if train_side.n_images == 0:
        raise MissingInputError(f"{config.train_bundle} holds no images")
    if train_side.n_classes != library.n_classes:
        raise MissingInputError(
            f"train bundle has {train_side.n_classes} classes, library {library.n_classes}"
        )
    text_side = load_bundle(require_path(config.text_bundle, "text bundle"))

    if config.mode == "pre_integrated":
        manifest = library.instantiate_manifest(_resolve_integration(config, None))
        library.bind_embeddings(manifest, text_side)
    else:
        manifest_t = library.instantiate_manifest(include_descriptions=False)
        library.bind_embeddings(manifest_t, text_side)

    streams = np.random.SeedSequence(config.seed).spawn(2)
    rng_templates = np.random.default_rng(streams[0])
    rng_descriptions = np.random.default_rng(streams[1])
    log: list | None = [] if config.log_candidates else None
    trace: list[TraceRow] = []

    store = train_side.with_texts(text_side)
    scorer = Scorer(
        store, library, alpha=config.search.alpha, tau=config.search.tau,
        include_synonyms=config.include_synonyms,
    )
    evaluator = _Evaluator(scorer, config.workers, log)

    checkpoint_path = outdir / "template_result.json"
    resumed = False
    if config.mode == "two_phase" and checkpoint_path.exists():
        payload = json.loads(checkpoint_path.read_text(encoding="utf-8"))
        if payload.get("config_digest") != config.digest():
            raise ConfigError(
                "checkpoint in output_dir was produced by a different config; "
                "remove it or change output_dir"
            )
        p_t_star = CandidatePrompt.initial(
            payload["template_ids"], library.n_classes, tag=payload["generation_tag"]
        )
        p_t_score = _breakdown_from_dict(payload["score"])
        trace = [TraceRow(**row) for row in payload["trace"]]
        evaluator.count = payload["evaluations"]
        resumed = True
    else:
        p_t_star, p_t_score = optimize_templates(
            evaluator, library, config.search, rng_templates, trace, config.base_template
        )

    if config.mode == "two_phase":
        integration = _resolve_integration(config, p_t_star)
        manifest_d = library.instantiate_manifest(integration, include_templates=False)
        desc_path = Path(config.description_bundle)
        if not desc_path.exists():
            manifest_path = outdir / "manifest.json"
            write_manifest(manifest_d, manifest_path)
            checkpoint_path.write_text(
                json.dumps(
                    {
                        "config_digest": config.digest(),
                        "template_ids": sorted(p_t_star.template_ids),
                        "generation_tag": p_t_star.generation_tag,
                        "score": p_t_score.as_dict(),
                        "trace": [row.as_dict() for row in trace],
                        "evaluations": evaluator.count,
                    },
                    indent=1,
                ),
                encoding="utf-8",
            )
            result = RunResult(
                best_candidate=p_t_star,
                best_score=p_t_score,
                best_digest=semantic_digest(store, scorer.d_sets(p_t_star)),
                trace=trace,
                group_plan=None,
                config_snapshot=config.snapshot(),
                phase_completed="template",
            )
            persist(result, scorer, config, outdir, log, append_log=False)
            raise ManifestPendingError(manifest_path)
        desc_side = load_bundle(desc_path)
        library.bind_embeddings(manifest_d, desc_side, first_text_id=text_side.n_texts)
        text_side = text_side.merged_texts(desc_side)
        store = train_side.with_texts(text_side)
        scorer = Scorer(
            store, library, alpha=config.search.alpha, tau=config.search.tau,
            include_synonyms=config.include_synonyms,
        )
        previous = evaluator.count
        evaluator = _Evaluator(scorer, config.workers, log)
        evaluator.count = previous
        # re-score on the merged store so stopped-and-resumed runs and
        # straight-through runs see identical numbers from here on
        p_t_score = evaluator([p_t_star])[0]

    desc_pools = build_desc_pools(library, p_t_star, config.include_synonyms)
    plan = group_sample(scorer, p_t_star, desc_pools, config.sampling)
    best_candidate, best_score = optimize_descriptions(
        evaluator,
        scorer,
        desc_pools,
        p_t_star,
        p_t_score,
        plan,
        config.search,
        config.sampling,
        rng_descriptions,
        trace,
        scope=config.scope,
    )
    result = RunResult(
        best_candidate=best_candidate,
        best_score=best_score,
        best_digest=semantic_digest(store, scorer.d_sets(best_candidate)),
        trace=trace,
        group_plan=plan,
        config_snapshot=config.snapshot(),
        phase_completed="description",
    )
    persist(result, scorer, config, outdir, log, append_log=resumed)
    return result


def run_from_file(config_path) -> RunResult:
    return run(RunConfig.from_json(config_path))


def persist(
    result: RunResult, scorer: Scorer, config: RunConfig, outdir: Path, log,
    append_log: bool = False,
) -> None:
    outdir = Path(outdir)
    (outdir / "result.json").write_text(
        json.dumps(result.as_dict(), sort_keys=True, indent=1), encoding="utf-8"
    )
    d_sets = scorer.d_sets(result.best_candidate)
    store = scorer.store
    library = scorer.library
    classes = []
    for c in range(store.n_classes):
        template_texts = []
        description_texts = []
        for text_id in d_sets[c]:
            meta = store.text_meta[text_id]
            if text_id in result.best_candidate.desc_ids[c]:
                description_texts.append(meta.source_text)
            else:
                template_texts.append(meta.source_text)
        classes.append(
            {
                "class_id": c,
                "name": library.class_names[c],
                "template_texts": template_texts,
                "description_texts": description_texts,
            }
        )
    prompt = {
        "digest": result.best_digest,
        "alpha": config.search.alpha,
        "tau": config.search.tau,
        "mode": config.mode,
        "text_bundle": config.text_bundle,
        "description_bundle": config.description_bundle,
        "template_strings": [library.templates[t] for t in sorted(result.best_candidate.template_ids)],
        "classes": classes,
    }
    (outdir / "prompt.json").write_text(
        json.dumps(prompt, sort_keys=True, indent=1), encoding="utf-8"
    )
    with open(outdir / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["phase", "group", "iteration", "step", "best_fitness", "population", "evaluations"]
        )
        for row in result.trace:
            writer.writerow(
                [row.phase, row.group, row.iteration, row.step,
                 repr(row.best_fitness), row.population, row.evaluations]
            )
    if log is not None:
        mode = "a" if append_log and (outdir / "candidates.jsonl").exists() else "w"
        with open(outdir / "candidates.jsonl", mode, encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")


def load_text_side(config: RunConfig) -> EmbeddingStore:
    """Reassemble the text store a finished run scored against."""
    text_side = load_bundle(require_path(config.text_bundle, "text bundle"))
    if config.mode == "two_phase":
        desc_side = load_bundle(require_path(config.description_bundle, "description bundle"))
        text_side = text_side.merged_texts(desc_side)
    return text_side


def emit_manifest(config: RunConfig):
    """Write the encode manifest a bridge must fulfil before `optimize` runs.

    Pre-integrated configs get the full manifest; two-phase configs get the
    template-instance manifest (the description manifest depends on the
    template phase and is emitted by the run itself).
    """
    library = load_library(require_path(config.library, "library"))
    if config.mode == "pre_integrated":
        manifest = library.instantiate_manifest(_resolve_integration(config, None))
    else:
        manifest = library.instantiate_manifest(include_descriptions=False)
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "manifest.json"
    write_manifest(manifest, path)
    return manifest, path
