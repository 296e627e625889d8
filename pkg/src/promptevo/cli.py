"""Command-line surface.

Subcommands: `synth` (build a planted benchmark), `optimize` (run a config),
`score` (evaluate a prompt file on a bundle), `manifest` (emit the encode
manifest without optimizing), `report` (render a run's trajectory and the
train-fitness/test-accuracy correlation).

Exit statuses: 0 ok, 2 usage or config error, 3 data error,
10 manifest pending (two-phase stop; not a failure).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import driver
from .bundle import KIND_IMAGE, KIND_TEXT, load_bundle, save_bundle
from .errors import (
    ConfigError,
    DegenerateVarianceError,
    ManifestPendingError,
    PromptEvoError,
    SpecInvalidError,
)
from .library import save_library
from .scoring import breakdown_from_scores, class_scores, pcc
from .synth import SynthSpec, synth_benchmark

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_MANIFEST_PENDING = 10


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_classes=args.classes,
        n_img_train=args.train,
        n_img_test=args.test,
        dim=args.dim,
        n_templates=args.templates,
        n_desc_per_class=args.descs,
        n_planted_per_class=args.planted,
        noise_sigma=args.sigma,
        seed=args.seed,
    )
    train, test, lib, answer_key = synth_benchmark(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_bundle(train, out / "train.bundle", kind=KIND_IMAGE)
    save_bundle(test, out / "test.bundle", kind=KIND_IMAGE)
    save_bundle(train, out / "texts.bundle", kind=KIND_TEXT)
    save_library(lib, out / "library.json")
    (out / "answer_key.json").write_text(
        json.dumps(
            {
                "classes": [
                    {"class_id": c, "planted_text_ids": ids}
                    for c, ids in sorted(answer_key.items())
                ]
            },
            indent=1,
        ),
        encoding="utf-8",
    )
    print(f"wrote synthetic benchmark to {out}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    config = driver.RunConfig.from_json(args.config)
    if args.log_candidates:
        config.log_candidates = True
    result = driver.run(config)
    best = result.best_score
    print(
        f"phase={result.phase_completed} fitness={best.fitness:.6f} "
        f"accuracy={best.accuracy:.4f} digest={result.best_digest[:16]}"
    )
    print(f"artifacts in {config.output_dir}")
    return EXIT_OK


def cmd_manifest(args) -> int:
    config = driver.RunConfig.from_json(args.config)
    manifest, path = driver.emit_manifest(config)
    print(f"wrote {len(manifest.entries)}-entry manifest to {path}")
    return EXIT_OK


def _load_prompt_store(args, prompt: dict):
    if args.texts:
        text_side = load_bundle(args.texts)
    else:
        text_side = load_bundle(driver.require_path(prompt["text_bundle"], "text bundle"))
        desc_bundle = prompt.get("description_bundle")
        if prompt.get("mode") == "two_phase" and desc_bundle and Path(desc_bundle).exists():
            text_side = text_side.merged_texts(load_bundle(desc_bundle))
    image_side = load_bundle(args.bundle)
    return image_side.with_texts(text_side)


def resolve_prompt_texts(store, prompt: dict):
    """Map each class's prompt texts back to text ids in the store."""
    index: dict[tuple[int, str], int] = {}
    for text_id, meta in enumerate(store.text_meta):
        index.setdefault((meta.class_id, meta.source_text), text_id)
    d_sets = []
    for entry in sorted(prompt["classes"], key=lambda e: e["class_id"]):
        ids = []
        for text in entry["template_texts"] + entry["description_texts"]:
            key = (entry["class_id"], text)
            if key not in index:
                raise PromptEvoError(
                    f"text {text!r} for class {entry['class_id']} not in bundle"
                )
            ids.append(index[key])
        d_sets.append(tuple(ids))
    return tuple(d_sets)


def cmd_score(args) -> int:
    prompt = json.loads(Path(args.prompt).read_text(encoding="utf-8"))
    store = _load_prompt_store(args, prompt)
    d_sets = resolve_prompt_texts(store, prompt)
    alpha = args.alpha if args.alpha is not None else prompt.get("alpha", 1e3)
    tau = args.tau if args.tau is not None else prompt.get("tau", 100.0)
    breakdown = breakdown_from_scores(
        class_scores(store, d_sets), store.image_labels, alpha, tau
    )
    report = {
        "prompt": str(args.prompt),
        "bundle": str(args.bundle),
        "alpha": alpha,
        "tau": tau,
        **breakdown.as_dict(),
    }
    out = Path(args.out) if args.out else Path(args.prompt).parent / "score_report.json"
    out.write_text(json.dumps(report, sort_keys=True, indent=1), encoding="utf-8")
    print(
        f"accuracy={breakdown.accuracy:.6f} "
        f"mean_true_logprob={breakdown.mean_true_logprob:.6f} "
        f"fitness={breakdown.fitness:.6f}"
    )
    print(f"report written to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    result_path = driver.require_path(run_dir / "result.json", "result.json")
    trace_path = driver.require_path(run_dir / "trace.csv", "trace.csv")
    result = json.loads(result_path.read_text(encoding="utf-8"))
    with open(trace_path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    print(f"run {run_dir}: phase_completed={result['phase_completed']}")
    print("phase group iteration step best_fitness evals")
    for row in rows:
        print(
            f"{row['phase']} {row['group']} {row['iteration']} {row['step']} "
            f"{float(row['best_fitness']):.6f} {row['evaluations']}"
        )
    best = result["best"]["score"]
    print(f"best: fitness={best['fitness']:.6f} accuracy={best['accuracy']:.4f}")

    if args.test_bundle:
        log_path = driver.require_path(run_dir / "candidates.jsonl", "candidates.jsonl")
        snap = result["config"]
        config = driver.RunConfig(
            search=driver.SearchConfig(**snap["search"]),
            sampling=driver.SamplingConfig(**snap["sampling"]),
            **{
                k: v
                for k, v in snap.items()
                if k not in ("search", "sampling")
            },
        )
        text_side = driver.load_text_side(config)
        test_store = load_bundle(args.test_bundle).with_texts(text_side)
        fitnesses, accuracies = [], []
        with open(log_path, encoding="utf-8") as fh:
            for line in fh:
                entry = json.loads(line)
                scores = class_scores(test_store, [tuple(ids) for ids in entry["d_sets"]])
                breakdown = breakdown_from_scores(scores, test_store.image_labels, 0.0, 100.0)
                fitnesses.append(entry["fitness"])
                accuracies.append(breakdown.accuracy)
        try:
            correlation = pcc(fitnesses, accuracies)
            print(f"pcc(train_fitness, test_accuracy) = {correlation:.6f} "
                  f"over {len(fitnesses)} candidates")
        except DegenerateVarianceError:
            print(f"pcc undefined: zero variance over {len(fitnesses)} candidates")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptevo",
        description="Evolutionary prompt-ensemble optimization over embedding bundles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic planted benchmark")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--test", type=int, default=200)
    p.add_argument("--descs", type=int, default=20)
    p.add_argument("--planted", type=int, default=4)
    p.add_argument("--templates", type=int, default=8)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("optimize", help="run an optimization config")
    p.add_argument("--config", required=True)
    p.add_argument("--log-candidates", action="store_true",
                   help="log every evaluated candidate for report --test-bundle")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("score", help="score a prompt file against an image bundle")
    p.add_argument("--prompt", required=True, help="prompt.json from a run")
    p.add_argument("--bundle", required=True, help="image bundle to score on")
    p.add_argument("--texts", help="text bundle (default: recorded in the prompt file)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--out", help="report path (default: score_report.json next to the prompt)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("manifest", help="emit the encode manifest for a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("report", help="summarize a finished run")
    p.add_argument("--run", required=True, help="run output directory")
    p.add_argument("--test-bundle", help="image bundle for the train/test correlation")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ManifestPendingError as exc:
        print(f"manifest pending: {exc}", file=sys.stderr)
        return EXIT_MANIFEST_PENDING
    except (ConfigError, SpecInvalidError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PromptEvoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
