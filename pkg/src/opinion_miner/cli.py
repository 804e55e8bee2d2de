"""Command-line entry point.

Exit codes: 0 success, 1 I/O, 2 input or configuration, 3 backend capability.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .corpus import (attach_opinion_annotations, build_adaptation_corpus, load_dataset,
                     parse_semeval_xml, save_dataset)
from .errors import CapabilityError, InputError, OpinionMinerError
from .evaluation import load_plans, load_report, render_report, run_matrix, score
from .pipeline import InstanceResult, Pipeline

log = logging.getLogger("opinion_miner")


def _config(args) -> RunConfig:
    overrides = list(args.set or [])
    if args.config:
        cfg = RunConfig.from_file(args.config, overrides)
    else:
        cfg = RunConfig().with_overrides(overrides) if overrides else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides([f"run.seeds={','.join(str(s) for s in args.seed)}"])
    return cfg


def cmd_prepare(args) -> int:
    dataset = None
    for split, paths in (("train", args.train or []), ("test", args.test or [])):
        for path in paths:
            part = parse_semeval_xml(path, args.name, split)
            dataset = part if dataset is None else dataset.merge(part)
    if dataset is None:
        raise InputError("give at least one --train or --test XML file")
    for tsv in args.opinions or []:
        dataset = attach_opinion_annotations(dataset, tsv)
    n_warn = len(dataset.warnings)
    if n_warn and not args.lenient:
        print(f"{n_warn} warnings; rerun with --lenient to keep the valid instances", file=sys.stderr)
        return 2
    save_dataset(dataset, args.out)
    n_sent, n_inst = len(dataset.sentences), len(dataset.instances)
    print(f"{dataset.name}: {n_sent} sentence{'s' * (n_sent != 1)}, "
          f"{n_inst} instance{'s' * (n_inst != 1)}, "
          f"{len(dataset.aooe_eligible())} with opinions, {n_warn} warnings")
    return 0


def cmd_adapt(args) -> int:
    cfg = _config(args)
    backend = cfg.build_backend()
    if not backend.supports_training:
        print(f"backend {backend.name!r} cannot be trained; use adaptation=without", file=sys.stderr)
        return CapabilityError.exit_code
    datasets = [load_dataset(p) for p in args.dataset or []]
    corpus = build_adaptation_corpus(datasets, args.extra or [])
    root = Path(args.out or Path(cfg.output_dir) / "adapt")
    for seed in cfg.seeds:
        adapted = backend.domain_adapt(corpus, cfg.adaptation(seed), root)
        print(adapted.run_dir)
    return 0


def cmd_extract(args) -> int:
    cfg = _config(args)
    dataset = load_dataset(args.dataset)
    split = None if args.split == "all" else args.split
    instances = [i for i in dataset.instances
                 if split is None or dataset.sentence(i.sentence_id).split == split]
    if not instances:
        raise InputError(f"{args.dataset}: no instances in split {args.split!r}")
    model = cfg.build_backend()
    label_model = None
    if args.model_path:
        base = model
        model = RunConfig.from_pairs(cfg.to_pairs() + [("backend.model_path", args.model_path)]).build_backend()
        if cfg.label_source == "original":
            label_model = base
    pipe = Pipeline(model, cfg.build_annotator(), cfg, label_model)
    results = pipe.predict(dataset, split, dump_attention=args.dump_attention)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.record(), ensure_ascii=False, sort_keys=True) + "\n")
    print(f"{len(results)} predictions -> {out}")
    return 0


def _fmt(v):
    return "absent" if v is None else f"{100 * v:.2f}"


def cmd_evaluate(args) -> int:
    results = []
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                results.append(InstanceResult.from_record(json.loads(line)))
    s = score(results)
    payload = [{"task": t, "accuracy": acc, "n_eligible": n} for t, (acc, n) in s.as_dict().items()]
    for entry in payload:
        print(f"{entry['task']:7s} {_fmt(entry['accuracy']):>7s}  (n={entry['n_eligible']})")
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_matrix(args) -> int:
    cfg = _config(args)
    plans, dataset_paths, overrides = load_plans(args.plan, cfg.seeds)
    if overrides:
        cfg = cfg.with_overrides(f"{k}={v}" for k, v in overrides.items())
    datasets = {name: load_dataset(p, name) for name, p in dataset_paths.items()}
    plan_blob = json.dumps([p.__dict__ for p in plans], sort_keys=True, default=str)
    digest = hashlib.sha256((cfg.config_hash() + plan_blob).encode()).hexdigest()[:12]
    run_dir = Path(args.out or cfg.output_dir) / digest
    report = run_matrix(plans, datasets, cfg.build_backend(), cfg.build_annotator(), cfg, run_dir,
                        jobs=args.jobs, resume=not args.no_resume)
    print(render_report(report, "markdown"))
    print(f"run directory: {run_dir}")
    return 0


def cmd_report(args) -> int:
    report = load_report(args.run_dir)
    text = render_report(report, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (section.key = value)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    common.add_argument("--seed", type=int, action="append", help="seed(s), replacing run.seeds")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="opinion-miner", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="SemEval XML + opinion TSV -> dataset JSONL")
    p.add_argument("name", help="dataset name, e.g. L14 or R15")
    p.add_argument("--train", action="append", help="train-split XML file")
    p.add_argument("--test", action="append", help="test-split XML file")
    p.add_argument("--opinions", action="append", help="opinion annotation TSV")
    p.add_argument("--out", required=True)
    p.add_argument("--lenient", action="store_true", help="keep valid instances despite warnings")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("adapt", parents=[common], help="masked-token domain adaptation")
    p.add_argument("--dataset", action="append", help="dataset JSONL; its train split is used")
    p.add_argument("--extra", action="append", help="raw text corpus, one document per line")
    p.add_argument("--out", help="run root (default <output_dir>/adapt)")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("extract", parents=[common], help="predict opinions and polarities")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=["train", "test", "all"])
    p.add_argument("--model-path", help="adapted weights to use instead of backend.model_path")
    p.add_argument("--dump-attention", action="store_true", help="add word-level aspect scores")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", parents=[common], help="score a predictions file")
    p.add_argument("predictions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("matrix", parents=[common], help="run an experiment plan file")
    p.add_argument("plan")
    p.add_argument("--out", help="run root (default output_dir)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-resume", action="store_true", help="recompute finished cells")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("report", parents=[common], help="render a run directory's report")
    p.add_argument("run_dir")
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OpinionMinerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
