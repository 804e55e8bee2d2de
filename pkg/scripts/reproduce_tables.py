"""Prepare SemEval data and run the full experiment matrix with a real encoder.

Expects, in --data-dir, files named ``<NAME>_train.xml``, ``<NAME>_test.xml``
and optionally ``<NAME>_opinions.tsv`` for NAME in L14, R14, R15, R16.
Datasets whose XML is missing are skipped.  Parses come either from a spaCy
model (--spacy-model) or from a precomputed parse file (--parses).

    python3 scripts/reproduce_tables.py --data-dir semeval/ --model google/electra-base-discriminator \
        --spacy-model en_core_web_sm --out runs_real

The config and plan it writes can be fed to the acceptance suite through
OPINION_MINER_REAL_CONFIG and OPINION_MINER_REAL_PLAN.
"""

import argparse
import json
import sys
from pathlib import Path

from opinion_miner.cli import main
from opinion_miner.corpus import domain_for

NAMES = ("L14", "R14", "R15", "R16")


def prepare(data_dir: Path, out: Path) -> dict:
    datasets = {}
    for name in NAMES:
        train, test = data_dir / f"{name}_train.xml", data_dir / f"{name}_test.xml"
        if not (train.exists() and test.exists()):
            print(f"skipping {name}: XML not found")
            continue
        argv = ["prepare", name, "--train", str(train), "--test", str(test), "--out", str(out / f"{name}.jsonl"),
                "--lenient"]
        tsv = data_dir / f"{name}_opinions.tsv"
        if tsv.exists():
            argv += ["--opinions", str(tsv)]
        if main(argv) != 0:
            raise SystemExit(f"prepare failed for {name}")
        datasets[name] = str(out / f"{name}.jsonl")
    if not datasets:
        raise SystemExit("no datasets found")
    return datasets


def build_plans(names, massive_corpus=None) -> list:
    laptop = [n for n in names if domain_for(n) == "laptop"]
    restaurant = [n for n in names if domain_for(n) == "restaurant"]
    plans = [
        {"setting": "in_domain", "test_datasets": list(names), "adaptation": "with"},
        {"setting": "in_domain", "test_datasets": list(names), "adaptation": "without"},
    ]
    if laptop and restaurant:
        plans += [
            {"setting": "cross_domain", "test_datasets": restaurant, "adaptation": "with",
             "train_domains": ["laptop"]},
            {"setting": "cross_domain", "test_datasets": laptop, "adaptation": "with",
             "train_domains": ["restaurant"]},
            {"setting": "joint_domain", "test_datasets": list(names), "adaptation": "with",
             "train_domains": ["laptop", "restaurant"]},
        ]
    if massive_corpus:
        plans.append({"setting": "in_domain", "test_datasets": list(names), "adaptation": "massive",
                      "extra_corpus": [massive_corpus]})
    return plans


def main_():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", required=True)
    ap.add_argument("--model", required=True, help="Hugging Face model id or local path")
    ap.add_argument("--spacy-model", help="spaCy pipeline used for POS tags and dependencies")
    ap.add_argument("--parses", help="precomputed parse JSONL instead of spaCy")
    ap.add_argument("--massive-corpus", help="large in-domain text file, one review per line")
    ap.add_argument("--out", default="runs_real")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    args = ap.parse_args()
    if not (args.spacy_model or args.parses):
        ap.error("one of --spacy-model or --parses is required")
    out = Path(args.out).resolve()
    out.mkdir(parents=True, exist_ok=True)
    datasets = prepare(Path(args.data_dir), out)

    lines = ["backend.id = hf", "backend.model_path = " + (str(Path(args.model).resolve()) if Path(args.model).exists() else args.model), f"run.output_dir = {out / 'runs'}",
             "run.seeds = " + ",".join(str(s) for s in args.seeds)]
    if args.parses:
        lines += ["annotator.id = precomputed", f"annotator.path = {Path(args.parses).resolve()}"]
    else:
        lines += ["annotator.id = spacy", f"annotator.model = {args.spacy_model}"]
    config = out / "real.cfg"
    config.write_text("\n".join(lines) + "\n")
    plan = out / "plan.json"
    plan.write_text(json.dumps({"datasets": datasets,
                                "plans": build_plans(list(datasets), args.massive_corpus)}, indent=2))
    print(f"config: {config}\nplan: {plan}")
    return main(["matrix", str(plan), "--config", str(config), "--out", str(out / "runs")])


if __name__ == "__main__":
    sys.exit(main_())
