"""Run the experiment matrix twice on the mock backend and compare outputs.

Uses the hand-parsed toy corpora from the test suite, so it needs no
downloads.  Prints the rendered report and whether every per-cell
metrics.json came out byte-identical across the two runs.

    python3 scripts/mock_matrix.py --out /tmp/mock_matrix
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import toydata  # noqa: E402
from opinion_miner.cli import main  # noqa: E402

PLANS = [
    {"setting": "in_domain", "test_datasets": ["R14", "L14"], "adaptation": "with"},
    {"setting": "in_domain", "test_datasets": ["R14", "L14"], "adaptation": "without"},
    {"setting": "cross_domain", "test_datasets": ["R14"], "adaptation": "with", "train_domains": ["laptop"]},
    {"setting": "cross_domain", "test_datasets": ["L14"], "adaptation": "with", "train_domains": ["restaurant"]},
    {"setting": "joint_domain", "test_datasets": ["R14", "L14"], "adaptation": "with",
     "train_domains": ["laptop", "restaurant"]},
]


def run_once(ws, plan, out, seeds):
    argv = ["matrix", str(plan), "--config", str(ws["config"]), "--out", str(out), "--no-resume"]
    for s in seeds:
        argv += ["--seed", str(s)]
    if main(argv) != 0:
        raise SystemExit("matrix run failed")
    (run_dir,) = [p for p in out.iterdir() if p.is_dir()]
    return run_dir


def main_():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="mock_matrix_out")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    args = ap.parse_args()
    root = Path(args.out)
    ws = toydata.write_workspace(root / "workspace")
    plan = root / "plan.json"
    plan.write_text(json.dumps({"datasets": {"R14": str(ws["R14"]), "L14": str(ws["L14"])}, "plans": PLANS}))
    first = run_once(ws, plan, root / "run_a", args.seeds)
    second = run_once(ws, plan, root / "run_b", args.seeds)
    files = sorted(p.relative_to(first) for p in first.glob("cells/*/metrics.json"))
    same = all((first / f).read_bytes() == (second / f).read_bytes() for f in files)
    print(f"{len(files)} cells, metrics.json byte-identical across runs: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main_())
