"""Accuracy scoring, the seeded experiment matrix and report tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .backend import Backend
from .config import RunConfig
from .corpus import DOMAINS, Dataset, build_adaptation_corpus, domain_for, sample_labeled_fraction
from .errors import InputError, OpinionMinerError
from .pipeline import InstanceResult, Pipeline
from .syntax import Annotator

log = logging.getLogger(__name__)

TASKS = ("AOOE", "ATSC", "AOOSPE")
FT_TASK = "ATSC_ft"
SETTINGS = ("in_domain", "cross_domain", "joint_domain")
ADAPTATIONS = ("with", "without", "massive")
FRACTIONS = (0.05, 0.10, 0.25, 0.50, 1.0)


# ---------------------------------------------------------------------------
# scoring


@dataclass(frozen=True)
class TaskScores:
    aooe: float | None
    atsc: float | None
    aoospe: float | None
    n_aooe: int
    n_atsc: int
    n_aoospe: int

    def as_dict(self) -> dict[str, tuple[float | None, int]]:
        return {"AOOE": (self.aooe, self.n_aooe), "ATSC": (self.atsc, self.n_atsc),
                "AOOSPE": (self.aoospe, self.n_aoospe)}


def _accuracy(flags: list[bool | None]) -> tuple[float | None, int]:
    eligible = [f for f in flags if f is not None]
    if not eligible:
        return None, 0
    return sum(eligible) / len(eligible), len(eligible)


def score(results: Sequence[InstanceResult]) -> TaskScores:
    """Per-task accuracy over each task's eligible instances (``None`` when none are)."""
    if not results:
        raise InputError("no results to score")
    aooe, n1 = _accuracy([r.aooe_correct for r in results])
    atsc, n2 = _accuracy([r.atsc_correct for r in results])
    both, n3 = _accuracy([r.aoospe_correct for r in results])
    return TaskScores(aooe, atsc, both, n1, n2, n3)


def eligibility_matches(results: Sequence[InstanceResult]) -> bool:
    return all((r.aooe_correct is None) == (r.atsc_correct is None) for r in results)


# ---------------------------------------------------------------------------
# experiment plans


def _domain_letter(domain: str) -> str:
    return domain[:1].upper()


@dataclass(frozen=True)
class ExperimentPlan:
    setting: str
    test_datasets: tuple[str, ...]
    adaptation: str = "with"
    train_domains: tuple[str, ...] = ()
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    labeled_fraction: float | None = None
    extra_corpus: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("test_datasets", "train_domains", "seeds", "extra_corpus"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.setting not in SETTINGS:
            raise InputError(f"unknown setting {self.setting!r}")
        if self.adaptation not in ADAPTATIONS:
            raise InputError(f"unknown adaptation mode {self.adaptation!r}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise InputError("plan seeds must be non-empty and distinct")
        if not self.test_datasets:
            raise InputError("plan has no test datasets")
        for d in self.train_domains:
            if d not in DOMAINS:
                raise InputError(f"unknown domain {d!r}")
        test_domains = {domain_for(n) for n in self.test_datasets}
        if self.setting == "cross_domain":
            if not self.train_domains or test_domains & set(self.train_domains):
                raise InputError("cross-domain plans need train domains disjoint from test domains")
        if self.setting == "joint_domain" and len(set(self.train_domains)) < 2:
            raise InputError("joint-domain plans combine at least two train domains")
        if self.setting == "in_domain" and self.train_domains and set(self.train_domains) != test_domains:
            raise InputError("in-domain plans train and test on the same domain")
        if self.adaptation == "massive" and not self.extra_corpus:
            raise InputError("massive adaptation needs an extra corpus path")
        if self.labeled_fraction is not None and not 0 < self.labeled_fraction <= 1:
            raise InputError("labeled_fraction must be in (0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping, default_seeds: Sequence[int] | None = None) -> ExperimentPlan:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown plan fields {sorted(unknown)}")
        d = dict(d)
        if "seeds" not in d and default_seeds is not None:
            d["seeds"] = tuple(default_seeds)
        return cls(**d)

    def cell_label(self, dataset: str) -> str:
        if self.setting == "in_domain":
            label = dataset
        else:
            train = "+".join(_domain_letter(d) for d in self.train_domains)
            label = f"{train}→{dataset}"
        if self.labeled_fraction is not None:
            label += f"@{self.labeled_fraction:g}"
        return label


def load_plans(path, default_seeds: Sequence[int] | None = None) -> tuple[list[ExperimentPlan], dict[str, str], dict]:
    """Read a matrix file: ``{"datasets": {name: jsonl}, "plans": [...], "config": {...}}``."""
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc
    base = path.parent
    datasets = {}
    for name, p in spec.get("datasets", {}).items():
        p = Path(p)
        datasets[name] = str(p if p.is_absolute() else base / p)
    plans = [ExperimentPlan.from_dict(p, default_seeds) for p in spec.get("plans", [])]
    if not plans:
        raise InputError(f"{path}: no plans")
    for plan in plans:
        for name in plan.test_datasets:
            if name not in datasets:
                raise InputError(f"plan references unknown dataset {name!r}")
        plan_extra = [str(Path(e) if Path(e).is_absolute() else base / e) for e in plan.extra_corpus]
        object.__setattr__(plan, "extra_corpus", tuple(plan_extra))
    return plans, datasets, spec.get("config", {})


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class MetricRow:
    task: str
    dataset: str
    setting: str
    adaptation: str
    cell: str
    seed: int
    accuracy: float
    n_eligible: int


@dataclass
class MetricsReport:
    rows: list[MetricRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def group_key(self, row: MetricRow) -> tuple[str, str, str, str]:
        return (row.task, row.setting, row.adaptation, row.cell)

    def means(self) -> dict[tuple[str, str, str, str], float]:
        groups: dict[tuple, list[float]] = {}
        for row in self.rows:
            groups.setdefault(self.group_key(row), []).append(row.accuracy)
        return {k: sum(v) / len(v) for k, v in groups.items()}

    def seed_counts(self) -> dict[tuple, int]:
        out: dict[tuple, int] = {}
        for row in self.rows:
            k = self.group_key(row)
            out[k] = out.get(k, 0) + 1
        return out

    def dataset_of(self) -> dict[tuple, str]:
        return {self.group_key(r): r.dataset for r in self.rows}

    def to_json(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "metadata": self.metadata}


def _order(values: Iterable[str], canonical: Sequence[str]) -> list[str]:
    vals = set(values)
    return [v for v in canonical if v in vals] + sorted(vals - set(canonical))


def render_report(report: MetricsReport, fmt: str = "markdown") -> str:
    """Tables of seed-mean accuracies (percent, 2 decimals).

    Markdown: one table per task, test datasets as columns, one row per
    (setting, adaptation) group.  CSV: long format with per-seed rows and a
    ``mean`` row per cell, carrying full-precision values for round trips.
    """
    if not report.rows and not report.metadata.get("errors"):
        raise InputError("empty report")
    means = report.means()
    datasets_of = report.dataset_of()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "setting", "adaptation", "cell", "dataset", "seed", "accuracy", "value", "n"])
        counts = report.seed_counts()
        for key in sorted(means, key=_sort_key):
            task, setting, adaptation, cell = key
            for row in sorted((r for r in report.rows if report.group_key(r) == key), key=lambda r: r.seed):
                w.writerow([task, setting, adaptation, cell, row.dataset, row.seed,
                            f"{100 * row.accuracy:.2f}", repr(row.accuracy), row.n_eligible])
            w.writerow([task, setting, adaptation, cell, datasets_of[key], "mean",
                        f"{100 * means[key]:.2f}", repr(means[key]), counts[key]])
        return buf.getvalue()
    if fmt != "markdown":
        raise InputError(f"unknown report format {fmt!r}")

    lines = []
    footnotes = []
    tasks = _order({k[0] for k in means}, TASKS + (FT_TASK,))
    for task in list(TASKS) + [t for t in tasks if t not in TASKS]:
        cells = {k: v for k, v in means.items() if k[0] == task}
        if not cells:
            footnotes.append(f"{task}: no eligible instances; table omitted.")
            continue
        datasets = sorted({datasets_of[k] for k in cells})
        lines.append(f"### {task}")
        lines.append("")
        lines.append("| setting | adaptation | " + " | ".join(datasets) + " |")
        lines.append("|---|---|" + "---:|" * len(datasets))
        groups = sorted({(k[1], k[2]) for k in cells}, key=lambda g: (_rank(g[0], SETTINGS), _rank(g[1], ADAPTATIONS)))
        for setting, adaptation in groups:
            row = []
            for ds in datasets:
                vals = [(k[3], v) for k, v in cells.items()
                        if k[1] == setting and k[2] == adaptation and datasets_of[k] == ds]
                if not vals:
                    row.append("")
                elif len(vals) == 1 and vals[0][0] == ds:
                    row.append(f"{100 * vals[0][1]:.2f}")
                else:
                    row.append("; ".join(f"{c}: {100 * v:.2f}" for c, v in sorted(vals)))
            lines.append(f"| {setting} | {adaptation} | " + " | ".join(row) + " |")
        lines.append("")
    for err in report.metadata.get("errors", []):
        footnotes.append(f"cell {err['cell']} failed: {err['error']}")
    if footnotes:
        lines.extend(f"- {f}" for f in footnotes)
        lines.append("")
    return "\n".join(lines)


def _rank(v: str, canonical: Sequence[str]) -> tuple[int, str]:
    return (canonical.index(v) if v in canonical else len(canonical), v)


def _sort_key(key):
    task, setting, adaptation, cell = key
    return (_rank(task, TASKS + (FT_TASK,)), _rank(setting, SETTINGS), _rank(adaptation, ADAPTATIONS), cell)


def parse_report_csv(text: str) -> dict[tuple[str, str, str, str], float]:
    """Seed means keyed by ``(task, setting, adaptation, cell)``."""
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        if row["seed"] == "mean":
            out[(row["task"], row["setting"], row["adaptation"], row["cell"])] = float(row["value"])
    return out


# ---------------------------------------------------------------------------
# fine-tuning with a labeled fraction


@dataclass
class FinetuneResult:
    fraction: float
    seed: int
    accuracy: float
    n_train: int
    train_keys: tuple
    classifier: object = field(repr=False, default=None)


def _pairs(dataset: Dataset, split: str):
    sentences = dataset.sentence_map()
    pairs, labels = [], []
    for inst in dataset.instances:
        s = sentences[inst.sentence_id]
        if s.split == split and inst.gold_polarity is not None:
            pairs.append((s.text, inst.aspect_text))
            labels.append(inst.gold_polarity)
    return pairs, labels


def finetune_atsc(dataset: Dataset, fraction: float, backend: Backend, seed: int, epochs: int = 1,
                  batch_size: int = 16, learning_rate: float = 5e-5) -> FinetuneResult:
    """Train a three-way (sentence, aspect) classifier on a labeled fraction
    of the train split and report test accuracy."""
    subset = sample_labeled_fraction(dataset, fraction, seed)
    train_pairs, train_labels = _pairs(subset, "train")
    test_pairs, test_labels = _pairs(dataset, "test")
    clf = backend.train_classifier(train_pairs, train_labels, seed, epochs, batch_size, learning_rate)
    if test_pairs:
        predicted = clf.predict(test_pairs)
        accuracy = sum(p == g for p, g in zip(predicted, test_labels)) / len(test_labels)
    else:
        accuracy = float("nan")
    keys = tuple(i.key for i in subset.instances_in("train"))
    return FinetuneResult(fraction, seed, accuracy, len(train_pairs), keys, clf)


def labeled_fraction_curve(dataset: Dataset, backend: Backend, seed: int, fractions=FRACTIONS, **kw) -> list[FinetuneResult]:
    return [finetune_atsc(dataset, f, backend, seed, **kw) for f in fractions]


# ---------------------------------------------------------------------------
# experiment runner


def _cell_id(plan: ExperimentPlan, dataset: str, seed: int) -> str:
    label = plan.cell_label(dataset).replace("→", "-to-").replace("+", "-").replace("@", "_frac")
    return re.sub(r"[^A-Za-z0-9_.-]", "_", f"{plan.setting}_{plan.adaptation}_{label}_seed{seed}")


def _train_datasets(plan: ExperimentPlan, test_name: str, datasets: Mapping[str, Dataset]) -> list[Dataset]:
    if plan.setting == "in_domain":
        return [datasets[test_name]]
    return [ds for ds in datasets.values() if ds.domain in plan.train_domains]


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def run_experiment(plan: ExperimentPlan, datasets: Mapping[str, Dataset], backend: Backend,
                   annotator: Annotator, config: RunConfig | None = None, run_dir=None,
                   jobs: int = 1, resume: bool = True) -> MetricsReport:
    """Run every (seed, test dataset) cell of ``plan``.

    For each seed the backend is optionally domain-adapted on the plan's
    corpus, the pipeline runs on each test split and each task is scored.
    Cells with an existing ``metrics.json`` are reused when ``resume``.
    """
    config = config or RunConfig()
    run_dir = Path(run_dir or Path(config.output_dir) / config.config_hash())
    cells_dir = run_dir / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    rows: list[MetricRow] = []
    errors: list[dict] = []

    def metric_entries(task_scores: TaskScores, name, seed):
        entries = []
        for task, (acc, n) in task_scores.as_dict().items():
            entries.append({"task": task, "dataset": name, "setting": plan.setting,
                            "adaptation": plan.adaptation, "cell": plan.cell_label(name),
                            "seed": seed, "accuracy": acc, "n_eligible": n})
        return entries

    def run_seed(seed: int):
        pending = [n for n in plan.test_datasets
                   if not (resume and (cells_dir / _cell_id(plan, n, seed) / "metrics.json").exists())]
        model, label_model = backend, None
        out_rows, out_errors = [], []
        try:
            if pending and plan.adaptation != "without":
                corpora: dict[tuple, Backend] = {}
                adapted_for = {}
                for name in pending:
                    sources = _train_datasets(plan, name, datasets)
                    key = tuple(ds.name for ds in sources)
                    if key not in corpora:
                        extra = plan.extra_corpus if plan.adaptation == "massive" else ()
                        corpus = build_adaptation_corpus(sources, extra)
                        corpora[key] = backend.domain_adapt(corpus, config.adaptation(seed), run_dir / "adapt")
                    adapted_for[name] = corpora[key]
            else:
                adapted_for = {name: backend for name in pending}
        except OpinionMinerError as exc:
            for name in pending:
                out_errors.append({"cell": _cell_id(plan, name, seed), "error": str(exc)})
            pending, adapted_for = [], {}
        for name in plan.test_datasets:
            cell = cells_dir / _cell_id(plan, name, seed)
            metrics_path = cell / "metrics.json"
            if name not in pending:
                if metrics_path.exists():
                    out_rows.extend(_rows_from_metrics(json.loads(metrics_path.read_text(encoding="utf-8"))))
                continue
            try:
                model = adapted_for[name]
                if config.label_source == "original":
                    label_model = backend
                pipe = Pipeline(model, annotator, config, label_model)
                results = pipe.predict(datasets[name], "test")
                if not results:
                    raise InputError(f"{name} has no test instances")
                task_scores = score(results)
                _check_inequality(task_scores, results, _cell_id(plan, name, seed))
                entries = metric_entries(task_scores, name, seed)
                if plan.labeled_fraction is not None:
                    ft = finetune_atsc(datasets[name], plan.labeled_fraction, model, seed,
                                       config.finetune_epochs, config.finetune_batch_size,
                                       config.finetune_learning_rate)
                    entries.append({"task": FT_TASK, "dataset": name, "setting": plan.setting,
                                    "adaptation": plan.adaptation, "cell": plan.cell_label(name),
                                    "seed": seed, "accuracy": ft.accuracy, "n_eligible": ft.n_train})
                cell.mkdir(parents=True, exist_ok=True)
                with open(cell / "predictions.jsonl", "w", encoding="utf-8") as fh:
                    for r in results:
                        fh.write(json.dumps(r.record(), ensure_ascii=False, sort_keys=True) + "\n")
                _write_json(metrics_path, entries)
                out_rows.extend(_rows_from_metrics(entries))
            except OpinionMinerError as exc:
                out_errors.append({"cell": _cell_id(plan, name, seed), "error": str(exc)})
        return out_rows, out_errors

    seeds = list(plan.seeds)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_seed, seeds))
    else:
        outcomes = [run_seed(s) for s in seeds]
    for r, e in outcomes:
        rows.extend(r)
        errors.extend(e)
    for err in errors:
        log.warning("cell %s failed: %s", err["cell"], err["error"])
    return MetricsReport(rows, {"errors": errors} if errors else {})


def _rows_from_metrics(entries: list[dict]) -> list[MetricRow]:
    return [MetricRow(e["task"], e["dataset"], e["setting"], e["adaptation"], e["cell"], e["seed"],
                      e["accuracy"], e["n_eligible"])
            for e in entries if e["accuracy"] is not None]


def _check_inequality(s: TaskScores, results, cell: str) -> None:
    if None in (s.aooe, s.atsc, s.aoospe):
        return
    if not eligibility_matches(results):
        # with different denominators the bound is not guaranteed
        log.info("cell %s: AOOE and ATSC eligibility differ; pair bound not checked", cell)
        return
    if s.aoospe > min(s.aooe, s.atsc) + 1e-12:
        raise AssertionError(f"cell {cell}: AOOSPE {s.aoospe} exceeds min(AOOE, ATSC)")


def run_matrix(plans: Sequence[ExperimentPlan], datasets: Mapping[str, Dataset], backend: Backend,
               annotator: Annotator, config: RunConfig, run_dir, jobs: int = 1, resume: bool = True) -> MetricsReport:
    """Run several plans into one run directory and write ``report.md``/``report.csv``."""
    run_dir = Path(run_dir)
    report = MetricsReport()
    errors = []
    for plan in plans:
        part = run_experiment(plan, datasets, backend, annotator, config, run_dir, jobs, resume)
        report.rows.extend(part.rows)
        errors.extend(part.metadata.get("errors", []))
    report.metadata = {"config_hash": config.config_hash(), "backend": backend.fingerprint()}
    if errors:
        report.metadata["errors"] = errors
    (run_dir / "report.md").write_text(render_report(report, "markdown"), encoding="utf-8")
    (run_dir / "report.csv").write_text(render_report(report, "csv"), encoding="utf-8")
    _write_json(run_dir / "run.json", {**report.metadata,
                                       "finished": datetime.now(timezone.utc).isoformat(timespec="seconds")})
    return report


def load_report(run_dir) -> MetricsReport:
    """Reassemble a report from the ``metrics.json`` files under ``run_dir/cells``."""
    run_dir = Path(run_dir)
    rows = []
    for path in sorted((run_dir / "cells").glob("*/metrics.json")):
        rows.extend(_rows_from_metrics(json.loads(path.read_text(encoding="utf-8"))))
    return MetricsReport(rows)
