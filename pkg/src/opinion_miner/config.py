"""Run configuration: flat ``section.key = value`` files with CLI overrides."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .backend import AdaptationConfig, Backend, load_backend
from .errors import InputError
from .syntax import DEFAULT_MODIFIERS, Annotator, PatternRegistry, builtin_patterns, load_annotator, parse_pattern


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in v.replace(" ", "").split(",") if x)
    except ValueError:
        raise InputError(f"not a list of integers: {v!r}") from None


def _opt(v: str) -> str | None:
    return v if v.strip() and v.strip().lower() != "none" else None


@dataclass(frozen=True)
class RunConfig:
    backend_id: str = "mock"
    model_path: str | None = None
    backend_seed: int = 0
    backend_trainable: bool = False
    label_template: str | None = None
    annotator_id: str = "precomputed"
    annotator_path: str | None = None
    annotator_model: str | None = None
    adapt: AdaptationConfig = field(default_factory=AdaptationConfig)
    modifiers: tuple[str, ...] = tuple(sorted(DEFAULT_MODIFIERS))
    patterns: tuple[tuple[str, str, str | None, str | None, bool], ...] = ()
    layers: tuple[int, ...] = (0, 1, 2, 3)
    aggregation: str = "pool"
    pos_fallback: bool = True
    label_source: str = "adapted"
    neutral_margin: float | None = None
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    output_dir: str = "runs"
    finetune_epochs: int = 1
    finetune_batch_size: int = 16
    finetune_learning_rate: float = 5e-5

    def __post_init__(self):
        if not self.layers:
            raise InputError("layer list must not be empty")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise InputError("seeds must be non-empty and distinct")
        if self.aggregation not in ("pool", "vote"):
            raise InputError(f"aggregation must be pool or vote, got {self.aggregation!r}")
        if self.label_source not in ("adapted", "original"):
            raise InputError(f"label_source must be adapted or original, got {self.label_source!r}")

    # -- loading -----------------------------------------------------------

    @classmethod
    def from_file(cls, path, overrides: Iterable[str] = ()) -> RunConfig:
        path = Path(path)
        pairs = _read_pairs(path.read_text(encoding="utf-8").splitlines(), str(path))
        pairs += _read_pairs(overrides, "override")
        return cls.from_pairs(pairs, base_dir=path.parent)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], base_dir: Path | None = None) -> RunConfig:
        kw: dict = {}
        adapt: dict = {}
        patterns: dict[str, dict] = {}

        def resolve(p):
            if p is None or base_dir is None or Path(p).is_absolute() or not (base_dir / p).exists():
                return p
            return str(base_dir / p)

        for key, value in pairs:
            section, _, name = key.partition(".")
            if section == "adapt":
                conv = {"learning_rate": float, "mask_probability": float}.get(name, int)
                if name not in AdaptationConfig.__dataclass_fields__ or name == "seed":
                    raise InputError(f"unknown config key {key!r}")
                adapt[name] = conv(value)
            elif section == "pattern":
                pname, _, attr = name.partition(".")
                entry = patterns.setdefault(pname, {})
                entry[attr or "chain"] = value
            elif key in _SIMPLE:
                field_name, conv = _SIMPLE[key]
                kw[field_name] = conv(value)
            else:
                raise InputError(f"unknown config key {key!r}")
        if "model_path" in kw:
            kw["model_path"] = resolve(kw["model_path"])
        if "annotator_path" in kw:
            kw["annotator_path"] = resolve(kw["annotator_path"])
        if adapt:
            kw["adapt"] = AdaptationConfig(**adapt)
        if patterns:
            specs = []
            for pname, entry in patterns.items():
                if "chain" not in entry:
                    raise InputError(f"pattern {pname} has no chain")
                specs.append((pname, entry["chain"], entry.get("emit"), entry.get("head"),
                              _bool(entry.get("subtree", "false"))))
            kw["patterns"] = tuple(specs)
        return cls(**kw)

    def with_overrides(self, overrides: Iterable[str]) -> RunConfig:
        merged = self.to_pairs() + _read_pairs(overrides, "override")
        return RunConfig.from_pairs(merged)

    def to_pairs(self) -> list[tuple[str, str]]:
        out = []
        for key, (field_name, _) in _SIMPLE.items():
            v = getattr(self, field_name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out.append((key, "none" if v is None else str(v)))
        for name, v in self.adapt.to_dict().items():
            if name != "seed":
                out.append((f"adapt.{name}", str(v)))
        for pname, chain, emit, head, subtree in self.patterns:
            out.append((f"pattern.{pname}", chain))
            if emit:
                out.append((f"pattern.{pname}.emit", emit))
            if head is not None:
                out.append((f"pattern.{pname}.head", head))
            out.append((f"pattern.{pname}.subtree", str(subtree)))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adapt"] = self.adapt.to_dict()
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]

    # -- builders ----------------------------------------------------------

    def adaptation(self, seed: int) -> AdaptationConfig:
        return replace(self.adapt, seed=seed)

    def build_backend(self) -> Backend:
        options = {"label_template": self.label_template}
        if self.backend_id == "mock":
            options.update(seed=self.backend_seed, trainable=self.backend_trainable)
            if self.model_path:
                options = {"label_template": self.label_template}
        return load_backend(self.backend_id, self.model_path, **options)

    def build_annotator(self) -> Annotator:
        return load_annotator(self.annotator_id, self.annotator_path, self.annotator_model)

    def build_registry(self) -> PatternRegistry:
        registry = PatternRegistry(builtin_patterns(), self.modifiers)
        for pname, chain, emit, head, subtree in self.patterns:
            registry.register(parse_pattern(pname, chain, emit, head, subtree))
        return registry


def _read_pairs(lines: Iterable[str], source: str) -> list[tuple[str, str]]:
    pairs = []
    for n, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{source}:{n}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        value = re.split(r"\s+#", value, maxsplit=1)[0]  # trailing comment
        pairs.append((key.strip(), value.strip()))
    return pairs


def _float_opt(v: str) -> float | None:
    v = _opt(v)
    return None if v is None else float(v)


def _modifiers(v: str) -> tuple[str, ...]:
    return tuple(sorted({x.strip().lower() for x in v.split(",") if x.strip()}))


_SIMPLE = {
    "backend.id": ("backend_id", str),
    "backend.model_path": ("model_path", _opt),
    "backend.seed": ("backend_seed", int),
    "backend.trainable": ("backend_trainable", _bool),
    "backend.label_template": ("label_template", _opt),
    "annotator.id": ("annotator_id", str),
    "annotator.path": ("annotator_path", _opt),
    "annotator.model": ("annotator_model", _opt),
    "patterns.modifiers": ("modifiers", _modifiers),
    "attention.layers": ("layers", _ints),
    "attention.aggregation": ("aggregation", str),
    "select.pos_fallback": ("pos_fallback", _bool),
    "polarity.label_source": ("label_source", str),
    "polarity.neutral_margin": ("neutral_margin", _float_opt),
    "run.seeds": ("seeds", _ints),
    "run.output_dir": ("output_dir", str),
    "finetune.epochs": ("finetune_epochs", int),
    "finetune.batch_size": ("finetune_batch_size", int),
    "finetune.learning_rate": ("finetune_learning_rate", float),
}
