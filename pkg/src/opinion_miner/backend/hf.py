"""Backend over a Hugging Face ``transformers`` checkpoint.

torch and transformers are imported lazily so the rest of the package works
without them.
"""

from __future__ import annotations

import logging
import math
import os
import random
from collections import OrderedDict
from pathlib import Path
from typing import Sequence

import numpy as np

from ..corpus import POLARITIES, TextCorpus, word_tokenize
from ..errors import AlignmentError, CapabilityError, InputError, SequenceTooLongError
from .base import (AdaptationConfig, AdaptationLog, Backend, TokenAlignment,
                   corpus_digest, prepare_run_dir, run_id)

log = logging.getLogger(__name__)

CACHE_ENV = "OPINION_MINER_CACHE"


def _require_torch():
    try:
        import torch
        import transformers
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise CapabilityError("the hf backend needs torch and transformers installed") from exc
    return torch, transformers


def _seed_everything(seed: int) -> None:
    torch, transformers = _require_torch()
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def align_offsets(text: str, offsets: Sequence[tuple[int, int]], special: Sequence[int]) -> TokenAlignment:
    """Build a word alignment from subtoken character offsets.

    A subtoken belongs to the word containing its first non-space character.
    Subtokens that cover only whitespace attach to the following word (or
    the preceding one at the end of the text).
    """
    words = word_tokenize(text)
    n = len(offsets)
    specials = {i for i in range(n) if special[i]}
    owner: dict[int, int] = {}
    for i, (a, b) in enumerate(offsets):
        if i in specials:
            continue
        while a < b and text[a].isspace():
            a += 1
        hit = None
        if a < b:
            for w, (_, ws, we) in enumerate(words):
                if ws <= a < we or (a < we and ws < b):
                    hit = w
                    break
        if hit is not None:
            owner[i] = hit
    pending = [i for i in range(n) if i not in specials and i not in owner]
    for i in pending:
        nxt = next((owner[j] for j in range(i + 1, n) if j in owner), None)
        prv = next((owner[j] for j in range(i - 1, -1, -1) if j in owner), None)
        if nxt is None and prv is None:
            raise InputError(f"cannot align subtoken {i} of {text!r}")
        owner[i] = nxt if nxt is not None else prv
    spans = []
    for w in range(len(words)):
        idx = sorted(i for i, o in owner.items() if o == w)
        if not idx or idx != list(range(idx[0], idx[-1] + 1)):
            raise AlignmentError([words[w][1:]], f"subtokens do not align with word {words[w][0]!r}")
        spans.append((idx[0], idx[-1]))
    return TokenAlignment(text, tuple(w for w, _, _ in words), tuple((a, b) for _, a, b in words),
                          tuple(spans), frozenset(specials), n)


class HFClassifier:
    def __init__(self, model, tokenizer, max_length: int):
        self.model = model
        self.tokenizer = tokenizer
        self.max_length = max_length

    def predict(self, pairs: Sequence[tuple[str, str]], batch_size: int = 32) -> list[str]:
        torch, _ = _require_torch()
        out = []
        self.model.eval()
        with torch.no_grad():
            for k in range(0, len(pairs), batch_size):
                chunk = pairs[k:k + batch_size]
                enc = self.tokenizer([t for t, _ in chunk], [a for _, a in chunk], padding=True,
                                     truncation=True, max_length=self.max_length, return_tensors="pt")
                logits = self.model(**enc).logits
                out.extend(POLARITIES[i] for i in logits.argmax(-1).tolist())
        return out


class HFBackend(Backend):
    name = "hf"

    def __init__(self, model_path: str, label_template: str | None = None, cache_dir: str | None = None,
                 forward_cache: int = 256):
        super().__init__(label_template)
        torch, transformers = _require_torch()
        self.model_path = str(model_path)
        self.cache_dir = cache_dir or os.environ.get(CACHE_ENV)
        kw = {"cache_dir": self.cache_dir} if self.cache_dir else {}
        self.tokenizer = transformers.AutoTokenizer.from_pretrained(self.model_path, **kw)
        if not getattr(self.tokenizer, "is_fast", False):
            raise CapabilityError("the hf backend needs a fast tokenizer (character offsets)")
        try:
            self.model = transformers.AutoModelForMaskedLM.from_pretrained(
                self.model_path, attn_implementation="eager", **kw)
            self._mlm = True
        except (ValueError, KeyError):
            self.model = transformers.AutoModel.from_pretrained(
                self.model_path, attn_implementation="eager", **kw)
            self._mlm = False
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        cfg = self.model.config
        self.n_layers = cfg.num_hidden_layers
        self.n_heads = cfg.num_attention_heads
        self.d_k = cfg.hidden_size // cfg.num_attention_heads
        limit = self.tokenizer.model_max_length
        if not limit or limit > 100_000:
            limit = getattr(cfg, "max_position_embeddings", 512)
        self.max_length = int(limit)
        self._forward_cache: OrderedDict[str, tuple] = OrderedDict()
        self._forward_cache_size = forward_cache

    def fingerprint(self) -> str:
        return f"hf:{Path(self.model_path).resolve() if Path(self.model_path).exists() else self.model_path}"

    @property
    def supports_training(self) -> bool:
        return self._mlm

    def _encode(self, text: str):
        if not text:
            raise InputError("empty text")
        enc = self.tokenizer(text, return_offsets_mapping=True, return_special_tokens_mask=True,
                             truncation=False)
        n = len(enc["input_ids"])
        if n > self.max_length:
            raise SequenceTooLongError(n, self.max_length)
        return enc

    def tokenize_with_alignment(self, text: str) -> TokenAlignment:
        enc = self._encode(text)
        return align_offsets(text, enc["offset_mapping"], enc["special_tokens_mask"])

    def _forward(self, text: str):
        if text in self._forward_cache:
            self._forward_cache.move_to_end(text)
            return self._forward_cache[text]
        torch, _ = _require_torch()
        enc = self._encode(text)
        ids = torch.tensor([enc["input_ids"]])
        mask = torch.ones_like(ids)
        with torch.no_grad():
            out = self.model(input_ids=ids, attention_mask=mask, output_attentions=True,
                             output_hidden_states=True)
        attn = np.stack([a[0].double().numpy() for a in out.attentions])
        hidden = out.hidden_states[-1][0].double().numpy()
        self._forward_cache[text] = (attn, hidden)
        if len(self._forward_cache) > self._forward_cache_size:
            self._forward_cache.popitem(last=False)
        return attn, hidden

    def _attention(self, text: str, layers):
        attn, _ = self._forward(text)
        return attn[list(layers)], self.d_k

    def _final_hidden(self, text: str) -> np.ndarray:
        return self._forward(text)[1]

    # -- training ----------------------------------------------------------

    def _mlm_loss(self, model, batches) -> float:
        torch, _ = _require_torch()
        model.eval()
        total, count = 0.0, 0
        with torch.no_grad():
            for batch in batches:
                total += float(model(**batch).loss) * batch["input_ids"].shape[0]
                count += batch["input_ids"].shape[0]
        return total / max(count, 1)

    def domain_adapt(self, corpus: TextCorpus, config: AdaptationConfig, run_root="runs") -> HFBackend:
        """Continue masked-token training on ``corpus``; the result is saved
        under ``run_root/<run id>/weights`` and returned as a new handle."""
        if not self._mlm:
            return super().domain_adapt(corpus, config, run_root)
        if not len(corpus):
            raise InputError("empty adaptation corpus")
        torch, transformers = _require_torch()
        digest = corpus_digest(corpus)
        rid = run_id(self.fingerprint(), digest, config.to_dict())
        run_dir = prepare_run_dir(run_root, rid, config, {
            "backend": "hf", "base": self.model_path, "corpus_sha256": digest,
            "n_documents": len(corpus), "provenance": list(corpus.provenance)})

        _seed_everything(config.seed)
        model = transformers.AutoModelForMaskedLM.from_pretrained(self.model_path, attn_implementation="eager")
        model.train()
        max_len = min(self.max_length, 512)
        enc = self.tokenizer(list(corpus.documents), truncation=True, max_length=max_len)
        n_truncated = sum(1 for ids in enc["input_ids"] if len(ids) >= max_len)
        if n_truncated:
            log.info("%d documents truncated to %d subtokens for adaptation", n_truncated, max_len)
        features = [{"input_ids": ids} for ids in enc["input_ids"]]
        mlm_collator = transformers.DataCollatorForLanguageModeling(
            self.tokenizer, mlm_probability=config.mask_probability)
        mask_id = self.tokenizer.mask_token_id

        def collator(items):
            # a batch without any masked token has an undefined (NaN) loss;
            # on short texts that happens, so mask the first real token then
            batch = mlm_collator(items)
            if not bool((batch["labels"] != -100).any()):
                pos = 1 if batch["input_ids"].shape[1] > 2 else 0
                batch["labels"][0, pos] = batch["input_ids"][0, pos]
                batch["input_ids"][0, pos] = mask_id
            return batch

        def fixed_batches(seed):
            # same masking before and after training so the losses compare
            torch.manual_seed(seed)
            return [collator(features[k:k + config.batch_size])
                    for k in range(0, len(features), config.batch_size)]

        probe = fixed_batches(config.seed + 1)
        initial = self._mlm_loss(model, probe)

        gen = torch.Generator().manual_seed(config.seed)
        loader = torch.utils.data.DataLoader(features, batch_size=config.batch_size, shuffle=True,
                                             collate_fn=collator, generator=gen)
        steps = math.ceil(len(loader) / config.grad_accum_steps) * config.epochs
        opt = torch.optim.AdamW([p for p in model.parameters() if p.requires_grad], lr=config.learning_rate)
        sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: max(0.0, 1.0 - s / max(steps, 1)))

        epoch_losses = []
        for epoch in range(config.epochs):
            model.train()
            running, seen = 0.0, 0
            opt.zero_grad()
            for k, batch in enumerate(loader):
                loss = model(**batch).loss
                (loss / config.grad_accum_steps).backward()
                running += float(loss.detach()) * batch["input_ids"].shape[0]
                seen += batch["input_ids"].shape[0]
                if (k + 1) % config.grad_accum_steps == 0 or k + 1 == len(loader):
                    opt.step()
                    sched.step()
                    opt.zero_grad()
            epoch_losses.append(running / max(seen, 1))
            log.info("epoch %d loss %.4f", epoch + 1, epoch_losses[-1])

        final = self._mlm_loss(model, probe)
        weights = run_dir / "weights"
        model.save_pretrained(weights)
        self.tokenizer.save_pretrained(weights)
        AdaptationLog(epoch_losses, initial, final).write(run_dir / "loss_log.json")
        adapted = HFBackend(str(weights), self.label_template, self.cache_dir)
        adapted.run_dir = run_dir
        return adapted

    def train_classifier(self, texts, labels, seed, epochs=1, batch_size=16, learning_rate=5e-5):
        torch, transformers = _require_torch()
        _seed_everything(seed)
        model = transformers.AutoModelForSequenceClassification.from_pretrained(
            self.model_path, num_labels=len(POLARITIES))
        model.train()
        max_len = min(self.max_length, 512)
        y = [POLARITIES.index(lab) for lab in labels]
        order_gen = torch.Generator().manual_seed(seed)
        opt = torch.optim.AdamW(model.parameters(), lr=learning_rate)
        for _ in range(epochs):
            perm = torch.randperm(len(texts), generator=order_gen).tolist()
            for k in range(0, len(perm), batch_size):
                idx = perm[k:k + batch_size]
                enc = self.tokenizer([texts[i][0] for i in idx], [texts[i][1] for i in idx], padding=True,
                                     truncation=True, max_length=max_len, return_tensors="pt")
                loss = model(**enc, labels=torch.tensor([y[i] for i in idx])).loss
                loss.backward()
                opt.step()
                opt.zero_grad()
        model.eval()
        return HFClassifier(model, self.tokenizer, max_len)
