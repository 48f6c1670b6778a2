"""Count-based n-gram sequence model with backoff interpolation.

This is the desk-scale stand-in behind the SequenceModel interface: a
next-token distribution p(t | context) built from interpolated add-k
order-m estimates,

    P_1 = smoothed unigram
    P_m = (1 - lam) * P_{m-1} + lam * (count(ctx_m, t) + k) / (count(ctx_m) + k*V)

applied bottom-up for every order whose context was seen in training.
With lam = 1 (the default) this is pure backoff to the longest seen
context, which makes a no-smoothing model reproduce a memorized corpus
with probability one at every step.  Contexts are left-padded with an
internal BOS id so the first tokens of a sequence are modeled like any
other position.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import CorpusError, VocabularyError
from .events import Layout, Repr, TokenSequence, Vocabulary

MODEL_FORMAT = "functok-ngram"
MODEL_VERSION = 1


class SequenceModel(Protocol):
    """Anything that turns a token-id prefix into a next-token distribution.

    The returned vector is non-negative and sums to one within 1e-6, with
    one entry per vocabulary id.
    """

    vocab: Vocabulary

    def next_distribution(self, context: Sequence[int]) -> np.ndarray: ...


@dataclass
class NGramModel:
    vocab: Vocabulary
    order: int
    smoothing: float = 0.0
    interpolation: float = 1.0
    counts: list[dict[tuple[int, ...], Counter]] = field(default_factory=list)
    totals: list[dict[tuple[int, ...], int]] = field(default_factory=list)
    _cache: dict[tuple[int, ...], np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if self.smoothing < 0:
            raise ValueError(f"smoothing must be >= 0, got {self.smoothing}")
        if not 0 < self.interpolation <= 1:
            raise ValueError("interpolation weight must be in (0, 1]")
        if not self.counts:
            self.counts = [{} for _ in range(self.order)]
            self.totals = [{} for _ in range(self.order)]

    @property
    def bos(self) -> int:
        """Internal padding id, one past the vocabulary."""
        return len(self.vocab)

    def _padded_context(self, context: Sequence[int]) -> tuple[int, ...]:
        tail = tuple(context[-(self.order - 1):]) if self.order > 1 else ()
        pad = (self.bos,) * (self.order - 1 - len(tail))
        return pad + tail

    def _order_dist(self, m: int, ctx: tuple[int, ...]) -> np.ndarray | None:
        total = self.totals[m].get(ctx)
        if total is None:
            return None
        size = len(self.vocab)
        dist = np.zeros(size)
        for token, count in self.counts[m][ctx].items():
            dist[token] = count
        k = self.smoothing
        return (dist + k) / (total + k * size) if k > 0 else dist / total

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        ctx = self._padded_context(context)
        cached = self._cache.get(ctx)
        if cached is not None:
            return cached
        size = len(self.vocab)
        dist = self._order_dist(0, ())
        if dist is None:  # untrained model
            dist = np.full(size, 1.0 / size)
        for m in range(1, self.order):
            sub = ctx[-m:]
            higher = self._order_dist(m, sub)
            if higher is not None:
                lam = self.interpolation
                dist = (1.0 - lam) * dist + lam * higher
        if len(self._cache) > 100_000:
            self._cache.clear()
        self._cache[ctx] = dist
        return dist

    def observe(self, ids: Sequence[int]) -> None:
        """Count one sequence (all orders, BOS-padded contexts)."""
        padded = (self.bos,) * (self.order - 1) + tuple(ids)
        for t, token in enumerate(ids):
            end = t + self.order - 1
            for m in range(self.order):
                ctx = padded[end - m : end]
                self.counts[m].setdefault(ctx, Counter())[token] += 1
                self.totals[m][ctx] = self.totals[m].get(ctx, 0) + 1
        self._cache.clear()


def train_ngram(
    corpus: Sequence[TokenSequence],
    order: int,
    smoothing: float = 0.0,
    interpolation: float = 1.0,
) -> NGramModel:
    """Count a corpus into an NGramModel; deterministic in corpus order."""
    if not corpus:
        raise CorpusError("cannot train on an empty corpus")
    rep, layout = corpus[0].repr, corpus[0].layout
    for seq in corpus:
        if seq.repr is not rep or seq.layout is not layout:
            raise CorpusError(
                f"mixed vocabularies: {seq.repr.value}/{seq.layout.value} vs "
                f"{rep.value}/{layout.value}"
            )
    vocab = Vocabulary(rep, layout)
    model = NGramModel(vocab, order, smoothing, interpolation)
    for seq in corpus:
        model.observe(vocab.encode(seq.events))
    return model


def evaluate_nll(model: SequenceModel, seq: TokenSequence) -> tuple[float, float]:
    """(negative log likelihood, perplexity) of one sequence under a model.

    A zero-probability token yields an infinite NLL (reported, not raised).
    """
    ids = model.vocab.encode(seq.events)
    if not ids:
        raise ValueError("cannot evaluate an empty sequence")
    nll = 0.0
    for t, token in enumerate(ids):
        p = float(model.next_distribution(ids[:t])[token])
        if p <= 0:
            return float("inf"), float("inf")
        nll -= np.log(p)
    return float(nll), float(np.exp(nll / len(ids)))


# ---------------------------------------------------------------------------
# Deterministic model files
# ---------------------------------------------------------------------------


def save_model(model: NGramModel, path) -> None:
    """Two JSON lines: a header (format/version/order/...) then the counts."""
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "order": model.order,
        "smoothing": model.smoothing,
        "interpolation": model.interpolation,
        "repr": model.vocab.repr.value,
        "layout": model.vocab.layout.value,
        "vocab_sha": model.vocab.sha(),
    }
    body = {
        "counts": [
            {
                ",".join(map(str, ctx)): sorted(counter.items())
                for ctx, counter in sorted(model.counts[m].items())
            }
            for m in range(model.order)
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
        json.dump(body, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> NGramModel:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        body = json.loads(fh.readline())
    if header.get("format") != MODEL_FORMAT or header.get("version") != MODEL_VERSION:
        raise VocabularyError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} file: {path}")
    vocab = Vocabulary(Repr(header["repr"]), Layout(header["layout"]))
    if vocab.sha() != header["vocab_sha"]:
        raise VocabularyError("model file vocabulary hash mismatch")
    model = NGramModel(
        vocab, header["order"], header["smoothing"], header["interpolation"]
    )
    for m, table in enumerate(body["counts"]):
        for ctx_str, pairs in table.items():
            ctx = tuple(int(x) for x in ctx_str.split(",")) if ctx_str else ()
            counter = Counter({int(token): count for token, count in pairs})
            model.counts[m][ctx] = counter
            model.totals[m][ctx] = sum(counter.values())
    return model
