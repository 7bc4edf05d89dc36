"""Count-based token models: a smoothed n-gram and a two-sided masked denoiser.

The n-gram plays two roles: the autoregressive target being accelerated and
the causal proxy used to score candidate paths. The denoiser mixes a forward
n-gram with one trained on the reversed corpus, which lets it score a masked
position from both sides of its context.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LOG_ZERO, Categorical, Vocabulary, log_normalize

MODEL_FORMAT_VERSION = 1


class NGramModel:
    """Add-k smoothed n-gram over token ids.

    Count tables are keyed by exact context tuples of length order-1.
    Shorter tuples are legal lookups; when unseen they fall back to the
    smoothed uniform over the emittable vocabulary. Conditionals place zero
    mass on bos/mask/unk so sampling can never emit them.
    """

    def __init__(
        self,
        order: int,
        k_add: float,
        vocab: Vocabulary,
        counts: dict[tuple[int, ...], dict[int, int]] | None = None,
        totals: dict[tuple[int, ...], int] | None = None,
    ):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if k_add <= 0:
            raise ValueError(f"k_add must be positive, got {k_add}")
        self.order = order
        self.k_add = float(k_add)
        self.vocab = vocab
        self._counts = counts if counts is not None else {}
        self._totals = totals if totals is not None else {}
        self._cache: dict[tuple[int, ...], Categorical] = {}

    def _observe(self, doc: Sequence[int]) -> None:
        pad = self.order - 1
        ids = [self.vocab.bos_id] * pad + list(doc) + [self.vocab.eos_id]
        for i in range(pad, len(ids)):
            ctx = tuple(ids[i - pad : i])
            nxt = ids[i]
            slot = self._counts.setdefault(ctx, {})
            slot[nxt] = slot.get(nxt, 0) + 1
            self._totals[ctx] = self._totals.get(ctx, 0) + 1

    def conditional(self, context: Sequence[int]) -> Categorical:
        """Next-token distribution given at most the last order-1 context ids."""
        ctx = tuple(context[len(context) - (self.order - 1) :]) if self.order > 1 else ()
        hit = self._cache.get(ctx)
        if hit is not None:
            return hit
        counts = self._counts.get(ctx)
        total = self._totals.get(ctx, 0)
        denom = total + self.k_add * self.vocab.num_emittable
        probs = np.zeros(len(self.vocab))
        probs[self.vocab.emittable_ids] = self.k_add / denom
        if counts:
            for tok, c in counts.items():
                probs[tok] += c / denom
        dist = Categorical.from_probs(probs)
        self._cache[ctx] = dist
        return dist

    def log_prob(self, context: Sequence[int], token: int) -> float:
        return float(self.conditional(context).log_probs[token])

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "ngram",
            "order": self.order,
            "k_add": self.k_add,
            "vocab": self.vocab.to_dict(),
            "counts": {
                " ".join(map(str, ctx)): {str(t): c for t, c in sorted(slot.items())}
                for ctx, slot in sorted(self._counts.items())
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NGramModel":
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {payload.get('format_version')!r}")
        vocab = Vocabulary.from_dict(payload["vocab"])
        counts: dict[tuple[int, ...], dict[int, int]] = {}
        totals: dict[tuple[int, ...], int] = {}
        for key, slot in payload["counts"].items():
            ctx = tuple(int(x) for x in key.split()) if key else ()
            parsed = {int(t): int(c) for t, c in slot.items()}
            counts[ctx] = parsed
            totals[ctx] = sum(parsed.values())
        return cls(payload["order"], payload["k_add"], vocab, counts, totals)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "NGramModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_ngram(corpus: Sequence[Sequence[int]], order: int, k_add: float, vocab: Vocabulary) -> NGramModel:
    """Count n-grams over bos-padded, eos-terminated documents."""
    if not corpus:
        raise ValueError("empty corpus")
    model = NGramModel(order, k_add, vocab)
    for doc in corpus:
        model._observe(doc)
    return model


def ar_conditional(model: NGramModel, prefix: Sequence[int]) -> Categorical:
    """Autoregressive next-token distribution; short prefixes are bos-padded."""
    need = model.order - 1
    ctx = list(prefix[len(prefix) - need :]) if need else []
    if len(ctx) < need:
        ctx = [model.vocab.bos_id] * (need - len(ctx)) + ctx
    return model.conditional(ctx)


class BidirectionalDenoiser:
    """Scores a masked position by mixing forward and reversed n-gram views.

    The context windows gather the nearest *unmasked* neighbors on each side,
    so masked positions contribute nothing. A left window that reaches the
    sequence start is bos-padded (a genuine document boundary); a right
    window that runs off the drafted end stays short, which an n-gram treats
    as an unseen context.
    """

    def __init__(self, forward: NGramModel, backward: NGramModel, w_bi: float, vocab: Vocabulary):
        if not 0.0 <= w_bi <= 1.0:
            raise ValueError(f"w_bi must be in [0, 1], got {w_bi}")
        self.forward = forward
        self.backward = backward
        self.w_bi = float(w_bi)
        self.vocab = vocab
        self._cache: dict[tuple, Categorical] = {}

    def with_weight(self, w_bi: float) -> "BidirectionalDenoiser":
        return BidirectionalDenoiser(self.forward, self.backward, w_bi, self.vocab)

    def _left_window(self, ctx: Sequence[int], i: int) -> tuple[int, ...]:
        need = self.forward.order - 1
        window: list[int] = []
        j = i - 1
        while j >= 0 and len(window) < need:
            if ctx[j] != self.vocab.mask_id:
                window.append(ctx[j])
            j -= 1
        window.reverse()
        if j < 0 and len(window) < need:
            window = [self.vocab.bos_id] * (need - len(window)) + window
        return tuple(window)

    def _right_window(self, ctx: Sequence[int], i: int) -> tuple[int, ...]:
        need = self.backward.order - 1
        window: list[int] = []
        j = i + 1
        while j < len(ctx) and len(window) < need:
            if ctx[j] != self.vocab.mask_id:
                window.append(ctx[j])
            j += 1
        window.reverse()  # reversed-corpus models read right context farthest-first
        return tuple(window)

    def conditional(self, ctx: Sequence[int], i: int) -> Categorical:
        """Distribution for the masked position i of ctx."""
        if ctx[i] != self.vocab.mask_id:
            raise ValueError("position already filled")
        left = self._left_window(ctx, i)
        right = self._right_window(ctx, i)
        key = (left, right)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self.w_bi == 1.0:
            dist = self.forward.conditional(left)
        elif self.w_bi == 0.0:
            dist = self.backward.conditional(right)
        else:
            f = self.forward.conditional(left).log_probs
            b = self.backward.conditional(right).log_probs
            mixed = np.full(len(self.vocab), LOG_ZERO)
            emit = self.vocab.emittable_ids
            mixed[emit] = self.w_bi * f[emit] + (1.0 - self.w_bi) * b[emit]
            dist = Categorical(log_normalize(mixed))
        self._cache[key] = dist
        return dist

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "denoiser",
            "w_bi": self.w_bi,
            "forward": self.forward.to_dict(),
            "backward": self.backward.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BidirectionalDenoiser":
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {payload.get('format_version')!r}")
        forward = NGramModel.from_dict(payload["forward"])
        backward = NGramModel.from_dict(payload["backward"])
        return cls(forward, backward, payload["w_bi"], forward.vocab)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "BidirectionalDenoiser":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_denoiser(
    corpus: Sequence[Sequence[int]],
    order: int,
    k_add: float,
    w_bi: float,
    vocab: Vocabulary,
) -> BidirectionalDenoiser:
    """Fit the forward model on the corpus and the backward model on its reversal."""
    forward = train_ngram(corpus, order, k_add, vocab)
    backward = train_ngram([list(reversed(doc)) for doc in corpus], order, k_add, vocab)
    return BidirectionalDenoiser(forward, backward, w_bi, vocab)
