"""Corpus ingestion: one document per line, whitespace or byte tokenization,
index-based train/test splits, and a seeded synthetic-corpus generator for
self-contained benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Rng, Vocabulary

MODE_WHITESPACE = "whitespace"
MODE_BYTE = "byte"


def tokenize(text: str, mode: str) -> list[str]:
    if mode == MODE_WHITESPACE:
        return text.split()
    if mode == MODE_BYTE:
        return [f"{b:02x}" for b in text.encode("utf-8")]
    raise ValueError(f"unknown tokenization mode {mode!r}")


def detokenize(words: Sequence[str], mode: str) -> str:
    if mode == MODE_WHITESPACE:
        return " ".join(words)
    if mode == MODE_BYTE:
        return bytes(int(w, 16) for w in words).decode("utf-8")
    raise ValueError(f"unknown tokenization mode {mode!r}")


def read_lines(path: str | Path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line for line in lines if line.strip()]


@dataclass
class Corpus:
    documents: list[list[int]]
    vocab: Vocabulary
    mode: str
    test_mod: int

    def train_docs(self) -> list[list[int]]:
        return [d for i, d in enumerate(self.documents) if i % self.test_mod != self.test_mod - 1]

    def test_docs(self) -> list[list[int]]:
        return [d for i, d in enumerate(self.documents) if i % self.test_mod == self.test_mod - 1]


def build_vocabulary(lines: Iterable[str], mode: str) -> Vocabulary:
    words: set[str] = set()
    for line in lines:
        words.update(tokenize(line, mode))
    return Vocabulary.build(words)


def load_corpus(path: str | Path, mode: str = MODE_WHITESPACE, test_mod: int = 5) -> Corpus:
    """Read documents and tokenize them against a vocabulary built from the
    training split only, so held-out text never leaks into the token table."""
    if test_mod < 2:
        raise ValueError(f"test_mod must be >= 2, got {test_mod}")
    lines = read_lines(path)
    if not lines:
        raise ValueError("empty corpus")
    train_lines = [line for i, line in enumerate(lines) if i % test_mod != test_mod - 1]
    vocab = build_vocabulary(train_lines if train_lines else lines, mode)
    docs = [vocab.encode(tokenize(line, mode)) for line in lines]
    return Corpus(documents=docs, vocab=vocab, mode=mode, test_mod=test_mod)


def prompts_from_docs(docs: Sequence[Sequence[int]], prompt_tokens: int, limit: int | None = None) -> list[list[int]]:
    """Document openings long enough to leave something to generate."""
    prompts = [list(d[:prompt_tokens]) for d in docs if len(d) > prompt_tokens]
    return prompts[:limit] if limit is not None else prompts


def load_prompts(path: str | Path, vocab: Vocabulary, mode: str) -> list[list[int]]:
    return [vocab.encode(tokenize(line, mode)) for line in read_lines(path)]


_SYLLABLES = ("ba", "do", "ki", "lu", "mo", "na", "re", "si", "ta", "vu")


def _word(idx: int) -> str:
    return _SYLLABLES[idx // 10] + _SYLLABLES[idx % 10]


def synthesize_corpus(
    seed: int,
    n_docs: int = 500,
    n_words: int = 60,
    min_len: int = 20,
    max_len: int = 80,
    branch: int = 3,
) -> list[str]:
    """Deterministic pseudo-text from a sparse second-order word chain.

    Every (previous, current) word pair maps to a fixed small successor set
    with peaky probabilities, so trigram models pick up real structure while
    bigram models only see a blurred version of it. Returns one document per
    line, ready to be written to a corpus file.
    """
    if n_words > len(_SYLLABLES) ** 2:
        raise ValueError(f"at most {len(_SYLLABLES) ** 2} distinct words")
    words = [_word(i) for i in range(n_words)]
    successor_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def successors(a: int, b: int) -> tuple[np.ndarray, np.ndarray]:
        hit = successor_cache.get((a, b))
        if hit is not None:
            return hit
        gen = Rng(seed, f"chain/{a}/{b}")
        choices = np.unique((gen.uniforms(branch) * n_words).astype(int))
        raw = gen.uniforms(len(choices)) + 0.25
        weights = np.sort(raw)[::-1]
        weights = weights**3  # sharpen so the top successor dominates
        probs = weights / weights.sum()
        successor_cache[(a, b)] = (choices, probs)
        return choices, probs

    docs = []
    for d in range(n_docs):
        gen = Rng(seed, f"doc/{d}")
        length = min_len + int(gen.uniform() * (max_len - min_len + 1))
        a = int(gen.uniform() * n_words)
        b = int(gen.uniform() * n_words)
        ids = [a, b]
        while len(ids) < length:
            choices, probs = successors(ids[-2], ids[-1])
            u = gen.uniform()
            ids.append(int(choices[np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(choices) - 1)]))
        docs.append(" ".join(words[i] for i in ids))
    return docs
