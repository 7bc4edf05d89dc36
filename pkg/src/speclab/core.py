"""Shared primitives: vocabulary, log-space categoricals, deterministic RNG."""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

import numpy as np

LOG_ZERO = float("-inf")
PROB_FLOOR = 1e-300
NORM_TOL = 1e-9

BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
MASK_TOKEN = "<mask>"
UNK_TOKEN = "<unk>"
RESERVED_PREFIX = (BOS_TOKEN, MASK_TOKEN, UNK_TOKEN)


class Vocabulary:
    """Dense token-id table: three control tokens, then words, then EOS last.

    Only regular tokens plus EOS are *emittable*: every conditional built by
    the models places zero mass on bos, mask and unk, so sampling can never
    produce them. bos pads short contexts, mask marks undrafted positions,
    unk absorbs out-of-vocabulary text at tokenization time. EOS takes the
    highest id on purpose: argmax ties break toward the lowest id, so a
    clueless (uniform) conditional resolves to a content token rather than
    spuriously terminating the output.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:3]) != RESERVED_PREFIX or tokens[-1] != EOS_TOKEN:
            raise ValueError(f"vocabulary must start with {RESERVED_PREFIX} and end with {EOS_TOKEN!r}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate token strings in vocabulary")
        self.tokens = tokens
        self._index = {tok: i for i, tok in enumerate(tokens)}
        self.bos_id = 0
        self.mask_id = 1
        self.unk_id = 2
        self.eos_id = len(tokens) - 1
        mask = np.ones(len(tokens), dtype=bool)
        mask[[self.bos_id, self.mask_id, self.unk_id]] = False
        self.emittable_mask = mask
        self.emittable_ids = np.flatnonzero(mask)
        self.num_emittable = int(mask.sum())

    @classmethod
    def build(cls, words: Iterable[str]) -> "Vocabulary":
        """Vocabulary over the distinct non-reserved words, sorted for determinism."""
        uniq = sorted(set(words) - {BOS_TOKEN, EOS_TOKEN, MASK_TOKEN, UNK_TOKEN})
        return cls(list(RESERVED_PREFIX) + uniq + [EOS_TOKEN])

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, words: Iterable[str]) -> list[int]:
        return [self._index.get(w, self.unk_id) for w in words]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def to_dict(self) -> dict:
        return {"tokens": self.tokens}

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabulary":
        return cls(payload["tokens"])


def validate_sequence(ids: Sequence[int], vocab: Vocabulary, allow_mask: bool = False) -> None:
    for i in ids:
        if not 0 <= i < len(vocab):
            raise ValueError(f"token id {i} outside vocabulary of size {len(vocab)}")
        if i == vocab.mask_id and not allow_mask:
            raise ValueError("mask id in a committed sequence")


def log_normalize(scores: np.ndarray) -> np.ndarray:
    """Shift log scores so they exponentiate to a normalized distribution."""
    m = np.max(scores)
    if m == LOG_ZERO:
        raise ValueError("all log scores are -inf")
    return scores - (m + np.log(np.sum(np.exp(scores - m))))


class Categorical:
    """Natural-log probabilities over the full vocabulary-sized support.

    Entries are finite or -inf; exp(log_probs) must sum to 1 within 1e-9.
    Instances are immutable by convention and cache derived arrays.
    """

    __slots__ = ("log_probs", "_probs", "_cdf")

    def __init__(self, log_probs: np.ndarray):
        lp = np.asarray(log_probs, dtype=np.float64)
        if lp.ndim != 1 or lp.size == 0:
            raise ValueError("log_probs must be a non-empty vector")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise ValueError("log_probs must be finite or -inf")
        total = np.sum(np.exp(lp))
        if not total > 0:
            raise ValueError("distribution has no support")
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1 within {NORM_TOL}")
        self.log_probs = lp
        self._probs = None
        self._cdf = None

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "Categorical":
        p = np.asarray(probs, dtype=np.float64)
        lp = np.full(p.shape, LOG_ZERO)
        live = p >= PROB_FLOOR
        with np.errstate(divide="ignore"):
            lp[live] = np.log(p[live])
        return cls(lp)

    @classmethod
    def from_log_scores(cls, scores: np.ndarray) -> "Categorical":
        return cls(log_normalize(np.asarray(scores, dtype=np.float64)))

    def probs(self) -> np.ndarray:
        if self._probs is None:
            self._probs = np.exp(self.log_probs)
        return self._probs

    def cdf(self) -> np.ndarray:
        if self._cdf is None:
            self._cdf = np.cumsum(self.probs())
        return self._cdf

    def __len__(self) -> int:
        return self.log_probs.size


class Rng:
    """Counter-based deterministic generator with labeled substreams.

    Streams are keyed by sha256(seed, label), so the draw sequence is
    reproducible across runs and platforms, and consuming one substream
    never perturbs another.
    """

    def __init__(self, seed: int, label: str = "root"):
        self.seed = int(seed)
        self.label = label
        digest = hashlib.sha256(f"{self.seed}|{label}".encode()).digest()
        self._gen = np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "little")))

    def substream(self, label: str) -> "Rng":
        return Rng(self.seed, f"{self.label}/{label}")

    def uniform(self) -> float:
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(n)


def _index_from_cdf(cdf: np.ndarray, probs: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= cdf.size:
        idx = cdf.size - 1
    while idx > 0 and probs[idx] <= 0.0:
        idx -= 1  # float residue at the top of the cdf can land past the support
    return idx


def sample(dist: Categorical, rng: Rng) -> int:
    """Draw one token id; consumes exactly one uniform from rng."""
    return _index_from_cdf(dist.cdf(), dist.probs(), rng.uniform())


def sample_from_probs(probs: np.ndarray, rng: Rng) -> int:
    """Inverse-cdf draw from an already-normalized probability vector."""
    return _index_from_cdf(np.cumsum(probs), probs, rng.uniform())


def argmax(dist: Categorical) -> int:
    """Id of the largest log-prob; ties break toward the lowest id."""
    return int(np.argmax(dist.log_probs))
