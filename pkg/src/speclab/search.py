"""Left-to-right path search over the drafted candidate lattice.

Columns are pruned to the smallest prefix of candidates whose cumulative
probability clears a mass threshold, EOS is optionally retained, expansion
stops at the first column whose top candidate is EOS, and paths are ranked
by a mix of drafter confidence and causal n-gram fluency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .drafter import LatticeColumn, TokenLattice
from .models import NGramModel, ar_conditional

MASS_EPS = 1e-12


@dataclass(frozen=True)
class PruneConfig:
    tau: float = 0.8
    m_max: int = 15
    keep_eos: bool = True
    renormalize_column: bool = False  # measure tau over the truncated column instead of the full vocab

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.m_max < 1:
            raise ValueError(f"m_max must be >= 1, got {self.m_max}")


@dataclass(frozen=True)
class SearchConfig:
    beam: int = 3
    lam: float = 0.5
    prune: PruneConfig = field(default_factory=PruneConfig)
    eos_stop_on_any: bool = False  # stop depth at any column containing EOS, not just argmax-EOS

    def __post_init__(self):
        if self.beam < 1:
            raise ValueError(f"beam must be >= 1, got {self.beam}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class Path:
    """A left-to-right token path with its mixed score and per-step components."""

    tokens: tuple[int, ...]
    score: float
    dlm_scores: tuple[float, ...]
    ngram_scores: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class SearchStats:
    expansions: int = 0


def prune_column(column: LatticeColumn, cfg: PruneConfig, eos_id: int) -> LatticeColumn:
    """Keep the smallest score-ordered prefix whose mass reaches tau, capped at m_max.

    If no prefix within the cap reaches tau, the cap wins. A pruned-away EOS
    is re-appended when keep_eos is set.
    """
    if len(column) == 0:
        raise ValueError("empty lattice column")
    probs = np.exp(np.asarray(column.scores))
    if cfg.renormalize_column:
        probs = probs / probs.sum()
    keep = min(len(column), cfg.m_max)
    cum = 0.0
    for m in range(1, min(len(column), cfg.m_max) + 1):
        cum += probs[m - 1]
        if cum >= cfg.tau - MASS_EPS:
            keep = m
            break
    ids = list(column.token_ids[:keep])
    scores = list(column.scores[:keep])
    if cfg.keep_eos and eos_id in column.token_ids[keep:]:
        at = column.token_ids.index(eos_id)
        ids.append(eos_id)
        scores.append(column.scores[at])
    return LatticeColumn(tuple(ids), tuple(scores))


def path_score(
    prefix: Sequence[int],
    path: Sequence[int],
    lattice: TokenLattice,
    proxy: NGramModel,
    lam: float,
) -> float:
    """Mixed score: sum over steps of lam*drafter + (1-lam)*proxy log-scores."""
    total = 0.0
    ctx = list(prefix)
    for i, tok in enumerate(path):
        dlm = lattice.columns[i].score_of(tok)
        if dlm is None:
            raise ValueError(f"off-lattice token {tok} at offset {i + 1}")
        total += lam * dlm + (1.0 - lam) * float(ar_conditional(proxy, ctx).log_probs[tok])
        ctx.append(tok)
    return total


def stop_depth(columns: Sequence[LatticeColumn], eos_id: int, on_any: bool = False) -> int:
    """Expansion depth: up to and including the first EOS-capped column."""
    for d, col in enumerate(columns):
        if (eos_id in col.token_ids) if on_any else (col.token_ids[0] == eos_id):
            return d + 1
    return len(columns)


@dataclass(frozen=True)
class _Hyp:
    score: float
    tokens: tuple[int, ...]
    dlm: tuple[float, ...]
    ngram: tuple[float, ...]


def _best(hyps: list[_Hyp]) -> _Hyp:
    return min(hyps, key=lambda h: (-h.score, h.tokens))


def beam_search(
    prefix: Sequence[int],
    lattice: TokenLattice,
    proxy: NGramModel,
    cfg: SearchConfig,
    eos_id: int,
    stats: SearchStats | None = None,
) -> Path:
    """Beam over pruned columns; EOS freezes a hypothesis; ties break lexicographically."""
    if len(lattice) == 0:
        raise ValueError("empty lattice")
    pruned = [prune_column(col, cfg.prune, eos_id) for col in lattice.columns]
    depth = stop_depth(pruned, eos_id, cfg.eos_stop_on_any)
    live = [_Hyp(0.0, (), (), ())]
    finished: list[_Hyp] = []
    for d in range(depth):
        col = pruned[d]
        grown: list[_Hyp] = []
        for hyp in live:
            ng = ar_conditional(proxy, list(prefix) + list(hyp.tokens)).log_probs
            for tok, dlm in zip(col.token_ids, col.scores):
                if stats is not None:
                    stats.expansions += 1
                ng_tok = float(ng[tok])
                ext = _Hyp(
                    hyp.score + cfg.lam * dlm + (1.0 - cfg.lam) * ng_tok,
                    hyp.tokens + (tok,),
                    hyp.dlm + (dlm,),
                    hyp.ngram + (ng_tok,),
                )
                if tok == eos_id:
                    finished.append(ext)
                else:
                    grown.append(ext)
        grown.sort(key=lambda h: (-h.score, h.tokens))
        live = grown[: cfg.beam]
        if not live:
            break
    survivors = finished + live
    best = _best(survivors)
    return Path(best.tokens, best.score, best.dlm, best.ngram)


def greedy_column_path(
    prefix: Sequence[int],
    lattice: TokenLattice,
    proxy: NGramModel,
    lam: float,
    eos_id: int,
    eos_stop_on_any: bool = False,
) -> Path:
    """Per-column argmax path with the same EOS depth rule (search disabled)."""
    depth = stop_depth(lattice.columns, eos_id, eos_stop_on_any)
    tokens: list[int] = []
    dlm: list[float] = []
    ngram: list[float] = []
    score = 0.0
    ctx = list(prefix)
    for d in range(depth):
        col = lattice.columns[d]
        tok = col.token_ids[0]
        ng_tok = float(ar_conditional(proxy, ctx).log_probs[tok])
        tokens.append(tok)
        dlm.append(col.scores[0])
        ngram.append(ng_tok)
        score += lam * col.scores[0] + (1.0 - lam) * ng_tok
        ctx.append(tok)
        if tok == eos_id:
            break
    return Path(tuple(tokens), score, tuple(dlm), tuple(ngram))


def brute_force_best(
    prefix: Sequence[int],
    lattice: TokenLattice,
    proxy: NGramModel,
    lam: float,
    eos_id: int,
    budget: int = 200_000,
    eos_stop_on_any: bool = False,
) -> Path:
    """Exhaustive argmax of the mixed score under the same EOS truncation rule."""
    depth = stop_depth(lattice.columns, eos_id, eos_stop_on_any)
    size = math.prod(len(col) for col in lattice.columns[:depth])
    if size > budget:
        raise ValueError(f"enumeration budget exceeded: {size} paths > {budget}")
    complete: list[_Hyp] = []

    def walk(d: int, hyp: _Hyp) -> None:
        col = lattice.columns[d]
        ng = ar_conditional(proxy, list(prefix) + list(hyp.tokens)).log_probs
        for tok, dlm in zip(col.token_ids, col.scores):
            ng_tok = float(ng[tok])
            ext = _Hyp(
                hyp.score + lam * dlm + (1.0 - lam) * ng_tok,
                hyp.tokens + (tok,),
                hyp.dlm + (dlm,),
                hyp.ngram + (ng_tok,),
            )
            if tok == eos_id or d + 1 == depth:
                complete.append(ext)
            else:
                walk(d + 1, ext)

    walk(0, _Hyp(0.0, (), (), ()))
    best = _best(complete)
    return Path(best.tokens, best.score, best.dlm, best.ngram)
