"""Masked-block drafting: corruption, iterative refinement, candidate lattice.

A draft block of length k starts fully masked after the committed prefix.
Refinement rounds score the still-masked positions, fill the most confident
subset with their argmax, and repeat until nothing is masked. The lattice is
then extracted by re-masking each drafted position in the final block and
recording the top candidates of its conditional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Categorical, Rng, argmax, sample_from_probs
from .models import BidirectionalDenoiser


@dataclass(frozen=True)
class CorruptionConfig:
    """Noise level plus the distribution corrupted positions are redrawn from."""

    eta: float
    noise_prior: Categorical

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")


def mask_point_prior(vocab_size: int, mask_id: int) -> Categorical:
    probs = np.zeros(vocab_size)
    probs[mask_id] = 1.0
    return Categorical.from_probs(probs)


def corrupt(x: Sequence[int], cfg: CorruptionConfig, rng: Rng) -> list[int]:
    """Independently keep each position with prob 1-eta, else redraw from the prior.

    Draw order: one uniform per position (the keep/flip coin, left to right),
    then one uniform per flipped position.
    """
    out = list(x)
    if not out:
        return out
    flips = rng.uniforms(len(out)) < cfg.eta
    probs = cfg.noise_prior.probs()
    for idx in np.flatnonzero(flips):
        out[idx] = sample_from_probs(probs, rng)
    return out


@dataclass
class RefinementState:
    """Working block during refinement: prefix + draft slots, masked set, caches."""

    block: list[int]
    start: int
    masked: set[int]
    step: int
    column_dists: list[Categorical] = field(default_factory=list)

    def draft(self) -> list[int]:
        return self.block[self.start :]


@dataclass(frozen=True)
class LatticeColumn:
    """Candidates for one drafted position, sorted by score desc (ties: id asc)."""

    token_ids: tuple[int, ...]
    scores: tuple[float, ...]

    def score_of(self, token_id: int) -> float | None:
        for tok, sc in zip(self.token_ids, self.scores):
            if tok == token_id:
                return sc
        return None

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class TokenLattice:
    """Per-position candidate sets over a drafted block starting at `start`."""

    start: int
    columns: tuple[LatticeColumn, ...]

    def __len__(self) -> int:
        return len(self.columns)


def build_column(dist: Categorical, m_max: int) -> LatticeColumn:
    lp = dist.log_probs
    finite = np.flatnonzero(lp > float("-inf"))
    order = finite[np.lexsort((finite, -lp[finite]))][:m_max]
    return LatticeColumn(tuple(int(t) for t in order), tuple(float(lp[t]) for t in order))


def refine(
    denoiser: BidirectionalDenoiser,
    prefix: Sequence[int],
    k: int,
    steps: int = 1,
    top_k_refine: int = 1,
    m_max: int = 15,
) -> tuple[RefinementState, TokenLattice]:
    """Fill a length-k masked block in `steps` rounds and extract its lattice.

    Each round scores every still-masked position, picks the top-`top_k_refine`
    by confidence (max probability; position ties break low), and fills them
    with their argmax. The final round always fills everything left. Lattice
    column i is the conditional of the finished block with position i
    re-masked, truncated to its m_max best candidates.
    """
    if k < 1:
        raise ValueError(f"draft length must be >= 1, got {k}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if top_k_refine < 1:
        raise ValueError(f"top_k_refine must be >= 1, got {top_k_refine}")
    mask_id = denoiser.vocab.mask_id
    start = len(prefix)
    state = RefinementState(block=list(prefix) + [mask_id] * k, start=start, masked=set(range(k)), step=0)
    for s in range(1, steps + 1):
        if not state.masked:
            break
        pending = sorted(state.masked)
        dists = {off: denoiser.conditional(state.block, start + off) for off in pending}
        if s == steps:
            chosen = pending
        else:
            ranked = sorted(pending, key=lambda off: (-np.max(dists[off].log_probs), off))
            chosen = ranked[:top_k_refine]
        for off in chosen:
            state.block[start + off] = argmax(dists[off])
            state.masked.discard(off)
        state.step = s
    columns = []
    for off in range(k):
        kept = state.block[start + off]
        state.block[start + off] = mask_id
        dist = denoiser.conditional(state.block, start + off)
        state.block[start + off] = kept
        state.column_dists.append(dist)
        columns.append(build_column(dist, m_max))
    return state, TokenLattice(start=start, columns=tuple(columns))


def expected_refine_rounds(k: int, top_k_refine: int) -> int:
    return math.ceil(k / top_k_refine)


def l2r_proxy(
    denoiser: BidirectionalDenoiser,
    prefix: Sequence[int],
    block_so_far: Sequence[int],
    k: int,
    i: int,
    uses_past_block: bool = False,
) -> Categorical:
    """Causal proxy at in-block offset i (1-based) of a length-k draft.

    Every in-block position is masked, so only the committed prefix conditions
    the score. With uses_past_block=True the first i-1 slots hold the tokens
    fixed so far instead, mirroring a true autoregressive conditional.
    """
    if not 1 <= i <= k:
        raise ValueError(f"offset {i} outside draft of length {k}")
    ctx = list(prefix) + [denoiser.vocab.mask_id] * k
    if uses_past_block:
        if len(block_so_far) < i - 1:
            raise ValueError(f"need {i - 1} fixed tokens, got {len(block_so_far)}")
        for off in range(i - 1):
            ctx[len(prefix) + off] = block_so_far[off]
    return denoiser.conditional(ctx, len(prefix) + i - 1)
