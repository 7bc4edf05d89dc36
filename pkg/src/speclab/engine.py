"""Verifier and the speculative decode loop.

Each step drafts a block, selects a left-to-right path, verifies it against
the autoregressive target, commits the accepted prefix (plus the replacement
token on a rejection), and feeds the generated/accepted lengths back into the
draft-length controller.

Stochastic mode keeps the target distribution exactly: the verified tokens
are drawn from the same causal proxy that appears in the acceptance ratio, so
the classical accept-or-resample argument applies position by position.
Greedy mode reproduces the target's argmax rollout token for token, whatever
path the lattice search proposes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .controller import ControllerConfig, gen_signal, initial_state, update_state
from .core import Categorical, Rng, argmax, sample, sample_from_probs, validate_sequence
from .drafter import l2r_proxy, refine
from .models import BidirectionalDenoiser, NGramModel, ar_conditional
from .search import SearchConfig, SearchStats, beam_search, greedy_column_path

RESIDUAL_EPS = 1e-12

MODE_GREEDY = "greedy"
MODE_STOCHASTIC = "stochastic"

PATH_PROXY_SAMPLE = "proxy-sample"
PATH_SEARCH = "cps"


@dataclass(frozen=True)
class DrafterConfig:
    steps: int = 1
    top_k_refine: int = 1
    m_max: int = 15
    w_bi: float | None = None  # override the denoiser's trained mixing weight
    l2r_uses_past_block: bool = False


@dataclass(frozen=True)
class EngineConfig:
    mode: str = MODE_GREEDY
    max_output_len: int = 128
    seed: int = 0
    path_search: bool = True  # the --cps toggle
    adaptive_length: bool = True  # the --adl toggle
    search: SearchConfig = field(default_factory=SearchConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    drafter: DrafterConfig = field(default_factory=DrafterConfig)
    # Path source for stochastic verification. "proxy-sample" draws the block
    # from the same proxy used in the acceptance ratio (lossless). "cps" runs
    # the deterministic lattice search instead; the acceptance ratio then no
    # longer matches the draft law, which biases the output and is kept only
    # for analysis.
    stochastic_path: str = PATH_PROXY_SAMPLE

    def __post_init__(self):
        if self.mode not in (MODE_GREEDY, MODE_STOCHASTIC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.stochastic_path not in (PATH_PROXY_SAMPLE, PATH_SEARCH):
            raise ValueError(f"unknown stochastic path source {self.stochastic_path!r}")
        if self.max_output_len < 1:
            raise ValueError(f"max_output_len must be >= 1, got {self.max_output_len}")


@dataclass
class StepRecord:
    """Per-step trace: proposal, verification outcome, controller state, costs."""

    step: int
    k: int
    draft: list[int]
    path: list[int]
    accept_bits: list[int]
    l_acc: int
    l_gen: int
    committed: int
    replacement: int | None
    q_path: list[float]
    p_path: list[float]
    target_passes: int
    drafter_passes: int
    search_expansions: int
    ema_gen: float
    ema_acc: float
    k_next: int
    terminated: bool
    truncated: bool

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "k": self.k,
            "draft": self.draft,
            "path": self.path,
            "accept_bits": self.accept_bits,
            "l_acc": self.l_acc,
            "l_gen": self.l_gen,
            "committed": self.committed,
            "replacement": self.replacement,
            "q_path": self.q_path,
            "p_path": self.p_path,
            "target_passes": self.target_passes,
            "drafter_passes": self.drafter_passes,
            "search_expansions": self.search_expansions,
            "ema_gen": self.ema_gen,
            "ema_acc": self.ema_acc,
            "k_next": self.k_next,
            "terminated": self.terminated,
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "StepRecord":
        return cls(**payload)


def acceptance_ratio(p: float, q: float) -> float:
    """min(1, p/q); the drafted token must have positive proxy probability."""
    if q <= 0.0:
        raise ValueError("draft token has zero drafter probability")
    if p < 0.0:
        raise ValueError(f"negative target probability {p}")
    return min(1.0, p / q)


def residual_sample(p: Categorical, q: Categorical, rng: Rng) -> int:
    """Draw from the normalized positive part of p - q; fall back to p when empty."""
    residual = np.maximum(p.probs() - q.probs(), 0.0)
    total = residual.sum()
    if total < RESIDUAL_EPS:
        return sample(p, rng)
    return sample_from_probs(residual / total, rng)


def verify_block(
    target: NGramModel,
    prefix: Sequence[int],
    path: Sequence[int],
    q_scores: Sequence[Categorical],
    mode: str,
    rng: Rng | None = None,
    residual_rng: Rng | None = None,
) -> tuple[list[int], int | None, list[int]]:
    """Left-to-right acceptance over one proposed block.

    All target conditionals are computed up front (the batched-verification
    contract), then tokens are accepted until the first failure. Stochastic
    mode flips an acceptance coin per position and resamples the failure from
    the residual; greedy mode accepts exact argmax matches and substitutes the
    target argmax otherwise. Returns (accepted ids, replacement or None,
    acceptance bits for the positions that were examined).
    """
    p_dists = [ar_conditional(target, list(prefix) + list(path[:i])) for i in range(len(path))]
    accepted: list[int] = []
    bits: list[int] = []
    replacement: int | None = None
    for i, tok in enumerate(path):
        if mode == MODE_GREEDY:
            top = argmax(p_dists[i])
            if tok == top:
                bits.append(1)
                accepted.append(tok)
            else:
                bits.append(0)
                replacement = top
                break
        else:
            if rng is None:
                raise ValueError("stochastic verification needs an rng")
            p = math.exp(p_dists[i].log_probs[tok])
            q = math.exp(q_scores[i].log_probs[tok])
            if rng.uniform() < acceptance_ratio(p, q):
                bits.append(1)
                accepted.append(tok)
            else:
                bits.append(0)
                replacement = residual_sample(p_dists[i], q_scores[i], residual_rng or rng)
                break
    return accepted, replacement, bits


def ar_greedy_decode(target: NGramModel, prompt: Sequence[int], max_output_len: int) -> list[int]:
    """Plain autoregressive argmax rollout; stops after EOS or the length budget."""
    out = list(prompt)
    eos = target.vocab.eos_id
    for _ in range(max_output_len):
        tok = argmax(ar_conditional(target, out))
        out.append(tok)
        if tok == eos:
            break
    return out


def ar_sample_decode(target: NGramModel, prompt: Sequence[int], max_output_len: int, rng: Rng) -> list[int]:
    """Ancestral sampling from the target; stops after EOS or the length budget."""
    out = list(prompt)
    eos = target.vocab.eos_id
    for _ in range(max_output_len):
        tok = sample(ar_conditional(target, out), rng)
        out.append(tok)
        if tok == eos:
            break
    return out


def _stochastic_block(
    denoiser: BidirectionalDenoiser,
    prefix: list[int],
    k: int,
    uses_past_block: bool,
    draft_rng: Rng,
) -> tuple[list[int], list[Categorical]]:
    """Draw a raw block from the causal proxy, one position at a time."""
    draft: list[int] = []
    dists: list[Categorical] = []
    if not uses_past_block:
        dist = l2r_proxy(denoiser, prefix, (), k, 1)
        ids = np.searchsorted(dist.cdf(), draft_rng.uniforms(k), side="right")
        probs = dist.probs()
        for raw in ids:
            idx = min(int(raw), len(dist) - 1)
            while idx > 0 and probs[idx] <= 0.0:
                idx -= 1
            draft.append(idx)
            dists.append(dist)
    else:
        for i in range(1, k + 1):
            dist = l2r_proxy(denoiser, prefix, draft, k, i, uses_past_block=True)
            draft.append(sample(dist, draft_rng))
            dists.append(dist)
    return draft, dists


def decode(
    target: NGramModel,
    denoiser: BidirectionalDenoiser,
    proxy: NGramModel,
    prompt: Sequence[int],
    cfg: EngineConfig,
    collect_trace: bool = True,
) -> tuple[list[int], list[StepRecord]]:
    """Run the four-stage speculative loop until EOS or the output budget."""
    if not prompt:
        raise ValueError("empty prompt")
    validate_sequence(prompt, target.vocab)
    if cfg.drafter.w_bi is not None and cfg.drafter.w_bi != denoiser.w_bi:
        denoiser = denoiser.with_weight(cfg.drafter.w_bi)
    eos = target.vocab.eos_id
    rng = Rng(cfg.seed)
    draft_rng = rng.substream("draft")
    accept_rng = rng.substream("accept")
    residual_rng = rng.substream("residual")
    ctl = initial_state(cfg.controller)
    out = list(prompt)
    produced = 0
    records: list[StepRecord] = []
    step = 0
    stochastic_sampling = cfg.mode == MODE_STOCHASTIC and cfg.stochastic_path == PATH_PROXY_SAMPLE
    while produced < cfg.max_output_len:
        step += 1
        k = ctl.k_next if cfg.adaptive_length else cfg.controller.k_max
        stats = SearchStats()
        if stochastic_sampling:
            draft, draft_dists = _stochastic_block(denoiser, out, k, cfg.drafter.l2r_uses_past_block, draft_rng)
            cut = draft.index(eos) + 1 if eos in draft else k
            path = draft[:cut]
            q_dists = draft_dists[:cut]
            drafter_passes = 1
        else:
            state, lattice = refine(
                denoiser, out, k, cfg.drafter.steps, cfg.drafter.top_k_refine, cfg.drafter.m_max
            )
            draft = state.draft()
            if cfg.path_search:
                found = beam_search(out, lattice, proxy, cfg.search, eos, stats)
            else:
                found = greedy_column_path(out, lattice, proxy, cfg.search.lam, eos, cfg.search.eos_stop_on_any)
            path = list(found.tokens)
            q_dists = [
                l2r_proxy(denoiser, out, path[:i], k, i + 1, cfg.drafter.l2r_uses_past_block)
                for i in range(len(path))
            ]
            drafter_passes = cfg.drafter.steps
        l_gen = gen_signal(draft, k, eos)
        accepted, replacement, bits = verify_block(
            target, out, path, q_dists, cfg.mode, accept_rng, residual_rng
        )
        l_acc = len(accepted)
        if collect_trace:
            q_path = [float(q_dists[i].log_probs[t]) for i, t in enumerate(path)]
            p_path = [
                float(ar_conditional(target, out + path[:i]).log_probs[t]) for i, t in enumerate(path)
            ]
        else:
            q_path = []
            p_path = []
        committed = accepted + ([replacement] if replacement is not None else [])
        truncated = False
        room = cfg.max_output_len - produced
        if len(committed) > room:
            committed = committed[:room]
            truncated = True
        out.extend(committed)
        produced += len(committed)
        terminated = eos in committed
        if not terminated:
            ctl = update_state(ctl, l_gen, l_acc, cfg.controller)
        records.append(
            StepRecord(
                step=step,
                k=k,
                draft=list(draft) if collect_trace else [],
                path=list(path) if collect_trace else [],
                accept_bits=bits if collect_trace else [],
                l_acc=l_acc,
                l_gen=l_gen,
                committed=len(committed),
                replacement=replacement,
                q_path=q_path,
                p_path=p_path,
                target_passes=1,
                drafter_passes=drafter_passes,
                search_expansions=stats.expansions,
                ema_gen=ctl.ema_gen,
                ema_acc=ctl.ema_acc,
                k_next=ctl.k_next,
                terminated=terminated,
                truncated=truncated,
            )
        )
        if terminated:
            break
    return out, records
