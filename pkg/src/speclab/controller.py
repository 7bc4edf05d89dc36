"""Adaptive draft-length control from verifier feedback.

Two EMA-smoothed signals drive a clipped one-step update: how much content
the drafter produced before its first EOS, and how much of the proposed path
the verifier actually accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class ControllerConfig:
    k_min: int = 20
    k_max: int = 30
    delta: int = 10
    rho: float = 0.5

    def __post_init__(self):
        if not 1 <= self.k_min <= self.k_max:
            raise ValueError(f"need 1 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")


@dataclass(frozen=True)
class ControllerState:
    ema_gen: float
    ema_acc: float
    k_next: int


def initial_state(cfg: ControllerConfig) -> ControllerState:
    """Zeroed EMAs; the first draft uses the full k_max."""
    return ControllerState(ema_gen=0.0, ema_acc=0.0, k_next=cfg.k_max)


def gen_signal(draft: Sequence[int], k: int, eos_id: int) -> int:
    """EOS-aware generated length: min(first-EOS index - 1, k), counting 1-based."""
    if len(draft) != k:
        raise ValueError(f"raw draft must have length {k}, got {len(draft)}")
    for pos, tok in enumerate(draft, start=1):
        if tok == eos_id:
            return min(pos - 1, k)
    return k


def update_state(state: ControllerState, l_gen: int, l_acc: int, cfg: ControllerConfig) -> ControllerState:
    """EMA both signals, then clip(ceil(gen + delta*[acc >= gen])) into the guardrails.

    The growth indicator compares the post-update EMAs, so the current step's
    observation participates in the decision.
    """
    ema_gen = (1.0 - cfg.rho) * state.ema_gen + cfg.rho * l_gen
    ema_acc = (1.0 - cfg.rho) * state.ema_acc + cfg.rho * l_acc
    raw = math.ceil(ema_gen + (cfg.delta if ema_acc >= ema_gen else 0))
    k_next = min(max(raw, cfg.k_min), cfg.k_max)
    return ControllerState(ema_gen=ema_gen, ema_acc=ema_acc, k_next=k_next)
