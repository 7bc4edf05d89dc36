"""Throughput metrics over decode traces: accepted-token averages and
simulated speedup under an explicit per-pass cost model.

Wall-clock depends on hardware, so speedup is computed from counted work:
one unit per batched target pass, a configurable fraction per drafter
refinement pass, and a small charge per search expansion, all relative to
the cost of a plain autoregressive step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .controller import ControllerConfig
from .engine import EngineConfig, StepRecord, decode
from .models import BidirectionalDenoiser, NGramModel
from .search import PruneConfig

SHARE_TOL = 1e-9

Trace = list[StepRecord]


@dataclass(frozen=True)
class CostModel:
    c_target: float = 1.0
    c_draft: float = 0.2
    c_cps: float = 0.001
    c_ar_token: float = 1.0

    def __post_init__(self):
        for name in ("c_target", "c_draft", "c_cps", "c_ar_token"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def step_cost(self, rec: StepRecord) -> float:
        return (
            self.c_target * rec.target_passes
            + self.c_draft * rec.drafter_passes
            + self.c_cps * rec.search_expansions
        )


def mat(traces: Sequence[Trace]) -> float:
    """Mean accepted prefix length per speculative step, over all steps and traces."""
    steps = [rec for trace in traces for rec in trace]
    if not steps:
        raise ValueError("no steps in trace set")
    return sum(rec.l_acc for rec in steps) / len(steps)


def tokens_generated(traces: Sequence[Trace]) -> int:
    return sum(rec.committed for trace in traces for rec in trace)


def speedup(traces: Sequence[Trace], cost: CostModel) -> float:
    """Baseline autoregressive cost for the same output, over the speculative cost."""
    total = sum(cost.step_cost(rec) for trace in traces for rec in trace)
    if total <= 0:
        raise ValueError("zero speculative cost")
    return tokens_generated(traces) * cost.c_ar_token / total


def cost_shares(traces: Sequence[Trace], cost: CostModel) -> dict[str, float]:
    """Fraction of total simulated cost spent drafting, verifying, and searching."""
    verify = sum(cost.c_target * rec.target_passes for trace in traces for rec in trace)
    draft = sum(cost.c_draft * rec.drafter_passes for trace in traces for rec in trace)
    search = sum(cost.c_cps * rec.search_expansions for trace in traces for rec in trace)
    total = verify + draft + search
    if total <= 0:
        raise ValueError("zero speculative cost")
    return {"draft": draft / total, "verify": verify / total, "search": search / total}


def acceptance_curve(traces: Sequence[Trace]) -> list[dict]:
    """Mean accepted length and acceptance rate grouped by the step's draft size."""
    by_k: dict[int, list[StepRecord]] = {}
    for trace in traces:
        for rec in trace:
            by_k.setdefault(rec.k, []).append(rec)
    curve = []
    for k in sorted(by_k):
        recs = by_k[k]
        mean_acc = sum(r.l_acc for r in recs) / len(recs)
        curve.append({"k": k, "steps": len(recs), "mean_l_acc": mean_acc, "rate": mean_acc / k})
    return curve


@dataclass(frozen=True)
class RunSummary:
    mat: float
    speedup: float
    tokens: int
    steps: int
    cost_shares: dict[str, float]
    acceptance_curve: list[dict]

    def to_dict(self) -> dict:
        return {
            "mat": self.mat,
            "speedup": self.speedup,
            "tokens": self.tokens,
            "steps": self.steps,
            "cost_shares": self.cost_shares,
            "acceptance_curve": self.acceptance_curve,
        }


def summarize(traces: Sequence[Trace], cost: CostModel) -> RunSummary:
    return RunSummary(
        mat=mat(traces),
        speedup=speedup(traces, cost),
        tokens=tokens_generated(traces),
        steps=sum(len(t) for t in traces),
        cost_shares=cost_shares(traces, cost),
        acceptance_curve=acceptance_curve(traces),
    )


def run_prompts(
    target: NGramModel,
    denoiser: BidirectionalDenoiser,
    proxy: NGramModel,
    prompts: Sequence[Sequence[int]],
    cfg: EngineConfig,
    collect_trace: bool = True,
    on_output: Callable[[int, list[int]], None] | None = None,
) -> list[Trace]:
    """Decode every prompt with a per-prompt seed derived from (seed, index)."""
    traces: list[Trace] = []
    for idx, prompt in enumerate(prompts):
        run_cfg = replace(cfg, seed=derive_prompt_seed(cfg.seed, idx))
        out, trace = decode(target, denoiser, proxy, prompt, run_cfg, collect_trace=collect_trace)
        if on_output is not None:
            on_output(idx, out)
        traces.append(trace)
    return traces


def derive_prompt_seed(seed: int, index: int) -> int:
    # schedule-independent fan-out: worker order cannot change per-prompt draws
    return (seed * 1_000_003 + index) % (2**63)


def toggle_grid() -> list[tuple[bool, bool]]:
    return [(True, True), (True, False), (False, True), (False, False)]


def ablate(
    target: NGramModel,
    denoiser: BidirectionalDenoiser,
    proxy: NGramModel,
    prompts: Sequence[Sequence[int]],
    cfg: EngineConfig,
    cost: CostModel,
) -> list[dict]:
    """MAT and speedup for every (path search, adaptive length) toggle pair."""
    rows = []
    for cps_on, adl_on in toggle_grid():
        cell_cfg = replace(cfg, path_search=cps_on, adaptive_length=adl_on)
        traces = run_prompts(target, denoiser, proxy, prompts, cell_cfg, collect_trace=False)
        summary = summarize(traces, cost)
        rows.append(
            {
                "cps": cps_on,
                "adl": adl_on,
                "mat": summary.mat,
                "speedup": summary.speedup,
                "tokens": summary.tokens,
                "steps": summary.steps,
            }
        )
    return rows


SWEEP_KNOBS = ("steps", "beam", "m-max", "tau", "fixed-k")


def _apply_knob(cfg: EngineConfig, knob: str, value: float) -> EngineConfig:
    if knob == "steps":
        return replace(cfg, drafter=replace(cfg.drafter, steps=int(value)))
    if knob == "beam":
        return replace(cfg, search=replace(cfg.search, beam=int(value)))
    if knob == "m-max":
        prune = replace(cfg.search.prune, m_max=int(value))
        return replace(
            cfg,
            search=replace(cfg.search, prune=prune),
            drafter=replace(cfg.drafter, m_max=int(value)),
        )
    if knob == "tau":
        return replace(cfg, search=replace(cfg.search, prune=replace(cfg.search.prune, tau=float(value))))
    if knob == "fixed-k":
        k = int(value)
        ctl = ControllerConfig(k_min=k, k_max=k, delta=cfg.controller.delta, rho=cfg.controller.rho)
        return replace(cfg, adaptive_length=False, controller=ctl)
    raise ValueError(f"unknown sweep knob {knob!r}")


def sweep(
    target: NGramModel,
    denoiser: BidirectionalDenoiser,
    proxy: NGramModel,
    prompts: Sequence[Sequence[int]],
    cfg: EngineConfig,
    cost: CostModel,
    knob: str,
    values: Sequence[float],
) -> list[dict]:
    """One (value, MAT, speedup) row per knob setting; fixed-k adds an adaptive row."""
    if knob not in SWEEP_KNOBS:
        raise ValueError(f"unknown sweep knob {knob!r}")
    rows = []
    for value in values:
        swept = _apply_knob(cfg, knob, value)
        traces = run_prompts(target, denoiser, proxy, prompts, swept, collect_trace=False)
        summary = summarize(traces, cost)
        rows.append({"knob": knob, "value": value, "mat": summary.mat, "speedup": summary.speedup})
    if knob == "fixed-k":
        adaptive = replace(cfg, adaptive_length=True)
        traces = run_prompts(target, denoiser, proxy, prompts, adaptive, collect_trace=False)
        summary = summarize(traces, cost)
        rows.append({"knob": knob, "value": "adaptive", "mat": summary.mat, "speedup": summary.speedup})
    return rows
