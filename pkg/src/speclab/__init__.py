"""Desk-scale speculative decoding with a masked-block drafter.

The pipeline drafts a multi-token block in one pass from a bidirectional
count-based model, extracts a per-position candidate lattice, selects a
causally consistent left-to-right path, verifies it losslessly against an
autoregressive n-gram target, and adapts the next draft length from verifier
feedback.
"""

from .controller import ControllerConfig, ControllerState, gen_signal, initial_state, update_state
from .core import Categorical, Rng, Vocabulary, argmax, sample
from .drafter import (
    CorruptionConfig,
    LatticeColumn,
    RefinementState,
    TokenLattice,
    corrupt,
    l2r_proxy,
    mask_point_prior,
    refine,
)
from .engine import (
    DrafterConfig,
    EngineConfig,
    StepRecord,
    acceptance_ratio,
    ar_greedy_decode,
    ar_sample_decode,
    decode,
    residual_sample,
    verify_block,
)
from .metrics import CostModel, RunSummary, ablate, mat, speedup, summarize, sweep
from .models import (
    BidirectionalDenoiser,
    NGramModel,
    ar_conditional,
    train_denoiser,
    train_ngram,
)
from .search import (
    Path,
    PruneConfig,
    SearchConfig,
    beam_search,
    brute_force_best,
    greedy_column_path,
    path_score,
    prune_column,
)

__version__ = "0.1.0"

__all__ = [
    "BidirectionalDenoiser",
    "Categorical",
    "ControllerConfig",
    "ControllerState",
    "CorruptionConfig",
    "CostModel",
    "DrafterConfig",
    "EngineConfig",
    "LatticeColumn",
    "NGramModel",
    "Path",
    "PruneConfig",
    "RefinementState",
    "Rng",
    "RunSummary",
    "SearchConfig",
    "StepRecord",
    "TokenLattice",
    "Vocabulary",
    "ablate",
    "acceptance_ratio",
    "ar_conditional",
    "ar_greedy_decode",
    "ar_sample_decode",
    "argmax",
    "beam_search",
    "brute_force_best",
    "corrupt",
    "decode",
    "gen_signal",
    "greedy_column_path",
    "initial_state",
    "l2r_proxy",
    "mask_point_prior",
    "mat",
    "path_score",
    "prune_column",
    "refine",
    "residual_sample",
    "sample",
    "speedup",
    "summarize",
    "sweep",
    "train_denoiser",
    "train_ngram",
    "update_state",
    "verify_block",
]
