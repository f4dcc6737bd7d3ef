"""Desk-scale laboratory for masked-diffusion decoding over exact Markov tasks.

The package builds exactly solvable serial (expanding-map) and parallel
(bucket-quantized) sequence tasks, computes exact masked-token posteriors by
forward-backward inference, decodes them with remasking diffusion loops, and
measures the entropy structure and inference-time scaling behavior that
separates the two task families.
"""

__version__ = "0.1.0"

from .chains import (
    Embedder,
    StepChain,
    cosine_similarity,
    informativeness,
    perplexity,
    reasoning_alignment,
    repetition_word,
    step_alignment,
    token_entropy,
)
from .decoding import (
    DecodeConfig,
    DecodeTrace,
    EarlyStop,
    autoregressive_decode,
    des_should_stop,
    diffusion_decode,
    overlap_ratio,
    select_commits,
)
from .entropy import (
    DiscreteDistribution,
    SensitivityProfile,
    binary_entropy,
    coarsen_states,
    fano_upper_bound,
    min_entropy_lower_bound,
    sensitivity_profile,
    shannon_entropy,
    skip_entropy_gap,
)
from .posterior import (
    MASK,
    ContradictionError,
    MaskedSequence,
    PosteriorTable,
    greedy_fill,
    masked_posteriors,
    sequence_log_likelihood,
)
from .scaling import (
    Prompt,
    RunRecord,
    ScalingReport,
    build_prompts,
    decoding_order_stats,
    derive_seed,
    efficiency_frontier,
    pass_at_k,
    perturb_model,
    reasoning_boundaries,
    sweep_diffusion,
    sweep_parallel,
    sweep_sequential,
)
from .tasks import (
    TabularMarkovModel,
    TaskSpec,
    TrajectorySample,
    build_parallel_task,
    build_serial_task,
    build_task,
    sample_trajectory,
    skip_conditional,
)

__all__ = [
    "__version__",
    "MASK",
    "ContradictionError",
    "DecodeConfig",
    "DecodeTrace",
    "DiscreteDistribution",
    "EarlyStop",
    "Embedder",
    "MaskedSequence",
    "PosteriorTable",
    "Prompt",
    "RunRecord",
    "ScalingReport",
    "SensitivityProfile",
    "StepChain",
    "TabularMarkovModel",
    "TaskSpec",
    "TrajectorySample",
    "autoregressive_decode",
    "binary_entropy",
    "build_parallel_task",
    "build_prompts",
    "build_serial_task",
    "build_task",
    "coarsen_states",
    "cosine_similarity",
    "decoding_order_stats",
    "derive_seed",
    "des_should_stop",
    "diffusion_decode",
    "efficiency_frontier",
    "fano_upper_bound",
    "greedy_fill",
    "informativeness",
    "masked_posteriors",
    "min_entropy_lower_bound",
    "overlap_ratio",
    "pass_at_k",
    "perplexity",
    "perturb_model",
    "reasoning_alignment",
    "reasoning_boundaries",
    "repetition_word",
    "sample_trajectory",
    "select_commits",
    "sensitivity_profile",
    "sequence_log_likelihood",
    "shannon_entropy",
    "skip_conditional",
    "skip_entropy_gap",
    "step_alignment",
    "sweep_diffusion",
    "sweep_parallel",
    "sweep_sequential",
    "token_entropy",
]
