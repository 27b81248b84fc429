"""Debiasing of unit-norm embeddings with explicit fairness accounting.

The package splits an embedding against a sensitive-attribute subspace,
then rotates it to the unique point where scaled attribute leakage equals
scaled self-utility loss. Everything downstream (metrics, evaluation
engines, file formats, the command line) exists to measure and persist
what that operation does.
"""

from .errors import (
    AntipodalCollapse,
    DegenerateInput,
    DegenerateSubspace,
    DimensionMismatch,
    DimensionTooSmall,
    DuplicateGroup,
    DuplicateId,
    EmptyCandidates,
    EmptyCell,
    EmptyGeneration,
    FairsphereError,
    GroupAbsentFromCandidates,
    InvariantViolation,
    MalformedHeader,
    MissingLabels,
    MTooLarge,
    NonUnitInput,
    UndeclaredLabel,
    UnknownReference,
    ZeroVector,
)
from .geometry import (
    AttributeSubspace,
    Decomposition,
    Embedding,
    GroupPrototype,
    build_subspace,
    decompose,
    normalize,
    project_orthogonal,
    project_parallel,
)
from .prototypes import (
    PromptVariantSet,
    build_prototypes,
    spherical_mean,
    text_id,
    variant_sets_from_config,
)
from .solver import (
    DebiasResult,
    ParetoPoint,
    closed_form_alpha,
    cross_utility_bound,
    debias,
    debias_batch,
    debias_extreme,
    normalized_leakage,
    normalized_loss,
    oracle_alpha,
    pareto_point,
    self_utility_loss,
)
from .metrics import (
    ClassifiedSample,
    F1Result,
    GroupCounts,
    RetrievalOutcome,
    eo_violations,
    f1_scores,
    max_skew,
    recall_at_k,
    statistical_parity,
    true_positive_rates,
)
from .evaluation import (
    DEBIAS_MODES,
    PAIR_ID_LABEL,
    EvalReport,
    MetricConfig,
    SynthSpec,
    SyntheticData,
    Workspace,
    apply_mode,
    classify_zero_shot,
    generate_synthetic,
    retrieve,
    run_report,
)
from .embfile import (
    EmbeddingFileHeader,
    atomic_write_bytes,
    atomic_write_text,
    canonical_json,
    format_float,
    load_embeddings,
    load_subspace,
    read_embedding_file,
    save_embeddings,
    save_subspace,
)
from .estimator import EmbeddingDebiaser

__version__ = "0.1.0"
