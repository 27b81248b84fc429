"""Attribute subspace construction and orthogonal decomposition.

The sensitive-attribute subspace is the span of difference vectors between
group prototypes, orthogonalized with a rank-revealing SVD. Embeddings are
split into the component inside that span (attribute leakage) and the
orthogonal remainder (neutral content).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSubspace,
    DimensionMismatch,
    DuplicateGroup,
    InvariantViolation,
    NonUnitInput,
    UnknownReference,
    ZeroVector,
)

UNIT_NORM_TOL = 1e-9
ORTHONORMAL_TOL = 1e-8
DEFAULT_RANK_TOL = 1e-10
ZERO_NORM_TOL = 1e-12

_MODALITIES = ("image", "text")


def _as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def normalize(vector) -> np.ndarray:
    """Scale a vector to unit length. Norms below 1e-12 are rejected."""
    arr = _as_vector(vector)
    norm = float(np.linalg.norm(arr))
    if norm < ZERO_NORM_TOL:
        raise ZeroVector(f"cannot normalize a vector with norm {norm!r}")
    return arr / norm


@dataclass
class Embedding:
    """A unit-norm vector with an identifier and optional string labels.

    Labels commonly carry "class" and "group"; retrieval queries also use
    "pair_id" to point at their ground-truth counterpart.
    """

    id: str
    vector: np.ndarray
    modality: str
    labels: dict[str, str] | None = None

    def __post_init__(self):
        self.vector = _as_vector(self.vector, f"embedding {self.id!r}")
        if self.vector.size < 2:
            raise DimensionMismatch("embedding dimension must be at least 2")
        if self.modality not in _MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise NonUnitInput(f"embedding {self.id!r} has norm {norm!r}, expected unit length")

    @classmethod
    def from_raw(cls, id: str, vector, modality: str, labels: dict[str, str] | None = None) -> "Embedding":
        """Build an embedding from a raw vector, normalizing it first."""
        return cls(id=id, vector=normalize(vector), modality=modality, labels=labels)

    @property
    def dim(self) -> int:
        return self.vector.size


@dataclass
class GroupPrototype:
    """A unit-norm direction summarizing one sensitive group."""

    group: str
    vector: np.ndarray

    def __post_init__(self):
        self.vector = _as_vector(self.vector, f"prototype {self.group!r}")
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise NonUnitInput(f"prototype {self.group!r} has norm {norm!r}, expected unit length")

    @property
    def dim(self) -> int:
        return self.vector.size


@dataclass
class AttributeSubspace:
    """An orthonormal basis for the attribute directions.

    basis has shape (d, rank) with orthonormal columns. source_groups and
    reference_group record which prototypes produced it.
    """

    basis: np.ndarray
    rank: int
    source_groups: list[str]
    reference_group: str

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.ndim != 2:
            raise DimensionMismatch(f"basis must be a matrix, got shape {basis.shape}")
        self.basis = basis
        d, r = basis.shape
        if r != self.rank:
            raise InvariantViolation(f"declared rank {self.rank} but basis has {r} columns")
        if not 1 <= r <= d:
            raise DegenerateSubspace(f"rank must lie in [1, {d}], got {r}")
        gram = basis.T @ basis
        if float(np.max(np.abs(gram - np.eye(r)))) > ORTHONORMAL_TOL:
            raise InvariantViolation("basis columns are not orthonormal")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


@dataclass
class Decomposition:
    """An embedding split into its attribute-parallel and orthogonal parts."""

    parallel: np.ndarray
    orthogonal: np.ndarray
    norm_parallel: float
    norm_orthogonal: float


def build_subspace(
    prototypes: list[GroupPrototype],
    reference: str,
    rank_tolerance: float = DEFAULT_RANK_TOL,
) -> AttributeSubspace:
    """Span the differences between each prototype and the reference one.

    Singular values below rank_tolerance times the largest are treated as
    zero, so nearly collinear prototypes do not inflate the rank.
    """
    if len(prototypes) < 2:
        raise DegenerateSubspace("need at least two group prototypes")
    names = [p.group for p in prototypes]
    if len(set(names)) != len(names):
        raise DuplicateGroup(f"group names are not distinct: {names}")
    if reference not in names:
        raise UnknownReference(f"reference group {reference!r} not among {names}")
    if rank_tolerance <= 0:
        raise ValueError("rank_tolerance must be positive")
    d = prototypes[0].dim
    for p in prototypes:
        if p.dim != d:
            raise DimensionMismatch(f"prototype {p.group!r} has dimension {p.dim}, expected {d}")
    ref_vec = next(p.vector for p in prototypes if p.group == reference)
    directions = np.stack(
        [p.vector - ref_vec for p in prototypes if p.group != reference], axis=1
    )
    u, s, _ = np.linalg.svd(directions, full_matrices=False)
    if s.size == 0 or s[0] <= ZERO_NORM_TOL:
        raise DegenerateSubspace("all prototypes coincide with the reference")
    keep = s > rank_tolerance * s[0]
    basis = np.ascontiguousarray(u[:, keep])
    return AttributeSubspace(
        basis=basis,
        rank=int(np.count_nonzero(keep)),
        source_groups=names,
        reference_group=reference,
    )


def _vector_for(e) -> np.ndarray:
    return e.vector if isinstance(e, Embedding) else _as_vector(e)


def project_parallel(v, subspace: AttributeSubspace) -> np.ndarray:
    """Project onto the attribute subspace. Accepts a vector or rows of them."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape[-1] != subspace.dim:
        raise DimensionMismatch(
            f"vector dimension {arr.shape[-1]} does not match subspace dimension {subspace.dim}"
        )
    return (arr @ subspace.basis) @ subspace.basis.T


def project_orthogonal(v, subspace: AttributeSubspace) -> np.ndarray:
    """Remove the attribute-subspace component. Accepts a vector or rows."""
    arr = np.asarray(v, dtype=np.float64)
    return arr - project_parallel(arr, subspace)


def decompose(e, subspace: AttributeSubspace) -> Decomposition:
    """Split an embedding (or raw vector) into parallel and orthogonal parts."""
    vec = _vector_for(e)
    parallel = project_parallel(vec, subspace)
    orthogonal = vec - parallel
    return Decomposition(
        parallel=parallel,
        orthogonal=orthogonal,
        norm_parallel=float(np.linalg.norm(parallel)),
        norm_orthogonal=float(np.linalg.norm(orthogonal)),
    )
