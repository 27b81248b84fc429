"""Shared construction helpers for the test suite."""

import numpy as np
import pytest

from fairsphere import AttributeSubspace, Embedding, GroupPrototype, build_subspace, normalize


def rand_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    return normalize(rng.standard_normal(d))


def random_subspace(rng: np.random.Generator, d: int, n_groups: int = 3) -> AttributeSubspace:
    prototypes = [
        GroupPrototype(group=f"g{i}", vector=rand_unit(rng, d)) for i in range(n_groups)
    ]
    return build_subspace(prototypes, reference="g0")


def unit_in_span(rng: np.random.Generator, subspace: AttributeSubspace) -> np.ndarray:
    coeffs = rng.standard_normal(subspace.rank)
    return normalize(subspace.basis @ coeffs)


def unit_in_complement(rng: np.random.Generator, subspace: AttributeSubspace) -> np.ndarray:
    v = rng.standard_normal(subspace.dim)
    v = v - subspace.basis @ (subspace.basis.T @ v)
    return normalize(v)


def embedding_with_norms(
    rng: np.random.Generator,
    subspace: AttributeSubspace,
    norm_parallel: float,
    id: str = "e",
) -> Embedding:
    """Unit embedding with a prescribed component norm inside the subspace."""
    x = unit_in_span(rng, subspace)
    y = unit_in_complement(rng, subspace)
    vec = norm_parallel * x + np.sqrt(1.0 - norm_parallel**2) * y
    return Embedding(id=id, vector=vec, modality="image")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def axis_subspace() -> AttributeSubspace:
    """Rank-1 subspace spanned by the first coordinate axis of R^3."""
    return AttributeSubspace(
        basis=np.array([[1.0], [0.0], [0.0]]),
        rank=1,
        source_groups=("a", "b"),
        reference_group="a",
    )
