"""Group prototypes from prompt variants.

A group is summarized by the spherical mean of its anchor prompt embedding
and any number of variant embeddings: sum the unit vectors and renormalize.
The anchor counts as an ordinary term in the sum, and a group with no
variants falls back to its anchor direction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AntipodalCollapse,
    DimensionMismatch,
    DuplicateGroup,
    FairsphereError,
    NonUnitInput,
)
from .geometry import UNIT_NORM_TOL, Embedding, GroupPrototype

DEFAULT_EPS_SUM = 1e-6


def text_id(text: str) -> str:
    """The embedding id for a prompt: SHA-256 hex digest of its UTF-8 bytes."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class PromptVariantSet:
    """The anchor and variant embedding vectors describing one group.

    The texts are metadata only; all computation runs on the unit vectors.
    """

    group: str
    anchor_text: str
    variant_texts: list[str]
    anchor_embedding: np.ndarray
    variant_embeddings: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.variant_texts) != len(self.variant_embeddings):
            raise FairsphereError(
                f"group {self.group!r} has {len(self.variant_texts)} variant texts "
                f"but {len(self.variant_embeddings)} variant embeddings"
            )
        self.anchor_embedding = np.asarray(self.anchor_embedding, dtype=np.float64)
        self.variant_embeddings = [
            np.asarray(v, dtype=np.float64) for v in self.variant_embeddings
        ]
        d = self.anchor_embedding.size
        for vec in (self.anchor_embedding, *self.variant_embeddings):
            if vec.ndim != 1 or vec.size != d:
                raise DimensionMismatch(
                    f"group {self.group!r} mixes embedding dimensions "
                    f"({vec.shape} against d={d})"
                )
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise NonUnitInput(
                    f"group {self.group!r} embedding has norm {norm!r}, expected 1"
                )


def spherical_mean(
    anchor: np.ndarray,
    variants: list[np.ndarray],
    eps_sum: float = DEFAULT_EPS_SUM,
) -> np.ndarray:
    """Renormalized sum of the anchor and variant unit vectors.

    This direction maximizes the total cosine similarity to the inputs.
    When the vectors cancel (sum norm at or below eps_sum) there is no
    meaningful mean and AntipodalCollapse is raised.
    """
    total = np.asarray(anchor, dtype=np.float64).copy()
    if not variants:
        # single-prompt prototype: the anchor is already unit norm, keep
        # its exact bits instead of dividing by a norm one ulp off 1
        return total
    for v in variants:
        arr = np.asarray(v, dtype=np.float64)
        if arr.shape != total.shape:
            raise DimensionMismatch(
                f"variant has shape {arr.shape}, expected {total.shape}"
            )
        total += arr
    norm = float(np.linalg.norm(total))
    if norm <= eps_sum:
        raise AntipodalCollapse(f"variant directions cancel, sum norm {norm!r}")
    return total / norm


def build_prototypes(
    variant_sets: list[PromptVariantSet],
    eps_sum: float = DEFAULT_EPS_SUM,
) -> list[GroupPrototype]:
    """One spherical-mean prototype per variant set, in input order."""
    names = [vs.group for vs in variant_sets]
    if len(set(names)) != len(names):
        raise DuplicateGroup(f"group names are not distinct: {names}")
    if variant_sets:
        d = variant_sets[0].anchor_embedding.size
        for vs in variant_sets:
            if vs.anchor_embedding.size != d:
                raise DimensionMismatch(
                    f"group {vs.group!r} anchor has dimension "
                    f"{vs.anchor_embedding.size}, expected {d}"
                )
    prototypes = []
    for vs in variant_sets:
        try:
            mean = spherical_mean(
                vs.anchor_embedding,
                vs.variant_embeddings,
                eps_sum=eps_sum,
            )
        except AntipodalCollapse as exc:
            raise AntipodalCollapse(f"group {vs.group!r}: {exc}") from None
        prototypes.append(GroupPrototype(group=vs.group, vector=mean))
    return prototypes


def variant_sets_from_config(
    config: dict,
    embeddings_by_id: dict[str, Embedding],
) -> tuple[str, list[PromptVariantSet]]:
    """Resolve a variant-set description against a table of text embeddings.

    config follows {"attribute": str, "groups": [{"name", "anchor",
    "variants"}]}. Each prompt is looked up by the SHA-256 of its text.
    Returns the attribute name and the resolved sets.
    """
    if not isinstance(config, dict) or "attribute" not in config or "groups" not in config:
        raise FairsphereError('variant config must have "attribute" and "groups" keys')
    attribute = config["attribute"]
    groups = config["groups"]
    if not isinstance(groups, list) or not groups:
        raise FairsphereError('"groups" must be a non-empty list')

    def lookup(text: str, group: str) -> Embedding:
        key = text_id(text)
        emb = embeddings_by_id.get(key)
        if emb is None:
            raise FairsphereError(
                f"no embedding found for prompt {text!r} of group {group!r} (id {key})"
            )
        return emb

    sets = []
    for entry in groups:
        name = entry["name"]
        anchor_text = entry["anchor"]
        variant_texts = list(entry.get("variants", []))
        sets.append(
            PromptVariantSet(
                group=name,
                anchor_text=anchor_text,
                variant_texts=variant_texts,
                anchor_embedding=lookup(anchor_text, name).vector,
                variant_embeddings=[lookup(t, name).vector for t in variant_texts],
            )
        )
    return attribute, sets
