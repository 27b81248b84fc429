"""Scikit-learn style front door for the debiasing pipeline.

EmbeddingDebiaser follows the fit/transform protocol: fit ingests one
prototype row per group and builds the attribute subspace, transform maps
embedding rows to their debiased counterparts. Parameters round-trip
through get_params/set_params, so the estimator clones and composes with
the usual scikit-learn machinery.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import DEFAULT_RANK_TOL, GroupPrototype, normalize
from .geometry import build_subspace
from .solver import (
    DEFAULT_EPS_DEG,
    DebiasResult,
    MODE_FULL_PROJECTION,
    MODE_IDENTITY,
    MODE_PARETO,
    debias,
    debias_extreme,
)
from .geometry import Embedding

_MODES = (MODE_PARETO, MODE_FULL_PROJECTION, MODE_IDENTITY)


class EmbeddingDebiaser(BaseEstimator, TransformerMixin):
    """Remove group-attribute directions from unit embeddings.

    Parameters
    ----------
    mode : "pareto", "full_projection" or "identity"
        "pareto" interpolates to the point where scaled leakage equals
        scaled self-utility loss, "full_projection" drops the attribute
        component entirely, "identity" passes rows through.
    eps_deg : float
        Component norms at or below this threshold short-circuit to the
        unchanged input.
    rank_tolerance : float
        Relative singular value cutoff when building the subspace.
    reference_group : str or None
        Which fitted row differences are taken against; defaults to the
        first row's group.
    """

    def __init__(
        self,
        mode: str = MODE_PARETO,
        eps_deg: float = DEFAULT_EPS_DEG,
        rank_tolerance: float = DEFAULT_RANK_TOL,
        reference_group: str | None = None,
    ):
        self.mode = mode
        self.eps_deg = eps_deg
        self.rank_tolerance = rank_tolerance
        self.reference_group = reference_group

    def fit(self, X, y=None):
        """Build the attribute subspace from prototype rows.

        X holds one prototype per row (they are normalized here); y may
        carry the group names, defaulting to "g0", "g1", ...
        """
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        X = check_array(X, dtype=np.float64)
        if X.shape[0] < 2:
            raise ValueError("need at least two prototype rows")
        if y is None:
            names = [f"g{i}" for i in range(X.shape[0])]
        else:
            names = [str(g) for g in y]
            if len(names) != X.shape[0]:
                raise ValueError(f"{len(names)} group names for {X.shape[0]} rows")
        prototypes = [
            GroupPrototype(group=g, vector=normalize(row)) for g, row in zip(names, X)
        ]
        reference = self.reference_group if self.reference_group is not None else names[0]
        self.subspace_ = build_subspace(prototypes, reference, self.rank_tolerance)
        self.group_names_ = names
        self.n_features_in_ = X.shape[1]
        return self

    def _debias_row(self, row: np.ndarray, index: int) -> DebiasResult:
        emb = Embedding(id=f"row{index}", vector=normalize(row), modality="image")
        if self.mode == MODE_PARETO:
            return debias(emb, self.subspace_, eps_deg=self.eps_deg)
        return debias_extreme(emb, self.subspace_, self.mode, eps_deg=self.eps_deg)

    def transform(self, X) -> np.ndarray:
        """Debias each row of X; rows are normalized before processing."""
        check_is_fitted(self, "subspace_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, estimator was fitted with {self.n_features_in_}"
            )
        return np.stack([self._debias_row(row, i).u_star for i, row in enumerate(X)])

    def debias_details(self, X) -> list[DebiasResult]:
        """Like transform, but returning the full per-row result objects."""
        check_is_fitted(self, "subspace_")
        X = check_array(X, dtype=np.float64)
        return [self._debias_row(row, i) for i, row in enumerate(X)]
