"""Closed-form minimax debiasing of unit embeddings.

A unit embedding e decomposes against the attribute subspace into a
parallel part of norm p and an orthogonal part of norm q, with
p^2 + q^2 = 1. The debiased vector u keeps unit length and lives in the
plane of those two parts: u = alpha * e_par/p + sqrt(1 - alpha^2) * e_ort/q.

Two objectives compete along that arc. Attribute leakage L(alpha) = alpha
grows with alpha, while self-utility loss V(alpha) = 1 - <u, e> shrinks.
After scaling both to [0, 1] over the feasible range alpha in [0, p], the
best worst case is the unique crossing point of the two curves, and it has
an explicit algebraic form. closed_form_alpha evaluates that form;
oracle_alpha locates the same point by grid search plus bisection and is
kept deliberately independent so the two can cross-check each other.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DimensionMismatch, NonUnitInput
from .geometry import AttributeSubspace, Embedding, UNIT_NORM_TOL, decompose

DEFAULT_EPS_DEG = 1e-6
_NORM_SUM_TOL = 1e-6
_RADICAND_CLAMP = -1e-12
DEFAULT_GRID_POINTS = 4096
_BISECTION_TOL = 1e-12

DEGENERATE_NONE = "none"
DEGENERATE_FAIR_ALREADY = "fair_already"
DEGENERATE_PURE_ATTRIBUTE = "pure_attribute"

MODE_PARETO = "pareto"
MODE_FULL_PROJECTION = "full_projection"
MODE_IDENTITY = "identity"


def self_utility_loss(alpha, norm_parallel: float, norm_orthogonal: float):
    """Loss 1 - <u(alpha), e> along the arc. Accepts scalars or arrays."""
    a = np.asarray(alpha, dtype=np.float64)
    beta = np.sqrt(np.clip(1.0 - a * a, 0.0, None))
    out = 1.0 - a * norm_parallel - beta * norm_orthogonal
    return float(out) if np.isscalar(alpha) else out


def normalized_leakage(alpha, norm_parallel: float):
    """Leakage rescaled so the feasible range maps onto [0, 1]."""
    a = np.asarray(alpha, dtype=np.float64)
    out = a / norm_parallel
    return float(out) if np.isscalar(alpha) else out


def normalized_loss(alpha, norm_parallel: float, norm_orthogonal: float):
    """Self-utility loss rescaled by its maximum 1 - norm_orthogonal."""
    out = self_utility_loss(alpha, norm_parallel, norm_orthogonal) / (1.0 - norm_orthogonal)
    return float(out) if np.isscalar(alpha) else out


@dataclass
class ParetoPoint:
    """One point on the leakage/loss trade-off arc."""

    alpha: float
    leakage: float
    self_utility_loss: float
    normalized_leakage: float
    normalized_loss: float


def pareto_point(alpha: float, norm_parallel: float, norm_orthogonal: float) -> ParetoPoint:
    if not 0.0 <= alpha <= norm_parallel:
        raise DegenerateInput(
            f"alpha {alpha!r} outside the feasible range [0, {norm_parallel!r}]"
        )
    return ParetoPoint(
        alpha=float(alpha),
        leakage=float(alpha),
        self_utility_loss=self_utility_loss(float(alpha), norm_parallel, norm_orthogonal),
        normalized_leakage=normalized_leakage(float(alpha), norm_parallel),
        normalized_loss=normalized_loss(float(alpha), norm_parallel, norm_orthogonal),
    )


def _check_component_norms(norm_parallel: float, norm_orthogonal: float, eps_deg: float):
    if not (eps_deg < norm_parallel < 1.0):
        raise DegenerateInput(
            f"norm_parallel {norm_parallel!r} outside the open interval ({eps_deg}, 1)"
        )
    if not (eps_deg < norm_orthogonal < 1.0):
        raise DegenerateInput(
            f"norm_orthogonal {norm_orthogonal!r} outside the open interval ({eps_deg}, 1)"
        )
    residual = norm_parallel * norm_parallel + norm_orthogonal * norm_orthogonal - 1.0
    if abs(residual) > _NORM_SUM_TOL:
        raise DegenerateInput(
            f"component norms do not describe a unit vector, squared-sum residual {residual!r}"
        )


def closed_form_alpha(
    norm_parallel: float,
    norm_orthogonal: float,
    eps_deg: float = DEFAULT_EPS_DEG,
) -> float:
    """The alpha where normalized leakage equals normalized loss, in closed form.

    With p = norm_parallel, q = norm_orthogonal and E = p + (1 - q) / p the
    crossing point is (E - q * sqrt(E^2 - p^2)) / (E^2 + q^2). The radicand
    is expanded to (1 - q) * ((1 - q) / p^2 + 2), which is nonnegative by
    construction and avoids the cancellation of the literal E^2 - p^2.
    """
    _check_component_norms(norm_parallel, norm_orthogonal, eps_deg)
    p = norm_parallel
    q = norm_orthogonal
    e = p + (1.0 - q) / p
    radicand = (1.0 - q) * ((1.0 - q) / (p * p) + 2.0)
    if radicand < 0.0:
        if radicand < _RADICAND_CLAMP:
            raise DegenerateInput(f"negative radicand {radicand!r} exceeds the clamp window")
        radicand = 0.0
    return float((e - q * np.sqrt(radicand)) / (e * e + q * q))


def oracle_alpha(
    norm_parallel: float,
    norm_orthogonal: float,
    grid_points: int = DEFAULT_GRID_POINTS,
    eps_deg: float = DEFAULT_EPS_DEG,
) -> float:
    """Brute-force the crossing point: dense grid, then bisection to 1e-12.

    Minimizes max(normalized leakage, normalized loss) over a grid on
    [0, norm_parallel] to bracket the optimum, then bisects the difference
    of the two curves. Shares no algebra with closed_form_alpha.
    """
    if grid_points < 1000:
        raise ValueError(f"grid_points must be at least 1000, got {grid_points}")
    _check_component_norms(norm_parallel, norm_orthogonal, eps_deg)
    alphas = np.linspace(0.0, norm_parallel, grid_points)
    lt = normalized_leakage(alphas, norm_parallel)
    vt = normalized_loss(alphas, norm_parallel, norm_orthogonal)
    worst = np.maximum(lt, vt)
    i = int(np.argmin(worst))

    def gap(a: float) -> float:
        return normalized_leakage(a, norm_parallel) - normalized_loss(
            a, norm_parallel, norm_orthogonal
        )

    lo = float(alphas[max(i - 1, 0)])
    hi = float(alphas[min(i + 1, grid_points - 1)])
    if not (gap(lo) < 0.0 <= gap(hi)):
        lo, hi = 0.0, norm_parallel
    while hi - lo > _BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class DebiasResult:
    """The debiased vector and the bookkeeping around it.

    degenerate is "none" for the interpolated solution, "fair_already" when
    the input had no attribute component to speak of, and "pure_attribute"
    when it had nothing else. In both degenerate cases u_star is the input
    vector unchanged. cross_bound_term is this vector's contribution to the
    bound on image-text alignment change, sqrt(2 * self_utility_loss);
    degenerate results contribute zero.
    """

    u_star: np.ndarray
    alpha_star: float
    norm_parallel: float
    norm_orthogonal: float
    leakage: float
    self_utility_loss: float
    cross_bound_term: float
    degenerate: str = DEGENERATE_NONE


def _degenerate_result(e: Embedding, dec, kind: str) -> DebiasResult:
    return DebiasResult(
        u_star=e.vector.copy(),
        alpha_star=dec.norm_parallel,
        norm_parallel=dec.norm_parallel,
        norm_orthogonal=dec.norm_orthogonal,
        leakage=dec.norm_parallel,
        self_utility_loss=0.0,
        cross_bound_term=0.0,
        degenerate=kind,
    )


def _validate_debias_input(e: Embedding, subspace: AttributeSubspace):
    if e.dim != subspace.dim:
        raise DimensionMismatch(
            f"embedding {e.id!r} has dimension {e.dim}, subspace expects {subspace.dim}"
        )
    norm = float(np.linalg.norm(e.vector))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise NonUnitInput(f"embedding {e.id!r} has norm {norm!r}, expected unit length")


def debias(
    e: Embedding,
    subspace: AttributeSubspace,
    eps_deg: float = DEFAULT_EPS_DEG,
) -> DebiasResult:
    """Debias one embedding at the equalizing alpha.

    Inputs with a parallel or orthogonal norm at or below eps_deg skip the
    interpolation and come back unchanged, flagged with the matching
    degenerate kind.
    """
    _validate_debias_input(e, subspace)
    dec = decompose(e, subspace)
    if dec.norm_parallel <= eps_deg:
        return _degenerate_result(e, dec, DEGENERATE_FAIR_ALREADY)
    if dec.norm_orthogonal <= eps_deg:
        return _degenerate_result(e, dec, DEGENERATE_PURE_ATTRIBUTE)
    alpha = closed_form_alpha(dec.norm_parallel, dec.norm_orthogonal, eps_deg=eps_deg)
    beta = float(np.sqrt(max(1.0 - alpha * alpha, 0.0)))
    u = alpha * dec.parallel / dec.norm_parallel + beta * dec.orthogonal / dec.norm_orthogonal
    loss = (1.0 - dec.norm_orthogonal) * alpha / dec.norm_parallel
    return DebiasResult(
        u_star=u,
        alpha_star=float(alpha),
        norm_parallel=dec.norm_parallel,
        norm_orthogonal=dec.norm_orthogonal,
        leakage=float(alpha),
        self_utility_loss=float(loss),
        cross_bound_term=float(np.sqrt(2.0 * loss)),
        degenerate=DEGENERATE_NONE,
    )


def debias_extreme(
    e: Embedding,
    subspace: AttributeSubspace,
    mode: str,
    eps_deg: float = DEFAULT_EPS_DEG,
) -> DebiasResult:
    """Baseline arms: drop the attribute component entirely, or do nothing.

    mode "full_projection" renormalizes the orthogonal part (zero leakage,
    maximal loss); mode "identity" returns the input unchanged with its
    actual leakage and zero loss.
    """
    _validate_debias_input(e, subspace)
    dec = decompose(e, subspace)
    if mode == MODE_IDENTITY:
        return DebiasResult(
            u_star=e.vector.copy(),
            alpha_star=dec.norm_parallel,
            norm_parallel=dec.norm_parallel,
            norm_orthogonal=dec.norm_orthogonal,
            leakage=dec.norm_parallel,
            self_utility_loss=0.0,
            cross_bound_term=0.0,
            degenerate=DEGENERATE_NONE,
        )
    if mode == MODE_FULL_PROJECTION:
        if dec.norm_orthogonal <= eps_deg:
            raise DegenerateInput(
                f"embedding {e.id!r} lies in the attribute subspace, nothing remains after projection"
            )
        loss = 1.0 - dec.norm_orthogonal
        return DebiasResult(
            u_star=dec.orthogonal / dec.norm_orthogonal,
            alpha_star=0.0,
            norm_parallel=dec.norm_parallel,
            norm_orthogonal=dec.norm_orthogonal,
            leakage=0.0,
            self_utility_loss=float(loss),
            cross_bound_term=float(np.sqrt(2.0 * loss)),
            degenerate=DEGENERATE_NONE,
        )
    raise ValueError(f"unknown extreme mode {mode!r}")


def debias_batch(
    embeddings: list[Embedding],
    subspace: AttributeSubspace,
    eps_deg: float = DEFAULT_EPS_DEG,
    mode: str = MODE_PARETO,
    threads: int = 1,
) -> list[tuple[Embedding, DebiasResult]]:
    """Debias many embeddings, returned ordered by id.

    The work may be spread over threads; the output is byte-identical to
    the sequential run because each embedding is independent and the
    ordering is fixed by id.
    """
    ordered = sorted(embeddings, key=lambda e: e.id)

    def run(e: Embedding) -> tuple[Embedding, DebiasResult]:
        if mode == MODE_PARETO:
            return e, debias(e, subspace, eps_deg=eps_deg)
        return e, debias_extreme(e, subspace, mode, eps_deg=eps_deg)

    if threads <= 1 or len(ordered) < 2:
        return [run(e) for e in ordered]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, ordered))


def cross_utility_bound(result_image: DebiasResult, result_text: DebiasResult) -> float:
    """Upper bound on how much an image-text cosine can move.

    Sum of the per-modality terms sqrt(2 * self_utility_loss); a degenerate
    result leaves its side untouched and contributes zero.
    """
    return result_image.cross_bound_term + result_text.cross_bound_term
