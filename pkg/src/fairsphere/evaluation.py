"""Evaluation engines: zero-shot classification, retrieval, synthetic data.

A Workspace bundles image and text embeddings with the attribute subspace
and a debias mode. The engines apply the mode, then score with plain
cosine similarity. The synthetic generator plants known content and
attribute directions so the whole pipeline can be exercised end to end
with a controllable amount of bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionTooSmall,
    EmptyCandidates,
    FairsphereError,
    MissingLabels,
    MTooLarge,
)
from .geometry import AttributeSubspace, Embedding, GroupPrototype, normalize
from .metrics import (
    ClassifiedSample,
    RetrievalOutcome,
    eo_violations,
    f1_scores,
    max_skew,
    recall_at_k,
)
from .solver import (
    DebiasResult,
    MODE_FULL_PROJECTION,
    MODE_PARETO,
    debias,
    debias_extreme,
)

DEBIAS_MODES = ("none", "text_only", "image_only", "both", "full_projection_both")

PAIR_ID_LABEL = "pair_id"


@dataclass
class Workspace:
    """Everything one evaluation run needs, validated for consistency."""

    image_embeddings: list[Embedding]
    text_embeddings: list[Embedding]
    class_prompts: dict[str, str]
    subspace: AttributeSubspace
    debias_mode: str = "none"

    def __post_init__(self):
        if self.debias_mode not in DEBIAS_MODES:
            raise ValueError(f"unknown debias mode {self.debias_mode!r}")
        d = self.subspace.dim
        for e in list(self.image_embeddings) + list(self.text_embeddings):
            if e.dim != d:
                raise DimensionMismatch(
                    f"embedding {e.id!r} has dimension {e.dim}, workspace expects {d}"
                )
        text_ids = {e.id for e in self.text_embeddings}
        for cls, eid in self.class_prompts.items():
            if eid not in text_ids:
                raise FairsphereError(
                    f"class prompt for {cls!r} references missing text embedding {eid!r}"
                )


def _image_mode(debias_mode: str) -> str | None:
    if debias_mode in ("image_only", "both"):
        return MODE_PARETO
    if debias_mode == "full_projection_both":
        return MODE_FULL_PROJECTION
    return None


def _text_mode(debias_mode: str) -> str | None:
    if debias_mode in ("text_only", "both"):
        return MODE_PARETO
    if debias_mode == "full_projection_both":
        return MODE_FULL_PROJECTION
    return None


def apply_mode(
    embeddings: list[Embedding],
    subspace: AttributeSubspace,
    mode: str | None,
    eps_deg: float = 1e-6,
) -> tuple[list[Embedding], dict[str, DebiasResult]]:
    """Debias a list of embeddings, keeping ids, labels and list order.

    mode None leaves the vectors untouched and reports no results.
    """
    if mode is None:
        return list(embeddings), {}
    out = []
    results: dict[str, DebiasResult] = {}
    for e in embeddings:
        if mode == MODE_PARETO:
            res = debias(e, subspace, eps_deg=eps_deg)
        else:
            res = debias_extreme(e, subspace, mode, eps_deg=eps_deg)
        results[e.id] = res
        out.append(Embedding(id=e.id, vector=res.u_star, modality=e.modality, labels=e.labels))
    return out, results


def _require_label(e: Embedding, key: str) -> str:
    if not e.labels or key not in e.labels:
        raise MissingLabels(f"embedding {e.id!r} lacks the {key!r} label")
    return e.labels[key]


def classify_zero_shot(ws: Workspace, eps_deg: float = 1e-6) -> list[ClassifiedSample]:
    """Predict each image's class by cosine against the class prompts.

    Exact similarity ties resolve to the lexicographically smallest class
    name. Images must carry class and group labels.
    """
    if not ws.class_prompts:
        raise FairsphereError("no class prompts declared")
    classes = sorted(ws.class_prompts)
    texts_by_id = {e.id: e for e in ws.text_embeddings}
    prompts = [texts_by_id[ws.class_prompts[k]] for k in classes]
    prompts, _ = apply_mode(prompts, ws.subspace, _text_mode(ws.debias_mode), eps_deg)
    images, _ = apply_mode(ws.image_embeddings, ws.subspace, _image_mode(ws.debias_mode), eps_deg)
    if not images:
        return []
    image_matrix = np.stack([e.vector for e in images])
    prompt_matrix = np.stack([p.vector for p in prompts])
    sims = image_matrix @ prompt_matrix.T
    # argmax returns the first maximum, which is the smallest class name
    # because the prompt columns are sorted.
    predictions = np.argmax(sims, axis=1)
    samples = []
    for e, pred in zip(images, predictions):
        samples.append(
            ClassifiedSample(
                true_class=_require_label(e, "class"),
                predicted_class=classes[int(pred)],
                group=_require_label(e, "group"),
            )
        )
    return samples


def retrieve(
    ws: Workspace,
    queries: list[Embedding],
    m: int,
    eps_deg: float = 1e-6,
) -> list[RetrievalOutcome]:
    """Rank all candidate images for each text query by cosine similarity.

    Ties resolve to the smaller candidate id. Each query must carry a
    pair_id label naming its ground-truth image; m is validated against
    the candidate pool here so downstream skew cutoffs cannot overrun.
    """
    candidates = ws.image_embeddings
    if not candidates:
        raise EmptyCandidates("retrieval needs at least one candidate image")
    if not 1 <= m <= len(candidates):
        raise MTooLarge(f"cutoff {m} outside [1, {len(candidates)}]")
    candidates = sorted(candidates, key=lambda e: e.id)
    candidate_groups = {e.id: _require_label(e, "group") for e in candidates}
    candidates, _ = apply_mode(candidates, ws.subspace, _image_mode(ws.debias_mode), eps_deg)
    queries, _ = apply_mode(queries, ws.subspace, _text_mode(ws.debias_mode), eps_deg)
    cand_ids = [e.id for e in candidates]
    cand_matrix = np.stack([e.vector for e in candidates])
    outcomes = []
    for q in queries:
        if q.dim != cand_matrix.shape[1]:
            raise DimensionMismatch(f"query {q.id!r} dimension {q.dim} does not match candidates")
        relevant = _require_label(q, PAIR_ID_LABEL)
        sims = cand_matrix @ q.vector
        # stable sort on descending similarity keeps the id order for ties
        order = np.argsort(-sims, kind="stable")
        outcomes.append(
            RetrievalOutcome(
                query_id=q.id,
                ranked_ids=tuple(cand_ids[int(i)] for i in order),
                relevant_id=relevant,
                candidate_groups=candidate_groups,
            )
        )
    return outcomes


@dataclass
class SynthSpec:
    """Parameters of the synthetic benchmark generator."""

    d: int
    n_groups: int
    n_classes: int
    samples_per_cell: int
    leakage_strength: float
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.n_groups < 2 or self.n_classes < 2:
            raise FairsphereError("need at least two groups and two classes")
        if self.samples_per_cell < 1:
            raise FairsphereError("samples_per_cell must be positive")
        if not 0.0 <= self.leakage_strength < 1.0:
            raise FairsphereError("leakage_strength must lie in [0, 1)")
        if self.noise_sigma < 0.0:
            raise FairsphereError("noise_sigma must be nonnegative")
        # one shared content axis, one axis per class, one per group
        if self.d < self.n_classes + self.n_groups + 1:
            raise DimensionTooSmall(
                f"d={self.d} cannot hold {self.n_classes} classes plus "
                f"{self.n_groups} groups plus the shared content axis"
            )


@dataclass
class SyntheticData:
    image_embeddings: list[Embedding]
    text_embeddings: list[Embedding]
    prototypes: list[GroupPrototype]
    class_prompts: dict[str, str]

    @property
    def queries(self) -> list[Embedding]:
        return [e for e in self.text_embeddings if e.labels and PAIR_ID_LABEL in e.labels]


# how far class contents stand apart; smaller values make classes easier to
# confuse once an attribute tilt enters the picture
CONTENT_SEPARATION = 0.35
# attribute tilt of retrieval queries toward their paired image's group,
# as a fraction of leakage_strength
QUERY_TILT = 0.2
# fraction of a query's noise budget copied from its paired image; the rest
# is fresh, so ground truth is findable but not trivially so
QUERY_NOISE_SHARE = 0.5


def generate_synthetic(spec: SynthSpec) -> SyntheticData:
    """Plant orthogonal content and attribute axes, then sample the corpus.

    Every class content blends a shared axis with a class axis, images add
    their group's attribute axis scaled by leakage_strength plus Gaussian
    noise, and class prompts lean toward a stereotype group (class index
    modulo group count). Queries carry a milder tilt toward their paired
    image's group and copy part of its noise, so the ground truth is
    recoverable but competes with its class peers. Identical specs produce
    bit-identical output.
    """
    rng = np.random.default_rng(spec.seed)
    classes = [f"c{i}" for i in range(spec.n_classes)]
    groups = [f"g{i}" for i in range(spec.n_groups)]
    shared = np.zeros(spec.d)
    shared[0] = 1.0
    class_axes = [np.eye(spec.d)[1 + i] for i in range(spec.n_classes)]
    group_axes = [np.eye(spec.d)[1 + spec.n_classes + i] for i in range(spec.n_groups)]
    sep = CONTENT_SEPARATION
    contents = [np.sqrt(1.0 - sep * sep) * shared + sep * ax for ax in class_axes]
    stereotype = {k: k % spec.n_groups for k in range(spec.n_classes)}

    images: list[Embedding] = []
    noises: list[np.ndarray] = []
    for ki, k in enumerate(classes):
        for gi, g in enumerate(groups):
            for j in range(spec.samples_per_cell):
                noise = rng.standard_normal(spec.d)
                raw = (
                    contents[ki]
                    + spec.leakage_strength * group_axes[gi]
                    + spec.noise_sigma * noise
                )
                images.append(
                    Embedding.from_raw(
                        id=f"img:{k}:{g}:{j:04d}",
                        vector=raw,
                        modality="image",
                        labels={"class": k, "group": g},
                    )
                )
                noises.append(noise)

    texts: list[Embedding] = []
    class_prompts: dict[str, str] = {}
    for ki, k in enumerate(classes):
        raw = contents[ki] + spec.leakage_strength * group_axes[stereotype[ki]]
        pid = f"cls:{k}"
        texts.append(
            Embedding.from_raw(id=pid, vector=raw, modality="text", labels={"class": k})
        )
        class_prompts[k] = pid

    share = QUERY_NOISE_SHARE
    fresh_scale = float(np.sqrt(1.0 - share * share))
    for img, noise in zip(images, noises):
        k = img.labels["class"]
        ki = classes.index(k)
        gi = groups.index(img.labels["group"])
        fresh = rng.standard_normal(spec.d)
        raw = (
            contents[ki]
            + QUERY_TILT * spec.leakage_strength * group_axes[gi]
            + spec.noise_sigma * (share * noise + fresh_scale * fresh)
        )
        texts.append(
            Embedding.from_raw(
                id="qry:" + img.id[len("img:"):],
                vector=raw,
                modality="text",
                labels={"class": k, PAIR_ID_LABEL: img.id},
            )
        )

    prototypes = [
        GroupPrototype(group=g, vector=normalize(shared + ax))
        for g, ax in zip(groups, group_axes)
    ]
    return SyntheticData(
        image_embeddings=images,
        text_embeddings=texts,
        prototypes=prototypes,
        class_prompts=class_prompts,
    )


@dataclass
class MetricConfig:
    """Which evaluation tasks to run and with what cutoffs."""

    tasks: tuple[str, ...] = ("classify", "retrieve")
    skew_top_m: int = 10
    recall_ks: tuple[int, ...] = (5,)

    def __post_init__(self):
        for t in self.tasks:
            if t not in ("classify", "retrieve"):
                raise ValueError(f"unknown task {t!r}")


@dataclass
class EvalReport:
    config: dict
    classification: dict | None = None
    retrieval: dict | None = None
    solver_stats: dict | None = None
    cross_utility_check: dict | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "classification": self.classification,
            "retrieval": self.retrieval,
            "solver_stats": self.solver_stats,
            "cross_utility_check": self.cross_utility_check,
        }


def _solver_stats(results: dict[str, DebiasResult]) -> dict:
    values = list(results.values())
    active = [r for r in values if r.degenerate == "none"]
    stats = {
        "count": len(values),
        "degenerate_fair_already": sum(1 for r in values if r.degenerate == "fair_already"),
        "degenerate_pure_attribute": sum(1 for r in values if r.degenerate == "pure_attribute"),
    }
    if active:
        stats["mean_alpha_star"] = float(np.mean([r.alpha_star for r in active]))
        stats["mean_self_utility_loss"] = float(np.mean([r.self_utility_loss for r in active]))
        stats["max_cross_bound_term"] = float(max(r.cross_bound_term for r in active))
    return stats


def _cross_utility_check(
    originals_img: list[Embedding],
    debiased_img: list[Embedding],
    results_img: dict[str, DebiasResult],
    originals_txt: list[Embedding],
    debiased_txt: list[Embedding],
    results_txt: dict[str, DebiasResult],
) -> dict:
    """Verify every image-text cosine moved less than its reported bound."""
    if not originals_img or not originals_txt:
        return {"pairs": 0, "passed": True, "max_violation": 0.0}
    e_img = np.stack([e.vector for e in originals_img])
    u_img = np.stack([e.vector for e in debiased_img])
    e_txt = np.stack([e.vector for e in originals_txt])
    u_txt = np.stack([e.vector for e in debiased_txt])
    change = np.abs(u_img @ u_txt.T - e_img @ e_txt.T)

    def term(results: dict[str, DebiasResult], e: Embedding) -> float:
        res = results.get(e.id)
        return res.cross_bound_term if res is not None else 0.0

    terms_img = np.array([term(results_img, e) for e in originals_img])
    terms_txt = np.array([term(results_txt, e) for e in originals_txt])
    bound = terms_img[:, None] + terms_txt[None, :]
    violation = float(np.max(change - bound))
    return {
        "pairs": int(change.size),
        "passed": bool(violation <= 1e-9),
        "max_violation": violation,
    }


def run_report(
    ws: Workspace,
    queries: list[Embedding],
    metric_config: MetricConfig,
    eps_deg: float = 1e-6,
) -> EvalReport:
    """Run the configured tasks once and gather everything into one report.

    The mode is applied a single time here, and the engines then run over
    an already-debiased workspace, so solver statistics and the alignment
    change check describe exactly the vectors that were scored. An empty
    task list yields a config-echo-only report.
    """
    images, results_img = apply_mode(
        ws.image_embeddings, ws.subspace, _image_mode(ws.debias_mode), eps_deg
    )
    texts, results_txt = apply_mode(
        ws.text_embeddings, ws.subspace, _text_mode(ws.debias_mode), eps_deg
    )
    query_ids = {q.id for q in queries}
    debiased_queries = [t for t in texts if t.id in query_ids]
    flat = Workspace(
        image_embeddings=images,
        text_embeddings=texts,
        class_prompts=ws.class_prompts,
        subspace=ws.subspace,
        debias_mode="none",
    )
    report = EvalReport(
        config={
            "debias_mode": ws.debias_mode,
            "d": ws.subspace.dim,
            "subspace_rank": ws.subspace.rank,
            "subspace_groups": list(ws.subspace.source_groups),
            "reference_group": ws.subspace.reference_group,
            "n_images": len(ws.image_embeddings),
            "n_texts": len(ws.text_embeddings),
            "n_queries": len(queries),
            "tasks": list(metric_config.tasks),
            "skew_top_m": metric_config.skew_top_m,
            "recall_ks": list(metric_config.recall_ks),
            "eps_deg": eps_deg,
        }
    )
    if "classify" in metric_config.tasks:
        samples = classify_zero_shot(flat, eps_deg)
        classes = sorted(ws.class_prompts)
        groups = sorted({_require_label(e, "group") for e in ws.image_embeddings})
        delta_avg, delta_max = eo_violations(samples, classes, groups)
        f1 = f1_scores(samples, classes)
        report.classification = {
            "n_samples": len(samples),
            "delta_eo_avg": delta_avg,
            "delta_eo_max": delta_max,
            "macro_f1": f1.macro_f1,
            "per_class_f1": f1.per_class,
            "degenerate_classes": f1.degenerate_classes,
        }
    if "retrieve" in metric_config.tasks:
        outcomes = retrieve(flat, debiased_queries, metric_config.skew_top_m, eps_deg)
        groups = sorted({_require_label(e, "group") for e in ws.image_embeddings})
        report.retrieval = {
            "n_queries": len(outcomes),
            "max_skew": max_skew(outcomes, metric_config.skew_top_m, groups),
            "recall_at_k": {
                str(k): recall_at_k(outcomes, k) for k in metric_config.recall_ks
            },
        }
    if metric_config.tasks:
        merged = dict(results_img)
        merged.update(results_txt)
        report.solver_stats = _solver_stats(merged)
        report.cross_utility_check = _cross_utility_check(
            ws.image_embeddings, images, results_img,
            ws.text_embeddings, texts, results_txt,
        )
    return report
