"""Command line interface.

Payload outputs (embedding files, subspace files, reports) are written
deterministically: identical inputs and flags give byte-identical files.
Anything time-dependent goes to a sidecar named <output>.meta.json.
Diagnostics go to stderr. Exit codes: 0 success, 1 usage error, 2 data
error, 3 internal invariant violation.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import FairsphereError, InvariantViolation, MalformedHeader
from .embfile import (
    atomic_write_text,
    canonical_json,
    load_subspace,
    read_embedding_file,
    save_embeddings,
    save_subspace,
)
from .evaluation import (
    DEBIAS_MODES,
    PAIR_ID_LABEL,
    MetricConfig,
    SynthSpec,
    Workspace,
    generate_synthetic,
    run_report,
)
from .geometry import DEFAULT_RANK_TOL, Embedding, GroupPrototype, build_subspace
from .metrics import GroupCounts, statistical_parity
from .prototypes import build_prototypes, variant_sets_from_config
from .solver import (
    DEFAULT_EPS_DEG,
    DEFAULT_GRID_POINTS,
    MODE_FULL_PROJECTION,
    MODE_IDENTITY,
    MODE_PARETO,
    closed_form_alpha,
    debias_batch,
    normalized_leakage,
    normalized_loss,
    oracle_alpha,
)

ORACLE_TOLERANCE = 1e-9


@dataclass
class CliSettings:
    seed: int = 0
    mode: str = "both"
    eps_deg: float = DEFAULT_EPS_DEG
    rank_tol: float = DEFAULT_RANK_TOL
    threads: int = 1
    out: str | None = None


def _sidecar(path: Path, argv_hint: str):
    meta = {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "tool": "fairsphere",
        "version": __version__,
        "command": argv_hint,
    }
    Path(str(path) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", "utf-8"
    )


def _write_payload_text(path: str | Path, payload: str, ctx: click.Context):
    path = Path(path)
    atomic_write_text(path, payload)
    _sidecar(path, ctx.command_path)
    click.echo(f"wrote {path}", err=True)


def _pick(override, fallback):
    return fallback if override is None else override


def _resolve_out(ctx: click.Context, out: str | None) -> str:
    settings: CliSettings = ctx.obj
    resolved = _pick(out, settings.out)
    if resolved is None:
        raise click.UsageError("no output path given (use --out)")
    return resolved


def _prototypes_from_file(path: str) -> list[GroupPrototype]:
    _, records = read_embedding_file(path)
    prototypes = []
    for e in records:
        group = e.labels.get("group", e.id) if e.labels else e.id
        prototypes.append(GroupPrototype(group=group, vector=e.vector))
    return prototypes


def _prototype_records(prototypes: list[GroupPrototype], attribute: str | None) -> list[Embedding]:
    labels_extra = {} if attribute is None else {"attribute": attribute}
    return [
        Embedding(
            id=p.group,
            vector=p.vector,
            modality="text",
            labels={"group": p.group, **labels_extra},
        )
        for p in prototypes
    ]


@click.group()
@click.version_option(version=__version__, prog_name="fairsphere")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for randomized commands.")
@click.option("--mode", type=click.Choice(DEBIAS_MODES), default="both", show_default=True,
              help="Which sides of the workspace get debiased.")
@click.option("--eps-deg", type=float, default=DEFAULT_EPS_DEG, show_default=True,
              help="Degeneracy threshold on component norms.")
@click.option("--rank-tol", type=float, default=DEFAULT_RANK_TOL, show_default=True,
              help="Relative singular value cutoff for the subspace rank.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads for batch debiasing.")
@click.option("--out", type=str, default=None, help="Default output path for subcommands.")
@click.pass_context
def cli(ctx, seed, mode, eps_deg, rank_tol, threads, out):
    """Debias unit-norm embeddings and measure what it does."""
    ctx.obj = CliSettings(
        seed=seed, mode=mode, eps_deg=eps_deg, rank_tol=rank_tol, threads=threads, out=out
    )


@cli.group()
def prototypes():
    """Group prototype construction."""


@prototypes.command("build")
@click.option("--variants", "variants_path", required=True, type=str,
              help="JSON file with the attribute, groups, anchors and variants.")
@click.option("--embeddings", "embeddings_path", required=True, type=str,
              help="Embedding file holding the prompt embeddings, keyed by text hash.")
@click.option("--out", type=str, default=None)
@click.pass_context
def prototypes_build(ctx, variants_path, embeddings_path, out):
    """Spherical-mean prototypes from prompt variant embeddings."""
    out = _resolve_out(ctx, out)
    config = json.loads(Path(variants_path).read_text("utf-8"))
    _, records = read_embedding_file(embeddings_path)
    by_id = {e.id: e for e in records}
    attribute, sets = variant_sets_from_config(config, by_id)
    protos = build_prototypes(sets)
    save_embeddings(out, _prototype_records(protos, attribute), dtype="f64")
    _sidecar(Path(out), ctx.command_path)
    click.echo(f"wrote {len(protos)} prototypes to {out}", err=True)


@cli.group()
def subspace():
    """Attribute subspace construction."""


@subspace.command("build")
@click.option("--prototypes", "prototypes_path", required=True, type=str)
@click.option("--reference", type=str, default=None,
              help="Reference group; defaults to the first prototype.")
@click.option("--rank-tol", type=float, default=None)
@click.option("--out", type=str, default=None)
@click.pass_context
def subspace_build(ctx, prototypes_path, reference, rank_tol, out):
    """Span and orthogonalize prototype differences."""
    settings: CliSettings = ctx.obj
    out = _resolve_out(ctx, out)
    protos = _prototypes_from_file(prototypes_path)
    if reference is None:
        reference = protos[0].group
    sub = build_subspace(protos, reference, _pick(rank_tol, settings.rank_tol))
    save_subspace(out, sub)
    _sidecar(Path(out), ctx.command_path)
    click.echo(f"subspace rank {sub.rank} over {len(protos)} groups -> {out}", err=True)


@cli.group()
def debias():
    """Embedding debiasing."""


@debias.command("run")
@click.option("--embeddings", "embeddings_path", required=True, type=str)
@click.option("--subspace", "subspace_path", required=True, type=str)
@click.option("--mode", type=click.Choice(DEBIAS_MODES), default=None)
@click.option("--eps-deg", type=float, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--out", type=str, default=None, help="Debiased embedding file.")
@click.option("--results", "results_path", type=str, default=None,
              help="Optional JSONL file with one result record per embedding.")
@click.pass_context
def debias_run(ctx, embeddings_path, subspace_path, mode, eps_deg, threads, out, results_path):
    """Debias every record of an embedding file.

    The mode decides what happens per modality: "both" debiases all
    records, "text_only"/"image_only" leave the other modality unchanged,
    "none" leaves everything unchanged and "full_projection_both" removes
    the attribute component entirely. Output records are ordered by id.
    """
    settings: CliSettings = ctx.obj
    out = _resolve_out(ctx, out)
    mode = _pick(mode, settings.mode)
    eps_deg = _pick(eps_deg, settings.eps_deg)
    threads = _pick(threads, settings.threads)
    header, records = read_embedding_file(embeddings_path)
    sub = load_subspace(subspace_path)

    def solver_mode(modality: str) -> str:
        if mode == "none":
            return MODE_IDENTITY
        if mode == "full_projection_both":
            return MODE_FULL_PROJECTION
        if mode == "both":
            return MODE_PARETO
        wanted = "text" if mode == "text_only" else "image"
        return MODE_PARETO if modality == wanted else MODE_IDENTITY

    paired = []
    for solver_kind in (MODE_PARETO, MODE_FULL_PROJECTION, MODE_IDENTITY):
        batch = [e for e in records if solver_mode(e.modality) == solver_kind]
        if batch:
            paired.extend(debias_batch(batch, sub, eps_deg=eps_deg, mode=solver_kind, threads=threads))
    paired.sort(key=lambda item: item[0].id)

    debiased = [
        Embedding(id=e.id, vector=res.u_star, modality=e.modality, labels=e.labels)
        for e, res in paired
    ]
    save_embeddings(out, debiased, dtype=header.dtype)
    _sidecar(Path(out), ctx.command_path)
    if results_path:
        lines = []
        for e, res in paired:
            lines.append(canonical_json({
                "id": e.id,
                "degenerate": res.degenerate,
                "alpha_star": res.alpha_star,
                "leakage": res.leakage,
                "self_utility_loss": res.self_utility_loss,
                "cross_bound_term": res.cross_bound_term,
                "norm_parallel": res.norm_parallel,
                "norm_orthogonal": res.norm_orthogonal,
            }))
        atomic_write_text(results_path, "\n".join(lines) + "\n")
        _sidecar(Path(results_path), ctx.command_path)
    click.echo(f"debiased {len(debiased)} records ({mode}) -> {out}", err=True)


def _pair_queries(records: list[Embedding]) -> list[Embedding]:
    """Keep the records that name a ground-truth image; reject none at all."""
    queries = [e for e in records if e.labels and PAIR_ID_LABEL in e.labels]
    if not queries:
        raise FairsphereError(
            f"no query carries the {PAIR_ID_LABEL!r} label naming its paired image"
        )
    return queries


def _load_workspace(images_path, texts_path, class_prompts_path, subspace_path, mode):
    _, images = read_embedding_file(images_path)
    _, texts = read_embedding_file(texts_path)
    prompts = json.loads(Path(class_prompts_path).read_text("utf-8"))
    if not isinstance(prompts, dict):
        raise MalformedHeader("class prompt file must map class names to embedding ids")
    sub = load_subspace(subspace_path)
    return Workspace(
        image_embeddings=images,
        text_embeddings=texts,
        class_prompts=prompts,
        subspace=sub,
        debias_mode=mode,
    )


@cli.group("eval")
def eval_group():
    """Evaluation engines."""


@eval_group.command("classify")
@click.option("--images", "images_path", required=True, type=str)
@click.option("--texts", "texts_path", required=True, type=str)
@click.option("--class-prompts", "class_prompts_path", required=True, type=str,
              help="JSON map from class name to text embedding id.")
@click.option("--subspace", "subspace_path", required=True, type=str)
@click.option("--mode", type=click.Choice(DEBIAS_MODES), default=None)
@click.option("--eps-deg", type=float, default=None)
@click.option("--out", type=str, default=None)
@click.pass_context
def eval_classify(ctx, images_path, texts_path, class_prompts_path, subspace_path, mode, eps_deg, out):
    """Zero-shot classification report with fairness gaps and F1."""
    settings: CliSettings = ctx.obj
    out = _resolve_out(ctx, out)
    ws = _load_workspace(images_path, texts_path, class_prompts_path, subspace_path,
                         _pick(mode, settings.mode))
    report = run_report(ws, [], MetricConfig(tasks=("classify",)),
                        eps_deg=_pick(eps_deg, settings.eps_deg))
    _write_payload_text(out, canonical_json(report.to_dict()) + "\n", ctx)


@eval_group.command("retrieve")
@click.option("--images", "images_path", required=True, type=str)
@click.option("--queries", "queries_path", required=True, type=str)
@click.option("--subspace", "subspace_path", required=True, type=str)
@click.option("--mode", type=click.Choice(DEBIAS_MODES), default=None)
@click.option("--eps-deg", type=float, default=None)
@click.option("--top-m", type=int, default=10, show_default=True, help="Cutoff for the skew metric.")
@click.option("--recall-k", "recall_ks", type=int, multiple=True, default=(5,), show_default=True)
@click.option("--out", type=str, default=None)
@click.pass_context
def eval_retrieve(ctx, images_path, queries_path, subspace_path, mode, eps_deg, top_m, recall_ks, out):
    """Cross-modal retrieval report with skew and recall."""
    settings: CliSettings = ctx.obj
    out = _resolve_out(ctx, out)
    _, images = read_embedding_file(images_path)
    _, queries = read_embedding_file(queries_path)
    queries = _pair_queries(queries)
    sub = load_subspace(subspace_path)
    ws = Workspace(
        image_embeddings=images,
        text_embeddings=queries,
        class_prompts={},
        subspace=sub,
        debias_mode=_pick(mode, settings.mode),
    )
    report = run_report(
        ws, queries,
        MetricConfig(tasks=("retrieve",), skew_top_m=top_m, recall_ks=tuple(recall_ks)),
        eps_deg=_pick(eps_deg, settings.eps_deg),
    )
    _write_payload_text(out, canonical_json(report.to_dict()) + "\n", ctx)


@cli.command("report")
@click.option("--images", "images_path", required=True, type=str)
@click.option("--texts", "texts_path", required=True, type=str)
@click.option("--class-prompts", "class_prompts_path", required=True, type=str)
@click.option("--queries", "queries_path", required=True, type=str)
@click.option("--subspace", "subspace_path", required=True, type=str)
@click.option("--mode", type=click.Choice(DEBIAS_MODES), default=None)
@click.option("--eps-deg", type=float, default=None)
@click.option("--top-m", type=int, default=10, show_default=True)
@click.option("--recall-k", "recall_ks", type=int, multiple=True, default=(5,), show_default=True)
@click.option("--out", type=str, default=None)
@click.pass_context
def report_cmd(ctx, images_path, texts_path, class_prompts_path, queries_path, subspace_path,
               mode, eps_deg, top_m, recall_ks, out):
    """Full evaluation: classification, retrieval, solver statistics."""
    settings: CliSettings = ctx.obj
    out = _resolve_out(ctx, out)
    ws = _load_workspace(images_path, texts_path, class_prompts_path, subspace_path,
                         _pick(mode, settings.mode))
    _, queries = read_embedding_file(queries_path)
    queries = _pair_queries(queries)
    report = run_report(
        ws, queries,
        MetricConfig(tasks=("classify", "retrieve"), skew_top_m=top_m, recall_ks=tuple(recall_ks)),
        eps_deg=_pick(eps_deg, settings.eps_deg),
    )
    _write_payload_text(out, canonical_json(report.to_dict()) + "\n", ctx)


@cli.group()
def metric():
    """Standalone metrics."""


@metric.command("sp")
@click.option("--counts", "counts_path", required=True, type=str,
              help="CSV with columns prompt_id,group,count.")
@click.option("--groups", "groups_arg", required=True, type=str,
              help="Comma-separated declared group names.")
@click.option("--out", type=str, default=None, help="Optional JSON output.")
@click.pass_context
def metric_sp(ctx, counts_path, groups_arg, out):
    """Statistical parity of generation counts, one line per prompt."""
    groups = [g.strip() for g in groups_arg.split(",") if g.strip()]
    if len(groups) < 2:
        raise click.UsageError("need at least two group names")
    order: list[str] = []
    table: dict[str, dict[str, int]] = {}
    with open(counts_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        required = {"prompt_id", "group", "count"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise MalformedHeader(
                f"counts file must have columns {sorted(required)}, got {reader.fieldnames}"
            )
        for row in reader:
            pid = row["prompt_id"]
            if pid not in table:
                table[pid] = {}
                order.append(pid)
            table[pid][row["group"]] = table[pid].get(row["group"], 0) + int(row["count"])
    if not order:
        raise MalformedHeader("counts file has no rows")
    values = {}
    for pid in order:
        counts = GroupCounts(prompt_id=pid, counts=table[pid], total=sum(table[pid].values()))
        values[pid] = statistical_parity(counts, groups)
        click.echo(f"{pid}\t{values[pid]:.5f}")
    if _pick(out, ctx.obj.out) is not None:
        payload = canonical_json({
            "per_prompt": values,
            "mean_sp": float(np.mean(list(values.values()))),
            "groups": sorted(groups),
        })
        _write_payload_text(_pick(out, ctx.obj.out), payload + "\n", ctx)


@cli.group()
def synth():
    """Synthetic benchmark data."""


@synth.command("generate")
@click.option("--dim", type=int, default=64, show_default=True)
@click.option("--groups", "n_groups", type=int, default=2, show_default=True)
@click.option("--classes", "n_classes", type=int, default=2, show_default=True)
@click.option("--per-cell", type=int, default=50, show_default=True)
@click.option("--leakage", type=float, default=0.8, show_default=True)
@click.option("--noise", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", required=True, type=str)
@click.pass_context
def synth_generate(ctx, dim, n_groups, n_classes, per_cell, leakage, noise, seed, out_dir):
    """Generate a planted-bias corpus: images, texts, prototypes, prompts."""
    settings: CliSettings = ctx.obj
    spec = SynthSpec(
        d=dim,
        n_groups=n_groups,
        n_classes=n_classes,
        samples_per_cell=per_cell,
        leakage_strength=leakage,
        noise_sigma=noise,
        seed=_pick(seed, settings.seed),
    )
    data = generate_synthetic(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings(out / "images.jsonl", data.image_embeddings, dtype="f64")
    save_embeddings(out / "texts.jsonl", data.text_embeddings, dtype="f64")
    save_embeddings(out / "prototypes.jsonl", _prototype_records(data.prototypes, None), dtype="f64")
    atomic_write_text(out / "class_prompts.json", canonical_json(data.class_prompts) + "\n")
    atomic_write_text(out / "manifest.json", canonical_json({
        "d": spec.d,
        "n_groups": spec.n_groups,
        "n_classes": spec.n_classes,
        "samples_per_cell": spec.samples_per_cell,
        "leakage_strength": spec.leakage_strength,
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
    }) + "\n")
    _sidecar(out / "run", ctx.command_path)
    click.echo(
        f"generated {len(data.image_embeddings)} images, {len(data.text_embeddings)} texts -> {out}",
        err=True,
    )


@cli.group()
def oracle():
    """Brute-force verification of the closed-form solution."""


@oracle.command("check")
@click.option("--trials", type=int, default=10000, show_default=True)
@click.option("--grid-points", type=int, default=DEFAULT_GRID_POINTS, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--eps-deg", type=float, default=None)
@click.pass_context
def oracle_check(ctx, trials, grid_points, seed, eps_deg):
    """Compare closed-form alphas against grid-plus-bisection over random norms.

    Exits 3 if any deviation, or the gap between the two scaled objectives
    at the closed-form point, exceeds 1e-9.
    """
    settings: CliSettings = ctx.obj
    eps = _pick(eps_deg, settings.eps_deg)
    rng = np.random.default_rng(_pick(seed, settings.seed))
    margin = float(np.arccos(1.0 - eps)) * 1.001
    thetas = rng.uniform(margin, np.pi / 2.0 - margin, size=trials)
    max_dev = 0.0
    max_gap = 0.0
    for theta in thetas:
        npar = float(np.cos(theta))
        nort = float(np.sin(theta))
        closed = closed_form_alpha(npar, nort, eps_deg=eps)
        brute = oracle_alpha(npar, nort, grid_points=grid_points, eps_deg=eps)
        max_dev = max(max_dev, abs(closed - brute))
        gap = abs(normalized_leakage(closed, npar) - normalized_loss(closed, npar, nort))
        max_gap = max(max_gap, gap)
    click.echo(f"max alpha deviation {max_dev:.3e} over {trials} trials")
    click.echo(f"max equalization gap {max_gap:.3e}")
    if max_dev > ORACLE_TOLERANCE or max_gap > ORACLE_TOLERANCE:
        raise InvariantViolation(
            f"closed form and oracle disagree: deviation {max_dev:.3e}, gap {max_gap:.3e}"
        )


def main(argv: list[str] | None = None) -> int:
    """Run the CLI and map exceptions onto documented exit codes."""
    try:
        cli.main(args=argv, prog_name="fairsphere", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except InvariantViolation as exc:
        click.echo(f"invariant violation: {exc}", err=True)
        return 3
    except FairsphereError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, csv.Error, KeyError, ValueError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2


def entrypoint():
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
