"""Release gate: every advertised guarantee checked at its stated tolerance.

Each test prints one verdict line so a plain `pytest -s tests/test_acceptance.py`
reads as a checklist. Values marked as frozen were produced by the committed
bisection oracle or by the committed synthetic generator at the pinned seed and
must not be edited without re-deriving them.
"""

import contextlib
import json
import math
import time

import numpy as np
import pytest

from fairsphere import (
    ClassifiedSample,
    Embedding,
    GroupCounts,
    GroupPrototype,
    MetricConfig,
    PAIR_ID_LABEL,
    RetrievalOutcome,
    SynthSpec,
    Workspace,
    build_subspace,
    closed_form_alpha,
    cross_utility_bound,
    debias,
    eo_violations,
    generate_synthetic,
    load_embeddings,
    max_skew,
    normalize,
    normalized_leakage,
    normalized_loss,
    oracle_alpha,
    pareto_point,
    project_orthogonal,
    project_parallel,
    recall_at_k,
    run_report,
    save_embeddings,
    statistical_parity,
    text_id,
)
from fairsphere.cli import main

from conftest import embedding_with_norms, rand_unit, random_subspace, unit_in_complement, unit_in_span

# both component norms must stay strictly inside (1e-6, 1 - 1e-6); on the
# unit quarter-circle that is exactly this angular window
THETA_LO = math.acos(1.0 - 1e-6)
THETA_HI = math.asin(1.0 - 1e-6)


@contextlib.contextmanager
def verdict(name: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def run(argv):
    return main(list(argv))


class TestSolver:
    def test_closed_form_matches_bisection_oracle(self):
        with verdict("closed form vs oracle, 10k pairs, equalized losses, < 5 s"):
            rng = np.random.default_rng(20250814)
            start = time.perf_counter()
            max_dev = 0.0
            max_gap = 0.0
            for theta in rng.uniform(THETA_LO, THETA_HI, 10_000):
                p, q = math.cos(theta), math.sin(theta)
                alpha = closed_form_alpha(p, q)
                max_dev = max(max_dev, abs(alpha - oracle_alpha(p, q)))
                gap = abs(normalized_leakage(alpha, p) - normalized_loss(alpha, p, q))
                max_gap = max(max_gap, gap)
            elapsed = time.perf_counter() - start
            assert max_dev <= 1e-9
            assert max_gap <= 1e-9
            assert elapsed < 5.0

    def test_worked_instance(self, axis_subspace):
        with verdict("worked instance (0.6, 0.8): alpha, loss, alignment"):
            alpha = closed_form_alpha(0.6, 0.8)
            # frozen by the committed bisection oracle
            assert alpha == pytest.approx(0.23916, abs=1e-4)
            assert alpha == pytest.approx(oracle_alpha(0.6, 0.8), abs=1e-9)
            point = pareto_point(alpha, 0.6, 0.8)
            assert point.self_utility_loss == pytest.approx(0.2 * alpha / 0.6, abs=1e-9)
            e = Embedding(id="w", vector=np.array([0.6, 0.8, 0.0]), modality="image")
            res = debias(e, axis_subspace)
            dot = float(res.u_star @ e.vector)
            assert dot == pytest.approx(1.0 - point.self_utility_loss, abs=1e-9)

    def test_solution_undominated_on_dense_grid(self):
        with verdict("no point of a 10^4-step alpha grid dominates the solution"):
            rng = np.random.default_rng(7)
            grid = np.linspace(0.0, 1.0, 10_000)
            leak_grid = grid
            root = np.sqrt(np.clip(1.0 - grid**2, 0.0, None))
            for theta in rng.uniform(THETA_LO, THETA_HI, 1_000):
                p, q = math.cos(theta), math.sin(theta)
                point = pareto_point(closed_form_alpha(p, q), p, q)
                loss_grid = 1.0 - grid * p - root * q
                dominates = (leak_grid < point.leakage - 1e-12) & (
                    loss_grid < point.self_utility_loss - 1e-12
                )
                assert not dominates.any()

    def test_alignment_shift_bound_and_tightening(self, rng):
        with verdict("alignment-shift bound on 10k 4-tuples; tight term <= loose term"):
            for d in (8, 512):
                draws = np.random.default_rng(d).standard_normal((4, 10_000, d))
                u_i, e_i, u_t, e_t = draws / np.linalg.norm(draws, axis=2, keepdims=True)
                shift = np.abs(
                    np.einsum("nd,nd->n", u_i, u_t) - np.einsum("nd,nd->n", e_i, e_t)
                )
                bound = np.sqrt(2.0 * (1.0 - np.einsum("nd,nd->n", u_i, e_i))) + np.sqrt(
                    2.0 * (1.0 - np.einsum("nd,nd->n", u_t, e_t))
                )
                assert float((bound - shift).min()) >= -1e-9
            sub = random_subspace(rng, 24)
            for _ in range(1_000):
                ri = debias(embedding_with_norms(rng, sub, float(rng.uniform(0.05, 0.95)), id="i"), sub)
                rt = debias(embedding_with_norms(rng, sub, float(rng.uniform(0.05, 0.95)), id="t"), sub)
                loose = math.sqrt(2.0 * (1.0 - ri.norm_orthogonal)) + math.sqrt(
                    2.0 * (1.0 - rt.norm_orthogonal)
                )
                assert cross_utility_bound(ri, rt) <= loose + 1e-12

    def test_degenerate_inputs_returned_bit_identical(self, rng):
        with verdict("near-degenerate inputs pass through bit-identical"):
            sub = random_subspace(rng, 12)
            for parallel_norm in (0.0, 1e-8, 5e-7):
                x = unit_in_span(rng, sub)
                y = unit_in_complement(rng, sub)
                fair = Embedding(
                    id="f",
                    vector=normalize(parallel_norm * x + math.sqrt(1.0 - parallel_norm**2) * y),
                    modality="image",
                )
                res = debias(fair, sub)
                assert res.degenerate == "fair_already"
                assert res.u_star.tobytes() == fair.vector.tobytes()

                pure = Embedding(
                    id="p",
                    vector=normalize(math.sqrt(1.0 - parallel_norm**2) * x + parallel_norm * y),
                    modality="image",
                )
                res = debias(pure, sub)
                assert res.degenerate == "pure_attribute"
                assert res.u_star.tobytes() == pure.vector.tobytes()


class TestProjectors:
    def test_identities_and_invariances(self):
        with verdict("projector identities and invariances, 1000 instances at 1e-8"):
            rng = np.random.default_rng(99)
            for _ in range(1_000):
                d = int(rng.integers(4, 24))
                protos = [
                    GroupPrototype(group=f"g{i}", vector=rand_unit(rng, d))
                    for i in range(int(rng.integers(2, 5)))
                ]
                sub = build_subspace(protos, reference="g0")
                v = rng.standard_normal(d)
                par = project_parallel(v, sub)
                ort = project_orthogonal(v, sub)
                assert np.linalg.norm(project_parallel(par, sub) - par) <= 1e-8
                assert np.linalg.norm(project_orthogonal(ort, sub) - ort) <= 1e-8
                assert np.linalg.norm(project_parallel(ort, sub)) <= 1e-8
                assert np.linalg.norm(par + ort - v) <= 1e-8
                pythag = np.linalg.norm(par) ** 2 + np.linalg.norm(ort) ** 2
                assert pythag == pytest.approx(np.linalg.norm(v) ** 2, abs=1e-8)

                permuted = build_subspace(list(reversed(protos)), reference="g0")
                assert np.linalg.norm(project_parallel(v, permuted) - par) <= 1e-8
                rebased = build_subspace(protos, reference=protos[-1].group)
                assert np.linalg.norm(project_parallel(v, rebased) - par) <= 1e-8


def samples_from_rates(rates: dict[str, dict[str, float]], n: int = 20):
    out = []
    for cls, per_group in rates.items():
        for group, tpr in per_group.items():
            hits = round(tpr * n)
            for i in range(n):
                predicted = cls if i < hits else f"not-{cls}"
                out.append(
                    ClassifiedSample(true_class=cls, predicted_class=predicted, group=group)
                )
    return out


class TestMetricGoldens:
    def test_eo_two_class_two_group(self):
        with verdict("EO golden pair (0.25, 0.5)"):
            samples = samples_from_rates(
                {"A": {"g0": 1.0, "g1": 0.5}, "B": {"g0": 0.8, "g1": 0.8}}
            )
            avg, worst = eo_violations(samples, classes=["A", "B"], groups=["g0", "g1"])
            assert avg == pytest.approx(0.25, abs=1e-12)
            assert worst == pytest.approx(0.5, abs=1e-12)

    def test_eo_three_group_avg(self):
        with verdict("EO three-group delta_avg 0.5"):
            samples = samples_from_rates({"A": {"g0": 1.0, "g1": 0.5, "g2": 0.5}})
            avg, _ = eo_violations(samples, classes=["A"], groups=["g0", "g1", "g2"])
            assert avg == pytest.approx(0.5, abs=1e-12)

    def test_eo_three_group_max(self):
        # the 0.1667 target equals the gap sum divided by the ordered-pair
        # count (6) while the pairs are enumerated unordered; the implemented
        # delta_max averages the three unordered pairs, (0.5 + 0.5 + 0) / 3,
        # and the two-group golden of 0.5 rules out the ordered-pair variant
        # (it would halve that golden to 0.25)
        with verdict("EO three-group delta_max 0.1667"):
            samples = samples_from_rates({"A": {"g0": 1.0, "g1": 0.5, "g2": 0.5}})
            _, worst = eo_violations(samples, classes=["A"], groups=["g0", "g1", "g2"])
            assert worst == pytest.approx(0.1667, abs=1e-4)

    def test_max_skew_golden(self):
        with verdict("MaxSkew golden ln 2"):
            cands = {"m0": "male", "m1": "male", "f0": "female", "f1": "female"}
            out = RetrievalOutcome(
                query_id="q",
                ranked_ids=("m0", "m1"),
                relevant_id="m0",
                candidate_groups=cands,
            )
            skew = max_skew([out], m=2, groups=["male", "female"])
            assert skew == pytest.approx(math.log(2.0), abs=1e-6)
            assert f"{skew:.4f}" == "0.6931"

    def test_statistical_parity_golden(self):
        with verdict("SP golden sqrt(1/2)"):
            counts = GroupCounts(prompt_id="p", counts={"a": 100, "b": 0}, total=100)
            sp = statistical_parity(counts, ["a", "b"])
            assert sp == pytest.approx(math.sqrt(0.5), abs=1e-6)
            assert f"{sp:.5f}" == "0.70711"

    def test_recall_golden(self):
        with verdict("Recall@10 golden 2/3"):
            cands = {f"x{i}": "g" for i in range(12)}
            ranked = tuple(f"x{i}" for i in range(12))
            outs = [
                RetrievalOutcome("q1", ranked, "x0", cands),
                RetrievalOutcome("q2", ranked, "x5", cands),
                RetrievalOutcome("q3", ranked, "x10", cands),
            ]
            assert recall_at_k(outs, k=10) == 2.0 / 3.0


class TestSyntheticBenchmark:
    def test_fairness_utility_tradeoff(self):
        with verdict("synthetic benchmark: both mode beats none, stays near full projection"):
            start = time.perf_counter()
            spec = SynthSpec(
                d=64,
                n_groups=2,
                n_classes=2,
                samples_per_cell=500,
                leakage_strength=0.8,
                noise_sigma=0.05,
                seed=20250814,
            )
            data = generate_synthetic(spec)
            sub = build_subspace(data.prototypes, reference=data.prototypes[0].group)
            queries = [
                t for t in data.text_embeddings if t.labels and PAIR_ID_LABEL in t.labels
            ]
            cfg = MetricConfig(tasks=("classify", "retrieve"), skew_top_m=200, recall_ks=(10,))
            scores = {}
            for mode in ("none", "both", "full_projection_both"):
                ws = Workspace(
                    data.image_embeddings, data.text_embeddings, data.class_prompts, sub, mode
                )
                d = run_report(ws, queries, cfg).to_dict()
                assert d["cross_utility_check"]["passed"] is True
                scores[mode] = (
                    d["classification"]["delta_eo_avg"],
                    d["retrieval"]["max_skew"],
                    d["retrieval"]["recall_at_k"]["10"],
                )
            elapsed = time.perf_counter() - start
            eo_none, skew_none, _ = scores["none"]
            eo_both, skew_both, recall_both = scores["both"]
            _, skew_fp, recall_fp = scores["full_projection_both"]
            # frozen regression margins for seed 20250814 (observed: eo drop
            # 0.948, skew drop 0.327, recall edge +0.069, skew gap 0.294)
            assert eo_none > 0.1
            assert eo_none - eo_both >= 0.45
            assert skew_none - skew_both >= 0.15
            assert recall_both >= recall_fp - 1e-12
            assert skew_both <= skew_fp + 0.45
            assert elapsed < 60.0


class TestCliDeterminism:
    def payload_bytes(self, root):
        return {
            p.relative_to(root): p.read_bytes()
            for p in sorted(root.rglob("*"))
            if p.is_file() and not p.name.endswith(".meta.json")
        }

    def test_reruns_are_byte_identical(self, tmp_path, capsys, rng):
        with verdict("every payload-writing command reruns byte-identical"):
            texts = {
                "anchor a": rand_unit(rng, 16),
                "a variant": rand_unit(rng, 16),
                "anchor b": rand_unit(rng, 16),
            }
            emb_path = tmp_path / "variant_texts.jsonl"
            save_embeddings(
                emb_path,
                [Embedding(id=text_id(t), vector=v, modality="text") for t, v in texts.items()],
            )
            cfg_path = tmp_path / "variants.json"
            cfg_path.write_text(json.dumps({
                "attribute": "demo",
                "groups": [
                    {"name": "a", "anchor": "anchor a", "variants": ["a variant"]},
                    {"name": "b", "anchor": "anchor b", "variants": []},
                ],
            }))
            counts_path = tmp_path / "counts.csv"
            counts_path.write_text("prompt_id,group,count\np1,a,100\np1,b,0\n")

            for root in (tmp_path / "one", tmp_path / "two"):
                root.mkdir()
                data = root / "data"
                assert run([
                    "synth", "generate", "--dim", "16", "--groups", "2", "--classes", "2",
                    "--per-cell", "20", "--seed", "11", "--out-dir", str(data),
                ]) == 0
                assert run([
                    "subspace", "build", "--prototypes", str(data / "prototypes.jsonl"),
                    "--out", str(root / "subspace.json"),
                ]) == 0
                assert run([
                    "prototypes", "build", "--variants", str(cfg_path),
                    "--embeddings", str(emb_path), "--out", str(root / "prototypes.jsonl"),
                ]) == 0
                assert run([
                    "debias", "run", "--embeddings", str(data / "images.jsonl"),
                    "--subspace", str(root / "subspace.json"), "--mode", "both",
                    "--threads", "4",
                    "--out", str(root / "debiased.jsonl"),
                    "--results", str(root / "results.jsonl"),
                ]) == 0
                assert run([
                    "eval", "classify", "--images", str(data / "images.jsonl"),
                    "--texts", str(data / "texts.jsonl"),
                    "--class-prompts", str(data / "class_prompts.json"),
                    "--subspace", str(root / "subspace.json"), "--mode", "both",
                    "--out", str(root / "classify.json"),
                ]) == 0
                assert run([
                    "eval", "retrieve", "--images", str(data / "images.jsonl"),
                    "--queries", str(data / "texts.jsonl"),
                    "--subspace", str(root / "subspace.json"), "--mode", "both",
                    "--top-m", "10", "--recall-k", "5",
                    "--out", str(root / "retrieve.json"),
                ]) == 0
                assert run([
                    "report", "--images", str(data / "images.jsonl"),
                    "--texts", str(data / "texts.jsonl"),
                    "--class-prompts", str(data / "class_prompts.json"),
                    "--queries", str(data / "texts.jsonl"),
                    "--subspace", str(root / "subspace.json"), "--mode", "both",
                    "--top-m", "10", "--recall-k", "5",
                    "--out", str(root / "report.json"),
                ]) == 0
                assert run([
                    "metric", "sp", "--counts", str(counts_path), "--groups", "a,b",
                    "--out", str(root / "sp.json"),
                ]) == 0

            first = self.payload_bytes(tmp_path / "one")
            second = self.payload_bytes(tmp_path / "two")
            assert first.keys() == second.keys()
            for key in first:
                assert first[key] == second[key], f"payload {key} differs between reruns"


class TestExtractorRoundTrip:
    def test_hash_backend_round_trip(self, tmp_path):
        # the submodule probe skips cleanly when only the bare repo
        # directory (an empty namespace package) is on the path
        pytest.importorskip("embextract.extract")
        import embextract
        with verdict("extractor output round-trips through the primary loader"):
            outputs = {}
            for tag in ("one", "two"):
                out_path = tmp_path / f"{tag}.jsonl"
                job_path = tmp_path / f"{tag}.job.json"
                job_path.write_text(json.dumps({
                    "model_name": "hash-test",
                    "inputs": [
                        [f"{tag}-doctor", "a photo of a doctor", "text"],
                        [f"{tag}-nurse", "a photo of a nurse", "text"],
                    ],
                    "output_path": str(out_path),
                    "dtype": "f32",
                }))
                summary = embextract.extract(embextract.load_job(job_path))
                assert summary.failed == 0
                records = load_embeddings(out_path)
                assert {r.id for r in records} == {
                    text_id("a photo of a doctor"),
                    text_id("a photo of a nurse"),
                }
                for r in records:
                    assert abs(np.linalg.norm(r.vector) - 1.0) <= 1e-6
                outputs[tag] = {r.id: r.vector.tobytes() for r in records}
            # the same text encodes to the same record no matter which job
            # produced it
            assert outputs["one"] == outputs["two"]
