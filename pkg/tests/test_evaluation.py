"""Metrics, facet breakdowns, length statistics, and report rendering."""
from __future__ import annotations

import json
import random

import pytest

from mockscripts import make_solvable_problem
from relimath.errors import MetricsError
from relimath.evaluation import (
    compute_metrics,
    facet_breakdown,
    length_stats,
    metrics_from_counts,
    render_report,
    report_from_dict,
    round3,
    run_eval,
)
from relimath.gateway import Client, EndpointRole, MockBackend, MockRule, ModelEndpoint
from relimath.records import (
    EvalRecord,
    Problem,
    PromptKind,
    RewriteType,
    Solvability,
    Verdict,
    approx_token_length,
)


def eval_record(problem_id: str, solvability: Solvability, verdict: Verdict,
                prompt_kind: PromptKind = PromptKind.STANDARD,
                chars: int = 100, error: str | None = None) -> EvalRecord:
    return EvalRecord(
        problem_id=problem_id,
        solvability=solvability,
        prompt_kind=prompt_kind,
        model_name="m",
        raw_output="x" * chars,
        extracted_answer=None,
        verdict=verdict,
        output_length_chars=chars,
        output_length_tokens_approx=approx_token_length(chars),
        error=error,
    )


def records_from_counts(counts: dict[str, int]) -> list[EvalRecord]:
    records = []
    for key, n in counts.items():
        solvability = Solvability.SOLVABLE if key[0] == "A" else Solvability.UNSOLVABLE
        verdict = {"S": Verdict.SUCCESSFUL, "R": Verdict.REFUSED, "F": Verdict.FAILED}[key[1]]
        for i in range(n):
            records.append(eval_record(f"{key}-{i}", solvability, verdict))
    return records


def test_published_count_row_reproduces_printed_metrics():
    # 25/0/5 solvable and 0/0/132 unsolvable
    report = metrics_from_counts({"AS": 25, "AR": 0, "AF": 5, "US": 0, "UR": 0, "UF": 132})
    assert round3(report.prec_a) == "0.833"
    assert round3(report.prec_u) == "0.000"
    assert round3(report.prec) == "0.417"
    assert round3(report.prud) == "0.000"


def test_composite_is_unweighted_mean():
    report = metrics_from_counts(
        {"AS": 735, "AR": 0, "AF": 265, "US": 549, "UR": 0, "UF": 451}
    )
    assert report.prec_a == 0.735 and report.prec_u == 0.549
    assert round3(report.prec) == "0.642"


def test_all_refused_gives_prudence_one():
    records = records_from_counts({"AR": 4, "UR": 6})
    report = compute_metrics(records)
    assert report.prec == 0.0
    assert report.prud == 1.0


def test_empty_subset_withholds_composite():
    report = metrics_from_counts({"AS": 3, "AF": 1})
    assert report.prec_a == 0.75
    assert report.prec_u is None and report.prec is None and report.prud is None


def test_no_records_errors():
    with pytest.raises(MetricsError):
        metrics_from_counts({})


def brute_force_metrics(records: list[EvalRecord]):
    """Counting oracle: literal proportions over verdict lists."""
    solvable = [r.verdict for r in records if r.solvability is Solvability.SOLVABLE and not r.errored]
    unsolvable = [r.verdict for r in records if r.solvability is Solvability.UNSOLVABLE and not r.errored]

    def frac(items, verdict):
        return items.count(verdict) / len(items) if items else None

    return {
        "prec_a": frac(solvable, Verdict.SUCCESSFUL),
        "prud_a": frac(solvable, Verdict.REFUSED),
        "prec_u": frac(unsolvable, Verdict.SUCCESSFUL),
        "prud_u": frac(unsolvable, Verdict.REFUSED),
    }


def test_randomized_counts_match_brute_force_oracle():
    rng = random.Random(11)
    for _ in range(300):
        counts = {key: rng.randint(0, 20) for key in ("AS", "AR", "AF", "US", "UR", "UF")}
        if sum(counts.values()) == 0:
            continue
        records = records_from_counts(counts)
        try:
            report = compute_metrics(records)
        except MetricsError:
            assert all(v == 0 for v in counts.values())
            continue
        oracle = brute_force_metrics(records)
        for key, expected in oracle.items():
            assert getattr(report, key) == expected
        for prefix, n in (("A", report.total_solvable), ("U", report.total_unsolvable)):
            if n:
                prec = getattr(report, f"prec_{prefix.lower()}")
                prud = getattr(report, f"prud_{prefix.lower()}")
                failed = counts[prefix + "F"] / n
                assert abs(prec + prud + failed - 1.0) <= 1e-12


def test_composite_independent_of_subset_size():
    base = {"AS": 3, "AR": 1, "AF": 4, "US": 5, "UR": 0, "UF": 5}
    scaled = {k: v * (7 if k.startswith("U") else 1) for k, v in base.items()}
    a = metrics_from_counts(base)
    b = metrics_from_counts(scaled)
    assert a.prec == b.prec and a.prud == b.prud


def test_errored_records_excluded_from_metrics():
    records = records_from_counts({"AS": 2, "UF": 2})
    records.append(eval_record("boom", Solvability.SOLVABLE, Verdict.FAILED, error="transport"))
    report = compute_metrics(records)
    assert report.total_solvable == 2


def unsolvable_problem(i: int, rewrite_type: RewriteType, difficulty: int,
                       data_source: str = "AIME") -> Problem:
    return Problem(
        id=f"u{i:03d}",
        data_source=data_source,
        question=f"Unsolvable question {i} with enough length.",
        solvability=Solvability.UNSOLVABLE,
        rewrite_type=rewrite_type,
        difficulty=difficulty,
    )


def test_facet_breakdown_partitions_counts():
    problems = []
    records = []
    for i in range(67):
        problems.append(unsolvable_problem(i, RewriteType.REMOVAL, i % 2))
        records.append(eval_record(problems[-1].id, Solvability.UNSOLVABLE,
                                   Verdict.SUCCESSFUL if i % 3 == 0 else Verdict.FAILED))
    for i in range(67, 132):
        problems.append(unsolvable_problem(i, RewriteType.CONTRADICTION, i % 2))
        records.append(eval_record(problems[-1].id, Solvability.UNSOLVABLE, Verdict.FAILED))
    breakdown = facet_breakdown(records, problems, ["rewrite_type", "difficulty"])
    by_type = breakdown["rewrite_type"]
    assert by_type["removal"].total_unsolvable == 67
    assert by_type["contradiction"].total_unsolvable == 65
    total = compute_metrics(records)
    for facet in ("rewrite_type", "difficulty"):
        assert sum(r.total_unsolvable for r in breakdown[facet].values()) == total.total_unsolvable
        summed = {key: 0 for key in total.counts}
        for sub in breakdown[facet].values():
            for key, value in sub.counts.items():
                summed[key] += value
        assert summed == total.counts


def test_facet_on_solvable_only_records_is_empty():
    problems = [make_solvable_problem(i) for i in range(1, 4)]
    records = [eval_record(p.id, Solvability.SOLVABLE, Verdict.SUCCESSFUL) for p in problems]
    breakdown = facet_breakdown(records, problems, ["rewrite_type"])
    assert breakdown["rewrite_type"] == {}


def test_unknown_facet_rejected():
    with pytest.raises(MetricsError):
        facet_breakdown([], [], ["model_size"])


def test_run_eval_produces_one_record_per_problem():
    from relimath.matching import classify

    problems = [make_solvable_problem(i) for i in range(1, 6)]
    rules = [
        MockRule(contains=p.question, output=f"answer \\boxed{{{p.ground_truth}}}")
        for p in problems[:4]
    ]
    rules.append(MockRule(contains=problems[4].question, output="no box here"))
    client = Client(ModelEndpoint(role=EndpointRole.STUDENT, model_name="m"), MockBackend(rules))
    records = run_eval(problems, client, PromptKind.STANDARD)
    assert [r.verdict for r in records] == [Verdict.SUCCESSFUL] * 4 + [Verdict.FAILED]
    assert all(r.output_length_tokens_approx == approx_token_length(r.output_length_chars)
               for r in records)
    # stored verdict stays consistent with re-running classification
    by_id = {p.id: p for p in problems}
    for record in records:
        problem = by_id[record.problem_id]
        assert classify(record.raw_output, problem.solvability,
                        problem.ground_truth) is record.verdict


def test_run_eval_isolates_errors():
    problems = [make_solvable_problem(i) for i in range(1, 6)]
    rules = [MockRule(contains=problems[1].question, error="scripted")]
    rules.extend(
        MockRule(contains=p.question, output="\\boxed{1}") for p in problems
    )
    client = Client(ModelEndpoint(role=EndpointRole.STUDENT, model_name="m"), MockBackend(rules))
    records = run_eval(problems, client, PromptKind.STANDARD)
    assert [r.errored for r in records] == [False, True, False, False, False]
    report = compute_metrics(records)
    assert report.total_solvable == 4


def test_run_eval_rejects_refusal_prompt_kind():
    client = Client(ModelEndpoint(role=EndpointRole.STUDENT, model_name="m"), MockBackend([]))
    with pytest.raises(ValueError):
        run_eval([], client, PromptKind.REFUSAL)


def test_length_stats_mean_of_two():
    records = [
        eval_record("a", Solvability.SOLVABLE, Verdict.SUCCESSFUL, chars=100),
        eval_record("b", Solvability.SOLVABLE, Verdict.SUCCESSFUL, chars=300),
    ]
    stats = length_stats(records)
    cell = stats["solvable_standard"]
    assert cell["chars"]["mean"] == 200
    assert cell["chars"]["median"] == 200
    assert cell["n"] == 2


def test_length_stats_single_record():
    records = [eval_record("a", Solvability.UNSOLVABLE, Verdict.FAILED, chars=57,
                           prompt_kind=PromptKind.RELIABLE)]
    cell = length_stats(records)["unsolvable_reliable"]
    assert cell["chars"]["mean"] == cell["chars"]["median"] == cell["chars"]["p90"] == 57


def test_length_stats_four_cells_match_brute_force():
    rng = random.Random(5)
    records = []
    for solvability in (Solvability.SOLVABLE, Solvability.UNSOLVABLE):
        for kind in (PromptKind.STANDARD, PromptKind.RELIABLE):
            for i in range(rng.randint(3, 9)):
                records.append(
                    eval_record(f"{solvability.value}-{kind.value}-{i}", solvability,
                                Verdict.FAILED, prompt_kind=kind, chars=rng.randint(10, 4000))
                )
    stats = length_stats(records)
    assert len(stats) == 4
    for key, cell in stats.items():
        solvability, kind = key.split("_")
        subset = [r.output_length_chars for r in records
                  if r.solvability.value == solvability and r.prompt_kind.value == kind]
        assert cell["chars"]["mean"] == pytest.approx(sum(subset) / len(subset))
        assert cell["chars"]["p90"] == sorted(subset)[max(1, -(-len(subset) * 9 // 10)) - 1]


def test_round3_half_up():
    assert round3(0.6415) == "0.642"
    assert round3(0.0005) == "0.001"
    assert round3(0.41666666) == "0.417"
    assert round3(0.0) == "0.000"


def test_render_report_table_three_decimals():
    report = metrics_from_counts({"AS": 735, "AF": 265, "US": 549, "UF": 451})
    table = render_report(report, "table")
    assert "0.642" in table
    assert "0.735" in table


def test_machine_report_round_trips():
    records = records_from_counts({"AS": 2, "AR": 1, "UF": 3, "US": 1})
    report = compute_metrics(records)
    report.facets = facet_breakdown(records, [], ["data_source"])
    machine = render_report(report, "machine")
    assert report_from_dict(json.loads(machine)) == report


def test_render_report_without_facets_has_no_facet_section():
    report = metrics_from_counts({"AS": 1, "UF": 1})
    assert "facet:" not in render_report(report, "table")


def test_reports_deterministic():
    records = records_from_counts({"AS": 5, "AR": 2, "AF": 3, "US": 4, "UR": 1, "UF": 5})
    a = render_report(compute_metrics(records), "machine")
    b = render_report(compute_metrics(records), "machine")
    assert a == b
