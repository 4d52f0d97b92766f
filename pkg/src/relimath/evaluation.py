"""Reliability evaluation: greedy runs, precision/prudence metrics, facet reports.

Precision is the successful fraction computed on the solvable and unsolvable
subsets separately and then averaged without weighting; prudence is the same
construction over refused responses. When one subset is absent its metric is
undefined and the composite is withheld rather than imputed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from . import prompts
from .errors import MetricsError
from .gateway import Client, CompletionRequest
from .matching import classify, extract_final_answer
from .prompts import TemplateId
from .records import (
    EvalRecord,
    Problem,
    PromptKind,
    Solvability,
    Verdict,
    approx_token_length,
)

FACET_KEYS = ("data_source", "rewrite_type", "difficulty")

COUNT_KEYS = ("AS", "AR", "AF", "US", "UR", "UF")


@dataclass
class ReliabilityReport:
    counts: dict[str, int]
    prec_a: float | None
    prud_a: float | None
    prec_u: float | None
    prud_u: float | None
    prec: float | None
    prud: float | None
    facets: dict[str, dict[str, "ReliabilityReport"]] = field(default_factory=dict)

    @property
    def total_solvable(self) -> int:
        return self.counts["AS"] + self.counts["AR"] + self.counts["AF"]

    @property
    def total_unsolvable(self) -> int:
        return self.counts["US"] + self.counts["UR"] + self.counts["UF"]


def metrics_from_counts(counts: dict[str, int]) -> ReliabilityReport:
    """Compute the report directly from the six verdict-cell counts."""
    for key in COUNT_KEYS:
        if counts.get(key, 0) < 0:
            raise MetricsError(f"negative count for {key}")
    counts = {key: int(counts.get(key, 0)) for key in COUNT_KEYS}
    n_a = counts["AS"] + counts["AR"] + counts["AF"]
    n_u = counts["US"] + counts["UR"] + counts["UF"]
    if n_a == 0 and n_u == 0:
        raise MetricsError("no records in either subset")
    prec_a = counts["AS"] / n_a if n_a else None
    prud_a = counts["AR"] / n_a if n_a else None
    prec_u = counts["US"] / n_u if n_u else None
    prud_u = counts["UR"] / n_u if n_u else None
    prec = (prec_a + prec_u) / 2 if n_a and n_u else None
    prud = (prud_a + prud_u) / 2 if n_a and n_u else None
    return ReliabilityReport(
        counts=counts, prec_a=prec_a, prud_a=prud_a,
        prec_u=prec_u, prud_u=prud_u, prec=prec, prud=prud,
    )


def count_records(records: list[EvalRecord]) -> dict[str, int]:
    counts = {key: 0 for key in COUNT_KEYS}
    for record in records:
        if record.errored:
            continue
        subset = "A" if record.solvability is Solvability.SOLVABLE else "U"
        cell = {"successful": "S", "refused": "R", "failed": "F"}[record.verdict.value]
        counts[subset + cell] += 1
    return counts


def compute_metrics(records: list[EvalRecord]) -> ReliabilityReport:
    """Metrics over classified records; errored records are excluded."""
    return metrics_from_counts(count_records(records))


def facet_breakdown(records: list[EvalRecord], problems: list[Problem],
                    facets: list[str]) -> dict[str, dict[str, ReliabilityReport]]:
    """Per-facet-value reports; records lacking a facet value are skipped for that facet."""
    for facet in facets:
        if facet not in FACET_KEYS:
            raise MetricsError(f"unknown facet key: {facet!r}")
    by_id = {problem.id: problem for problem in problems}
    breakdown: dict[str, dict[str, ReliabilityReport]] = {}
    for facet in facets:
        grouped: dict[str, list[EvalRecord]] = {}
        for record in records:
            if record.errored:
                continue
            problem = by_id.get(record.problem_id)
            if problem is None:
                continue
            value = getattr(problem, facet)
            if value is None:
                continue
            key = value.value if hasattr(value, "value") else str(value)
            grouped.setdefault(key, []).append(record)
        breakdown[facet] = {
            key: compute_metrics(subset) for key, subset in sorted(grouped.items())
        }
    return breakdown


def run_eval(problems: list[Problem], client: Client, prompt_kind: PromptKind,
             max_in_flight: int = 4, template_dir: str | None = None) -> list[EvalRecord]:
    """One greedy-decoded record per problem; gateway failures flag the record."""
    if prompt_kind not in (PromptKind.STANDARD, PromptKind.RELIABLE):
        raise ValueError("evaluation uses the standard or reliable prompt")
    template = TemplateId.STANDARD if prompt_kind is PromptKind.STANDARD else TemplateId.RELIABLE
    requests_list = [
        CompletionRequest(
            prompt=prompts.render(
                template, {"math_question": problem.question}, template_dir=template_dir
            ),
            temperature=0.0,
        )
        for problem in problems
    ]
    results = client.complete_many(requests_list, max_in_flight=max_in_flight)
    records = []
    for problem, item in zip(problems, results):
        if not item.ok:
            records.append(
                EvalRecord(
                    problem_id=problem.id,
                    solvability=problem.solvability,
                    prompt_kind=prompt_kind,
                    model_name=client.endpoint.model_name,
                    raw_output="",
                    extracted_answer=None,
                    verdict=Verdict.FAILED,
                    output_length_chars=0,
                    output_length_tokens_approx=0,
                    error=item.error,
                )
            )
            continue
        raw = item.completion.text
        answer = extract_final_answer(raw)
        boxed_text = raw[answer.span[0]:answer.span[1]].strip() if answer.span else None
        records.append(
            EvalRecord(
                problem_id=problem.id,
                solvability=problem.solvability,
                prompt_kind=prompt_kind,
                model_name=client.endpoint.model_name,
                raw_output=raw,
                extracted_answer=boxed_text,
                verdict=classify(raw, problem.solvability, problem.ground_truth),
                output_length_chars=len(raw),
                output_length_tokens_approx=approx_token_length(len(raw)),
            )
        )
    return records


def _percentile_90(sorted_values: list[int]) -> float:
    """Nearest-rank 90th percentile."""
    rank = max(1, -(-len(sorted_values) * 9 // 10))  # ceil(0.9 n)
    return float(sorted_values[rank - 1])


def _stats(values: list[int]) -> dict[str, float]:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    median = float(ordered[mid]) if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    return {
        "mean": sum(ordered) / n,
        "median": median,
        "p90": _percentile_90(ordered),
    }


def length_stats(records: list[EvalRecord]) -> dict[str, dict]:
    """Generation-length statistics per solvability x prompt-kind cell."""
    cells: dict[str, list[EvalRecord]] = {}
    for record in records:
        if record.errored:
            continue
        key = f"{record.solvability.value}_{record.prompt_kind.value}"
        cells.setdefault(key, []).append(record)
    out: dict[str, dict] = {}
    for key in sorted(cells):
        subset = cells[key]
        out[key] = {
            "n": len(subset),
            "chars": _stats([r.output_length_chars for r in subset]),
            "tokens_approx": _stats([r.output_length_tokens_approx for r in subset]),
        }
    return out


def round3(value: float) -> str:
    """Three decimals, round-half-up, as printed in result tables."""
    return str(Decimal(repr(value)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def _cell(value: float | None) -> str:
    return round3(value) if value is not None else "-"


def report_to_dict(report: ReliabilityReport) -> dict:
    return {
        "counts": dict(report.counts),
        "prec_a": report.prec_a,
        "prud_a": report.prud_a,
        "prec_u": report.prec_u,
        "prud_u": report.prud_u,
        "prec": report.prec,
        "prud": report.prud,
        "facets": {
            facet: {key: report_to_dict(sub) for key, sub in values.items()}
            for facet, values in report.facets.items()
        },
    }


def report_from_dict(obj: dict) -> ReliabilityReport:
    return ReliabilityReport(
        counts={key: int(obj["counts"].get(key, 0)) for key in COUNT_KEYS},
        prec_a=obj.get("prec_a"),
        prud_a=obj.get("prud_a"),
        prec_u=obj.get("prec_u"),
        prud_u=obj.get("prud_u"),
        prec=obj.get("prec"),
        prud=obj.get("prud"),
        facets={
            facet: {key: report_from_dict(sub) for key, sub in values.items()}
            for facet, values in obj.get("facets", {}).items()
        },
    )


_TABLE_COLUMNS = ("Prec.(A)", "Prud.(A)", "Prec.(U)", "Prud.(U)", "Prec.", "Prud.")


def _table_row(label: str, report: ReliabilityReport) -> str:
    values = (report.prec_a, report.prud_a, report.prec_u, report.prud_u, report.prec, report.prud)
    cells = [f"{_cell(v):>9}" for v in values]
    counts = "/".join(str(report.counts[k]) for k in COUNT_KEYS)
    return f"{label:<24}" + "".join(cells) + f"  [{counts}]"


def render_report(report: ReliabilityReport, fmt: str = "table") -> str:
    """Text table with three-decimal cells, or machine-readable JSON."""
    if fmt == "machine":
        return json.dumps(report_to_dict(report), ensure_ascii=False, indent=2)
    if fmt != "table":
        raise ValueError(f"unknown report format: {fmt!r}")
    header = f"{'subset':<24}" + "".join(f"{c:>9}" for c in _TABLE_COLUMNS) + "  [AS/AR/AF/US/UR/UF]"
    lines = [header, "-" * len(header), _table_row("overall", report)]
    for facet, values in report.facets.items():
        if not values:
            continue
        lines.append("")
        lines.append(f"facet: {facet}")
        for key, sub in values.items():
            lines.append(_table_row(f"  {key}", sub))
    return "\n".join(lines) + "\n"
