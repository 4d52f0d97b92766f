"""Alignment training-data generation: distillation, unknown-set mining, refusal sampling.

Successful responses are distilled from a stronger teacher (standard prompt
for solvable problems, reliable prompt for unsolvable ones, K samples each,
rejection-filtered to the successful verdict). Refusals are sampled from the
student itself with a few-shot refusal prompt and kept only for unsolvable
problems and for solvable problems the student demonstrably fails.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from . import prompts
from .gateway import Client, CompletionRequest, EndpointRole
from .matching import THINK_CLOSE, THINK_OPEN, classify, post_reasoning_text
from .prompts import TemplateId
from .records import Problem, PromptKind, Solvability, TrainingExample, Verdict

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_COUNT = 4
DEFAULT_REFUSAL_SAMPLE_COUNT = 1

# Few-shot refusal exemplars: questions whose answers are out of reach, each
# answered with the sanctioned refusal escape.
DEFAULT_REFUSAL_EXAMPLES = (
    (
        "What is the exact value of the $10^{100}$-th decimal digit of $\\pi$?",
        "There is no way for me to derive this digit directly. \\boxed{sorry, I don't know}",
    ),
    (
        "Let $f(n)$ denote the maximum number of steps a halting $n$-state Turing machine "
        "can take. What is $f(20)$?",
        "Computing this value is beyond any feasible analysis I can perform. "
        "\\boxed{sorry, I don't know}",
    ),
)


class TrainingStyle(str, Enum):
    WITH_REASONING = "with_reasoning"
    ANSWER_ONLY = "answer_only"


@dataclass(frozen=True)
class SampledResponse:
    """One model sample for one problem, already classified."""

    problem_id: str
    prompt_kind: PromptKind
    sample_index: int
    text: str
    verdict: Verdict


def _success_prompt_kind(problem: Problem) -> PromptKind:
    return (
        PromptKind.STANDARD
        if problem.solvability is Solvability.SOLVABLE
        else PromptKind.RELIABLE
    )


def _render_for(problem: Problem, prompt_kind: PromptKind,
                refusal_examples=DEFAULT_REFUSAL_EXAMPLES,
                template_dir: str | None = None) -> str:
    if prompt_kind is PromptKind.STANDARD:
        return prompts.render(
            TemplateId.STANDARD, {"math_question": problem.question}, template_dir=template_dir
        )
    if prompt_kind is PromptKind.RELIABLE:
        return prompts.render(
            TemplateId.RELIABLE, {"math_question": problem.question}, template_dir=template_dir
        )
    (q1, r1), (q2, r2) = refusal_examples
    return prompts.render(
        TemplateId.REFUSAL_2SHOT,
        {
            "example_1_question": q1,
            "example_1_response": r1,
            "example_2_question": q2,
            "example_2_response": r2,
            "math_question": problem.question,
        },
        template_dir=template_dir,
    )


@dataclass
class DistillationResult:
    successes: dict[str, list[SampledResponse]] = field(default_factory=dict)
    misses: list[str] = field(default_factory=list)
    errors: list[tuple[str, int, str]] = field(default_factory=list)


def sample_successes(problems: list[Problem], teacher: Client,
                     k: int = DEFAULT_SAMPLE_COUNT, max_in_flight: int = 4,
                     template_dir: str | None = None) -> DistillationResult:
    """Distill up to ``k`` successful responses per problem from the teacher."""
    if k < 1:
        raise ValueError("sample count k must be >= 1")
    if teacher.endpoint.role is not EndpointRole.TEACHER:
        raise ValueError("sample_successes requires a teacher-role endpoint")
    if teacher.endpoint.is_greedy:
        raise ValueError("distillation requires a nonzero sampling temperature")
    requests_list = []
    index = []
    for problem in problems:
        kind = _success_prompt_kind(problem)
        prompt = _render_for(problem, kind, template_dir=template_dir)
        for sample_index in range(k):
            requests_list.append(CompletionRequest(prompt=prompt, sample_index=sample_index))
            index.append((problem, kind, sample_index))
    results = teacher.complete_many(requests_list, max_in_flight=max_in_flight)
    out = DistillationResult()
    for (problem, kind, sample_index), item in zip(index, results):
        if not item.ok:
            out.errors.append((problem.id, sample_index, item.error or "unknown error"))
            continue
        text = item.completion.text
        verdict = classify(text, problem.solvability, problem.ground_truth)
        if verdict is Verdict.SUCCESSFUL:
            out.successes.setdefault(problem.id, []).append(
                SampledResponse(problem.id, kind, sample_index, text, verdict)
            )
    for problem in problems:
        if problem.id not in out.successes:
            out.misses.append(problem.id)
    return out


@dataclass
class UnknownMiningResult:
    unknown_ids: list[str] = field(default_factory=list)
    indeterminate: list[tuple[str, str]] = field(default_factory=list)


def find_unknown(problems: list[Problem], student: Client, max_in_flight: int = 4,
                 template_dir: str | None = None) -> UnknownMiningResult:
    """Solvable problems the student fails under greedy decoding.

    Failed responses qualify; refusals and successes do not. Gateway errors
    leave a problem indeterminate (logged, excluded).
    """
    if student.endpoint.role is not EndpointRole.STUDENT:
        raise ValueError("find_unknown requires a student-role endpoint")
    for problem in problems:
        if problem.solvability is not Solvability.SOLVABLE:
            raise ValueError(f"find_unknown expects solvable problems, got {problem.id}")
    requests_list = [
        CompletionRequest(
            prompt=_render_for(problem, PromptKind.STANDARD, template_dir=template_dir),
            temperature=0.0,
        )
        for problem in problems
    ]
    results = student.complete_many(requests_list, max_in_flight=max_in_flight)
    out = UnknownMiningResult()
    for problem, item in zip(problems, results):
        if not item.ok:
            logger.warning("unknown-set mining: %s indeterminate (%s)", problem.id, item.error)
            out.indeterminate.append((problem.id, item.error or "unknown error"))
            continue
        verdict = classify(item.completion.text, problem.solvability, problem.ground_truth)
        if verdict is Verdict.FAILED:
            out.unknown_ids.append(problem.id)
    return out


def sample_refusals(problems: list[Problem], student: Client,
                    k: int = DEFAULT_REFUSAL_SAMPLE_COUNT, retry_misses: int = 0,
                    refusal_examples=DEFAULT_REFUSAL_EXAMPLES, max_in_flight: int = 4,
                    template_dir: str | None = None) -> dict[str, list[SampledResponse]]:
    """Rejection-sample refusals: keep at most ``k`` refused responses per problem.

    Problems that never refuse are simply absent from the result; only a few
    refusals are needed. ``retry_misses`` adds extra attempts (fresh sample
    indices) for problems that missed on the first pass.
    """
    if k < 1:
        raise ValueError("sample count k must be >= 1")
    if student.endpoint.role is not EndpointRole.STUDENT:
        raise ValueError("sample_refusals requires a student-role endpoint")
    retained: dict[str, list[SampledResponse]] = {}

    def attempt(targets: list[Problem], base_index: int, count: int) -> None:
        requests_list = []
        index = []
        for problem in targets:
            prompt = _render_for(
                problem, PromptKind.REFUSAL, refusal_examples, template_dir=template_dir
            )
            for offset in range(count):
                sample_index = base_index + offset
                requests_list.append(
                    CompletionRequest(prompt=prompt, sample_index=sample_index)
                )
                index.append((problem, sample_index))
        results = student.complete_many(requests_list, max_in_flight=max_in_flight)
        for (problem, sample_index), item in zip(index, results):
            if not item.ok:
                logger.warning("refusal sampling error on %s: %s", problem.id, item.error)
                continue
            kept = retained.setdefault(problem.id, [])
            if len(kept) >= k:
                continue
            text = item.completion.text
            verdict = classify(text, problem.solvability, problem.ground_truth)
            if verdict is Verdict.REFUSED:
                kept.append(
                    SampledResponse(problem.id, PromptKind.REFUSAL, sample_index, text, verdict)
                )

    attempt(problems, 0, k)
    for round_index in range(retry_misses):
        missing = [p for p in problems if not retained.get(p.id)]
        if not missing:
            break
        attempt(missing, k + round_index, 1)
    return {pid: samples for pid, samples in retained.items() if samples}


@dataclass
class TrainingBuildResult:
    examples: list[TrainingExample] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)

    def cell_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for example in self.examples:
            solvability = example.extra.get("solvability", "?")
            key = f"{solvability}_{example.response_verdict.value}"
            counts[key] = counts.get(key, 0) + 1
        return counts


def _strip_reasoning(text: str) -> str | None:
    """Suffix after the reasoning span, or None when no delimiter is present."""
    if THINK_CLOSE not in text:
        return None
    return post_reasoning_text(text).strip()


def build_training_set(problems: list[Problem],
                       successes: dict[str, list[SampledResponse]],
                       refusals: dict[str, list[SampledResponse]],
                       unknown_ids: set[str] | None = None,
                       style: TrainingStyle = TrainingStyle.WITH_REASONING,
                       caps: dict[str, int] | None = None,
                       refusal_examples=DEFAULT_REFUSAL_EXAMPLES,
                       template_dir: str | None = None) -> TrainingBuildResult:
    """Assemble the training set deterministically, re-checking every response.

    Every emitted example re-classifies to its stored verdict; refusal rows
    exist only for unsolvable problems or mined-unknown solvable ones.
    ``caps`` bounds each (solvability x verdict) cell, keyed like
    ``"solvable_successful"``.
    """
    unknown_ids = unknown_ids or set()
    caps = caps or {}
    by_id = {problem.id: problem for problem in problems}
    result = TrainingBuildResult()
    cell_counts: dict[str, int] = {}

    def audit(problem_id: str, sample: SampledResponse, reason: str) -> None:
        result.audit.append(
            {
                "problem_id": problem_id,
                "prompt_kind": sample.prompt_kind.value,
                "sample_index": sample.sample_index,
                "reason": reason,
            }
        )

    def add(problem: Problem, sample: SampledResponse) -> None:
        cell = f"{problem.solvability.value}_{sample.verdict.value}"
        if sample.verdict is Verdict.REFUSED:
            if problem.solvability is Solvability.SOLVABLE and problem.id not in unknown_ids:
                audit(problem.id, sample, "refusal outside the mined unknown set")
                return
        text = sample.text
        includes_reasoning = THINK_OPEN in text or THINK_CLOSE in text
        if style is TrainingStyle.ANSWER_ONLY:
            stripped = _strip_reasoning(text)
            if stripped is None:
                audit(problem.id, sample, "no reasoning delimiter to strip")
                return
            if THINK_OPEN in stripped or THINK_CLOSE in stripped:
                audit(problem.id, sample, "reasoning delimiter remains after stripping")
                return
            text = stripped
            includes_reasoning = False
        reclassified = classify(text, problem.solvability, problem.ground_truth)
        if reclassified is not sample.verdict:
            audit(
                problem.id, sample,
                f"re-classified as {reclassified.value}, claimed {sample.verdict.value}",
            )
            return
        if cell in caps and cell_counts.get(cell, 0) >= caps[cell]:
            return
        cell_counts[cell] = cell_counts.get(cell, 0) + 1
        example = TrainingExample(
            problem_id=problem.id,
            prompt_kind=sample.prompt_kind,
            prompt_text=_render_for(
                problem, sample.prompt_kind, refusal_examples, template_dir=template_dir
            ),
            response_text=text,
            response_verdict=sample.verdict,
            includes_reasoning=includes_reasoning,
            extra={"solvability": problem.solvability.value},
        )
        example.validate()
        result.examples.append(example)

    for problem in problems:
        for sample in successes.get(problem.id, []):
            add(problem, sample)
    for problem in problems:
        for sample in refusals.get(problem.id, []):
            add(problem, sample)
    return result
