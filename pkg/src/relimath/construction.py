"""Unsolvable-question synthesis: condition extraction, rewriting, and model verification.

Stage one extracts necessary conditions from a solvable question and rewrites
it once per (condition, rewrite type). Stage two runs two gates: a cheap
condition-change check on the instruction endpoint, then an unsolvability
analysis on the reasoning endpoint. Candidates that error anywhere are
quarantined rather than silently dropped.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import prompts
from .errors import ConstructionError, GatewayError
from .gateway import Client, EndpointRole
from .prompts import TemplateId
from .records import Condition, Problem, RewriteCandidate, RewriteType, Solvability

logger = logging.getLogger(__name__)

MIN_QUESTION_CHARS = 20
MAX_CONDITIONS = 3


@dataclass(frozen=True)
class ConstructionConfig:
    max_conditions: int = 3
    rewrite_types: tuple[RewriteType, ...] = (RewriteType.REMOVAL, RewriteType.CONTRADICTION)
    min_question_chars: int = MIN_QUESTION_CHARS
    max_in_flight: int = 4
    template_dir: str | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.max_conditions <= MAX_CONDITIONS:
            raise ValueError("max_conditions must be between 1 and 3")
        if not self.rewrite_types:
            raise ValueError("at least one rewrite type must be enabled")

    def as_dict(self) -> dict:
        return {
            "max_conditions": self.max_conditions,
            "rewrite_types": [t.value for t in self.rewrite_types],
            "min_question_chars": self.min_question_chars,
            "max_in_flight": self.max_in_flight,
        }


def _require_role(client: Client, role: EndpointRole, task: str) -> None:
    if client.endpoint.role is not role:
        raise ConstructionError(
            task, f"requires a {role.value}-role endpoint, got {client.endpoint.role.value}"
        )


def _strip_marker_echo(text: str, marker: str) -> str:
    stripped = text.strip()
    bare = marker.rstrip(":")
    for candidate in (marker, bare):
        if candidate in stripped:
            stripped = stripped.rsplit(candidate, 1)[1].strip()
    return stripped


def parse_judgement(text: str) -> bool:
    """Parse a True/False judgement from the final line of a verifier output.

    Tolerates markup decoration but quarantines anything that is not an
    unambiguous true or false; a silent misparse would corrupt filtering.
    """
    cleaned = _strip_marker_echo(text, prompts.JUDGEMENT_MARKER)
    lines = [line.strip() for line in cleaned.splitlines() if line.strip()]
    if not lines:
        raise ConstructionError("judgement", "empty verifier output")
    final = lines[-1].casefold()
    tokens = {token for token in _alpha_tokens(final)}
    has_true = "true" in tokens
    has_false = "false" in tokens
    if has_true == has_false:
        raise ConstructionError("judgement", f"cannot parse judgement from: {lines[-1]!r}")
    return has_true


def _alpha_tokens(text: str):
    token = []
    for ch in text:
        if ch.isalpha():
            token.append(ch)
        elif token:
            yield "".join(token)
            token = []
    if token:
        yield "".join(token)


def extract_conditions(problem: Problem, instruction: Client,
                       max_conditions: int = 3, template_dir: str | None = None) -> list[Condition]:
    """Extract 1-3 necessary conditions by splitting the model output on blank lines."""
    _require_role(instruction, EndpointRole.INSTRUCTION, "extract_conditions")
    if problem.solvability is not Solvability.SOLVABLE:
        raise ConstructionError("extract_conditions", "only solvable problems have conditions")
    prompt = prompts.render(
        TemplateId.EXTRACT_CONDITIONS,
        {"original_math_question": problem.question},
        template_dir=template_dir,
    )
    completion = instruction.complete(prompt)
    raw = _strip_marker_echo(completion.answer_text, prompts.EXTRACTED_CONDITION_MARKER)
    parts = [part.strip() for part in raw.split("\n\n")]
    parts = [part for part in parts if part]
    if not parts:
        raise ConstructionError("extract_conditions", "model output contained no conditions")
    if len(parts) > max_conditions:
        logger.warning(
            "problem %s: %d conditions extracted, keeping first %d",
            problem.id, len(parts), max_conditions,
        )
        parts = parts[:max_conditions]
    return [
        Condition(parent_problem_id=problem.id, index=i, text=text)
        for i, text in enumerate(parts, 1)
    ]


def _candidate_id(problem: Problem, condition: Condition, rewrite_type: RewriteType) -> str:
    return f"{problem.id}-c{condition.index}-{rewrite_type.value}"


def rewrite(problem: Problem, condition: Condition, rewrite_type: RewriteType,
            reasoning: Client, template_dir: str | None = None) -> RewriteCandidate:
    """Produce one rewrite candidate via the two-stage analysis/question template."""
    _require_role(reasoning, EndpointRole.REASONING, "rewrite")
    if condition.parent_problem_id != problem.id:
        raise ConstructionError("rewrite", "condition does not belong to this problem")
    template = (
        TemplateId.REWRITE_REMOVAL
        if rewrite_type is RewriteType.REMOVAL
        else TemplateId.REWRITE_CONTRADICTION
    )
    base_bindings = {
        "original_math_question": problem.question,
        "original_answer": problem.ground_truth or "",
        "extracted_condition": condition.text,
    }
    analysis_prompt = prompts.render_prefix(
        template, base_bindings, prompts.ANALYSIS_MARKER, template_dir=template_dir
    )
    analysis = _strip_marker_echo(
        reasoning.complete(analysis_prompt).answer_text, prompts.ANALYSIS_MARKER
    )
    if not analysis:
        raise ConstructionError("rewrite", "empty rewrite analysis")
    question_prompt = prompts.render(
        template, {**base_bindings, "analysis": analysis}, template_dir=template_dir
    )
    output = reasoning.complete(question_prompt).answer_text
    rewritten = _strip_marker_echo(output, prompts.REWRITTEN_QUESTION_MARKER)
    if not rewritten:
        raise ConstructionError("rewrite", "output missing the rewritten question")
    if rewritten.strip() == problem.question.strip():
        raise ConstructionError("rewrite", "degenerate rewrite: question unchanged")
    return RewriteCandidate(
        candidate_id=_candidate_id(problem, condition, rewrite_type),
        parent_problem_id=problem.id,
        condition_index=condition.index,
        rewrite_type=rewrite_type,
        rewritten_question=rewritten,
        rewrite_analysis=analysis,
        condition_text=condition.text,
    )


@dataclass(frozen=True)
class GateResult:
    passed: bool
    detail: str | None = None


def verify_condition_change(candidate: RewriteCandidate, problem: Problem, instruction: Client,
                            template_dir: str | None = None) -> GateResult:
    """Gate 1: did the rewrite change exactly the intended condition?

    On a pass, a follow-up call summarizes the changed condition (returned
    in ``detail``).
    """
    _require_role(instruction, EndpointRole.INSTRUCTION, "verify_condition_change")
    bindings = {
        "original_math_question": problem.question,
        "original_answer": problem.ground_truth or "",
        "rewritten_math_question": candidate.rewritten_question,
        "rewrite_type": candidate.rewrite_type.value,
    }
    judgement_prompt = prompts.render(
        TemplateId.VERIFY_CONDITION_CHANGE, bindings, template_dir=template_dir
    )
    passed = parse_judgement(instruction.complete(judgement_prompt).answer_text)
    if not passed:
        return GateResult(passed=False)
    summary_prompt = prompts.render(
        TemplateId.SUMMARIZE_REWRITTEN_CONDITION, bindings, template_dir=template_dir
    )
    summary = _strip_marker_echo(
        instruction.complete(summary_prompt).answer_text, prompts.REWRITTEN_CONDITION_MARKER
    )
    if not summary:
        raise ConstructionError("verify_condition_change", "empty rewritten-condition summary")
    return GateResult(passed=True, detail=summary)


def verify_unsolvability(candidate: RewriteCandidate, problem: Problem, reasoning: Client,
                         template_dir: str | None = None) -> GateResult:
    """Gate 2: is the rewritten question genuinely unsolvable?

    On a pass, a follow-up call produces the unsolvable-reason analysis that
    later assists human evaluation (returned in ``detail``).
    """
    _require_role(reasoning, EndpointRole.REASONING, "verify_unsolvability")
    bindings = {
        "original_math_question": problem.question,
        "original_answer": problem.ground_truth or "",
        "rewritten_math_question": candidate.rewritten_question,
        "rewrite_type": candidate.rewrite_type.value,
    }
    analysis_prompt = prompts.render_prefix(
        TemplateId.VERIFY_UNSOLVABLE, bindings, prompts.UNSOLVABLE_ANALYSIS_MARKER,
        template_dir=template_dir,
    )
    analysis = _strip_marker_echo(
        reasoning.complete(analysis_prompt).answer_text, prompts.UNSOLVABLE_ANALYSIS_MARKER
    )
    if not analysis:
        raise ConstructionError("verify_unsolvability", "empty unsolvability analysis")
    judgement_prompt = prompts.render(
        TemplateId.VERIFY_UNSOLVABLE, {**bindings, "analysis": analysis},
        template_dir=template_dir,
    )
    passed = parse_judgement(reasoning.complete(judgement_prompt).answer_text)
    if not passed:
        return GateResult(passed=False)
    reason_prompt = prompts.render(
        TemplateId.UNSOLVABLE_REASON, {**bindings, "analysis": analysis},
        template_dir=template_dir,
    )
    reason = _strip_marker_echo(
        reasoning.complete(reason_prompt).answer_text, prompts.UNSOLVABLE_REASON_MARKER
    )
    if not reason:
        raise ConstructionError("verify_unsolvability", "empty unsolvable reason")
    return GateResult(passed=True, detail=reason)


@dataclass
class ConstructionResult:
    survivors: list[RewriteCandidate] = field(default_factory=list)
    filtered: list[RewriteCandidate] = field(default_factory=list)
    quarantined: list[RewriteCandidate] = field(default_factory=list)
    skipped_problems: list[tuple[str, str]] = field(default_factory=list)
    conditions_extracted: int = 0

    @property
    def step1_count(self) -> int:
        return len(self.survivors) + len(self.filtered) + len(self.quarantined)

    def counts(self) -> dict:
        return {
            "survivors": len(self.survivors),
            "filtered": len(self.filtered),
            "quarantined": len(self.quarantined),
            "step1_candidates": self.step1_count,
            "conditions_extracted": self.conditions_extracted,
            "skipped_problems": len(self.skipped_problems),
        }


def _process_candidate(problem: Problem, condition: Condition, rewrite_type: RewriteType,
                       instruction: Client, reasoning: Client,
                       template_dir: str | None) -> tuple[str, RewriteCandidate]:
    """Run one candidate through rewrite and both gates; returns (bucket, candidate)."""
    try:
        candidate = rewrite(problem, condition, rewrite_type, reasoning, template_dir)
    except (ConstructionError, GatewayError) as exc:
        stub = RewriteCandidate(
            candidate_id=_candidate_id(problem, condition, rewrite_type),
            parent_problem_id=problem.id,
            condition_index=condition.index,
            rewrite_type=rewrite_type,
            rewritten_question="",
            rewrite_analysis="",
            condition_text=condition.text,
            error={"stage": "rewrite", "message": str(exc)},
        )
        return "quarantined", stub
    try:
        gate1 = verify_condition_change(candidate, problem, instruction, template_dir)
        candidate.verified_condition_change = gate1.passed
        if not gate1.passed:
            return "filtered", candidate
        candidate.rewritten_condition = gate1.detail
        gate2 = verify_unsolvability(candidate, problem, reasoning, template_dir)
        candidate.verified_unsolvable = gate2.passed
        if not gate2.passed:
            return "filtered", candidate
        candidate.unsolvable_reason = gate2.detail
        return "survivors", candidate
    except (ConstructionError, GatewayError) as exc:
        stage = exc.stage if isinstance(exc, ConstructionError) else "gateway"
        candidate.error = {"stage": stage, "message": str(exc)}
        return "quarantined", candidate


def run_construction(problems: list[Problem], instruction: Client, reasoning: Client,
                     config: ConstructionConfig | None = None) -> ConstructionResult:
    """Run the full synthesis workflow over solvable problems.

    Every attempted (condition, rewrite type) pair lands in exactly one of
    survivors / filtered / quarantined; input problems are never mutated and
    output order is deterministic in input order.
    """
    config = config or ConstructionConfig()
    _require_role(instruction, EndpointRole.INSTRUCTION, "run_construction")
    _require_role(reasoning, EndpointRole.REASONING, "run_construction")
    result = ConstructionResult()

    work: list[tuple[Problem, Condition, RewriteType]] = []
    for problem in problems:
        if len(problem.question.strip()) < config.min_question_chars:
            logger.info("skipping problem %s: question shorter than %d chars",
                        problem.id, config.min_question_chars)
            result.skipped_problems.append((problem.id, "question too short"))
            continue
        try:
            conditions = extract_conditions(
                problem, instruction, config.max_conditions, config.template_dir
            )
        except (ConstructionError, GatewayError) as exc:
            logger.info("skipping problem %s: %s", problem.id, exc)
            result.skipped_problems.append((problem.id, str(exc)))
            continue
        result.conditions_extracted += len(conditions)
        for condition in conditions:
            for rewrite_type in config.rewrite_types:
                work.append((problem, condition, rewrite_type))

    buckets: list[tuple[str, RewriteCandidate] | None] = [None] * len(work)

    def run_item(index: int) -> None:
        problem, condition, rewrite_type = work[index]
        buckets[index] = _process_candidate(
            problem, condition, rewrite_type, instruction, reasoning, config.template_dir
        )

    if work:
        with ThreadPoolExecutor(max_workers=min(config.max_in_flight, len(work))) as pool:
            for future in [pool.submit(run_item, i) for i in range(len(work))]:
                future.result()

    for item in buckets:
        assert item is not None
        bucket, candidate = item
        getattr(result, bucket).append(candidate)
    return result
