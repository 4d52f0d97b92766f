"""Record types flowing through the pipeline.

Serialized field names for problem datasets follow the published data formats
(solvable records keyed by ``id``, annotated unsolvable records keyed by
``unsol_id`` with ``human_check``/``difficulty_eval``), so files written here
interoperate with existing data. ``rewrite_type`` is an optional extension on
unsolvable records, preserved on round-trip.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .errors import RecordValidationError


class Solvability(str, Enum):
    SOLVABLE = "solvable"
    UNSOLVABLE = "unsolvable"


class RewriteType(str, Enum):
    REMOVAL = "removal"
    CONTRADICTION = "contradiction"


class Verdict(str, Enum):
    SUCCESSFUL = "successful"
    REFUSED = "refused"
    FAILED = "failed"


class PromptKind(str, Enum):
    STANDARD = "standard"
    RELIABLE = "reliable"
    REFUSAL = "refusal"


def approx_token_length(char_length: int) -> int:
    """Tokenizer-free length approximation: ceil(chars / 4)."""
    return math.ceil(char_length / 4)


@dataclass(frozen=True)
class Problem:
    """A solvable or unsolvable question as consumed by evaluation and alignment.

    ``question`` is always the text put to the model; for synthesized
    unsolvable problems that is the rewritten question, with the original
    kept in ``source_question``.
    """

    id: str
    data_source: str
    question: str
    solvability: Solvability
    ground_truth: str | None = None
    rewrite_type: RewriteType | None = None
    difficulty: int | None = None
    source_problem_id: str | None = None
    source_candidate_id: str | None = None
    source_question: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise RecordValidationError("id", "must be non-empty")
        if self.solvability is Solvability.SOLVABLE:
            if not self.ground_truth:
                raise RecordValidationError("ground_truth", "required for solvable problems")
            if self.rewrite_type is not None:
                raise RecordValidationError("rewrite_type", "not allowed on solvable problems")
            if self.difficulty is not None:
                raise RecordValidationError("difficulty", "not allowed on solvable problems")
        if self.difficulty is not None and self.difficulty not in (0, 1):
            raise RecordValidationError("difficulty", "must be 0 or 1")


@dataclass(frozen=True)
class Condition:
    """One necessary condition extracted from a solvable question."""

    parent_problem_id: str
    index: int
    text: str

    def __post_init__(self) -> None:
        if not 1 <= self.index <= 3:
            raise RecordValidationError("index", "must be between 1 and 3")
        if not self.text.strip():
            raise RecordValidationError("text", "must be non-empty")


@dataclass
class SolvableRecord:
    """Serialized solvable problem (``id``/``data_source``/``question``/``ground_truth``)."""

    id: str
    data_source: str
    question: str
    ground_truth: str
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("id", "data_source", "question", "ground_truth"):
            if not str(getattr(self, name)).strip():
                raise RecordValidationError(name, "must be non-empty")

    def to_problem(self) -> Problem:
        return Problem(
            id=self.id,
            data_source=self.data_source,
            question=self.question,
            solvability=Solvability.SOLVABLE,
            ground_truth=self.ground_truth,
        )


@dataclass
class UnsolvableRecord:
    """Serialized unsolvable problem in the published annotation format.

    ``question``/``ground_truth`` are the original problem's; the unsolvable
    question itself is ``rewritten_question``. ``human_check``/``difficulty_eval``
    are absent on records that never went through human review (training mode).
    """

    unsol_id: str
    data_source: str
    question: str
    ground_truth: str
    rewritten_condition: str
    rewritten_question: str
    unsolvable_reason: str
    human_check: int | None = None
    difficulty_eval: int | None = None
    rewrite_type: RewriteType | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("unsol_id", "data_source", "question", "rewritten_question"):
            if not str(getattr(self, name)).strip():
                raise RecordValidationError(name, "must be non-empty")
        if self.human_check is not None and self.human_check not in (0, 1):
            raise RecordValidationError("human_check", "must be 0 or 1")
        if self.difficulty_eval is not None:
            if self.difficulty_eval not in (0, 1):
                raise RecordValidationError("difficulty_eval", "must be 0 or 1")
            if self.human_check != 1:
                raise RecordValidationError(
                    "difficulty_eval", "only allowed when human_check is 1"
                )
        if self.human_check == 1 and self.difficulty_eval is None:
            raise RecordValidationError("difficulty_eval", "required when human_check is 1")

    def to_problem(self) -> Problem:
        return Problem(
            id=self.unsol_id,
            data_source=self.data_source,
            question=self.rewritten_question,
            solvability=Solvability.UNSOLVABLE,
            rewrite_type=self.rewrite_type,
            difficulty=self.difficulty_eval,
            source_question=self.question,
        )


@dataclass
class RewriteCandidate:
    """A rewritten-question candidate and its verification state."""

    candidate_id: str
    parent_problem_id: str
    condition_index: int
    rewrite_type: RewriteType
    rewritten_question: str
    rewrite_analysis: str
    condition_text: str = ""
    verified_condition_change: bool | None = None
    verified_unsolvable: bool | None = None
    rewritten_condition: str | None = None
    unsolvable_reason: str | None = None
    human_check: int | None = None
    difficulty_eval: int | None = None
    error: dict[str, str] | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.candidate_id:
            raise RecordValidationError("candidate_id", "must be non-empty")
        if not self.parent_problem_id:
            raise RecordValidationError("parent_problem_id", "must be non-empty")
        if self.rewritten_condition is not None and self.verified_condition_change is not True:
            raise RecordValidationError(
                "rewritten_condition", "only allowed when verified_condition_change is true"
            )
        if self.unsolvable_reason is not None and self.verified_unsolvable is not True:
            raise RecordValidationError(
                "unsolvable_reason", "only allowed when verified_unsolvable is true"
            )
        if self.verified_condition_change is True and not self.rewritten_condition:
            raise RecordValidationError(
                "rewritten_condition", "required when verified_condition_change is true"
            )
        if self.verified_unsolvable is True and not self.unsolvable_reason:
            raise RecordValidationError(
                "unsolvable_reason", "required when verified_unsolvable is true"
            )
        if self.difficulty_eval is not None and self.human_check != 1:
            raise RecordValidationError("difficulty_eval", "only allowed when human_check is 1")

    @property
    def both_gates_passed(self) -> bool:
        return self.verified_condition_change is True and self.verified_unsolvable is True


@dataclass
class EvalRecord:
    """One model response to one problem, classified."""

    problem_id: str
    solvability: Solvability
    prompt_kind: PromptKind
    model_name: str
    raw_output: str
    extracted_answer: str | None
    verdict: Verdict
    output_length_chars: int
    output_length_tokens_approx: int
    error: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.problem_id:
            raise RecordValidationError("problem_id", "must be non-empty")
        if self.output_length_chars < 0:
            raise RecordValidationError("output_length_chars", "must be >= 0")
        expected = approx_token_length(self.output_length_chars)
        if self.output_length_tokens_approx != expected:
            raise RecordValidationError(
                "output_length_tokens_approx",
                f"must be ceil(chars/4) = {expected}, got {self.output_length_tokens_approx}",
            )

    @property
    def errored(self) -> bool:
        return self.error is not None


@dataclass
class TrainingExample:
    """One prompt/response pair destined for the alignment training set."""

    problem_id: str
    prompt_kind: PromptKind
    prompt_text: str
    response_text: str
    response_verdict: Verdict
    includes_reasoning: bool
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.problem_id:
            raise RecordValidationError("problem_id", "must be non-empty")
        if self.response_verdict not in (Verdict.SUCCESSFUL, Verdict.REFUSED):
            raise RecordValidationError(
                "response_verdict", "training examples must be successful or refused"
            )
        if not self.includes_reasoning and "<think>" in self.response_text:
            raise RecordValidationError(
                "response_text", "reasoning delimiter present but includes_reasoning is false"
            )
