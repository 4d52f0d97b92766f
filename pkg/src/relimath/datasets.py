"""Line-delimited record files: parsing, serialization, and validation.

One JSON object per line, UTF-8, LF endings. Field order is stable per
schema so serialization is byte-deterministic; unknown fields are carried
through in ``extra`` and re-emitted after the known ones.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import RecordParseError, RecordValidationError, RelimathError
from .records import (
    EvalRecord,
    Problem,
    PromptKind,
    RewriteCandidate,
    RewriteType,
    Solvability,
    SolvableRecord,
    TrainingExample,
    UnsolvableRecord,
    Verdict,
)

SCHEMAS = ("solvable", "unsolvable", "candidate", "eval", "training")

_SOLVABLE_FIELDS = ("id", "data_source", "question", "ground_truth")
_UNSOLVABLE_FIELDS = (
    "unsol_id",
    "data_source",
    "question",
    "ground_truth",
    "rewritten_condition",
    "rewritten_question",
    "unsolvable_reason",
    "human_check",
    "difficulty_eval",
    "rewrite_type",
)
_CANDIDATE_FIELDS = (
    "candidate_id",
    "parent_problem_id",
    "condition_index",
    "rewrite_type",
    "condition_text",
    "rewritten_question",
    "rewrite_analysis",
    "verified_condition_change",
    "verified_unsolvable",
    "rewritten_condition",
    "unsolvable_reason",
    "human_check",
    "difficulty_eval",
    "error",
)
_EVAL_FIELDS = (
    "problem_id",
    "solvability",
    "prompt_kind",
    "model_name",
    "raw_output",
    "extracted_answer",
    "verdict",
    "output_length_chars",
    "output_length_tokens_approx",
    "error",
)
_TRAINING_FIELDS = (
    "problem_id",
    "prompt_kind",
    "prompt_text",
    "response_text",
    "response_verdict",
    "includes_reasoning",
)

Record = SolvableRecord | UnsolvableRecord | RewriteCandidate | EvalRecord | TrainingExample


def _decode_line(line: str) -> dict[str, Any]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordParseError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise RecordParseError("record must be a JSON object")
    return obj


def _require(obj: dict[str, Any], key: str) -> Any:
    if key not in obj:
        raise RecordValidationError(key, "missing required field")
    return obj[key]


def _enum_value(kind: type, raw: Any, field_name: str) -> Any:
    try:
        return kind(raw)
    except ValueError:
        allowed = ", ".join(member.value for member in kind)
        raise RecordValidationError(field_name, f"must be one of: {allowed}") from None


def _split_extra(obj: dict[str, Any], known: tuple[str, ...]) -> dict[str, Any]:
    return {k: v for k, v in obj.items() if k not in known}


def parse_record(line: str, schema: str, line_number: int | None = None) -> Record:
    """Parse one serialized line into a typed, invariant-checked record."""
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    try:
        obj = _decode_line(line)
        return _build_record(obj, schema)
    except RecordParseError as exc:
        if line_number is not None and exc.line_number is None:
            raise RecordParseError(str(exc), line_number) from exc
        raise


def _build_record(obj: dict[str, Any], schema: str) -> Record:
    if schema == "solvable":
        rec: Record = SolvableRecord(
            id=str(_require(obj, "id")),
            data_source=str(_require(obj, "data_source")),
            question=str(_require(obj, "question")),
            ground_truth=str(_require(obj, "ground_truth")),
            extra=_split_extra(obj, _SOLVABLE_FIELDS),
        )
    elif schema == "unsolvable":
        rewrite_type = obj.get("rewrite_type")
        rec = UnsolvableRecord(
            unsol_id=str(_require(obj, "unsol_id")),
            data_source=str(_require(obj, "data_source")),
            question=str(_require(obj, "question")),
            ground_truth=str(_require(obj, "ground_truth")),
            rewritten_condition=str(_require(obj, "rewritten_condition")),
            rewritten_question=str(_require(obj, "rewritten_question")),
            unsolvable_reason=str(_require(obj, "unsolvable_reason")),
            human_check=obj.get("human_check"),
            difficulty_eval=obj.get("difficulty_eval"),
            rewrite_type=_enum_value(RewriteType, rewrite_type, "rewrite_type")
            if rewrite_type is not None
            else None,
            extra=_split_extra(obj, _UNSOLVABLE_FIELDS),
        )
    elif schema == "candidate":
        rec = RewriteCandidate(
            candidate_id=str(_require(obj, "candidate_id")),
            parent_problem_id=str(_require(obj, "parent_problem_id")),
            condition_index=int(_require(obj, "condition_index")),
            rewrite_type=_enum_value(RewriteType, _require(obj, "rewrite_type"), "rewrite_type"),
            rewritten_question=str(_require(obj, "rewritten_question")),
            rewrite_analysis=str(obj.get("rewrite_analysis", "")),
            condition_text=str(obj.get("condition_text", "")),
            verified_condition_change=obj.get("verified_condition_change"),
            verified_unsolvable=obj.get("verified_unsolvable"),
            rewritten_condition=obj.get("rewritten_condition"),
            unsolvable_reason=obj.get("unsolvable_reason"),
            human_check=obj.get("human_check"),
            difficulty_eval=obj.get("difficulty_eval"),
            error=obj.get("error"),
            extra=_split_extra(obj, _CANDIDATE_FIELDS),
        )
    elif schema == "eval":
        rec = EvalRecord(
            problem_id=str(_require(obj, "problem_id")),
            solvability=_enum_value(Solvability, _require(obj, "solvability"), "solvability"),
            prompt_kind=_enum_value(PromptKind, _require(obj, "prompt_kind"), "prompt_kind"),
            model_name=str(_require(obj, "model_name")),
            raw_output=str(_require(obj, "raw_output")),
            extracted_answer=obj.get("extracted_answer"),
            verdict=_enum_value(Verdict, _require(obj, "verdict"), "verdict"),
            output_length_chars=int(_require(obj, "output_length_chars")),
            output_length_tokens_approx=int(_require(obj, "output_length_tokens_approx")),
            error=obj.get("error"),
            extra=_split_extra(obj, _EVAL_FIELDS),
        )
    else:
        rec = TrainingExample(
            problem_id=str(_require(obj, "problem_id")),
            prompt_kind=_enum_value(PromptKind, _require(obj, "prompt_kind"), "prompt_kind"),
            prompt_text=str(_require(obj, "prompt_text")),
            response_text=str(_require(obj, "response_text")),
            response_verdict=_enum_value(
                Verdict, _require(obj, "response_verdict"), "response_verdict"
            ),
            includes_reasoning=bool(_require(obj, "includes_reasoning")),
            extra=_split_extra(obj, _TRAINING_FIELDS),
        )
    rec.validate()
    return rec


def record_from_obj(obj: dict[str, Any], schema: str) -> Record:
    """Build a typed, invariant-checked record from an already-decoded object."""
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    return _build_record(obj, schema)


def record_to_obj(record: Record) -> dict[str, Any]:
    """Stable-order JSON object for a record (the serialized line, undecoded)."""
    return _record_to_obj(record)


def _record_to_obj(record: Record) -> dict[str, Any]:
    obj: dict[str, Any] = {}
    if isinstance(record, SolvableRecord):
        for name in _SOLVABLE_FIELDS:
            obj[name] = getattr(record, name)
    elif isinstance(record, UnsolvableRecord):
        for name in _UNSOLVABLE_FIELDS:
            value = getattr(record, name)
            if name in ("human_check", "difficulty_eval", "rewrite_type") and value is None:
                continue
            obj[name] = value.value if isinstance(value, RewriteType) else value
    elif isinstance(record, RewriteCandidate):
        for name in _CANDIDATE_FIELDS:
            value = getattr(record, name)
            if value is None and name not in (
                "candidate_id",
                "parent_problem_id",
                "condition_index",
                "rewrite_type",
                "rewritten_question",
                "rewrite_analysis",
            ):
                continue
            obj[name] = value.value if isinstance(value, RewriteType) else value
    elif isinstance(record, EvalRecord):
        for name in _EVAL_FIELDS:
            value = getattr(record, name)
            if name == "error" and value is None:
                continue
            obj[name] = value.value if isinstance(value, (Solvability, PromptKind, Verdict)) else value
    elif isinstance(record, TrainingExample):
        for name in _TRAINING_FIELDS:
            value = getattr(record, name)
            obj[name] = value.value if isinstance(value, (PromptKind, Verdict)) else value
    else:
        raise TypeError(f"unsupported record type: {type(record).__name__}")
    obj.update(record.extra)
    return obj


def serialize_record(record: Record) -> str:
    """Serialize to a single stable-order line; parse(serialize(r)) == r."""
    record.validate()
    return json.dumps(_record_to_obj(record), ensure_ascii=False)


def schema_for_record(record: Record) -> str:
    return {
        SolvableRecord: "solvable",
        UnsolvableRecord: "unsolvable",
        RewriteCandidate: "candidate",
        EvalRecord: "eval",
        TrainingExample: "training",
    }[type(record)]


def write_records(path: str | Path, records: Iterable[Record]) -> int:
    """Write records as LF-terminated lines; returns the count written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(serialize_record(record) + "\n")
            count += 1
    return count


def iter_records(path: str | Path, schema: str) -> Iterator[Record]:
    """Yield parsed records; blank lines are skipped; errors carry line numbers."""
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                yield parse_record(line, schema, line_number=line_number)
            except RecordValidationError as exc:
                raise RecordValidationError(exc.field, f"line {line_number}: {exc}") from exc


def read_records(path: str | Path, schema: str) -> list[Record]:
    return list(iter_records(path, schema))


def detect_problem_schema(obj: dict[str, Any]) -> str:
    return "unsolvable" if "unsol_id" in obj else "solvable"


def read_problems(path: str | Path) -> list[Problem]:
    """Read a problem file (solvable, unsolvable, or mixed) as Problems."""
    problems = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            obj = _decode_line(line)
            record = _build_record(obj, detect_problem_schema(obj))
            problems.append(record.to_problem())
    return problems


_ID_FIELD = {
    "solvable": "id",
    "unsolvable": "unsol_id",
    "candidate": "candidate_id",
    "eval": "problem_id",
}


@dataclass
class DatasetSummary:
    """Validation result over one dataset file."""

    path: str
    schema: str
    records: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)
    by_solvability: Counter = field(default_factory=Counter)
    by_data_source: Counter = field(default_factory=Counter)
    by_rewrite_type: Counter = field(default_factory=Counter)
    by_difficulty: Counter = field(default_factory=Counter)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_dataset(path: str | Path, schema: str) -> DatasetSummary:
    """Validate every line of a dataset file and tally facet counts."""
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    path = Path(path)
    if not path.is_file():
        raise RelimathError(f"cannot read dataset file: {path}")
    summary = DatasetSummary(path=str(path), schema=schema)
    seen_ids: set[str] = set()
    id_field = _ID_FIELD.get(schema)
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                record = parse_record(line, schema, line_number=line_number)
            except (RecordParseError, RecordValidationError) as exc:
                summary.errors.append((line_number, str(exc)))
                continue
            summary.records += 1
            if id_field is not None:
                record_id = getattr(record, id_field)
                if record_id in seen_ids:
                    summary.errors.append(
                        (line_number, f"duplicate {id_field}: {record_id!r}")
                    )
                seen_ids.add(record_id)
            _tally(summary, record)
    return summary


def _tally(summary: DatasetSummary, record: Record) -> None:
    if isinstance(record, SolvableRecord):
        summary.by_solvability["solvable"] += 1
        summary.by_data_source[record.data_source] += 1
    elif isinstance(record, UnsolvableRecord):
        summary.by_solvability["unsolvable"] += 1
        summary.by_data_source[record.data_source] += 1
        if record.rewrite_type is not None:
            summary.by_rewrite_type[record.rewrite_type.value] += 1
        if record.difficulty_eval is not None:
            summary.by_difficulty[str(record.difficulty_eval)] += 1
    elif isinstance(record, RewriteCandidate):
        summary.by_rewrite_type[record.rewrite_type.value] += 1
    elif isinstance(record, EvalRecord):
        summary.by_solvability[record.solvability.value] += 1
