"""Human-check sessions: queue management, append-only ledger, dataset export.

Persistence is one append-only JSONL ledger file per session; all state is
reconstructed by replay, so an acknowledged submission survives a process
kill. The creation event embeds the candidates and their parent problems,
making a ledger self-contained for restart and export.
"""
from __future__ import annotations

import json
import os
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .datasets import record_from_obj, record_to_obj, write_records
from .errors import (
    AnnotationConflictError,
    AnnotationValidationError,
    IncompleteSessionError,
    RelimathError,
    SequencingError,
    SessionNotFoundError,
)
from .records import Problem, RewriteCandidate, UnsolvableRecord

PAYLOAD_FIELDS = (
    "question",
    "ground_truth",
    "rewritten_question",
    "rewritten_condition",
    "unsolvable_reason",
)


@dataclass
class Annotation:
    candidate_id: str
    human_check: int
    difficulty_eval: int | None
    annotator: str
    timestamp: str


@dataclass
class AnnotationSession:
    session_id: str
    queue: list[str]
    candidates: dict[str, RewriteCandidate]
    problems: dict[str, Problem]
    annotations: list[Annotation] = field(default_factory=list)

    @property
    def cursor(self) -> int:
        return len(self.annotations)

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.queue)

    def current_candidate_id(self) -> str | None:
        return None if self.done else self.queue[self.cursor]

    def payload_for(self, candidate_id: str) -> dict:
        candidate = self.candidates[candidate_id]
        problem = self.problems[candidate.parent_problem_id]
        return {
            "question": problem.question,
            "ground_truth": problem.ground_truth or "",
            "rewritten_question": candidate.rewritten_question,
            "rewritten_condition": candidate.rewritten_condition or "",
            "unsolvable_reason": candidate.unsolvable_reason or "",
        }

    def progress(self) -> dict:
        accepted = sum(1 for a in self.annotations if a.human_check == 1)
        return {
            "session_id": self.session_id,
            "total": len(self.queue),
            "annotated": len(self.annotations),
            "accepted": accepted,
            "rejected": len(self.annotations) - accepted,
            "remaining": len(self.queue) - len(self.annotations),
        }


def _validate_candidate_for_review(candidate: RewriteCandidate) -> None:
    if not candidate.both_gates_passed:
        raise AnnotationValidationError(
            f"candidate {candidate.candidate_id}: both verification gates must have passed"
        )
    if not candidate.rewritten_condition:
        raise AnnotationValidationError(
            f"candidate {candidate.candidate_id}: missing rewritten_condition"
        )
    if not candidate.unsolvable_reason:
        raise AnnotationValidationError(
            f"candidate {candidate.candidate_id}: missing unsolvable_reason"
        )


class SessionStore:
    """All sessions under one ledger directory, replayed on construction."""

    def __init__(self, ledger_dir: str | Path):
        self.ledger_dir = Path(ledger_dir)
        self.ledger_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, AnnotationSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()
        for path in sorted(self.ledger_dir.glob("*.jsonl")):
            session = self._replay(path)
            self.sessions[session.session_id] = session

    def _ledger_path(self, session_id: str) -> Path:
        return self.ledger_dir / f"{session_id}.jsonl"

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._store_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _append_event(self, session_id: str, event: dict) -> None:
        # Durability contract: the event is flushed and fsynced before the
        # submission is acknowledged.
        with open(self._ledger_path(session_id), "a", encoding="utf-8", newline="\n") as handle:
            handle.write(json.dumps(event, ensure_ascii=False) + "\n")
            handle.flush()
            os.fsync(handle.fileno())

    def _replay(self, path: Path) -> AnnotationSession:
        session: AnnotationSession | None = None
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["type"] == "session_created":
                    candidates = {
                        obj["candidate_id"]: record_from_obj(obj, "candidate")
                        for obj in event["candidates"]
                    }
                    problems = {
                        obj["id"]: record_from_obj(obj, "solvable").to_problem()
                        for obj in event["problems"]
                    }
                    session = AnnotationSession(
                        session_id=event["session_id"],
                        queue=list(event["queue"]),
                        candidates=candidates,
                        problems=problems,
                    )
                elif event["type"] == "annotation":
                    assert session is not None, f"ledger {path} missing creation event"
                    session.annotations.append(
                        Annotation(
                            candidate_id=event["candidate_id"],
                            human_check=event["human_check"],
                            difficulty_eval=event.get("difficulty_eval"),
                            annotator=event.get("annotator", ""),
                            timestamp=event.get("timestamp", ""),
                        )
                    )
        if session is None:
            raise RelimathError(f"ledger {path} contains no session")
        return session

    def get(self, session_id: str) -> AnnotationSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise SessionNotFoundError(f"unknown session: {session_id}")
        return session

    def create_session(self, session_id: str, candidates: list[RewriteCandidate],
                       problems: list[Problem], shuffle_seed: int | None = None) -> AnnotationSession:
        """Create and durably record a session over verification-passed candidates."""
        if session_id in self.sessions:
            raise AnnotationConflictError(f"session already exists: {session_id}")
        problems_by_id = {problem.id: problem for problem in problems}
        for candidate in candidates:
            _validate_candidate_for_review(candidate)
            if candidate.parent_problem_id not in problems_by_id:
                raise AnnotationValidationError(
                    f"candidate {candidate.candidate_id}: unknown parent problem "
                    f"{candidate.parent_problem_id}"
                )
        queue = [candidate.candidate_id for candidate in candidates]
        if len(set(queue)) != len(queue):
            raise AnnotationValidationError("duplicate candidate ids in queue")
        if shuffle_seed is not None:
            random.Random(shuffle_seed).shuffle(queue)
        candidate_map = {c.candidate_id: c for c in candidates}
        needed = {candidate_map[cid].parent_problem_id for cid in queue}
        session = AnnotationSession(
            session_id=session_id,
            queue=queue,
            candidates=candidate_map,
            problems={pid: problems_by_id[pid] for pid in sorted(needed)},
        )
        event = {
            "type": "session_created",
            "session_id": session_id,
            "shuffle_seed": shuffle_seed,
            "queue": queue,
            "candidates": [
                record_to_obj(candidate_map[cid]) for cid in sorted(candidate_map)
            ],
            "problems": [
                _problem_to_solvable_obj(problems_by_id[pid]) for pid in sorted(needed)
            ],
        }
        if self._ledger_path(session_id).exists():
            raise AnnotationConflictError(f"ledger already exists for session: {session_id}")
        self._append_event(session_id, event)
        self.sessions[session_id] = session
        return session

    def next_payload(self, session_id: str) -> dict | None:
        """Payload for the cursor candidate, or None at end of session."""
        session = self.get(session_id)
        candidate_id = session.current_candidate_id()
        if candidate_id is None:
            return None
        return {
            "candidate_id": candidate_id,
            "position": session.cursor,
            "total": len(session.queue),
            "payload": session.payload_for(candidate_id),
        }

    def submit(self, session_id: str, candidate_id: str, human_check: int,
               difficulty_eval: int | None, annotator: str = "") -> Annotation:
        """Record one annotation; enforces sequencing and the difficulty coupling."""
        session = self.get(session_id)
        lock = self._lock_for(session_id)
        with lock:
            if human_check not in (0, 1):
                raise AnnotationValidationError("human_check must be 0 or 1")
            if human_check == 1:
                if difficulty_eval not in (0, 1):
                    raise AnnotationValidationError(
                        "difficulty_eval (0 or 1) is required when accepting"
                    )
            elif difficulty_eval is not None:
                raise AnnotationValidationError(
                    "difficulty_eval is only allowed when human_check is 1"
                )
            current = session.current_candidate_id()
            if candidate_id != current:
                if any(a.candidate_id == candidate_id for a in session.annotations):
                    raise AnnotationConflictError(
                        f"candidate {candidate_id} already annotated"
                    )
                if candidate_id not in session.candidates:
                    raise AnnotationValidationError(f"unknown candidate: {candidate_id}")
                raise SequencingError(
                    f"expected candidate {current}, got {candidate_id}"
                )
            annotation = Annotation(
                candidate_id=candidate_id,
                human_check=human_check,
                difficulty_eval=difficulty_eval,
                annotator=annotator,
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
            event = {
                "type": "annotation",
                "candidate_id": annotation.candidate_id,
                "human_check": annotation.human_check,
                "annotator": annotation.annotator,
                "timestamp": annotation.timestamp,
            }
            if annotation.difficulty_eval is not None:
                event["difficulty_eval"] = annotation.difficulty_eval
            self._append_event(session_id, event)
            session.annotations.append(annotation)
            return annotation

    def export(self, session_id: str) -> tuple[list[UnsolvableRecord], list[UnsolvableRecord]]:
        """(accepted, rejected) records; refuses while any candidate is pending."""
        session = self.get(session_id)
        if not session.done:
            raise IncompleteSessionError(session.queue[session.cursor:])
        annotations = {a.candidate_id: a for a in session.annotations}
        accepted, rejected = [], []
        for candidate_id in session.queue:
            annotation = annotations[candidate_id]
            candidate = session.candidates[candidate_id]
            problem = session.problems[candidate.parent_problem_id]
            record = UnsolvableRecord(
                unsol_id=candidate.candidate_id,
                data_source=problem.data_source,
                question=problem.question,
                ground_truth=problem.ground_truth or "",
                rewritten_condition=candidate.rewritten_condition or "",
                rewritten_question=candidate.rewritten_question,
                unsolvable_reason=candidate.unsolvable_reason or "",
                human_check=annotation.human_check,
                difficulty_eval=annotation.difficulty_eval,
                rewrite_type=candidate.rewrite_type,
            )
            (accepted if annotation.human_check == 1 else rejected).append(record)
        return accepted, rejected

    def export_to_files(self, session_id: str, out_path: str | Path,
                        rejected_path: str | Path | None = None) -> dict:
        accepted, rejected = self.export(session_id)
        out_path = Path(out_path)
        write_records(out_path, accepted)
        if rejected_path is None:
            rejected_path = out_path.with_name(out_path.stem + ".rejected" + out_path.suffix)
        write_records(rejected_path, rejected)
        return {
            "accepted": len(accepted),
            "rejected": len(rejected),
            "out_path": str(out_path),
            "rejected_path": str(rejected_path),
        }


def _problem_to_solvable_obj(problem: Problem) -> dict:
    return {
        "id": problem.id,
        "data_source": problem.data_source,
        "question": problem.question,
        "ground_truth": problem.ground_truth or "",
    }
