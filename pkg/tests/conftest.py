"""Shared fixtures: a self-contained scripted workspace for CLI-level runs."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

import acceptance_report
from mockscripts import (
    construction_rules,
    make_solvable_problem,
    make_solvable_record,
    rules_to_script,
)
from relimath.datasets import write_records
from relimath.gateway import MockRule
from relimath.records import RewriteType, UnsolvableRecord


def pytest_terminal_summary(terminalreporter):
    if acceptance_report.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report.RESULTS:
            terminalreporter.write_line(line)


def think(body: str, answer: str) -> str:
    return f"<think>{body}</think>\nSo the final answer is {answer}."


def make_unsolvable_record(i: int) -> UnsolvableRecord:
    return UnsolvableRecord(
        unsol_id=f"u{i:03d}",
        data_source="AMC",
        question=f"Original solvable question [U{i:03d}] text.",
        ground_truth=str(100 + i),
        rewritten_condition=f"dropped constraint {i}",
        rewritten_question=f"Rewritten unsolvable question [U{i:03d}] with a missing constraint.",
        unsolvable_reason=f"constraint {i} was removed",
        human_check=1,
        difficulty_eval=i % 2,
        rewrite_type=RewriteType.REMOVAL if i % 2 else RewriteType.CONTRADICTION,
    )


@pytest.fixture
def pipeline_workspace(tmp_path: Path) -> dict:
    """Config + datasets + mock scripts for offline CLI runs of every stage."""
    workdir = tmp_path
    scripts = workdir / "scripts"
    scripts.mkdir()

    solvable_records = [make_solvable_record(i) for i in range(1, 7)]
    solvable_problems = [make_solvable_problem(i) for i in range(1, 7)]
    write_records(workdir / "solvable.jsonl", solvable_records)

    unsolvable_records = [make_unsolvable_record(i) for i in range(1, 3)]
    eval_records = solvable_records[:3] + unsolvable_records
    with open(workdir / "eval_dataset.jsonl", "w", encoding="utf-8", newline="\n") as handle:
        from relimath.datasets import serialize_record

        for record in eval_records:
            handle.write(serialize_record(record) + "\n")

    instruction_rules, reasoning_rules = construction_rules(
        solvable_problems,
        {p.id: 1 for p in solvable_problems},
        gate1_pass=lambda pid, idx, rt: pid != "q005",
        gate2_pass=lambda pid, idx, rt: not (pid == "q006" and rt is RewriteType.CONTRADICTION),
    )
    (scripts / "instruction.json").write_text(
        json.dumps(rules_to_script(instruction_rules)), encoding="utf-8"
    )
    (scripts / "reasoning.json").write_text(
        json.dumps(rules_to_script(reasoning_rules)), encoding="utf-8"
    )

    # student: q001/q002 correct, q003 wrong (mined unknown), refusals on request
    student_rules = []
    for record in eval_records:
        question = record.question if not isinstance(record, UnsolvableRecord) else record.rewritten_question
        problem_id = record.id if not isinstance(record, UnsolvableRecord) else record.unsol_id
        student_rules.append(
            MockRule(
                contains_all=[question, "### Anwer ###"],
                output=think("unsure", "\\boxed{sorry, I don't know}"),
            )
        )
        if isinstance(record, UnsolvableRecord):
            output = (
                think("odd", "\\boxed{it's unsolvable}")
                if problem_id == "u001"
                else think("guess", "\\boxed{42}")
            )
        else:
            answer = record.ground_truth if problem_id != "q003" else "999"
            output = think("solve", f"\\boxed{{{answer}}}")
        student_rules.append(MockRule(contains=question, output=output))
    (scripts / "student.json").write_text(
        json.dumps(rules_to_script(student_rules)), encoding="utf-8"
    )

    # teacher: 4 samples per problem, some failing rejection
    teacher_rules = []
    for record in solvable_records:
        teacher_rules.append(
            MockRule(
                contains=record.question,
                outputs=[
                    think("t0", f"\\boxed{{{record.ground_truth}}}"),
                    think("t1", "\\boxed{999999}"),
                    think("t2", f"\\boxed{{{record.ground_truth}}}"),
                    "no box at all",
                ],
            )
        )
    for record in unsolvable_records:
        teacher_rules.append(
            MockRule(
                contains=record.rewritten_question,
                outputs=[
                    think("t0", "\\boxed{it's unsolvable}"),
                    think("t1", "\\boxed{it's unsolvable}"),
                    think("t2", "\\boxed{7}"),
                    think("t3", "\\boxed{it's unsolvable}"),
                ],
            )
        )
    (scripts / "teacher.json").write_text(
        json.dumps(rules_to_script(teacher_rules)), encoding="utf-8"
    )

    config = f"""cache_dir: cache
max_in_flight: 4
endpoints:
  instruction:
    role: instruction
    model_name: mock-instruction
    backend: mock
    script: scripts/instruction.json
  reasoning:
    role: reasoning
    model_name: mock-reasoning
    backend: mock
    script: scripts/reasoning.json
  teacher:
    role: teacher
    model_name: mock-teacher
    backend: mock
    temperature: 0.7
    top_p: 0.95
    script: scripts/teacher.json
  student:
    role: student
    model_name: mock-student
    backend: mock
    script: scripts/student.json
"""
    (workdir / "config.yaml").write_text(config, encoding="utf-8")
    return {
        "workdir": workdir,
        "solvable": solvable_records,
        "unsolvable": unsolvable_records,
        "eval_dataset": eval_records,
    }
