"""Construction workflow: extraction, rewriting, verification gates, partitioning."""
from __future__ import annotations

import pytest

from mockscripts import construction_mocks, make_solvable_problem, rewritten_token
from relimath.construction import (
    extract_conditions,
    parse_judgement,
    rewrite,
    run_construction,
    verify_condition_change,
    verify_unsolvability,
)
from relimath.errors import ConstructionError
from relimath.gateway import Client, CompletionCache, EndpointRole, MockBackend, MockRule, ModelEndpoint
from relimath.records import Condition, RewriteType


def client_for(backend, role) -> Client:
    return Client(ModelEndpoint(role=role, model_name=f"mock-{role.value}"), backend)


def instruction_client(backend) -> Client:
    return client_for(backend, EndpointRole.INSTRUCTION)


def reasoning_client(backend) -> Client:
    return client_for(backend, EndpointRole.REASONING)


PROBLEM = make_solvable_problem(1)


def extraction_backend(output: str) -> Client:
    return instruction_client(
        MockBackend([MockRule(contains="excellent extractor", output=output)])
    )


def test_extract_two_conditions_on_blank_line():
    conditions = extract_conditions(PROBLEM, extraction_backend("c1\n\nc2"))
    assert [c.text for c in conditions] == ["c1", "c2"]
    assert [c.index for c in conditions] == [1, 2]


def test_extract_single_condition_without_delimiter():
    conditions = extract_conditions(PROBLEM, extraction_backend("only one condition here"))
    assert len(conditions) == 1


def test_extract_caps_at_three_with_warning(caplog):
    import logging

    with caplog.at_level(logging.WARNING):
        conditions = extract_conditions(PROBLEM, extraction_backend("c1\n\nc2\n\nc3\n\nc4"))
    assert len(conditions) == 3
    assert "keeping first 3" in caplog.text


def test_extract_empty_output_errors():
    with pytest.raises(ConstructionError):
        extract_conditions(PROBLEM, extraction_backend("   \n\n  "))


def test_extract_strips_marker_echo():
    conditions = extract_conditions(
        PROBLEM, extraction_backend("### Extracted Condition ###: c1\n\nc2")
    )
    assert [c.text for c in conditions] == ["c1", "c2"]


def test_extract_requires_instruction_role():
    with pytest.raises(ConstructionError):
        extract_conditions(PROBLEM, reasoning_client(MockBackend([])))


def test_rewrite_two_turn_flow():
    condition = Condition(parent_problem_id=PROBLEM.id, index=1, text="COND-q001-1")
    _, reasoning = construction_mocks([PROBLEM], {PROBLEM.id: 1})
    candidate = rewrite(PROBLEM, condition, RewriteType.REMOVAL, reasoning_client(reasoning))
    assert candidate.rewrite_analysis == "AN-q001-1-removal"
    assert rewritten_token(PROBLEM.id, 1, RewriteType.REMOVAL) in candidate.rewritten_question
    assert candidate.candidate_id == "q001-c1-removal"


def test_rewrite_degenerate_error():
    condition = Condition(parent_problem_id=PROBLEM.id, index=1, text="c")
    backend = MockBackend(
        [
            MockRule(contains="AN-echo", output=PROBLEM.question),
            MockRule(contains="remove the key condition", output="AN-echo"),
        ]
    )
    with pytest.raises(ConstructionError) as excinfo:
        rewrite(PROBLEM, condition, RewriteType.REMOVAL, reasoning_client(backend))
    assert "degenerate" in str(excinfo.value)


def test_rewrite_missing_question_errors():
    condition = Condition(parent_problem_id=PROBLEM.id, index=1, text="c")
    backend = MockBackend(
        [
            MockRule(contains="AN-echo", output="   "),
            MockRule(contains="remove the key condition", output="AN-echo"),
        ]
    )
    with pytest.raises(ConstructionError) as excinfo:
        rewrite(PROBLEM, condition, RewriteType.REMOVAL, reasoning_client(backend))
    assert "missing the rewritten question" in str(excinfo.value)


def make_candidate():
    condition = Condition(parent_problem_id=PROBLEM.id, index=1, text="COND-q001-1")
    _, reasoning = construction_mocks([PROBLEM], {PROBLEM.id: 1})
    return rewrite(PROBLEM, condition, RewriteType.REMOVAL, reasoning_client(reasoning))


def test_gate1_pass_summarizes_condition():
    candidate = make_candidate()
    backend = MockBackend(
        [
            MockRule(contains="point out which key mathematical condition", output="removed: radius = 3"),
            MockRule(contains="Your judgement", output="True"),
        ]
    )
    outcome = verify_condition_change(candidate, PROBLEM, instruction_client(backend))
    assert outcome.passed and outcome.detail == "removed: radius = 3"


def test_gate1_fail_skips_summary():
    candidate = make_candidate()
    backend = MockBackend([MockRule(contains="Your judgement", output="False")])
    outcome = verify_condition_change(candidate, PROBLEM, instruction_client(backend))
    assert not outcome.passed and outcome.detail is None
    assert backend.call_count == 1


def test_unparseable_judgement_quarantines():
    candidate = make_candidate()
    backend = MockBackend([MockRule(contains="Your judgement", output="Maybe")])
    with pytest.raises(ConstructionError):
        verify_condition_change(candidate, PROBLEM, instruction_client(backend))


@pytest.mark.parametrize(
    "text,expected",
    [
        ("True", True),
        ("false", False),
        ("**True**", True),
        ('"False".', False),
        ("The answer is\nTrue", True),
        ("### Your judgement (True or False) ###: True", True),
    ],
)
def test_parse_judgement_tolerates_markup(text, expected):
    assert parse_judgement(text) is expected


@pytest.mark.parametrize("text", ["Maybe", "", "True False", "правда"])
def test_parse_judgement_rejects_ambiguity(text):
    with pytest.raises(ConstructionError):
        parse_judgement(text)


def test_gate2_analysis_judgement_reason_flow():
    candidate = make_candidate()
    rewritten = candidate.rewritten_question
    backend = MockBackend(
        [
            MockRule(contains_all=["UAN-x", "### Unsolvable Reason ###"], output="no unique solution"),
            MockRule(contains_all=["UAN-x", "Your judgement"], output="True"),
            MockRule(contains_all=[rewritten, "Think step by step to analyze"], output="UAN-x"),
        ]
    )
    outcome = verify_unsolvability(candidate, PROBLEM, reasoning_client(backend))
    assert outcome.passed and outcome.detail == "no unique solution"


def test_gate2_false_filters_without_reason_call():
    candidate = make_candidate()
    rewritten = candidate.rewritten_question
    backend = MockBackend(
        [
            MockRule(contains_all=["UAN-x", "Your judgement"], output="False"),
            MockRule(contains_all=[rewritten, "Think step by step to analyze"], output="UAN-x"),
        ]
    )
    outcome = verify_unsolvability(candidate, PROBLEM, reasoning_client(backend))
    assert not outcome.passed
    assert backend.call_count == 2


def corpus(n: int, conditions: dict[str, int] | None = None):
    problems = [make_solvable_problem(i) for i in range(1, n + 1)]
    per_problem = conditions or {p.id: 1 + (i % 3) for i, p in enumerate(problems)}
    return problems, per_problem


def test_two_conditions_give_four_candidates():
    problems = [make_solvable_problem(1)]
    instruction, reasoning = construction_mocks(problems, {problems[0].id: 2})
    result = run_construction(
        problems, instruction_client(instruction), reasoning_client(reasoning)
    )
    assert result.step1_count == 4
    assert len(result.survivors) == 4
    types = {(c.condition_index, c.rewrite_type) for c in result.survivors}
    assert types == {
        (1, RewriteType.REMOVAL), (1, RewriteType.CONTRADICTION),
        (2, RewriteType.REMOVAL), (2, RewriteType.CONTRADICTION),
    }


def test_cardinality_law_and_partition():
    problems, per_problem = corpus(10)

    def gate1(problem_id, index, rewrite_type):
        return (index + len(problem_id)) % 4 != 0

    def gate2(problem_id, index, rewrite_type):
        return rewrite_type is RewriteType.REMOVAL or index % 2 == 0

    instruction, reasoning = construction_mocks(problems, per_problem, gate1, gate2)
    result = run_construction(
        problems, instruction_client(instruction), reasoning_client(reasoning)
    )
    expected_candidates = 2 * sum(per_problem.values())
    assert result.step1_count == expected_candidates
    assert result.conditions_extracted == sum(per_problem.values())
    all_ids = [c.candidate_id for bucket in
               (result.survivors, result.filtered, result.quarantined) for c in bucket]
    assert len(all_ids) == len(set(all_ids)) == expected_candidates


def test_survivors_carry_earned_fields_only():
    problems, per_problem = corpus(4)
    gate2 = lambda pid, idx, rt: rt is RewriteType.REMOVAL  # noqa: E731
    instruction, reasoning = construction_mocks(problems, per_problem, gate2_pass=gate2)
    result = run_construction(
        problems, instruction_client(instruction), reasoning_client(reasoning)
    )
    assert result.survivors and result.filtered
    for candidate in result.survivors:
        assert candidate.verified_condition_change is True
        assert candidate.verified_unsolvable is True
        assert candidate.rewritten_condition and candidate.unsolvable_reason
    for candidate in result.filtered:
        assert candidate.unsolvable_reason is None
        assert candidate.verified_unsolvable is False


def test_provenance_resolves():
    problems, per_problem = corpus(6)
    instruction, reasoning = construction_mocks(problems, per_problem)
    result = run_construction(
        problems, instruction_client(instruction), reasoning_client(reasoning)
    )
    by_id = {p.id: p for p in problems}
    for candidate in result.survivors:
        assert candidate.parent_problem_id in by_id
        assert 1 <= candidate.condition_index <= per_problem[candidate.parent_problem_id]


def test_short_question_skipped():
    from relimath.records import Problem, Solvability

    short = Problem(
        id="tiny", data_source="MATH", question="Short one?",
        solvability=Solvability.SOLVABLE, ground_truth="1",
    )
    instruction, reasoning = construction_mocks([], {})
    result = run_construction(
        [short], instruction_client(instruction), reasoning_client(reasoning)
    )
    assert result.step1_count == 0
    assert result.skipped_problems == [("tiny", "question too short")]


def test_gate_error_quarantines_only_that_candidate():
    problems = [make_solvable_problem(1)]
    instruction, reasoning = construction_mocks(problems, {problems[0].id: 1})
    # poison gate-1 judgement for the removal candidate only
    removal_rw = rewritten_token(problems[0].id, 1, RewriteType.REMOVAL)
    instruction.rules.insert(
        0, MockRule(contains_all=[removal_rw, "Your judgement"], output="Maybe")
    )
    result = run_construction(
        problems, instruction_client(instruction), reasoning_client(reasoning)
    )
    assert len(result.quarantined) == 1
    assert result.quarantined[0].error["stage"] == "judgement"
    assert len(result.survivors) == 1


def test_rerun_with_warm_cache_identical(tmp_path):
    from relimath.datasets import serialize_record

    problems, per_problem = corpus(5)
    cache = CompletionCache(tmp_path / "cache")
    instruction, reasoning = construction_mocks(problems, per_problem)
    clients = (
        Client(ModelEndpoint(role=EndpointRole.INSTRUCTION, model_name="mi"), instruction, cache),
        Client(ModelEndpoint(role=EndpointRole.REASONING, model_name="mr"), reasoning, cache),
    )
    first = run_construction(problems, *clients)
    # strip all rules: the second run can only succeed via the cache
    instruction.rules.clear()
    reasoning.rules.clear()
    second = run_construction(problems, *clients)
    assert [serialize_record(c) for c in first.survivors] == [
        serialize_record(c) for c in second.survivors
    ]


def test_requires_both_roles():
    problems, per_problem = corpus(1)
    instruction, reasoning = construction_mocks(problems, per_problem)
    with pytest.raises(ConstructionError):
        run_construction(
            problems, instruction_client(instruction), instruction_client(instruction)
        )
