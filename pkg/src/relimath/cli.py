"""Command-line entry point orchestrating every pipeline stage.

Every run writes a manifest (config hash, input hashes, endpoint identities,
template versions) next to its outputs; no subcommand mutates its inputs.
Exit codes: 0 success, 1 usage, 2 validation, 3 upstream endpoint failure.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import alignment as alignment_mod
from . import prompts
from .annotation import SessionStore
from .annotation_http import create_app
from .config import PipelineConfig, build_client, load_config
from .construction import ConstructionConfig, run_construction
from .datasets import (
    SCHEMAS,
    read_problems,
    read_records,
    validate_dataset,
    write_records,
)
from .errors import GatewayError, RecordParseError, RecordValidationError, RelimathError
from .evaluation import (
    compute_metrics,
    facet_breakdown,
    length_stats,
    render_report,
    run_eval,
)
from .manifest import sha256_file, sha256_obj, write_manifest
from .records import PromptKind, RewriteType, Solvability, Verdict

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_ENDPOINT = 3


@click.group()
@click.option("--workdir", default=".", type=click.Path(file_okay=False),
              help="Base directory for relative paths.")
@click.pass_context
def cli(ctx: click.Context, workdir: str) -> None:
    ctx.obj = {"workdir": Path(workdir)}


def _resolve(ctx: click.Context, path: str) -> Path:
    base = ctx.obj["workdir"]
    candidate = Path(path)
    return candidate if candidate.is_absolute() else base / candidate


def _load_pipeline(ctx: click.Context, config_path: str) -> PipelineConfig:
    return load_config(_resolve(ctx, config_path))


@cli.command()
@click.option("--file", "file_path", required=True)
@click.option("--schema", "schema", required=True, type=click.Choice(SCHEMAS))
@click.pass_context
def validate(ctx: click.Context, file_path: str, schema: str) -> None:
    """Validate a dataset file and print its counts."""
    summary = validate_dataset(_resolve(ctx, file_path), schema)
    click.echo(f"file: {summary.path}")
    click.echo(f"schema: {summary.schema}")
    click.echo(f"records: {summary.records}")
    click.echo(f"errors: {len(summary.errors)}")
    for name, counter in (
        ("solvability", summary.by_solvability),
        ("data_source", summary.by_data_source),
        ("rewrite_type", summary.by_rewrite_type),
        ("difficulty", summary.by_difficulty),
    ):
        if counter:
            cells = ", ".join(f"{key}={count}" for key, count in sorted(counter.items()))
            click.echo(f"{name}: {cells}")
    if summary.errors:
        for line_number, message in summary.errors[:20]:
            click.echo(f"  line {line_number}: {message}", err=True)
        raise RecordValidationError("dataset", f"{len(summary.errors)} invalid records")


def _parse_conditions_range(text: str) -> int:
    """Flag syntax '3' or '1..3'; the upper bound caps extraction."""
    if ".." in text:
        low, high = text.split("..", 1)
        int(low)
        return int(high)
    return int(text)


@cli.command()
@click.option("--config", "config_path", required=True)
@click.option("--in", "input_path", required=True)
@click.option("--out-dir", "out_dir", required=True)
@click.option("--conditions", default="1..3", show_default=True,
              help="Max conditions per problem, as N or N..M.")
@click.option("--types", default="removal,contradiction", show_default=True)
@click.pass_context
def construct(ctx: click.Context, config_path: str, input_path: str, out_dir: str,
              conditions: str, types: str) -> None:
    """Synthesize unsolvable candidates (rewriting plus both verification gates)."""
    pipeline = _load_pipeline(ctx, config_path)
    for role in ("instruction", "reasoning"):
        if role not in pipeline.endpoints:
            raise RelimathError(f"config must define an endpoint named {role!r}")
    rewrite_types = tuple(RewriteType(t.strip()) for t in types.split(",") if t.strip())
    config = ConstructionConfig(
        max_conditions=_parse_conditions_range(conditions),
        rewrite_types=rewrite_types,
        max_in_flight=pipeline.max_in_flight,
        template_dir=pipeline.template_dir,
    )
    instruction = build_client(pipeline, "instruction")
    reasoning = build_client(pipeline, "reasoning")
    input_file = _resolve(ctx, input_path)
    problems = read_problems(input_file)
    result = run_construction(problems, instruction, reasoning, config)
    out = _resolve(ctx, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records(out / "survivors.jsonl", result.survivors)
    write_records(out / "filtered.jsonl", result.filtered)
    write_records(out / "quarantined.jsonl", result.quarantined)
    write_manifest(
        out / "manifest.json",
        {
            "stage": "construct",
            "config_sha256": sha256_obj({**pipeline.as_dict(), **config.as_dict()}),
            "input_sha256": sha256_file(input_file),
            "endpoints": {
                "instruction": instruction.endpoint.model_name,
                "reasoning": reasoning.endpoint.model_name,
            },
            "templates_version": prompts.templates_version(pipeline.template_dir),
            "counts": result.counts(),
            "skipped_problems": result.skipped_problems,
        },
    )
    click.echo(json.dumps(result.counts()))


@cli.group()
def annotate() -> None:
    """Human-check sessions over verification-passed candidates."""


@annotate.command()
@click.option("--candidates", "candidates_path", required=True)
@click.option("--problems", "problems_path", required=True)
@click.option("--port", default=8321, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ledger-dir", "ledger_dir", default="annotation-ledgers", show_default=True)
@click.option("--session", "session_id", default="main", show_default=True)
@click.option("--shuffle-seed", "shuffle_seed", type=int, default=None)
@click.option("--ui-dir", "ui_dir", default=None,
              help="Static UI bundle to serve (defaults to a frontend/dist sibling if present).")
@click.pass_context
def serve(ctx: click.Context, candidates_path: str, problems_path: str, port: int, host: str,
          ledger_dir: str, session_id: str, shuffle_seed: int | None, ui_dir: str | None) -> None:
    """Serve the annotation API (and UI bundle when built)."""
    import uvicorn

    store = SessionStore(_resolve(ctx, ledger_dir))
    if session_id not in store.sessions:
        candidates = read_records(_resolve(ctx, candidates_path), "candidate")
        problems = read_problems(_resolve(ctx, problems_path))
        store.create_session(session_id, candidates, problems, shuffle_seed=shuffle_seed)
        click.echo(f"created session {session_id!r} with {len(candidates)} candidates")
    else:
        click.echo(f"resuming session {session_id!r}")
    static_dir = Path(ui_dir) if ui_dir else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(store, static_dir if static_dir.is_dir() else None, workdir=ctx.obj["workdir"])
    uvicorn.run(app, host=host, port=port, log_level="warning")


@annotate.command()
@click.option("--session", "session_id", required=True)
@click.option("--ledger-dir", "ledger_dir", default="annotation-ledgers", show_default=True)
@click.option("--out", "out_path", required=True)
@click.pass_context
def export(ctx: click.Context, session_id: str, ledger_dir: str, out_path: str) -> None:
    """Export accepted candidates as unsolvable records (rejected go to a sidecar)."""
    store = SessionStore(_resolve(ctx, ledger_dir))
    summary = store.export_to_files(session_id, _resolve(ctx, out_path))
    click.echo(json.dumps(summary))


@cli.command(name="eval")
@click.option("--config", "config_path", required=True)
@click.option("--dataset", "dataset_path", required=True)
@click.option("--endpoint", "endpoint_name", required=True,
              help="Name of the configured endpoint to evaluate.")
@click.option("--prompt", "prompt_kind", required=True,
              type=click.Choice(["standard", "reliable"]))
@click.option("--out", "out_path", required=True)
@click.pass_context
def eval_command(ctx: click.Context, config_path: str, dataset_path: str, endpoint_name: str,
                 prompt_kind: str, out_path: str) -> None:
    """Run a greedy reliability evaluation and write classified records."""
    pipeline = _load_pipeline(ctx, config_path)
    client = build_client(pipeline, endpoint_name)
    dataset_file = _resolve(ctx, dataset_path)
    problems = read_problems(dataset_file)
    records = run_eval(
        problems, client, PromptKind(prompt_kind),
        max_in_flight=pipeline.max_in_flight, template_dir=pipeline.template_dir,
    )
    out_file = _resolve(ctx, out_path)
    errored = sum(1 for record in records if record.errored)
    if records and errored == len(records):
        raise GatewayError(f"all {errored} evaluation requests failed; check the endpoint")
    write_records(out_file, records)
    write_manifest(
        out_file.with_suffix(out_file.suffix + ".manifest.json"),
        {
            "stage": "eval",
            "config_sha256": sha256_obj(pipeline.as_dict()),
            "dataset_sha256": sha256_file(dataset_file),
            "endpoint": client.endpoint.model_name,
            "prompt_kind": prompt_kind,
            "templates_version": prompts.templates_version(pipeline.template_dir),
            "counts": {"records": len(records), "errored": errored},
        },
    )
    click.echo(f"wrote {len(records)} records ({errored} errored) to {out_file}")


@cli.command()
@click.option("--records", "records_path", required=True)
@click.option("--dataset", "dataset_path", default=None,
              help="Problem file used to resolve facet metadata.")
@click.option("--facets", "facets", default="",
              help="Comma-separated subset of: data_source,rewrite_type,difficulty.")
@click.option("--out", "out_prefix", default=None,
              help="Write <out>.txt and <out>.json report files.")
@click.pass_context
def report(ctx: click.Context, records_path: str, dataset_path: str | None,
           facets: str, out_prefix: str | None) -> None:
    """Compute precision/prudence metrics, facet breakdowns, and length stats."""
    records = read_records(_resolve(ctx, records_path), "eval")
    reliability = compute_metrics(records)
    facet_keys = [f.strip() for f in facets.split(",") if f.strip()]
    if facet_keys:
        if dataset_path is None:
            raise RelimathError("--facets requires --dataset to resolve facet metadata")
        problems = read_problems(_resolve(ctx, dataset_path))
        reliability.facets = facet_breakdown(records, problems, facet_keys)
    table = render_report(reliability, "table")
    lengths = length_stats(records)
    click.echo(table)
    click.echo("length stats (chars / approx tokens):")
    for cell, stats in lengths.items():
        click.echo(
            f"  {cell}: n={stats['n']} mean={stats['chars']['mean']:.1f} "
            f"median={stats['chars']['median']:.1f} p90={stats['chars']['p90']:.1f} "
            f"tok_mean={stats['tokens_approx']['mean']:.1f}"
        )
    if out_prefix:
        out = _resolve(ctx, out_prefix)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.with_suffix(".txt").write_text(table, encoding="utf-8")
        machine = {
            "report": json.loads(render_report(reliability, "machine")),
            "length_stats": lengths,
        }
        out.with_suffix(".json").write_text(
            json.dumps(machine, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        click.echo(f"wrote {out.with_suffix('.txt')} and {out.with_suffix('.json')}")


@cli.group()
def align() -> None:
    """Alignment training-data stages."""


def _read_problem_files(ctx: click.Context, paths: tuple[str, ...]):
    problems = []
    for path in paths:
        problems.extend(read_problems(_resolve(ctx, path)))
    return problems


def _sampled_to_obj(sample: alignment_mod.SampledResponse) -> dict:
    return {
        "problem_id": sample.problem_id,
        "prompt_kind": sample.prompt_kind.value,
        "sample_index": sample.sample_index,
        "text": sample.text,
        "verdict": sample.verdict.value,
    }


def _sampled_from_obj(obj: dict) -> alignment_mod.SampledResponse:
    return alignment_mod.SampledResponse(
        problem_id=obj["problem_id"],
        prompt_kind=PromptKind(obj["prompt_kind"]),
        sample_index=int(obj["sample_index"]),
        text=obj["text"],
        verdict=Verdict(obj["verdict"]),
    )


def _write_samples(path: Path, samples: dict[str, list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for problem_id in samples:
            for sample in samples[problem_id]:
                handle.write(json.dumps(_sampled_to_obj(sample), ensure_ascii=False) + "\n")


def _read_samples(path: Path) -> dict[str, list]:
    samples: dict[str, list] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            sample = _sampled_from_obj(json.loads(line))
            samples.setdefault(sample.problem_id, []).append(sample)
    return samples


@align.command()
@click.option("--config", "config_path", required=True)
@click.option("--problems", "problem_paths", required=True, multiple=True)
@click.option("--k", default=alignment_mod.DEFAULT_SAMPLE_COUNT, show_default=True, type=int)
@click.option("--out", "out_path", required=True)
@click.pass_context
def distill(ctx: click.Context, config_path: str, problem_paths: tuple[str, ...],
            k: int, out_path: str) -> None:
    """Sample successful teacher responses (rejection-filtered)."""
    pipeline = _load_pipeline(ctx, config_path)
    teacher = build_client(pipeline, "teacher")
    problems = _read_problem_files(ctx, problem_paths)
    result = alignment_mod.sample_successes(
        problems, teacher, k=k,
        max_in_flight=pipeline.max_in_flight, template_dir=pipeline.template_dir,
    )
    out_file = _resolve(ctx, out_path)
    _write_samples(out_file, result.successes)
    click.echo(json.dumps({
        "problems": len(problems),
        "with_successes": len(result.successes),
        "misses": len(result.misses),
        "errors": len(result.errors),
    }))


@align.command(name="mine-unknown")
@click.option("--config", "config_path", required=True)
@click.option("--problems", "problem_paths", required=True, multiple=True)
@click.option("--out", "out_path", required=True)
@click.pass_context
def mine_unknown(ctx: click.Context, config_path: str, problem_paths: tuple[str, ...],
                 out_path: str) -> None:
    """Find solvable problems the student fails under greedy decoding."""
    pipeline = _load_pipeline(ctx, config_path)
    student = build_client(pipeline, "student")
    problems = _read_problem_files(ctx, problem_paths)
    result = alignment_mod.find_unknown(
        problems, student,
        max_in_flight=pipeline.max_in_flight, template_dir=pipeline.template_dir,
    )
    out_file = _resolve(ctx, out_path)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    out_file.write_text(
        json.dumps(
            {"unknown_ids": result.unknown_ids, "indeterminate": result.indeterminate},
            ensure_ascii=False, indent=2,
        ) + "\n",
        encoding="utf-8",
    )
    click.echo(json.dumps({"unknown": len(result.unknown_ids),
                           "indeterminate": len(result.indeterminate)}))


@align.command(name="sample-refusals")
@click.option("--config", "config_path", required=True)
@click.option("--problems", "problem_paths", required=True, multiple=True)
@click.option("--unknown", "unknown_path", default=None,
              help="Unknown-set file from mine-unknown; filters solvable problems.")
@click.option("--k", default=alignment_mod.DEFAULT_REFUSAL_SAMPLE_COUNT, show_default=True, type=int)
@click.option("--retry-misses", "retry_misses", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True)
@click.pass_context
def sample_refusals_command(ctx: click.Context, config_path: str, problem_paths: tuple[str, ...],
                            unknown_path: str | None, k: int, retry_misses: int,
                            out_path: str) -> None:
    """Rejection-sample student refusals for unsolvable and mined-unknown problems."""
    pipeline = _load_pipeline(ctx, config_path)
    student = build_client(pipeline, "student")
    problems = _read_problem_files(ctx, problem_paths)
    if unknown_path is not None:
        unknown = set(json.loads(_resolve(ctx, unknown_path).read_text(encoding="utf-8"))["unknown_ids"])
        problems = [
            p for p in problems
            if p.solvability is Solvability.UNSOLVABLE or p.id in unknown
        ]
    refusals = alignment_mod.sample_refusals(
        problems, student, k=k, retry_misses=retry_misses,
        max_in_flight=pipeline.max_in_flight, template_dir=pipeline.template_dir,
    )
    _write_samples(_resolve(ctx, out_path), refusals)
    click.echo(json.dumps({"problems": len(problems), "with_refusals": len(refusals)}))


def _parse_caps(text: str) -> dict[str, int]:
    caps = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        caps[key.strip()] = int(value)
    return caps


@align.command()
@click.option("--problems", "problem_paths", required=True, multiple=True)
@click.option("--successes", "successes_path", required=True)
@click.option("--refusals", "refusals_path", default=None)
@click.option("--unknown", "unknown_path", default=None)
@click.option("--style", type=click.Choice(["with-reasoning", "answer-only"]),
              default="with-reasoning", show_default=True)
@click.option("--caps", "caps_text", default="",
              help="Per-cell quotas, e.g. solvable_successful=5344,unsolvable_refused=787.")
@click.option("--out", "out_path", required=True)
@click.option("--audit", "audit_path", default=None)
@click.pass_context
def build(ctx: click.Context, problem_paths: tuple[str, ...], successes_path: str,
          refusals_path: str | None, unknown_path: str | None, style: str,
          caps_text: str, out_path: str, audit_path: str | None) -> None:
    """Assemble the SFT-ready training file from sampled responses."""
    problems = _read_problem_files(ctx, problem_paths)
    successes = _read_samples(_resolve(ctx, successes_path))
    refusals = _read_samples(_resolve(ctx, refusals_path)) if refusals_path else {}
    unknown_ids: set[str] = set()
    if unknown_path:
        unknown_ids = set(
            json.loads(_resolve(ctx, unknown_path).read_text(encoding="utf-8"))["unknown_ids"]
        )
    result = alignment_mod.build_training_set(
        problems, successes, refusals, unknown_ids,
        style=alignment_mod.TrainingStyle(style.replace("-", "_")),
        caps=_parse_caps(caps_text) or None,
    )
    out_file = _resolve(ctx, out_path)
    write_records(out_file, result.examples)
    if audit_path:
        audit_file = _resolve(ctx, audit_path)
        audit_file.parent.mkdir(parents=True, exist_ok=True)
        with open(audit_file, "w", encoding="utf-8", newline="\n") as handle:
            for entry in result.audit:
                handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
    write_manifest(
        out_file.with_suffix(out_file.suffix + ".manifest.json"),
        {
            "stage": "align-build",
            "style": style,
            "inputs": {
                "successes_sha256": sha256_file(_resolve(ctx, successes_path)),
                "refusals_sha256": sha256_file(_resolve(ctx, refusals_path)) if refusals_path else None,
            },
            "counts": {"examples": len(result.examples), "audited_out": len(result.audit),
                       **result.cell_counts()},
        },
    )
    click.echo(json.dumps({"examples": len(result.examples), "audited_out": len(result.audit)}))


def main(argv: list[str] | None = None) -> int:
    """Entry point with scriptable exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return EXIT_OK
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except (RecordParseError, RecordValidationError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        return EXIT_VALIDATION
    except GatewayError as exc:
        click.echo(f"endpoint error: {exc}", err=True)
        return EXIT_ENDPOINT
    except (RelimathError, FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
