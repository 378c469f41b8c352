"""Command-line interface.

Every knob resolves with the same precedence: command-line flag, then
environment variable (SPECJUDGE_*), then the --config YAML file, then the
built-in default.
"""

from __future__ import annotations

import json
import os
import shlex
import sys
from pathlib import Path

import click
import yaml

from . import pipeline as pl
from .errors import ClientUnavailable, EmptyInput, SpecJudgeError, VerifierUnavailable
from .metrics import EvalRecord, aggregate
from .rewards import RewardEngine, RewardWeights
from .source import parse
from .verifier import VERIFIER_ENV_VAR, DafnyGateway, VerifierConfig

ENV_PREFIX = "SPECJUDGE_"

# knob -> (env var, config file key)
_KNOBS = {
    "verifier_cmd": (VERIFIER_ENV_VAR, "verifier_cmd"),
    "timeout": (ENV_PREFIX + "TIMEOUT", "timeout"),
    "cache_dir": (ENV_PREFIX + "CACHE_DIR", "cache_dir"),
    "weights": (ENV_PREFIX + "WEIGHTS", "weights"),
    "max_parallel": (ENV_PREFIX + "MAX_PARALLEL", "max_parallel"),
}

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_TOOL_ERROR = 2


def resolve_knob(name: str, flag_value, config_file: dict):
    """flag > env var > config file > None."""
    if flag_value is not None:
        return flag_value
    env_var, cfg_key = _KNOBS[name]
    env_value = os.environ.get(env_var)
    if env_value is not None and env_value != "":
        return env_value
    return config_file.get(cfg_key)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise click.ClickException(f"config file {path} must hold a mapping")
    return data


def _command_tuple(cmd_text: str | None) -> tuple[str, ...]:
    if not cmd_text:
        return ()
    parts = tuple(shlex.split(str(cmd_text)))
    if len(parts) == 1 and "{file}" not in parts[0]:
        return (parts[0], "verify")  # bare binary path
    return parts


def build_settings(ctx_obj: dict) -> tuple[VerifierConfig, RewardWeights]:
    cfg_file = ctx_obj.get("config_file", {})
    cmd = _command_tuple(resolve_knob("verifier_cmd", ctx_obj.get("verifier_cmd"), cfg_file))
    timeout = resolve_knob("timeout", ctx_obj.get("timeout"), cfg_file)
    cache_dir = resolve_knob("cache_dir", ctx_obj.get("cache_dir"), cfg_file)
    max_parallel = resolve_knob("max_parallel", ctx_obj.get("max_parallel"), cfg_file)
    weights_text = resolve_knob("weights", ctx_obj.get("weights"), cfg_file)
    verifier = VerifierConfig(
        command=cmd,
        timeout=float(timeout) if timeout is not None else 60.0,
        max_parallel=int(max_parallel) if max_parallel is not None else 4,
        cache_dir=str(cache_dir) if cache_dir else None,
    )
    weights = RewardWeights.from_text(str(weights_text)) if weights_text else RewardWeights()
    return verifier, weights


@click.group()
@click.option("--verifier-cmd", default=None,
              help="Verifier command; a bare path gets 'verify' appended.")
@click.option("--timeout", type=float, default=None, help="Per-file verifier timeout (s).")
@click.option("--cache-dir", default=None, help="Directory for verification result cache.")
@click.option("--weights", default=None, help="Reward weights 'syntax,verify,subset'.")
@click.option("--max-parallel", type=int, default=None, help="Max concurrent verifier runs.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True),
              help="YAML config file (lowest precedence).")
@click.pass_context
def main(ctx, verifier_cmd, timeout, cache_dir, weights, max_parallel, config_path):
    """Verifier-grounded rewards and evaluation for Dafny specifications."""
    ctx.ensure_object(dict)
    ctx.obj.update(
        verifier_cmd=verifier_cmd,
        timeout=timeout,
        cache_dir=cache_dir,
        weights=weights,
        max_parallel=max_parallel,
        config_file=_load_config_file(config_path),
    )


def _engine(ctx) -> RewardEngine:
    verifier, weights = build_settings(ctx.obj)
    return RewardEngine(DafnyGateway(verifier), weights)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.argument("code", type=click.Path())
@click.argument("ground_truth", type=click.Path())
@click.argument("candidate", type=click.Path())
@click.pass_context
def score(ctx, code, ground_truth, candidate):
    """Score one candidate file against code and ground truth."""
    try:
        engine = _engine(ctx)
        code_file = parse(_read(code), code)
        breakdown = engine.score(code_file, _read(ground_truth), _read(candidate))
    except (VerifierUnavailable, click.ClickException) as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_TOOL_ERROR)
    click.echo(json.dumps(breakdown.to_dict(), indent=2, sort_keys=True))
    passed = breakdown.category in ("Verified", "VerifiedSuperior")
    ctx.exit(EXIT_OK if passed else EXIT_REJECTED)


@main.command("eval")
@click.option("--dataset", required=True, type=click.Path(exists=True),
              help="JSONL dataset with id/code_with_specs records.")
@click.option("--rollouts-dir", required=True, type=click.Path(exists=True),
              help="Directory of <input_id>/<rollout_index>.dfy files.")
@click.option("--k", "k_text", default="1", help="Comma-separated pass@k values.")
@click.option("--out", required=True, type=click.Path(),
              help="Output path stem; writes <out>.json and <out>.csv.")
@click.pass_context
def eval_cmd(ctx, dataset, rollouts_dir, k_text, out):
    """Evaluate rollout files against a dataset and write a metrics report."""
    k_values = [int(k) for k in k_text.split(",") if k.strip()]
    ingest = pl.ingest_dataset(dataset)
    for lineno, reason in ingest.errors:
        click.echo(f"dataset line {lineno}: {reason}", err=True)
    try:
        engine = _engine(ctx)
        records = []
        for rec in sorted(ingest.records, key=lambda r: r.record_id):
            rollout_dir = Path(rollouts_dir) / rec.record_id
            files = sorted(rollout_dir.glob("*.dfy"),
                           key=lambda p: _rollout_index(p.name))
            if not files:
                click.echo(f"record {rec.record_id}: no rollouts found", err=True)
                continue
            rollouts = tuple(
                engine.score(rec.code_file(), rec.code_with_specs,
                             f.read_text(encoding="utf-8"))
                for f in files
            )
            records.append(EvalRecord(input_id=rec.record_id, rollouts=rollouts))
        report = aggregate(records, k_values)
    except EmptyInput as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_REJECTED)
    except VerifierUnavailable as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_TOOL_ERROR)
    Path(f"{out}.json").write_text(report.to_json() + "\n", encoding="utf-8")
    Path(f"{out}.csv").write_text(report.to_csv(), encoding="utf-8")
    click.echo(report.to_json())
    ctx.exit(EXIT_OK)


def _rollout_index(name: str) -> tuple:
    stem = name.rsplit(".", 1)[0]
    return (0, int(stem)) if stem.isdigit() else (1, stem)


@main.group()
def pipeline():
    """Translate-verify-repair corpus pipelines."""


def _chat_client(endpoint, model, temperature, max_tokens):
    return pl.HttpChatClient(
        endpoint=endpoint, model_name=model,
        temperature=temperature, max_tokens=max_tokens,
    )


def _record_summary(record: pl.PipelineRecord) -> str:
    return (f"{record.source_id or '<unnamed>'}: {record.status} "
            f"after {len(record.iterations)} client call(s)")


def _write_pipeline_outputs(record: pl.PipelineRecord, out_dir: str):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = record.source_id or "record"
    if record.status == pl.STATUS_VERIFIED:
        (out / f"{stem}.dfy").write_text(record.dafny_text, encoding="utf-8")
    transcript = {
        "source_id": record.source_id,
        "status": record.status,
        "iterations": [
            {
                "stage": it.stage,
                "prompt_digest": it.prompt_digest,
                "response_digest": it.response_digest,
                "verdict": it.outcome.verdict,
            }
            for it in record.iterations
        ],
    }
    (out / f"{stem}.json").write_text(
        json.dumps(transcript, indent=2) + "\n", encoding="utf-8")


@pipeline.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="JSONL file with id and source fields.")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--endpoint", required=True, help="Chat completion endpoint URL.")
@click.option("--model", default="", help="Model name sent to the endpoint.")
@click.option("--temperature", type=float, default=0.0)
@click.option("--max-tokens", type=int, default=4096)
@click.option("--max-iter", type=int, default=pl.MAX_REPAIR_ITERATIONS)
@click.option("--templates-dir", default=None, type=click.Path(exists=True))
@click.pass_context
def translate(ctx, input_path, out_dir, endpoint, model, temperature,
              max_tokens, max_iter, templates_dir):
    """Translate source programs to verified Dafny."""
    verifier, _ = build_settings(ctx.obj)
    gateway = DafnyGateway(verifier)
    client = _chat_client(endpoint, model, temperature, max_tokens)
    templates = pl.PromptTemplates(templates_dir)
    failures = 0
    for source_id, source in _iter_sources(input_path):
        try:
            record = pl.translate_and_repair(
                source, client, gateway, templates,
                max_iter=max_iter, source_id=source_id)
        except (ClientUnavailable, VerifierUnavailable) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_TOOL_ERROR)
        _write_pipeline_outputs(record, out_dir)
        click.echo(_record_summary(record))
        if record.status != pl.STATUS_VERIFIED:
            failures += 1
    ctx.exit(EXIT_OK if failures == 0 else EXIT_REJECTED)


@pipeline.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="JSONL dataset; code_stripped (or stripped code_with_specs) is annotated.")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--endpoint", required=True, help="Chat completion endpoint URL.")
@click.option("--model", default="", help="Model name sent to the endpoint.")
@click.option("--temperature", type=float, default=0.0)
@click.option("--max-tokens", type=int, default=4096)
@click.option("--max-iter", type=int, default=pl.MAX_REPAIR_ITERATIONS)
@click.option("--templates-dir", default=None, type=click.Path(exists=True))
@click.pass_context
def annotate(ctx, input_path, out_dir, endpoint, model, temperature,
             max_tokens, max_iter, templates_dir):
    """Insert specifications into unannotated Dafny, unit by unit."""
    verifier, _ = build_settings(ctx.obj)
    gateway = DafnyGateway(verifier)
    client = _chat_client(endpoint, model, temperature, max_tokens)
    templates = pl.PromptTemplates(templates_dir)
    ingest = pl.ingest_dataset(input_path)
    for lineno, reason in ingest.errors:
        click.echo(f"dataset line {lineno}: {reason}", err=True)
    failures = 0
    for rec in ingest.records:
        try:
            record = pl.staged_spec_insertion(
                rec.code_file(), client, gateway, templates,
                max_iter=max_iter, source_id=rec.record_id)
        except (ClientUnavailable, VerifierUnavailable) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_TOOL_ERROR)
        _write_pipeline_outputs(record, out_dir)
        click.echo(_record_summary(record))
        if record.status != pl.STATUS_VERIFIED:
            failures += 1
    ctx.exit(EXIT_OK if failures == 0 else EXIT_REJECTED)


def _iter_sources(path: str):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except ValueError:
                click.echo(f"input line {lineno}: invalid JSON", err=True)
                continue
            source = obj.get("source") or obj.get("python") or obj.get("python_code")
            if not obj.get("id") or not source:
                click.echo(f"input line {lineno}: needs id and source", err=True)
                continue
            yield str(obj["id"]), source


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8321)
@click.option("--auth-token", default=None, help="Static bearer token; unset disables auth.")
@click.option("--max-body-bytes", type=int, default=8 * 1024 * 1024)
@click.pass_context
def serve(ctx, host, port, auth_token, max_body_bytes):
    """Run the HTTP reward service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    verifier, weights = build_settings(ctx.obj)
    config = ServiceConfig(
        verifier=verifier,
        weights=weights,
        auth_token=auth_token,
        max_body_bytes=max_body_bytes,
    )
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
