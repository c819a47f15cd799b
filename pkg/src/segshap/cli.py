"""Command-line interface: segment, generate, run, attribute, bench, serve.

Flag defaults can come from a JSON config file passed as --config; explicit
flags always win. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import bench as benchmod, tasks
from .attribution import build_problem, result_to_obj, solve
from .conllu import parse_conllu
from .engine import count_valid
from .evaluator import Evaluator, Operator
from .gateway import Gateway, GatewayConfig, stub_transport
from .rules import default_rules, load_rules
from .segmenter import build_forest, render_tree


def _config_section(ctx: click.Context) -> dict:
    root = (ctx.obj or {}).get("config", {})
    section = dict(root.get(ctx.info_name or "", {}))
    for key, value in root.items():
        if not isinstance(value, dict):
            section.setdefault(key, value)
    return section


def _resolve(ctx: click.Context, **values):
    """Fill flags left at their defaults from the config file, if present."""
    section = _config_section(ctx)
    out = {}
    for key, value in values.items():
        source = ctx.get_parameter_source(key)
        if source == click.core.ParameterSource.DEFAULT and key in section:
            out[key] = section[key]
        else:
            out[key] = value
    return out


def _load_rule_table(path: str | None):
    return load_rules(path) if path else default_rules()


def _build_gateway(model: str, base_url: str, cache_dir: str | None,
                   stub_response: str | None, api_key_env: str) -> Gateway:
    transport = None
    if stub_response is not None:
        transport = stub_transport(stub_response)
        os.environ.setdefault(api_key_env, "stub")
    config = GatewayConfig(base_url=base_url, model=model, cache_dir=cache_dir,
                           api_key_env=api_key_env)
    return Gateway(config, transport=transport)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with per-command flag defaults.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None) -> None:
    """Segment-level counterfactual generation and attribution for LLM prompts."""
    ctx.ensure_object(dict)
    if config_path:
        ctx.obj["config"] = json.loads(Path(config_path).read_text(encoding="utf-8"))
    else:
        ctx.obj["config"] = {}


@cli.command()
@click.argument("conllu_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None,
              help="Removability rule file; defaults to the built-in table.")
@click.pass_context
def segment(ctx: click.Context, conllu_file: str, rules_path: str | None) -> None:
    """Print the segment tree of every sentence in a CoNLL-U file."""
    opts = _resolve(ctx, rules_path=rules_path)
    table = _load_rule_table(opts["rules_path"])
    parses, errors = parse_conllu(Path(conllu_file).read_text(encoding="utf-8"))
    for err in errors:
        click.echo(f"block {err.block_index}: {err.error}", err=True)
    for i, parse in enumerate(parses):
        forest = build_forest(parse, table)
        if i:
            click.echo()
        click.echo(f"# {parse.original_text}")
        click.echo(render_tree(forest))
        click.echo(f"# segments={len(forest.segments)} "
                   f"M={forest.m} valid={count_valid(forest)}")
    if errors and not parses:
        raise click.ClickException("no sentence could be parsed")


@cli.command()
@click.argument("conllu_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None)
@click.option("--cap", default=4096, show_default=True,
              help="Enumerate exhaustively up to this many vectors.")
@click.option("--sample", default=512, show_default=True,
              help="Sample size when the space exceeds the cap.")
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None,
              help="Write JSONL here instead of stdout.")
@click.pass_context
def generate(ctx: click.Context, conllu_file: str, rules_path: str | None,
             cap: int, sample: int, seed: int, out: str | None) -> None:
    """Emit one JSONL row per counterfactual of the document."""
    opts = _resolve(ctx, rules_path=rules_path, cap=cap, sample=sample, seed=seed)
    table = _load_rule_table(opts["rules_path"])
    parses, errors = parse_conllu(Path(conllu_file).read_text(encoding="utf-8"))
    if errors:
        raise click.ClickException(f"block {errors[0].block_index}: {errors[0].error}")
    if not parses:
        raise click.ClickException("document contains no sentences")
    sentences = tuple(
        tasks.TaskSentence(index=i, parse=p, pinned=False, forest=build_forest(p, table))
        for i, p in enumerate(parses))
    space = tasks.TaskSpace(sentences)
    if space.total <= opts["cap"]:
        vectors = space.enumerate(opts["cap"])
    else:
        vectors = space.sample(opts["sample"], opts["seed"])
    lines = []
    for i, vector in enumerate(vectors):
        cf = space.realize(vector)
        lines.append(tasks.canon_dumps({
            "id": i, "bits": vector.bits_string(), "choices": list(vector.choices),
            "text": cf.text, "word_count": cf.word_count}))
    payload = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(payload, encoding="utf-8")
        click.echo(f"wrote {len(lines)} counterfactuals to {out}", err=True)
    else:
        click.echo(payload, nl=False)


@cli.command()
@click.option("--task", "task_file", type=click.Path(exists=True, dir_okay=False),
              required=True, help="JSON task description.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--model", default="gpt-4o-mini", show_default=True)
@click.option("--base-url", default="https://api.openai.com/v1", show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--api-key-env", default="OPENAI_API_KEY", show_default=True)
@click.option("--n", default=5, show_default=True, help="Samples per counterfactual.")
@click.option("--seed", default=0, show_default=True)
@click.option("--cap", default=4096, show_default=True)
@click.option("--sample", default=512, show_default=True)
@click.option("--stub-response", default=None,
              help="Answer every query with this text instead of calling a model.")
@click.pass_context
def run(ctx: click.Context, task_file: str, out_dir: str, model: str, base_url: str,
        cache_dir: str | None, api_key_env: str, n: int, seed: int, cap: int,
        sample: int, stub_response: str | None) -> None:
    """Execute a full run: generate, query, score, attribute."""
    opts = _resolve(ctx, model=model, base_url=base_url, cache_dir=cache_dir,
                    api_key_env=api_key_env, n=n, seed=seed, cap=cap, sample=sample,
                    stub_response=stub_response)
    spec = json.loads(Path(task_file).read_text(encoding="utf-8"))
    base = Path(task_file).parent
    if "conllu_text" in spec:
        conllu_text = spec["conllu_text"]
    elif "conllu" in spec:
        conllu_text = (base / spec["conllu"]).read_text(encoding="utf-8")
    else:
        raise click.ClickException("task file needs a conllu or conllu_text field")
    table = _load_rule_table(str(base / spec["rules"]) if "rules" in spec else None)
    evaluators = [
        Evaluator(operator=Operator(e["operator"]), argument=e["argument"],
                  name=e.get("name", ""))
        for e in spec.get("evaluators", [])
    ]
    task = tasks.create_task(
        conllu_text, spec["template"], evaluators,
        pinned_spans=[tuple(p) for p in spec.get("pinned", [])], rules=table)

    gateway = _build_gateway(opts["model"], opts["base_url"], opts["cache_dir"],
                             opts["stub_response"], opts["api_key_env"])
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    config = tasks.RunConfig(model=opts["model"], n=opts["n"], seed=opts["seed"],
                             cap=opts["cap"], sample=opts["sample"])
    tasks.execute_run(task, run_dir, gateway, config)
    status = json.loads((run_dir / "status.json").read_text(encoding="utf-8"))
    if status["state"] != "done":
        raise click.ClickException(f"run failed: {status['error']}")
    click.echo(f"run complete: {run_dir}", err=True)


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--evaluator", default=0, show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None)
def attribute(run_dir: str, evaluator: int, out: str | None) -> None:
    """Recompute attributions from stored run artifacts."""
    root = Path(run_dir)
    config = json.loads((root / "config.json").read_text(encoding="utf-8"))
    cfs = {row["id"]: row for row in tasks.read_jsonl(root / "counterfactuals.jsonl")}
    outcome_rows = tasks.read_jsonl(root / f"outcomes-{evaluator}.jsonl")
    records = [
        (tuple(int(b) for b in cfs[row["cf_id"]]["bits"]), row["outcome"])
        for row in outcome_rows if "error" not in row
    ]
    result = solve(build_problem(records, config["m"]))
    payload = tasks.canon_dumps(result_to_obj(result, config["segment_ids"])) + "\n"
    if out:
        Path(out).write_text(payload, encoding="utf-8")
    else:
        click.echo(payload, nl=False)


@cli.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--checker-url", required=True,
              help="Base URL of a LanguageTool-protocol server.")
@click.option("--language", default="en-US", show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--cap", default=4096, show_default=True)
@click.option("--sample", default=512, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--workers", default=8, show_default=True)
@click.pass_context
def bench(ctx: click.Context, corpus_dir: str, checker_url: str, language: str,
          out_dir: str | None, cap: int, sample: int, seed: int, workers: int) -> None:
    """Benchmark grammaticality of generated counterfactuals over a corpus."""
    opts = _resolve(ctx, checker_url=checker_url, language=language, cap=cap,
                    sample=sample, seed=seed, workers=workers)
    checker = benchmod.GrammarChecker(opts["checker_url"], language=opts["language"])
    config = benchmod.BenchConfig(cap=opts["cap"], sample=opts["sample"],
                                  seed=opts["seed"], workers=opts["workers"])
    report = benchmod.run_benchmark(corpus_dir, checker, config)
    click.echo(benchmod.report_to_markdown(report), nl=False)
    if out_dir:
        benchmod.write_report(report, out_dir)
        click.echo(f"report written to {out_dir}", err=True)


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--storage", "storage_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--model", default="gpt-4o-mini", show_default=True)
@click.option("--base-url", default="https://api.openai.com/v1", show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--api-key-env", default="OPENAI_API_KEY", show_default=True)
@click.option("--stub-response", default=None,
              help="Serve with a stubbed model that always answers this text.")
@click.pass_context
def serve(ctx: click.Context, host: str, port: int, storage_dir: str, model: str,
          base_url: str, cache_dir: str | None, api_key_env: str,
          stub_response: str | None) -> None:
    """Start the REST service."""
    import uvicorn

    from .service import create_app

    opts = _resolve(ctx, host=host, port=port, storage_dir=storage_dir, model=model,
                    base_url=base_url, cache_dir=cache_dir, api_key_env=api_key_env,
                    stub_response=stub_response)
    gateway = _build_gateway(opts["model"], opts["base_url"], opts["cache_dir"],
                             opts["stub_response"], opts["api_key_env"])
    app = create_app(opts["storage_dir"], gateway)
    uvicorn.run(app, host=opts["host"], port=opts["port"])


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(1)
    except Exception as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
