"""Command-line entry point: chat, generate, quantize, perplexity, inspect, serve, bench."""

from __future__ import annotations

import json
import resource
import sys
import time
from pathlib import Path

import click

from . import evalsuite
from .config import count_parameters
from .convert import quantize_file
from .errors import EngineError
from .generation import (
    ChatSession,
    FinishEvent,
    GenerationParams,
    TokenEvent,
    generate,
    resolve_template,
)
from .gguf import read_config, read_gguf, read_tokenizer
from .quant import QuantType
from .runtime import Model
from .tokenizer import Tokenizer, Vocabulary

CONTEXT_SETTINGS = {"help_option_names": ["-h", "--help"], "auto_envvar_prefix": "DANUBE"}


@click.group(context_settings=CONTEXT_SETTINGS)
def cli() -> None:
    """CPU inference engine for Danube3-family GGUF models."""


def _sampling_options(f):
    opts = [
        click.option("--temperature", type=float, default=0.7, show_default=True),
        click.option("--top-k", type=int, default=40, show_default=True),
        click.option("--top-p", type=float, default=0.95, show_default=True),
        click.option("--repeat-penalty", type=float, default=1.1, show_default=True),
        click.option("--max-tokens", type=int, default=256, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _params(temperature, top_k, top_p, repeat_penalty, max_tokens, seed, stop=()):
    return GenerationParams(
        temperature=temperature,
        top_k=top_k,
        top_p=top_p,
        repeat_penalty=repeat_penalty,
        max_new_tokens=max_tokens,
        seed=seed,
        stop_sequences=tuple(stop),
    )


def _load(model_path: str) -> tuple[Model, Tokenizer]:
    model, tok_data = Model.from_gguf(model_path)
    return model, Tokenizer(Vocabulary.from_tokenizer_data(tok_data))


@cli.command(name="generate")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--prompt", required=True)
@click.option("--add-bos/--no-add-bos", default=True, show_default=True)
@click.option("--stop", multiple=True, help="Stop sequence (repeatable).")
@_sampling_options
def generate_cmd(model_path, prompt, add_bos, stop, **sampling):
    """One-shot text generation from a plain prompt."""
    model, tokenizer = _load(model_path)
    params = _params(stop=stop, **sampling)
    ids = tokenizer.encode(prompt, add_bos=add_bos)
    cache = model.new_cache()
    for ev in generate(model, tokenizer, ids, cache, params):
        if isinstance(ev, TokenEvent):
            click.echo(ev.text, nl=False)
        else:
            click.echo(ev.text, nl=False)
            click.echo(f"\n[finish: {ev.reason}]", err=True)


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option(
    "--type",
    "qtype",
    required=True,
    type=click.Choice(["q8_0", "q4_0", "f16", "f32"], case_sensitive=False),
)
def quantize(in_path, out_path, qtype):
    """Re-quantize a GGUF model's weight tensors."""
    target = QuantType[qtype.upper()]
    summary = quantize_file(in_path, out_path, target)
    click.echo(summary.to_text())
    click.echo("policy: 2-D weight tensors re-encoded; 1-D tensors kept F32")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def inspect(model_path, as_json):
    """Dump metadata, tensor table, config, and parameter count."""
    g = read_gguf(model_path)
    try:
        config = read_config(g)
        n_params = count_parameters(config)
        tensors = [
            {
                "name": t.name,
                "shape": list(t.shape),
                "type": t.type_name,
                "bytes": t.nbytes,
            }
            for t in g.tensors
        ]
        if as_json:
            click.echo(
                json.dumps(
                    {
                        "metadata": {k: _meta_repr(v.python()) for k, v in g.metadata.items()},
                        "tensors": tensors,
                        "config": config.__dict__,
                        "parameter_count": n_params,
                    },
                    indent=2,
                )
            )
            return
        click.echo("== metadata ==")
        for k, v in g.metadata.items():
            click.echo(f"  {k} = {_meta_repr(v.python())}")
        click.echo("== tensors ==")
        for t in tensors:
            click.echo(
                f"  {t['name']:<28} {str(t['shape']):<20} {t['type']:<6} {t['bytes']} B"
            )
        click.echo("== config ==")
        click.echo(
            f"  layers: {config.n_layers}, hidden: {config.hidden_size}, "
            f"heads: {config.n_heads}/{config.n_kv_heads}, head size: {config.head_size}"
        )
        click.echo(
            f"  intermediate: {config.intermediate_size}, vocab: {config.vocab_size}, "
            f"context: {config.max_context}, rope theta: {config.rope_theta:g}"
        )
        click.echo(f"  tied embeddings: {config.tied_embeddings}")
        click.echo(f"parameter count: {n_params}")
    finally:
        g.close()


def _meta_repr(v):
    if isinstance(v, list) and len(v) > 8:
        return f"[{len(v)} items]"
    return v


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--window", type=int, default=evalsuite.DEFAULT_WINDOW, show_default=True)
@click.option("--report-out", type=click.Path(), help="Write JSON report here.")
def perplexity(model_path, corpus, window, report_out):
    """Windowed perplexity of a model over a plain-text corpus."""
    model, tokenizer = _load(model_path)
    text = Path(corpus).read_text(encoding="utf-8")
    report = evalsuite.perplexity(
        model, tokenizer, text, window=window, corpus_id=Path(corpus).name
    )
    click.echo(report.to_text())
    if report_out:
        Path(report_out).write_text(report.to_json(), encoding="utf-8")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--template", "user_template", default=None, help="Jinja chat template fallback.")
@_sampling_options
def chat(model_path, user_template, **sampling):
    """Interactive chat REPL (/reset clears the cache, /params shows sampling)."""
    model, tokenizer = _load(model_path)
    params = _params(**sampling)
    template = resolve_template(tokenizer, user_template)
    session = ChatSession(model, tokenizer, template, params)
    click.echo(f"loaded {model.name}; template from {template.source}. Ctrl-D exits.")
    while True:
        try:
            line = input("> ")
        except EOFError:
            click.echo("")
            return
        if not line.strip():
            continue
        if line.strip() == "/reset":
            session.reset()
            click.echo("[session reset]")
            continue
        if line.strip() == "/params":
            click.echo(str(params))
            continue
        try:
            for ev in session.submit(line):
                if isinstance(ev, TokenEvent):
                    click.echo(ev.text, nl=False)
                elif isinstance(ev, FinishEvent):
                    click.echo(ev.text, nl=False)
                    if ev.reason == "capacity":
                        click.echo("\n[context full — use /reset to start over]", err=True)
            click.echo("")
        except EngineError as e:
            click.echo(f"[error: {e}; try /reset]", err=True)


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--ctx", type=int, default=None, help="Context length override (tokens).")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--queue", type=int, default=4, show_default=True)
@click.option("--template", "user_template", default=None, help="Jinja chat template fallback.")
def serve(host, port, model_path, ctx, workers, queue, user_template):
    """Serve the chat-completions HTTP API for one model."""
    import uvicorn

    from .server import InferenceEngine, create_app

    model, tokenizer = _load(model_path)
    template = resolve_template(tokenizer, user_template)
    engine = InferenceEngine(model, tokenizer, template, max_context=ctx)
    app = create_app(engine, workers=workers, queue=queue)
    uvicorn.run(app, host=host, port=port)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--tokens", "n_tokens", type=int, default=64, show_default=True)
@click.option("--prompt-tokens", type=int, default=32, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def bench(model_path, n_tokens, prompt_tokens, as_json):
    """Measure prompt-processing and generation throughput (greedy path)."""
    model, tokenizer = _load(model_path)
    cfg = model.config
    prompt = list(range(1, min(prompt_tokens, cfg.vocab_size - 1) + 1))
    params = GenerationParams(temperature=0.0, max_new_tokens=n_tokens, repeat_penalty=1.0)

    from .runtime import forward

    cache = model.new_cache()
    t0 = time.perf_counter()
    forward(model, prompt, cache)
    prompt_time = time.perf_counter() - t0

    cache = model.new_cache()
    generated = 0
    t0 = time.perf_counter()
    for ev in generate(model, tokenizer, prompt, cache, params):
        if isinstance(ev, TokenEvent):
            generated += 1
    gen_time = time.perf_counter() - t0 - prompt_time

    peak_rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
    report = {
        "model": model.name,
        "model_bytes": Path(model_path).stat().st_size,
        "quantization": model.weight_type.value,
        "prompt_tokens": len(prompt),
        "prompt_tokens_per_s": len(prompt) / max(prompt_time, 1e-9),
        "generated_tokens": generated,
        "generation_tokens_per_s": generated / max(gen_time, 1e-9),
        "peak_rss_bytes": peak_rss,
    }
    if as_json:
        click.echo(json.dumps(report, indent=2))
    else:
        click.echo(f"model: {report['model']} ({report['quantization']}, "
                   f"{report['model_bytes'] / 1e6:.1f} MB file)")
        click.echo(f"prompt:     {report['prompt_tokens_per_s']:.1f} tok/s "
                   f"({len(prompt)} tokens)")
        click.echo(f"generation: {report['generation_tokens_per_s']:.1f} tok/s "
                   f"({generated} tokens)")
        click.echo(f"peak rss:   {peak_rss / 1e6:.1f} MB")


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except EngineError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
