"""Command-line interface: exit codes, output contracts, reproducibility."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from danube.cli import cli
from danube.config import count_parameters
from danube.gguf import write_model_gguf
from danube.quant import QuantType

from helpers import QUANT_CONFIG, build_test_vocab, random_weights

SUBCOMMANDS = ("generate", "quantize", "inspect", "perplexity", "chat", "serve", "bench")


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "model.gguf"
    write_model_gguf(
        QUANT_CONFIG,
        random_weights(QUANT_CONFIG, seed=21),
        build_test_vocab().to_tokenizer_data(),
        path,
        QuantType.F32,
    )
    return str(path)


@pytest.fixture()
def runner():
    return CliRunner()


class TestHelp:
    def test_group_help(self, runner):
        r = runner.invoke(cli, ["--help"])
        assert r.exit_code == 0
        for sub in SUBCOMMANDS:
            assert sub in r.output

    @pytest.mark.parametrize("sub", SUBCOMMANDS)
    def test_subcommand_help(self, runner, sub):
        r = runner.invoke(cli, [sub, "--help"])
        assert r.exit_code == 0
        assert "--help" in r.output or "Usage" in r.output


class TestQuantize:
    def test_f32_to_q8_0(self, runner, model_path, tmp_path):
        out = str(tmp_path / "q8.gguf")
        r = runner.invoke(cli, ["quantize", "--in", model_path, "--out", out, "--type", "q8_0"])
        assert r.exit_code == 0, r.output
        assert "size ratio" in r.output
        # F32 -> Q8_0 payload shrinks ~32/8.5; metadata overhead drags the
        # toy file below that
        import os

        ratio = os.path.getsize(model_path) / os.path.getsize(out)
        assert 2.0 < ratio < 3.8

    def test_quantized_model_reloads_and_runs(self, runner, model_path, tmp_path):
        out = str(tmp_path / "q4.gguf")
        assert runner.invoke(
            cli, ["quantize", "--in", model_path, "--out", out, "--type", "q4_0"]
        ).exit_code == 0
        from danube.runtime import Model, forward

        model, _ = Model.from_gguf(out)
        logits = forward(model, [1, 2, 3], model.new_cache())
        assert np.all(np.isfinite(logits))

    def test_requantize_idempotent(self, runner, model_path, tmp_path):
        a = tmp_path / "a.gguf"
        b = tmp_path / "b.gguf"
        for out in (a, b):
            src = model_path if out is a else str(a)
            r = runner.invoke(cli, ["quantize", "--in", src, "--out", str(out), "--type", "q8_0"])
            assert r.exit_code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_type_exits_2(self, runner, model_path, tmp_path):
        r = runner.invoke(
            cli,
            ["quantize", "--in", model_path, "--out", str(tmp_path / "x.gguf"), "--type", "q9_9"],
        )
        assert r.exit_code == 2

    def test_missing_input_exits_2(self, runner, tmp_path):
        r = runner.invoke(
            cli,
            ["quantize", "--in", str(tmp_path / "none.gguf"), "--out", "o.gguf", "--type", "q8_0"],
        )
        assert r.exit_code == 2


class TestInspect:
    def test_text_output(self, runner, model_path):
        r = runner.invoke(cli, ["inspect", "--model", model_path])
        assert r.exit_code == 0
        assert f"parameter count: {count_parameters(QUANT_CONFIG)}" in r.output
        assert "token_embd.weight" in r.output
        assert "general.architecture" in r.output

    def test_json_output(self, runner, model_path):
        r = runner.invoke(cli, ["inspect", "--model", model_path, "--json"])
        assert r.exit_code == 0
        doc = json.loads(r.output)
        assert doc["parameter_count"] == count_parameters(QUANT_CONFIG)
        assert doc["config"]["n_layers"] == QUANT_CONFIG.n_layers
        assert any(t["name"] == "output.weight" for t in doc["tensors"])

    def test_corrupt_file_fails_cleanly(self, runner, model_path, tmp_path):
        bad = tmp_path / "bad.gguf"
        bad.write_bytes(open(model_path, "rb").read()[:100])
        r = runner.invoke(cli, ["inspect", "--model", str(bad)])
        assert r.exit_code != 0
        from danube.errors import EngineError

        assert isinstance(r.exception, EngineError) or r.exit_code == 1


class TestGenerate:
    def test_reproducible_with_seed(self, runner, model_path):
        args = [
            "generate", "--model", model_path, "--prompt", "the quick",
            "--temperature", "0", "--max-tokens", "8", "--seed", "7",
        ]
        a = runner.invoke(cli, args)
        b = runner.invoke(cli, args)
        assert a.exit_code == 0, a.output
        assert a.output == b.output

    def test_stop_option(self, runner, model_path):
        r = runner.invoke(
            cli,
            [
                "generate", "--model", model_path, "--prompt", "x",
                "--temperature", "0", "--max-tokens", "4", "--stop", "zzzz",
            ],
        )
        assert r.exit_code == 0


class TestPerplexity:
    def test_report_written(self, runner, model_path, tmp_path):
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("the quick brown fox jumps over the lazy dog " * 30)
        out = tmp_path / "report.json"
        r = runner.invoke(
            cli,
            [
                "perplexity", "--model", model_path, "--corpus", str(corpus),
                "--window", "32", "--report-out", str(out),
            ],
        )
        assert r.exit_code == 0, r.output
        assert "perplexity:" in r.output
        doc = json.loads(out.read_text())
        assert doc["window"] == 32 and doc["perplexity"] > 0


class TestBench:
    def test_json_report(self, runner, model_path):
        r = runner.invoke(
            cli,
            ["bench", "--model", model_path, "--tokens", "8", "--prompt-tokens", "8", "--json"],
        )
        assert r.exit_code == 0, r.output
        doc = json.loads(r.output)
        for key in (
            "prompt_tokens_per_s",
            "generation_tokens_per_s",
            "peak_rss_bytes",
            "model_bytes",
            "quantization",
        ):
            assert key in doc
        assert doc["generation_tokens_per_s"] > 0
        assert doc["peak_rss_bytes"] > 0


class TestChat:
    def test_repl_smoke(self, runner, model_path):
        r = runner.invoke(
            cli,
            ["chat", "--model", model_path, "--temperature", "0", "--max-tokens", "4"],
            input="hi\n/params\n/reset\n",
        )
        assert r.exit_code == 0, r.output
        assert "[session reset]" in r.output
