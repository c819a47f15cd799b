import json
import shutil
import subprocess
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from click.testing import CliRunner

from segshap.cli import cli
from segshap.tasks import run_artifacts

from conftest import FIXTURES

TASK_SPEC = {
    "conllu_text": (FIXTURES / "finqa_01.conllu").read_text(),
    "template": "Q: {input}",
    "evaluators": [{"operator": "CONTAIN", "argument": "yes"}],
}


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def task_file(tmp_path):
    path = tmp_path / "task.json"
    path.write_text(json.dumps(TASK_SPEC), encoding="utf-8")
    return path


def test_segment_prints_tree(runner):
    result = runner.invoke(cli, ["segment", str(FIXTURES / "medqa_01.conllu")])
    assert result.exit_code == 0, result.output
    assert "# segments=" in result.output
    assert "valid=24" in result.output
    assert "* [0]" in result.output    # root marker


def test_segment_custom_rules(runner, tmp_path):
    rules = tmp_path / "rules.txt"
    rules.write_text("default = unremovable\nadvmod = removable\n")
    result = runner.invoke(cli, ["segment", str(FIXTURES / "medqa_01.conllu"),
                                 "--rules", str(rules)])
    assert result.exit_code == 0, result.output


def test_generate_enumerates_document(runner):
    result = runner.invoke(cli, ["generate", str(FIXTURES / "medqa_01.conllu")])
    assert result.exit_code == 0, result.output
    rows = [json.loads(line) for line in result.output.splitlines()]
    assert len(rows) == 24
    assert [r["id"] for r in rows] == list(range(24))
    m = len(rows[0]["bits"])
    assert "1" * m in {r["bits"] for r in rows}
    assert all(set(r["bits"]) <= {"0", "1"} for r in rows)
    assert len({r["text"] for r in rows}) == 24


def test_generate_to_file_matches_stdout(runner, tmp_path):
    out = tmp_path / "cfs.jsonl"
    to_file = runner.invoke(cli, ["generate", str(FIXTURES / "finqa_02.conllu"),
                                  "-o", str(out)])
    assert to_file.exit_code == 0
    to_stdout = runner.invoke(cli, ["generate", str(FIXTURES / "finqa_02.conllu")])
    assert out.read_text(encoding="utf-8") == to_stdout.output


def test_generate_sampling_is_seeded(runner):
    args = ["generate", str(FIXTURES / "billsum_01.conllu"),
            "--cap", "10", "--sample", "12", "--seed", "3"]
    first = runner.invoke(cli, args)
    second = runner.invoke(cli, args)
    assert first.exit_code == 0
    assert first.output == second.output
    assert len(first.output.splitlines()) == 12


def test_config_file_supplies_defaults(runner, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"generate": {"cap": 2, "sample": 3}}))
    conllu = str(FIXTURES / "medqa_01.conllu")

    sampled = runner.invoke(cli, ["--config", str(config), "generate", conllu])
    assert sampled.exit_code == 0, sampled.output
    assert len(sampled.output.splitlines()) == 3    # cap 2 forces sampling

    explicit = runner.invoke(cli, ["--config", str(config), "generate", conllu,
                                   "--cap", "100"])
    assert len(explicit.output.splitlines()) == 24    # flag beats config


def test_run_with_stub(runner, task_file, tmp_path):
    out_dir = tmp_path / "run1"
    result = runner.invoke(cli, [
        "run", "--task", str(task_file), "--out", str(out_dir),
        "--stub-response", "yes", "--n", "3"])
    assert result.exit_code == 0, result.output

    status = json.loads((out_dir / "status.json").read_text())
    assert status["state"] == "done"
    cfs = (out_dir / "counterfactuals.jsonl").read_text().splitlines()
    assert len(cfs) == 5
    outcomes = [json.loads(l) for l in
                (out_dir / "outcomes-0.jsonl").read_text().splitlines()]
    assert all(o["outcome"] == 1.0 for o in outcomes)
    assert all(o["n_effective"] == 3 for o in outcomes)
    shap = json.loads((out_dir / "shap-0.json").read_text())
    assert len(shap["phi"]) == 3


def test_run_artifacts_reproducible(runner, task_file, tmp_path):
    def run_into(name):
        out_dir = tmp_path / name
        result = runner.invoke(cli, [
            "run", "--task", str(task_file), "--out", str(out_dir),
            "--stub-response", "maybe yes", "--seed", "9",
            "--cap", "3", "--sample", "4"])
        assert result.exit_code == 0, result.output
        return {p.name: p.read_bytes() for p in run_artifacts(out_dir)}

    assert run_into("a") == run_into("b")


def test_attribute_recomputes_stored_result(runner, task_file, tmp_path):
    out_dir = tmp_path / "run"
    assert runner.invoke(cli, [
        "run", "--task", str(task_file), "--out", str(out_dir),
        "--stub-response", "yes"]).exit_code == 0
    result = runner.invoke(cli, ["attribute", str(out_dir)])
    assert result.exit_code == 0, result.output
    assert result.output == (out_dir / "shap-0.json").read_text()


class _CleanChecker(BaseHTTPRequestHandler):
    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        body = json.dumps({"matches": []}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def clean_checker_url():
    server = HTTPServer(("127.0.0.1", 0), _CleanChecker)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_bench_command(runner, tmp_path, clean_checker_url):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for name in ("finqa_01.conllu", "tinytb_01.conllu"):
        shutil.copy(FIXTURES / name, corpus / name)
    out_dir = tmp_path / "report"

    result = runner.invoke(cli, [
        "bench", str(corpus), "--checker-url", clean_checker_url,
        "--out", str(out_dir), "--workers", "4"])
    assert result.exit_code == 0, result.output
    assert "| Grammatical rate" in result.output
    assert "100.0%" in result.output

    report = json.loads((out_dir / "report.json").read_text())
    assert report["sentences"] == 2
    assert report["failures"] == 0
    assert report["grammatical_rate"] == 1.0
    assert (out_dir / "report.md").exists()


def test_usage_error_exits_2():
    proc = subprocess.run(
        [sys.executable, "-m", "segshap.cli", "segment", "/no/such/file.conllu"],
        capture_output=True, text=True)
    assert proc.returncode == 2
    assert "file.conllu" in proc.stderr


def test_runtime_error_exits_1(tmp_path):
    bad_task = tmp_path / "task.json"
    bad_task.write_text(json.dumps({
        "conllu_text": "not\tconllu",
        "template": "Q: {input}",
        "evaluators": [{"operator": "CONTAIN", "argument": "x"}]}))
    proc = subprocess.run(
        [sys.executable, "-m", "segshap.cli", "run", "--task", str(bad_task),
         "--out", str(tmp_path / "out"), "--stub-response", "y"],
        capture_output=True, text=True)
    assert proc.returncode == 1
    assert "error" in proc.stderr.lower()
