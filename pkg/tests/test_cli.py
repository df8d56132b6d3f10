"""Command line coverage: argument handling, the scenario tools, trace replay
with metrics output, and subprocess smoke tests for the two server modes."""

import io
import json
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest
import yaml

from tollvision.cli import main
from tollvision.store import RemoteStoreClient

from test_transactions import make_txn

SPEC_DOC = {
    "seed": 11,
    "target_vehicles": 4,
    "lanes": 2,
    "max_concurrent": 2,
    "arrival_rate": 0.1,
}


def write_spec(path: Path, **overrides) -> Path:
    doc = dict(SPEC_DOC)
    doc.update(overrides)
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def generate_trace(tmp_path: Path, name: str = "a", **overrides) -> tuple[Path, Path]:
    spec = write_spec(tmp_path / f"spec_{name}.yaml", **overrides)
    trace = tmp_path / f"trace_{name}.jsonl"
    truth = tmp_path / f"truth_{name}.json"
    code = main(["sim", "generate", "--spec", str(spec), "--out", str(trace), "--truth", str(truth)])
    assert code == 0
    return trace, truth


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class TestArgumentErrors:
    def test_no_command_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc_info:
            main([])
        assert exc_info.value.code == 2

    def test_unknown_command_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["frobnicate"])
        assert exc_info.value.code == 2

    def test_run_requires_a_source(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["run"])
        assert exc_info.value.code == 2

    def test_trace_and_live_are_mutually_exclusive(self, tmp_path):
        with pytest.raises(SystemExit) as exc_info:
            main(["run", "--trace", str(tmp_path / "t"), "--live", "-"])
        assert exc_info.value.code == 2

    def test_missing_spec_file_exits_one(self, tmp_path, capsys):
        code = main(
            [
                "sim",
                "generate",
                "--spec",
                str(tmp_path / "nope.yaml"),
                "--out",
                str(tmp_path / "t.jsonl"),
                "--truth",
                str(tmp_path / "g.json"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_trace_file_exits_one(self, tmp_path, capsys):
        code = main(["run", "--trace", str(tmp_path / "absent.jsonl")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_invalid_spec_value_exits_one(self, tmp_path, capsys):
        spec = write_spec(tmp_path / "bad.yaml", target_vehicles=0)
        code = main(
            [
                "sim",
                "generate",
                "--spec",
                str(spec),
                "--out",
                str(tmp_path / "t.jsonl"),
                "--truth",
                str(tmp_path / "g.json"),
            ]
        )
        assert code == 1
        assert "target_vehicles" in capsys.readouterr().err


class TestSimGenerate:
    def test_writes_trace_and_truth(self, tmp_path, capsys):
        trace, truth = generate_trace(tmp_path)
        out = capsys.readouterr().out
        assert trace.exists() and truth.exists()
        assert "trace_sha256=" in out
        assert "vehicles=4" in out

    def test_same_spec_gives_identical_artifacts(self, tmp_path):
        trace_a, truth_a = generate_trace(tmp_path, "a")
        trace_b, truth_b = generate_trace(tmp_path, "b")
        assert trace_a.read_bytes() == trace_b.read_bytes()
        assert truth_a.read_bytes() == truth_b.read_bytes()

    def test_json_spec_is_accepted(self, tmp_path):
        # YAML is a superset of JSON, so a .json spec needs no special casing
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(SPEC_DOC), encoding="utf-8")
        trace = tmp_path / "t.jsonl"
        code = main(
            ["sim", "generate", "--spec", str(spec), "--out", str(trace), "--truth", str(tmp_path / "g.json")]
        )
        assert code == 0
        reference, _ = generate_trace(tmp_path)
        assert trace.read_bytes() == reference.read_bytes()


class TestSimEvaluate:
    def test_noise_free_report_is_perfect(self, tmp_path, capsys):
        trace, truth = generate_trace(tmp_path)
        report_path = tmp_path / "report.json"
        code = main(
            ["sim", "evaluate", "--trace-output", str(trace), "--truth", str(truth), "--report", str(report_path)]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "mAP=1.0000" in out
        assert "plate_acc=1.0000" in out
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert report["plate_accuracy"] == 1.0
        assert report["axle_accuracy"] == 1.0
        assert report["id_switches"] == 0

    def test_wrong_truth_for_trace_exits_one(self, tmp_path, capsys):
        trace, _ = generate_trace(tmp_path, "a")
        _, other_truth = generate_trace(tmp_path, "b", seed=99)
        code = main(
            [
                "sim",
                "evaluate",
                "--trace-output",
                str(trace),
                "--truth",
                str(other_truth),
                "--report",
                str(tmp_path / "r.json"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestRunReplay:
    def test_metrics_out_written(self, tmp_path, capsys):
        trace, truth = generate_trace(tmp_path)
        metrics_path = tmp_path / "metrics.json"
        code = main(["run", "--trace", str(trace), "--metrics-out", str(metrics_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "transactions=4" in out

        metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
        truth_doc = json.loads(truth.read_text(encoding="utf-8"))
        assert metrics["trace_sha256"] == truth_doc["trace_sha256"]
        assert metrics["frames_processed"] == len(trace.read_text(encoding="utf-8").splitlines())
        assert len(metrics["transactions"]) == 4
        assert all(t["plate_status"] == "Locked" for t in metrics["transactions"])

    def test_batch_size_does_not_change_transactions(self, tmp_path):
        trace, _ = generate_trace(tmp_path)
        outputs = []
        for batch_size in (1, 7):
            metrics_path = tmp_path / f"metrics_{batch_size}.json"
            code = main(
                ["run", "--trace", str(trace), "--batch-size", str(batch_size), "--metrics-out", str(metrics_path)]
            )
            assert code == 0
            transactions = json.loads(metrics_path.read_text(encoding="utf-8"))["transactions"]
            for txn in transactions:
                txn.pop("created_at")  # wall clock; batching must not affect the rest
            outputs.append(transactions)
        assert outputs[0] == outputs[1]

    def test_live_stdin_matches_trace_replay(self, tmp_path, monkeypatch):
        trace, _ = generate_trace(tmp_path)
        replay_metrics = tmp_path / "replay.json"
        assert main(["run", "--trace", str(trace), "--metrics-out", str(replay_metrics)]) == 0

        monkeypatch.setattr(sys, "stdin", io.StringIO(trace.read_text(encoding="utf-8")))
        live_metrics = tmp_path / "live.json"
        assert main(["run", "--live", "-", "--metrics-out", str(live_metrics)]) == 0

        replayed = json.loads(replay_metrics.read_text(encoding="utf-8"))["transactions"]
        lived = json.loads(live_metrics.read_text(encoding="utf-8"))["transactions"]
        # created_at comes from the wall clock; everything observable must agree
        for txn in replayed + lived:
            txn.pop("created_at")
        assert lived == replayed

    def test_config_file_drives_the_rate_table(self, tmp_path):
        trace, _ = generate_trace(tmp_path)
        config_path = tmp_path / "config.yaml"
        config_path.write_text(
            yaml.safe_dump(
                {
                    "pipeline": {
                        "rate_table": {
                            "Class-2": 333,
                            "Class-3": 400,
                            "Class-4": 600,
                            "Class-5": 900,
                            "Unclassified": 100,
                        }
                    }
                }
            ),
            encoding="utf-8",
        )
        metrics_path = tmp_path / "metrics.json"
        code = main(
            ["run", "--trace", str(trace), "--config", str(config_path), "--metrics-out", str(metrics_path)]
        )
        assert code == 0
        metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
        two_axle = [t for t in metrics["transactions"] if t["vehicle_class"] == "Class-2"]
        assert two_axle and all(t["toll_amount"] == 333 for t in two_axle)


class TestStoreServeSubprocess:
    def test_serve_answers_the_line_protocol(self, tmp_path):
        port = free_port()
        address = f"127.0.0.1:{port}"
        proc = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "tollvision.cli",
                "store",
                "serve",
                "--bind",
                address,
                "--archive",
                str(tmp_path / "archive.jsonl"),
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        try:
            client = _connect_with_retry(address)
            try:
                txn = make_txn()
                client.put(txn)
                assert client.get(txn.transaction_id) == txn
            finally:
                client.close()
        finally:
            proc.terminate()
            proc.wait(timeout=10)


def _connect_with_retry(address: str, attempts: int = 100) -> RemoteStoreClient:
    last_error: Exception | None = None
    for _ in range(attempts):
        try:
            client = RemoteStoreClient(address)
            if client.ping():
                return client
        except OSError as exc:
            last_error = exc
        time.sleep(0.05)
    raise AssertionError(f"store never came up on {address}: {last_error}")


class TestGatewaySubprocess:
    def test_run_serves_the_gateway_while_replaying(self, tmp_path):
        trace, _ = generate_trace(tmp_path)
        port = free_port()
        metrics_path = tmp_path / "metrics.json"
        proc = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "tollvision.cli",
                "run",
                "--trace",
                str(trace),
                "--gateway-bind",
                f"127.0.0.1:{port}",
                "--pace",
                "2",
                "--hold",
                "4",
                "--metrics-out",
                str(metrics_path),
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        try:
            stats = _get_json_with_retry(f"http://127.0.0.1:{port}/stats")
            assert "transactions_today" in stats

            stdout, stderr = proc.communicate(timeout=60)
            assert proc.returncode == 0, stderr.decode()
            assert b"transactions=4" in stdout

            window = _get_json_with_retry(f"http://127.0.0.1:{port}/transactions?window=10", attempts=1, expect_down=True)
            assert window is None  # server is gone once the run ends

            metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
            assert len(metrics["transactions"]) == 4
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait(timeout=10)


def _get_json_with_retry(url: str, attempts: int = 200, expect_down: bool = False):
    last_error: Exception | None = None
    for _ in range(attempts):
        try:
            with urllib.request.urlopen(url, timeout=2) as response:
                return json.loads(response.read().decode("utf-8"))
        except OSError as exc:
            last_error = exc
            time.sleep(0.05)
    if expect_down:
        return None
    raise AssertionError(f"no response from {url}: {last_error}")
