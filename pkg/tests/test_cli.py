"""End-to-end command line tests.

Each test drives aram.cli.main in-process so exit codes, the stderr error
JSON contract, config precedence, and artifact bytes can be checked exactly.
"""

import json
from pathlib import Path

import pytest

from aram.cli import DEFAULTS, main
from test_bridge_client import MockBridge

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
TABLE = f"table:{FIXTURES / 'toy_table_spec.json'}"
COUNT = f"count:{FIXTURES / 'qa_corpus.txt'}"
QA = str(FIXTURES / "qa_fixture.jsonl")

# Small decode so CLI tests stay fast; the toy table spec covers 4 positions.
SIZE = ["--length", "4", "--steps", "4"]
QUERY = "which call sign follows?"
CONTEXT = ["--context", "Passage about call signs."]


def invoke(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def stderr_error(err: str) -> dict:
    payload = json.loads(err)
    assert set(payload) == {"error"}
    assert set(payload["error"]) == {"kind", "message"}
    return payload["error"]


def stdout_fields(out: str) -> dict:
    return dict(line.split(": ", 1) for line in out.strip().splitlines() if ": " in line)


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------


class TestDecode:
    def test_summary_and_trace(self, capsys, tmp_path):
        out = tmp_path / "trace.jsonl"
        rc, stdout, stderr = invoke(
            capsys, "decode", QUERY, *CONTEXT, "--backend", TABLE, *SIZE, "--out", str(out)
        )
        assert rc == 0
        assert stderr == ""
        fields = stdout_fields(stdout)
        assert fields["steps_executed"] == "4"
        assert fields["nfe_total"] == "8"  # cond + prior request per step
        assert fields["nfe_per_step"] == "2"
        assert fields["logit_kind"] == "raw"
        assert len(fields["run_id"]) == 16
        assert fields["trace"] == str(out)
        assert fields["answer"].split()  # non-empty decoded text
        # One trace row per still-masked position per step: 4+3+2+1.
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 10
        assert all(row["run_id"] == fields["run_id"] for row in rows)

    def test_no_guidance_single_nfe(self, capsys, tmp_path):
        rc, stdout, _ = invoke(
            capsys, "decode", QUERY, *CONTEXT, "--backend", TABLE, *SIZE,
            "--policy", "none", "--out", str(tmp_path / "t.jsonl"),
        )
        assert rc == 0
        fields = stdout_fields(stdout)
        assert fields["nfe_per_step"] == "1"
        assert fields["nfe_total"] == "4"

    def test_rerun_is_byte_identical(self, capsys, tmp_path):
        argv = ["decode", QUERY, *CONTEXT, "--backend", TABLE, *SIZE]
        outs, logs = [], []
        for name in ("a.jsonl", "b.jsonl"):
            path = tmp_path / name
            rc, stdout, _ = invoke(capsys, *argv, "--out", str(path))
            assert rc == 0
            outs.append(path.read_bytes())
            logs.append([l for l in stdout.splitlines() if not l.startswith("trace:")])
        assert outs[0] == outs[1]
        assert logs[0] == logs[1]

    def test_run_id_tracks_config(self, capsys, tmp_path):
        ids = []
        for beta in ("0.1", "0.2"):
            _, stdout, _ = invoke(
                capsys, "decode", QUERY, *CONTEXT, "--backend", TABLE, *SIZE,
                "--beta", beta, "--out", str(tmp_path / f"{beta}.jsonl"),
            )
            ids.append(stdout_fields(stdout)["run_id"])
        assert ids[0] != ids[1]

    def test_missing_backend_file_is_config_error(self, capsys, tmp_path):
        rc, _, stderr = invoke(
            capsys, "decode", QUERY, "--backend", f"table:{tmp_path / 'missing.json'}"
        )
        assert rc == 2
        error = stderr_error(stderr)
        assert error["kind"] == "config"
        assert "missing.json" in error["message"]

    def test_no_backend_selected(self, capsys):
        rc, _, stderr = invoke(capsys, "decode", QUERY)
        assert rc == 2
        error = stderr_error(stderr)
        assert error["kind"] == "config"
        assert "--backend" in error["message"]

    def test_unknown_policy_rejected_by_parser(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["decode", QUERY, "--backend", TABLE, "--policy", "bogus"])
        assert exc.value.code == 2


# ---------------------------------------------------------------------------
# config file resolution
# ---------------------------------------------------------------------------


class TestConfigFile:
    def trace_lambdas(self, path: Path) -> set[float]:
        return {json.loads(line)["lambda"] for line in path.read_text().splitlines()}

    def test_flag_beats_config_beats_default(self, capsys, tmp_path):
        # StaticCfg pins lambda at lambda_max, making precedence observable
        # in the trace. Default lambda_max is 1.0.
        cfg = tmp_path / "run.toml"
        cfg.write_text('policy = "static"\nlambda_max = 0.25\n')
        base = ["decode", QUERY, *CONTEXT, "--backend", TABLE, *SIZE, "--config", str(cfg)]

        out = tmp_path / "from_config.jsonl"
        assert invoke(capsys, *base, "--out", str(out))[0] == 0
        assert self.trace_lambdas(out) == {0.25}

        out = tmp_path / "from_flag.jsonl"
        assert invoke(capsys, *base, "--lambda-max", "0.5", "--out", str(out))[0] == 0
        assert self.trace_lambdas(out) == {0.5}

        out = tmp_path / "from_default.jsonl"
        rc, _, _ = invoke(
            capsys, "decode", QUERY, *CONTEXT, "--backend", TABLE, *SIZE,
            "--policy", "static", "--out", str(out),
        )
        assert rc == 0
        assert self.trace_lambdas(out) == {DEFAULTS["lambda_max"]} == {1.0}

    def test_unknown_config_key_rejected(self, capsys, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('lamda_max = 0.5\n')
        rc, _, stderr = invoke(
            capsys, "decode", QUERY, "--backend", TABLE, "--config", str(cfg)
        )
        assert rc == 2
        error = stderr_error(stderr)
        assert error["kind"] == "config"
        assert "lamda_max" in error["message"]

    def test_unreadable_config_rejected(self, capsys, tmp_path):
        rc, _, stderr = invoke(
            capsys, "decode", QUERY, "--backend", TABLE,
            "--config", str(tmp_path / "absent.toml"),
        )
        assert rc == 2
        assert stderr_error(stderr)["kind"] == "config"

    def test_backend_from_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(f'backend = "{TABLE}"\nlength = 4\nsteps = 4\n')
        rc, stdout, _ = invoke(
            capsys, "decode", QUERY, *CONTEXT,
            "--config", str(cfg), "--out", str(tmp_path / "t.jsonl"),
        )
        assert rc == 0
        assert stdout_fields(stdout)["steps_executed"] == "4"


# ---------------------------------------------------------------------------
# bridge backend wiring
# ---------------------------------------------------------------------------


class TestBridgeWiring:
    def test_env_fallback_for_bridge_url(self, capsys, tmp_path, monkeypatch, toy_spec):
        mock = MockBridge(toy_spec)
        try:
            monkeypatch.setenv("ARAM_BRIDGE_URL", mock.url)
            out = tmp_path / "bridge.jsonl"
            rc, stdout, _ = invoke(
                capsys, "decode", QUERY, *CONTEXT, "--backend", "bridge", *SIZE,
                "--out", str(out),
            )
        finally:
            mock.close()
        assert rc == 0
        fields = stdout_fields(stdout)
        assert fields["logit_kind"] == "raw"
        assert fields["nfe_per_step"] == "2"
        assert len(out.read_text().splitlines()) == 10

    def test_flag_overrides_env(self, capsys, monkeypatch, tmp_path, toy_spec):
        mock = MockBridge(toy_spec)
        try:
            monkeypatch.setenv("ARAM_BRIDGE_URL", "http://127.0.0.1:9")  # closed port
            rc, _, _ = invoke(
                capsys, "decode", QUERY, *CONTEXT, "--backend", "bridge", *SIZE,
                "--bridge-url", mock.url, "--out", str(tmp_path / "t.jsonl"),
            )
        finally:
            mock.close()
        assert rc == 0

    def test_bridge_without_url_is_config_error(self, capsys, monkeypatch):
        monkeypatch.delenv("ARAM_BRIDGE_URL", raising=False)
        rc, _, stderr = invoke(capsys, "decode", QUERY, "--backend", "bridge")
        assert rc == 2
        error = stderr_error(stderr)
        assert error["kind"] == "config"
        assert "ARAM_BRIDGE_URL" in error["message"]

    def test_unreachable_bridge_is_transport_error(self, capsys, monkeypatch):
        monkeypatch.delenv("ARAM_BRIDGE_URL", raising=False)
        rc, _, stderr = invoke(
            capsys, "decode", QUERY, "--backend", "bridge",
            "--bridge-url", "http://127.0.0.1:9",
        )
        assert rc == 2
        assert stderr_error(stderr)["kind"] == "transport"


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


class TestEval:
    def test_bundled_fixture_report(self, capsys, tmp_path):
        out = tmp_path / "report.json"
        rc, stdout, stderr = invoke(
            capsys, "eval", "--fixtures", QA, "--backend", COUNT,
            "--methods", "aram,static,none", *SIZE, "--out", str(out),
        )
        assert rc == 0
        assert stderr == ""
        report = json.loads(out.read_text())
        assert set(report["methods"]) == {"aram", "static", "none"}
        assert report["baseline"]["failures"] == 0
        lines = stdout.splitlines()
        assert lines[0] == f"examples: {report['n_examples']}"
        assert lines[1].split() == ["method", "n", "fail", "em", "f1", "nfe/ex"]
        assert [row.split()[0] for row in lines[2:6]] == ["baseline", "aram", "static", "none"]

    def test_rerun_is_byte_identical(self, capsys, tmp_path):
        blobs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            rc, _, _ = invoke(
                capsys, "eval", "--fixtures", QA, "--backend", COUNT,
                "--methods", "aram,none", *SIZE, "--out", str(out),
            )
            assert rc == 0
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_missing_fixtures_flag(self, capsys):
        rc, _, stderr = invoke(capsys, "eval", "--backend", COUNT)
        assert rc == 2
        assert stderr_error(stderr)["kind"] == "config"

    def test_unreadable_fixture_file(self, capsys, tmp_path):
        rc, _, stderr = invoke(
            capsys, "eval", "--fixtures", str(tmp_path / "gone.jsonl"), "--backend", COUNT
        )
        assert rc == 2
        assert stderr_error(stderr)["kind"] == "config"

    def test_total_failure_exits_one(self, capsys, tmp_path, toy_spec):
        # A bridge that rejects every logits call fails all examples for the
        # baseline and every method; that totals to exit code 1, not 2.
        mock = MockBridge(toy_spec)
        mock.reject_400 = "model refused"
        try:
            rc, stdout, _ = invoke(
                capsys, "eval", "--fixtures", QA, "--backend", "bridge",
                "--bridge-url", mock.url, "--methods", "aram", *SIZE,
                "--out", str(tmp_path / "r.json"),
            )
        finally:
            mock.close()
        assert rc == 1
        fields = {row.split()[0]: row.split() for row in stdout.splitlines()[2:]}
        assert fields["baseline"][1] == "0"  # n
        assert fields["baseline"][2] == "20"  # failures


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


class TestVerify:
    def test_property_subset(self, capsys):
        rc, stdout, stderr = invoke(capsys, "verify", "--properties", "dv-bound")
        assert rc == 0
        assert stderr == ""
        lines = stdout.strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("PASS dv-bound")
        assert "max_residual=" in lines[0] and "tol=" in lines[0]
        assert lines[1] == "all 1 properties passed"

    def test_unknown_property(self, capsys):
        rc, _, stderr = invoke(capsys, "verify", "--properties", "dv-bound,bogus")
        assert rc == 2
        error = stderr_error(stderr)
        assert error["kind"] == "config"
        assert "bogus" in error["message"]

    def test_seed_reproducible_residuals(self, capsys):
        def residuals(stdout: str) -> list[str]:
            return [
                token
                for line in stdout.splitlines()
                for token in line.split()
                if token.startswith("max_residual=")
            ]

        runs = [
            invoke(capsys, "verify", "--properties", "lambda-star,tilting-closure",
                   "--seed", "7")
            for _ in range(2)
        ]
        assert [rc for rc, _, _ in runs] == [0, 0]
        first, second = (residuals(stdout) for _, stdout, _ in runs)
        assert first == second
        assert len(first) == 2


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


GOLDEN_TRACE = str(FIXTURES / "golden_trace.jsonl")


class TestAnalyze:
    def test_trajectory_mode(self, capsys, tmp_path):
        groups = tmp_path / "groups.json"
        groups.write_text(json.dumps({"golden-toy-run": "reliable"}))
        rc, stdout, _ = invoke(
            capsys, "analyze", "--mode", "trajectory", "--traces", GOLDEN_TRACE,
            "--groups", str(groups), "--out", str(tmp_path / "a"),
        )
        assert rc == 0
        csv_path = tmp_path / "a" / "trajectory.csv"
        assert f"wrote {csv_path}" in stdout
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "group,step,mean_lambda,std_lambda,n"
        assert all(line.startswith("reliable,") for line in lines[1:])
        assert len(lines) == 5  # header + one row per step

    def test_heatmap_mode_matches_golden(self, capsys, tmp_path):
        rc, _, _ = invoke(
            capsys, "analyze", "--mode", "heatmap", "--traces", GOLDEN_TRACE,
            "--out", str(tmp_path),
        )
        assert rc == 0
        produced = (tmp_path / "heatmap.json").read_bytes()
        assert produced == (FIXTURES / "golden_heatmap.json").read_bytes()

    def test_heatmap_needs_exactly_one_trace(self, capsys, tmp_path):
        rc, _, stderr = invoke(
            capsys, "analyze", "--mode", "heatmap", "--traces", GOLDEN_TRACE,
            GOLDEN_TRACE, "--out", str(tmp_path),
        )
        assert rc == 2
        assert stderr_error(stderr)["kind"] == "config"

    def test_proxy_mode(self, capsys, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({
            "proxies": {
                "cond_entropy": {"a": GOLDEN_TRACE, "b": GOLDEN_TRACE},
                "prior_entropy": {"a": GOLDEN_TRACE, "b": GOLDEN_TRACE},
            },
            "groups": {"a": "reliable", "b": "conflicting"},
        }))
        rc, stdout, _ = invoke(
            capsys, "analyze", "--mode", "proxy", "--manifest", str(manifest),
            "--out", str(tmp_path / "p"),
        )
        assert rc == 0
        comparison = (tmp_path / "p" / "proxy_comparison.csv").read_text().splitlines()
        separation = (tmp_path / "p" / "proxy_separation.csv").read_text().splitlines()
        assert comparison[0] == "proxy,group,step,mean_noise,mean_lambda,n"
        assert {line.split(",")[1] for line in comparison[1:]} == {"reliable", "conflicting"}
        assert separation[0] == "proxy,group_a,group_b,lambda_mean_diff,pooled_se,separation_ratio"
        assert {line.split(",")[0] for line in separation[1:]} == {"cond_entropy", "prior_entropy"}
        assert "wrote" in stdout

    def test_proxy_mode_needs_manifest(self, capsys, tmp_path):
        rc, _, stderr = invoke(capsys, "analyze", "--mode", "proxy", "--out", str(tmp_path))
        assert rc == 2
        assert stderr_error(stderr)["kind"] == "config"

    def test_malformed_trace_names_line(self, capsys, tmp_path):
        bad = tmp_path / "bad.jsonl"
        good_line = Path(GOLDEN_TRACE).read_text().splitlines()[0]
        bad.write_text(good_line + "\nnot json\n")
        rc, _, stderr = invoke(
            capsys, "analyze", "--mode", "heatmap", "--traces", str(bad),
            "--out", str(tmp_path),
        )
        assert rc == 2
        error = stderr_error(stderr)
        assert error["kind"] == "trace"
        assert "line 2" in error["message"]

    def test_missing_traces_flag(self, capsys, tmp_path):
        rc, _, stderr = invoke(
            capsys, "analyze", "--mode", "trajectory", "--out", str(tmp_path)
        )
        assert rc == 2
        assert stderr_error(stderr)["kind"] == "config"
