import json
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

from stezsim.cli import main

LIFECYCLE = str(Path(__file__).parent.parent / "scripts" / "scenarios" / "lifecycle.json")


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_lifecycle(tmp_path, capsys):
    log = tmp_path / "events.jsonl"
    code, out, _ = run_cli(capsys, "run", "--scenario", LIFECYCLE, "--log", str(log))
    report = json.loads(out)
    assert code == 0 and report["ok"]
    assert report["lifecycle"] == ["1", "2a", "2b", "3", "4", "5", "6"]
    assert len(log.read_text().splitlines()) == report["events"] + 2


def test_run_is_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        log = tmp_path / f"{name}.jsonl"
        run_cli(capsys, "run", "--scenario", LIFECYCLE, "--log", str(log))
        outs.append(log.read_bytes())
    assert outs[0] == outs[1]


def test_empty_scenario(tmp_path, capsys):
    sc = tmp_path / "empty.json"
    sc.write_text("{}")
    log = tmp_path / "e.jsonl"
    code, out, _ = run_cli(capsys, "run", "--scenario", str(sc), "--log", str(log))
    assert code == 0 and json.loads(out)["events"] == 0
    assert [json.loads(l)["kind"] for l in log.read_text().splitlines()] == ["header", "trailer"]


def test_corrupt_scenario(tmp_path, capsys):
    sc = tmp_path / "bad.json"
    sc.write_text('{"ops": [\n {"at_block": 0,,}\n]}')
    code, _, err = run_cli(capsys, "run", "--scenario", str(sc))
    assert code == 3 and "line 2" in err


def test_strict_mode_fails_on_rejection(tmp_path, capsys):
    sc = tmp_path / "s.json"
    sc.write_text(json.dumps({"ops": [{"at_block": 0, "kind": "finalize_unstake", "ticket_id": 3}]}))
    assert run_cli(capsys, "run", "--scenario", str(sc))[0] == 0
    assert run_cli(capsys, "run", "--scenario", str(sc), "--strict")[0] == 2


def test_params_override(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "run", "--scenario", LIFECYCLE, "--params", '{"unbonding_period": 4}')
    assert code == 0
    assert json.loads(out)["final"]["frozen"] == {"2": 4100000}


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 1
    assert run_cli(capsys, "reconcile", "--log", "x", "--window", "9-1")[0] in (1, 3)


@pytest.fixture
def lifecycle_log(tmp_path, capsys):
    log = tmp_path / "events.jsonl"
    run_cli(capsys, "run", "--scenario", LIFECYCLE, "--log", str(log))
    return log


def test_check_valid_truncated_tampered(lifecycle_log, tmp_path, capsys):
    code, out, _ = run_cli(capsys, "check", "--log", str(lifecycle_log))
    assert code == 0 and json.loads(out)["ok"]

    lines = lifecycle_log.read_text().splitlines()
    short = tmp_path / "short.jsonl"
    short.write_text("\n".join(lines[:-3]) + "\n")
    code, _, err = run_cli(capsys, "check", "--log", str(short))
    assert code == 3 and "incomplete" in err

    tampered = []
    for line in lines:
        obj = json.loads(line)
        if obj["kind"] == "deposit":
            obj["data"]["amount"] += 1
        tampered.append(json.dumps(obj))
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(tampered) + "\n")
    code, out, _ = run_cli(capsys, "check", "--log", str(bad))
    report = json.loads(out)
    assert code == 2 and report["invariants"][0]["name"] == "conservation"


def test_nav(lifecycle_log, capsys):
    code, out, _ = run_cli(capsys, "nav", "--log", str(lifecycle_log), "--block", "1", "--holdings", "100", "--fx", "1")
    assert code == 0 and json.loads(out)["indicative_value"] == "100.000000000000"
    code, out, _ = run_cli(capsys, "nav", "--log", str(lifecycle_log), "--block", "0", "--holdings", "0")
    assert json.loads(out)["value_tez"] == "0.000000000000"
    code, out, _ = run_cli(capsys, "nav", "--log", str(lifecycle_log), "--block", "9", "--holdings", "100", "--fx", "0.5")
    # after a 250000 mutez reward on 10 tez: R = 1.025
    assert json.loads(out)["indicative_value"] == "51.250000000000"


def test_reconcile(lifecycle_log, capsys):
    code, out, _ = run_cli(capsys, "reconcile", "--log", str(lifecycle_log), "--window", "2:8")
    report = json.loads(out)
    assert code == 0 and report["residual"]["num"] == 0 and report["rewards_component"] == 250000
    assert report["tolerance_bp"] == 5
    code, out, _ = run_cli(capsys, "reconcile", "--log", str(lifecycle_log), "--window", "0:99")
    assert code == 3


def test_table_output(capsys):
    code, out, _ = run_cli(capsys, "run", "--scenario", LIFECYCLE, "--table")
    assert code == 0 and out.splitlines()[0].startswith("blocks")


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_subprocess():
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "stezsim", "serve", "--scenario", LIFECYCLE, "--listen", f"127.0.0.1:{port}"],
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        assert "serving" in proc.stdout.readline()
        deadline = time.time() + 10
        while True:
            try:
                with urllib.request.urlopen(f"http://127.0.0.1:{port}/ledger/state") as r:
                    body = json.loads(r.read())
                break
            except OSError:
                if time.time() > deadline:
                    raise
                time.sleep(0.05)
        assert body["L"] == "6150000" and body["S"] == "6000000"
        with urllib.request.urlopen(f"http://127.0.0.1:{port}/user/tz1staker1/balance") as r:
            assert json.loads(r.read())["token_balance"] == "6000000"
    finally:
        proc.terminate()
        proc.wait(5)
