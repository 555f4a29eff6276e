import json
import os
import subprocess
import sys
import time

import pytest

from scacopf.cli import main
from scacopf.evaluator import evaluate_full, worst_case_score
from scacopf.formats import parse_instance, read_base_solution, read_contingency_solutions, write_base_solution
from scacopf.scoring import ScoreTable


def run(*args, timeout=120):
    return subprocess.run(
        [sys.executable, "-m", "scacopf", *map(str, args)], capture_output=True, text=True, timeout=timeout
    )


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    inst = d / "case.json"
    assert main(["generate", "--seed", "5", "--n-bus", "6", "--tight-q", "0.3", "--out", str(inst)]) == 0
    r1 = run("code1", "--network", inst, "--time-limit", 30, "--out", d / "sol1.txt", "--report", d / "m1.json")
    return d, inst, r1


def test_code1_success(pipeline):
    d, inst, r1 = pipeline
    assert r1.returncode == 0, r1.stderr
    man = json.loads((d / "m1.json").read_text())
    assert man["fallback"] is False and man["exit_status"] == 0
    net = parse_instance(inst.read_text())
    base = read_base_solution(net, (d / "sol1.txt").read_text())
    assert evaluate_full(net, base, {}).hard_violations == []


def test_code2_worker_invariance_and_digest(pipeline):
    d, inst, _ = pipeline
    outs = []
    for w in (1, 2):
        r = run("code2", "--network", inst, "--base", d / "sol1.txt", "--out", d / f"sol2_{w}.txt",
                "--workers", w, "--report", d / f"m2_{w}.json")
        assert r.returncode == 0, r.stderr
        outs.append((d / f"sol2_{w}.txt").read_bytes())
    assert outs[0] == outs[1]
    man = json.loads((d / "m2_1.json").read_text())
    assert len(man["input_digest"]) == 64
    net = parse_instance(inst.read_text())
    assert len(read_contingency_solutions(net, outs[0].decode())) == len(net.contingencies)


def test_evaluate_and_score(pipeline, tmp_path):
    d, inst, _ = pipeline
    r = run("code2", "--network", inst, "--base", d / "sol1.txt", "--out", d / "sol2.txt")
    assert r.returncode == 0
    net = parse_instance(inst.read_text())
    base = read_base_solution(net, (d / "sol1.txt").read_text())
    reports = tmp_path / "reports"
    reports.mkdir()
    ok = run("evaluate", "--network", inst, "--base", d / "sol1.txt", "--contingency-solutions", d / "sol2.txt",
             "--team", "good", "--report", reports / "good.json")
    assert ok.returncode == 0
    good = json.loads((reports / "good.json").read_text())
    assert good["substituted"] is False
    assert good["score"] == good["report"]["total"] < good["worst_case"]

    # push one voltage out of bounds: the evaluator substitutes the worst case
    bad_base = base.copy()
    bad_base.v[1] = net.buses[1].vmax + 0.05
    (tmp_path / "bad1.txt").write_text(write_base_solution(net, bad_base))
    bad = run("evaluate", "--network", inst, "--base", tmp_path / "bad1.txt", "--contingency-solutions",
              d / "sol2.txt", "--team", "bad", "--report", reports / "bad.json")
    assert bad.returncode == 0
    doc = json.loads((reports / "bad.json").read_text())
    assert doc["substituted"] is True and doc["score"] == pytest.approx(worst_case_score(net))

    r = run("score", "--results", reports, "--out", tmp_path / "board.json")
    assert r.returncode == 0
    board = json.loads((tmp_path / "board.json").read_text())
    expected = ScoreTable.build({"good": {"case": {"1": good["score"]}}, "bad": {"case": {"1": doc["score"]}}})
    assert board["overall"] == pytest.approx(expected.overall)
    assert board["profile_area"] == pytest.approx(expected.profile_area)
    assert (tmp_path / "board.csv").exists()


def test_corrupt_instance(tmp_path):
    inst = tmp_path / "broken.json"
    inst.write_text('{"buses": [\n  {"id": 1,,}\n]}')
    r = run("code1", "--network", inst, "--out", tmp_path / "sol1.txt")
    assert r.returncode == 2
    assert "line 2" in r.stderr
    assert not (tmp_path / "sol1.txt").exists()


def test_missing_base_solution(pipeline, tmp_path):
    _, inst, _ = pipeline
    r = run("code2", "--network", inst, "--base", tmp_path / "nothing.txt", "--out", tmp_path / "sol2.txt")
    assert r.returncode == 2
    assert not (tmp_path / "sol2.txt").exists()


def test_empty_contingency_list(pipeline, tmp_path):
    d, inst, _ = pipeline
    lst = tmp_path / "none.json"
    lst.write_text('{"contingencies": []}')
    r = run("code2", "--network", inst, "--contingencies", lst, "--base", d / "sol1.txt", "--out", tmp_path / "s2.txt")
    assert r.returncode == 0
    assert (tmp_path / "s2.txt").read_text() == ""


def test_contingency_timeout_gives_fallback_blocks(pipeline, tmp_path):
    d, inst, _ = pipeline
    r = run("code2", "--network", inst, "--base", d / "sol1.txt", "--out", tmp_path / "s2.txt",
            "--per-contingency-limit", 0, "--report", tmp_path / "m.json")
    assert r.returncode == 1
    man = json.loads((tmp_path / "m.json").read_text())
    net = parse_instance(inst.read_text())
    assert man["fallback"] and len(man["fallback_contingencies"]) == len(net.contingencies)
    assert len(read_contingency_solutions(net, (tmp_path / "s2.txt").read_text())) == len(net.contingencies)


def test_short_time_limit_still_writes(tmp_path):
    inst = tmp_path / "big.json"
    assert main(["generate", "--seed", "1", "--n-bus", "80", "--tight-q", "0.3", "--out", str(inst)]) == 0
    t0 = time.monotonic()
    r = run("code1", "--network", inst, "--time-limit", 1, "--out", tmp_path / "sol1.txt")
    assert time.monotonic() - t0 <= 6.0
    assert r.returncode in (0, 1)
    net = parse_instance(inst.read_text())
    read_base_solution(net, (tmp_path / "sol1.txt").read_text())


def test_worker_env_override(pipeline, tmp_path):
    d, inst, _ = pipeline
    env = dict(os.environ, SCACOPF_WORKERS="2")
    r = subprocess.run(
        [sys.executable, "-m", "scacopf", "code2", "--network", str(inst), "--base", str(d / "sol1.txt"),
         "--out", str(tmp_path / "s2.txt"), "--report", str(tmp_path / "m.json")],
        capture_output=True, text=True, env=env, timeout=120,
    )
    assert r.returncode == 0
    assert json.loads((tmp_path / "m.json").read_text())["workers"] == 2
