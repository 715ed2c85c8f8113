import json
import subprocess
import sys

import pytest

from ltp.cli import EXIT_CODES, main


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--topics", "20", "--queries-per-topic", "10", "--seed", "1", "--out", str(out)]) == 0
    return out


def _learn(sim, out, *extra):
    return main(["learn", "--observations", str(sim / "observations.jsonl"),
                 "--topic-maps", str(sim / "topic_maps.jsonl"), "--out", str(out), *extra])


def test_learn_writes_profile(sim, tmp_path):
    assert _learn(sim, tmp_path) == 0
    prof = json.loads((tmp_path / "profile.json").read_text())
    assert {"eta_tilde", "kappa1", "kappa2", "tau_mean", "lambda", "mu", "elbo_trace", "phi"} <= set(prof)
    assert len(prof["eta_tilde"]) == 20 and prof["lambda"] == 0.9 and prof["mu"] == 10.0
    assert prof["tau_mean"] == pytest.approx(prof["kappa1"] / (prof["kappa1"] + prof["kappa2"]))


def test_learn_is_byte_deterministic(sim, tmp_path):
    _learn(sim, tmp_path / "a", "--seed", "5")
    _learn(sim, tmp_path / "b", "--seed", "5", "--threads", "1")
    assert (tmp_path / "a" / "profile.json").read_bytes() == (tmp_path / "b" / "profile.json").read_bytes()


def test_learn_em_adds_trace(sim, tmp_path):
    assert _learn(sim, tmp_path, "--em", "--max-iters", "3") == 0
    prof = json.loads((tmp_path / "profile.json").read_text())
    assert {"iter", "lambda", "mu", "elbo"} <= set(prof["em_trace"][0])


def test_evaluate_emits_metric_table(sim, tmp_path):
    _learn(sim, tmp_path)
    assert main(["evaluate", "--profile", str(tmp_path / "profile.json"),
                 "--ground-truth", str(sim / "ground_truth.json"), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert set(report["p_at"]) == {"1", "3", "5"} and set(report["p_plus"]) == {"1", "3"}
    assert "R-pre" in (tmp_path / "report.md").read_text()


def test_disambiguate_independent_of_threads(sim, tmp_path):
    args = ["disambiguate", "--observations", str(sim / "observations.jsonl"),
            "--topic-maps", str(sim / "topic_maps.jsonl"), "--repeats", "3"]
    main(args + ["--threads", "1", "--out", str(tmp_path / "a")])
    main(args + ["--threads", "3", "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "disambiguation.json").read_bytes()
    assert a == (tmp_path / "b" / "disambiguation.json").read_bytes()
    assert len(json.loads(a)["accuracy"]) == 3


def test_classify_and_evidence(sim, tmp_path):
    obs = str(sim / "observations.jsonl")
    maps = str(sim / "topic_maps.jsonl")
    assert main(["classify", "--user", f"a={obs}", "--user", f"b={obs}", "--topic-maps", maps,
                 "--repeats", "2", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "classification.json").read_text())["chance"] == 0.5
    _learn(sim, tmp_path)
    assert main(["evidence", "--observations", obs, "--topic-maps", maps, "--profile", str(tmp_path / "profile.json"),
                 "--top", "4", "--out", str(tmp_path)]) == 0
    assert len(json.loads((tmp_path / "evidence.json").read_text())) <= 4


def test_fit_topics(tmp_path):
    items = tmp_path / "items.jsonl"
    items.write_text("".join(json.dumps({"item_id": f"u{i}", "text": t}) + "\n"
                             for i, t in enumerate(["apple banana"] * 3 + ["engine piston"] * 3)))
    assert main(["fit-topics", "--items", str(items), "--topics", "2", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "topics.json").read_text())["T"] == 2
    assert len((tmp_path / "topic_maps.jsonl").read_text().splitlines()) == 6


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_error_records(sim, tmp_path, capsys):
    assert _learn(tmp_path / "nowhere", tmp_path) == EXIT_CODES["file_not_found"]
    assert _error(capsys)["error"] == "file_not_found"

    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "observations.jsonl").write_text('{"query_id": "q1"}\n')
    (bad / "topic_maps.jsonl").write_text((sim / "topic_maps.jsonl").read_text())
    assert _learn(bad, tmp_path) == EXIT_CODES["schema_violation"]
    assert _error(capsys)["error"] == "schema_violation"

    assert _learn(sim, tmp_path, "--topics", "7") == EXIT_CODES["topic_count_mismatch"]
    assert _error(capsys)["error"] == "topic_count_mismatch"

    (bad / "observations.jsonl").write_text(json.dumps({"query_id": "q", "vanilla": ["zz"], "personalized": ["zz"]}) + "\n")
    assert _learn(bad, tmp_path) == EXIT_CODES["schema_violation"]
    assert "topic-map" in _error(capsys)["message"]
    assert len(set(EXIT_CODES.values())) == len(EXIT_CODES)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ltp", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "learn" in res.stdout
