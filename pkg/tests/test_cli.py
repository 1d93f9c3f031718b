import json

import pytest

from commcert.cli import main

from conftest import write_dataset


@pytest.fixture
def dataset(tmp_path, small_planted):
    return write_dataset(tmp_path, *small_planted)


def _config_file(tmp_path, edges, labels, out_dir, **extra):
    lines = [
        f"dataset = {edges}",
        f"communities = {labels}",
        "beta = 0.7",
        "alpha = 0.001",
        "n_samples = 50",
        "victim_size = 2",
        "attacker_nodes = 20",
        "seed = 4",
        f"out_dir = {out_dir}",
    ] + [f"{k} = {v}" for k, v in extra.items()]
    path = tmp_path / f"cfg_{abs(hash(str(out_dir)))}.txt"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_detect_output_format(dataset, capsys):
    assert main(["detect", dataset[0]]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[-1].startswith("# modularity=")
    assert 0 < float(lines[-1].split("=", 1)[1]) < 1
    body = [l.split("\t") for l in lines[:-1]]
    assert len(body) == 120 and all(len(p) == 2 for p in body)


def test_certify_emits_record(dataset, capsys, tmp_path):
    out = tmp_path / "rec.jsonl"
    assert main(["certify", dataset[0], "--victims", "0,1", "--attacker-nodes", "15",
                 "--n-samples", "40", "--seed", "1", "--out", str(out)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert {"victims", "y_hat", "p_lower", "L", "abstain", "beta", "N", "alpha", "seed"} <= set(rec)
    assert rec["N"] == 40 and rec["victims"] == [0, 1]
    assert json.loads(out.read_text()) == rec


def test_evaluate_curve_is_byte_identical(dataset, tmp_path, capsys):
    a = _config_file(tmp_path, *dataset, tmp_path / "a")
    b = _config_file(tmp_path, *dataset, tmp_path / "b")
    assert main(["evaluate", "--config", a, "--mode", "splitting"]) == 0
    assert main(["evaluate", "--config", b, "--mode", "splitting"]) == 0
    assert (tmp_path / "a" / "curve.csv").read_bytes() == (tmp_path / "b" / "curve.csv").read_bytes()


def test_evaluate_overrides(dataset, tmp_path, capsys):
    cfg = _config_file(tmp_path, *dataset, tmp_path / "c")
    assert main(["evaluate", "--config", cfg, "--mode", "merging", "--victim-count", "12", "--n-samples", "30"]) == 0
    meta = json.loads((tmp_path / "c" / "run_meta.json").read_text())
    assert meta["config"]["mode"] == "merging" and meta["config"]["n_samples"] == 30
    assert meta["num_victim_sets"] == 12


def test_evaluate_bad_beta(dataset, tmp_path, capsys):
    cfg = _config_file(tmp_path, *dataset, tmp_path / "d")
    assert main(["evaluate", "--config", cfg, "--beta", "0.4"]) == 2
    assert "beta" in capsys.readouterr().err


def test_oracle_check_quick(capsys):
    assert main(["oracle-check", "--quick"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_validate_run(dataset, tmp_path, capsys):
    cfg = _config_file(tmp_path, *dataset, tmp_path / "v", n_samples=150)
    assert main(["evaluate", "--config", cfg]) == 0
    assert main(["validate", str(tmp_path / "v"), "--sets", "2", "--trials", "4"]) == 0
    assert "high-confidence flips: 0" in capsys.readouterr().out
