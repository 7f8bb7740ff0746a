import csv
import json
import math

import pytest

from hcrm.cli import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    RunConfig,
    dump_config,
    main,
)

SMALL = ["--synth-topics", "2", "--iterations", "6", "--burn-in", "1", "--thin", "1"]


def outputs(run):
    names = ["config.toml", "progress.jsonl", "checkpoint.json", "beta.csv", "tau.csv",
             "predictive.csv", "top_words.txt"]
    return {n: (run / n).read_bytes() for n in names}


def test_fit_and_rerun_from_echoed_config(tmp_path):
    a = tmp_path / "a"
    assert main(["fit", *SMALL, "--seed", "3", "--base", "ggp", "--d", "0.2", "--out", str(a)]) == 0
    b = tmp_path / "b"
    assert main(["fit", "--config", str(a / "config.toml"), "--out", str(b)]) == 0
    assert outputs(a) == outputs(b)
    recs = [json.loads(ln) for ln in (a / "progress.jsonl").read_text().splitlines()]
    assert recs[-1]["iteration"] == 6
    assert {"dishes", "tables", "log_joint", "theta"} <= set(recs[-1])


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(dump_config(RunConfig(synth_topics=2, iterations=4, burn_in=1, thin=1)))
    out = tmp_path / "run"
    assert main(["fit", "--config", str(cfg), "--seed", "9", "--out", str(out)]) == 0
    assert "seed = 9" in (out / "config.toml").read_text()


def test_iterations_zero_writes_checkpoint_only(tmp_path):
    out = tmp_path / "run"
    assert main(["fit", "--synth-topics", "2", "--iterations", "0", "--out", str(out)]) == 0
    assert (out / "checkpoint.json").exists()
    assert not (out / "beta.csv").exists()


def test_usage_errors(tmp_path, capsys):
    assert main(["fit", "--docword", str(tmp_path / "missing.txt"), "--out",
                 str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["fit", "--synth-topics", "2"]) == EXIT_USAGE
    bad = tmp_path / "bad.toml"
    bad.write_text("nonsense_key = 1\n")
    assert main(["fit", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["fit", *SMALL, "--base", "sggp", "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_fit_on_uci_file(tmp_path):
    dw = tmp_path / "docword.txt"
    dw.write_text("2\n3\n3\n1 1 4\n1 2 2\n2 3 5\n")
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("apple\nbanana\ncherry\n")
    out = tmp_path / "run"
    assert main(["fit", "--docword", str(dw), "--vocab", str(vocab), "--iterations", "5",
                 "--burn-in", "1", "--thin", "1", "--out", str(out)]) == 0
    assert "topic 0:" in (out / "top_words.txt").read_text()


def test_eval_grid_and_runs(tmp_path):
    out = tmp_path / "ev"
    assert main(["eval", *SMALL, "--grid", "0.4,0.6", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "perplexity.csv")))
    assert [r["p_train"] for r in rows] == ["0.4", "0.4", "0.6", "0.6"]
    assert {r["model"] for r in rows} == {"hcrm-gamma", "unigram"}
    first = (out / "perplexity.csv").read_bytes()
    runs = [str(out / "p_train_0.4"), str(out / "p_train_0.6")]
    assert main(["eval", "--runs", *runs, "--csv", str(tmp_path / "again.csv")]) == 0
    assert (tmp_path / "again.csv").read_bytes() == first


def test_eval_uniform_summary_gives_vocab_size(tmp_path):
    import numpy as np

    from hcrm.topic_model import PosteriorSummary, write_summary_csv

    run = tmp_path / "run"
    run.mkdir()
    cfg = RunConfig(synth_topics=2, synth_vocab=10, synth_docs=5, synth_doc_len=20,
                    iterations=1, burn_in=0, thin=1)
    (run / "config.toml").write_text(dump_config(cfg))
    write_summary_csv(PosteriorSummary.uniform(5, 2, 10), run)
    assert main(["eval", "--runs", str(run), "--csv", str(tmp_path / "e.csv")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "e.csv")))
    assert float(rows[0]["perplexity"]) == pytest.approx(10.0, rel=1e-9)
    (run / "beta.csv").unlink()
    assert main(["eval", "--runs", str(run), "--csv", str(tmp_path / "e.csv")]) == EXIT_USAGE
    del np


def test_pmf_examples(capsys):
    assert main(["pmf", "--matrix", "1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(math.log(0.25), abs=1e-14)
    assert main(["pmf", "--matrix", "", "--n", "3", "--theta", "2"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(-2 * math.log(4), abs=1e-14)
    assert main(["pmf", "--kind", "restaurant", "--matrix", "1"]) == 0
    got = float(capsys.readouterr().out)
    assert got == pytest.approx(math.log(0.5 / (1 + math.log(2)) ** 2), abs=1e-13)
    assert main(["pmf", "--matrix", "1,0;1,0"]) == EXIT_USAGE
    assert main(["pmf", "--matrix", "1,x"]) == EXIT_USAGE


def test_pmf_prints_fifteen_digits(capsys, tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("2\n1\n")
    assert main(["pmf", "--csv", str(f), "--n", "2", "--theta", "2"]) == 0
    text = capsys.readouterr().out.strip()
    expected = math.log(2 * math.gamma(3) / (2 * 1 * 3 ** 5))
    assert float(text) == pytest.approx(expected, abs=1e-13)
    assert len(text.lstrip("-").replace(".", "")) <= 16


def test_verify_budget_zero():
    assert main(["verify", "--budget", "0", "--quick"]) == EXIT_RUNTIME


def test_verify_fault_injection_fails(capsys):
    assert main(["verify", "--quick", "--fault", "psi_sign_flip"]) == EXIT_CHECK_FAILED
    assert "bernstein" in capsys.readouterr().out.lower()


@pytest.mark.slow
def test_verify_default_passes(tmp_path):
    assert main(["verify", "--json", str(tmp_path / "r.json")]) == EXIT_OK
    report = json.loads((tmp_path / "r.json").read_text())
    assert all(r["passed"] for r in report)
