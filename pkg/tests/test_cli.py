import json

import pytest

from contdomain.cli import build_parser, main
from contdomain.corpus import read_corpus
from contdomain.experiments import read_report

TINY_INI = """
[plan]
n_initial = 4
n_incremental = 2

[corpus]
n_domains = 6
vocab_size = 80
n_background = 10
n_distractors = 2
utterances_per_domain = 40

[adaptation]
initial_epochs = 2
initial_lr = 0.01
adapt_epochs = 2
d_word = 6
d_lstm = 6
d_domain = 12
d_hidden = 12
domain_offset = 0.0
exemplars_per_domain = 4
"""


@pytest.fixture()
def ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI)
    return str(path)


def test_gen_data_writes_readable_corpus(tmp_path, ini, capsys):
    assert main(["gen-data", "--config", ini, "--out-dir", str(tmp_path)]) == 0
    corpus = read_corpus(tmp_path / "corpus.jsonl")
    assert len(corpus) == 6
    assert "6 domains" in capsys.readouterr().out


def test_train_then_adapt_round_trip(tmp_path, ini, capsys):
    base = tmp_path / "base"
    assert main(["gen-data", "--config", ini, "--out-dir", str(tmp_path)]) == 0
    corpus = str(tmp_path / "corpus.jsonl")
    assert main(["train-initial", "--config", ini, "--corpus", corpus, "--out-dir", str(base)]) == 0
    capsys.readouterr()
    code = main(["adapt", "--config", ini, "--corpus", corpus, "--checkpoint", str(base / "checkpoint.json"),
                 "--store", str(base / "store.json"), "--domain", "domain005",
                 "--variant", "cos+der+ns", "--out-dir", str(tmp_path / "step1")])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["catalog_size"] == 5
    assert report["changed_tensors"] == ["domain_embedding/row00004", "prediction/row00004"]
    assert (tmp_path / "step1" / "checkpoint.json").exists()


def test_adapt_rejects_known_domain(tmp_path, ini, capsys):
    base = tmp_path / "base"
    main(["train-initial", "--config", ini, "--out-dir", str(base)])
    code = main(["adapt", "--config", ini, "--checkpoint", str(base / "checkpoint.json"),
                 "--store", str(base / "store.json"), "--domain", "domain000",
                 "--variant", "cos", "--out-dir", str(tmp_path / "x")])
    assert code == 2
    assert "already in the catalog" in capsys.readouterr().err


def test_benchmark_writes_csv_and_figure(tmp_path, ini):
    out = tmp_path / "runs"
    assert main(["benchmark", "--config", ini, "--out-dir", str(out), "--variant", "cos",
                 "--variant", "linear"]) == 0
    rows = read_report(out / "benchmark.csv")
    assert len(rows) == 4
    assert (out / "benchmark.png").stat().st_size > 0
    assert (out / "benchmark.timing.csv").exists()


def test_sweep_der_without_plots(tmp_path, ini, capsys):
    out = tmp_path / "runs"
    assert main(["sweep-der", "--config", ini, "--out-dir", str(out), "--values", "0,0.1,0.3",
                 "--no-plots"]) == 0
    assert "sweep-delta_der" in capsys.readouterr().out
    assert len(read_report(out / "sweep-der.csv")) == 3 * 2
    assert not (out / "sweep-der.png").exists()


def test_sweep_hinge_and_study_figures(tmp_path, ini):
    out = tmp_path / "runs"
    assert main(["sweep-hinge", "--config", ini, "--out-dir", str(out), "--pos", "0.5,0.7",
                 "--neg", "0.1"]) == 0
    assert (out / "sweep-hinge.png").exists() and (out / "sweep-hinge.steps.png").exists()
    assert main(["study", "table1", "--config", ini, "--out-dir", str(out)]) == 0
    assert (out / "study-table1.png").exists()


def test_seed_flag_and_show_config(ini, capsys):
    assert main(["show-config", "--config", ini, "--seed", "7"]) == 0
    text = capsys.readouterr().out
    assert text.count("seed = 7") == 2


def test_bad_config_reports_error(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[adaptation]\nnot_a_key = 1\n")
    assert main(["show-config", "--config", str(bad)]) == 2
    assert "not_a_key" in capsys.readouterr().err


def test_parser_rejects_unknown_variant():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["benchmark", "--variant", "cos+foo"])
