import json

import pytest

from trigraphrec.cli import main


def write_corpus(tmp_path, with_triples=True):
    """12 items cycling over 14 sessions; the last two land past the split."""
    lines = []
    for i in range(14):
        for j in range(3):
            lines.append(f"s{i}\ti{(i * 3 + j) % 12}\t{10 * i + j}")
    sessions = tmp_path / "sessions.tsv"
    sessions.write_text("\n".join(lines) + "\n")
    triples = None
    if with_triples:
        rows = [f"i{k}\tkind\tc{k % 3}" for k in range(12)]
        rows += ["i0\tbrand\tb0", "i5\tbrand\tb0"]
        triples = tmp_path / "triples.tsv"
        triples.write_text("\n".join(rows) + "\n")
    config = tmp_path / "config.txt"
    config.write_text("embedding_dim = 6\nepochs = 2\nbatch_size = 8\n"
                      "sample_count = 2\n")
    return sessions, triples, config


def run(argv):
    assert main(argv) == 0


def test_full_pipeline(tmp_path, capsys):
    sessions, triples, config = write_corpus(tmp_path)
    data_dir, graph_dir, run_dir = (tmp_path / n for n in ("data", "graphs", "run"))

    run(["preprocess", "--sessions", str(sessions), "--triples", str(triples),
         "--min-item-freq", "1", "--test-boundary", "115",
         "--out-dir", str(data_dir)])
    bundle = data_dir / "bundle.json"
    assert bundle.exists()
    out = capsys.readouterr().out
    assert "items: 12" in out

    run(["build-graphs", "--bundle", str(bundle), "--out-dir", str(graph_dir)])
    for name in ("hypergraph.tsv", "line_graph.tsv", "kg_triples.tsv"):
        assert (graph_dir / name).exists(), name
    out = capsys.readouterr().out
    assert "hypergraph:" in out and "knowledge graph:" in out

    run(["train", "--bundle", str(bundle), "--config", str(config),
         "--out-dir", str(run_dir)])
    for name in ("checkpoint.npz", "config.txt", "metrics.jsonl", "report.json"):
        assert (run_dir / name).exists(), name
    out = capsys.readouterr().out
    assert "P@20:" in out

    run(["evaluate", "--bundle", str(bundle), "--config", str(config),
         "--checkpoint", str(run_dir / "checkpoint.npz"),
         "--out-dir", str(run_dir)])
    out = capsys.readouterr().out
    assert "P@20:" in out
    eval_report = json.loads((run_dir / "eval_report.json").read_text())
    report = json.loads((run_dir / "report.json").read_text())
    assert eval_report == report["metrics"]


def test_seed_flag_overrides_config(tmp_path, capsys):
    sessions, triples, config = write_corpus(tmp_path)
    data_dir = tmp_path / "data"
    run(["preprocess", "--sessions", str(sessions), "--triples", str(triples),
         "--min-item-freq", "1", "--test-boundary", "115",
         "--out-dir", str(data_dir)])
    capsys.readouterr()
    run(["train", "--bundle", str(data_dir / "bundle.json"),
         "--config", str(config), "--seed", "3",
         "--out-dir", str(tmp_path / "seeded")])
    capsys.readouterr()
    written = (tmp_path / "seeded" / "config.txt").read_text()
    assert "seed = 3" in written


def test_train_without_triples_requires_nkg(tmp_path, capsys):
    sessions, _, config = write_corpus(tmp_path, with_triples=False)
    data_dir = tmp_path / "data"
    run(["preprocess", "--sessions", str(sessions), "--min-item-freq", "1",
         "--test-boundary", "115", "--out-dir", str(data_dir)])
    bundle = str(data_dir / "bundle.json")
    with pytest.raises(SystemExit) as err:
        main(["train", "--bundle", bundle, "--config", str(config),
              "--out-dir", str(tmp_path / "run")])
    assert "build-graphs" in str(err.value)
    capsys.readouterr()
    run(["train", "--bundle", bundle, "--config", str(config),
         "--ablation", "NKG", "--out-dir", str(tmp_path / "run")])
    assert "P@20:" in capsys.readouterr().out


def test_sweep_and_ablate(tmp_path, capsys):
    sessions, triples, config = write_corpus(tmp_path)
    config.write_text("embedding_dim = 6\nepochs = 1\nbatch_size = 8\n"
                      "sample_count = 2\n")
    data_dir = tmp_path / "data"
    run(["preprocess", "--sessions", str(sessions), "--triples", str(triples),
         "--min-item-freq", "1", "--test-boundary", "115",
         "--out-dir", str(data_dir)])
    bundle = str(data_dir / "bundle.json")
    capsys.readouterr()

    run(["sweep", "--bundle", bundle, "--config", str(config),
         "--grid", "layers", "--out-dir", str(tmp_path / "sweep")])
    out = capsys.readouterr().out
    assert out.startswith("sweep over layers:")
    assert (tmp_path / "sweep" / "sweep_layers.jsonl").exists()

    run(["ablate", "--bundle", bundle, "--config", str(config),
         "--out-dir", str(tmp_path / "ablate")])
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("variant")
    assert (tmp_path / "ablate" / "ablations.jsonl").exists()


def test_unknown_command_exits(capsys):
    with pytest.raises(SystemExit):
        main(["frobnicate"])
