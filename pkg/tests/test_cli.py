import argparse

import pytest

from seqqa.cli import build_parser, resolve, run
from seqqa.data import save_corpus
from seqqa.numeric import make_rng
from seqqa.synthetic import generate_corpus


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    rng = make_rng(0)
    train, syn = generate_corpus(20, rng, "train")
    valid, s2 = generate_corpus(6, rng, "valid")
    save_corpus(root / "train.jsonl", train)
    save_corpus(root / "valid.jsonl", valid)
    syn.save(root / "syn.tsv")
    (root / "toy.cfg").write_text(
        "# toy run\nH=6\nD=6\nbatch_size=10\nepochs=2\nseed=3\n"
        f"train={root / 'train.jsonl'}\nvalid={root / 'valid.jsonl'}\n"
        f"output_dir={root / 'out'}\n", encoding="utf-8")
    return root


def test_missing_path_names_key(capsys):
    assert run(["train"], environ={}) == 1
    assert "'train'" in capsys.readouterr().err
    assert run(["evaluate", "--test", "/nonexistent.jsonl", "--checkpoint", "x"],
               environ={}) == 1
    assert "does not exist" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour=blue\n", encoding="utf-8")
    assert run(["oracle-check", "--config", str(cfg)], environ={}) == 1
    assert "colour" in capsys.readouterr().err


def test_bad_value(capsys):
    assert run(["gradcheck", "--decoder", "hmm"], environ={}) == 1
    assert "decoder" in capsys.readouterr().err


def test_precedence(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("seed=5\nH=7\nlambda=0.5\n", encoding="utf-8")
    parser = build_parser()
    args = parser.parse_args(["train", "--config", str(cfg)])
    assert resolve(args, {})[0].seed == 5
    c, _ = resolve(args, {"QA_SEED": "9"})
    assert (c.seed, c.H, c.lam) == (9, 7, 0.5)
    args = parser.parse_args(["train", "--config", str(cfg), "--seed", "11", "--H", "3"])
    c, _ = resolve(args, {"QA_SEED": "9"})
    assert (c.seed, c.H) == (11, 3)


def test_data_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n", encoding="utf-8")
    assert run(["train", "--train", str(bad), "--valid", str(bad), "--H", "4", "--D", "4",
                "--output_dir", str(tmp_path)], environ={}) == 2
    assert "data error" in capsys.readouterr().err


def test_train_evaluate_predict(workspace, capsys):
    cfg = str(workspace / "toy.cfg")
    assert run(["train", "--config", cfg, "--synonyms", str(workspace / "syn.tsv")],
               environ={}) == 0
    out = capsys.readouterr()
    assert "# H=6" in out.err and "# lr=0.001" in out.err   # every value echoed
    out_dir = workspace / "out"
    assert (out_dir / "model.bin").exists() and (out_dir / "model.bin.json").exists()
    assert len((out_dir / "epochs.log").read_text().splitlines()) == 2
    assert "H=6" in (out_dir / "config.txt").read_text()

    ck = str(out_dir / "model.bin")
    assert run(["evaluate", "--checkpoint", ck, "--test", str(workspace / "valid.jsonl"),
                "--synonyms", str(workspace / "syn.tsv"), "--setting", "retrieved",
                "--match", "fuzzy"], environ={}) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split()[-3:] == ["P", "R", "F1"]
    assert len(lines) == 2 and lines[1].split()[:2] == ["retrieved", "fuzzy"]

    assert run(["evaluate", "--checkpoint", ck, "--test", str(workspace / "valid.jsonl")],
               environ={}) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 5

    pred = workspace / "pred.tsv"
    assert run(["predict", "--checkpoint", ck, "--test", str(workspace / "valid.jsonl"),
                "--output", str(pred)], environ={}) == 0
    rows = pred.read_text(encoding="utf-8").splitlines()
    assert len(rows) == 6 and all(r.count("\t") == 1 for r in rows)


def test_gradcheck_and_oracle_commands(capsys):
    assert run(["gradcheck", "--H", "3", "--D", "3", "--decoder", "softmax_prev"],
               environ={}) == 0
    assert "gradcheck PASS" in capsys.readouterr().out
    assert run(["oracle-check", "--lattices", "30"], environ={}) == 0
    assert "oracle-check PASS" in capsys.readouterr().out


def test_parser_exposes_all_config_keys():
    args = build_parser().parse_args(["gradcheck", "--noise_rate", "0.1"])
    assert isinstance(args, argparse.Namespace) and args.cfg_noise_rate == "0.1"
