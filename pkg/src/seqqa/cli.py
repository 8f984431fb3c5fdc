"""``qa`` command line: train / evaluate / predict / gradcheck / oracle-check.

Settings come from TrainConfig defaults, overlaid by a ``key=value`` config
file, then the QA_SEED environment variable, then ``--key value`` flags.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .config import ALIASES, TrainConfig, config_from_pairs, read_config_file
from .data import DataError, Example, SynonymDict, load_corpus
from .evaluation import (MATCH_MODES, SETTINGS, evaluate, format_report, predict_instance,
                         write_predictions)
from .evidence import FeatureIds
from .model import QAModel
from .numeric import CheckpointError, ConfigError, finite_diff_check, make_rng
from .oracle import crf_oracle_suite
from .trainer import TrainingError, load_checkpoint, prepare_corpora, train

logger = logging.getLogger("seqqa")

PATH_KEYS = ("train", "valid", "test", "embeddings", "synonyms", "checkpoint", "output_dir",
             "output")
EXIT_CONFIG, EXIT_DATA, EXIT_CHECK = 1, 2, 3

# files each subcommand needs (must exist) and may use
REQUIRED = {"train": ("train", "valid"), "evaluate": ("checkpoint", "test"),
            "predict": ("checkpoint", "test"), "gradcheck": (), "oracle-check": ()}
OPTIONAL = {"train": ("embeddings", "synonyms"), "evaluate": ("synonyms",),
            "predict": (), "gradcheck": (), "oracle-check": ()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in REQUIRED:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        for key in PATH_KEYS:
            p.add_argument(f"--{key}", dest=f"path_{key}")
        for f in fields(TrainConfig):
            p.add_argument(f"--{f.name}", dest=f"cfg_{f.name}", metavar=f.type.upper())
        p.add_argument("--setting", choices=SETTINGS)
        p.add_argument("--match", choices=MATCH_MODES)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--sample", type=int, default=20,
                       help="gradcheck: seeded entries checked per tensor, 0 for all")
        p.add_argument("--no-extended", dest="extended", action="store_false",
                       help="gradcheck: evaluate differences in float64 only")
        p.add_argument("--lattices", type=int, default=200, help="oracle-check: lattice count")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve(args, environ=os.environ):
    """Merge defaults, config file, QA_SEED and flags into ``(cfg, paths)``."""
    file_pairs = read_config_file(args.config) if args.config else {}
    paths = {k: None for k in PATH_KEYS}
    cfg_pairs = {}
    for key, value in file_pairs.items():
        if key in PATH_KEYS:
            paths[key] = value
        else:
            cfg_pairs[key] = value
    if environ.get("QA_SEED"):
        cfg_pairs = {k: v for k, v in cfg_pairs.items() if ALIASES.get(k, k) != "seed"}
        cfg_pairs["seed"] = environ["QA_SEED"]
    for f in fields(TrainConfig):
        value = getattr(args, f"cfg_{f.name}")
        if value is not None:
            cfg_pairs = {k: v for k, v in cfg_pairs.items() if ALIASES.get(k, k) != f.name}
            cfg_pairs[f.name] = value
    for key in PATH_KEYS:
        value = getattr(args, f"path_{key}")
        if value is not None:
            paths[key] = value
    return config_from_pairs(cfg_pairs), paths


def check_paths(command: str, paths: Dict[str, Optional[str]]):
    for key in REQUIRED[command]:
        if not paths[key]:
            raise ConfigError(f"missing required path '{key}'")
    for key in REQUIRED[command] + OPTIONAL[command]:
        if paths[key] and not Path(paths[key]).is_file():
            raise ConfigError(f"path '{key}' does not exist: {paths[key]}")
    if paths["checkpoint"] and command != "train":
        meta = Path(paths["checkpoint"] + ".json")
        if not meta.is_file():
            raise ConfigError(f"path 'checkpoint' has no metadata file {meta}")


def echo_config(cfg: TrainConfig, paths, args, stream) -> List[str]:
    lines = [f"command={args.command}"]
    lines += [f"{k}={v}" for k, v in cfg.to_dict().items()]
    lines += [f"{k}={v}" for k, v in paths.items() if v is not None]
    lines += [f"setting={args.setting or 'all'}", f"match={args.match or 'all'}",
              f"threads={args.threads}"]
    for line in lines:
        print(f"# {line}", file=stream)
    return lines


def _load(path, require_answers=True):
    corpus, _ = load_corpus(path, strict=False, require_answers=require_answers)
    if not corpus:
        raise DataError(f"{path}: no usable instances")
    return corpus


def _synonyms(paths):
    return SynonymDict.load(paths["synonyms"]) if paths["synonyms"] else None


def cmd_train(cfg, paths, args, header):
    out = Path(paths["output_dir"] or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text("\n".join(header) + "\n", encoding="utf-8")
    ckpt = paths["checkpoint"] or str(out / "model.bin")
    result = train(_load(paths["train"]), _load(paths["valid"]), cfg, _synonyms(paths),
                   paths["embeddings"], out / "epochs.log", ckpt)
    print(f"best epoch {result.best_epoch} valid F1 {100 * result.best_f1:.2f} -> {ckpt}")
    return 0


def _restore(cfg, paths):
    ck = load_checkpoint(paths["checkpoint"])
    # runtime-only keys (threads, max_retrieved, seed) may differ from training
    return ck, ck.cfg.replace(max_retrieved=cfg.max_retrieved, seed=cfg.seed)


def cmd_evaluate(cfg, paths, args, header):
    ck, cfg = _restore(cfg, paths)
    (test,), synonyms = prepare_corpora(cfg, _load(paths["test"]), synonyms=_synonyms(paths))
    settings = [args.setting] if args.setting else list(SETTINGS)
    modes = [args.match] if args.match else list(MATCH_MODES)
    results = [evaluate(test, ck.model, ck.vocab, s, synonyms, cfg.max_retrieved, cfg.seed,
                        args.threads) for s in settings]
    print(format_report(results, modes))
    if paths["output_dir"]:
        out = Path(paths["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        for res in results:
            write_predictions(out / f"predictions.{res.setting}.tsv", res.records)
    return 0


def cmd_predict(cfg, paths, args, header):
    ck, cfg = _restore(cfg, paths)
    (corpus,), _ = prepare_corpora(cfg, _load(paths["test"], require_answers=False))
    setting = args.setting or "retrieved"
    target = paths["output"] or str(Path(paths["output_dir"] or ".") / "predictions.tsv")
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8") as fh:
        for q, inst in enumerate(corpus):
            answer = predict_instance(ck.model, ck.vocab, inst, setting, cfg.max_retrieved,
                                      cfg.seed * 1_000_003 + q)[0]
            fh.write(f"{inst.id}\t{' '.join(answer) if answer else ''}\n")
    print(f"wrote {len(corpus)} predictions to {target}")
    return 0


def toy_gradcheck(cfg: TrainConfig, extended: bool = True, sample: Optional[int] = None,
                  seed: int = 0):
    """Finite-difference check of every trainable tensor on a fixed 4/5-token instance.

    Dropout is off; all parameters (including the zero-initialised ones) get a
    small seeded perturbation so that no gradient is trivially zero.
    """
    cfg = cfg.replace(dropout=0.0)
    rng = make_rng(seed)
    model = QAModel.random(cfg, 8, rng, trainable_embeddings=True)
    for p in model.store:
        p.value += rng.normal(0.0, 0.1, p.value.shape)
    ex = Example(np.array([1, 2, 3, 4]), np.array([5, 2, 6, 7, 1]),
                 FeatureIds([0, 1, 0, 0, 1], [1, 0, 0, 1, 0]), np.array([2, 0, 1, 3, 3]))
    model.store.zero_grad()
    model.forward_backward(ex)
    return finite_diff_check(lambda: model.nll(ex), model.store, extended=extended,
                             max_per_tensor=sample, rng=make_rng(seed + 1))


def cmd_gradcheck(cfg, paths, args, header):
    report = toy_gradcheck(cfg, args.extended, args.sample or None)
    print(report.format())
    print(f"gradcheck {'PASS' if report.passed else 'FAIL'} max_rel={report.overall_max:.3e}"
          f" tol={report.tol:g}")
    return 0 if report.passed else EXIT_CHECK


def cmd_oracle(cfg, paths, args, header):
    report = crf_oracle_suite(n=args.lattices, seed=cfg.seed)
    print(report.format())
    print(f"oracle-check {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else EXIT_CHECK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict,
            "gradcheck": cmd_gradcheck, "oracle-check": cmd_oracle}


def run(argv=None, environ=os.environ) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
        cfg, paths = resolve(args, environ)
        check_paths(args.command, paths)
        header = echo_config(cfg, paths, args, sys.stderr)
        return COMMANDS[args.command](cfg, paths, args, header)
    except (ConfigError, CheckpointError) as exc:
        print(f"qa: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"qa: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"qa: training failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
