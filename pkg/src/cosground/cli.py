"""Command-line interface: synth, train, eval, predict, ablate-topk, ablate-encoders, gradcheck.

Exit codes: 0 success, 2 bad flags, 3 dataset/checkpoint errors, 4 numeric
failures. Human-readable output goes to stderr; machine output (metric CSV
lines, confirmed artifact paths) goes to stdout. Every flag can also be
supplied via ``--config file.json`` using the flag's key name; explicit
flags override the file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from types import SimpleNamespace

from .data import DatasetError, generate_synthetic, load_meta
from .gradcheck import run_gradcheck
from .harness import (
    RunConfig,
    ablate_encoders,
    ablate_top_k,
    evaluate,
    predict,
    train,
    write_epoch_log,
)
from .model import CheckpointError, DegenerateModelError, load_checkpoint
from .optim import OptimizerConfig

EXIT_OK = 0
EXIT_BAD_FLAGS = 2
EXIT_DATASET = 3
EXIT_NUMERIC = 4

_SYNTH_DEFAULTS = {
    "seed": 42, "n_train": 2000, "n_test": 500, "p": 16,
    "d_img": 64, "d_txt": 32, "noise": 0.05,
}
_OPT_DEFAULTS = {
    "lr": 0.01, "momentum": 0.9, "weight_decay": 1e-4, "decay_factor": 10.0,
    "decay_every": 4, "epochs": 20, "batch_size": 8, "seed": 0,
}
_EVAL_DEFAULTS = {
    "top_k": 32, "min_gt_iou": 0.5, "ap50_rule": "strict",
    "threads": os.cpu_count() or 1,
}
_GRADCHECK_DEFAULTS = {"trials": 100, "seed": 7}


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(msg: str) -> None:
    print(msg, file=sys.stdout)


def _add_opt_flags(sub: argparse.ArgumentParser) -> None:
    d = _OPT_DEFAULTS
    sub.add_argument("--lr", type=float, help=f"initial learning rate (default: {d['lr']})")
    sub.add_argument("--momentum", type=float, help=f"Nesterov momentum (default: {d['momentum']})")
    sub.add_argument("--weight-decay", type=float,
                     help=f"L2 weight decay on the weight matrix (default: {d['weight_decay']})")
    sub.add_argument("--decay-factor", type=float,
                     help=f"learning-rate division factor (default: {d['decay_factor']})")
    sub.add_argument("--decay-every", type=int,
                     help=f"epochs between learning-rate decays (default: {d['decay_every']})")
    sub.add_argument("--epochs", type=int, help=f"training epochs (default: {d['epochs']})")
    sub.add_argument("--batch-size", type=int, help=f"mini-batch size (default: {d['batch_size']})")
    sub.add_argument("--seed", type=int,
                     help=f"run seed for init and shuffling (default: {d['seed']})")


def _add_eval_flags(sub: argparse.ArgumentParser, with_top_k: bool = True) -> None:
    d = _EVAL_DEFAULTS
    if with_top_k:
        sub.add_argument("--top-k", type=int,
                         help=f"proposals kept per sample by rpn_score (default: {d['top_k']})")
    sub.add_argument("--min-gt-iou", type=float,
                     help=f"IoU threshold for GT proposal assignment (default: {d['min_gt_iou']})")
    sub.add_argument("--ap50-rule", choices=("strict", "geq"),
                     help=f"AP50 comparison: strict IoU>0.5 or geq IoU>=0.5 (default: {d['ap50_rule']})")
    sub.add_argument("--threads", type=int,
                     help=f"worker cap for evaluation/prediction (default: {d['threads']})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosground",
        description="Train and evaluate a cosine-scored proposal grounding model "
                    "over precomputed embedding datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ds = _SYNTH_DEFAULTS
    p_synth = sub.add_parser("synth", help="generate synthetic train/test dataset directories")
    p_synth.add_argument("--out", help="output root; writes <out>/train and <out>/test (required)")
    p_synth.add_argument("--seed", type=int, help=f"generator seed (default: {ds['seed']})")
    p_synth.add_argument("--n-train", type=int, help=f"training samples (default: {ds['n_train']})")
    p_synth.add_argument("--n-test", type=int, help=f"test samples (default: {ds['n_test']})")
    p_synth.add_argument("--p", type=int, help=f"proposals per sample (default: {ds['p']})")
    p_synth.add_argument("--d-img", type=int, help=f"image feature dim (default: {ds['d_img']})")
    p_synth.add_argument("--d-txt", type=int, help=f"text feature dim (default: {ds['d_txt']})")
    p_synth.add_argument("--noise", type=float, help=f"noise sigma (default: {ds['noise']})")

    p_train = sub.add_parser("train", help="train the transformation layer")
    p_train.add_argument("--train", help="training dataset directory (required)")
    p_train.add_argument("--val", help="validation dataset directory (required)")
    p_train.add_argument("--out", help="checkpoint output path (required)")
    p_train.add_argument("--epoch-log",
                         help="epoch log CSV path (default: <out>.epochs.csv)")
    _add_opt_flags(p_train)
    _add_eval_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--data", help="dataset directory (required)")
    p_eval.add_argument("--checkpoint", help="model checkpoint path (required)")
    p_eval.add_argument("--report", help="optional per-sample JSONL report path")
    _add_eval_flags(p_eval)

    p_pred = sub.add_parser("predict", help="write per-sample box predictions as JSONL")
    p_pred.add_argument("--data", help="dataset directory (required)")
    p_pred.add_argument("--checkpoint", help="model checkpoint path (required)")
    p_pred.add_argument("--out", help="output JSONL path (required)")
    _add_eval_flags(p_pred)

    p_abk = sub.add_parser("ablate-topk", help="train/evaluate once per proposal budget k")
    p_abk.add_argument("--train", help="training dataset directory (required)")
    p_abk.add_argument("--val", help="evaluation dataset directory (required)")
    p_abk.add_argument("--ks", help="comma-separated k values, e.g. 8,16,32 (required)")
    p_abk.add_argument("--out-csv", help="ablation CSV output path (required)")
    _add_opt_flags(p_abk)
    _add_eval_flags(p_abk, with_top_k=False)

    p_abe = sub.add_parser("ablate-encoders",
                           help="train/evaluate once per labeled dataset root")
    p_abe.add_argument("--dataset", action="append", metavar="LABEL=PATH",
                       help="labeled dataset root holding train/ and test/; repeatable (required)")
    p_abe.add_argument("--out-csv", help="ablation CSV output path (required)")
    _add_opt_flags(p_abe)
    _add_eval_flags(p_abe)

    dg = _GRADCHECK_DEFAULTS
    p_gc = sub.add_parser("gradcheck",
                          help="verify analytic gradients against central finite differences")
    p_gc.add_argument("--trials", type=int,
                      help=f"random configurations to check (default: {dg['trials']})")
    p_gc.add_argument("--seed", type=int, help=f"suite seed (default: {dg['seed']})")

    for p in (p_synth, p_train, p_eval, p_pred, p_abk, p_abe, p_gc):
        p.add_argument("--config", help="JSON file of flag keys; explicit flags override it")
    return parser


_COMMAND_KEYS = {
    "synth": {**_SYNTH_DEFAULTS, "out": None},
    "train": {**_OPT_DEFAULTS, **_EVAL_DEFAULTS,
              "train": None, "val": None, "out": None, "epoch_log": None},
    "eval": {**_EVAL_DEFAULTS, "data": None, "checkpoint": None, "report": None},
    "predict": {**_EVAL_DEFAULTS, "data": None, "checkpoint": None, "out": None},
    "ablate-topk": {**{k: v for k, v in {**_OPT_DEFAULTS, **_EVAL_DEFAULTS}.items() if k != "top_k"},
                    "train": None, "val": None, "ks": None, "out_csv": None},
    "ablate-encoders": {**_OPT_DEFAULTS, **_EVAL_DEFAULTS,
                        "dataset": None, "out_csv": None},
    "gradcheck": dict(_GRADCHECK_DEFAULTS),
}


class FlagError(ValueError):
    """Bad flag or config value."""


def _merge(args: argparse.Namespace) -> SimpleNamespace:
    known = _COMMAND_KEYS[args.command]
    merged = dict(known)
    if args.config is not None:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise FlagError(f"config file not found: {cfg_path}")
        try:
            from_file = json.loads(cfg_path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise FlagError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(from_file, dict):
            raise FlagError("config file must hold a JSON object")
        unknown = sorted(set(from_file) - set(known))
        if unknown:
            raise FlagError(f"config keys not recognized for {args.command!r}: {unknown}")
        merged.update(from_file)
    for key in known:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    return SimpleNamespace(**merged)


def _require_opt(opts: SimpleNamespace, *names: str) -> None:
    for name in names:
        if getattr(opts, name) is None:
            raise FlagError(f"--{name.replace('_', '-')} is required")


def _run_config(opts: SimpleNamespace, **paths) -> RunConfig:
    optimizer = OptimizerConfig(
        lr0=opts.lr,
        momentum=opts.momentum,
        weight_decay=opts.weight_decay,
        decay_factor=opts.decay_factor,
        decay_every_epochs=opts.decay_every,
        epochs=opts.epochs,
        batch_size=opts.batch_size,
        seed=opts.seed,
    )
    return RunConfig(
        optimizer=optimizer,
        top_k=getattr(opts, "top_k", 32),
        min_gt_iou=opts.min_gt_iou,
        strict_ap50=opts.ap50_rule == "strict",
        threads=opts.threads,
        **paths,
    )


def _eval_config(opts: SimpleNamespace) -> RunConfig:
    return RunConfig(
        top_k=opts.top_k,
        min_gt_iou=opts.min_gt_iou,
        strict_ap50=opts.ap50_rule == "strict",
        threads=opts.threads,
    )


def _cmd_synth(opts: SimpleNamespace) -> int:
    _require_opt(opts, "out")
    result = generate_synthetic(
        opts.out,
        n_train=opts.n_train,
        n_test=opts.n_test,
        p=opts.p,
        d_img=opts.d_img,
        d_txt=opts.d_txt,
        noise_sigma=opts.noise,
        seed=opts.seed,
    )
    _say(f"wrote {opts.n_train} train / {opts.n_test} test samples "
         f"(p={opts.p}, d_img={opts.d_img}, d_txt={opts.d_txt}, noise={opts.noise}, seed={opts.seed})")
    _emit(str(result.train_dir))
    _emit(str(result.test_dir))
    return EXIT_OK


def _cmd_train(opts: SimpleNamespace) -> int:
    _require_opt(opts, "train", "val", "out")
    cfg = _run_config(opts, train_dir=opts.train, val_dir=opts.val, checkpoint_path=opts.out)
    result = train(cfg)
    log_path = Path(opts.epoch_log) if opts.epoch_log else Path(str(opts.out) + ".epochs.csv")
    write_epoch_log(result.log, log_path)
    for row in result.log:
        _say(f"epoch {row.epoch:>3}  lr {row.lr:.2e}  loss {row.mean_train_loss:.6f}  "
             f"val_ap50 {row.val_ap50:.4f}  skipped {row.skipped_samples}")
    _emit(str(cfg.checkpoint_path))
    _emit(str(log_path))
    return EXIT_OK


def _load_model_for(opts: SimpleNamespace, data_dir: str):
    meta = load_meta(data_dir)
    return load_checkpoint(opts.checkpoint, expected_dims=(meta.d_img, meta.d_txt))


def _cmd_eval(opts: SimpleNamespace) -> int:
    _require_opt(opts, "data", "checkpoint")
    model = _load_model_for(opts, opts.data)
    report = evaluate(model, opts.data, _eval_config(opts))
    _say(f"ap50 {report.ap50:.4f}  oracle_recall {report.oracle_recall:.4f}  "
         f"n_samples {report.n_samples}")
    _emit("ap50,oracle_recall,n_samples")
    _emit(f"{report.ap50!r},{report.oracle_recall!r},{report.n_samples}")
    if opts.report is not None:
        out = Path(opts.report)
        lines = [
            json.dumps({
                "sample_id": r.sample_id,
                "box": r.predicted_box.as_list(),
                "predicted_index": r.predicted_index,
                "score": r.max_score,
                "hit": r.hit,
            }, separators=(",", ":"))
            for r in report.per_sample
        ]
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
        _emit(str(out))
    return EXIT_OK


def _cmd_predict(opts: SimpleNamespace) -> int:
    _require_opt(opts, "data", "checkpoint", "out")
    model = _load_model_for(opts, opts.data)
    out = predict(model, opts.data, _eval_config(opts), opts.out)
    _say(f"wrote predictions for {opts.data} to {out}")
    _emit(str(out))
    return EXIT_OK


def _parse_ks(raw: str) -> list[int]:
    try:
        ks = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise FlagError(f"--ks must be comma-separated integers, got {raw!r}") from exc
    if not ks or any(k < 1 for k in ks):
        raise FlagError(f"--ks needs one or more positive integers, got {raw!r}")
    return ks


def _cmd_ablate_topk(opts: SimpleNamespace) -> int:
    _require_opt(opts, "train", "val", "ks", "out_csv")
    ks = _parse_ks(opts.ks) if isinstance(opts.ks, str) else [int(k) for k in opts.ks]
    cfg = _run_config(opts, train_dir=opts.train, val_dir=opts.val)
    result = ablate_top_k(cfg, ks)
    out = Path(opts.out_csv)
    out.write_text(result.to_csv(), encoding="utf-8")
    _say(result.to_text())
    _emit(str(out))
    return EXIT_OK


def _cmd_ablate_encoders(opts: SimpleNamespace) -> int:
    _require_opt(opts, "dataset", "out_csv")
    entries = opts.dataset if isinstance(opts.dataset, list) else [opts.dataset]
    pairs = []
    for entry in entries:
        label, sep, path = str(entry).partition("=")
        if not sep or not label or not path:
            raise FlagError(f"--dataset must look like LABEL=PATH, got {entry!r}")
        pairs.append((label, Path(path)))
    cfg = _run_config(opts)
    result = ablate_encoders(pairs, cfg)
    out = Path(opts.out_csv)
    out.write_text(result.to_csv(), encoding="utf-8")
    _say(result.to_text())
    _emit(str(out))
    return EXIT_OK


def _cmd_gradcheck(opts: SimpleNamespace) -> int:
    result = run_gradcheck(trials=opts.trials, seed=opts.seed)
    _say(f"gradcheck: {result.trials} trials, {result.coords_checked} coordinates, "
         f"max relative error {result.max_rel_err:.3e} "
         f"({'PASS' if result.passed else 'FAIL'} at {result.tolerance:.0e})")
    _emit(repr(result.max_rel_err))
    return EXIT_OK if result.passed else EXIT_NUMERIC


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "ablate-topk": _cmd_ablate_topk,
    "ablate-encoders": _cmd_ablate_encoders,
    "gradcheck": _cmd_gradcheck,
}


def _fail(code: int, exc: BaseException) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help and flag errors
        return int(exc.code or 0)
    try:
        opts = _merge(args)
        return _HANDLERS[args.command](opts)
    except FlagError as exc:
        return _fail(EXIT_BAD_FLAGS, exc)
    except (DatasetError, CheckpointError, FileNotFoundError, NotADirectoryError) as exc:
        return _fail(EXIT_DATASET, exc)
    except DegenerateModelError as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_BAD_FLAGS, exc)


if __name__ == "__main__":
    sys.exit(main())
