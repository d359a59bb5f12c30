"""Command line entry point: ``snnsmp {generate-data,train,evaluate,gradient-check}``.

Exit codes: 0 success, 1 verification failure or diverged training,
2 usage or configuration error, 3 I/O, data or checkpoint error.  Errors are
printed as one line ``ErrorClass: message`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .exceptions import CheckpointError, ConfigurationError, DatasetError, PropagationError, SNNError
from .experiments import RunConfig, evaluate, fit, preset
from .evaluation import write_band_csv, write_json, write_surface_csv
from .gradcheck import BLOCKS, check_instance, mc_check, pathwise_check
from .streams import philox
from .tasks import TASKS, generate, read_dataset, write_dataset

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(SNNError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _run_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_dict(_load_json(args.config))
    elif args.task:
        cfg = preset(args.task)
    else:
        raise UsageError("either --config or --task is required")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "scheme", None):
        cfg.train.scheme = args.scheme
        cfg.train.__post_init__()
    for flag, attr in (("iterations", "K"), ("lr_scale", "lr_scale"), ("snapshot_every", "snapshot_every")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg.train, attr, value)
    cfg.train.__post_init__()
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        raise ConfigurationError(f"--param {key}: value must be JSON, got {value!r}") from None


def write_log_csv(log, path, every=1) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "index", "loss", "grad_norm", "lr"])
        for k, q, loss, g, lr in log.records(every):
            w.writerow([k, q, repr(loss), repr(g), repr(lr)])
    return path


def cmd_generate_data(args) -> int:
    if args.config:
        cfg = RunConfig.from_dict(_load_json(args.config))
        task, count, seed, params = cfg.task.task, cfg.task.count, cfg.task.seed, dict(cfg.task.parameters)
    elif args.task:
        spec = preset(args.task).task
        task, count, seed, params = spec.task, spec.count, spec.seed, dict(spec.parameters)
    else:
        raise UsageError("either --config or --task is required")
    count = args.count if args.count is not None else count
    seed = args.seed if args.seed is not None else seed
    params.update(dict(_parse_param(p) for p in args.param))
    ds = generate(task, count, seed, **params)
    path = write_dataset(ds, _out_dir(args) / "dataset.json")
    print(f"wrote {path}: task={ds.task} count={ds.count} input_dim={ds.input_dim} label_dim={ds.label_dim} seed={ds.seed}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args)
    dataset = read_dataset(args.data) if args.data else cfg.task.generate()
    if (dataset.input_dim, dataset.label_dim) != (cfg.net.input_dim, cfg.net.label_dim):
        raise ConfigurationError(
            f"dataset has input_dim {dataset.input_dim}, label_dim {dataset.label_dim}; "
            f"network expects {cfg.net.input_dim}, {cfg.net.label_dim}"
        )
    resume = load_checkpoint(args.resume) if args.resume else None

    def snapshot(ckpt):
        save_checkpoint(ckpt, out / f"checkpoint_{ckpt.iteration:09d}.json")

    try:
        controls, log = fit(cfg, dataset, resume, snapshot)
    except PropagationError as exc:
        partial = getattr(exc, "log", None)
        if partial is not None:
            write_log_csv(partial, out / "training_log.csv", cfg.train.log_every)
        raise
    final = Checkpoint.after(cfg.train.K, controls, log, cfg)
    save_checkpoint(final, out / "checkpoint.json")
    write_log_csv(log, out / "training_log.csv", cfg.train.log_every)
    print(f"trained {cfg.task.task}: K={cfg.train.K} tail_loss={log.tail_mean(0.05):.6g} -> {out / 'checkpoint.json'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = RunConfig.from_dict(_load_json(args.config)) if args.config else RunConfig.from_dict(ckpt.config)
    if cfg.net != ckpt.net:
        raise CheckpointError("checkpoint network does not match the evaluation config")
    if args.seed is not None:
        cfg.eval.seed = int(args.seed)
    if args.samples is not None:
        cfg.eval.samples = int(args.samples)
    out = _out_dir(args)
    metrics, artifacts = evaluate(cfg, ckpt.controls, ckpt.log)
    metrics = {"task": cfg.task.task, "iteration": ckpt.iteration, "config_hash": ckpt.config_hash, **metrics}
    write_json(metrics, out / "metrics.json")
    if "band" in artifacts:
        write_band_csv(artifacts["band"], out / "band.csv", artifacts["true_mean"])
    if "surface" in artifacts:
        write_surface_csv(*artifacts["surface"], out / "surface.csv")
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_gradient_check(args) -> int:
    opts = {"width": 2, "depth": 3, "h": 0.5, "count": 4, "sigma": 0.3, "M": 10_000}
    if args.config:
        extra = _load_json(args.config)
        unknown = set(extra) - set(opts)
        if unknown:
            raise ConfigurationError(f"unknown gradient-check fields: {', '.join(sorted(unknown))}")
        opts.update(extra)
    seed = 0 if args.seed is None else int(args.seed)
    controls, dataset = check_instance(opts["width"], opts["depth"], opts["h"], opts["count"], opts["sigma"], seed)
    noise = philox(seed, 6).standard_normal((controls.depth, controls.width))
    flip = args.inject_sign_flip
    results = [
        ("pathwise", pathwise_check(controls, dataset.inputs[0], dataset.labels[0], noise, flip=flip)),
        ("monte-carlo", mc_check(controls, dataset, int(opts["M"]), seed, workers=args.workers, flip=flip)),
    ]
    failed = []
    for name, reports in results:
        for r in reports:
            status = "ok" if r.passed else "FAIL"
            print(f"{name:12s} {r.block:10s} max_rel_error={r.max_rel_error:.3e} tol={r.tolerance:.0e} at {list(r.worst_index)} {status}")
            if not r.passed:
                failed.append(f"{name}:{r.block}")
    if failed:
        print(f"ToleranceExceeded: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snnsmp", description="Train stochastic neural networks by stochastic maximum principle SGD.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, task=True):
        p.add_argument("--config", help="run configuration JSON")
        if task:
            p.add_argument("--task", choices=TASKS, help="use the built-in configuration for a task")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1, help="worker threads (never changes results)")

    g = sub.add_parser("generate-data", help="write a seeded dataset file")
    common(g)
    g.add_argument("--count", type=int)
    g.add_argument("--param", action="append", default=[], metavar="KEY=JSON", help="generator parameter override")
    g.set_defaults(func=cmd_generate_data)

    t = sub.add_parser("train", help="train and write checkpoints and the training log")
    common(t)
    t.add_argument("--data", help="dataset file from generate-data (default: generate from the config)")
    t.add_argument("--scheme", choices=("right", "left"))
    t.add_argument("--iterations", type=int, help="override K")
    t.add_argument("--lr-scale", dest="lr_scale", type=float)
    t.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    t.add_argument("--resume", help="continue from this checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint and write reports")
    common(e, task=False)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--samples", type=int, help="samples per grid point or observation")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("gradient-check", help="finite-difference verification of the gradients")
    common(c, task=False)
    c.add_argument("--inject-sign-flip", choices=BLOCKS, help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradient_check)
    return parser


def _fail(exc) -> None:
    message = " ".join(str(exc).split())
    print(f"{type(exc).__name__}: {message}", file=sys.stderr)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.workers < 1:
            raise UsageError(f"--workers must be >= 1, got {args.workers}")
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        _fail(exc)
        return EXIT_USAGE
    except (DatasetError, CheckpointError, OSError) as exc:
        _fail(exc)
        return EXIT_IO
    except PropagationError as exc:
        _fail(exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
