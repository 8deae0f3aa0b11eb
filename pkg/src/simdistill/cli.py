"""Command-line entry point.

Usage::

    simdistill gen-data --out data --seed 0
    simdistill distill --data data --out run --method ours-2q
    simdistill eval --data data --checkpoint run/student.ckpt --out run --metric all
    simdistill ablate --data data --out sweep --axis temperature

Exit codes: 0 success, 2 usage, 3 I/O, 4 constraint violation.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data_io import (
    Dataset,
    SyntheticSpec,
    generate,
    read_embeddings,
    read_labels,
    write_embeddings,
    write_labels,
)
from .distill import DistillConfig, distill, write_metrics_csv
from .embedding import normalize_rows
from .errors import (
    BadMagic,
    BankSmallerThanBatch,
    ConfigError,
    SimDistillError,
    SizeMismatch,
    TruncatedFile,
)
from .evaluation import ProbeConfig, cluster_alignment_accuracy, linear_probe, nn_accuracy
from .student import StudentNetwork, load_checkpoint, predict, save_checkpoint

EXIT_USAGE, EXIT_IO, EXIT_CONSTRAINT = 2, 3, 4

METHOD_FLAGS = {"ours-1q": "ours1q", "ours-2q": "ours2q", "reg": "reg", "reg-bn": "reg_bn", "cc": "cc"}
ABLATE_DEFAULTS = {
    "temperature": "0.02,0.04,0.1,0.5,1.0",
    "bank": "256,1024,2048,4096",
    "momentum": "0,0.5,0.999",
}
CHECKPOINT_NAME = "student.ckpt"
METRICS_NAME = "metrics.csv"
EVAL_NAME = "eval.csv"


class UsageError(Exception):
    pass


def _files(split):
    return f"{split}_raw.emb", f"{split}_labels.lbl", f"{split}_teacher.emb"


# ---------------------------------------------------------------- helpers


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(exist_ok=True)  # parent must exist
    return out


def load_split(data_dir, split) -> Dataset:
    raw_f, lbl_f, t_f = (Path(data_dir) / f for f in _files(split))
    raw = read_embeddings(raw_f).data
    labels = read_labels(lbl_f)
    teacher = read_embeddings(t_f)
    return Dataset(raw, labels, teacher)


def _spec_from(args) -> SyntheticSpec:
    return SyntheticSpec(
        num_classes=args.num_classes,
        train_count=args.train_count,
        val_count=args.val_count,
        latent_dim=args.latent_dim,
        raw_dim=args.raw_dim,
        teacher_dim=args.teacher_dim,
        class_spread=args.class_spread,
        sample_noise=args.sample_noise,
        teacher_noise=args.teacher_noise,
        seed=args.seed,
    )


def _config_from(args, **overrides) -> DistillConfig:
    cfg = dict(
        method=METHOD_FLAGS[args.method],
        tau=args.tau,
        bank_capacity=args.bank,
        momentum_m=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        cc_k=args.cc_k,
        lr=args.lr,
        aug_scale=args.aug_scale,
    )
    cfg.update(overrides)
    return DistillConfig(**cfg)


def _build_student(args, train: Dataset, method: str) -> StudentNetwork:
    teacher_dim = train.teacher_cache.dim
    out_dim = args.student_dim
    if out_dim is None:
        out_dim = teacher_dim if method == "ours1q" else 64
    if method == "ours1q" and out_dim != teacher_dim:
        raise ConfigError(f"ours-1q needs --student-dim equal to the teacher dim {teacher_dim}, got {out_dim}")
    return StudentNetwork([train.raw.shape[1], args.hidden_dim, out_dim], seed=args.seed)


def _as_stored(net: StudentNetwork) -> StudentNetwork:
    """Round parameters to checkpoint precision."""
    net.set_params(net.params.astype(np.float32).astype(np.float64))
    return net


def _student_nn(net, train, val, k_neighbors=1) -> float:
    tr = normalize_rows(predict(net, train.raw))
    va = normalize_rows(predict(net, val.raw))
    return nn_accuracy(tr, train.labels, va, val.labels, k_neighbors)


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    out = _out_dir(args)
    train, val = generate(_spec_from(args))
    for split, ds in (("train", train), ("val", val)):
        raw_f, lbl_f, t_f = _files(split)
        write_embeddings(out / raw_f, ds.raw)
        write_labels(out / lbl_f, ds.labels)
        write_embeddings(out / t_f, ds.teacher_cache)
    # report on the stored (32-bit) cache, which is what later commands read
    train_t = read_embeddings(out / _files("train")[2]).data
    val_t = read_embeddings(out / _files("val")[2]).data
    acc = nn_accuracy(train_t, train.labels, val_t, val.labels)
    print(f"teacher_nn_acc={acc:.4f}")
    return 0


def _run_distill(args, train, val, **overrides):
    cfg = _config_from(args, **overrides)
    net = _build_student(args, train, cfg.method)
    net, records = distill(train, None, net, cfg, val=val if args.probe else None)
    return _as_stored(net), records


def cmd_distill(args) -> int:
    data = Path(args.data)
    train, val = load_split(data, "train"), load_split(data, "val")
    out = _out_dir(args)
    net, records = _run_distill(args, train, val)
    save_checkpoint(out / CHECKPOINT_NAME, net)
    write_metrics_csv(out / METRICS_NAME, records)
    print(f"final_nn_acc={_student_nn(net, train, val, args.k_neighbors):.4f}")
    return 0


def cmd_eval(args) -> int:
    data = Path(args.data)
    train, val = load_split(data, "train"), load_split(data, "val")
    if args.use_teacher:
        tr, va = train.teacher_cache.data, val.teacher_cache.data
    else:
        ckpt = Path(args.checkpoint) if args.checkpoint else Path(args.out) / CHECKPOINT_NAME
        net = load_checkpoint(ckpt)
        if net.input_dim != train.raw.shape[1]:
            raise ConfigError(f"checkpoint expects {net.input_dim} inputs, data has {train.raw.shape[1]}")
        tr, va = normalize_rows(predict(net, train.raw)), normalize_rows(predict(net, val.raw))
    out = _out_dir(args)
    metrics = ("nn", "ca", "linear") if args.metric == "all" else (args.metric,)
    rows = []
    for m in metrics:
        if m == "nn":
            rows.append(("nn_acc", nn_accuracy(tr, train.labels, va, val.labels, args.k_neighbors)))
        elif m == "ca":
            k = args.ca_k or int(train.labels.max()) + 1
            rows.append(("ca_acc", cluster_alignment_accuracy(tr, train.labels, va, val.labels, k, seed=args.seed)))
        else:
            probe = ProbeConfig(epochs=args.probe_epochs, seed=args.seed)
            rows.append(("linear_acc", linear_probe(tr, train.labels, va, val.labels, probe)))
    _write_rows(out / EVAL_NAME, ["metric", "value"], [(k, _fmt(v)) for k, v in rows])
    for k, v in rows:
        print(f"{k}={v:.4f}")
    return 0


_AXIS_FIELD = {"temperature": "tau", "bank": "bank_capacity", "momentum": "momentum_m"}


def parse_values(axis: str, text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"malformed value list {text!r}") from None
    if not vals:
        raise UsageError("empty value list")
    if axis == "bank":
        if any(v != int(v) or v < 1 for v in vals):
            raise UsageError("bank sizes must be positive integers")
        vals = [int(v) for v in vals]
    return vals


def _ablate_one(job):
    args, value = job
    data = Path(args.data)
    train, val = load_split(data, "train"), load_split(data, "val")
    net, _ = _run_distill(args, train, val, **{_AXIS_FIELD[args.axis]: value})
    return _student_nn(net, train, val, args.k_neighbors)


def cmd_ablate(args) -> int:
    values = parse_values(args.axis, args.values or ABLATE_DEFAULTS[args.axis])
    out = _out_dir(args)
    jobs = [(args, v) for v in values]
    if args.parallel and len(values) > 1:
        with ProcessPoolExecutor() as pool:
            accs = list(pool.map(_ablate_one, jobs))
    else:
        accs = [_ablate_one(j) for j in jobs]
    rows = [(str(v), _fmt(a)) for v, a in zip(values, accs)]
    _write_rows(out / f"ablate_{args.axis}.csv", ["value", "nn_acc"], rows)
    for v, a in rows:
        print(f"{args.axis}={v} nn_acc={float(a):.4f}")
    return 0


# ---------------------------------------------------------------- parser


def _common(p):
    p.add_argument("--out", default=".", help="output directory (created if absent)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="flat 'key = value' file; explicit flags win")


def _train_flags(p):
    p.add_argument("--data", default=".", help="directory written by gen-data")
    p.add_argument("--method", choices=sorted(METHOD_FLAGS), default="ours-2q")
    p.add_argument("--tau", type=float, default=0.04)
    p.add_argument("--bank", type=int, default=2048)
    p.add_argument("--momentum", type=float, default=0.999)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--hidden-dim", type=int, default=128)
    p.add_argument("--student-dim", type=int, default=None,
                   help="default: teacher dim for ours-1q, else 64")
    p.add_argument("--aug-scale", type=float, default=0.1,
                   help="augmentation noise as a fraction of per-column data std")
    p.add_argument("--cc-k", type=int, default=None, help="default: 4 x class count")
    p.add_argument("--k-neighbors", type=int, default=1)
    p.add_argument("--no-probe", dest="probe", action="store_false",
                   help="skip the per-epoch nearest-neighbour probe")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simdistill", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic train/val set with teacher cache")
    _common(g)
    d = SyntheticSpec()
    g.add_argument("--num-classes", type=int, default=d.num_classes)
    g.add_argument("--train-count", type=int, default=d.train_count)
    g.add_argument("--val-count", type=int, default=d.val_count)
    g.add_argument("--latent-dim", type=int, default=d.latent_dim)
    g.add_argument("--raw-dim", type=int, default=d.raw_dim)
    g.add_argument("--teacher-dim", type=int, default=d.teacher_dim)
    g.add_argument("--class-spread", type=float, default=d.class_spread)
    g.add_argument("--sample-noise", type=float, default=d.sample_noise)
    g.add_argument("--teacher-noise", type=float, default=d.teacher_noise)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("distill", help="train a student; write checkpoint and per-epoch metrics")
    _common(t)
    _train_flags(t)
    t.set_defaults(func=cmd_distill)

    e = sub.add_parser("eval", help="evaluate a checkpoint (or the teacher cache)")
    _common(e)
    e.add_argument("--data", default=".")
    e.add_argument("--checkpoint", default=None, help=f"default: <out>/{CHECKPOINT_NAME}")
    e.add_argument("--metric", choices=["nn", "ca", "linear", "all"], default="all")
    e.add_argument("--use-teacher", action="store_true")
    e.add_argument("--k-neighbors", type=int, default=1)
    e.add_argument("--ca-k", type=int, default=None, help="default: class count")
    e.add_argument("--probe-epochs", type=int, default=40)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="sweep one hyperparameter, one distill + NN eval per value")
    _common(a)
    _train_flags(a)
    a.add_argument("--axis", choices=sorted(_AXIS_FIELD), required=True)
    a.add_argument("--values", default=None, help="comma-separated; default depends on axis")
    a.add_argument("--parallel", action="store_true", help="run values in worker processes")
    a.set_defaults(func=cmd_ablate)
    return parser


def read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config_file(known.config)
    cmd = next((a for a in argv if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = subparsers.choices.get(cmd)
    if sp is None:
        return
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {cmd}")
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = raw.lower() in ("1", "true", "yes", "on")
            defaults[key] = flag
        else:
            try:
                defaults[key] = act.type(raw) if act.type else raw
            except ValueError:
                raise UsageError(f"bad value for {key}: {raw!r}") from None
            if act.choices is not None and defaults[key] not in act.choices:
                raise UsageError(f"{key} must be one of {sorted(act.choices)}")
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, BankSmallerThanBatch) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (OSError, BadMagic, TruncatedFile, SizeMismatch) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except SimDistillError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
