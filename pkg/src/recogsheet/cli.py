"""Command-line front end.

Every command that takes ``--out-dir`` writes ``config.json`` there, holding
the command name and every effective parameter; ``recogsheet rerun
config.json`` replays it. Exit codes: 0 ok, 2 invalid argument, 3 invalid
data, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datasets as dsets
from . import evaluation, reliability, temporal
from . import model as rls
from .errors import DataIOError, InvalidArgument, InvalidData, RecogError
from .reports import write_json

EXIT_OK = 0
EXIT_INVALID_ARGUMENT = 2
EXIT_INVALID_DATA = 3
EXIT_IO = 4

CONFIG_NAME = "config.json"


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _int_list(text):
    """``"1,2,5-7"`` -> ``[1, 2, 5, 6, 7]``."""
    if text is None or text == "":
        return None
    if isinstance(text, list):
        return [int(v) for v in text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _float_list(text):
    if text is None or text == "":
        return None
    if isinstance(text, list):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _load(args):
    if not args.manifest:
        raise InvalidArgument("--manifest is required")
    return dsets.load_dataset(args.manifest)


def _select(ds, args, split=None):
    return dsets.select(
        ds,
        days=_int_list(args.days),
        split=split if split is not None else args.split,
        variant=args.variant,
        classes=_int_list(args.classes),
        first_k=args.first_k,
    )


def _out_dir(args) -> Path:
    if not args.out_dir:
        raise InvalidArgument("--out-dir is required")
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create {out}: {exc}") from exc
    return out


def _echo(args, out: Path, **resolved) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir", "config_file")}
    params.update(resolved)
    write_json(out / CONFIG_NAME, params)


def _levels(args):
    levels = _float_list(args.levels) or [c * 100 for c in reliability.DEFAULT_LEVELS]
    for c in levels:
        if not 0 < c <= 100:
            raise InvalidArgument(f"confidence levels are percents in (0, 100], got {c}")
    return [round(c, 10) for c in levels]


def _t_range(args, num_classes, full=False):
    """Resolved ``(t_min, t_max)``; ``full`` extends the default top end to ``T``."""
    default = reliability.default_t_range(num_classes)
    lo = args.t_min if args.t_min is not None else default.start
    hi = args.t_max if args.t_max is not None else (num_classes if full else default.stop - 1)
    if not 2 <= lo <= hi <= num_classes:
        raise InvalidArgument(f"t range [{lo}, {hi}] must lie within [2, {num_classes}]")
    return lo, hi


def _train_test(args):
    ds = _load(args)
    train = _select(ds, args, split="train")
    test = _select(ds, args, split="test")
    return train, test


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    out = _out_dir(args)
    spec = dsets.SynthSpec(
        num_classes=args.num_classes,
        num_categories=args.num_categories,
        dim=args.dim,
        frames_per_session=args.frames,
        num_days=args.num_days,
        class_separation=args.separation,
        within_category_shrink=args.shrink,
        noise_sigma=args.noise,
        temporal_rho=args.rho,
        day_drift_sigma=args.drift,
        seed=args.seed,
        name=args.name,
    )
    manifest = dsets.save_dataset(dsets.synth_generate(spec), out, encoding=args.encoding)
    _echo(args, out)
    print(manifest)


def cmd_train(args):
    out = _out_dir(args)
    data = _select(_load(args), args, split=args.split or "train")
    model = rls.fit_batch(data.features, data.class_id, args.lam, data.num_classes)
    path = rls.save_checkpoint(model, out / "model.rls")
    _echo(args, out, split=args.split or "train")
    print(path)


def cmd_eval(args):
    if not args.checkpoint:
        raise InvalidArgument("--checkpoint is required")
    model = rls.load_checkpoint(args.checkpoint)
    data = _select(_load(args), args, split=args.split or "test")
    result = evaluation.evaluate(model, data).to_dict()
    if args.out_dir:
        out = _out_dir(args)
        write_json(out / "eval.json", result)
        _echo(args, out, split=args.split or "test")
    print(json.dumps(result, sort_keys=True))


def cmd_xmatrix(args):
    out = _out_dir(args)
    ds = _load(args)
    base = dsets.select(ds, days=_int_list(args.days), variant=args.variant, classes=_int_list(args.classes))
    key = base.day if args.by == "day" else base.variant
    values = sorted(set(key.tolist()))
    conditions = []
    for v in values:
        sel = dict(days=v) if args.by == "day" else dict(variant=v)
        tag = f"day{v}" if args.by == "day" else str(v)
        conditions.append(
            (tag, dsets.select(base, split=args.train_split, **sel), dsets.select(base, split=args.test_split, **sel))
        )
    cm = evaluation.cross_matrix(conditions, args.lam, args.train_k, not args.no_pooled, workers=args.workers)
    cm.write_csv(out / "xmatrix.csv")
    _echo(args, out)
    print((out / "xmatrix.csv").read_text(), end="")


def cmd_incremental(args):
    out = _out_dir(args)
    ds = _load(args)
    source_days = _int_list(args.source_days)
    if not source_days or args.test_day is None:
        raise InvalidArgument("--source-days and --test-day are required")
    common = dict(variant=args.variant, classes=_int_list(args.classes))
    sources = [dsets.select(ds, days=d, split=args.train_split, first_k=args.first_k, **common) for d in source_days]
    test = dsets.select(ds, days=args.test_day, split=args.test_split, **common)
    curve = evaluation.incremental_curve(sources, test, args.step, args.lam, tags=[f"day{d}" for d in source_days])
    curve.write_csv(out / "curve.csv")
    _echo(args, out)
    print(out / "curve.csv")


def cmd_reliability(args):
    out = _out_dir(args)
    train, test = _train_test(args)
    lo, hi = _t_range(args, train.num_classes)
    levels = _levels(args)
    dists = reliability.accuracy_distributions(
        train, test, range(lo, hi + 1), args.trials, not args.no_dedupe, args.seed, args.lam, args.workers
    )
    reliability.write_distribution_csv(dists, out / "distribution.csv")
    reliability.write_summary_csv(dists, out / "summary.csv")
    curves = [reliability.level_curve(dists, c / 100) for c in levels]
    reliability.write_level_curves_csv(curves, out / "levels.csv")
    _echo(args, out, t_min=lo, t_max=hi, levels=levels)
    print((out / "summary.csv").read_text(), end="")


def cmd_filter(args):
    out = _out_dir(args)
    ds = _load(args)
    windows = _int_list(args.windows) or list(temporal.DEFAULT_WINDOWS)
    if args.checkpoint:
        model = rls.load_checkpoint(args.checkpoint)
    else:
        train = _select(ds, args, split="train")
        model = rls.fit_batch(train.features, train.class_id, args.lam, train.num_classes)
    test = _select(ds, args, split=args.split or "test")
    trace = temporal.PredictionTrace.from_model(model, test)
    sweep = temporal.filter_sweep(trace, windows, args.frame_period, args.tie_rule)
    sweep.write_csv(out / "sweep.csv")
    resolved = dict(windows=windows, split=args.split or "test")
    if args.reliability:
        train, test = _train_test(args)
        lo, hi = _t_range(args, train.num_classes)
        curves = temporal.filtered_level_curves(
            train, test, windows, range(lo, hi + 1), args.trials, not args.no_dedupe, args.seed,
            args.lam, args.level / 100, args.tie_rule, True, args.workers,
        )
        temporal.write_filtered_levels_csv(curves, out / "filtered_levels.csv", args.frame_period)
        resolved.update(t_min=lo, t_max=hi)
    _echo(args, out, **resolved)
    print((out / "sweep.csv").read_text(), end="")


def cmd_datasheet(args):
    out = _out_dir(args)
    train, test = _train_test(args)
    lo, hi = _t_range(args, train.num_classes, full=True)
    levels = _levels(args)
    dists = reliability.accuracy_distributions(
        train, test, range(lo, hi + 1), args.trials, not args.no_dedupe, args.seed, args.lam, args.workers
    )
    sheet = reliability.datasheet(dists, [c / 100 for c in levels], args.target_acc)
    sheet.write_csv(out / "datasheet.csv")
    text = sheet.render()
    (out / "datasheet.txt").write_text(text)
    _echo(args, out, t_min=lo, t_max=hi, levels=levels)
    print(text, end="")


def cmd_rerun(args):
    path = Path(args.config_file)
    try:
        saved = json.loads(path.read_text())
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidData(f"{path}: malformed JSON: {exc}") from exc
    command = saved.get("command")
    if command not in COMMANDS:
        raise InvalidData(f"{path}: unknown command {command!r}")
    ns = build_parser().parse_args([command])
    for k, v in saved.items():
        setattr(ns, k, v)
    ns.out_dir = args.out_dir or str(path.parent)
    return ns.func(ns)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "xmatrix": cmd_xmatrix,
    "incremental": cmd_incremental,
    "reliability": cmd_reliability,
    "filter": cmd_filter,
    "datasheet": cmd_datasheet,
}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p, split_default=None):
    p.add_argument("--manifest", help="dataset manifest.json")
    p.add_argument("--out-dir", help="directory for reports and the config echo")
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness (default 0)")
    p.add_argument("--workers", type=int, default=1, help="parallel workers; results do not depend on it")
    p.add_argument("--lambda", dest="lam", type=float, default=rls.DEFAULT_LAMBDA, help="ridge regularizer (default 1.0)")
    p.add_argument("--days", help="comma list or range of days, e.g. 1,2 or 1-3")
    p.add_argument("--split", choices=dsets.SPLITS, default=split_default, help="train or test")
    p.add_argument("--variant", help="variant tag, e.g. a crop condition")
    p.add_argument("--classes", help="class subset (comma list); ids are re-indexed densely")
    p.add_argument("--first-k", type=int, help="keep the first k frames per class")


def _trials(p, t_max_default="T-2"):
    p.add_argument("--t-min", type=int, help="smallest subset size (default 2)")
    p.add_argument("--t-max", type=int, help=f"largest subset size (default {t_max_default})")
    p.add_argument("--trials", type=int, default=reliability.DEFAULT_TRIALS, help="trials per t (default 400)")
    p.add_argument("--no-dedupe", action="store_true", help="allow repeated class subsets")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recogsheet",
        description="Incremental RLS recognition experiments and reliability datasheets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-day dataset")
    _common(p)
    d = dsets.SynthSpec()
    p.add_argument("--num-classes", type=int, default=d.num_classes)
    p.add_argument("--num-categories", type=int, default=d.num_categories)
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--frames", type=int, default=d.frames_per_session, help="frames per session")
    p.add_argument("--num-days", type=int, default=d.num_days)
    p.add_argument("--separation", type=float, default=d.class_separation)
    p.add_argument("--shrink", type=float, default=d.within_category_shrink)
    p.add_argument("--noise", type=float, default=d.noise_sigma)
    p.add_argument("--rho", type=float, default=d.temporal_rho, help="AR(1) frame correlation")
    p.add_argument("--drift", type=float, default=d.day_drift_sigma, help="per-day class mean shift")
    p.add_argument("--encoding", choices=("bin", "csv"), default="bin")
    p.add_argument("--name", default=d.name)

    p = sub.add_parser("train", help="fit a model on a selection and save a checkpoint")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint; JSON on stdout")
    _common(p)
    p.add_argument("--checkpoint")

    p = sub.add_parser("xmatrix", help="train-condition x test-condition accuracy matrix")
    _common(p)
    p.add_argument("--by", choices=("day", "variant"), default="day")
    p.add_argument("--train-split", default="train", choices=dsets.SPLITS)
    p.add_argument("--test-split", default="test", choices=dsets.SPLITS)
    p.add_argument("--train-k", type=int, help="training frames per class for every row")
    p.add_argument("--no-pooled", action="store_true", help="omit the pooled all-conditions row")

    p = sub.add_parser("incremental", help="learning curve of frame-by-frame training")
    _common(p)
    p.add_argument("--source-days", help="training days in feeding order, e.g. 1,2,3")
    p.add_argument("--test-day", type=int)
    p.add_argument("--train-split", default="train", choices=dsets.SPLITS)
    p.add_argument("--test-split", default="test", choices=dsets.SPLITS)
    p.add_argument("--step", type=int, default=10, help="examples per class between checkpoints")

    p = sub.add_parser("reliability", help="accuracy distributions and confidence level curves")
    _common(p)
    _trials(p)
    p.add_argument("--levels", help="confidence levels in percent (default 98,90,80,70,50)")

    p = sub.add_parser("filter", help="temporal majority-filter sweep")
    _common(p)
    p.add_argument("--checkpoint", help="model to use; default trains on the train split")
    p.add_argument("--windows", help="window lengths, e.g. 1,3,5 or 1-50 (default 1-50)")
    p.add_argument("--frame-period", type=float, default=temporal.DEFAULT_FRAME_PERIOD, help="seconds per frame")
    p.add_argument("--tie-rule", choices=sorted(temporal.TIE_RULES), default="summed-score")
    p.add_argument("--reliability", action="store_true", help="also write filtered level curves")
    p.add_argument("--level", type=float, default=80.0, help="confidence level in percent for --reliability")
    _trials(p)

    p = sub.add_parser("datasheet", help="max objects recognizable at a target accuracy")
    _common(p)
    _trials(p, t_max_default="T")
    p.add_argument("--levels", help="confidence levels in percent (default 98,90,80,70,50)")
    p.add_argument("--target-acc", type=float, default=reliability.DEFAULT_TARGET)

    for name, fn in COMMANDS.items():
        sub.choices[name].set_defaults(func=fn)

    p = sub.add_parser("rerun", help="replay a run from its config.json")
    p.add_argument("config_file")
    p.add_argument("--out-dir", help="write outputs here instead of next to the config")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_ARGUMENT
    except InvalidData as exc:
        print(f"invalid data: {exc}", file=sys.stderr)
        return EXIT_INVALID_DATA
    except (DataIOError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RecogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
