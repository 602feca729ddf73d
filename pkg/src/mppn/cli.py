"""Command-line interface: analyze, train, eval, forecast, synth, gates.

Reports go to stdout as JSON; file artifacts (checkpoints, CSVs) go where
flagged.  Exit codes: 0 ok, 2 configuration error, 3 data error, 4 runtime
or divergence error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import synth as synthmod
from . import training
from .errors import ConfigError, DataError, DivergenceError
from .model import write_gates_csv
from .training import RunConfig


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="run seed")
    parser.add_argument("--data", type=str, default=None, help="dataset CSV path")
    parser.add_argument("--config", type=str, default=None, help="run-config file (key=value or JSON)")
    parser.add_argument("--out", type=str, default=None, help="output path")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mppn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="predictability report and detected periods")
    _common(a)
    a.add_argument("--q", type=str, default="10", help="bin count, or comma list to sweep")
    a.add_argument("--binning", choices=["equal-frequency", "equal-width"], default="equal-frequency")
    a.add_argument("--top-k", type=int, default=2)
    a.add_argument("--periods", type=_int_list, default=None, help="override, skips detection")
    a.add_argument("--split-scheme", choices=["ett", "standard"], default="standard")
    a.add_argument("--no-date-column", action="store_true")
    a.add_argument("--fill-missing", action="store_true")

    t = sub.add_parser("train", help="fit a model and write a checkpoint")
    _common(t)
    t.add_argument("--model", choices=training.MODEL_KINDS, default=None)
    t.add_argument("--split-scheme", choices=["ett", "standard"], default=None)
    t.add_argument("--lookback", type=int, default=None)
    t.add_argument("--horizon", type=int, default=None)
    t.add_argument("--hidden", type=int, default=None)
    t.add_argument("--resolutions", type=_int_list, default=None)
    t.add_argument("--periods", type=_int_list, default=None)
    t.add_argument("--top-k", type=int, default=None)
    t.add_argument("--overlap", action="store_true", default=None)
    t.add_argument("--moving-average", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--weight-decay", type=float, default=None)
    t.add_argument("--max-epochs", type=int, default=None)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--no-date-column", action="store_true", default=None)
    t.add_argument("--fill-missing", action="store_true", default=None)

    e = sub.add_parser("eval", help="metrics of a checkpoint on one split")
    _common(e)
    e.add_argument("--ckpt", type=str, required=True)
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.add_argument("--batch-size", type=int, default=None)

    f = sub.add_parser("forecast", help="predictions CSV for one origin")
    _common(f)
    f.add_argument("--ckpt", type=str, required=True)
    f.add_argument("--origin", type=int, default=None)
    f.add_argument("--standardized", action="store_true")

    s = sub.add_parser("synth", help="generate a synthetic benchmark CSV")
    _common(s)
    s.add_argument("--spec", type=str, default=None,
                   help="JSON tone spec [[{amplitude,period,phase},..] per channel], or @file")
    s.add_argument("--trend", type=float, default=0.0)
    s.add_argument("--noise-sd", type=float, default=0.0)
    s.add_argument("--timesteps", type=int, default=1000)
    s.add_argument("--names", type=str, default=None, help="comma-separated channel names")

    g = sub.add_parser("gates", help="channel adaptation gates as CSV")
    _common(g)
    g.add_argument("--ckpt", type=str, required=True)

    return p


def _run_config(args) -> RunConfig:
    run = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {
        "model": args.model, "split_scheme": args.split_scheme, "lookback": args.lookback,
        "horizon": args.horizon, "hidden": args.hidden, "resolutions": args.resolutions,
        "periods": args.periods, "top_k": args.top_k, "overlap": args.overlap,
        "moving_average": args.moving_average, "lr": args.lr, "weight_decay": args.weight_decay,
        "max_epochs": args.max_epochs, "patience": args.patience, "batch_size": args.batch_size,
        "seed": args.seed, "data": args.data, "fill_missing": args.fill_missing,
    }
    if args.no_date_column:
        overrides["date_column"] = False
    for key, value in overrides.items():
        if value is not None:
            setattr(run, key, value)
    run.__post_init__()
    return run


def _cmd_analyze(args) -> int:
    if not args.data:
        raise ConfigError("analyze: --data is required")
    q = _int_list(args.q)
    report = training.analyze(
        args.data, list(q) if len(q) > 1 else q[0], args.binning, args.top_k,
        args.periods, args.split_scheme, date_column=not args.no_date_column,
        fill_missing=args.fill_missing)
    print(json.dumps(report))
    return 0


def _cmd_train(args) -> int:
    run = _run_config(args)
    out = args.out or "model.ckpt"
    result = training.train(run, out)
    print(json.dumps({
        "checkpoint": result.checkpoint_path,
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
        "periods": list(result.periods),
        "epochs": result.log,
    }))
    return 0


def _cmd_eval(args) -> int:
    metrics = training.evaluate(args.ckpt, data_path=args.data, split=args.split,
                                batch_size=args.batch_size)
    print(json.dumps(metrics.to_dict(args.split)))
    return 0


def _cmd_forecast(args) -> int:
    pred, names, origin = training.forecast(
        args.ckpt, data_path=args.data, origin=args.origin, standardized=args.standardized)
    out = args.out or "forecast.csv"
    lines = ["step," + ",".join(names)]
    for i, row in enumerate(pred):
        lines.append(str(i) + "," + ",".join(repr(float(v)) for v in row))
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(json.dumps({"origin": origin, "horizon": len(pred), "out": str(out)}))
    return 0


def _cmd_synth(args) -> int:
    if args.spec:
        raw = args.spec
        if raw.startswith("@"):
            raw = Path(raw[1:]).read_text(encoding="utf-8")
        tones = synthmod.parse_tone_spec(json.loads(raw))
    else:
        tones = [[synthmod.ToneSpec(1.0, 24.0)]]
    values = synthmod.generate(tones, args.trend, args.noise_sd, args.timesteps,
                               args.seed if args.seed is not None else 0)
    names = args.names.split(",") if args.names else None
    out = args.out or "synth.csv"
    synthmod.write_csv(out, values, names)
    print(json.dumps({"out": str(out), "timesteps": values.shape[0], "channels": values.shape[1]}))
    return 0


def _cmd_gates(args) -> int:
    names, gates = training.export_gate_matrix(args.ckpt)
    out = args.out or "gates.csv"
    write_gates_csv(out, names, gates)
    print(json.dumps({"out": str(out), "channels": len(names), "patterns": int(gates.shape[1])}))
    return 0


_COMMANDS = {
    "analyze": _cmd_analyze,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "forecast": _cmd_forecast,
    "synth": _cmd_synth,
    "gates": _cmd_gates,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (DivergenceError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
