"""Command-line interface: ``elc gen | fit | eval | compare``.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error. Each run
writes ``<output>.manifest.json`` next to its main output.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .filters import ElcModel, ModelFormatError
from .metrics import TABLE_COLUMNS, compute_targets, relative_reduction, table_rows
from .synth import GilbertElliottParams, gen_from_profile, gen_gilbert_elliott, load_profile
from .trace import DEFAULT_SAMPLE_PERIOD_US, TraceFormatError, load_trace, save_trace
from .training import TrainConfig, evaluate, load_config, predictions_for, train_elc

log = logging.getLogger("elc")

EXIT_USAGE = 2
EXIT_IO = 3

SWEEP_LAMBDA_MAX = tuple(round(0.05 * k, 2) for k in range(1, 21))


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers

def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, doc) -> None:
    _write_text(path, json.dumps(doc, indent=2, allow_nan=False) + "\n")


def _write_rows(path: Path, rows: list[dict]) -> None:
    _write_text(path, _rows_to_csv(rows))


def _rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _manifest(args, command: str, outputs: list[Path], inputs: list[str], t0: float,
              config: Optional[TrainConfig] = None, **extra) -> None:
    main = outputs[0]
    doc = {
        "command": command,
        "argv": list(args._argv),
        "tool_version": __version__,
        "inputs": inputs,
        "outputs": [str(p) for p in outputs],
        "config": config.to_flat() if config is not None else None,
        "wall_clock_s": round(time.perf_counter() - t0, 6),
    }
    doc.update(extra)
    _write_json(main.with_name(main.name + ".manifest.json"), doc)


def _load_input_trace(path: str, args):
    return load_trace(path, args.format, sample_period_us=args.period_us,
                      channel_label=args.label)


def _config_from_args(args, base: Optional[TrainConfig] = None) -> TrainConfig:
    cfg = base or TrainConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {k: getattr(args, k) for k in TrainConfig.flat_types()
                 if getattr(args, k, None) is not None}
    return TrainConfig.from_flat(overrides, cfg)


def _check_length(trace, cfg: TrainConfig, what: str) -> None:
    if len(trace) < cfg.min_trace_length:
        raise UsageError(
            f"{what} trace has {len(trace)} outcomes; at least n_skip + n_future + 1 = "
            f"{cfg.min_trace_length} are needed (n_skip={cfg.n_skip}, n_future={cfg.n_future})")


# --------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    t0 = time.perf_counter()
    if args.seed is None:
        raise UsageError("--seed is required (traces must be reproducible)")
    if (args.ge is None) == (args.profile is None):
        raise UsageError("give exactly one of --ge or --profile")
    label = args.label or ""
    if args.ge is not None:
        try:
            pgb, pbg, sg, sb = (float(v) for v in args.ge.split(","))
        except ValueError:
            raise UsageError(f"--ge expects four comma-separated numbers, got {args.ge!r}") from None
        if args.n is None:
            raise UsageError("--n is required with --ge")
        params = GilbertElliottParams(pgb, pbg, sg, sb, seed=args.seed)
        trace = gen_gilbert_elliott(params, args.n, args.period_us, label)
        source = {"generator": "gilbert-elliott", "params": [pgb, pbg, sg, sb]}
    else:
        profile = load_profile(args.profile, args.seed)
        if args.n is not None and args.n != profile.length:
            raise UsageError(f"--n {args.n} disagrees with profile length {profile.length}")
        trace = gen_from_profile(profile, args.period_us, label)
        source = {"generator": "profile", "profile": args.profile}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trace(trace, out, args.out_format)
    _manifest(args, "gen", [out], [args.profile] if args.profile else [], t0,
              seed=args.seed, n=len(trace), sample_period_us=trace.sample_period_us, **source)
    print(f"wrote {len(trace)} outcomes (fdr={trace.fdr():.6f}) to {out}")
    return 0


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    cfg = _config_from_args(args)
    trace = _load_input_trace(args.train, args)
    _check_length(trace, cfg, "training")
    res = train_elc(trace, cfg)

    out = Path(args.out)
    _write_text(out, res.model.to_json())
    rep_path = Path(args.report) if args.report else out.with_name(out.stem + ".fit.json")
    fit_report = {"config": cfg.to_flat(), **res.report()}
    outputs = [out, rep_path]
    if args.sweep_lambda_max:
        sweep = res.sweep(SWEEP_LAMBDA_MAX, cfg.qp)
        fit_report["lambda_max_sweep"] = sweep
        sweep_path = Path(args.sweep_lambda_max)
        _write_rows(sweep_path, sweep)
        outputs.append(sweep_path)
    _write_json(rep_path, fit_report)
    _manifest(args, "fit", outputs, [args.train], t0, cfg)
    print(f"alpha*={res.alpha_star!r} N_alpha={res.model.n_alpha} "
          f"ema_mse={res.ema_mse:.6g} elc_mse={res.refit.achieved_mse:.6g}")
    return 0


def _eval_config(args, model: Optional[ElcModel]) -> TrainConfig:
    base = TrainConfig()
    if model is not None:
        saved = model.provenance.get("config") or {}
        keep = {k: saved[k] for k in ("n_future", "n_skip") if k in saved}
        base = TrainConfig.from_flat({**keep, "y0": model.y0}, base)
    return _config_from_args(args, base)


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    if (args.model is None) == (args.ema_alpha is None):
        raise UsageError("give exactly one of --model or --ema-alpha")
    model = None
    if args.model is not None:
        try:
            model = ElcModel.load(args.model)
        except ModelFormatError as exc:
            raise UsageError(f"{args.model}: {exc}") from None
    cfg = _eval_config(args, model)
    trace = _load_input_trace(args.test, args)
    _check_length(trace, cfg, "test")
    predictor = model if model is not None else args.ema_alpha
    rep = evaluate(predictor, trace, cfg)

    out = Path(args.out)
    _write_text(out, rep.to_json())
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    _write_text(csv_path, rep.to_csv())
    outputs = [out, csv_path]
    if args.emit_series:
        series_path = Path(args.emit_series)
        _write_series(series_path, predictor, trace, cfg, args.series_stride)
        outputs.append(series_path)
    _manifest(args, "eval", outputs, [args.test] + ([args.model] if args.model else []), t0, cfg)
    print(f"mse={rep.mse:.6g} mu_abs_e={rep['mu_abs_e']:.6g} count={rep.evaluation_count}")
    return 0


def _write_series(path: Path, predictor, trace, cfg: TrainConfig, stride: int) -> None:
    targets = compute_targets(trace, cfg.n_future)
    y = predictions_for(predictor, trace, cfg)[:len(targets)]
    idx = range(cfg.n_skip, len(targets), max(1, stride))
    t, y = targets.values.tolist(), y.tolist()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("i,t_i,y_i\n")
        for i in idx:
            fh.write(f"{i + 1},{t[i]!r},{y[i]!r}\n")


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    cfg = _config_from_args(args)
    train = _load_input_trace(args.train, args)
    test = _load_input_trace(args.test, args)
    _check_length(train, cfg, "training")
    _check_length(test, cfg, "test")
    res = train_elc(train, cfg)
    ema = evaluate(res.alpha_star, test, cfg)
    elc = evaluate(res.model, test, cfg)
    rows = table_rows([("EMA", f"alpha*={res.alpha_star!r}", ema),
                       ("ELC", f"N_alpha={res.model.n_alpha}", elc)])
    doc = {
        "columns": ["model", "params", *TABLE_COLUMNS],
        "rows": rows,
        "mse_reduction_pct": relative_reduction(ema.mse, elc.mse),
        "mu_abs_e_reduction_pct": relative_reduction(ema["mu_abs_e"], elc["mu_abs_e"]),
        "alpha_star": res.alpha_star,
        "n_alpha": res.model.n_alpha,
        "model": res.model.to_dict(),
        "reports": {"EMA": ema.to_dict(), "ELC": elc.to_dict()},
    }
    out = Path(args.out)
    _write_rows(out, rows)
    json_path = Path(args.json) if args.json else out.with_suffix(".json")
    _write_json(json_path, doc)
    _manifest(args, "compare", [out, json_path], [args.train, args.test], t0, cfg)
    sys.stdout.write(_rows_to_csv(rows))
    print(f"MSE reduction ELC vs EMA: {doc['mse_reduction_pct']:.2f}%")
    return 0


# --------------------------------------------------------------------------
# argument parsing

_CONFIG_HELP = {
    "n_lower": "filters below alpha* in the starting sequence",
    "n_upper": "filters above alpha* in the starting sequence",
    "ratio": "common ratio of the starting sequence",
    "lambda_max": "cumulative lambda threshold for pruning",
    "n_future": "future window length (samples) of the target",
    "n_skip": "warm-up samples excluded from errors",
    "y0": "initial prediction",
    "grid_points_per_decade": "alpha* grid density",
    "alpha_min": "lower end of the alpha* search",
    "alpha_max": "upper end of the alpha* search",
    "refine_tolerance": "golden-section tolerance in log(alpha)",
    "qp_objective_tolerance": "duality-gap tolerance of the lambda solver",
    "qp_max_iterations": "iteration cap of the lambda solver",
}


def _add_trace_opts(p):
    p.add_argument("--format", choices=("csv", "packed"), default=None,
                   help="input trace format (default: by file extension)")
    p.add_argument("--period-us", type=int, default=None,
                   help="sample period for CSV traces without a header")
    p.add_argument("--label", default=None, help="channel label for CSV traces")


def _add_config_opts(p):
    p.add_argument("--config", help="key=value config file (flags override it)")
    defaults = TrainConfig().to_flat()
    for key, typ in TrainConfig.flat_types().items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None,
                       help=f"{_CONFIG_HELP[key]} (default: {defaults[key]})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"elc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic outcome trace")
    p.add_argument("--ge", metavar="PGB,PBG,SG,SB",
                   help="Gilbert-Elliott transition and success probabilities")
    p.add_argument("--profile", help="profile file with 'length fdr' lines")
    p.add_argument("--n", type=int, help="number of outcomes (required with --ge)")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    p.add_argument("--period-us", type=int, default=DEFAULT_SAMPLE_PERIOD_US,
                   help="sample period in microseconds (default: %(default)s)")
    p.add_argument("--label", default="", help="channel label")
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=("csv", "packed"), default=None,
                   help="output format (default: by file extension)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit an ELC model on a training trace")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--report", help="fit report path (default: <out>.fit.json)")
    p.add_argument("--sweep-lambda-max", metavar="CSV",
                   help="also write training MSE vs lambda_max in 0.05..1.0")
    _add_trace_opts(p)
    _add_config_opts(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a model or plain EMA on a test trace")
    p.add_argument("--test", required=True)
    p.add_argument("--model", help="model JSON written by 'fit'")
    p.add_argument("--ema-alpha", type=float, help="evaluate a plain EMA with this weight")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="one-row CSV path (default: <out> with .csv suffix)")
    p.add_argument("--emit-series", metavar="CSV", help="write (i, t_i, y_i) rows")
    p.add_argument("--series-stride", type=int, default=1,
                   help="keep every k-th row of the series (default: 1)")
    _add_trace_opts(p)
    _add_config_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="fit EMA and ELC on train, compare them on test")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="comparison table CSV")
    p.add_argument("--json", help="JSON output (default: <out> with .json suffix)")
    _add_trace_opts(p)
    _add_config_opts(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, TraceFormatError, ModelFormatError) as exc:
        print(f"elc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"elc {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
