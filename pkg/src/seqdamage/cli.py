"""Command-line entry point: ``seqdamage <subcommand> ...``.

Exit codes: 0 success, 2 data error, 3 model or validation error.
Output files go to ``--out`` or, failing that, to ``$SEQDAMAGE_OUT`` (default
the working directory). Every file written embeds the resolved run config.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .dsf import chunk_and_normalize, extract_dsf_stream, read_dsf_csv, read_signal_csv, select_order_aic, write_dsf_csv
from .errors import DataError, ModelError, ModelIncompleteError
from .evaluation import ScenarioSpec, compare_mp_local, monte_carlo_curve, write_curve_csv
from .graph import build_model, model_to_config, validate_tree
from .inference import RuleSpec, delay_bound_rule
from .models import fit_gaussian, kl_divergence, nonempty_subsets, subset_key
from .shiryaev import delay_bound_single
from .simnet import run_local_baseline, run_session
from .topologies import asce_config, chain4_config, shake_table_config

OUT_ENV = "SEQDAMAGE_OUT"
EXIT_DATA = 2
EXIT_MODEL = 3

BUILTIN_MODELS = {
    "chain4": chain4_config,
    "shake-table": shake_table_config,
    "asce": asce_config,
}

DEFAULT_GRID = (0.5, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10)


# ---------------------------------------------------------------------------
# argument helpers


def _window(text: str) -> int | None:
    if text.lower() == "none":
        return None
    w = int(text)
    if w < 1:
        raise argparse.ArgumentTypeError("window must be a positive integer or 'none'")
    return w


def _float_list(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _out_path(args, default_name: str) -> Path:
    if args.out:
        p = Path(args.out)
    else:
        p = Path(os.environ.get(OUT_ENV, ".")) / default_name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _resolved(args) -> dict:
    """The run config as JSON-safe values, echoed into every output file."""
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return json.loads(json.dumps(cfg, default=str))


def _load_model_config(spec: str) -> dict:
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_MODELS:
            raise ModelError(f"unknown built-in model {name!r}; choose from {sorted(BUILTIN_MODELS)}")
        return BUILTIN_MODELS[name]()
    path = Path(spec)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from None


def _load_model(spec: str):
    model = build_model(_load_model_config(spec), check=False)
    problems = validate_tree(model)
    if problems:
        raise ModelError("; ".join(problems))
    return model


def _rules(args) -> list[RuleSpec]:
    texts = args.rule or ["min:1"]
    try:
        return [RuleSpec.parse(t, args.alpha) for t in texts]
    except ValueError as exc:
        raise ModelError(str(exc)) from None


def _sensor_key(name: str):
    name = name.removeprefix("sensor_")
    return int(name) if name.isdigit() else name


def _sensor_streams(data_dir: Path, model) -> dict:
    if not data_dir.is_dir():
        raise DataError(f"no such directory: {data_dir}")
    out = {}
    for sid in model.sensor_ids:
        path = data_dir / f"sensor_{sid}.csv"
        if not path.exists():
            raise DataError(f"missing feature file {path}")
        out[sid] = read_dsf_csv(path, sid)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args) -> int:
    src = Path(args.data)
    files = sorted(src.glob("*.csv")) if src.is_dir() else [src]
    if not files:
        raise DataError(f"no CSV files under {src}")
    out_dir = _out_path(args, "dsf")
    out_dir.mkdir(parents=True, exist_ok=True)
    comments = ["config: " + json.dumps(_resolved(args), sort_keys=True)]
    for f in files:
        for sig in read_signal_csv(f):
            if args.order.startswith("aic:"):
                max_order = int(args.order.split(":", 1)[1])
                chunks = chunk_and_normalize(sig, args.chunk_size)
                order = max(select_order_aic(c, max_order) for c in chunks)
            else:
                order = int(args.order)
            stream = extract_dsf_stream(sig, args.chunk_size, order, args.coeffs)
            name = f"sensor_{_sensor_key(str(sig.sensor_id))}.csv"
            write_dsf_csv(stream, out_dir / name, comments + [f"order: {order}"])
            print(f"{name}: {len(stream)} rows, order {order}")
    return 0


def cmd_fit(args) -> int:
    topo = _load_model_config(args.model)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise DataError(f"no such directory: {data_dir}")
    missing = []
    for s in topo["sensors"]:
        sid = int(s["id"])
        domain = sorted(int(j) for j in s["domain"])
        g_path = data_dir / f"sensor_{sid}_g.csv"
        if not g_path.exists():
            raise DataError(f"missing pre-change training file {g_path}")
        s["g"] = fit_gaussian(read_dsf_csv(g_path).features).to_dict()
        s["f"] = {}
        for A in nonempty_subsets(domain):
            p = data_dir / f"sensor_{sid}_f_{'_'.join(str(j) for j in sorted(A))}.csv"
            if p.exists():
                s["f"][subset_key(A)] = fit_gaussian(read_dsf_csv(p).features).to_dict()
            else:
                missing.append(str(ModelIncompleteError(sid, A)))
        s["dim"] = len(s["g"]["mean"])
    if missing:
        raise ModelError("incomplete registry: " + "; ".join(missing))
    model = build_model(topo)
    config = model_to_config(model)
    config["provenance"] = _resolved(args)
    out = _out_path(args, "model.json")
    out.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    print("sensor\tsubset\tkl")
    for sid in model.sensor_ids:
        d = model.registry[sid]
        for A in nonempty_subsets(d.domain):
            print(f"{sid}\t{{{subset_key(A)}}}\t{kl_divergence(d.post[A], d.pre):.4f}")
    print(f"wrote {out}")
    return 0


def cmd_detect(args) -> int:
    model = _load_model(args.model)
    rules = _rules(args)
    streams = _sensor_streams(Path(args.data), model)
    if args.local is not None:
        log = run_local_baseline(model, args.local, streams, rules, window=args.window, stop_when_done=False)
    else:
        log = run_session(model, streams, rules, window=args.window, stop_when_done=False)
    out = _out_path(args, "session.jsonl")
    log.to_jsonl(out, config=_resolved(args))
    labels = [r.label for r in rules]
    print("N\t" + "\t".join(f"ccdf[{lab}]" for lab in labels))
    for s in log.steps:
        print(f"{s.N}\t" + "\t".join(f"{s.ccdf[lab]:.6e}" for lab in labels))
    for lab in labels:
        tau = log.verdicts[lab].tau
        print(f"tau[{lab}] = {tau if tau is not None else 'none'}")
    return 0


def cmd_bound(args) -> int:
    alphas = args.alpha_grid or [args.alpha]
    if args.kl:
        if args.rho is None:
            raise DataError("--kl needs --rho")
        for a in alphas:
            print(f"{delay_bound_single(args.rho, args.kl, a):.2f}")
        return 0
    if not args.model:
        raise DataError("give either --rho/--kl or --model with --rule")
    model = _load_model(args.model)
    print("rule\talpha\tbound")
    for r in _rules(args):
        for a in alphas:
            print(f"{r.label}\t{a:g}\t{delay_bound_rule(model, r, a):.2f}")
    return 0


def _planted(items) -> dict:
    out = {}
    for item in items or []:
        try:
            j, t = item.split("=")
            out[int(j)] = int(t)
        except ValueError:
            raise DataError(f"bad --plant {item!r}; expected e.g. 1=41") from None
    return out


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    rules = _rules(args)
    scenario = ScenarioSpec(model, _planted(args.plant), args.length, args.reps, args.seed)
    grid = args.alpha_grid or list(DEFAULT_GRID)
    if args.method == "both":
        points = compare_mp_local(scenario, rules, grid, local_sensor=args.local, window=args.window)
    else:
        points = []
        for r in rules:
            points += monte_carlo_curve(scenario, r, grid, args.method, args.local, args.window)
    out = _out_path(args, "curve.csv")
    write_curve_csv(points, out, ["config: " + json.dumps(_resolved(args), sort_keys=True)])
    print("method\trule\talpha\tmean_delay\tfa_rate\tcensored\tbound")
    for p in points:
        md = "nan" if math.isnan(p.mean_delay) else f"{p.mean_delay:.3f}"
        print(f"{p.method}\t{p.rule}\t{p.alpha_fa:g}\t{md}\t{p.fa_rate:.4f}\t{p.censored}\t{p.bound:.3f}")
    print(f"wrote {out}")
    return 0


def cmd_validate(args) -> int:
    model = build_model(_load_model_config(args.model), check=False)
    problems = validate_tree(model)
    if problems:
        for p in problems:
            print(f"violation: {p}")
        return EXIT_MODEL
    print(f"OK, {len(model.sensors)} sensors, {len(model.tree.edges)} edges, RIP satisfied")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqdamage", description="Distributed sequential damage detection.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True, data=True):
        if model:
            p.add_argument("--model", required=True, help="model config JSON, or builtin:chain4|shake-table|asce")
        if data:
            p.add_argument("--data", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)

    def detection(p):
        p.add_argument("--alpha", type=float, default=1e-8, help="false-alarm level")
        p.add_argument("--rule", action="append", help="min:1,3 | max:1,3 | single:3 (repeatable)")
        p.add_argument("--window", type=_window, default=None, help="bin window W or 'none'")
        p.add_argument("--local", type=int, default=None, help="run the single-sensor baseline on this sensor")

    p = sub.add_parser("extract", help="raw vibration CSV -> AR-coefficient feature CSVs")
    common(p, model=False)
    p.add_argument("--chunk-size", type=int, default=400)
    p.add_argument("--order", default="7", help="AR order or aic:<max>")
    p.add_argument("--coeffs", type=lambda s: [int(v) for v in s.split(",")], default=[1])
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="fit Gaussian feature models from labeled training files")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", help="run a detection session over feature files")
    common(p)
    detection(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("bound", help="asymptotic expected detection delay")
    p.add_argument("--model", default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--kl", type=_float_list, default=None, help="comma-separated KL values")
    p.add_argument("--alpha", type=float, default=1e-8)
    p.add_argument("--alpha-grid", type=_float_list, default=None)
    p.add_argument("--rule", action="append")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="Monte Carlo delay / false-alarm curves")
    common(p, data=False)
    detection(p)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--length", type=int, default=60)
    p.add_argument("--plant", action="append", help="variable=time, e.g. 1=41 (repeatable)")
    p.add_argument("--alpha-grid", type=_float_list, default=None)
    p.add_argument("--method", choices=("mp", "local", "both"), default="both")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check the sensor tree and registry")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
