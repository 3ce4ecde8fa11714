"""Command-line entry point.

Subcommands: gen-data, train, enumerate, monitor, eval, inspect.  All
reports are JSON with repr-exact floats; runs with a fixed --seed are
byte-reproducible except for wall-time fields.
"""

import argparse
import json
import sys

import numpy as np

from . import checkpoint, data, enumeration, network, training
from .formula import format_formula, parse_formula
from .semantics import robustness


def _write_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen_data(args) -> int:
    if args.kind == "step-threshold":
        ds = data.gen_step_threshold(
            args.n, args.T, c_pos=args.c_pos, c_neg=args.c_neg, noise=args.noise, seed=args.seed
        )
    elif args.kind == "cct":
        ds = data.gen_cct(args.n, args.T, seed=args.seed)
    elif args.kind == "interval":
        ds = data.gen_interval(args.n, seed=args.seed)
    else:
        raise ValueError(f"unknown dataset kind {args.kind!r}")
    data.save_csv(ds, args.out)
    print(f"wrote {len(ds)} traces to {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = data.load_csv(args.data)
    if args.continuous_labels:
        if args.head == "tanh":
            raise ValueError("--continuous-labels cannot be combined with --head tanh")
        ds = data.label_continuous(ds, parse_formula(args.continuous_labels))
    if args.head == "tanh" and ds.label_kind == "continuous":
        raise ValueError("--head tanh requires binary labels")

    rng = np.random.default_rng(args.seed)
    plateau = args.up_to_length is not None
    lr = args.lr if args.lr is not None else (0.001 if plateau else 0.003)
    if args.bounded_window is not None:
        model = network.build_bounded(args.bounded_window, ds.dim, rng=rng)
    elif plateau:
        model = network.build_up_to_length(
            args.up_to_length, ds.dim, use_since=not args.no_since, rng=rng
        )
    else:
        model = network.build_fixed_length(
            args.length, ds.dim, use_since=not args.no_since, rng=rng
        )
    cfg = training.TrainConfig(
        lr=lr,
        max_epochs=args.max_epochs,
        early_stop=args.early_stop,
        plateau_mode=plateau,
        split=args.split,
        seed=args.seed,
        normalize=not args.no_normalize,
        reverse_traces=args.reverse,
        compare_unquantized=args.compare_unquantized,
    )
    report = training.fit(model, ds, cfg)
    doc = report.to_dict()
    doc["use_since"] = not args.no_since
    doc["data"] = args.data
    doc["seed"] = args.seed
    if args.save_model:
        checkpoint.save_model(model, args.save_model)
    if args.json and not args.out:
        _write_json(doc, None)
    else:
        print(report.formula)
        print(f"train_mcr={report.train_mcr!r} test_mcr={report.test_mcr!r} epochs={report.epochs}")
        if report.test_mcr_unquantized is not None:
            print(f"test_mcr_unquantized={report.test_mcr_unquantized!r}")
    if args.out:
        _write_json(doc, args.out)
    return 0


def cmd_enumerate(args) -> int:
    ds = data.load_csv(args.data)
    ops = ("not", "and", "or", "once", "hist", "since")
    if args.no_since:
        ops = tuple(op for op in ops if op != "since")
    cfg = enumeration.EnumConfig(
        max_length=args.length,
        grid=args.grid,
        target_mcr=args.target_mcr,
        early_exit=args.early_exit,
        structure_cap=args.cap,
        ops=ops,
    )
    report = enumeration.run(ds, cfg)
    doc = report.to_dict()
    doc["data"] = args.data
    if args.json and not args.out:
        _write_json(doc, None)
    else:
        print(report.formula)
        print(f"mcr={report.mcr!r} structures_tried={report.structures_tried}")
    if args.out:
        _write_json(doc, args.out)
    return 0


def cmd_monitor(args) -> int:
    f = parse_formula(args.formula)
    ds = data.load_csv(args.data)
    rows = []
    for tr in ds.traces:
        rho = float(robustness(f, tr)[-1])
        rows.append({"trace_id": tr.id, "robustness": rho, "sign": 1 if rho >= 0 else -1})
    if args.json:
        _write_json({"formula": format_formula(f), "traces": rows}, args.out)
    else:
        for row in rows:
            print(f"{row['trace_id']}\t{row['robustness']!r}\t{row['sign']:+d}")
    return 0


def cmd_eval(args) -> int:
    f = parse_formula(args.formula)
    ds = data.load_csv(args.data)
    mcr = training.evaluate_mcr(f, ds)
    print(repr(mcr))
    return 0


def cmd_inspect(args) -> int:
    with open(args.path) as fh:
        doc = json.load(fh)
    if doc.get("format") == checkpoint.FORMAT:
        model = checkpoint.model_from_dict(doc)
        kinds = {}
        for cell in model.cells:
            name = type(cell).__name__
            kinds[name] = kinds.get(name, 0) + 1
        print(f"model: {len(model.cells)} cells, head={model.head}, dim={model.dim}")
        for name in sorted(kinds):
            print(f"  {name}: {kinds[name]}")
        print(f"embedded structures: {network.embedded_structures(model)}")
        print(f"extracted: {format_formula(network.extract_formula(model))}")
    elif "formula" in doc:
        print(f"report for: {doc['formula']}")
        for key in sorted(doc):
            if key not in ("loss", "formula"):
                print(f"  {key}: {doc[key]}")
    else:
        raise ValueError(f"{args.path}: not a checkpoint or report file")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stlmine",
        description="Mine past-time STL formulas from labeled traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("kind", choices=["step-threshold", "cct", "interval"])
    p.add_argument("--n", type=int, required=True, help="number of traces (even)")
    p.add_argument("--T", type=int, default=100, help="trace length (ignored for interval)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--c-pos", type=float, default=1.0)
    p.add_argument("--c-neg", type=float, default=-0.8)
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a formula network and extract")
    p.add_argument("--data", required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--length", type=int, help="fixed formula length (2..6)")
    mode.add_argument("--up-to-length", type=int, help="search lengths 2..N jointly")
    mode.add_argument(
        "--bounded-window", type=int,
        help="learn a bounded Hist mask over past offsets 0..N (length-2 structure)",
    )
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--lr", type=float, default=None, help="default 0.003 (0.001 for --up-to-length)")
    p.add_argument("--max-epochs", type=int, default=5000)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--no-since", action="store_true")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--reverse", action="store_true", help="train on reversed traces (future-time)")
    p.add_argument("--continuous-labels", metavar="FORMULA",
                   help="relabel traces with this formula's robustness")
    p.add_argument("--head", choices=["auto", "tanh", "identity"], default="auto")
    es = p.add_mutually_exclusive_group()
    es.add_argument("--early-stop", dest="early_stop", action="store_true", default=True)
    es.add_argument("--no-early-stop", dest="early_stop", action="store_false")
    p.add_argument("--compare-unquantized", action="store_true")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--save-model", help="write a model checkpoint here")
    p.add_argument("--json", action="store_true", help="print the JSON report to stdout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enumerate", help="brute-force baseline search")
    p.add_argument("--data", required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--grid", type=int, default=25)
    p.add_argument("--target-mcr", type=float, default=0.2)
    ee = p.add_mutually_exclusive_group()
    ee.add_argument("--early-exit", dest="early_exit", action="store_true", default=True)
    ee.add_argument("--no-early-exit", dest="early_exit", action="store_false")
    p.add_argument("--cap", type=int, default=50_000)
    p.add_argument("--no-since", action="store_true")
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("monitor", help="per-trace robustness of a formula")
    p.add_argument("formula")
    p.add_argument("data")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("eval", help="MCR of a formula on a dataset")
    p.add_argument("formula")
    p.add_argument("data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="summarize a checkpoint or report file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
