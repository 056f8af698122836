"""Command-line entry point: ``fsgen <subcommand> [flags]``.

Exit codes: 0 success, 2 input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, metrics, synthetic
from .baselines import DbCalibration
from .montecarlo import MonteCarloConfig, predict_accuracy

log = logging.getLogger("fsgen")

EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _int_grid(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_grid(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--features", type=Path, help="feature file (CSV or JSON-lines)")
    p.add_argument("--format", choices=("csv", "jsonl"), help="feature file format (default: from suffix)")
    p.add_argument("--n-ways", type=int, default=5)
    p.add_argument("--k-shots", type=_int_grid, default=[5], help="shot count or comma grid")
    p.add_argument("--tasks", type=int, default=1000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--cov-model", default="auto",
                   choices=("auto", "identity", "shared-iso", "iso-per-class", "full"))
    p.add_argument("--mc-samples", type=int, default=10_000)
    p.add_argument("--no-bias-correction", action="store_true")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--threshold", type=float, default=0.85)
    p.add_argument("--out", type=Path)
    p.add_argument("--emit", choices=("csv", "json", "both"), default="both")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dim", type=int, default=4, help="synthetic feature dimension")
    p.add_argument("--snr-db", type=_float_grid, default=[0.0], help="SNR value or comma grid (dB)")
    p.add_argument("--n-query", type=int, default=harness.MIN_QUERY)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsgen", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="predict the accuracy of one task (the file is its support set)")
    _shared(p)

    p = sub.add_parser("benchmark", help="compare predictors over sampled episodes")
    _shared(p)
    p.add_argument("--methods", default="ours-unbiased,ours-biased,cv",
                   help=f"comma list from {','.join(harness.METHODS)}")
    p.add_argument("--calibration", type=Path, help="DB calibration JSON (needed for method db)")

    p = sub.add_parser("calibrate-db", help="fit the DB-index regression")
    _shared(p)

    p = sub.add_parser("lemma1", help="coverage of the known-sigma bound and the 1/gap^2 fit")
    _shared(p)
    p.add_argument("--alphas", type=_float_grid, default=None, help="comma list (default: --alpha)")

    for name, helptext in (("bias", "bias of naive and unbiased distance estimators"),
                           ("variance", "variance of naive and unbiased distance estimators")):
        p = sub.add_parser(name, help=helptext)
        _shared(p)

    p = sub.add_parser("snr-sweep", help="MAPE against SNR on synthetic tasks")
    _shared(p)
    p.add_argument("--methods", default=",".join(synthetic.PREDICTORS))

    p = sub.add_parser("kl-models", help="KL divergence of the four covariance models")
    _shared(p)

    p = sub.add_parser("roc", help="ROC/AUC from a benchmark records.csv")
    _shared(p)
    p.add_argument("--records", type=Path, required=True)
    return parser


def _emit_table(rows, args, name: str) -> None:
    if args.out is None:
        json.dump(harness._json_safe(rows), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        return
    args.out.mkdir(parents=True, exist_ok=True)
    flat = rows if isinstance(rows, list) else rows.get("rows", [])
    if args.emit in ("csv", "both") and flat:
        fields = sorted({k for r in flat for k in r})
        harness.write_csv(args.out / f"{name}.csv", flat, fields)
    if args.emit in ("json", "both"):
        harness.write_json(args.out / f"{name}.json", rows)


def _source(args):
    if args.features is not None:
        return harness.load_features(args.features, args.format)
    return synthetic.SyntheticSpec(args.n_ways, args.k_shots[0], args.dim, args.snr_db[0],
                                   seed=args.seed, n_query=0)


def cmd_predict(args) -> None:
    if args.features is None:
        raise ValueError("predict needs --features")
    task = harness.store_to_task(harness.load_features(args.features, args.format))
    est = predict_accuracy(task, args.cov_model, not args.no_bias_correction,
                           MonteCarloConfig(args.mc_samples, args.seed, args.workers), args.alpha)
    out = est.as_dict()
    out.update(n_ways=task.n_ways, k_shots=task.k_shots)
    if args.out is None:
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        harness.write_json(args.out, out)


def cmd_benchmark(args) -> None:
    methods = tuple(m for m in args.methods.split(",") if m)
    unknown = set(methods) - set(harness.METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    calibration = None
    if args.calibration is not None:
        calibration = DbCalibration.from_json(args.calibration.read_text(encoding="utf-8"))
    cfg = harness.BenchmarkConfig(
        n_ways=args.n_ways, k_grid=tuple(args.k_shots), methods=methods, n_tasks=args.tasks,
        seed=args.seed, n_query=args.n_query, mc_samples=args.mc_samples, variant=args.cov_model,
        alpha=args.alpha, threshold=args.threshold, workers=args.workers)
    if args.no_bias_correction and "ours-unbiased" in methods:
        log.warning("--no-bias-correction ignored: use method ours-biased")
    result = harness.run_benchmark(_source(args), cfg, calibration, args.out, args.emit)
    if args.out is None:
        json.dump(harness._json_safe({"mape": result.mape, "auc": result.auc}), sys.stdout,
                  indent=2, sort_keys=True)
        sys.stdout.write("\n")


def cmd_calibrate(args) -> None:
    cal = harness.calibrate_db(_source(args), args.n_ways, args.k_shots, args.tasks, args.seed,
                               args.n_query)
    if args.out is None:
        print(cal.to_json())
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(cal.to_json() + "\n", encoding="utf-8")


def cmd_lemma1(args) -> None:
    alphas = args.alphas or [args.alpha]
    res = synthetic.run_lemma1_experiment(args.k_shots, alphas, args.tasks, args.snr_db[0], seed=args.seed)
    _emit_table(res, args, "lemma1")


def cmd_bias(args) -> None:
    rows = synthetic.run_bias_experiment(args.dim, args.k_shots, args.snr_db, args.tasks, seed=args.seed)
    _emit_table(rows, args, "bias")


def cmd_variance(args) -> None:
    rows = []
    for k in args.k_shots:
        rows += synthetic.run_variance_experiment(args.dim, k, args.snr_db, args.tasks, seed=args.seed)
    _emit_table(rows, args, "variance")


def cmd_snr_sweep(args) -> None:
    methods = tuple(m for m in args.methods.split(",") if m)
    rows = synthetic.run_snr_sweep(args.snr_db, args.tasks, args.n_ways, args.k_shots[0], args.dim,
                                   methods, args.seed, args.mc_samples, args.workers)
    flat = []
    for r in rows:
        for name, s in r["summary"].items():
            flat.append({"snr_db": r["snr_db"], "method": name, "tasks": r["tasks"], **s})
    _emit_table(flat, args, "snr_sweep")


def cmd_kl(args) -> None:
    if args.features is not None:
        refs = harness.load_features(args.features, args.format).as_reference_tasks(
            args.n_ways, args.tasks, args.seed)
    else:
        refs = synthetic.anisotropic_reference_tasks(args.n_ways, args.dim, args.tasks, seed=args.seed)
    rows = metrics.model_selection_experiment(refs, args.k_shots, seed=args.seed)
    _emit_table(rows, args, "kl_models")


def cmd_roc(args) -> None:
    records = harness.read_records(args.records)
    methods = [m for m in harness.METHODS if m in records[0]]
    rows, summary = [], []
    for k in sorted({r["k"] for r in records}):
        sel = [r for r in records if r["k"] == k]
        truth = np.array([r["true_accuracy"] for r in sel])
        for m in methods:
            pred = np.array([r[m] for r in sel])
            ok = ~np.isnan(pred)
            roc = metrics.roc_curve(pred[ok], truth[ok], args.threshold)
            summary.append({"k": k, "method": m, "auc": roc.auc})
            rows += [{"k": k, "method": m, "fpr": float(f), "tpr": float(t), "threshold": float(th)}
                     for f, t, th in zip(roc.fpr, roc.tpr, roc.thresholds)]
    if args.out is None:
        print(json.dumps(summary, indent=2, sort_keys=True))
        return
    args.out.mkdir(parents=True, exist_ok=True)
    if args.emit in ("csv", "both"):
        harness.write_csv(args.out / "roc.csv", rows, harness.ROC_FIELDS)
    if args.emit in ("json", "both"):
        harness.write_json(args.out / "roc.json", {"auc": summary, "points": rows})


COMMANDS = {
    "predict": cmd_predict, "benchmark": cmd_benchmark, "calibrate-db": cmd_calibrate,
    "lemma1": cmd_lemma1, "bias": cmd_bias, "variance": cmd_variance,
    "snr-sweep": cmd_snr_sweep, "kl-models": cmd_kl, "roc": cmd_roc,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
