"""Command-line entry point: ``duqfl <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import data as data_mod
from .diagnostics import gradient_decay_fit
from .experiment import ExperimentConfig, compare, run_experiment
from .fairness import fairness_report
from .federation import read_jsonl
from .spsa import UnfoldTrace

log = logging.getLogger("duqfl")

# config keys exposed as flags; the flag name is the key with '_' -> '-'
_FLAG_KEYS = (
    "dataset", "data_path", "n_samples", "n_genes", "data_seed", "n_qubits", "k", "T_u",
    "rounds", "strategy", "partition", "alpha", "shots", "seed", "lam", "eta0", "delta0",
    "meta_step_eta", "meta_step_delta", "epsilon", "adaptive_delta_mode", "workers",
    "entanglement", "feature_map_reps", "ansatz_reps",
)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file with flat config keys")
    p.add_argument("--out", type=Path, default=Path("runs/latest"), help="artifact directory")
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    for key in _FLAG_KEYS:
        default = fields[key].default
        kind = type(default) if default is not None else str
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=kind, default=None)
    p.add_argument("--no-exact-gradient", action="store_true", help="skip exact gradient-norm tracking")


def _config_from_args(args, **forced) -> ExperimentConfig:
    base = ExperimentConfig.from_file(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if getattr(args, "no_exact_gradient", False):
        base["track_exact_gradient"] = False
    base.update(forced)
    return ExperimentConfig.from_dict(base)


def _summary(result) -> dict:
    out = {
        "final_global_test_acc": result.final_accuracy,
        "rounds": len(result.records),
        "decay": result.decay_summary(),
    }
    if result.fairness is not None:
        out.update(ffm=result.fairness.ffm, efs=result.fairness.efs, feti=result.fairness.feti)
    return out


def cmd_train(args, mode="duqfl"):
    cfg = _config_from_args(args, mode=mode)
    result = run_experiment(cfg, args.out)
    print(json.dumps(_summary(result), indent=2, sort_keys=True))
    return 0


def cmd_compare(args):
    cfg = _config_from_args(args)
    summary = compare(cfg, args.seeds, args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_fairness(args):
    records = read_jsonl(args.rounds)
    report = fairness_report(records, args.lam, a_max=args.a_max, n_clients=args.clients)
    text = report.to_json(args.output)
    print(text, end="")
    return 0


def cmd_diagnose(args):
    trace = UnfoldTrace.from_csv(Path(args.trace))
    series = trace.exact_grad_norms if args.exact else trace.grad_norms
    if not series:
        print("trace has no exact_grad_norm column", file=sys.stderr)
        return 2
    fit = gradient_decay_fit(series, args.smoothing)
    print(fit.to_json())
    return 0


def cmd_gen_data(args):
    ds = data_mod.generate_synthetic_genomic(args.n_samples, args.n_genes, args.seed)
    data_mod.write_expression_csv(ds, args.output)
    print(f"wrote {len(ds)} samples x {ds.X.shape[1]} genes to {args.output}")
    return 0


def cmd_export_wdbc(args):
    path = data_mod.export_wdbc(args.output)
    print(f"wrote WDBC ({data_mod.WDBC_SAMPLES} rows) to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duqfl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a DUQFL experiment")
    _add_config_flags(p)
    p.set_defaults(func=lambda a: cmd_train(a, "duqfl"))

    p = sub.add_parser("baseline", help="run the fixed-hyperparameter control arm")
    _add_config_flags(p)
    p.set_defaults(func=lambda a: cmd_train(a, "fixed_baseline"))

    p = sub.add_parser("compare", help="paired DUQFL vs baseline runs")
    _add_config_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fairness", help="recompute the fairness report from rounds.jsonl")
    p.add_argument("rounds", type=Path)
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--a-max", type=float, default=None, help="reference accuracy (fraction)")
    p.add_argument("--clients", type=int, default=None)
    p.add_argument("--output", type=Path, default=None)
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("diagnose", help="power-law fit of gradient norms from a trace CSV")
    p.add_argument("trace", type=Path)
    p.add_argument("--smoothing", choices=("running", "window", "none"), default="running")
    p.add_argument("--exact", action="store_true", help="use the exact_grad_norm column")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("gen-data", help="write a synthetic gene-expression CSV")
    p.add_argument("--n-samples", type=int, default=400)
    p.add_argument("--n-genes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, default=Path("genomic_synth.csv"))
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("export-wdbc", help="write the bundled WDBC copy in UCI layout")
    p.add_argument("--output", type=Path, default=Path("wdbc.data"))
    p.set_defaults(func=cmd_export_wdbc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
