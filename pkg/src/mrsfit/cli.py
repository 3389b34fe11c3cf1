"""Command-line face of the workbench.

Subcommands: simulate, train, fit, adapt, evaluate, sweep, report.
Global flags: --config FILE, --seed N, --out DIR, --preset desk|paper.
Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .dataset_io import load_dataset, save_dataset
from .errors import ConfigurationError, NumericError, ValidationError
from .harness import (
    SCENARIO_MAP,
    ExperimentConfig,
    build_context,
    config_from_dict,
    evaluate_strategy,
    load_config,
    paper_preset,
    predict_strategy,
    read_eval_records,
    run_scenario_suite,
    run_sweep_suite,
    summarize,
    train_models,
    write_eval_records,
    write_outputs,
    write_summary_csv,
)
from .nnet import load_checkpoint, save_checkpoint
from .priors import Scenario
from .simulate import generate_dataset
from .strategies import TrainingStream, train_self_supervised, train_supervised


def _base_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset == "paper":
        cfg = paper_preset()
    else:
        cfg = config_from_dict({})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _progress(msg: str) -> None:
    print(f"[mrsfit] {msg}", flush=True)


def cmd_simulate(args) -> int:
    cfg = _base_config(args)
    ctx = build_context(cfg)
    mode = SCENARIO_MAP.get(args.scenario, (None, None))[1]
    if mode is None:
        raise ConfigurationError(f"unknown scenario {args.scenario!r}")
    n = args.n or cfg.test_size
    records = generate_dataset(n, ctx.priors, Scenario(f"test_{mode}", mode), ctx.basis,
                               master_seed=cfg.seed)
    save_dataset(args.dataset, records, ctx.basis, master_seed=cfg.seed,
                 scenario=args.scenario)
    _progress(f"wrote {n} records to {args.dataset}")
    return 0


def cmd_train(args) -> int:
    cfg = _base_config(args)
    ctx = build_context(cfg)
    from .harness import _train_config  # shared step/seed derivation

    range_code = 0 if args.range == "mid_range" else 1
    stream = TrainingStream(ctx.priors, Scenario(f"train_{args.range}", args.range),
                            ctx.basis, cfg.seed, namespace=(1, range_code))
    tcfg = _train_config(cfg, range_code)
    _progress(f"training {args.strategy} on {args.range} ({tcfg.max_steps} steps)")
    trainer = train_supervised if args.strategy == "supervised" else train_self_supervised
    result = trainer(stream, tcfg)
    save_checkpoint(args.checkpoint, result.model)
    _progress(f"saved checkpoint to {args.checkpoint} "
              f"(best validation loss at step {result.best_step})")
    return 0


def _evaluate_records(ctx, strategy, records, tag):
    preds = predict_strategy(ctx, strategy, "mid_range", records)
    return evaluate_strategy(ctx, strategy, tag, records, preds, float("nan"))


def cmd_fit(args) -> int:
    cfg = _base_config(args)
    ctx = build_context(cfg)
    records = load_dataset(args.dataset, ctx.basis)
    evals = _evaluate_records(ctx, "model_based", records, "fit")
    write_eval_records(args.records, evals)
    _progress(f"fit {len(records)} spectra -> {args.records}")
    return 0


def cmd_adapt(args) -> int:
    cfg = _base_config(args)
    cfg = replace(cfg, adapt={**cfg.adapt, "mode": args.mode})
    ctx = build_context(cfg)
    records = load_dataset(args.dataset, ctx.basis)
    ctx.models[(cfg.adapt.get("init", "supervised"), "mid_range")] = load_checkpoint(args.checkpoint)
    strategy = {"instance": "tta_instance", "online": "tta_online", "domain": "tta_domain"}[args.mode]
    evals = _evaluate_records(ctx, strategy, records, f"adapt_{args.mode}")
    write_eval_records(args.records, evals)
    _progress(f"adapted ({args.mode}) over {len(records)} spectra -> {args.records}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _base_config(args)
    result = run_scenario_suite(cfg, out_dir=cfg.out_dir, progress=_progress,
                                with_timing=not args.no_timing)
    for row in result["summary"]:
        _progress(
            f"{row['strategy']:>16s} | {row['scenario']:<16s} | "
            f"MOSAE {row['mosae_mean']:.4f} (± {row['mosae_se']:.4f}) | "
            f"{row['ms_per_sample']:.4f} ms/sample"
        )
    _progress(f"reports written to {cfg.out_dir}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    run_sweep_suite(cfg, out_dir=cfg.out_dir, progress=_progress)
    _progress(f"sweep reports written to {cfg.out_dir}")
    return 0


def cmd_report(args) -> int:
    records = read_eval_records(args.records)
    rows = summarize(records)
    write_summary_csv(args.summary, rows)
    _progress(f"recomputed {len(rows)} summary rows -> {args.summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrsfit", description=__doc__)
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--preset", choices=("desk", "paper"), default="desk")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labeled dataset")
    p.add_argument("--scenario", default="id_mid_range", help="scenario name")
    p.add_argument("--n", type=int, help="record count (default: config test_size)")
    p.add_argument("--dataset", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a network")
    p.add_argument("--strategy", choices=("supervised", "self_supervised"), required=True)
    p.add_argument("--range", choices=("mid_range", "full_range"), default="mid_range")
    p.add_argument("--checkpoint", required=True, help="output checkpoint (.npz)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit", help="model-based fitting over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--records", required=True, help="output eval-records JSONL")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("adapt", help="test-time adaptation over a dataset")
    p.add_argument("--mode", choices=("instance", "online", "domain"), required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--records", required=True)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("evaluate", help="run the scenario suite")
    p.add_argument("--no-timing", action="store_true", help="skip wall-clock measurement")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run the perturbation sweep suite")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-aggregate a summary from eval records")
    p.add_argument("--records", required=True)
    p.add_argument("--summary", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigurationError, ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"[mrsfit] configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"[mrsfit] numeric failure: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
