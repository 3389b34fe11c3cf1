"""Experiment orchestration: scenario suites, perturbation sweeps, timing, reports.

Scenario mapping (model range, test range):
    id_mid_range    -- mid-trained model, mid-range test set
    ood_full_range  -- mid-trained model, full-range test set
    id_full_trained -- full-trained model, full-range test set
The two full-range scenarios share one test set, so training-free
strategies see identical data there.

Seed namespaces derived from the master seed keep training streams,
validation draws, test sets, and adaptation shuffles disjoint.  With a
fixed master seed every reported number except wall-clock timing is
reproducible bit for bit.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .axis import build_axis
from .basis import BasisSet, default_basis, load_basis
from .errors import ConfigurationError
from .metrics import aggregate, mae, mosae, optimal_scale
from .priors import PriorTable, Scenario, default_priors
from .simulate import SampleRecord, SweepDataset, generate_dataset, make_sweep
from .strategies import (
    AdaptConfig,
    FitOptions,
    TrainConfig,
    TrainingStream,
    adapted_predict,
    fit_model_based,
    predict_batch,
    train_self_supervised,
    train_supervised,
    tta_domain,
    tta_instance,
    tta_online,
)

SCENARIO_MAP = {
    "id_mid_range": ("mid_range", "mid_range"),
    "ood_full_range": ("mid_range", "full_range"),
    "id_full_trained": ("full_range", "full_range"),
}

NETWORK_STRATEGIES = ("supervised", "self_supervised", "tta_instance", "tta_online", "tta_domain")
ALL_STRATEGIES = (*NETWORK_STRATEGIES, "model_based", "oracle", "midpoint")

_NS_TRAIN, _NS_TEST, _NS_ADAPT, _NS_SWEEP = 1, 2, 3, 4


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 1234
    out_dir: str = "runs/out"
    test_size: int = 1000
    train_samples: int = 50000
    scenarios: tuple[str, ...] = ("id_mid_range", "ood_full_range", "id_full_trained")
    strategies: tuple[str, ...] = ("supervised", "self_supervised", "tta_instance",
                                   "tta_online", "tta_domain", "model_based")
    axis: dict = field(default_factory=dict)
    basis_path: str | None = None
    train: dict = field(default_factory=dict)      # TrainConfig overrides (sans max_steps/seed)
    fit: dict = field(default_factory=dict)        # FitOptions overrides
    adapt: dict = field(default_factory=dict)      # AdaptConfig overrides
    sweeps: dict = field(default_factory=dict)     # parameter -> grid
    sweep_n_per_value: int = 40
    timing_subset: int = 4
    timing_repeats: int = 3

    def __post_init__(self):
        if len(set(self.scenarios)) != len(self.scenarios):
            raise ConfigurationError("scenario names must be unique")
        unknown = set(self.scenarios) - set(SCENARIO_MAP)
        if unknown:
            raise ConfigurationError(f"unknown scenarios: {sorted(unknown)}")
        unknown = set(self.strategies) - set(ALL_STRATEGIES)
        if unknown:
            raise ConfigurationError(f"unknown strategies: {sorted(unknown)}")
        if self.test_size < 1 or self.train_samples < 1:
            raise ConfigurationError("test_size and train_samples must be positive")


def desk_preset(**overrides) -> ExperimentConfig:
    return replace(ExperimentConfig(), **overrides)


def paper_preset(**overrides) -> ExperimentConfig:
    base = ExperimentConfig(test_size=10000, train_samples=500000)
    return replace(base, **overrides)


def config_from_dict(doc: dict) -> ExperimentConfig:
    preset = doc.pop("preset", "desk")
    if preset == "desk":
        cfg = ExperimentConfig()
    elif preset == "paper":
        cfg = paper_preset()
    else:
        raise ConfigurationError(f"unknown preset {preset!r}")
    known = set(cfg.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    for key in ("scenarios", "strategies"):
        if key in doc:
            doc[key] = tuple(doc[key])
    try:
        return replace(cfg, **doc)
    except TypeError as exc:
        raise ConfigurationError(f"invalid config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config root must be an object, got {type(doc).__name__}")
    return config_from_dict(doc)


def default_sweep_grids() -> dict:
    """Evaluation grids extending past the training ranges."""
    return {
        "phi0": np.linspace(-np.pi, np.pi, 13).tolist(),
        "epsilon": np.linspace(-40.0, 40.0, 9).tolist(),
        "gamma": np.linspace(0.0, 50.0, 6).tolist(),
        "sigma_g": np.linspace(0.0, 50.0, 6).tolist(),
        "noise_sigma": np.linspace(10.0, 2.0 * 5000.0 * np.sqrt(2.0), 6).tolist(),
        "rw_step_size": [0.0, 1e3, 1e5],
    }


@dataclass(frozen=True)
class EvalRecord:
    strategy: str
    scenario: str
    seed: int
    theta: list
    theta_hat: list
    mae: float
    mosae: float
    w_opt: float
    snr_db: float
    ms_per_sample: float


def _derived_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, path)]).generate_state(1)[0])


@dataclass
class SuiteContext:
    """Shared state for one suite run: geometry, priors, trained models."""

    cfg: ExperimentConfig
    basis: BasisSet
    priors: PriorTable
    models: dict = field(default_factory=dict)      # (kind, range_mode) -> MlpModel
    histories: dict = field(default_factory=dict)

    @property
    def axis(self):
        return self.basis.axis


def build_context(cfg: ExperimentConfig) -> SuiteContext:
    if cfg.basis_path is not None:
        crop = tuple(cfg.axis.get("crop_ppm", (0.5, 4.0)))
        basis = load_basis(cfg.basis_path, crop_ppm=crop)
    else:
        axis = build_axis(**cfg.axis) if cfg.axis else build_axis()
        basis = default_basis(axis)
    priors = default_priors(basis.names)
    return SuiteContext(cfg=cfg, basis=basis, priors=priors)


def _train_config(cfg: ExperimentConfig, range_code: int) -> TrainConfig:
    steps = max(1, -(-cfg.train_samples // int(cfg.train.get("batch_size", 16))))
    return TrainConfig(
        max_steps=steps,
        batch_size=int(cfg.train.get("batch_size", 16)),
        validate_every=int(cfg.train.get("validate_every", 256)),
        val_size=int(cfg.train.get("val_size", 1024)),
        lr=float(cfg.train.get("lr", 1e-4)),
        master_seed=_derived_seed(cfg.seed, _NS_TRAIN, range_code),
    )


def _needed_models(cfg: ExperimentConfig) -> set:
    adapt_init = cfg.adapt.get("init", "supervised")
    needed = set()
    for scenario in cfg.scenarios:
        model_range, _ = SCENARIO_MAP[scenario]
        for strat in cfg.strategies:
            if strat in ("supervised", "tta_online"):
                needed.add(("supervised", model_range))
            elif strat == "self_supervised":
                needed.add(("self_supervised", model_range))
            elif strat in ("tta_instance", "tta_domain"):
                if adapt_init in ("supervised", "self_supervised"):
                    needed.add((adapt_init, model_range))
            if strat == "tta_online" and adapt_init == "self_supervised":
                needed.add(("self_supervised", model_range))
    return needed


def train_models(ctx: SuiteContext, progress=None) -> None:
    cfg = ctx.cfg
    for kind, range_mode in sorted(_needed_models(cfg)):
        key = (kind, range_mode)
        if key in ctx.models:
            continue
        if progress:
            progress(f"training {kind} ({range_mode})")
        range_code = 0 if range_mode == "mid_range" else 1
        stream = TrainingStream(ctx.priors, Scenario(f"train_{range_mode}", range_mode),
                                ctx.basis, cfg.seed, namespace=(_NS_TRAIN, range_code))
        tcfg = _train_config(cfg, range_code)
        trainer = train_supervised if kind == "supervised" else train_self_supervised
        result = trainer(stream, tcfg)
        ctx.models[key] = result.model
        ctx.histories[key] = {"val_losses": result.val_losses, "best_step": result.best_step}


def test_dataset(ctx: SuiteContext, range_mode: str) -> list[SampleRecord]:
    """Test sets are keyed by amplitude range, so scenarios sharing a range share data."""
    code = 0 if range_mode == "mid_range" else 1
    seed = _derived_seed(ctx.cfg.seed, _NS_TEST, code)
    scenario = Scenario(f"test_{range_mode}", range_mode)
    return generate_dataset(ctx.cfg.test_size, ctx.priors, scenario, ctx.basis,
                            master_seed=seed)


def _adapt_config(ctx: SuiteContext) -> AdaptConfig:
    overrides = {k: v for k, v in ctx.cfg.adapt.items() if k != "seed"}
    try:
        return AdaptConfig(seed=_derived_seed(ctx.cfg.seed, _NS_ADAPT), **overrides)
    except TypeError as exc:
        raise ConfigurationError(f"invalid adapt config: {exc}") from exc


def _fit_options(ctx: SuiteContext) -> FitOptions:
    return FitOptions(lr=float(ctx.cfg.fit.get("lr", 0.1)),
                      epochs=int(ctx.cfg.fit.get("epochs", 1000)),
                      priors=ctx.priors)


def _tta_init_model(ctx: SuiteContext, model_range: str):
    acfg = _adapt_config(ctx)
    if acfg.init == "scratch":
        from .strategies import model_spec_for
        from .nnet import mlp_init

        return mlp_init(model_spec_for(ctx.basis), seed=_derived_seed(ctx.cfg.seed, _NS_ADAPT, 7))
    return ctx.models[(acfg.init, model_range)]


def predict_strategy(ctx: SuiteContext, strategy: str, model_range: str,
                     records: list[SampleRecord]) -> np.ndarray:
    """Predicted theta vectors (n, P) for a strategy over a test set."""
    ys = np.stack([r.observed.values for r in records])
    basis = ctx.basis
    if strategy == "oracle":
        return np.stack([r.theta.to_vector() for r in records])
    if strategy == "midpoint":
        lo, hi = ctx.priors.bounds_vectors()
        mid = 0.5 * (lo + hi)
        return np.tile(mid, (len(records), 1))
    if strategy in ("supervised", "self_supervised"):
        return predict_batch(ctx.models[(strategy, model_range)], ys)
    if strategy == "model_based":
        opts = _fit_options(ctx)
        return np.stack([fit_model_based(y, basis, opts).theta.to_vector() for y in ys])
    acfg = _adapt_config(ctx)
    init = _tta_init_model(ctx, model_range)
    if strategy == "tta_instance":
        acfg = replace(acfg, mode="instance")
        return np.stack([tta_instance(init, y, basis, acfg).to_vector() for y in ys])
    if strategy == "tta_online":
        acfg = replace(acfg, mode="online")
        batches = [ys[i:i + acfg.online_batch] for i in range(0, len(ys), acfg.online_batch)]
        result = tta_online(init, batches, basis, acfg)
        return np.vstack(result.predictions)
    if strategy == "tta_domain":
        acfg = replace(acfg, mode="domain")
        adapted = tta_domain(init, ys, basis, acfg)
        return adapted_predict(adapted, ys, acfg)
    raise ConfigurationError(f"unknown strategy {strategy!r}")


def measure_time(run, n_samples: int, repeats: int = 3) -> dict:
    """Median wall-clock ms per sample over >= 3 repeats of a warmed-up workload."""
    repeats = max(3, int(repeats))
    run()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run()
        times.append((time.perf_counter() - t0) * 1e3 / max(1, n_samples))
    arr = np.array(times)
    return {"ms_per_sample": float(np.median(arr)),
            "ms_spread": float(arr.max() - arr.min()),
            "repeats": repeats}


def time_strategy(ctx: SuiteContext, strategy: str, model_range: str,
                  records: list[SampleRecord]) -> dict:
    """Per-sample timing: batch-amortized for network inference, per-spectrum for fitting."""
    cfg = ctx.cfg
    if strategy in ("model_based", "tta_instance"):
        subset = records[:max(1, min(cfg.timing_subset, len(records)))]
        run = lambda: predict_strategy(ctx, strategy, model_range, subset)
        return measure_time(run, len(subset), cfg.timing_repeats)
    subset = records[:min(len(records), max(cfg.timing_subset, 256))]
    run = lambda: predict_strategy(ctx, strategy, model_range, subset)
    return measure_time(run, len(subset), cfg.timing_repeats)


def evaluate_strategy(ctx: SuiteContext, strategy: str, scenario: str,
                      records: list[SampleRecord], preds: np.ndarray,
                      ms_per_sample: float) -> list[EvalRecord]:
    mm = ctx.basis.mm_index
    out = []
    for rec, pred in zip(records, preds):
        true_amps = rec.theta.amplitudes
        pred_amps = pred[:ctx.basis.n_metabolites]
        out.append(EvalRecord(
            strategy=strategy, scenario=scenario, seed=rec.seed,
            theta=rec.theta.to_vector().tolist(), theta_hat=np.asarray(pred).tolist(),
            mae=mae(pred_amps, true_amps, mm),
            mosae=mosae(pred_amps, true_amps, mm),
            w_opt=optimal_scale(pred_amps, true_amps, mm),
            snr_db=rec.snr_db, ms_per_sample=ms_per_sample,
        ))
    return out


def run_scenario_suite(cfg: ExperimentConfig, out_dir=None, progress=None,
                       with_timing: bool = True) -> dict:
    """Train required models, evaluate every (strategy, scenario) pair, emit reports."""
    ctx = build_context(cfg)
    train_models(ctx, progress=progress)
    datasets = {}
    all_records: list[EvalRecord] = []
    for scenario in cfg.scenarios:
        model_range, test_range = SCENARIO_MAP[scenario]
        if test_range not in datasets:
            datasets[test_range] = test_dataset(ctx, test_range)
        records = datasets[test_range]
        for strategy in cfg.strategies:
            if progress:
                progress(f"evaluating {strategy} on {scenario}")
            preds = predict_strategy(ctx, strategy, model_range, records)
            timing = (time_strategy(ctx, strategy, model_range, records)
                      if with_timing else {"ms_per_sample": float("nan")})
            all_records.extend(evaluate_strategy(ctx, strategy, scenario, records, preds,
                                                 timing["ms_per_sample"]))
    summary = summarize(all_records)
    if out_dir is not None:
        write_outputs(out_dir, cfg, all_records, summary)
    return {"records": all_records, "summary": summary, "context": ctx}


def summarize(records: list[EvalRecord]) -> list[dict]:
    """Aggregate per-record metrics into one row per (strategy, scenario)."""
    keys = []
    groups: dict = {}
    for rec in records:
        key = (rec.strategy, rec.scenario)
        if key not in groups:
            groups[key] = []
            keys.append(key)
        groups[key].append(rec)
    rows = []
    for strategy, scenario in keys:
        grp = groups[(strategy, scenario)]
        mae_s = aggregate([r.mae for r in grp])
        mosae_s = aggregate([r.mosae for r in grp])
        rows.append({
            "strategy": strategy, "scenario": scenario, "n": len(grp),
            "mae_mean": mae_s.mean, "mae_se": mae_s.standard_error,
            "mosae_mean": mosae_s.mean, "mosae_se": mosae_s.standard_error,
            "ms_per_sample": grp[0].ms_per_sample,
        })
    return rows


def write_eval_records(path, records: list[EvalRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec)) + "\n")


def read_eval_records(path) -> list[EvalRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                records.append(EvalRecord(**json.loads(line)))
    return records


def write_summary_csv(path, rows: list[dict]) -> None:
    if not rows:
        with open(path, "w") as fh:
            fh.write("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_outputs(out_dir, cfg: ExperimentConfig, records, summary) -> None:
    import os

    os.makedirs(out_dir, exist_ok=True)
    write_eval_records(os.path.join(out_dir, "eval_records.jsonl"), records)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
    sidecar = {"version": __version__, "config": asdict(cfg)}
    with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
        json.dump(sidecar, fh, indent=1, default=list)


def run_sweep_suite(cfg: ExperimentConfig, out_dir=None, progress=None) -> dict:
    """Evaluate strategies over single-parameter perturbation sweeps.

    Random-walk corruption only ever enters here, on evaluation datasets;
    training streams have no corruption path.
    """
    ctx = build_context(cfg)
    train_models(ctx, progress=progress)
    grids = cfg.sweeps or default_sweep_grids()
    base = Scenario("sweep_base", "mid_range")
    long_rows, curve_rows = [], []
    for param, grid in grids.items():
        if progress:
            progress(f"sweeping {param}")
        sweep = make_sweep(param, grid, base, cfg.sweep_n_per_value, ctx.priors,
                           ctx.basis, master_seed=_derived_seed(cfg.seed, _NS_SWEEP))
        records = sweep.records()
        for strategy in cfg.strategies:
            preds = predict_strategy(ctx, strategy, "mid_range", records)
            evals = evaluate_strategy(ctx, strategy, f"sweep_{param}", records, preds,
                                      float("nan"))
            for point, ev in zip(sweep.points, evals):
                long_rows.append({
                    "parameter": param, "value": point.value, "ood": point.ood,
                    "strategy": strategy, "seed": ev.seed, "mosae": ev.mosae,
                    "mae": ev.mae, "snr_db": ev.snr_db,
                })
            for value in dict.fromkeys(p.value for p in sweep.points):
                vals = [ev.mosae for point, ev in zip(sweep.points, evals)
                        if point.value == value]
                agg = aggregate(vals)
                curve_rows.append({
                    "parameter": param, "value": value, "strategy": strategy,
                    "mean_mosae": agg.mean, "se_mosae": agg.standard_error, "n": agg.n,
                    "ood": not (ctx.priors.ranges[param][0] <= value <= ctx.priors.ranges[param][1]),
                })
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        write_summary_csv(os.path.join(out_dir, "sweep_records.csv"), long_rows)
        write_summary_csv(os.path.join(out_dir, "sweep_curves.csv"), curve_rows)
        with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
            json.dump({"version": __version__, "config": asdict(cfg)}, fh, indent=1, default=list)
    return {"long": long_rows, "curves": curve_rows, "context": ctx}
