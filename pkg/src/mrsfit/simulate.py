"""Dataset generation: parameter draws, labeled spectra, and perturbation sweeps.

Every record owns a seed derived from the master seed via
numpy SeedSequence([master_seed, record_index]), so any record can be
regenerated in isolation and generation order (or parallelism) cannot
change the results.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .axis import ComplexSpectrum, SpectralAxis
from .basis import BasisSet
from .errors import ValidationError
from .priors import RW_NAMES, PriorTable, Scenario
from .signal_model import (
    ModelParams,
    NoiseSpec,
    RandomWalkSpec,
    add_noise,
    apply_random_walk,
    compute_snr,
    forward_model,
    metabolite_spectrum,
)


def record_rng(master_seed: int, index: int) -> np.random.Generator:
    """Per-record generator; documented derivation from the master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def sample_params(priors: PriorTable, scenario: Scenario,
                  rng: np.random.Generator) -> tuple[ModelParams, NoiseSpec]:
    """Draw every theta component and the noise sigma i.i.d. uniform from its range."""
    table = scenario.effective_priors(priors)
    draws = {}
    for name in (*table.theta_names, "noise_sigma"):
        lo, hi = table.ranges[name]
        draws[name] = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    m = len(table.amplitude_names)
    theta = ModelParams(
        amplitudes=np.array([draws[n] for n in table.amplitude_names]),
        gamma=draws["gamma"],
        sigma_g=draws["sigma_g"],
        epsilon=draws["epsilon"],
        phi0=draws["phi0"],
        phi1=draws["phi1"],
        baseline=np.array([draws[f"b{i + 1}"] for i in range(6)]),
    )
    assert theta.to_vector().size == m + 5 + 6
    return theta, NoiseSpec(draws["noise_sigma"])


def sample_random_walk(priors: PriorTable, rng: np.random.Generator,
                       step_size: float | None = None) -> RandomWalkSpec:
    """Draw random-walk corruption parameters, optionally pinning the step size."""
    vals = {}
    for name in RW_NAMES:
        lo, hi = priors.ranges[name]
        vals[name] = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    if step_size is not None:
        vals["rw_step_size"] = float(step_size)
    return RandomWalkSpec(vals["rw_step_size"], vals["rw_smoothing"],
                          vals["rw_min_bound"], vals["rw_max_bound"])


@dataclass(frozen=True)
class SampleRecord:
    """One labeled spectrum: ground truth, clean and observed crops, and metadata."""

    theta: ModelParams
    clean: ComplexSpectrum
    observed: ComplexSpectrum
    snr_db: float
    seed: int              # record index under the dataset master seed
    scenario: str
    noise_sigma: float
    ood: bool = False      # set by sweeps when the pinned value leaves its prior range


def _make_record(index: int, master_seed: int, priors: PriorTable, scenario: Scenario,
                 basis: BasisSet, rw_step: float | None = None,
                 scenario_tag: str | None = None, ood: bool = False) -> SampleRecord:
    rng = record_rng(master_seed, index)
    theta, noise = sample_params(priors, scenario, rng)
    clean = forward_model(theta, basis)
    observed = add_noise(clean, noise, rng)
    if rw_step is not None:
        walk = sample_random_walk(priors, rng, step_size=rw_step)
        observed = apply_random_walk(observed, walk, rng)
    snr = compute_snr(metabolite_spectrum(theta, basis), noise.sigma)
    return SampleRecord(
        theta=theta, clean=clean, observed=observed, snr_db=snr,
        seed=index, scenario=scenario_tag or scenario.name,
        noise_sigma=noise.sigma, ood=ood,
    )


def generate_dataset(n: int, priors: PriorTable, scenario: Scenario, basis: BasisSet,
                     axis: SpectralAxis | None = None, master_seed: int = 0) -> list[SampleRecord]:
    """Generate n records: sample_params -> forward_model -> add_noise, per-record seeds."""
    if n < 1:
        raise ValidationError("dataset size must be >= 1")
    del axis  # geometry travels with the basis
    return [_make_record(i, master_seed, priors, scenario, basis) for i in range(n)]


@dataclass(frozen=True)
class SweepPoint:
    value: float
    record: SampleRecord
    ood: bool


@dataclass(frozen=True)
class SweepDataset:
    parameter: str
    points: tuple[SweepPoint, ...]

    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    def records(self) -> list[SampleRecord]:
        return [p.record for p in self.points]


def make_sweep(parameter: str, grid, base_scenario: Scenario, n_per_value: int,
               priors: PriorTable, basis: BasisSet, master_seed: int = 0) -> SweepDataset:
    """Pin one parameter to each grid value, drawing the rest from the base scenario.

    parameter may be any theta component name, "noise_sigma", or
    "rw_step_size" (random-walk corruption, applied to the observed
    spectrum only; spectra are never corrupted inside training streams).
    Records falling outside the parameter's prior range are flagged OoD.
    """
    sweepable = set(priors.ranges)
    if parameter not in sweepable:
        raise ValidationError(f"unknown sweep parameter {parameter!r}")
    lo, hi = priors.ranges[parameter]
    points: list[SweepPoint] = []
    index = 0
    for value in grid:
        value = float(value)
        ood = not (lo <= value <= hi)
        tag = f"{base_scenario.name}|{parameter}={value:g}"
        if parameter == "rw_step_size":
            scenario = base_scenario
            rw_step = value
        else:
            scenario = replace(base_scenario,
                               overrides={**base_scenario.overrides, parameter: (value, value)})
            rw_step = None
        for _ in range(n_per_value):
            rec = _make_record(index, master_seed, priors, scenario, basis,
                               rw_step=rw_step, scenario_tag=tag, ood=ood)
            points.append(SweepPoint(value=value, record=rec, ood=ood))
            index += 1
    return SweepDataset(parameter=parameter, points=tuple(points))
