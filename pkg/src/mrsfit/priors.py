"""Uniform sampling ranges for all simulation parameters, and test scenarios.

The default table covers the 21 basis amplitudes (mM), the global shape
and phase parameters, the six baseline coefficients, the complex-noise
standard deviation, and the random-walk corruption parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ValidationError

SHAPE_NAMES = ("gamma", "sigma_g", "epsilon", "phi0", "phi1")
BASELINE_NAMES = ("b1", "b2", "b3", "b4", "b5", "b6")
NOISE_NAME = "noise_sigma"
RW_NAMES = ("rw_step_size", "rw_smoothing", "rw_min_bound", "rw_max_bound")

DEFAULT_AMPLITUDE_RANGES: dict[str, tuple[float, float]] = {
    "Ala": (0.0, 1.6),
    "Asc": (0.0, 4.9),
    "Asp": (0.0, 4.8),
    "Cr": (3.9, 12.3),
    "GABA": (0.0, 4.0),
    "Gln": (0.0, 6.8),
    "Glu": (6.0, 17.9),
    "Gly": (0.0, 1.0),
    "GPC": (0.0, 3.6),
    "GSH": (0.0, 3.6),
    "mIns": (4.0, 12.1),
    "Lac": (0.0, 3.1),
    "NAAG": (0.0, 2.5),
    "NAA": (7.5, 16.3),
    "PCh": (0.0, 2.4),
    "PCr": (0.0, 5.5),
    "PE": (0.0, 5.2),
    "Scyllo": (0.0, 0.6),
    "Ser": (0.0, 7.3),
    "Tau": (1.2, 6.0),
    "MM": (0.0, 400.0),
}

DEFAULT_OTHER_RANGES: dict[str, tuple[float, float]] = {
    "gamma": (2.0, 25.0),
    "sigma_g": (2.0, 25.0),
    "epsilon": (-10.0, 10.0),
    "phi0": (-0.5, 0.5),
    "phi1": (-1e-5, 1e-5),
    "b1": (-600.0, 200.0),
    "b2": (-800.0, 300.0),
    "b3": (-1000.0, 600.0),
    "b4": (-600.0, 1000.0),
    "b5": (-1600.0, 200.0),
    "b6": (-400.0, 1000.0),
    "noise_sigma": (10.0, math.sqrt(2.0) * 5000.0),
    "rw_step_size": (0.0, 1e5),
    "rw_smoothing": (1.0, 1e5),
    "rw_min_bound": (-1e6, 0.0),
    "rw_max_bound": (0.0, 1e6),
}


def central_range(bounds: tuple[float, float]) -> tuple[float, float]:
    """Middle half of a closed interval: [lo + w/4, hi - w/4]."""
    lo, hi = bounds
    if lo > hi:
        raise ValidationError(f"invalid range {bounds}")
    quarter = 0.25 * (hi - lo)
    return (lo + quarter, hi - quarter)


@dataclass(frozen=True)
class PriorTable:
    """Closed uniform ranges for every sampled parameter, keyed by name.

    amplitude_names fixes the order of the amplitude block; it must match
    the basis entry order used for simulation.
    """

    amplitude_names: tuple[str, ...]
    ranges: dict[str, tuple[float, float]]

    def __post_init__(self):
        for name in (*self.amplitude_names, *SHAPE_NAMES, *BASELINE_NAMES, NOISE_NAME, *RW_NAMES):
            if name not in self.ranges:
                raise ValidationError(f"prior table is missing a range for {name!r}")
        for name, (lo, hi) in self.ranges.items():
            if lo > hi:
                raise ValidationError(f"prior range for {name!r} has p_min > p_max")
        for name in self.amplitude_names:
            if self.ranges[name][0] < 0:
                raise ValidationError(f"amplitude range for {name!r} must be non-negative")

    @property
    def theta_names(self) -> tuple[str, ...]:
        return (*self.amplitude_names, *SHAPE_NAMES, *BASELINE_NAMES)

    def bounds_vectors(self):
        """(p_min, p_max) arrays over the theta component order."""
        import numpy as np

        names = self.theta_names
        lo = np.array([self.ranges[n][0] for n in names])
        hi = np.array([self.ranges[n][1] for n in names])
        return lo, hi

    def with_ranges(self, updates: dict[str, tuple[float, float]]) -> "PriorTable":
        unknown = set(updates) - set(self.ranges)
        if unknown:
            raise ValidationError(f"unknown parameter names in override: {sorted(unknown)}")
        merged = dict(self.ranges)
        merged.update({k: (float(v[0]), float(v[1])) for k, v in updates.items()})
        return PriorTable(self.amplitude_names, merged)


def default_priors(amplitude_names=None) -> PriorTable:
    if amplitude_names is None:
        amplitude_names = tuple(DEFAULT_AMPLITUDE_RANGES)
    ranges = {**DEFAULT_AMPLITUDE_RANGES, **DEFAULT_OTHER_RANGES}
    missing = set(amplitude_names) - set(ranges)
    if missing:
        raise ValidationError(f"no default amplitude range for {sorted(missing)}")
    return PriorTable(tuple(amplitude_names), ranges)


@dataclass(frozen=True)
class Scenario:
    """A named sampling regime: amplitude range mode plus optional per-parameter overrides."""

    name: str
    amplitude_range_mode: str = "full_range"  # or "mid_range"
    overrides: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.amplitude_range_mode not in ("full_range", "mid_range"):
            raise ValidationError(f"unknown amplitude_range_mode {self.amplitude_range_mode!r}")

    def effective_priors(self, priors: PriorTable) -> PriorTable:
        """Apply the amplitude-range mode (amplitude rows only), then overrides."""
        table = priors
        if self.amplitude_range_mode == "mid_range":
            table = table.with_ranges(
                {name: central_range(priors.ranges[name]) for name in priors.amplitude_names}
            )
        if self.overrides:
            table = table.with_ranges(self.overrides)
        return table


MID_RANGE = Scenario("id_mid_range", "mid_range")
FULL_RANGE = Scenario("ood_full_range", "full_range")
