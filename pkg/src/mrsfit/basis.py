"""Metabolite basis synthesis and the JSON interchange format.

Each basis entry is a sum of complex exponentials evaluated on the axis
time grid, one per resonance line:

    s(t) = sum_p  A_p * exp(i * 2*pi * delta_p * t) * exp(-(g_p * t)^2)

with delta_p = (ppm_p - center_ppm) * field_mhz in Hz.  Metabolite peaks
use g_p = 0; the macromolecule entry carries a fixed intrinsic Gaussian
damping so its lines are broad before any global broadening is applied.

The default basis ships as a versioned data file (data/default_basis.json)
with literature-style singlet/multiplet approximations; peak positions and
amplitudes are idealized stand-ins, not measured values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .axis import SpectralAxis, build_axis
from .errors import ValidationError


@dataclass(frozen=True)
class Peak:
    """One resonance line: position (ppm), amplitude, intrinsic Gaussian damping (1/s)."""

    ppm: float
    amplitude: float
    intrinsic_gauss_per_s: float = 0.0


@dataclass(frozen=True)
class MetaboliteSpec:
    name: str
    peaks: tuple[Peak, ...]
    is_mm: bool = False


@dataclass(frozen=True)
class BasisSet:
    """Time-domain basis signals for all metabolites, sharing one axis."""

    names: tuple[str, ...]
    signals: np.ndarray  # (M, n_points) complex
    is_mm: tuple[bool, ...]
    axis: SpectralAxis
    source: tuple[MetaboliteSpec, ...] = field(default=(), compare=False)

    def __post_init__(self):
        signals = np.asarray(self.signals, dtype=np.complex128)
        if signals.shape != (len(self.names), self.axis.n_points):
            raise ValidationError("basis signal matrix shape does not match names/axis")
        object.__setattr__(self, "signals", signals)
        self.signals.setflags(write=False)

    @property
    def n_metabolites(self) -> int:
        return len(self.names)

    @property
    def mm_index(self) -> int | None:
        """Index of the macromolecule entry, or None if the basis has none."""
        for i, flag in enumerate(self.is_mm):
            if flag:
                return i
        return None

    def fingerprint(self) -> str:
        """Content hash over names, flags, and the raw signal bytes."""
        import hashlib

        h = hashlib.sha256()
        h.update(json.dumps([list(self.names), list(self.is_mm)]).encode())
        h.update(np.ascontiguousarray(self.signals).tobytes())
        h.update(json.dumps(self.axis.geometry_dict(), sort_keys=True).encode())
        return h.hexdigest()


def _validate_spec(metabolites: list[MetaboliteSpec] | tuple[MetaboliteSpec, ...],
                   axis: SpectralAxis) -> None:
    if len(metabolites) == 0:
        raise ValidationError("basis description has no metabolites")
    names = [m.name for m in metabolites]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate metabolite names in basis description: {names}")
    if sum(m.is_mm for m in metabolites) > 1:
        raise ValidationError("at most one macromolecule entry is supported")
    lo, hi = axis.ppm[0], axis.ppm[-1]
    for m in metabolites:
        if len(m.peaks) == 0:
            raise ValidationError(f"metabolite {m.name!r} has no peaks")
        for p in m.peaks:
            if not (lo <= p.ppm <= hi):
                raise ValidationError(
                    f"peak of {m.name!r} at {p.ppm} ppm outside representable range [{lo:.3f}, {hi:.3f}]"
                )


def synthesize_basis(metabolites: list[MetaboliteSpec] | tuple[MetaboliteSpec, ...],
                     axis: SpectralAxis) -> BasisSet:
    """Evaluate the basis description on the axis time grid (deterministic, no RNG)."""
    _validate_spec(metabolites, axis)
    t = axis.time_s
    signals = np.zeros((len(metabolites), axis.n_points), dtype=np.complex128)
    for i, m in enumerate(metabolites):
        for p in m.peaks:
            delta_hz = (p.ppm - axis.center_ppm) * axis.field_mhz
            line = p.amplitude * np.exp(2j * np.pi * delta_hz * t)
            if p.intrinsic_gauss_per_s != 0.0:
                line = line * np.exp(-((p.intrinsic_gauss_per_s * t) ** 2))
            signals[i] += line
    return BasisSet(
        names=tuple(m.name for m in metabolites),
        signals=signals,
        is_mm=tuple(m.is_mm for m in metabolites),
        axis=axis,
        source=tuple(metabolites),
    )


def _metabolites_to_json(metabolites) -> list[dict]:
    return [
        {
            "name": m.name,
            "is_mm": m.is_mm,
            "peaks": [
                {"ppm": p.ppm, "amplitude": p.amplitude,
                 "intrinsic_gauss_per_s": p.intrinsic_gauss_per_s}
                for p in m.peaks
            ],
        }
        for m in metabolites
    ]


def _metabolites_from_json(entries: list[dict]) -> list[MetaboliteSpec]:
    out = []
    for e in entries:
        peaks = tuple(
            Peak(float(p["ppm"]), float(p["amplitude"]),
                 float(p.get("intrinsic_gauss_per_s", 0.0)))
            for p in e["peaks"]
        )
        out.append(MetaboliteSpec(name=str(e["name"]), peaks=peaks, is_mm=bool(e.get("is_mm", False))))
    return out


def save_basis(path, metabolites, axis: SpectralAxis) -> None:
    """Write the basis description + axis geometry as JSON (numeric fields round-trip exactly)."""
    doc = {
        "axis": {
            "n_points": axis.n_points,
            "bandwidth_hz": axis.bandwidth_hz,
            "field_mhz": axis.field_mhz,
            "center_ppm": axis.center_ppm,
        },
        "metabolites": _metabolites_to_json(metabolites),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_basis(path, crop_ppm=(0.5, 4.0)) -> BasisSet:
    """Load a basis interchange file, validate it, and synthesize the basis set."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"could not parse basis file {path}: {exc}") from exc
    try:
        ax = doc["axis"]
        axis = build_axis(ax["n_points"], ax["bandwidth_hz"], ax["field_mhz"],
                          ax["center_ppm"], crop_ppm)
        metabolites = _metabolites_from_json(doc["metabolites"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed basis file {path}: {exc}") from exc
    return synthesize_basis(metabolites, axis)


def default_basis_description() -> list[MetaboliteSpec]:
    """The bundled 21-entry basis description (20 metabolites + 1 MM)."""
    with resources.files("mrsfit.data").joinpath("default_basis.json").open() as fh:
        doc = json.load(fh)
    return _metabolites_from_json(doc["metabolites"])


def default_basis(axis: SpectralAxis | None = None) -> BasisSet:
    """Synthesize the bundled default basis on the given axis (default geometry if None)."""
    if axis is None:
        axis = build_axis()
    return synthesize_basis(default_basis_description(), axis)
