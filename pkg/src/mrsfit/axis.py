"""Sampling geometry: frequency/ppm grids, time signals, and spectra.

The frequency axis labels the reordered DFT bins with an
endpoint-inclusive grid from -bandwidth/2 to +bandwidth/2 (the
convention common in MRS fitting tools).  Chemical shift follows
ppm = center_ppm + f_hz / field_mhz, so ppm increases along the array.

Cropping selects the half-open index range [nearest(f_min), nearest(f_max))
on the ppm grid; with the default 1024-point / 3000 Hz / 298.03 MHz axis
the 0.5-4.0 ppm window is exactly 355 bins wide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ValidationError


@dataclass(frozen=True)
class SpectralAxis:
    """Immutable sampling geometry shared by signals, spectra, and bases."""

    n_points: int = 1024
    bandwidth_hz: float = 3000.0
    field_mhz: float = 298.03
    center_ppm: float = 4.65
    crop_ppm: tuple[float, float] | None = (0.5, 4.0)

    freq_hz: np.ndarray = field(init=False, repr=False, compare=False)
    ppm: np.ndarray = field(init=False, repr=False, compare=False)
    crop_start: int = field(init=False)
    crop_stop: int = field(init=False)

    def __post_init__(self):
        if self.n_points < 2:
            raise ConfigurationError(f"n_points must be >= 2, got {self.n_points}")
        if self.bandwidth_hz <= 0 or self.field_mhz <= 0:
            raise ConfigurationError("bandwidth_hz and field_mhz must be positive")
        freq = np.linspace(-self.bandwidth_hz / 2, self.bandwidth_hz / 2, self.n_points)
        ppm = self.center_ppm + freq / self.field_mhz
        object.__setattr__(self, "freq_hz", freq)
        object.__setattr__(self, "ppm", ppm)
        if self.crop_ppm is None:
            start, stop = 0, self.n_points
        else:
            lo, hi = self.crop_ppm
            if not (lo < hi):
                raise ConfigurationError(f"crop window must satisfy f_min < f_max, got {self.crop_ppm}")
            if lo < ppm[0] or hi > ppm[-1]:
                raise ConfigurationError(
                    f"crop window {self.crop_ppm} outside representable range "
                    f"[{ppm[0]:.4f}, {ppm[-1]:.4f}] ppm"
                )
            start = int(np.argmin(np.abs(ppm - lo)))
            stop = int(np.argmin(np.abs(ppm - hi)))
            if stop <= start:
                raise ConfigurationError(f"crop window {self.crop_ppm} selects no grid points")
        object.__setattr__(self, "crop_start", start)
        object.__setattr__(self, "crop_stop", stop)
        self.freq_hz.setflags(write=False)
        self.ppm.setflags(write=False)

    @property
    def crop_length(self) -> int:
        return self.crop_stop - self.crop_start

    @property
    def crop_slice(self) -> slice:
        return slice(self.crop_start, self.crop_stop)

    @property
    def freq_hz_cropped(self) -> np.ndarray:
        return self.freq_hz[self.crop_slice]

    @property
    def ppm_cropped(self) -> np.ndarray:
        return self.ppm[self.crop_slice]

    @property
    def dwell_s(self) -> float:
        return 1.0 / self.bandwidth_hz

    @property
    def time_s(self) -> np.ndarray:
        """Acquisition time grid t_k = k / bandwidth."""
        return np.arange(self.n_points) * self.dwell_s

    def geometry_dict(self) -> dict:
        d = {
            "n_points": self.n_points,
            "bandwidth_hz": self.bandwidth_hz,
            "field_mhz": self.field_mhz,
            "center_ppm": self.center_ppm,
        }
        if self.crop_ppm is not None:
            d["crop_ppm"] = list(self.crop_ppm)
        return d


def build_axis(
    n_points: int = 1024,
    bandwidth_hz: float = 3000.0,
    field_mhz: float = 298.03,
    center_ppm: float = 4.65,
    crop_ppm: tuple[float, float] | None = (0.5, 4.0),
) -> SpectralAxis:
    """Construct a validated SpectralAxis; crop_ppm=None keeps the full window."""
    if crop_ppm is not None:
        crop_ppm = (float(crop_ppm[0]), float(crop_ppm[1]))
    return SpectralAxis(int(n_points), float(bandwidth_hz), float(field_mhz),
                        float(center_ppm), crop_ppm)


@dataclass(frozen=True)
class TimeSignal:
    """Complex time-domain signal sampled on the axis time grid."""

    samples: np.ndarray
    dwell_s: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if not np.all(np.isfinite(samples.view(np.float64))):
            raise ValidationError("time signal contains non-finite samples")
        object.__setattr__(self, "samples", samples)
        self.samples.setflags(write=False)


@dataclass(frozen=True)
class ComplexSpectrum:
    """Frequency-domain values, either full length or restricted to the crop window."""

    values: np.ndarray
    axis: SpectralAxis
    cropped: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        expected = self.axis.crop_length if self.cropped else self.axis.n_points
        if values.shape != (expected,):
            raise ValidationError(
                f"spectrum length {values.shape} does not match axis "
                f"({'crop' if self.cropped else 'full'} length {expected})"
            )
        if not np.all(np.isfinite(values.view(np.float64))):
            raise ValidationError("spectrum contains non-finite values")
        object.__setattr__(self, "values", values)
        self.values.setflags(write=False)

    def crop(self) -> "ComplexSpectrum":
        """Restrict to the axis crop window; idempotent on cropped spectra."""
        if self.cropped:
            return self
        return ComplexSpectrum(self.values[self.axis.crop_slice], self.axis, cropped=True)

    @property
    def freq_hz(self) -> np.ndarray:
        return self.axis.freq_hz_cropped if self.cropped else self.axis.freq_hz

    @property
    def ppm(self) -> np.ndarray:
        return self.axis.ppm_cropped if self.cropped else self.axis.ppm


def to_frequency_domain(sig: TimeSignal, axis: SpectralAxis, crop: bool = True) -> ComplexSpectrum:
    """DFT of a time signal with bins reordered so ppm increases along the array."""
    if sig.samples.shape != (axis.n_points,):
        raise ValidationError(
            f"signal length {sig.samples.shape[0]} does not match axis n_points {axis.n_points}"
        )
    spectrum = np.fft.fftshift(np.fft.fft(sig.samples))
    full = ComplexSpectrum(spectrum, axis, cropped=False)
    return full.crop() if crop else full
