"""Parametric forward model, noisy observations, and exact gradients.

The modeled spectrum on the crop window is

    x(f | theta) = exp(i * (phi0 + f * phi1)) * sum_m a_m * S_m(f)  +  B(f)

where each broadened basis spectrum is

    S_m(f) = FFT{ s_m(t) * exp(-(gamma + sigma_g^2 * t + i * epsilon) * t) }

(Lorentzian gamma, Gaussian sigma_g, both 1/s and global across entries,
epsilon a global frequency shift in rad/s) and the baseline is a
complex polynomial over the crop window rescaled affinely to [-1, 1]:

    B(u) = sum_{k=0..K} (b_{k+1} + i * b_{K+2+k}) * u^k.

The phase factor multiplies only the metabolite sum; the baseline is added
outside it.  The macromolecule entry receives the same broadening, phasing,
and shifting as the metabolites.

Sign conventions: with the DFT kernel exp(-i*2*pi*f*t), the shift
multiplier exp(-i*epsilon*t) displaces every line by -epsilon/(2*pi) Hz on
the displayed axis.  phi1 multiplies the frequency in Hz relative to the
carrier.

Parameter vector layout (length M + 5 + 2*(K+1)):
    [a_1 .. a_M, gamma, sigma_g, epsilon, phi0, phi1,
     b_1 .. b_{K+1} (real, ascending power), b_{K+2} .. b_{2(K+1)} (imag)]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .axis import ComplexSpectrum, SpectralAxis
from .basis import BasisSet
from .errors import NumericError, ValidationError

BASELINE_ORDER = 2  # polynomial order K


def n_theta(m: int, k: int = BASELINE_ORDER) -> int:
    return m + 5 + 2 * (k + 1)


@dataclass(frozen=True)
class ModelParams:
    """Signal-model parameters theta."""

    amplitudes: np.ndarray          # (M,) concentrations, mM; last entry may be the MM amplitude
    gamma: float                    # Lorentzian broadening, 1/s
    sigma_g: float                  # Gaussian broadening, 1/s
    epsilon: float                  # global frequency shift, rad/s
    phi0: float                     # zeroth-order phase, rad
    phi1: float                     # first-order phase, rad/Hz
    baseline: np.ndarray            # (2*(K+1),) real coefficients, a.u.

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.float64)
        base = np.asarray(self.baseline, dtype=np.float64)
        if amps.ndim != 1 or base.ndim != 1:
            raise ValidationError("amplitudes and baseline must be 1-D arrays")
        if np.any(amps < 0):
            raise ValidationError("amplitudes must be non-negative")
        if self.gamma < 0 or self.sigma_g < 0:
            raise ValidationError("broadenings gamma and sigma_g must be non-negative")
        if base.size % 2 != 0:
            raise ValidationError("baseline needs an even coefficient count (real block + imag block)")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "baseline", base)
        self.amplitudes.setflags(write=False)
        self.baseline.setflags(write=False)

    @property
    def n_metabolites(self) -> int:
        return self.amplitudes.size

    @property
    def baseline_order(self) -> int:
        return self.baseline.size // 2 - 1

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.amplitudes,
            [self.gamma, self.sigma_g, self.epsilon, self.phi0, self.phi1],
            self.baseline,
        ])

    @classmethod
    def from_vector(cls, vec: np.ndarray, m: int, k: int = BASELINE_ORDER) -> "ModelParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (n_theta(m, k),):
            raise ValidationError(f"theta vector must have length {n_theta(m, k)}, got {vec.shape}")
        return cls(
            amplitudes=vec[:m],
            gamma=float(vec[m]),
            sigma_g=float(vec[m + 1]),
            epsilon=float(vec[m + 2]),
            phi0=float(vec[m + 3]),
            phi1=float(vec[m + 4]),
            baseline=vec[m + 5:],
        )

    def scaled(self, factor: float) -> "ModelParams":
        """Multiply amplitudes and baseline coefficients by a positive factor."""
        return ModelParams(self.amplitudes * factor, self.gamma, self.sigma_g,
                           self.epsilon, self.phi0, self.phi1, self.baseline * factor)


def component_names(basis: BasisSet, k: int = BASELINE_ORDER) -> list[str]:
    """Documented component order of the theta vector for a given basis."""
    names = list(basis.names)
    names += ["gamma", "sigma_g", "epsilon", "phi0", "phi1"]
    names += [f"b{i + 1}" for i in range(2 * (k + 1))]
    return names


@dataclass(frozen=True)
class NoiseSpec:
    """Per-point complex Gaussian noise, std sigma on real and imaginary parts."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("noise sigma must be non-negative")


@dataclass(frozen=True)
class RandomWalkSpec:
    """Bounded, smoothed random-walk corruption (evaluation-only)."""

    step_size: float
    smoothing: float
    min_bound: float
    max_bound: float

    def __post_init__(self):
        if self.step_size < 0:
            raise ValidationError("random-walk step_size must be non-negative")
        if self.smoothing < 1:
            raise ValidationError("random-walk smoothing must be >= 1")
        if not (self.min_bound <= 0.0 <= self.max_bound):
            raise ValidationError("random-walk bounds must satisfy min <= 0 <= max")


def _check_dimensions(theta: ModelParams, basis: BasisSet) -> None:
    if theta.n_metabolites != basis.n_metabolites:
        raise ValidationError(
            f"theta has {theta.n_metabolites} amplitudes but basis has {basis.n_metabolites} entries"
        )


def _baseline_grid(axis: SpectralAxis) -> np.ndarray:
    """Crop window rescaled affinely to [-1, 1]."""
    f = axis.freq_hz_cropped
    return 2.0 * (f - f[0]) / (f[-1] - f[0]) - 1.0


def _damping(theta: ModelParams, t: np.ndarray) -> np.ndarray:
    decay = np.exp(-(theta.gamma + theta.sigma_g**2 * t) * t)
    return decay * np.exp(-1j * theta.epsilon * t)


def _broadened_spectra(theta: ModelParams, basis: BasisSet, extra_rows: np.ndarray | None = None):
    """Cropped spectra of all damped basis entries, plus optional extra time rows."""
    axis = basis.axis
    d = _damping(theta, axis.time_s)
    rows = basis.signals * d
    if extra_rows is not None:
        rows = np.vstack([rows, extra_rows * d])
    spec = np.fft.fftshift(np.fft.fft(rows, axis=-1), axes=-1)
    return spec[:, axis.crop_slice]


def _phase(theta: ModelParams, axis: SpectralAxis) -> np.ndarray:
    return np.exp(1j * (theta.phi0 + axis.freq_hz_cropped * theta.phi1))


def _baseline_values(theta: ModelParams, axis: SpectralAxis) -> np.ndarray:
    u = _baseline_grid(axis)
    k1 = theta.baseline_order + 1
    coeffs = theta.baseline[:k1] + 1j * theta.baseline[k1:]
    powers = u[None, :] ** np.arange(k1)[:, None]
    return coeffs @ powers


def forward_model(theta: ModelParams, basis: BasisSet, axis: SpectralAxis | None = None,
                  include_mm: bool = True, include_baseline: bool = True) -> ComplexSpectrum:
    """Evaluate x(f | theta) on the crop window.

    include_mm / include_baseline exist for diagnostics such as the
    metabolite-only SNR reference; the full model keeps both on.
    """
    axis = axis or basis.axis
    _check_dimensions(theta, basis)
    amps = theta.amplitudes
    if not include_mm and basis.mm_index is not None:
        amps = amps.copy()
        amps[basis.mm_index] = 0.0
    spectra = _broadened_spectra(theta, basis)
    met = amps @ spectra
    x = _phase(theta, axis) * met
    if include_baseline:
        x = x + _baseline_values(theta, axis)
    return ComplexSpectrum(x, axis, cropped=True)


def metabolite_spectrum(theta: ModelParams, basis: BasisSet) -> ComplexSpectrum:
    """Phased, broadened metabolite sum with baseline and MM excluded (SNR reference)."""
    return forward_model(theta, basis, include_mm=False, include_baseline=False)


def add_noise(clean: ComplexSpectrum, noise: NoiseSpec, rng: np.random.Generator) -> ComplexSpectrum:
    """Add i.i.d. complex Gaussian noise (std sigma per real/imag component)."""
    n = clean.values.size
    draws = rng.standard_normal((2, n))
    noisy = clean.values + noise.sigma * (draws[0] + 1j * draws[1])
    return ComplexSpectrum(noisy, clean.axis, cropped=clean.cropped)


def random_walk(spec: RandomWalkSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample the complex corruption R over n grid points.

    Each of the real and imaginary channels is an independent cumulative
    sum of N(0, step_size^2) increments, clamped to [min_bound, max_bound]
    after every step, then smoothed by a moving average whose window is
    max(1, round(n * smoothing / 1e5)) points (edges use the shrunken
    window so bounds are preserved).
    """
    steps = rng.standard_normal((2, n)) * spec.step_size
    walk = np.empty((2, n))
    level = np.zeros(2)
    for i in range(n):
        level = np.clip(level + steps[:, i], spec.min_bound, spec.max_bound)
        walk[:, i] = level
    window = max(1, round(n * spec.smoothing / 1e5))
    if window > 1:
        kernel = np.ones(window)
        counts = np.convolve(np.ones(n), kernel, mode="same")
        walk = np.vstack([np.convolve(w, kernel, mode="same") / counts for w in walk])
    return walk[0] + 1j * walk[1]


def apply_random_walk(spectrum: ComplexSpectrum, spec: RandomWalkSpec,
                      rng: np.random.Generator) -> ComplexSpectrum:
    """Add the bounded, smoothed random-walk corruption (evaluation-only nuisance)."""
    r = random_walk(spec, spectrum.values.size, rng)
    return ComplexSpectrum(spectrum.values + r, spectrum.axis, cropped=spectrum.cropped)


def residual_loss(theta: ModelParams, y: ComplexSpectrum, basis: BasisSet) -> float:
    """Squared L2 residual sum_f |y(f) - x(f|theta)|^2 over the crop window."""
    x = forward_model(theta, basis)
    r = x.values - y.values
    return float(np.sum(r.real**2 + r.imag**2))


def residual_gradient(theta: ModelParams, y: ComplexSpectrum, basis: BasisSet,
                      axis: SpectralAxis | None = None) -> tuple[float, np.ndarray]:
    """Loss sum_f |y - x(theta)|^2 and its exact gradient over the theta vector.

    The gradient is assembled analytically through the linear FFT: one
    batched transform yields the broadened basis spectra and the
    time-weighted rows needed for the gamma / sigma_g / epsilon partials.
    """
    axis = axis or basis.axis
    _check_dimensions(theta, basis)
    if not y.cropped or y.values.size != axis.crop_length:
        raise ValidationError("observed spectrum must be cropped to the axis window")

    m = basis.n_metabolites
    t = axis.time_s
    w = theta.amplitudes @ basis.signals  # combined time signal
    extra = np.vstack([
        -t * w,                           # d/d gamma
        -2.0 * theta.sigma_g * t**2 * w,  # d/d sigma_g
        -1j * t * w,                      # d/d epsilon
    ])
    spectra = _broadened_spectra(theta, basis, extra_rows=extra)
    s_m, d_shape = spectra[:m], spectra[m:]

    phase = _phase(theta, axis)
    met = theta.amplitudes @ s_m
    phased_met = phase * met
    x = phased_met + _baseline_values(theta, axis)
    r = x - y.values
    loss = float(np.sum(r.real**2 + r.imag**2))

    c = np.conj(r) * phase  # shared factor for all terms under the phase
    grad = np.empty(n_theta(m, theta.baseline_order))
    grad[:m] = 2.0 * np.real(s_m @ c)
    grad[m:m + 3] = 2.0 * np.real(d_shape @ c)
    rbar_met = np.conj(r) * phased_met
    grad[m + 3] = -2.0 * np.sum(rbar_met.imag)                            # phi0
    grad[m + 4] = -2.0 * np.sum(axis.freq_hz_cropped * rbar_met.imag)    # phi1
    u = _baseline_grid(axis)
    k1 = theta.baseline_order + 1
    powers = u[None, :] ** np.arange(k1)[:, None]
    grad[m + 5:m + 5 + k1] = 2.0 * (powers @ r.real)
    grad[m + 5 + k1:] = 2.0 * (powers @ r.imag)

    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericError(f"non-finite gradient at parameter index {bad}")
    return loss, grad


def compute_snr(metabolite_only: ComplexSpectrum, noise_sigma: float) -> float:
    """SNR in dB: mean metabolite power over the crop window vs complex noise power.

    Returns -inf for an identically zero metabolite signal.
    """
    if not metabolite_only.cropped:
        raise ValidationError("SNR is defined over the cropped window")
    if noise_sigma <= 0:
        raise ValidationError("noise sigma must be positive to define SNR")
    power = float(np.mean(np.abs(metabolite_only.values) ** 2))
    if power == 0.0:
        return float("-inf")
    return 10.0 * np.log10(power / (2.0 * noise_sigma**2))
