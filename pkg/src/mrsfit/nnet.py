"""Self-contained MLP: batch-norm input, ELU hidden layers, constrained output
head, exact reverse-mode gradients, and an Adam optimizer.

The network consumes unit-norm complex spectra.  Real and imaginary parts
form two channels that share per-frequency-bin batch-norm statistics
(computed jointly over batch and channel); the normalized channels are
flattened to a 2L vector feeding the fully connected stack.

The output head maps the raw last-layer activations to physically valid
parameters: softplus amplitudes, softplus+offset broadenings, a scaled
tanh for the first-order phase, and identity for shift / zeroth-order
phase / baseline coefficients.

Batch-norm scale/shift parameters are disabled by default; the default
network then counts 532,384 trainable parameters.  Enable them with
MlpSpec(bn_affine=True) if wanted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError

CHECKPOINT_VERSION = 1


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class OutputHeadSpec:
    """Component-wise activations mapping raw outputs to theta.

    Layout: [amplitudes (softplus) | gamma, sigma_g (softplus + offset) |
             epsilon (linear) | phi0 (linear) | phi1 (scaled tanh) |
             baseline (linear)].
    """

    n_amplitudes: int = 21
    n_baseline: int = 6
    phi1_scale: float = 1e-4
    broadening_offset: float = 1.0

    @property
    def width(self) -> int:
        return self.n_amplitudes + 5 + self.n_baseline

    @property
    def amplitude_slice(self) -> slice:
        return slice(0, self.n_amplitudes)

    @property
    def broadening_slice(self) -> slice:
        return slice(self.n_amplitudes, self.n_amplitudes + 2)

    @property
    def phi1_index(self) -> int:
        return self.n_amplitudes + 4

    @property
    def baseline_slice(self) -> slice:
        return slice(self.n_amplitudes + 5, self.width)

    def scaled_indices(self) -> np.ndarray:
        """Components multiplied by the spectrum norm on de-normalization."""
        return np.concatenate([
            np.arange(self.n_amplitudes),
            np.arange(self.n_amplitudes + 5, self.width),
        ])

    def apply(self, raw: np.ndarray) -> np.ndarray:
        theta = raw.copy()
        theta[..., self.amplitude_slice] = softplus(raw[..., self.amplitude_slice])
        theta[..., self.broadening_slice] = (
            softplus(raw[..., self.broadening_slice]) + self.broadening_offset
        )
        theta[..., self.phi1_index] = self.phi1_scale * np.tanh(raw[..., self.phi1_index])
        return theta

    def backward(self, raw: np.ndarray, dtheta: np.ndarray) -> np.ndarray:
        draw = dtheta.copy()
        draw[..., self.amplitude_slice] *= sigmoid(raw[..., self.amplitude_slice])
        draw[..., self.broadening_slice] *= sigmoid(raw[..., self.broadening_slice])
        th = np.tanh(raw[..., self.phi1_index])
        draw[..., self.phi1_index] *= self.phi1_scale * (1.0 - th**2)
        return draw

    def invert(self, theta: np.ndarray) -> np.ndarray:
        """Pre-activation values reproducing theta (requires feasible theta)."""
        theta = np.asarray(theta, dtype=np.float64)
        raw = theta.copy()

        def softplus_inv(y):
            y = np.asarray(y, dtype=np.float64)
            if np.any(y <= 0):
                raise ValidationError("softplus inverse needs strictly positive values")
            return y + np.log(-np.expm1(-y))

        raw[..., self.amplitude_slice] = softplus_inv(theta[..., self.amplitude_slice])
        raw[..., self.broadening_slice] = softplus_inv(
            theta[..., self.broadening_slice] - self.broadening_offset)
        ratio = theta[..., self.phi1_index] / self.phi1_scale
        if np.any(np.abs(ratio) >= 1):
            raise ValidationError("phi1 outside the representable tanh range")
        raw[..., self.phi1_index] = np.arctanh(ratio)
        return raw


@dataclass(frozen=True)
class MlpSpec:
    """Architecture: input bins L, layer widths [2L, hidden..., output], head."""

    input_bins: int = 355
    widths: tuple[int, ...] = (710, 512, 256, 128, 32)
    head: OutputHeadSpec | None = field(default_factory=OutputHeadSpec)
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    bn_affine: bool = False

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValidationError("widths must list at least input and output sizes")
        if self.widths[0] != 2 * self.input_bins:
            raise ValidationError(
                f"first width {self.widths[0]} must equal 2 * input_bins = {2 * self.input_bins}"
            )
        if self.head is not None and self.widths[-1] != self.head.width:
            raise ValidationError(
                f"last width {self.widths[-1]} must match head width {self.head.width}"
            )

    def to_json(self) -> str:
        doc = {
            "input_bins": self.input_bins,
            "widths": list(self.widths),
            "bn_momentum": self.bn_momentum,
            "bn_eps": self.bn_eps,
            "bn_affine": self.bn_affine,
            "head": None if self.head is None else {
                "n_amplitudes": self.head.n_amplitudes,
                "n_baseline": self.head.n_baseline,
                "phi1_scale": self.head.phi1_scale,
                "broadening_offset": self.head.broadening_offset,
            },
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MlpSpec":
        doc = json.loads(text)
        head = None
        if doc["head"] is not None:
            head = OutputHeadSpec(**doc["head"])
        return cls(input_bins=doc["input_bins"], widths=tuple(doc["widths"]), head=head,
                   bn_momentum=doc["bn_momentum"], bn_eps=doc["bn_eps"],
                   bn_affine=doc["bn_affine"])


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class MlpModel:
    """Mutable network state: layer parameters, batch-norm buffers, Adam state."""

    def __init__(self, spec: MlpSpec, weights, biases, adam: AdamState | None = None,
                 rng_state: str | None = None):
        self.spec = spec
        self.weights = weights  # list of (out, in) arrays
        self.biases = biases    # list of (out,) arrays
        L = spec.input_bins
        self.bn_running_mean = np.zeros(L)
        self.bn_running_var = np.ones(L)
        self.bn_weight = np.ones(L) if spec.bn_affine else None
        self.bn_bias = np.zeros(L) if spec.bn_affine else None
        self.rng_state = rng_state
        self.adam = adam or AdamState()
        if not self.adam.m:
            self.adam.m = [np.zeros_like(p) for p in self.parameters()]
            self.adam.v = [np.zeros_like(p) for p in self.parameters()]

    def parameters(self) -> list[np.ndarray]:
        """Trainable parameters in a fixed order (paired with gradients)."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        if self.spec.bn_affine:
            params.extend([self.bn_weight, self.bn_bias])
        return params

    def set_parameters(self, params: list[np.ndarray]) -> None:
        """Replace trainable parameters; order must match parameters()."""
        flat = list(params)
        n_layers = len(self.weights)
        self.weights = [flat[2 * i].copy() for i in range(n_layers)]
        self.biases = [flat[2 * i + 1].copy() for i in range(n_layers)]
        if self.spec.bn_affine:
            self.bn_weight = flat[2 * n_layers].copy()
            self.bn_bias = flat[2 * n_layers + 1].copy()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def clone(self) -> "MlpModel":
        dup = MlpModel(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            adam=AdamState(self.adam.lr, self.adam.beta1, self.adam.beta2, self.adam.eps,
                           self.adam.step, [m.copy() for m in self.adam.m],
                           [v.copy() for v in self.adam.v]),
            rng_state=self.rng_state,
        )
        dup.bn_running_mean = self.bn_running_mean.copy()
        dup.bn_running_var = self.bn_running_var.copy()
        if self.spec.bn_affine:
            dup.bn_weight = self.bn_weight.copy()
            dup.bn_bias = self.bn_bias.copy()
        return dup

    def state_equal(self, other: "MlpModel") -> bool:
        """Bit-exact comparison of all learnable state and buffers."""
        if self.spec != other.spec:
            return False
        pairs = list(zip(self.parameters(), other.parameters()))
        pairs += [(self.bn_running_mean, other.bn_running_mean),
                  (self.bn_running_var, other.bn_running_var)]
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in pairs)


def mlp_init(spec: MlpSpec, seed: int = 0) -> MlpModel:
    """Fan-in-scaled uniform init, U[-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(spec, weights, biases)


@dataclass
class ForwardCache:
    mode: str
    x2: np.ndarray          # (B, 2, L) raw channels
    xhat: np.ndarray        # (B, 2, L) normalized channels (pre-affine)
    mean: np.ndarray        # (L,) statistics used for normalization
    var: np.ndarray         # (L,)
    pre_acts: list          # per hidden layer pre-activations
    acts: list              # layer inputs: acts[0] is the flattened BN output
    raw: np.ndarray         # (B, out) pre-head output
    batch_size: int


def mlp_forward(model: MlpModel, batch: np.ndarray, mode: str = "eval",
                update_running: bool = True) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass over a batch of unit-norm complex spectra.

    mode="train" normalizes with batch statistics (pooled over batch and
    real/imag channels per bin) and, unless update_running=False, updates
    the running buffers; mode="eval" uses the stored running statistics.
    Returns the constrained theta estimates and a cache for backward().
    """
    spec = model.spec
    batch = np.asarray(batch)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[-1] != spec.input_bins:
        raise ValidationError(f"expected {spec.input_bins} bins, got {batch.shape[-1]}")
    if batch.shape[0] < 1:
        raise ValidationError("empty batch")
    if mode not in ("train", "eval"):
        raise ValidationError(f"unknown mode {mode!r}")
    norms = np.linalg.norm(batch, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValidationError("inputs must be normalized to unit Euclidean norm")

    b = batch.shape[0]
    x2 = np.stack([batch.real, batch.imag], axis=1)  # (B, 2, L)
    if mode == "train":
        mean = x2.mean(axis=(0, 1))
        var = x2.var(axis=(0, 1))
        if update_running:
            n = 2 * b
            unbiased = var * (n / (n - 1)) if n > 1 else var
            mom = spec.bn_momentum
            model.bn_running_mean = (1 - mom) * model.bn_running_mean + mom * mean
            model.bn_running_var = (1 - mom) * model.bn_running_var + mom * unbiased
    else:
        mean = model.bn_running_mean
        var = model.bn_running_var
    xhat = (x2 - mean) / np.sqrt(var + spec.bn_eps)
    normed = xhat
    if spec.bn_affine:
        normed = xhat * model.bn_weight + model.bn_bias

    acts = [normed.reshape(b, -1)]
    pre_acts = []
    h = acts[0]
    for i, (w, bias) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + bias
        if i < len(model.weights) - 1:
            pre_acts.append(z)
            h = elu(z)
            acts.append(h)
        else:
            raw = z
    theta = model.spec.head.apply(raw) if spec.head is not None else raw
    cache = ForwardCache(mode=mode, x2=x2, xhat=xhat, mean=mean, var=var,
                         pre_acts=pre_acts, acts=acts, raw=raw, batch_size=b)
    return theta, cache


def mlp_backward(model: MlpModel, cache: ForwardCache, dtheta: np.ndarray) -> list[np.ndarray]:
    """Exact gradients of a scalar loss w.r.t. every trainable parameter.

    dtheta is the loss cotangent over the constrained outputs, shaped like
    the forward result.  Gradient order matches model.parameters().
    """
    spec = model.spec
    dtheta = np.asarray(dtheta, dtype=np.float64)
    if dtheta.ndim == 1:
        dtheta = dtheta[None, :]
    if dtheta.shape != cache.raw.shape:
        raise ValidationError("cotangent shape does not match the cached forward pass")

    dz = spec.head.backward(cache.raw, dtheta) if spec.head is not None else dtheta
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        h_in = cache.acts[i]
        grads_w[i] = dz.T @ h_in
        grads_b[i] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ model.weights[i]
            dz = dh * elu_grad(cache.pre_acts[i - 1])

    dflat = dz @ model.weights[0]  # gradient w.r.t. BN output, flattened
    dnormed = dflat.reshape(cache.x2.shape)

    if spec.bn_affine:
        dgamma = np.sum(dnormed * cache.xhat, axis=(0, 1))
        dbeta = np.sum(dnormed, axis=(0, 1))
    # batch-norm sits at the input, so its statistics depend on data only;
    # no further backward is needed for parameter gradients

    grads = []
    for gw, gb in zip(grads_w, grads_b):
        grads.extend([gw, gb])
    if spec.bn_affine:
        grads.extend([dgamma, dbeta])
    return grads


def adam_step(model: MlpModel, grads: list[np.ndarray]) -> None:
    """Standard Adam update with bias correction; mutates the model in place."""
    params = model.parameters()
    if len(grads) != len(params):
        raise ValidationError("gradient list does not match parameter list")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient passed to the optimizer")
    st = model.adam
    st.step += 1
    b1c = 1.0 - st.beta1**st.step
    b2c = 1.0 - st.beta2**st.step
    lr_hat = st.lr / b1c
    inv_sqrt_b2c = 1.0 / np.sqrt(b2c)
    for p, g, m, v in zip(params, grads, st.m, st.v):
        m *= st.beta1
        m += (1 - st.beta1) * g
        scratch = np.square(g)
        scratch *= 1 - st.beta2
        v *= st.beta2
        v += scratch
        np.sqrt(v, out=scratch)
        scratch *= inv_sqrt_b2c
        scratch += st.eps
        np.divide(m, scratch, out=scratch)
        scratch *= lr_hat
        p -= scratch


def save_checkpoint(path, model: MlpModel) -> None:
    """Versioned binary container: spec echo, parameters, BN buffers, Adam state."""
    arrays = {}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
        arrays[f"adam_m{2 * i}"] = model.adam.m[2 * i]
        arrays[f"adam_m{2 * i + 1}"] = model.adam.m[2 * i + 1]
        arrays[f"adam_v{2 * i}"] = model.adam.v[2 * i]
        arrays[f"adam_v{2 * i + 1}"] = model.adam.v[2 * i + 1]
    if model.spec.bn_affine:
        k = 2 * len(model.weights)
        arrays["bn_weight"] = model.bn_weight
        arrays["bn_bias"] = model.bn_bias
        arrays[f"adam_m{k}"] = model.adam.m[k]
        arrays[f"adam_m{k + 1}"] = model.adam.m[k + 1]
        arrays[f"adam_v{k}"] = model.adam.v[k]
        arrays[f"adam_v{k + 1}"] = model.adam.v[k + 1]
    np.savez_compressed(
        path,
        checkpoint_version=CHECKPOINT_VERSION,
        spec_json=model.spec.to_json(),
        n_layers=len(model.weights),
        bn_running_mean=model.bn_running_mean,
        bn_running_var=model.bn_running_var,
        adam_meta=np.array([model.adam.lr, model.adam.beta1, model.adam.beta2,
                            model.adam.eps, model.adam.step]),
        rng_state=model.rng_state or "",
        **arrays,
    )


def load_checkpoint(path, expected_spec: MlpSpec | None = None) -> MlpModel:
    with np.load(path, allow_pickle=False) as data:
        if int(data["checkpoint_version"]) != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version in {path}")
        spec = MlpSpec.from_json(str(data["spec_json"]))
        if expected_spec is not None and spec != expected_spec:
            raise ValidationError("checkpoint spec does not match the expected architecture")
        n_layers = int(data["n_layers"])
        weights = [data[f"w{i}"] for i in range(n_layers)]
        biases = [data[f"b{i}"] for i in range(n_layers)]
        meta = data["adam_meta"]
        n_params = 2 * n_layers + (2 if spec.bn_affine else 0)
        adam = AdamState(lr=float(meta[0]), beta1=float(meta[1]), beta2=float(meta[2]),
                         eps=float(meta[3]), step=int(meta[4]),
                         m=[data[f"adam_m{i}"] for i in range(n_params)],
                         v=[data[f"adam_v{i}"] for i in range(n_params)])
        rng_state = str(data["rng_state"]) or None
        model = MlpModel(spec, weights, biases, adam=adam, rng_state=rng_state)
        model.bn_running_mean = data["bn_running_mean"]
        model.bn_running_var = data["bn_running_var"]
        if spec.bn_affine:
            model.bn_weight = data["bn_weight"]
            model.bn_bias = data["bn_bias"]
    return model
