"""Normalization and the quantification strategies.

All estimators operate on unit-norm spectra; the norm is propagated
forward so predicted amplitudes and baseline coefficients come back on
the input scale while shape parameters pass through unchanged.

Strategies:
  * fit_model_based      -- direct Adam descent on the signal parameters
                            (no network), constrained through the same
                            output-head activations as the networks.
  * train_supervised     -- regression onto min-max-scaled parameters
                            (scaled mean absolute error over all
                            components), ad-hoc generated batches.
  * train_self_supervised -- reconstruction (residual) loss, gradients
                            flowing through the forward model into the
                            network weights.
  * tta_instance / tta_online / tta_domain -- residual-loss fine-tuning
                            of a pretrained network per spectrum, per
                            streaming batch, or over a whole test set.
                            Batch-norm runs on batch statistics during
                            adaptation and adapted prediction passes.
  * predict              -- plain eval-mode inference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .axis import ComplexSpectrum
from .basis import BasisSet
from .errors import NumericError, ValidationError
from .nnet import (
    AdamState,
    MlpModel,
    MlpSpec,
    OutputHeadSpec,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_init,
)
from .priors import PriorTable, Scenario
from .signal_model import ModelParams, add_noise, forward_model, residual_gradient
from .simulate import sample_params


@dataclass(frozen=True)
class NormContext:
    """Euclidean norm of the observed spectrum, propagated to the outputs."""

    norm: float


def _values(y) -> np.ndarray:
    return y.values if isinstance(y, ComplexSpectrum) else np.asarray(y, dtype=np.complex128)


def normalize(y) -> tuple[np.ndarray, NormContext]:
    """Scale a spectrum to unit Euclidean norm."""
    vals = _values(y)
    norm = float(np.linalg.norm(vals))
    if norm == 0.0:
        raise ValidationError("cannot normalize an identically zero spectrum")
    return vals / norm, NormContext(norm)


def denormalize(theta_vec: np.ndarray, ctx: NormContext, head: OutputHeadSpec) -> np.ndarray:
    """Scale amplitude and baseline components back by the stored norm."""
    out = np.array(theta_vec, dtype=np.float64, copy=True)
    out[..., head.scaled_indices()] *= ctx.norm
    return out


@dataclass(frozen=True)
class TrainConfig:
    max_steps: int
    batch_size: int = 16
    validate_every: int = 256
    val_size: int = 1024
    lr: float = 1e-4
    master_seed: int = 0

    def __post_init__(self):
        if min(self.max_steps, self.batch_size, self.validate_every, self.val_size) < 1:
            raise ValidationError("training counts must be positive")


@dataclass(frozen=True)
class AdaptConfig:
    mode: str = "instance"            # instance | online | domain
    instance_steps: int = 50
    online_batch: int = 16
    domain_epochs: int = 1000
    batch_size: int = 16
    inner_lr: float = 1e-4
    init: str = "supervised"          # supervised | self_supervised | scratch
    bn_update_running: bool = True
    predict_post_update: bool = True  # online: predictions from post-update weights
    seed: int = 0

    def __post_init__(self):
        if min(self.online_batch, self.batch_size) < 1:
            raise ValidationError("adaptation batch sizes must be positive")
        if self.instance_steps < 0 or self.domain_epochs < 0:
            raise ValidationError("adaptation step counts must be non-negative")


class TrainingStream:
    """Ad-hoc sample generator: every batch is freshly drawn from the scenario.

    Carries the base prior table used for loss scaling (scenario narrowing
    affects sampling only).
    """

    def __init__(self, priors: PriorTable, scenario: Scenario, basis: BasisSet,
                 seed, namespace: tuple[int, ...] = ()):
        self.priors = priors
        self.scenario = scenario
        self.basis = basis
        self.seed = int(seed)
        self._rng = np.random.default_rng(np.random.SeedSequence([self.seed, *map(int, namespace)]))

    def next_batch(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """(observed spectra (n, L), true theta vectors (n, P))."""
        basis = self.basis
        ys = np.empty((n, basis.axis.crop_length), dtype=np.complex128)
        thetas = None
        for i in range(n):
            theta, noise = sample_params(self.priors, self.scenario, self._rng)
            clean = forward_model(theta, basis)
            ys[i] = add_noise(clean, noise, self._rng).values
            vec = theta.to_vector()
            if thetas is None:
                thetas = np.empty((n, vec.size))
            thetas[i] = vec
        return ys, thetas


def model_spec_for(basis: BasisSet, widths=(512, 256, 128)) -> MlpSpec:
    """Default architecture sized to the basis and crop window."""
    L = basis.axis.crop_length
    head = OutputHeadSpec(n_amplitudes=basis.n_metabolites, n_baseline=6)
    return MlpSpec(input_bins=L, widths=(2 * L, *widths, head.width), head=head)


def scaled_mae(theta_true: np.ndarray, theta_pred: np.ndarray, p_min: np.ndarray,
               p_max: np.ndarray, with_grad: bool = False):
    """Component-wise absolute error on min-max-scaled parameters.

    Components with degenerate ranges (p_max == p_min) are excluded with a
    warning.  Returns the scalar loss, or (loss, d loss / d theta_pred).
    """
    theta_true = np.atleast_2d(theta_true)
    theta_pred = np.atleast_2d(theta_pred)
    width = p_max - p_min
    ok = width > 0
    if not np.all(ok):
        warnings.warn("excluding components with degenerate prior ranges from the scaled MAE",
                      stacklevel=2)
    if not np.any(ok):
        raise ValidationError("no components left after excluding degenerate ranges")
    b = theta_true.shape[0]
    c = int(np.sum(ok))
    diff = (theta_pred[:, ok] - theta_true[:, ok]) / width[ok]
    loss = float(np.sum(np.abs(diff)) / (b * c))
    if not with_grad:
        return loss
    grad = np.zeros_like(theta_pred)
    grad[:, ok] = np.sign(diff) / (width[ok] * b * c)
    return loss, grad


@dataclass
class TrainResult:
    model: MlpModel
    val_losses: list
    train_losses: list
    best_step: int


def _snapshot(model: MlpModel):
    return ([p.copy() for p in model.parameters()],
            model.bn_running_mean.copy(), model.bn_running_var.copy())


def _restore(model: MlpModel, snap) -> None:
    params, rm, rv = snap
    model.set_parameters(params)
    model.bn_running_mean = rm.copy()
    model.bn_running_var = rv.copy()


def _batch_residual_cotangent(theta_hat: np.ndarray, y_unit: np.ndarray,
                              basis: BasisSet) -> tuple[float, np.ndarray]:
    """Mean residual loss over a batch and its cotangent w.r.t. theta_hat."""
    b = theta_hat.shape[0]
    cot = np.empty_like(theta_hat)
    total = 0.0
    for i in range(b):
        theta = ModelParams.from_vector(theta_hat[i], basis.n_metabolites)
        spec = ComplexSpectrum(y_unit[i], basis.axis, cropped=True)
        loss_i, grad_i = residual_gradient(theta, spec, basis)
        total += loss_i
        cot[i] = grad_i
    if not np.isfinite(total):
        raise NumericError("non-finite reconstruction loss")
    return total / b, cot / b


def _normalize_batch(ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(ys, axis=-1)
    if np.any(norms == 0):
        raise ValidationError("zero spectrum in batch")
    return ys / norms[:, None], norms


def center_output_bias(model: MlpModel, priors: PriorTable, norm_ref: float) -> None:
    """Point the fresh network at the prior midpoints.

    Sets the output-layer bias so the initial constrained outputs sit at
    the middle of each parameter range (amplitude and baseline components
    expressed in the unit-norm input domain via norm_ref).  Without this
    the softplus heads start orders of magnitude off scale and Adam at
    1e-4 spends the whole training budget crawling the output bias.
    """
    head = model.spec.head
    lo, hi = priors.bounds_vectors()
    target = 0.5 * (lo + hi)
    target[head.scaled_indices()] /= norm_ref
    amp = target[head.amplitude_slice]
    floor = 1e-9 * max(float(np.max(amp)), 1.0)
    target[head.amplitude_slice] = np.maximum(amp, floor)
    model.biases[-1][:] = head.invert(target)


def reference_norm(stream: TrainingStream, n: int = 64) -> float:
    """Median spectrum norm over a seeded calibration draw."""
    cal = TrainingStream(stream.priors, stream.scenario, stream.basis,
                         stream.seed, namespace=(0xCA1,))
    ys, _ = cal.next_batch(n)
    return float(np.median(np.linalg.norm(ys, axis=-1)))


def _train(stream: TrainingStream, cfg: TrainConfig, loss_kind: str) -> TrainResult:
    basis = stream.basis
    spec = model_spec_for(basis)
    model = mlp_init(spec, seed=cfg.master_seed)
    model.adam.lr = cfg.lr
    center_output_bias(model, stream.priors, reference_norm(stream))
    val_stream = TrainingStream(stream.priors, stream.scenario, basis,
                                cfg.master_seed, namespace=(0xA11DA7,))
    p_min, p_max = stream.priors.bounds_vectors()
    head = spec.head

    val_losses, train_losses = [], []
    best = (np.inf, None, 0)
    for step in range(1, cfg.max_steps + 1):
        ys, thetas = stream.next_batch(cfg.batch_size)
        y_unit, norms = _normalize_batch(ys)
        theta_hat, cache = mlp_forward(model, y_unit, mode="train")
        if loss_kind == "supervised":
            scaled = theta_hat * 1.0
            scaled[:, head.scaled_indices()] *= norms[:, None]
            loss, dden = scaled_mae(thetas, scaled, p_min, p_max, with_grad=True)
            dtheta = dden
            dtheta[:, head.scaled_indices()] *= norms[:, None]
        else:
            loss, dtheta = _batch_residual_cotangent(theta_hat, y_unit, basis)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite training loss at step {step}")
        train_losses.append(loss)
        grads = mlp_backward(model, cache, dtheta)
        adam_step(model, grads)

        if step % cfg.validate_every == 0:
            vloss = _validation_loss(model, val_stream, cfg, loss_kind, p_min, p_max)
            val_losses.append(vloss)
            if vloss < best[0]:
                best = (vloss, _snapshot(model), step)
    if best[1] is not None:
        _restore(model, best[1])
    return TrainResult(model=model, val_losses=val_losses, train_losses=train_losses,
                       best_step=best[2])


def _validation_loss(model, val_stream, cfg, loss_kind, p_min, p_max) -> float:
    ys, thetas = val_stream.next_batch(cfg.val_size)
    y_unit, norms = _normalize_batch(ys)
    theta_hat, _ = mlp_forward(model, y_unit, mode="eval")
    if loss_kind == "supervised":
        scaled = theta_hat * 1.0
        scaled[:, model.spec.head.scaled_indices()] *= norms[:, None]
        return scaled_mae(thetas, scaled, p_min, p_max)
    loss, _ = _batch_residual_cotangent(theta_hat, y_unit, val_stream.basis)
    return loss


def train_supervised(stream: TrainingStream, cfg: TrainConfig) -> TrainResult:
    """Regression onto scaled parameters; checkpoints the best validation loss."""
    return _train(stream, cfg, "supervised")


def train_self_supervised(stream: TrainingStream, cfg: TrainConfig) -> TrainResult:
    """Reconstruction training; ground-truth parameters are never used."""
    return _train(stream, cfg, "self_supervised")


def predict_batch(model: MlpModel, ys: np.ndarray) -> np.ndarray:
    """Eval-mode predictions for a batch of raw spectra, de-normalized."""
    ys = np.atleast_2d(np.asarray(ys, dtype=np.complex128))
    y_unit, norms = _normalize_batch(ys)
    theta_hat, _ = mlp_forward(model, y_unit, mode="eval")
    theta_hat[:, model.spec.head.scaled_indices()] *= norms[:, None]
    return theta_hat


def predict(model: MlpModel, y) -> ModelParams:
    """Plain inference on one spectrum."""
    vec = predict_batch(model, _values(y)[None, :])[0]
    return ModelParams.from_vector(vec, model.spec.head.n_amplitudes)


@dataclass(frozen=True)
class FitOptions:
    lr: float = 0.1
    epochs: int = 1000
    fit_baseline: bool = True
    priors: PriorTable | None = None      # used for the mid-range amplitude init
    init_theta: ModelParams | None = None  # overrides the default init


@dataclass
class FitResult:
    theta: ModelParams          # de-normalized parameters at the best objective
    losses: np.ndarray          # objective per epoch (normalized domain)
    best_epoch: int

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.losses)


def _default_fit_init(basis: BasisSet, head: OutputHeadSpec,
                      priors: PriorTable | None) -> np.ndarray:
    """Init at mid-range amplitude proportions, gamma = sigma_g = 10/s, and
    zero shifts, phases, and baseline.

    The fit runs on a unit-norm spectrum, so the mid-range amplitudes are
    rescaled by a basis-derived constant that gives the initial model
    spectrum unit norm.  The constant depends only on the basis and the
    priors, keeping the fit exactly homogeneous in the input scale.
    """
    m = basis.n_metabolites
    theta = np.zeros(head.width)
    if priors is not None:
        lo, hi = priors.bounds_vectors()
        mid = 0.5 * (lo[:m] + hi[:m])
    else:
        mid = np.ones(m)
    mid = np.maximum(mid, 1e-6 * np.max(mid))
    theta[:m] = mid
    theta[m] = 10.0      # gamma
    theta[m + 1] = 10.0  # sigma_g
    probe = forward_model(ModelParams.from_vector(theta, m), basis)
    theta[:m] = mid / np.linalg.norm(probe.values)
    raw = head.invert(theta)
    raw[head.baseline_slice] = 0.0
    return raw


def fit_model_based(y, basis: BasisSet, opts: FitOptions = FitOptions()) -> FitResult:
    """Adam descent on the signal parameters through the head activations.

    The observed spectrum is normalized internally; the returned theta is
    the best-objective iterate, de-normalized back to the input scale.
    """
    head = OutputHeadSpec(n_amplitudes=basis.n_metabolites, n_baseline=6)
    y_unit, ctx = normalize(y)
    y_spec = ComplexSpectrum(y_unit, basis.axis, cropped=True)

    if opts.init_theta is not None:
        # init is given in physical units; move it to the unit-norm domain
        vec = opts.init_theta.to_vector()
        vec[head.scaled_indices()] /= ctx.norm
        raw = head.invert(vec)
    else:
        raw = _default_fit_init(basis, head, opts.priors)
    m_state = np.zeros_like(raw)
    v_state = np.zeros_like(raw)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    losses = np.empty(opts.epochs + 1)
    best_loss, best_raw = np.inf, raw.copy()
    for epoch in range(opts.epochs + 1):
        try:
            theta_vec = head.apply(raw)
            theta = ModelParams.from_vector(theta_vec, basis.n_metabolites)
            loss, grad_theta = residual_gradient(theta, y_spec, basis)
        except (ValidationError, NumericError) as exc:
            raise NumericError(
                f"model-based fit diverged at epoch {epoch}: {exc} "
                f"(recent losses: {losses[max(0, epoch - 5):epoch]})"
            ) from exc
        if not np.isfinite(loss):
            raise NumericError(
                f"model-based fit diverged at epoch {epoch} "
                f"(recent losses: {losses[max(0, epoch - 5):epoch]})"
            )
        losses[epoch] = loss
        if loss < best_loss:
            best_loss, best_raw = loss, raw.copy()
        if epoch == opts.epochs:
            break
        grad_raw = head.backward(raw, grad_theta)
        if not opts.fit_baseline:
            grad_raw[head.baseline_slice] = 0.0
        m_state = beta1 * m_state + (1 - beta1) * grad_raw
        v_state = beta2 * v_state + (1 - beta2) * grad_raw**2
        t = epoch + 1
        raw = raw - opts.lr * (m_state / (1 - beta1**t)) / (np.sqrt(v_state / (1 - beta2**t)) + eps)

    best_vec = denormalize(head.apply(best_raw), ctx, head)
    return FitResult(theta=ModelParams.from_vector(best_vec, basis.n_metabolites),
                     losses=losses, best_epoch=int(np.argmin(losses)))


def _fresh_adapter(model_init: MlpModel, cfg: AdaptConfig) -> MlpModel:
    work = model_init.clone()
    work.adam = AdamState(lr=cfg.inner_lr)
    work.adam.m = [np.zeros_like(p) for p in work.parameters()]
    work.adam.v = [np.zeros_like(p) for p in work.parameters()]
    return work


def _adapt_on_batch(work: MlpModel, y_unit: np.ndarray, basis: BasisSet,
                    cfg: AdaptConfig) -> float:
    """One residual-loss Adam update on a batch of unit-norm spectra."""
    theta_hat, cache = mlp_forward(work, y_unit, mode="train",
                                   update_running=cfg.bn_update_running)
    loss, cot = _batch_residual_cotangent(theta_hat, y_unit, basis)
    grads = mlp_backward(work, cache, cot)
    adam_step(work, grads)
    return loss


def _adapted_prediction(work: MlpModel, y_unit: np.ndarray, norms: np.ndarray,
                        cfg: AdaptConfig) -> np.ndarray:
    """Prediction pass with batch statistics (adaptation-time batch-norm mode)."""
    theta_hat, _ = mlp_forward(work, y_unit, mode="train",
                               update_running=cfg.bn_update_running)
    theta_hat[:, work.spec.head.scaled_indices()] *= norms[:, None]
    return theta_hat


def tta_instance(model_init: MlpModel, y, basis: BasisSet,
                 cfg: AdaptConfig = AdaptConfig()) -> ModelParams:
    """Adapt a clone of the pretrained network to a single spectrum.

    Runs cfg.instance_steps residual-loss updates, then predicts with the
    adapted weights.  The initialization model is never mutated; each
    spectrum adapts independently.
    """
    if cfg.instance_steps == 0:
        return predict(model_init, y)
    work = _fresh_adapter(model_init, cfg)
    y_unit, ctx = normalize(y)
    batch = y_unit[None, :]
    for _ in range(cfg.instance_steps):
        _adapt_on_batch(work, batch, basis, cfg)
    vec = _adapted_prediction(work, batch, np.array([ctx.norm]), cfg)[0]
    return ModelParams.from_vector(vec, basis.n_metabolites)


@dataclass
class OnlineResult:
    predictions: list          # one (B, P) de-normalized array per batch
    model: MlpModel
    batch_losses: list


def tta_online(model_init: MlpModel, batch_stream, basis: BasisSet,
               cfg: AdaptConfig = AdaptConfig()) -> OnlineResult:
    """Adapt continuously over a stream of batches, weights carrying over.

    Each batch gets one Adam update on its residual loss; by default the
    batch predictions come from the post-update weights.
    """
    work = _fresh_adapter(model_init, cfg)
    predictions, batch_losses = [], []
    for ys in batch_stream:
        ys = np.atleast_2d(np.asarray(ys, dtype=np.complex128))
        y_unit, norms = _normalize_batch(ys)
        if cfg.predict_post_update:
            loss = _adapt_on_batch(work, y_unit, basis, cfg)
            preds = _adapted_prediction(work, y_unit, norms, cfg)
        else:
            preds = _adapted_prediction(work, y_unit, norms, cfg)
            loss = _adapt_on_batch(work, y_unit, basis, cfg)
        predictions.append(preds)
        batch_losses.append(loss)
    return OnlineResult(predictions=predictions, model=work, batch_losses=batch_losses)


def tta_domain(model_init: MlpModel, ys: np.ndarray, basis: BasisSet,
               cfg: AdaptConfig = AdaptConfig()) -> MlpModel:
    """Adapt over a whole test set with multi-epoch residual training."""
    work = _fresh_adapter(model_init, cfg)
    ys = np.atleast_2d(np.asarray(ys, dtype=np.complex128))
    y_unit, _ = _normalize_batch(ys)
    n = y_unit.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0xD0]))
    for _ in range(cfg.domain_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            chunk = perm[start:start + cfg.batch_size]
            _adapt_on_batch(work, y_unit[chunk], basis, cfg)
    return work


def adapted_predict(model: MlpModel, ys: np.ndarray, cfg: AdaptConfig = AdaptConfig()) -> np.ndarray:
    """Batched prediction pass for adapted models (batch-statistics mode)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=np.complex128))
    y_unit, norms = _normalize_batch(ys)
    out = []
    for start in range(0, y_unit.shape[0], cfg.batch_size):
        stop = start + cfg.batch_size
        out.append(_adapted_prediction(model, y_unit[start:stop], norms[start:stop], cfg))
    return np.vstack(out)
