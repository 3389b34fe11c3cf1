import numpy as np
import pytest

from mrsfit.errors import NumericError, ValidationError
from mrsfit.nnet import (
    MlpSpec,
    OutputHeadSpec,
    adam_step,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    mlp_init,
    save_checkpoint,
)

TINY_HEAD = OutputHeadSpec(n_amplitudes=3, n_baseline=6)


def tiny_spec(L=6, hidden=(9, 7, 5)):
    return MlpSpec(input_bins=L, widths=(2 * L, *hidden, TINY_HEAD.width), head=TINY_HEAD)


def unit_batch(rng, b, L):
    y = rng.standard_normal((b, L)) + 1j * rng.standard_normal((b, L))
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def test_init_is_seed_deterministic():
    a = mlp_init(tiny_spec(), seed=11)
    b = mlp_init(tiny_spec(), seed=11)
    assert a.state_equal(b)
    c = mlp_init(tiny_spec(), seed=12)
    assert not a.state_equal(c)


def test_minimal_spec_parameter_count():
    spec = MlpSpec(input_bins=1, widths=(2, 1), head=None)
    assert mlp_init(spec, seed=0).n_parameters() == 3  # w, w, b


def test_default_parameter_count_is_532k():
    model = mlp_init(MlpSpec(), seed=0)
    assert round(model.n_parameters() / 1000) == 532
    assert model.n_parameters() == 532_384


def test_width_invariants_enforced():
    with pytest.raises(ValidationError):
        MlpSpec(input_bins=10, widths=(21, 5, TINY_HEAD.width), head=TINY_HEAD)
    with pytest.raises(ValidationError):
        MlpSpec(input_bins=10, widths=(20, 5, TINY_HEAD.width + 1), head=TINY_HEAD)


def test_head_constrains_outputs():
    rng = np.random.default_rng(0)
    raw = rng.standard_normal((2000, TINY_HEAD.width)) * 30
    theta = TINY_HEAD.apply(raw)
    assert np.all(theta[:, TINY_HEAD.amplitude_slice] >= 0)
    assert np.all(theta[:, TINY_HEAD.broadening_slice] >= 1.0)
    assert np.all(np.abs(theta[:, TINY_HEAD.phi1_index]) <= TINY_HEAD.phi1_scale)
    # linear components pass through untouched
    assert np.array_equal(theta[:, TINY_HEAD.baseline_slice], raw[:, TINY_HEAD.baseline_slice])


def test_head_invert_roundtrip():
    rng = np.random.default_rng(1)
    raw = rng.standard_normal((50, TINY_HEAD.width)) * 3
    theta = TINY_HEAD.apply(raw)
    back = TINY_HEAD.invert(theta)
    assert np.allclose(back, raw, rtol=1e-9, atol=1e-9)


def test_eval_mode_is_pure_and_deterministic():
    model = mlp_init(tiny_spec(), seed=3)
    rng = np.random.default_rng(4)
    y = unit_batch(rng, 4, 6)
    before_mean = model.bn_running_mean.copy()
    a, _ = mlp_forward(model, y, mode="eval")
    b, _ = mlp_forward(model, y, mode="eval")
    assert np.array_equal(a, b)
    assert np.array_equal(model.bn_running_mean, before_mean)


def test_train_mode_updates_running_statistics():
    spec = tiny_spec()
    model = mlp_init(spec, seed=3)
    rng = np.random.default_rng(5)
    y = unit_batch(rng, 8, 6)
    mlp_forward(model, y, mode="train")
    x2 = np.stack([y.real, y.imag], axis=1)
    mean = x2.mean(axis=(0, 1))
    var = x2.var(axis=(0, 1)) * (16 / 15)
    assert np.allclose(model.bn_running_mean, 0.1 * mean, rtol=1e-12)
    assert np.allclose(model.bn_running_var, 0.9 + 0.1 * var, rtol=1e-12)


def test_train_mode_without_buffer_updates():
    model = mlp_init(tiny_spec(), seed=3)
    rng = np.random.default_rng(6)
    y = unit_batch(rng, 4, 6)
    rm = model.bn_running_mean.copy()
    mlp_forward(model, y, mode="train", update_running=False)
    assert np.array_equal(model.bn_running_mean, rm)


def test_duplicating_batch_rows_keeps_outputs():
    model = mlp_init(tiny_spec(), seed=7)
    rng = np.random.default_rng(8)
    y = unit_batch(rng, 5, 6)
    single, _ = mlp_forward(model, y, mode="train", update_running=False)
    doubled, _ = mlp_forward(model, np.vstack([y, y]), mode="train", update_running=False)
    assert np.allclose(single, doubled[:5], rtol=1e-12, atol=1e-12)
    assert np.allclose(single, doubled[5:], rtol=1e-12, atol=1e-12)


def test_single_spectrum_train_mode_works():
    # real/imag channels share per-bin statistics, so even one spectrum
    # yields two values per bin and adaptation on single spectra is defined
    model = mlp_init(tiny_spec(), seed=9)
    rng = np.random.default_rng(10)
    y = unit_batch(rng, 1, 6)
    theta, _ = mlp_forward(model, y, mode="train")
    assert np.all(np.isfinite(theta))


def test_input_validation():
    model = mlp_init(tiny_spec(), seed=9)
    rng = np.random.default_rng(11)
    with pytest.raises(ValidationError):
        mlp_forward(model, np.empty((0, 6), dtype=complex), mode="train")
    with pytest.raises(ValidationError):
        mlp_forward(model, 3.0 * unit_batch(rng, 2, 6), mode="eval")
    with pytest.raises(ValidationError):
        mlp_forward(model, unit_batch(rng, 2, 6), mode="sideways")


def _fd_check(model, ys, make_loss, grads, rel_tol=1e-5):
    # per-coordinate relative agreement, with an absolute floor at the
    # central-difference roundoff level so near-zero coordinates do not
    # amplify oracle noise
    gmax = max(np.abs(g).max() for g in grads)
    atol = 1e-8 * max(1.0, gmax)
    rng = np.random.default_rng(0)
    for g, p in zip(grads, model.parameters()):
        flat = p.ravel()
        idx = rng.choice(flat.size, size=min(12, flat.size), replace=False)
        for j in idx:
            h = 1e-6 * max(1.0, abs(flat[j]))
            orig = flat[j]
            flat[j] = orig + h
            lp = make_loss()
            flat[j] = orig - h
            lm = make_loss()
            flat[j] = orig
            fd = (lp - lm) / (2 * h)
            an = g.ravel()[j]
            assert abs(an - fd) <= rel_tol * max(abs(an), abs(fd)) + atol, (an, fd)


def test_backward_matches_finite_differences():
    model = mlp_init(tiny_spec(), seed=13)
    rng = np.random.default_rng(14)
    ys = unit_batch(rng, 3, 6)
    cvec = rng.standard_normal(TINY_HEAD.width)

    def loss():
        th, _ = mlp_forward(model, ys, mode="train", update_running=False)
        return float(np.sum(th @ cvec))

    th, cache = mlp_forward(model, ys, mode="train", update_running=False)
    grads = mlp_backward(model, cache, np.tile(cvec, (3, 1)))
    _fd_check(model, ys, loss, grads)


def test_backward_with_affine_batchnorm():
    spec = MlpSpec(input_bins=6, widths=(12, 8, TINY_HEAD.width), head=TINY_HEAD,
                   bn_affine=True)
    model = mlp_init(spec, seed=15)
    assert model.bn_weight is not None
    rng = np.random.default_rng(16)
    ys = unit_batch(rng, 3, 6)
    cvec = rng.standard_normal(TINY_HEAD.width)

    def loss():
        th, _ = mlp_forward(model, ys, mode="train", update_running=False)
        return float(np.sum(th @ cvec))

    th, cache = mlp_forward(model, ys, mode="train", update_running=False)
    grads = mlp_backward(model, cache, np.tile(cvec, (3, 1)))
    assert len(grads) == len(model.parameters())
    _fd_check(model, ys, loss, grads)


def test_zero_cotangent_gives_zero_gradient():
    model = mlp_init(tiny_spec(), seed=17)
    rng = np.random.default_rng(18)
    ys = unit_batch(rng, 2, 6)
    _, cache = mlp_forward(model, ys, mode="train", update_running=False)
    grads = mlp_backward(model, cache, np.zeros((2, TINY_HEAD.width)))
    assert all(np.all(g == 0) for g in grads)


def test_adam_zero_gradient_keeps_parameters():
    model = mlp_init(tiny_spec(), seed=19)
    before = [p.copy() for p in model.parameters()]
    adam_step(model, [np.zeros_like(p) for p in model.parameters()])
    assert model.adam.step == 1
    assert all(np.array_equal(a, b) for a, b in zip(before, model.parameters()))


def test_adam_first_step_closed_form():
    model = mlp_init(tiny_spec(), seed=20)
    g = 0.37
    before = [p.copy() for p in model.parameters()]
    adam_step(model, [np.full_like(p, g) for p in model.parameters()])
    expected = -model.adam.lr * g / (g + model.adam.eps)
    for p, b in zip(model.parameters(), before):
        assert np.allclose(p - b, expected, rtol=1e-12)


def test_adam_is_deterministic():
    a = mlp_init(tiny_spec(), seed=21)
    b = mlp_init(tiny_spec(), seed=21)
    grads = [np.full_like(p, 0.1) for p in a.parameters()]
    adam_step(a, grads)
    adam_step(b, grads)
    assert a.state_equal(b)


def test_adam_rejects_non_finite_gradients():
    model = mlp_init(tiny_spec(), seed=22)
    grads = [np.zeros_like(p) for p in model.parameters()]
    grads[0][0, 0] = np.nan
    with pytest.raises(NumericError):
        adam_step(model, grads)


def test_checkpoint_roundtrip(tmp_path):
    model = mlp_init(tiny_spec(), seed=23)
    rng = np.random.default_rng(24)
    ys = unit_batch(rng, 4, 6)
    th, cache = mlp_forward(model, ys, mode="train")
    grads = mlp_backward(model, cache, np.ones_like(th))
    adam_step(model, grads)
    path = tmp_path / "model.npz"
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert loaded.state_equal(model)
    assert loaded.adam.step == model.adam.step
    assert all(np.array_equal(a, b) for a, b in zip(loaded.adam.m, model.adam.m))


def test_checkpoint_spec_mismatch_rejected(tmp_path):
    model = mlp_init(tiny_spec(), seed=25)
    path = tmp_path / "model.npz"
    save_checkpoint(path, model)
    with pytest.raises(ValidationError):
        load_checkpoint(path, expected_spec=tiny_spec(L=7))


def test_clone_is_independent():
    model = mlp_init(tiny_spec(), seed=26)
    dup = model.clone()
    dup.weights[0][0, 0] += 1.0
    assert not model.state_equal(dup)
