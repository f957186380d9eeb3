import numpy as np
import pytest

from fusionkd.objects.attention import attention_backward, attention_ratios, build_attention_fusion_net
from fusionkd.objects.bilevel import (
    Batch,
    BilevelState,
    FusionObjective,
    HypergradMode,
    outer_step,
    run_distillation,
    train_gradient,
    validation_loss,
)
from fusionkd.objects.errors import ConfigError
from fusionkd.objects.fusion import TGeoRatio, init_fusion_net
from fusionkd.objects.geometry import RelationMode, build_class_averages, feature_dim
from fusionkd.objects.network import init_params
from fusionkd.objects.tensor_ops import softmax_temp


def _numeric(fn, base, step=1e-6):
    out = np.empty_like(base)
    for i in range(base.size):
        bump = np.zeros_like(base)
        bump[i] = step
        out[i] = (fn(base + bump) - fn(base - bump)) / (2 * step)
    return out


def test_ratios_lie_in_the_unit_interval_and_are_per_sample(rng):
    omega = build_attention_fusion_net(12, 3, 5, rng)
    features = rng.normal(size=(7, 12))
    alphas = attention_ratios(omega, features, 3)
    assert alphas.shape == (7,)
    assert np.all((alphas > 0.0) & (alphas < 1.0))
    order = rng.permutation(7)
    assert attention_ratios(omega, features[order], 3) == pytest.approx(alphas[order], abs=1e-14)
    assert attention_ratios(omega, features[2], 3) == pytest.approx(alphas[2:3], abs=1e-14)


def test_parameter_gradient_matches_finite_differences(rng):
    omega = build_attention_fusion_net(9, 3, 4, rng)
    features = rng.normal(size=(4, 9))
    upstream = rng.normal(size=4)
    grads, _ = attention_backward(omega, features, upstream, 3)

    def objective(vector):
        return float(upstream @ attention_ratios(omega.with_flat(vector), features, 3))

    assert grads.flat() == pytest.approx(_numeric(objective, omega.flat()), rel=1e-5, abs=1e-9)


def test_feature_gradient_matches_finite_differences(rng):
    omega = build_attention_fusion_net(9, 3, 4, rng)
    features = rng.normal(size=(2, 9))
    upstream = np.array([0.7, -1.3])
    _, grad_features = attention_backward(omega, features, upstream, 3)

    def objective(vector):
        return float(upstream @ attention_ratios(omega, vector.reshape(2, 9), 3))

    assert grad_features.ravel() == pytest.approx(_numeric(objective, features.ravel()), rel=1e-5, abs=1e-9)


def test_shape_errors(rng):
    omega = build_attention_fusion_net(12, 3, 4, rng)
    with pytest.raises(ConfigError):
        attention_ratios(omega, rng.normal(size=(2, 11)), 3)
    with pytest.raises(ConfigError):
        attention_ratios(omega, rng.normal(size=(2, 15)), 3)
    with pytest.raises(ConfigError):
        attention_ratios(init_params([7, 4, 1], rng, output_activation="sigmoid"), rng.normal(size=(2, 12)), 3)
    with pytest.raises(ConfigError):
        build_attention_fusion_net(10, 3, 4, rng)
    with pytest.raises(ConfigError):
        TGeoRatio("R3", "attention")


def test_zero_head_attention_starts_at_half(rng):
    omega = init_fusion_net(27, 6, 2, rng, "zero_head", "attention", 3)
    assert len(omega.layers) == 5
    assert np.all(attention_ratios(omega, rng.normal(size=(4, 27)), 3) == 0.5)


@pytest.mark.parametrize("stop_gradient", [False, True])
def test_attention_hypergradient_matches_differentiating_the_lookahead(rng, stop_gradient):
    x = rng.normal(size=(6, 3))
    labels = np.arange(6) % 3
    batch = Batch(x, labels, rng.normal(scale=2.0, size=(6, 3)), np.arange(6))
    val = Batch(rng.normal(size=(6, 3)), labels, ids=np.arange(6))
    theta = init_params([3, 4, 3], rng, hidden_activation="sigmoid")
    table = build_class_averages(softmax_temp(batch.teacher_logits), labels, 3)
    objective = FusionObjective(TGeoRatio("R3", "attention", 3), 2.0, table, RelationMode.R3, stop_gradient)
    omega = init_fusion_net(feature_dim("R3", 3), 4, 1, rng, arch="attention", token_dim=3)
    state = BilevelState(theta, omega, inner_lr=0.5, outer_lr=1.0)
    new_omega = outer_step(state, batch, val, HypergradMode.UNROLLED_FD, objective, fd_radius=1e-4)

    def lookahead_val_loss(vector):
        grads, _ = train_gradient(objective, theta, omega.with_flat(vector), batch)
        loss, _ = validation_loss(theta.zip_map(grads, lambda p, g: p - 0.5 * g), val)
        return loss

    numeric = _numeric(lookahead_val_loss, omega.flat(), step=1e-5)
    assert omega.flat() - new_omega.flat() == pytest.approx(numeric, rel=1e-3, abs=1e-8)


def test_attention_fusion_run(tiny_splits, tiny_teacher, tiny_config):
    result = run_distillation(
        tiny_config(policy="tgeo", fusion_arch="attention", fusion_hidden=4, outer_lr=0.05),
        tiny_splits,
        tiny_teacher,
    )
    assert len(result.fusion_net.layers) == 5
    assert result.fusion_net.input_dim == 3 + 9
    alphas = result.log.alpha_frame()["alpha"]
    assert ((alphas > 0.0) & (alphas < 1.0)).all()
