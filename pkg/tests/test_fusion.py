import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fusionkd.models.run_config import DistillSection
from fusionkd.objects.errors import ConfigError
from fusionkd.objects.fusion import (
    AnnealedRatio,
    ClassWiseRatio,
    FixedRatio,
    PolicyKind,
    RatioContext,
    TGeoRatio,
    WlsRatio,
    annealed_ratio,
    build_fusion_net,
    build_policy,
    class_wise_ratio,
    combine,
    combine_rows,
    fixed_ratio,
    fusion_net_gradient,
    fusion_net_input_gradient,
    init_fusion_net,
    teacher_class_accuracy,
    tgeo_ratio,
    tgeo_ratios,
    wls_ratio,
)
from fusionkd.objects.network import grad_check
from fusionkd.objects.tensor_ops import LossValue, ce_loss, kd_loss, one_hot

unit = st.floats(min_value=0.0, max_value=1.0)
finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def _losses(rng, num_classes=3):
    z_s = rng.normal(size=num_classes)
    return kd_loss(z_s, rng.normal(size=num_classes), 4.0), ce_loss(z_s, one_hot(1, num_classes))


def test_combine_endpoints_are_exact(rng):
    for _ in range(20):
        kd, gt = _losses(rng)
        low, high = combine(0.0, kd, gt), combine(1.0, kd, gt)
        assert low.value == gt.value
        assert np.array_equal(low.grad_wrt_student_logits, gt.grad_wrt_student_logits)
        assert high.value == kd.value
        assert np.array_equal(high.grad_wrt_student_logits, kd.grad_wrt_student_logits)


@given(unit, finite, finite)
def test_combine_is_affine_in_alpha(alpha, kd_value, gt_value):
    kd = LossValue(kd_value, np.array([1.0, -1.0]))
    gt = LossValue(gt_value, np.array([-2.0, 2.0]))
    fused = combine(alpha, kd, gt)
    assert fused.value == pytest.approx(gt_value + alpha * (kd_value - gt_value), abs=1e-9)
    assert fused.kd_part == kd_value and fused.gt_part == gt_value


def test_combine_half_example():
    fused = combine(0.5, LossValue(2.0, np.zeros(2)), LossValue(4.0, np.zeros(2)))
    assert fused.value == 3.0


def test_combine_rejects_out_of_range_alpha(rng):
    kd, gt = _losses(rng)
    with pytest.raises(ConfigError):
        combine(1.5, kd, gt)
    with pytest.raises(ConfigError):
        combine_rows(np.array([-0.1]), np.zeros(1), np.zeros((1, 2)), np.zeros(1), np.zeros((1, 2)))


def test_combine_rows_matches_combine(rng):
    alphas = np.array([0.0, 0.3, 1.0])
    kd_values, ce_values = rng.uniform(size=3), rng.uniform(size=3)
    kd_grads, ce_grads = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    values, grads = combine_rows(alphas, kd_values, kd_grads, ce_values, ce_grads)
    for i, alpha in enumerate(alphas):
        single = combine(alpha, LossValue(kd_values[i], kd_grads[i]), LossValue(ce_values[i], ce_grads[i]))
        assert values[i] == single.value
        assert np.array_equal(grads[i], single.grad_wrt_student_logits)


def test_fusion_net_ratio_in_unit_interval(rng):
    omega = build_fusion_net(27, 8, 2, rng)
    alphas = tgeo_ratios(omega, rng.normal(scale=10.0, size=(50, 27)))
    assert alphas.shape == (50,)
    assert np.all((alphas >= 0.0) & (alphas <= 1.0))
    assert 0.0 <= tgeo_ratio(omega, rng.normal(size=27)) <= 1.0


def test_zero_fusion_net_gives_half(rng):
    omega = build_fusion_net(6, 4, 3, rng).zeros_like()
    assert tgeo_ratio(omega, rng.normal(size=6)) == 0.5


def test_zero_head_init_starts_at_half_but_keeps_hidden_weights():
    glorot = init_fusion_net(6, 4, 2, np.random.default_rng(3))
    zero_head = init_fusion_net(6, 4, 2, np.random.default_rng(3), "zero_head")
    assert np.array_equal(zero_head.layers[0].weight, glorot.layers[0].weight)
    assert np.all(tgeo_ratios(zero_head, np.random.default_rng(4).normal(size=(5, 6))) == 0.5)
    assert not init_fusion_net(6, 4, 2, np.random.default_rng(3), "zeros").flat().any()
    with pytest.raises(ConfigError):
        init_fusion_net(6, 4, 2, np.random.default_rng(3), "orthogonal")


def test_fusion_net_shape_checks(rng):
    omega = build_fusion_net(6, 4, 2, rng)
    with pytest.raises(ConfigError):
        tgeo_ratios(omega, np.zeros((2, 5)))
    with pytest.raises(ConfigError):
        build_fusion_net(6, 4, 4, rng)


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_fusion_net_gradient_matches_finite_differences(rng, depth):
    omega = build_fusion_net(5, 4, depth, rng)
    features = rng.normal(size=5)
    upstream = np.array([0.7])

    def head_fn(out):
        return float(upstream @ out), upstream

    assert grad_check(omega, head_fn, features) < 1e-6
    batch = rng.normal(size=(3, 5))
    weights = rng.normal(size=3)
    by_row = sum(fusion_net_gradient(omega, batch[i : i + 1], weights[i : i + 1]).flat() for i in range(3))
    assert fusion_net_gradient(omega, batch, weights).flat() == pytest.approx(by_row)


def test_fusion_net_input_gradient_matches_finite_differences(rng):
    omega = build_fusion_net(4, 6, 2, rng)
    features = rng.normal(size=(1, 4))
    analytic = fusion_net_input_gradient(omega, features, np.array([1.0]))[0]
    numeric = np.array(
        [
            (tgeo_ratios(omega, features + 1e-6 * e)[0] - tgeo_ratios(omega, features - 1e-6 * e)[0]) / 2e-6
            for e in np.eye(4)
        ]
    )
    assert analytic == pytest.approx(numeric, abs=1e-8)


def test_baseline_ratio_functions():
    assert annealed_ratio(0, 10) == 1.0
    assert annealed_ratio(5, 10) == 0.5
    assert annealed_ratio(20, 10) == 0.0
    assert class_wise_ratio([0.9, 0.4], 1) == 0.4
    assert wls_ratio(1.0, 1.0) == 0.5
    assert wls_ratio(3.0, 0.1, gain=2.0) > 0.5
    with pytest.raises(ConfigError):
        annealed_ratio(1, 0)
    with pytest.raises(ConfigError):
        class_wise_ratio([0.9], 3)


@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=500))
def test_annealed_policy_stays_in_range(step, horizon):
    alphas = AnnealedRatio(horizon).ratios(RatioContext(labels=np.zeros(3, dtype=int), step=step))
    assert np.all((alphas >= 0.0) & (alphas <= 1.0))


@given(finite, finite, st.floats(min_value=0.01, max_value=10.0))
def test_wls_ratio_stays_in_range(student_ce, teacher_ce, gain):
    assert 0.0 <= wls_ratio(student_ce, teacher_ce, gain) <= 1.0


def test_fixed_ratio_validates_alpha():
    assert fixed_ratio(0.3).alpha0 == 0.3
    assert fixed_ratio(1).describe() == {"policy": "fixed", "reconstruction": False, "alpha0": 1.0}
    with pytest.raises(ConfigError, match=r"\[0, 1\]"):
        fixed_ratio(1.5)


def test_policies_over_a_batch(rng):
    labels = np.array([0, 1, 1])
    assert FixedRatio(0.2).ratios(RatioContext(labels)).tolist() == [0.2, 0.2, 0.2]
    assert ClassWiseRatio([1.0, 0.25]).ratios(RatioContext(labels)).tolist() == [1.0, 0.25, 0.25]
    wls = WlsRatio().ratios(RatioContext(labels, student_ce=np.array([1.0, 2.0, 0.0]), teacher_ce=np.ones(3)))
    assert wls[0] == 0.5 and wls[1] > 0.5 > wls[2]
    omega = build_fusion_net(2, 3, 2, rng)
    tgeo = TGeoRatio().ratios(RatioContext(labels, features=rng.normal(size=(3, 2))), omega)
    assert tgeo.shape == (3,)
    with pytest.raises(ConfigError):
        TGeoRatio().ratios(RatioContext(labels))
    with pytest.raises(ConfigError):
        WlsRatio().ratios(RatioContext(labels))


def test_teacher_class_accuracy():
    probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
    assert teacher_class_accuracy(probs, [0, 0, 1, 1], 2).tolist() == [0.5, 0.5]
    assert teacher_class_accuracy(probs[:2], [0, 0], 3).tolist() == [0.5, 0.0, 0.0]


@pytest.mark.parametrize(
    "policy, expected",
    [
        ("fixed", FixedRatio),
        ("annealed", AnnealedRatio),
        ("class_wise", ClassWiseRatio),
        ("wls", WlsRatio),
        ("tgeo", TGeoRatio),
    ],
)
def test_build_policy(policy, expected):
    section = DistillSection(policy=policy, alpha0=0.3)
    built = build_policy(
        section,
        total_steps=40,
        teacher_probs=np.array([[0.9, 0.1], [0.2, 0.8]]),
        labels=np.array([0, 1]),
        num_classes=2,
    )
    assert isinstance(built, expected)
    assert built.describe()["policy"] == PolicyKind(policy).value
    assert built.describe()["reconstruction"] == (policy in ("annealed", "class_wise", "wls"))


def test_class_wise_policy_needs_teacher_predictions():
    with pytest.raises(ConfigError):
        build_policy(DistillSection(policy="class_wise"))
