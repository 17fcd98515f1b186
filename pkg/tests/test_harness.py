import numpy as np
import pytest

from hilbertdistill.curve import CurveSpec
from hilbertdistill.errors import ConfigError
from hilbertdistill.harness import (
    HarnessConfig,
    _paired_norml1,
    ari,
    bench_curve,
    reduce3d,
    train_student,
    train_teacher,
)
from hilbertdistill.losses import LinearCode, hd_loss, _rescale_picks
from hilbertdistill.synth import make_synthetic
from hilbertdistill.tape import grad_check

FAST = dict(
    n_samples=80, teacher_epochs=2, epochs=2, lr=0.05, teacher_lr=0.2, noise=1.0
)


def test_config_validation_names_offending_key():
    with pytest.raises(ConfigError) as exc:
        HarnessConfig(alpha=-1.0)
    assert exc.value.key == "alpha"
    with pytest.raises(ConfigError) as exc:
        HarnessConfig(theta=1.5)
    assert exc.value.key == "theta"
    with pytest.raises(ConfigError) as exc:
        HarnessConfig.from_dict({"bogus_key": 1})
    assert exc.value.key == "bogus_key"
    with pytest.raises(ConfigError):
        HarnessConfig(loss_kind="mystery")
    with pytest.raises(ConfigError):
        HarnessConfig(channels=64)


def test_reduce3d_modes():
    vol = np.random.default_rng(0).normal(size=(3, 2, 2))
    avg = reduce3d(vol, "avg")
    mx = reduce3d(vol, "max")
    for i in range(2):
        for j in range(2):
            assert avg[i, j] == pytest.approx(vol[:, i, j].mean())
            assert mx[i, j] == pytest.approx(vol[:, i, j].max())
    conv = reduce3d(vol, "conv", np.array([0.2, 0.3, 0.5]))
    assert conv[0, 0] == pytest.approx(np.dot([0.2, 0.3, 0.5], vol[:, 0, 0]))
    with pytest.raises(ValueError):
        reduce3d(vol, "median")


def test_reduce3d_single_slice_and_constant():
    single = np.random.default_rng(1).normal(size=(1, 3, 3))
    assert np.allclose(reduce3d(single, "avg"), single[0])
    assert np.allclose(reduce3d(single, "max"), single[0])
    assert np.allclose(reduce3d(single, "conv", np.array([1.0])), single[0])
    const = np.full((4, 2, 2), 1.75)
    assert np.all(reduce3d(const, "avg") == 1.75)
    assert np.all(reduce3d(const, "max") == 1.75)


def test_paired_norml1_matches_reference_and_gradient():
    rng = np.random.default_rng(2)
    T = rng.normal(size=(4, 32))
    S = rng.normal(size=(4, 8))
    picks = _rescale_picks(32, 8, "left")
    value, gs, gt = _paired_norml1(T, S, picks)
    refs = [hd_loss(LinearCode.dense(T[m]), LinearCode.dense(S[m])) for m in range(4)]
    assert value == pytest.approx(np.mean([r.value for r in refs]))
    for m in range(4):
        assert np.allclose(gs[m] * 4, refs[m].grad_student)
        assert np.allclose(gt[m] * 4, refs[m].grad_teacher)

    def f(inputs):
        v, g_s, g_t = _paired_norml1(inputs[0], inputs[1], picks)
        return v, [g_t, g_s]

    assert grad_check(f, [T.copy(), S.copy()]) <= 1e-4


def test_paired_norml1_skips_degenerate_rows():
    T = np.ones((2, 8))
    S = np.vstack([np.zeros(8), np.ones(8)])
    value, gs, _ = _paired_norml1(T, S, None)
    assert np.all(gs[0] == 0.0)
    assert value == pytest.approx(0.0)  # identical normalized codes on row 1


def test_teacher_trains_and_reports():
    ds = make_synthetic(80, seed=0, noise=1.0)
    cfg = HarnessConfig(seed=0, **FAST)
    model, report = train_teacher(ds, cfg)
    assert report.role == "teacher"
    assert len(report.epoch_losses) == 2
    assert 0.0 <= report.final_accuracy <= 100.0
    assert report.config["seed"] == 0


def test_teacher_zero_epochs_near_chance():
    ds = make_synthetic(80, seed=1, noise=1.0)
    cfg = HarnessConfig(seed=1, **{**FAST, "teacher_epochs": 0})
    _, report = train_teacher(ds, cfg)
    assert report.epoch_losses == []
    assert 0.0 <= report.final_accuracy <= 60.0


def test_same_seed_reports_identical():
    ds = make_synthetic(80, seed=2, noise=1.0)
    cfg = HarnessConfig(seed=2, **FAST)
    _, r1 = train_teacher(ds, cfg)
    _, r2 = train_teacher(ds, cfg)
    assert r1.epoch_losses == r2.epoch_losses
    assert r1.final_accuracy == r2.final_accuracy


def test_student_requires_teacher_for_distillation():
    ds = make_synthetic(80, seed=0, noise=1.0)
    cfg = HarnessConfig(seed=0, loss_kind="hd", **FAST)
    with pytest.raises(ValueError):
        train_student(ds, None, cfg)


def test_alpha_zero_hd_equals_control():
    ds = make_synthetic(80, seed=3, noise=1.0)
    base = HarnessConfig(seed=3, **FAST)
    teacher, _ = train_teacher(ds, base)
    control = train_student(ds, None, base)
    hd_cfg = HarnessConfig(seed=3, loss_kind="hd", alpha=0.0, **FAST)
    hd = train_student(ds, teacher, hd_cfg)
    assert hd.epoch_losses == control.epoch_losses
    assert hd.final_accuracy == control.final_accuracy


def test_teacher_frozen_during_student_training():
    ds = make_synthetic(80, seed=4, noise=1.0)
    cfg = HarnessConfig(seed=4, loss_kind="vhd", **FAST)
    teacher, _ = train_teacher(ds, cfg)
    before = teacher.state_bytes()
    train_student(ds, teacher, cfg)
    assert teacher.state_bytes() == before


@pytest.mark.parametrize("kind", ["avg", "max", "conv"])
def test_reducer_arms_run(kind):
    ds = make_synthetic(80, seed=5, noise=1.0)
    cfg = HarnessConfig(seed=5, loss_kind=kind, **FAST)
    teacher, _ = train_teacher(ds, cfg)
    report = train_student(ds, teacher, cfg)
    assert report.loss_kind == kind
    assert np.isfinite(report.final_accuracy)


@pytest.mark.parametrize("side", ["student", "teacher", "both"])
def test_align_fc_and_random_slice_arm(side):
    ds = make_synthetic(80, seed=6, noise=1.0)
    cfg = HarnessConfig(
        seed=6, loss_kind="hd", align_fc=side, student_slice="random", **FAST
    )
    teacher, _ = train_teacher(ds, cfg)
    report = train_student(ds, teacher, cfg)
    assert np.isfinite(report.final_accuracy)


def test_chain_align_matches_fc_align_backward():
    from hilbertdistill.harness import _DistillPlan
    from hilbertdistill.losses import AlignLayer, LinearCode, fc_align, fc_align_backward

    rng = np.random.default_rng(8)
    layer = AlignLayer(rng.normal(size=(6, 6)), rng.normal(size=6))
    rows = rng.normal(size=(3, 6))
    g_rows = rng.normal(size=(3, 6))
    out = _DistillPlan._apply_align(layer, rows)
    gw_ref = np.zeros_like(layer.weights)
    gb_ref = np.zeros_like(layer.bias)
    g_in_ref = np.zeros_like(rows)
    for m in range(3):
        assert np.allclose(out[m], fc_align(LinearCode.dense(rows[m]), layer).values)
        gc, gwm, gbm = fc_align_backward(LinearCode.dense(rows[m]), layer, g_rows[m])
        g_in_ref[m] = gc
        gw_ref += gwm
        gb_ref += gbm

    class Cfg:
        lr = 0.1

    plan = object.__new__(_DistillPlan)
    plan.config = Cfg()
    w_before = layer.weights.copy()
    b_before = layer.bias.copy()
    g_in = plan._chain_align(layer, rows, g_rows)
    assert np.allclose(g_in, g_in_ref)
    assert np.allclose(layer.weights, w_before - 0.1 * gw_ref)
    assert np.allclose(layer.bias, b_before - 0.1 * gb_ref)


def test_distill_layer_one_tap():
    ds = make_synthetic(80, seed=7, noise=1.0)
    cfg = HarnessConfig(seed=7, loss_kind="hd", distill_layer=1, channels=4, **FAST)
    teacher, _ = train_teacher(ds, cfg)
    report = train_student(ds, teacher, cfg)
    assert np.isfinite(report.final_accuracy)


def test_ari_reference_rows():
    stu = [61.42, 60.22]
    vhd = [63.71, 64.02]
    assert ari(stu, [62.30, 61.45], vhd) == pytest.approx(184.59, abs=0.25)
    assert ari(stu, [62.88, 62.27], vhd) == pytest.approx(71.11, abs=0.25)
    assert ari(stu, vhd, vhd) == pytest.approx(0.0)


def test_ari_division_by_zero():
    with pytest.raises(ZeroDivisionError):
        ari([61.0, 60.0], [61.0, 62.0], [63.0, 64.0])
    with pytest.raises(ValueError):
        ari([61.0], [62.0, 63.0], [64.0, 65.0])


def test_bench_curve_shape_and_monotone_points():
    rows = bench_curve([CurveSpec(2, 1), CurveSpec(2, 3)], reps=5)
    assert [r["side"] for r in rows] == [2, 8]
    assert [r["points"] for r in rows] == [4, 64]
    for r in rows:
        assert r["ms"] >= 0.0
    with pytest.raises(ValueError):
        bench_curve([CurveSpec(2, 1)], reps=2)
