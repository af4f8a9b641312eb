import numpy as np
import pytest

from trisleep.fusion import ModelSpec
from trisleep.numcore import Parameter, Tensor
from trisleep.pretrain import MaskPlan, MaskPlanError, PretrainModel, masked_mse, plan_spans, span_mask
from trisleep.sync import IMU


def test_plan_spans_zero_ratio_masks_nothing():
    idx = plan_spans(50, MaskPlan(mask_ratio=0.0, span_length=5, seed=1))
    assert idx.size == 0


def test_plan_spans_frozen_statistics_n100():
    # N=100, ratio 0.15, span 10: target 15 -> two placed spans, 20 frames;
    # adjacent placements merge into one contiguous run
    for seed in range(40):
        idx = plan_spans(100, MaskPlan(0.15, 10, seed=seed))
        assert idx.size == 20
        assert idx.min() >= 0 and idx.max() < 100
        runs = np.split(idx, np.where(np.diff(idx) != 1)[0] + 1)
        assert len(runs) in (1, 2)
        assert all(len(r) % 10 == 0 for r in runs)
        # spec invariant: achieved fraction within span/N of the ratio
        assert abs(idx.size / 100 - 0.15) <= 10 / 100


def test_plan_spans_deterministic():
    a = plan_spans(64, MaskPlan(0.2, 6, seed=9))
    b = plan_spans(64, MaskPlan(0.2, 6, seed=9))
    np.testing.assert_array_equal(a, b)
    c = plan_spans(64, MaskPlan(0.2, 6, seed=10))
    assert not np.array_equal(a, c)


def test_plan_spans_rejects_short_sequences():
    with pytest.raises(MaskPlanError):
        plan_spans(10, MaskPlan(0.15, 10, seed=0))


def test_plan_spans_in_bounds_property():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(12, 300))
        span = int(rng.integers(1, min(n - 1, 20)))
        ratio = float(rng.uniform(0.05, 0.4))
        idx = plan_spans(n, MaskPlan(ratio, span, seed=int(rng.integers(1000))))
        if idx.size:
            assert idx.min() >= 0 and idx.max() < n
            assert np.all(np.diff(idx) >= 1)
        assert abs(idx.size / n - ratio) <= span / n + 0.5 / n


def test_span_mask_replaces_with_mask_vector():
    rng = np.random.default_rng(1)
    feats = Tensor(rng.normal(size=(40, 4)).astype(np.float32))
    mask_vec = Parameter(np.full(4, 7.0, dtype=np.float32), "mask")
    masked, idx = span_mask(feats, MaskPlan(0.25, 5, seed=2), mask_vec)
    assert idx.size > 0
    np.testing.assert_allclose(masked.data[idx], 7.0, atol=1e-6)
    untouched = np.setdiff1d(np.arange(40), idx)
    np.testing.assert_array_equal(masked.data[untouched], feats.data[untouched])


def test_masked_mse_only_sees_masked_rows():
    rng = np.random.default_rng(3)
    recon = Tensor(rng.normal(size=(20, 4)).astype(np.float32))
    target = rng.normal(size=(20, 4)).astype(np.float32)
    idx = np.array([2, 3, 4, 10])
    base = float(masked_mse(recon, Tensor(target), idx).data)

    tampered = target.copy()
    unmasked = np.setdiff1d(np.arange(20), idx)
    tampered[unmasked] += 100.0
    assert float(masked_mse(recon, Tensor(tampered), idx).data) == pytest.approx(base)


def test_masked_mse_empty_mask_is_zero():
    recon = Tensor(np.ones((5, 3), dtype=np.float32))
    target = Tensor(np.zeros((5, 3), dtype=np.float32))
    assert float(masked_mse(recon, target, np.array([], dtype=np.int64)).data) == 0.0


def test_pretrain_model_parameters_and_loss():
    from trisleep.sync import Segment

    spec = ModelSpec.toy()
    model = PretrainModel(spec, IMU, seed=5)
    names = [p.name for p in model.parameters()]
    assert "imu.pretrain.mask" in names
    assert "imu.pretrain.recon.weight" in names
    assert len(names) == len(set(names))

    rng = np.random.default_rng(6)
    seg = Segment(
        audio=rng.normal(size=(1, 500)).astype(np.float32),
        ecg=rng.normal(size=(1, 500)).astype(np.float32),
        imu=rng.normal(size=(6, 40)).astype(np.float32),
        t_start=0.0,
        t_end=2.0,
        label=0,
    )
    loss = model.loss([seg], MaskPlan(0.25, 5, seed=7))
    assert np.isfinite(loss.data)
    loss.backward()
    assert model.mask_vector.grad is not None and np.any(model.mask_vector.grad != 0)
    assert model.recon_w.grad is not None and np.any(model.recon_w.grad != 0)
