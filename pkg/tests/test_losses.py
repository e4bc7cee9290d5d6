import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microfrac import losses as L

W_TR = L.WeightFunction(kind=L.TRAINING)
W_VAL = L.WeightFunction(kind=L.VALIDATION)


def brute_force_mae(pred, target):
    total = 0.0
    n = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            for c in range(3):
                total += abs(float(pred[i, j, c]) - float(target[i, j, c]))
                n += 1
    return total / n


def brute_force_attention(pred, target, w):
    total = 0.0
    n = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            g = (float(target[i, j, 0]) + float(target[i, j, 1]) + float(target[i, j, 2])) / 3.0
            gauss = math.exp(-((g - w.beta) ** 2) / (2.0 * w.gamma_eff**2))
            wt = w.alpha * gauss + 1.0 if w.kind == L.TRAINING else gauss
            for c in range(3):
                total += wt * abs(float(pred[i, j, c]) - float(target[i, j, c]))
                n += 1
    return total / n


class TestMae:
    def test_identical_images(self):
        img = np.full((4, 4, 3), 90, dtype=np.uint8)
        assert L.mae(img, img) == 0.0

    def test_offset_by_one(self):
        target = np.full((4, 4, 3), 90, dtype=np.uint8)
        assert L.mae(target + 1, target) == 1.0

    def test_matches_double_loop(self):
        rng = np.random.default_rng(0)
        pred = rng.integers(0, 256, size=(4, 4, 3)).astype(np.uint8)
        target = rng.integers(0, 256, size=(4, 4, 3)).astype(np.uint8)
        assert L.mae(pred, target) == pytest.approx(brute_force_mae(pred, target), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            L.mae(np.zeros((2, 2, 3)), np.zeros((3, 3, 3)))


class TestWeights:
    def test_training_peak(self):
        assert L.weight_tr(60.0, W_TR) == 51.0

    def test_training_alpha_zero(self):
        w = L.WeightFunction(kind=L.TRAINING, alpha=0.0)
        gs = np.linspace(0, 255, 64)
        assert np.all(L.weight_tr(gs, w) == 1.0)

    def test_training_one_sigma(self):
        # 50 * exp(-1/2) + 1
        expected = 50.0 * math.exp(-0.5) + 1.0
        got = L.weight_tr(60.0 + W_TR.gamma_eff, W_TR)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(31.33, abs=0.01)

    def test_validation_peak_and_tail(self):
        assert L.weight_val(60.0, W_VAL) == 1.0
        assert L.weight_val(255.0, W_VAL) < 1e-12
        assert L.weight_val(60.0 + W_VAL.gamma_eff, W_VAL) == pytest.approx(
            math.exp(-0.5), abs=1e-12
        )

    def test_training_is_affine_in_validation(self):
        gs = np.linspace(0.0, 255.0, 512)
        assert np.array_equal(L.weight_tr(gs, W_TR), W_TR.alpha * L.weight_val(gs, W_VAL) + 1.0)

    def test_kind_enforced(self):
        with pytest.raises(ValueError):
            L.weight_tr(10.0, W_VAL)
        with pytest.raises(ValueError):
            L.weight_val(10.0, W_TR)

    def test_gamma_raw_flag(self):
        w = L.WeightFunction(kind=L.VALIDATION, gamma=0.1, gamma_raw=True)
        assert w.gamma_eff == 0.1
        # literal gamma = 0.1 collapses the weight support to a sliver
        assert L.weight_val(60.5, w) < 1e-5


class TestAttentionLoss:
    def test_alpha_zero_equals_mae_exactly(self):
        rng = np.random.default_rng(1)
        pred = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
        target = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
        w = L.WeightFunction(kind=L.TRAINING, alpha=0.0)
        assert L.attention_loss(pred, target, w) == L.mae(pred, target)

    def test_zero_iff_equal(self):
        img = np.full((4, 4, 3), 60, dtype=np.uint8)
        assert L.attention_loss(img, img, W_TR) == 0.0
        bumped = img.copy()
        bumped[0, 0, 0] += 1
        assert L.attention_loss(bumped, img, W_TR) > 0.0

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        pred = rng.integers(0, 256, size=(2, 2, 3)).astype(np.uint8)
        target = rng.integers(0, 256, size=(2, 2, 3)).astype(np.uint8)
        for w in (W_TR, W_VAL):
            assert L.attention_loss(pred, target, w) == pytest.approx(
                brute_force_attention(pred, target, w), abs=1e-12
            )

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_training_loss_dominates_mae(self, seed):
        rng = np.random.default_rng(seed)
        pred = rng.integers(0, 256, size=(6, 6, 3)).astype(np.uint8)
        target = rng.integers(0, 256, size=(6, 6, 3)).astype(np.uint8)
        assert L.attention_loss(pred, target, W_TR) >= L.mae(pred, target)


class TestAccuracy:
    def test_spec_examples(self):
        assert L.accuracy(L.InspectionTally(500, 0, 0)) == 100.0
        assert L.accuracy(L.InspectionTally(0, 0, 500)) == 0.0
        assert L.accuracy(L.InspectionTally(400, 50, 50)) == 85.0

    def test_scale_invariance(self):
        a1 = L.accuracy(L.InspectionTally(40, 5, 5))
        a2 = L.accuracy(L.InspectionTally(400, 50, 50))
        assert a1 == a2

    def test_empty_tally(self):
        with pytest.raises(ValueError):
            L.accuracy(L.InspectionTally(0, 0, 0))


class TestEpochSelection:
    def test_unique_minimum(self):
        assert L.select_optimal_epoch([5.0, 3.0, 4.0, 6.0, 7.0], (0, 4)) == 1

    def test_constant_curve_tie_breaks_early(self):
        assert L.select_optimal_epoch([2.0] * 6, (1, 4)) == 1

    def test_two_regime_dip(self):
        # Validation attention loss rises through training (overfitting
        # signal): fast rise, then a slow rise with a dip at epoch 25.
        # The caller restricts to the transition window between regimes.
        epochs = np.arange(120)
        curve = np.where(epochs < 21, 0.02 * epochs, 0.42 + 0.001 * (epochs - 21))
        curve = curve.astype(float)
        curve[25] -= 0.05
        assert L.select_optimal_epoch(curve, (22, 52)) == 25

    def test_window_restriction(self):
        curve = [0.1, 5.0, 4.0, 4.5]
        assert L.select_optimal_epoch(curve, (1, 3)) == 2

    def test_smoothing_option(self):
        curve = [5.0, 5.0, 5.0, 0.0, 5.0, 2.0, 2.0, 2.0]
        # raw minimum is the spike at 3; a width-3 average prefers the plateau
        assert L.select_optimal_epoch(curve) == 3
        assert L.select_optimal_epoch(curve, smooth_window=3) == 6

    def test_bad_window(self):
        with pytest.raises(ValueError):
            L.select_optimal_epoch([1.0, 2.0], (0, 5))
        with pytest.raises(ValueError):
            L.select_optimal_epoch([], None)


class TestCsvInterfaces:
    def test_labels_round_trip(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("sample_id,label\ns0,G\ns1,PG\ns2,B\ns3,g\n")
        tally = L.read_labels_csv(path)
        assert tally == L.InspectionTally(2, 1, 1)

    def test_labels_malformed(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("s0,excellent\n")
        with pytest.raises(ValueError):
            L.read_labels_csv(path)

    def test_labels_empty(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("sample_id,label\n")
        with pytest.raises(ValueError):
            L.read_labels_csv(path)

    def test_loss_curve_round_trip(self, tmp_path):
        path = tmp_path / "loss.csv"
        losses = [0.5, 0.25, 0.125]
        L.write_loss_curve(path, losses)
        assert np.allclose(L.read_loss_curve(path), losses, rtol=0, atol=0)
