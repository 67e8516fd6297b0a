import numpy as np
import pytest

from deconfound import (
    ManifestMismatchError,
    Panel,
    RidgeForecaster,
    ValidationError,
    WindowSpec,
    augment_panel,
    build_windows,
    channel_matrix,
    evaluate_forecaster,
)
from deconfound.windows import ChannelNormalizer


def make_panel(t=200, k=2, seed=0):
    rng = np.random.default_rng(seed)
    return Panel(x=rng.normal(size=(t, k)), a=rng.normal(size=(t, k)), y=rng.normal(size=t))


class TestWindowCounts:
    def test_count_formula(self):
        ws = build_windows(make_panel(t=200), WindowSpec(seq_len=96, pred_len=12, stride=1), False)
        assert len(ws) == 93

    def test_stride(self):
        ws = build_windows(make_panel(t=200), WindowSpec(seq_len=96, pred_len=12, stride=4), False)
        assert len(ws) == (200 - 96 - 12) // 4 + 1

    def test_last_window_target_ends_at_final_row(self):
        t = 200
        spec = WindowSpec(seq_len=96, pred_len=12, stride=1)
        ws = build_windows(make_panel(t=t), spec, False)
        assert ws.starts[-1] + spec.seq_len + spec.pred_len == t

    def test_too_short_segment_names_requirement(self):
        with pytest.raises(ValidationError, match="val split.*107"):
            build_windows(
                make_panel(t=50), WindowSpec(seq_len=96, pred_len=11), False, segment="val split"
            )


class TestChannelLayout:
    def test_confounder_toggle_changes_channels_only(self):
        panel = augment_panel(make_panel(t=150, k=3), np.random.default_rng(0).normal(size=150))
        spec = WindowSpec(seq_len=24, pred_len=6)
        without = build_windows(panel, spec, False)
        with_ = build_windows(panel, spec, True)
        assert with_.n_channels == without.n_channels + 1
        assert np.array_equal(with_.targets, without.targets)
        assert without.manifest == ("x:1", "x:2", "x:3", "a:1", "a:2", "a:3")
        assert with_.manifest == without.manifest + ("conf:learned:1",)

    def test_oracle_manifest_differs_from_learned(self):
        base = make_panel(t=150, k=1)
        learned = augment_panel(base, np.zeros(150), kind="learned")
        oracle = augment_panel(base, np.zeros(150), kind="oracle")
        spec = WindowSpec(seq_len=10, pred_len=2)
        assert (
            build_windows(learned, spec, True).manifest
            != build_windows(oracle, spec, True).manifest
        )

    def test_with_confounder_requires_channels(self):
        with pytest.raises(ValidationError, match="confounder"):
            build_windows(make_panel(), WindowSpec(seq_len=10, pred_len=2), True)

    def test_flatten_layout_time_major(self):
        panel = make_panel(t=30, k=2)
        matrix, _ = channel_matrix(panel, False)
        ws = build_windows(panel, WindowSpec(seq_len=5, pred_len=2), False)
        first = ws.inputs[0].reshape(5, 4)
        assert np.array_equal(first, matrix[0:5])
        third = ws.inputs[2].reshape(5, 4)
        assert np.array_equal(third, matrix[2:7])

    def test_targets_follow_inputs(self):
        panel = make_panel(t=30)
        ws = build_windows(panel, WindowSpec(seq_len=5, pred_len=3), False)
        assert np.array_equal(ws.targets[0], panel.y[5:8])
        assert np.array_equal(ws.targets[-1], panel.y[ws.starts[-1] + 5 : ws.starts[-1] + 8])


class TestLeakFreedom:
    def test_inputs_strictly_precede_targets(self):
        spec = WindowSpec(seq_len=12, pred_len=4, stride=3)
        ws = build_windows(make_panel(t=80), spec, False)
        for s in ws.starts:
            max_input_index = s + spec.seq_len - 1
            min_target_index = s + spec.seq_len
            assert max_input_index < min_target_index


class TestNormalizer:
    def test_train_statistics_applied(self):
        panel = make_panel(t=100)
        matrix, manifest = channel_matrix(panel, False)
        norm = ChannelNormalizer().fit(matrix[:70], panel.y[:70], manifest)
        out, y_out = norm.transform(matrix, panel.y, manifest)
        assert np.allclose(out[:70].mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(out[:70].std(axis=0), 1.0, atol=1e-12)
        assert y_out[:70].mean() == pytest.approx(0.0, abs=1e-12)

    def test_manifest_mismatch_rejected(self):
        panel = make_panel(t=50)
        matrix, manifest = channel_matrix(panel, False)
        norm = ChannelNormalizer().fit(matrix, panel.y, manifest)
        with pytest.raises(ManifestMismatchError):
            norm.transform(matrix, panel.y, manifest + ("extra",))

    def test_zero_spread_channel_left_unscaled(self):
        panel = augment_panel(make_panel(t=60), np.zeros(60))
        matrix, manifest = channel_matrix(panel, True)
        norm = ChannelNormalizer().fit(matrix, panel.y, manifest)
        out, _ = norm.transform(matrix, panel.y, manifest)
        assert np.array_equal(out[:, -1], np.zeros(60))


class TestInertChannel:
    def test_all_zero_channel_leaves_ridge_mse_unchanged(self):
        rng = np.random.default_rng(3)
        t = 400
        panel = Panel(x=rng.normal(size=(t, 2)), a=rng.normal(size=(t, 2)), y=rng.normal(size=t))
        augmented = augment_panel(panel, np.zeros(t))
        spec = WindowSpec(seq_len=16, pred_len=4)
        results = {}
        for label, with_conf in (("without", False), ("with_zero", True)):
            tr = augmented.slice(0, 300)
            te = augmented.slice(300, t)
            matrix, manifest = channel_matrix(tr, with_conf)
            norm = ChannelNormalizer().fit(matrix, tr.y, manifest)
            ws_tr = build_windows(tr, spec, with_conf, norm)
            ws_te = build_windows(te, spec, with_conf, norm)
            model = RidgeForecaster(ridge_lambda=1.0).fit(ws_tr)
            results[label] = evaluate_forecaster(model, ws_te)["mse"]
        assert abs(results["without"] - results["with_zero"]) < 1e-9
