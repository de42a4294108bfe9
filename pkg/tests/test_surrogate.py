import numpy as np
import pytest

from surmoo.core import EvaluationRecord, ParameterSpace, RandomStream
from surmoo.surrogate import (
    JointSurrogate,
    OutputNormalizer,
    SurrogateConfig,
    epoch_budget,
    load_checkpoint,
    normalize_inputs,
    save_checkpoint,
    train,
)


def unit_space(n=2):
    return ParameterSpace(tuple(f"x{i}" for i in range(n)), np.zeros(n), np.ones(n))


def records_from(x, y, c=None):
    recs = []
    for i in range(x.shape[0]):
        flags = c[i] if c is not None else np.empty(0, dtype=np.int8)
        recs.append(EvaluationRecord(x[i], np.atleast_1d(y[i]), flags, 0, "init"))
    return recs


def affine_model(space, w_combined, bias, q=None, k=0, mode="o"):
    """A surrogate whose blocks are zeroed so the raw objective head is
    exactly unit_x @ w_combined + bias."""
    q = w_combined.shape[1] if q is None else q
    cfg = SurrogateConfig(mode=mode, blocks=1, block_dim=w_combined.shape[1], batch_size=64)
    model = JointSurrogate(space, q, k, cfg, RandomStream(0, "affine"))
    d = cfg.block_dim
    for i in range(cfg.blocks):
        model.params[f"block{i}.fc2.w"].data = np.zeros_like(
            model.params[f"block{i}.fc2.w"].data
        )
        model.params[f"block{i}.fc2.b"].data = np.zeros_like(
            model.params[f"block{i}.fc2.b"].data
        )
    model.params["proj.w"].data = w_combined.astype(float)
    model.params["proj.b"].data = np.zeros(d)
    if model.has_objective_head:
        model.params["head_obj.w"].data = np.eye(d, model.q)
        model.params["head_obj.b"].data = np.atleast_1d(np.asarray(bias, dtype=float))
    return model


class TestInputNormalization:
    def test_lower_maps_to_zero(self):
        space = ParameterSpace(("a", "b"), [1.0, -2.0], [3.0, 2.0])
        assert np.allclose(normalize_inputs(space.lower, space), [0.0, 0.0])

    def test_upper_maps_to_one(self):
        space = ParameterSpace(("a", "b"), [1.0, -2.0], [3.0, 2.0])
        assert np.allclose(normalize_inputs(space.upper, space), [1.0, 1.0])

    def test_quarter_point(self):
        space = ParameterSpace(("a",), [0.0], [4.0])
        assert normalize_inputs(np.array([1.0]), space)[0] == pytest.approx(0.25)


class TestOutputNormalizer:
    def test_binary_targets_log1p(self):
        norm = OutputNormalizer.fit(np.array([[0.0], [1.0]]))
        targets = norm.transform(np.array([[0.0], [1.0]]))
        assert np.allclose(targets.ravel(), [0.0, np.log1p(1.0)])

    def test_column_minimum_maps_to_zero_before_rescale(self):
        y = np.array([[2.0, 5.0], [4.0, 9.0], [3.0, 7.0]])
        norm = OutputNormalizer.fit(y)
        unit_of_min = (y.min(axis=0) - norm.y_min) / norm.col_span
        assert np.allclose(unit_of_min, 0.0)
        targets = norm.transform(y.min(axis=0)[None, :])
        assert np.allclose(targets, np.log1p(norm.shared_min))

    def test_round_trip_identity_in_range(self, rng):
        for _ in range(25):
            y = rng.uniform(0.0, 50.0, size=(rng.integers(2, 40), rng.integers(1, 5)))
            norm = OutputNormalizer.fit(y)
            back = norm.inverse(norm.transform(y))
            assert np.allclose(back, y, atol=1e-9)

    def test_out_of_range_values_clip_on_round_trip(self):
        norm = OutputNormalizer.fit(np.array([[1.0], [3.0]]))
        back = norm.inverse(norm.transform(np.array([[0.0], [10.0]])))
        assert np.allclose(back.ravel(), [1.0, 3.0])

    def test_degenerate_column(self):
        y = np.array([[5.0, 1.0], [5.0, 2.0]])
        norm = OutputNormalizer.fit(y)
        targets = norm.transform(y)
        back = norm.inverse(targets)
        assert np.allclose(back[:, 0], 5.0)
        assert np.allclose(back[:, 1], [1.0, 2.0])

    def test_tensor_inverse_matches_numpy(self, rng):
        from surmoo.autodiff import Tensor

        y = rng.uniform(0.0, 10.0, size=(8, 3))
        norm = OutputNormalizer.fit(y)
        t = norm.transform(y)
        assert np.allclose(norm.inverse_tensor(Tensor(t)).data, norm.inverse(t))


class TestEpochBudget:
    def test_ten_thousand_samples(self):
        assert epoch_budget(10**4) == (10_000, 1000, 250)

    def test_ten_million_samples(self):
        assert epoch_budget(10**7) == (25, 10, 25)

    def test_thousand_samples(self):
        assert epoch_budget(10**3) == (10_000, 1000, 250)


class TestTraining:
    def test_constant_target_learned_everywhere(self, rng):
        space = unit_space(2)
        x = rng.random((40, 2))
        y = np.full((40, 1), 3.0)
        cfg = SurrogateConfig(mode="o", blocks=1, block_dim=16, batch_size=64)
        model, _ = train(records_from(x, y), space, cfg, RandomStream(5, "t"))
        grid = np.stack(
            np.meshgrid(np.linspace(0, 1, 7), np.linspace(0, 1, 7)), axis=-1
        ).reshape(-1, 2)
        pred, _ = model.predict(grid)
        assert np.allclose(pred, 3.0, atol=1e-2)

    def test_too_few_records_rejected(self, rng):
        space = unit_space(2)
        x = rng.random((4, 2))
        y = rng.random((4, 1))
        cfg = SurrogateConfig(mode="o", folds=3)
        with pytest.raises(ValueError, match="at least 6"):
            train(records_from(x, y), space, cfg, RandomStream(0))

    def test_nan_records_filtered(self, rng):
        space = unit_space(2)
        x = rng.random((20, 2))
        y = np.full((20, 1), 2.0)
        y[::4] = np.nan
        cfg = SurrogateConfig(mode="o", blocks=1, block_dim=8, batch_size=64)
        model, _ = train(records_from(x, y), space, cfg, RandomStream(1))
        pred, _ = model.predict(x[:3])
        assert np.all(np.isfinite(pred))

    def test_deterministic_under_fixed_stream(self, rng):
        space = unit_space(2)
        x = rng.random((18, 2))
        y = (x.sum(axis=1, keepdims=True)) ** 2
        cfg = SurrogateConfig(mode="o", blocks=1, block_dim=8, batch_size=64)
        preds = []
        for _ in range(2):
            model, schedule = train(records_from(x, y), space, cfg, RandomStream(3, "fix"))
            preds.append(model.predict(x[:5])[0])
        assert np.array_equal(preds[0], preds[1])

    def test_joint_mode_trains_both_heads(self, rng):
        space = unit_space(2)
        x = rng.random((30, 2))
        y = x.sum(axis=1, keepdims=True)
        c = (x[:, :1] > 0.3).astype(np.int8)
        c = np.hstack([c, (x[:, 1:] > 0.6).astype(np.int8)])
        cfg = SurrogateConfig(mode="c+o", blocks=1, block_dim=12, batch_size=64)
        model, _ = train(records_from(x, y, c), space, cfg, RandomStream(9))
        y_pred, c_pred = model.predict(x)
        assert y_pred.shape == (30, 1)
        assert c_pred.shape == (30, 2)
        assert np.all((c_pred > 0.0) & (c_pred < 1.0))

    def test_schedule_reports_fold_stops(self, rng):
        space = unit_space(2)
        x = rng.random((12, 2))
        y = x[:, :1]
        cfg = SurrogateConfig(mode="o", blocks=1, block_dim=8, batch_size=64)
        _, schedule = train(records_from(x, y), space, cfg, RandomStream(2))
        assert len(schedule.fold_stop_epochs) == cfg.folds
        assert schedule.e_max == 10_000 and schedule.patience == 250
        expected = int(round(float(np.mean(schedule.fold_stop_epochs))))
        assert schedule.final_epochs == max(1, expected)


class TestPrediction:
    def _trained(self, rng, mode="c+o"):
        space = unit_space(2)
        x = rng.random((24, 2))
        y = x.sum(axis=1, keepdims=True)
        c = (x[:, :1] > 0.5).astype(np.int8)
        cfg = SurrogateConfig(mode=mode, blocks=1, block_dim=8, batch_size=64)
        model, _ = train(records_from(x, y, c), space, cfg, RandomStream(4))
        return model

    def test_no_batch_coupling(self, rng):
        # other rows must not influence a prediction: swap a row's neighbors
        # and its value can change only by BLAS kernel rounding
        model = self._trained(rng)
        pts = rng.random((6, 2))
        perm = rng.permutation(6)
        batch_y, batch_c = model.predict(pts)
        perm_y, perm_c = model.predict(pts[perm])
        assert np.allclose(batch_y[perm], perm_y, rtol=1e-12, atol=1e-14)
        assert np.allclose(batch_c[perm], perm_c, rtol=1e-12, atol=1e-14)

    def test_batch_equals_row_by_row(self, rng):
        # BLAS kernels pick different accumulation orders per batch shape, so
        # agreement is to rounding, not bitwise
        model = self._trained(rng)
        pts = rng.random((6, 2))
        batch_y, batch_c = model.predict(pts)
        for i in range(6):
            row_y, row_c = model.predict(pts[i : i + 1])
            assert np.allclose(batch_y[i], row_y[0], rtol=1e-12, atol=1e-14)
            assert np.allclose(batch_c[i], row_c[0], rtol=1e-12, atol=1e-14)

    def test_probabilities_strictly_inside_unit_interval(self, rng):
        model = self._trained(rng)
        _, c = model.predict(rng.random((50, 2)))
        assert np.all((c > 0.0) & (c < 1.0))

    def test_inference_deterministic(self, rng):
        model = self._trained(rng)
        pts = rng.random((5, 2))
        a = model.predict(pts)
        b = model.predict(pts)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestInputGradient:
    def test_matches_finite_differences(self, rng):
        space = ParameterSpace(("a", "b", "c"), [0.0, -1.0, 2.0], [2.0, 1.0, 5.0])
        cfg = SurrogateConfig(mode="c+o", blocks=2, block_dim=10, batch_size=64)
        model = JointSurrogate(space, 2, 2, cfg, RandomStream(8, "grad"))
        model.out_norm = OutputNormalizer.fit(rng.uniform(0, 5, (10, 2)))
        x = space.lower + rng.random(3) * space.span

        for selector in [("objective", 0), ("objective", 1), ("constraint", 1)]:
            grad = model.input_gradient(x, selector).ravel()
            fd = np.zeros(3)
            for j in range(3):
                h = 1e-4 * space.span[j]
                xp, xm = x.copy(), x.copy()
                xp[j] += h
                xm[j] -= h
                fp = _scalar(model, xp, selector)
                fm = _scalar(model, xm, selector)
                fd[j] = (fp - fm) / (2 * h)
            assert np.allclose(grad, fd, rtol=1e-4, atol=1e-8 * max(1, np.abs(fd).max()))

    def test_constant_model_zero_gradient(self, rng):
        space = unit_space(2)
        model = affine_model(space, np.zeros((2, 3)), [1.5, 0.0, -2.0])
        grad = model.input_gradient(rng.random(2), ("objective", 0))
        assert np.allclose(grad, 0.0)

    def test_affine_model_gradient_includes_normalizer_scale(self):
        space = ParameterSpace(("a", "b"), [0.0, 0.0], [4.0, 10.0])
        w = np.array([[2.0, 0.0], [0.0, -1.0]])
        model = affine_model(space, w, [0.0, 0.0])
        grad = model.input_gradient(np.array([1.0, 5.0]), ("objective", 0)).ravel()
        # y0 = 2 * unit_a -> dy0/da = 2 / span_a, dy0/db = 0
        assert np.allclose(grad, [2.0 / 4.0, 0.0])


def _scalar(model, x, selector):
    y, c = model.predict(x[None, :])
    kind, j = selector
    return float(y[0, j]) if kind == "objective" else float(c[0, j])


class TestArchitecture:
    def test_joint_with_zero_constraints_equals_objective_only(self):
        space = unit_space(3)
        cfg = SurrogateConfig(mode="c+o", blocks=2, block_dim=8)
        joint = JointSurrogate(space, 2, 0, cfg, RandomStream(1, "a"))
        plain = JointSurrogate(
            space, 2, 0, SurrogateConfig(mode="o", blocks=2, block_dim=8),
            RandomStream(1, "a"),
        )
        assert sorted(joint.params) == sorted(plain.params)
        for name in joint.params:
            assert np.array_equal(joint.params[name].data, plain.params[name].data)

    def test_no_active_head_rejected(self):
        with pytest.raises(ValueError, match="no active output head"):
            JointSurrogate(unit_space(2), 0, 0, SurrogateConfig(mode="o"), RandomStream(0))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        space = ParameterSpace(("a", "b"), [0.0, -1.0], [2.0, 1.0])
        x = rng.uniform(space.lower, space.upper, (20, 2))
        y = np.column_stack([x[:, 0] ** 2, np.abs(x[:, 1])])
        c = (x[:, :1] > 1.0).astype(np.int8)
        cfg = SurrogateConfig(mode="c+o", blocks=1, block_dim=8, batch_size=64)
        model, _ = train(records_from(x, y, c), space, cfg, RandomStream(6))
        path = tmp_path / "model.npz"
        save_checkpoint(model, path)
        restored = load_checkpoint(path)
        for name, tensor in model.params.items():
            assert np.array_equal(tensor.data, restored.params[name].data)
        pts = rng.random((7, 2))
        y0, c0 = model.predict(pts)
        y1, c1 = restored.predict(pts)
        assert np.array_equal(y0, y1) and np.array_equal(c0, c1)
