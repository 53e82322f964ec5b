import numpy as np
import pytest

from evadv import (EventPointNet, SCENARIO_KINDS, SyntheticScenario,
                   generate_synthetic, load_victim, maxpool_tie_margin,
                   normalize, resample_fixed, save_victim)
from evadv.victim import _init_params


def random_events(n, seed, n_classes=4):
    rng = np.random.default_rng(seed)
    ev = np.column_stack([rng.uniform(0, 1, (n, 3)), rng.choice([-1.0, 1.0], n)])
    return ev, int(rng.integers(0, n_classes))


def toy_model(seed=0, n_classes=4):
    model = EventPointNet(n_classes=n_classes, seed=seed)
    model.weights_ = _init_params(n_classes, 32, 64, 32, np.random.default_rng(seed))
    model.classes_ = np.arange(n_classes)
    model.n_points_ = 32
    model.train_accuracy_ = model.val_accuracy_ = 1.0
    return model


def make_dataset(per_class, n_points=128, seed0=0):
    X, y = [], []
    for label, kind in enumerate(SCENARIO_KINDS):
        sc = SyntheticScenario(kind)
        for i in range(per_class):
            s = generate_synthetic(sc, 192, seed0 + label * 997 + i)
            st = resample_fixed(normalize(s.stream), n_points, i)
            X.append(st.events)
            y.append(label)
    return np.stack(X), np.array(y)


class TestForward:
    def test_permutation_invariance(self):
        model = toy_model()
        ev, _ = random_events(64, 1)
        rng = np.random.default_rng(2)
        base = model.predict_logits(ev)
        for _ in range(5):
            perm = rng.permutation(64)
            assert np.max(np.abs(model.predict_logits(ev[perm]) - base)) <= 1e-12

    def test_zero_params_zero_logits(self):
        model = toy_model()
        model.weights_ = {k: np.zeros_like(v) for k, v in model.weights_.items()}
        ev, _ = random_events(32, 3)
        assert np.all(model.predict_logits(ev) == 0.0)

    def test_output_length(self):
        model = toy_model(n_classes=7)
        model.weights_ = _init_params(7, 32, 64, 32, np.random.default_rng(0))
        ev, _ = random_events(16, 4)
        assert model.predict_logits(ev).shape == (7,)

    def test_nan_input_rejected(self):
        model = toy_model()
        ev, _ = random_events(16, 5)
        ev[3, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            model.predict_logits(ev)

    def test_nan_params_rejected(self):
        model = toy_model()
        model.weights_["w2"] = model.weights_["w2"].copy()
        model.weights_["w2"][0, 0] = np.nan
        ev, _ = random_events(16, 6)
        with pytest.raises(ValueError, match="non-finite"):
            model.predict_logits(ev)

    def test_batched_matches_single(self):
        model = toy_model()
        evs = [random_events(32, 10 + i)[0] for i in range(4)]
        batched = model.predict_logits(np.stack(evs))
        for i, ev in enumerate(evs):
            assert np.allclose(batched[i], model.predict_logits(ev), atol=1e-12)


class TestInputGradient:
    def fd_gradient(self, model, ev, label, loss_kind, kappa, h=1e-5):
        num = np.zeros_like(ev)
        for i in range(ev.shape[0]):
            for d in range(4):
                up, down = ev.copy(), ev.copy()
                up[i, d] += h
                down[i, d] -= h
                lu, _ = model.loss_and_input_gradient(up, label, loss_kind, kappa)
                ld, _ = model.loss_and_input_gradient(down, label, loss_kind, kappa)
                num[i, d] = (lu - ld) / (2 * h)
        return num

    @pytest.mark.parametrize("loss_kind", ["cross_entropy", "margin"])
    def test_matches_finite_differences(self, loss_kind):
        checked = 0
        trial = 0
        while checked < 20:
            trial += 1
            model = toy_model(seed=trial)
            ev, label = random_events(32, 500 + trial)
            if maxpool_tie_margin(model.weights_, ev) < 1e-6:
                continue
            loss, grad = model.loss_and_input_gradient(ev, label, loss_kind, kappa=0.5)
            if loss_kind == "margin" and loss == 0.0:
                continue  # clamped region: gradient is identically zero
            num = self.fd_gradient(model, ev, label, loss_kind, 0.5)
            denom = max(np.max(np.abs(num)), 1e-12)
            assert np.max(np.abs(num - grad)) / denom < 1e-4
            checked += 1

    def test_clamped_margin_zero_gradient(self):
        model = toy_model(seed=3)
        # find an instance where the margin loss is already zero
        for t in range(100):
            ev, _ = random_events(32, 900 + t)
            logits = model.predict_logits(ev)
            label = int(np.argmin(logits))
            loss, grad = model.loss_and_input_gradient(ev, label, "margin", 0.0)
            if loss == 0.0:
                assert np.all(grad == 0.0)
                return
        pytest.fail("no clamped instance found")

    def test_gradient_linearity_in_upstream(self):
        from evadv.losses import margin_logit_grad
        model = toy_model(seed=4)
        ev, label = random_events(32, 7)
        logits, cache = model.forward_cached(ev)
        dz = margin_logit_grad(logits, label, 0.0)
        g1 = model.backward_input(ev, cache, dz)
        g2 = model.backward_input(ev, cache, 2.0 * dz)
        assert np.max(np.abs(g2 - 2.0 * g1)) <= 1e-10

    def test_polarity_column_reported(self):
        model = toy_model(seed=5)
        ev, label = random_events(32, 8)
        _, grad = model.loss_and_input_gradient(ev, label, "cross_entropy")
        assert grad.shape == (32, 4)
        assert np.all(np.isfinite(grad[:, 3]))


class TestTraining:
    def test_deterministic(self):
        X, y = make_dataset(8)
        a = EventPointNet(epochs=3, seed=42).fit(X, y)
        b = EventPointNet(epochs=3, seed=42).fit(X, y)
        for k in a.weights_:
            assert np.array_equal(a.weights_[k], b.weights_[k])

    def test_two_class_separable_one_epoch(self):
        rng = np.random.default_rng(0)
        X0 = rng.uniform(0.0, 0.3, size=(40, 64, 3))
        X1 = rng.uniform(0.7, 1.0, size=(40, 64, 3))
        pol = rng.choice([-1.0, 1.0], size=(80, 64, 1))
        X = np.concatenate([np.concatenate([X0, X1]), pol], axis=2)
        y = np.array([0] * 40 + [1] * 40)
        model = EventPointNet(n_classes=2, epochs=1, seed=0).fit(X, y)
        assert model.train_accuracy_ > 0.5

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            EventPointNet().fit(np.empty((0, 16, 4)), np.empty(0, dtype=int))

    def test_records_accuracies(self):
        X, y = make_dataset(6)
        model = EventPointNet(epochs=2, seed=1).fit(X, y)
        assert 0.0 <= model.train_accuracy_ <= 1.0
        assert 0.0 <= model.val_accuracy_ <= 1.0

    def test_synthetic_validation_accuracy(self):
        # desk-scale sanity: well below the acceptance campaign size
        X, y = make_dataset(30)
        model = EventPointNet(epochs=40, lr=3e-3, seed=0).fit(X, y)
        assert model.val_accuracy_ >= 0.8


class TestSerialization:
    def test_round_trip(self, tmp_path):
        X, y = make_dataset(5)
        model = EventPointNet(epochs=2, seed=9).fit(X, y)
        save_victim(model, tmp_path / "v.bin")
        back = load_victim(tmp_path / "v.bin")
        for k in model.weights_:
            assert np.array_equal(model.weights_[k], back.weights_[k])
        assert back.val_accuracy_ == model.val_accuracy_
        assert back.n_points_ == model.n_points_
        ev, _ = random_events(X.shape[1], 1)
        assert np.array_equal(model.predict_logits(ev), back.predict_logits(ev))

    def test_sidecar_fields(self, tmp_path):
        import json
        X, y = make_dataset(5)
        model = EventPointNet(epochs=1, seed=2).fit(X, y)
        save_victim(model, tmp_path / "v.bin")
        side = json.loads((tmp_path / "v.json").read_text())
        assert set(side) >= {"shapes", "n_classes", "train_accuracy", "val_accuracy", "config"}
