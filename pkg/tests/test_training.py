import json

import numpy as np
import pytest

from motifgcn.data import SyntheticSpec, generate_planted_motif, generate_synthetic
from motifgcn.graph import DirectedGraph
from motifgcn.models import ModelSpec, build_model, prepare_operators
from motifgcn.motifs import ALL_MOTIFS, TRIAD_MOTIFS
from motifgcn.training import (
    TrainConfig,
    TrainingDivergedError,
    attention_mass,
    evaluate,
    load_checkpoint,
    motif_selection,
    save_checkpoint,
    train,
)


def two_block(seed=0):
    return generate_synthetic(
        SyntheticSpec(n=20, blocks=2, p_forward=0.2, p_within=0.1, seed=seed, fractions=(0.3, 0.3, 0.4))
    )


def small_model(ds, family="chebnet", order=2, motifs=("U",), **kw):
    spec = ModelSpec(family, order, list(motifs), (ds.num_features, 16, 16, ds.num_classes), **kw)
    return build_model(spec, prepare_operators(ds.graph, spec.motif_ids))


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.lr, c.weight_decay, c.beta1, c.beta2, c.eps) == (1e-3, 1e-3, 0.9, 0.999, 1e-8)
        assert c.fractions == (0.1, 0.1, 0.1) and c.patience == 50 and c.max_epochs == 1000
        assert ModelSpec("chebnet", 1).keep_prob == 0.5

    def test_round_trip(self):
        c = TrainConfig(lr=0.01, fractions=(0.2, 0.2, 0.2), seed=4)
        assert TrainConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c

    @pytest.mark.parametrize("kw", [dict(fractions=(0.5, 0.4, 0.2)), dict(lr=0.0), dict(patience=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestTrain:
    def test_loss_decreases_initially(self):
        ds = two_block()
        rep = train(small_model(ds), ds.features, ds.labels, ds.masks, TrainConfig(max_epochs=50, patience=50))
        first = [h.train_loss for h in rep.history[:10]]
        assert all(b < a for a, b in zip(first, first[1:]))

    def test_deterministic(self):
        ds = two_block()
        cfg = TrainConfig(max_epochs=30, lr=1e-2)
        a = train(small_model(ds, "motifnet_m", 2, ("U", "Min", "Mout")), ds.features, ds.labels, ds.masks, cfg)
        b = train(small_model(ds, "motifnet_m", 2, ("U", "Min", "Mout")), ds.features, ds.labels, ds.masks, cfg)
        assert a.history == b.history
        assert a.to_dict() == b.to_dict() and a.attention == b.attention

    def test_reports_min_validation_epoch(self):
        ds = two_block(1)
        rep = train(small_model(ds), ds.features, ds.labels, ds.masks, TrainConfig(max_epochs=120, lr=2e-2, patience=15))
        vals = [h.val_loss for h in rep.history]
        best = int(np.argmin(vals))
        assert rep.best_epoch == best + 1
        assert rep.test_accuracy == rep.history[best].test_acc
        assert len(rep.history) <= 120

    def test_best_parameters_restored(self):
        ds = two_block(2)
        m = small_model(ds)
        rep = train(m, ds.features, ds.labels, ds.masks, TrainConfig(max_epochs=80, lr=5e-2, patience=10))
        ev = evaluate(m, ds.features, ds.labels, ds.masks)
        assert ev["test"]["accuracy"] == pytest.approx(rep.test_accuracy)
        assert ev["val"]["loss"] == pytest.approx(rep.val_loss, rel=1e-12)

    def test_shuffled_labels_near_chance(self):
        ds = generate_synthetic(SyntheticSpec(n=400, blocks=4, seed=0, p_within=0.02, signal=2.0))
        y = np.random.default_rng(0).permutation(ds.labels)
        rep = train(small_model(ds), ds.features, y, ds.masks, TrainConfig(max_epochs=100, lr=1e-2, patience=20))
        assert rep.test_accuracy <= 3 * 0.25

    def test_overlapping_masks(self):
        ds = two_block()
        tr, va, te = ds.masks
        with pytest.raises(ValueError):
            train(small_model(ds), ds.features, ds.labels, (tr, tr, te), TrainConfig(max_epochs=2))

    def test_divergence(self):
        ds = two_block()
        with pytest.raises(TrainingDivergedError):
            train(small_model(ds), ds.features, ds.labels, ds.masks, TrainConfig(max_epochs=5, lr=1e300))

    def test_metrics_stream(self, tmp_path):
        ds = two_block()
        path = tmp_path / "h.jsonl"
        rep = train(small_model(ds), ds.features, ds.labels, ds.masks, TrainConfig(max_epochs=7, patience=50), path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert len(lines) == 7 == len(rep.history)
        assert set(lines[0]) == {"epoch", "objective", "train_loss", "train_acc", "val_loss", "val_acc", "test_loss", "test_acc"}

    def test_attention_stays_normalized(self):
        ds = two_block()
        m = small_model(ds, "motifnet_m", 3, ("U", "Min", "Mout"))
        train(m, ds.features, ds.labels, ds.masks, TrainConfig(max_epochs=20, lr=5e-2))
        for a in m.attention().values():
            assert np.all(a >= 0)
            np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        ds = two_block()
        m = small_model(ds, "motifnet_m", 2, ("U", "Min"))
        rep = train(m, ds.features, ds.labels, ds.masks, TrainConfig(max_epochs=10))
        save_checkpoint(tmp_path / "c.json", m, rep)
        ops = prepare_operators(ds.graph, m.spec.motif_ids)
        m2, doc = load_checkpoint(tmp_path / "c.json", ops)
        assert m2.spec == m.spec
        np.testing.assert_array_equal(m2.predict(ds.features), m.predict(ds.features))
        for k, p in m.params.items():
            q = m2.params[k]
            np.testing.assert_array_equal(q.m, p.m)
            np.testing.assert_array_equal(q.v, p.v)
            assert (q.step, q.decay) == (p.step, p.decay)
        assert len(doc["history"]) == len(rep.history) and doc["version"] == 1

    def test_version_checked(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"version": 99}))
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "c.json", {})


class TestMotifSelection:
    def test_mass_is_distribution(self):
        ds = two_block()
        m = small_model(ds, "motifnet_m", 1, ("U", "Min", "Mout"))
        mass = attention_mass(m)
        assert list(mass) == ["U", "Min", "Mout"]
        assert sum(mass.values()) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            attention_mass(small_model(ds))

    def test_planted_motif_ranked_first(self):
        ds = generate_planted_motif(motif="M7", seed=0)
        res = motif_selection(
            ds.graph, ds.features, ds.labels, ds.masks,
            TrainConfig(lr=1e-2, max_epochs=200, patience=200), hidden=(16, 16), seed=0,
        )
        assert res.ranking()[0] == "M7"
        assert "M7" in res.selected
        assert res.threshold == pytest.approx(1 / 16)
        doc = res.to_dict()
        assert doc["ranking"][0] == "M7" and set(doc["masses"]) == {m.value for m in ALL_MOTIFS}

    def test_dense_motifs_flagged(self):
        n = 50
        src, dst = np.nonzero(np.ones((n, n)) - np.eye(n))
        g = DirectedGraph.from_edges(n, src, dst)
        rng = np.random.default_rng(0)
        x = rng.standard_normal((n, 4))
        y = np.arange(n) % 2
        masks = (np.arange(n) < 20, (np.arange(n) >= 20) & (np.arange(n) < 35), np.arange(n) >= 35)
        res = motif_selection(g, x, y, masks, TrainConfig(max_epochs=3), hidden=(4, 4))
        assert res.dense["M13"] and res.densities["M13"] > 0.25
        assert not any(res.dense[m.value] for m in TRIAD_MOTIFS if m.value != "M13")  # no other triad occurs
        assert "M13" not in res.selected

    @pytest.mark.slow
    def test_null_graph_no_dominant_motif(self):
        masses = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            n = 150
            src = rng.integers(0, n, 450)
            dst = (src + rng.integers(1, n, 450)) % n
            g = DirectedGraph.from_edges(n, src, dst)
            x = rng.standard_normal((n, 8))
            y = rng.integers(0, 3, n)
            perm = rng.permutation(n)
            masks = tuple(np.isin(np.arange(n), perm[a:b]) for a, b in ((0, 30), (30, 60), (60, 100)))
            res = motif_selection(g, x, y, masks, TrainConfig(lr=1e-2, max_epochs=100), hidden=(16, 16), seed=seed)
            masses.append([res.masses[m.value] for m in ALL_MOTIFS])
        assert np.max(np.mean(masses, axis=0)) <= 2.0 / 16
