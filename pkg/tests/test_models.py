import dataclasses

import numpy as np
import pytest
import torch

from alkit.config import RegularizationConfig, default_config
from alkit.datasets import make_toy_linear
from alkit.errors import TrainingDivergedError
from alkit.models import (
    ARCHITECTURE_EMBEDDING_DIMS,
    build_model,
    evaluate_accuracy,
    mc_dropout_predict,
    penultimate_embeddings,
    predict_proba,
    train_task_model,
)
from alkit.models.engine import dropout_for, schedule_factor
from alkit.seeding import make_rng


def small_config(**kw):
    cfg = default_config("synthetic-2000-10")
    opt = dataclasses.replace(cfg.optimizer, epochs=2, batch_size=32)
    return dataclasses.replace(cfg, optimizer=opt, **kw)


@pytest.fixture(scope="module")
def toy():
    ds = make_toy_linear(n=120, image_size=16)
    train = np.arange(0, 80)
    val = np.arange(80, 120)
    return ds, train, val


def quick_train(toy, cfg, torch_seed=1, augment_seed=0, **kw):
    ds, train, val = toy
    return train_task_model(
        ds.images,
        train,
        ds.labels[train],
        val,
        ds.labels[val],
        num_classes=2,
        config=cfg,
        torch_seed=torch_seed,
        augment_rng=make_rng(augment_seed, "augment"),
        **kw,
    )


class TestArchitectures:
    @pytest.mark.parametrize("arch", sorted(ARCHITECTURE_EMBEDDING_DIMS))
    def test_forward_and_feature_shapes(self, arch):
        torch.manual_seed(0)
        model = build_model(arch, num_classes=7, dropout_p=0.5)
        model.eval()
        x = torch.rand(2, 3, 32, 32)
        with torch.no_grad():
            feats = model.features(x)
            logits = model(x)
        assert feats.shape == (2, ARCHITECTURE_EMBEDDING_DIMS[arch])
        assert logits.shape == (2, 7)

    def test_unknown_architecture(self):
        with pytest.raises(ValueError):
            build_model("alexnet", 10)

    def test_dropout_policy(self):
        mc = small_config(strategy_id="maxent")
        assert dropout_for(mc) == 0.5
        assert dropout_for(small_config(strategy_id="random")) == 0.0
        vgg = small_config(strategy_id="random", architecture_id="vgg16bn")
        assert dropout_for(vgg) == 0.5


class TestScheduleFactor:
    def test_constant(self):
        assert schedule_factor("constant", 1) == 1.0
        assert schedule_factor("constant", 999) == 1.0

    def test_base_warmup_then_decay(self):
        assert schedule_factor("imagenet-base", 1) == pytest.approx(0.2)
        assert schedule_factor("imagenet-base", 5) == pytest.approx(1.0)
        assert schedule_factor("imagenet-base", 100) == pytest.approx(1.0)
        assert schedule_factor("imagenet-base", 141) == pytest.approx(0.1)
        assert schedule_factor("imagenet-base", 161) == pytest.approx(0.01)
        assert schedule_factor("imagenet-base", 181) == pytest.approx(0.001)

    def test_al_decay(self):
        assert schedule_factor("imagenet-al", 35) == pytest.approx(1.0)
        assert schedule_factor("imagenet-al", 36) == pytest.approx(0.1)
        assert schedule_factor("imagenet-al", 81) == pytest.approx(0.001)

    def test_unknown(self):
        with pytest.raises(ValueError):
            schedule_factor("cosine", 1)


class TestTraining:
    def test_learns_separable_data(self, toy):
        cfg = small_config()
        model, report = quick_train(toy, cfg)
        assert report.final_val_accuracy >= 0.9
        assert report.epochs_run == 2
        assert len(report.epoch_losses) == 2

    def test_bit_identical_replay(self, toy):
        cfg = small_config()
        m1, r1 = quick_train(toy, cfg, torch_seed=3, augment_seed=5)
        m2, r2 = quick_train(toy, cfg, torch_seed=3, augment_seed=5)
        assert r1 == r2
        for (k, a), b in zip(m1.state_dict().items(), m2.state_dict().values()):
            assert torch.equal(a, b), k

    def test_torch_seed_changes_model(self, toy):
        cfg = small_config()
        m1, _ = quick_train(toy, cfg, torch_seed=1)
        m2, _ = quick_train(toy, cfg, torch_seed=2)
        assert any(
            not torch.equal(a, b)
            for a, b in zip(m1.state_dict().values(), m2.state_dict().values())
        )

    def test_divergence_raises(self, toy):
        cfg = small_config()
        cfg = dataclasses.replace(
            cfg, optimizer=dataclasses.replace(cfg.optimizer, name="sgd", lr=1e18, epochs=4)
        )
        with pytest.raises(TrainingDivergedError):
            quick_train(toy, cfg)

    def test_misaligned_labels_rejected(self, toy):
        ds, train, val = toy
        with pytest.raises(ValueError):
            train_task_model(
                ds.images,
                train,
                ds.labels[train][:-1],
                val,
                ds.labels[val],
                num_classes=2,
                config=small_config(),
                torch_seed=0,
                augment_rng=make_rng(0, "augment"),
            )

    def test_lr_override_used(self, toy):
        # lr=0 must freeze learning: weights equal to a fresh init
        cfg = small_config()
        cfg = dataclasses.replace(cfg, optimizer=dataclasses.replace(cfg.optimizer, epochs=1))
        model, _ = quick_train(toy, cfg, torch_seed=11, lr=1e-30)
        torch.manual_seed(11)
        fresh = build_model(cfg.architecture_id, 2, dropout_for(cfg))
        assert torch.allclose(
            model.head.weight, fresh.head.weight, atol=1e-12
        )

    def test_swa_snapshots_and_final_model(self, toy):
        reg = RegularizationConfig(swa_enabled=True, swa_lr=1e-3, swa_frequency=1, swa_epochs=2)
        cfg = small_config()
        cfg = dataclasses.replace(
            cfg, regularization=reg, optimizer=dataclasses.replace(cfg.optimizer, epochs=4)
        )
        model, report = quick_train(toy, cfg)
        # start epoch 2, freq 1 -> snapshots after epochs 2, 3, 4
        assert report.swa_snapshots == 3
        assert 0.0 <= report.final_val_accuracy <= 1.0

    def test_randaugment_path_runs(self, toy):
        reg = RegularizationConfig(ra_enabled=True, ra_n=1, ra_m=5)
        cfg = dataclasses.replace(small_config(), regularization=reg)
        _, report = quick_train(toy, cfg)
        assert report.epochs_run == 2

    def test_weighted_loss_accepts_weights(self, toy):
        _, report = quick_train(toy, small_config(), class_weight=np.array([0.2, 1.8]))
        assert report.epochs_run == 2


@pytest.fixture(scope="module")
def trained():
    ds = make_toy_linear(n=120, image_size=16)
    train, val = np.arange(0, 80), np.arange(80, 120)
    cfg = small_config(strategy_id="maxent")  # gives the model a live dropout
    model, _ = train_task_model(
        ds.images,
        train,
        ds.labels[train],
        val,
        ds.labels[val],
        num_classes=2,
        config=cfg,
        torch_seed=1,
        augment_rng=make_rng(0, "augment"),
    )
    return ds, model


class TestInference:
    def test_predict_proba_rows_normalized(self, trained):
        ds, model = trained
        idx = np.arange(0, 30)
        t = predict_proba(model, ds.images, idx)
        assert t.values.shape == (1, 30, 2)
        assert np.allclose(t.values.sum(axis=2), 1.0, atol=1e-6)
        assert t.indices.tolist() == idx.tolist()

    def test_mc_dropout_shape_and_determinism(self, trained):
        ds, model = trained
        idx = np.arange(10, 40)
        a = mc_dropout_predict(model, ds.images, idx, passes=4, torch_seed=9)
        b = mc_dropout_predict(model, ds.images, idx, passes=4, torch_seed=9)
        c = mc_dropout_predict(model, ds.images, idx, passes=4, torch_seed=10)
        assert a.values.shape == (4, 30, 2)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
        # passes differ from each other (dropout actually sampling)
        assert not np.allclose(a.values[0], a.values[1])

    def test_mc_dropout_leaves_bn_stats_alone(self, trained):
        ds, model = trained
        before = [
            m.running_mean.clone()
            for m in model.modules()
            if isinstance(m, torch.nn.modules.batchnorm._BatchNorm)
        ]
        mc_dropout_predict(model, ds.images, np.arange(20), passes=3, torch_seed=0)
        after = [
            m.running_mean
            for m in model.modules()
            if isinstance(m, torch.nn.modules.batchnorm._BatchNorm)
        ]
        assert all(torch.equal(x, y) for x, y in zip(before, after))
        assert not model.training

    def test_mc_dropout_rejects_dropout_free_model(self, trained):
        ds, _ = trained
        plain = build_model("smallcnn", 2, dropout_p=0.0)
        with pytest.raises(ValueError):
            mc_dropout_predict(plain, ds.images, np.arange(5), passes=3, torch_seed=0)

    def test_embeddings_shape(self, trained):
        ds, model = trained
        emb = penultimate_embeddings(model, ds.images, np.arange(25))
        assert emb.values.shape == (25, 128)

    def test_evaluate_accuracy_matches_manual(self, trained):
        ds, model = trained
        idx = np.arange(40)
        t = predict_proba(model, ds.images, idx)
        manual = float((t.values[0].argmax(axis=1) == ds.labels[idx]).mean())
        assert evaluate_accuracy(model, ds.images[idx], ds.labels[idx]) == pytest.approx(manual)

    def test_evaluate_empty_rejected(self, trained):
        ds, model = trained
        with pytest.raises(ValueError):
            evaluate_accuracy(model, ds.images[:0], ds.labels[:0])
