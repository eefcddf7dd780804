import json
import math

import numpy as np
import pytest
import torch

from canforge import trainer
from canforge.checkpoint import load_checkpoint, save_checkpoint, to_bytes, from_bytes, CheckpointError
from canforge.data import STYLE_NAMES, load_manifest, make_batches, write_synthetic_corpus
from canforge.losses import ambiguity_minimum
from canforge.trainer import (
    LossRecord,
    NonFiniteLossError,
    TrainingConfig,
    build_state,
    divergence_monitor,
    stream_generator,
    train,
    train_step_d,
    train_step_g,
)
from oracles import ScalarAdam

SMALL = {"image_size": 16, "base_channels": 8, "latent_dim": 16, "style_hidden": (32, 16)}


def small_config(variant="dcgan", **kw):
    overrides = dict(SMALL)
    if variant == "ccan":
        overrides.update(g_label_embed_dim=8, d_label_embed_dim=3)
    kw.setdefault("batch_size", 16)
    kw.setdefault("epochs", 2)
    return TrainingConfig(variant=variant, model_overrides=overrides, **kw)


def params_of(net):
    return [p.detach().clone() for p in net.parameters()]


def same(a, b):
    return all(torch.equal(x, y) for x, y in zip(a, b))


@pytest.fixture(scope="module")
def balanced_batch(tmp_path_factory):
    root = tmp_path_factory.mktemp("balanced")
    write_synthetic_corpus(root, 24, seed=5, styles=STYLE_NAMES)
    manifest = load_manifest(root)
    return next(make_batches(manifest, 24, seed=0, epoch=0))


def test_config_defaults_and_validation():
    c = TrainingConfig()
    assert (c.epochs, c.batch_size, c.lr, c.beta1, c.beta2) == (120, 128, 1e-4, 0.5, 0.999)
    for bad in ({"lr": 0}, {"beta1": 1.0}, {"beta2": -0.1}, {"epochs": 0}, {"dtype": "float16"}):
        with pytest.raises(ValueError):
            TrainingConfig(**bad)
    assert TrainingConfig.from_dict(c.to_dict()) == c


@pytest.mark.parametrize("variant", ["dcgan", "can", "ccan"])
def test_step_isolation(variant, balanced_batch):
    real, styles = balanced_batch
    state = build_state(TrainingConfig(variant=variant, seed=1))
    noise, labels = stream_generator(1, "noise"), stream_generator(1, "labels")
    g0, d0 = params_of(state.generator), params_of(state.discriminator)
    train_step_d(real[:8], styles[:8], state, noise, labels)
    assert same(params_of(state.generator), g0)
    assert not same(params_of(state.discriminator), d0)
    d1 = params_of(state.discriminator)
    train_step_g(8, state, noise, labels)
    assert same(params_of(state.discriminator), d1)
    assert not same(params_of(state.generator), g0)


def test_ccan_generator_step_updates_label_embedding(balanced_batch):
    state = build_state(TrainingConfig(variant="ccan", seed=2))
    before = state.generator.label_embedding.weight.detach().clone()
    train_step_g(8, state, stream_generator(2, "noise"), stream_generator(2, "labels"))
    assert not torch.equal(before, state.generator.label_embedding.weight)


def test_initial_discriminator_loss_near_chance(balanced_batch):
    # chance level for the can discriminator is 2 ln 2 + ln 24 = 4.564348; average over inits
    real, styles = balanced_batch
    values = []
    for seed in range(6):
        state = build_state(TrainingConfig(variant="can", seed=seed))
        values.append(train_step_d(real, styles, state, stream_generator(seed, "noise")).loss)
    assert np.mean(values) == pytest.approx(4.564348, abs=0.5)


def test_initial_generator_loss_near_chance():
    values = []
    for seed in range(6):
        state = build_state(TrainingConfig(variant="dcgan", seed=seed))
        values.append(train_step_g(24, state, stream_generator(seed, "noise")).loss)
    assert np.mean(values) == pytest.approx(math.log(2), abs=0.3)


@pytest.mark.parametrize("variant", ["can", "ccan"])
def test_can_generator_loss_lower_bound(variant):
    state = build_state(TrainingConfig(variant=variant, seed=0))
    res = train_step_g(16, state, stream_generator(0, "noise"), stream_generator(0, "labels"))
    assert res.loss >= ambiguity_minimum(24) - 1e-6
    assert res.terms["style_ambiguity"] >= ambiguity_minimum(24) - 1e-6


def test_step_determinism(balanced_batch):
    real, styles = balanced_batch
    results = []
    for _ in range(2):
        state = build_state(TrainingConfig(variant="can", seed=4))
        noise, labels = stream_generator(4, "noise"), stream_generator(4, "labels")
        train_step_d(real[:8], styles[:8], state, noise, labels)
        train_step_g(8, state, noise, labels)
        results.append(params_of(state.generator) + params_of(state.discriminator))
    assert same(*results)


def test_non_finite_loss_aborts_step(balanced_batch, monkeypatch):
    real, styles = balanced_batch
    state = build_state(TrainingConfig(variant="dcgan"))
    real = real[:4].clone()
    real[0, 0, 0, 0] = float("nan")
    with pytest.raises(NonFiniteLossError) as info:
        train_step_d(real, styles[:4], state, stream_generator(0, "noise"), step=17)
    assert info.value.step == 17
    assert "bce_real" in info.value.terms


def test_adam_matches_scalar_reference():
    config = TrainingConfig()
    theta = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64, requires_grad=True)
    opt = trainer.make_optimizer([theta], config)
    ref = ScalarAdam([1.0, 2.0, 3.0], 1e-4, 0.5, 0.999)
    for _ in range(3):
        opt.zero_grad()
        (0.5 * (theta ** 2).sum()).backward()
        grads = theta.grad.tolist()
        opt.step()
        expected = ref.step(grads)
        np.testing.assert_allclose(theta.detach().numpy(), expected, rtol=0, atol=1e-15)
    # the first step moves every coordinate by almost exactly lr
    first = ScalarAdam([1.0, 2.0, 3.0], 1e-4, 0.5, 0.999).step([1.0, 2.0, 3.0])
    np.testing.assert_allclose(np.array([1.0, 2.0, 3.0]) - first, 1e-4, rtol=1e-7)


def test_divergence_monitor_rules():
    healthy = [LossRecord(e, 1.2, 2.0) for e in range(1, 21)]
    assert divergence_monitor(healthy).healthy
    collapse = healthy[:5] + [LossRecord(e, 0.01, 2.0) for e in range(6, 11)]
    report = divergence_monitor(collapse)
    assert report.kinds() == {"d_collapse"}
    assert report.flags[0].epoch == 10
    assert divergence_monitor(healthy[:5] + [LossRecord(6, 0.01, 2.0)] * 4).healthy
    nan = healthy[:3] + [LossRecord(4, float("nan"), 2.0)] + healthy[4:6]
    report = divergence_monitor(nan)
    assert report.kinds() == {"non_finite"} and report.flags[0].epoch == 4
    growing = [LossRecord(e, 1.0, 1.0 + e) for e in range(1, 12)]
    report = divergence_monitor(growing)
    assert "g_growth" in report.kinds()
    assert report.g_growth_rate == pytest.approx(1.0)
    with pytest.raises(ValueError):
        divergence_monitor(healthy[:1])


def test_train_smoke_and_outputs(tmp_path, corpus20):
    config = small_config("dcgan", epochs=2, output_dir=str(tmp_path), checkpoint_every=1)
    result = train(config, corpus20)
    assert [r.epoch for r in result.history] == [1, 2]
    assert all(math.isfinite(r.avg_d_loss) and math.isfinite(r.avg_g_loss) for r in result.history)
    lines = (tmp_path / "loss_log.csv").read_text().splitlines()
    assert lines[0] == "epoch,avg_d_loss,avg_g_loss"
    assert len(lines) == 3
    assert all(len(f.split(".")[1]) == 6 for f in lines[1].split(",")[1:])
    for name in ("checkpoint-epoch-0001.ckpt", "checkpoint-epoch-0002.ckpt", "final.ckpt"):
        assert (tmp_path / name).exists()
    ckpt = load_checkpoint(tmp_path / "final.ckpt")
    assert ckpt.epoch == 2 and ckpt.spec == config.model_spec()
    assert ckpt.training_config["variant"] == "dcgan"
    assert [LossRecord(*r) for r in ckpt.loss_history] == result.history


def test_checkpoint_schedule(tmp_path, corpus20):
    config = small_config("dcgan", epochs=5, checkpoint_every=2, output_dir=str(tmp_path))
    train(config, corpus20)
    names = sorted(p.name for p in tmp_path.glob("*.ckpt"))
    assert names == ["checkpoint-epoch-0002.ckpt", "checkpoint-epoch-0004.ckpt",
                     "checkpoint-epoch-0005.ckpt", "final.ckpt"]


def test_checkpoint_round_trip(tmp_path, corpus20):
    result = train(small_config("ccan", epochs=1), corpus20)
    path = tmp_path / "a.ckpt"
    save_checkpoint(result.checkpoint, path)
    loaded = load_checkpoint(path)
    save_checkpoint(loaded, tmp_path / "b.ckpt")
    assert path.read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert path.read_bytes().startswith(b"CANFORGE-CKPT-1\n")
    for key, value in result.checkpoint.generator_state.items():
        assert torch.equal(loaded.generator_state[key], value)
    opt = result.state.opt_d.state_dict()
    for idx, slot in opt["state"].items():
        for name, value in slot.items():
            assert torch.equal(loaded.optimizer_d_state["state"][idx][name], value)
    assert loaded.optimizer_g_state["param_groups"] == result.state.opt_g.state_dict()["param_groups"]
    state = trainer.state_from_checkpoint(loaded)
    for a, b in zip(state.discriminator.parameters(), result.state.discriminator.parameters()):
        assert torch.equal(a, b)


def test_checkpoint_rejects_garbage():
    with pytest.raises(CheckpointError):
        from_bytes(b"NOT-A-CHECKPOINT\n12\n{}")


def test_training_is_deterministic(corpus20):
    config = small_config("can", epochs=2, dtype="float64")
    a, b = train(config, corpus20), train(config, corpus20)
    assert a.history == b.history
    assert to_bytes(a.checkpoint) == to_bytes(b.checkpoint)


def test_resume_matches_uninterrupted(tmp_path, corpus20):
    full = train(small_config("ccan", epochs=10, dtype="float64"), corpus20)
    first = train(small_config("ccan", epochs=5, dtype="float64", output_dir=str(tmp_path)), corpus20)
    assert first.history == full.history[:5]
    resumed = train(small_config("ccan", epochs=10, dtype="float64"), corpus20,
                    resume_from=tmp_path / "final.ckpt")
    assert resumed.history[5:] == full.history[5:]
    assert to_bytes(resumed.checkpoint) == to_bytes(full.checkpoint)


def test_resume_rejects_other_spec(tmp_path, corpus20):
    train(small_config("dcgan", epochs=1, output_dir=str(tmp_path)), corpus20)
    with pytest.raises(trainer.TrainingError):
        train(small_config("can", epochs=2), corpus20, resume_from=tmp_path / "final.ckpt")


def test_abort_keeps_checkpoint_and_writes_report(tmp_path, corpus20, monkeypatch):
    config = small_config("dcgan", epochs=3, checkpoint_every=1, output_dir=str(tmp_path))
    calls = {"n": 0}
    original = trainer.losses.discriminator_loss_terms
    steps_per_epoch = -(-corpus20.num_samples // 16)

    def poisoned(*args, **kwargs):
        calls["n"] += 1
        terms = original(*args, **kwargs)
        if calls["n"] > steps_per_epoch + 2:
            terms["bce_real"] = terms["bce_real"] * float("nan")
        return terms

    monkeypatch.setattr(trainer.losses, "discriminator_loss_terms", poisoned)
    with pytest.raises(NonFiniteLossError):
        train(config, corpus20)
    report = json.loads((tmp_path / "failure.json").read_text())
    assert report["epoch"] == 2 and report["completed_epochs"] == 1
    assert report["step"] == steps_per_epoch + 2
    assert math.isnan(report["terms"]["bce_real"])
    assert load_checkpoint(tmp_path / "checkpoint-epoch-0001.ckpt").epoch == 1
    assert not (tmp_path / "final.ckpt").exists()


def test_isolation_check_in_training_loop(corpus20):
    result = train(small_config("ccan", epochs=1, check_isolation=True), corpus20)
    assert len(result.history) == 1


def test_loss_csv_reader(tmp_path):
    history = [LossRecord(1, 1.5, 2.25), LossRecord(2, 1.25, 2.5)]
    path = tmp_path / "log.csv"
    path.write_text(trainer.format_loss_csv(history))
    assert trainer.read_loss_csv(path) == history
