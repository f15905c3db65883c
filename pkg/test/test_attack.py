#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# test/test_attack.py

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpet import attack, delta, harness, model, presets
from fedpet import autodiff as ad
from fedpet.attack import AttackConfig
from fedpet.data import Batch
from fedpet.delta import DeltaSpec
from fedpet.exceptions import CaptureError, ConfigError, LeakUnavailableError
from fedpet.optim import OptimizerConfig

SGD = OptimizerConfig.sgd(0.1)


def leak_batch():
    token_ids = np.array([[5, 9, 9, 0]])
    return Batch(token_ids, np.array([1]), token_ids == 0)


def two_example_batch():
    token_ids = np.array([[3, 7, 0, 0], [12, 3, 20, 0]])
    return Batch(token_ids, np.array([0, 2]), token_ids == 0)


def capture(store, spec, batch, optimizer=SGD, mode="gradient", steps=1):
    state = delta.attach(store, spec, seed=0)
    return attack.capture_update(store, state, batch, optimizer, steps=steps, mode=mode)


def truth(target, scale=50.0):
    embeds = target.store[attack.EMBEDDING][target.batch.token_ids]
    n_labels = target.store.config.n_labels
    logits = scale * np.eye(n_labels)[target.batch.labels]
    return embeds, logits


# Capture
# =============================================================================


def test_gradient_capture_recovers_the_gradient(attack_store):
    batch = two_example_batch()
    target = capture(attack_store, DeltaSpec.bitfit(), batch)
    _, grads = model.loss_and_grads(attack_store, batch, target.delta)
    assert target.names() == target.delta.trainable_names()
    for name in target.names():
        assert np.allclose(target.observed[name], grads[name].value, rtol=1e-6, atol=1e-12)
    assert target.batch_size == 2
    assert not target.multi_step


def test_delta_capture(attack_store):
    target = capture(
        attack_store, DeltaSpec.lora(2), two_example_batch(), OptimizerConfig.adam(1e-2), "delta", 3
    )
    assert target.mode == "delta"
    assert target.multi_step
    assert any(np.any(v) for v in target.observed.values())


@pytest.mark.parametrize(
    "optimizer", [OptimizerConfig.adam(1e-2), OptimizerConfig.sgd(0.1, momentum=0.9)]
)
def test_gradient_capture_requires_plain_sgd(attack_store, optimizer):
    with pytest.raises(CaptureError):
        capture(attack_store, DeltaSpec.bitfit(), leak_batch(), optimizer)


def test_multi_step_gradient_capture_falls_back_to_delta(attack_store, caplog):
    with caplog.at_level(logging.WARNING, logger="fedpet.attack"):
        target = capture(attack_store, DeltaSpec.bitfit(), leak_batch(), steps=2)
    assert target.mode == "delta"
    assert "Multi-step" in caplog.text


# Embedding leak
# =============================================================================


@pytest.mark.parametrize("mode", ["gradient", "delta"])
def test_embedding_leak(attack_store, mode):
    target = capture(attack_store, DeltaSpec.full(), leak_batch(), mode=mode)
    assert attack.embedding_grad_leak(target) == {5, 9}
    assert not np.any(target.observed[attack.EMBEDDING][0])
    record = attack.leak_record(target)
    assert record["leaked"] == [5, 9]
    assert record["recall"] == 1.0
    assert record["precision"] == 1.0


@pytest.mark.parametrize("batch_size", [1, 4, 8])
def test_embedding_leak_recovers_every_token(attack_store, batch_size):
    rng = np.random.default_rng(batch_size)
    token_ids = rng.integers(1, 32, size=(batch_size, 6))
    token_ids[:, 4:] = 0
    batch = Batch(token_ids, rng.integers(0, 3, size=batch_size), token_ids == 0)
    target = capture(attack_store, DeltaSpec.full(), batch)
    assert attack.embedding_grad_leak(target) == set(token_ids[:, :4].ravel())


def test_no_leak_without_the_embedding_table(attack_store):
    target = capture(attack_store, DeltaSpec.bitfit(), leak_batch())
    with pytest.raises(LeakUnavailableError):
        attack.embedding_grad_leak(target)
    assert attack.leak_record(target) is None


# Matching
# =============================================================================


@pytest.mark.parametrize(
    "spec", [DeltaSpec.full(), DeltaSpec.bitfit(), DeltaSpec.lora(2)], ids=lambda s: s.label
)
def test_matching_loss_vanishes_at_the_truth(attack_store, spec):
    target = capture(attack_store, spec, two_example_batch())
    assert attack.matching_loss(target, *truth(target)) < 1e-10
    embeds, logits = truth(target)
    noise = np.random.default_rng(0).normal(scale=0.05, size=embeds.shape)
    assert attack.matching_loss(target, embeds + noise, logits) > 1e-8


def test_matched_names_exclude_the_embedding_table(attack_store):
    target = capture(attack_store, DeltaSpec.full(), leak_batch())
    names = attack.matched_names(target)
    assert attack.EMBEDDING not in names
    assert len(names) == len(target.names()) - 1


def test_reconstruction_from_the_truth(attack_store):
    target = capture(attack_store, DeltaSpec.full(), leak_batch())
    cfg = AttackConfig(max_iters=1, restarts=1, attack_lr=1e-3, mode="gradient")
    result = attack.dlg_reconstruct(target, cfg, init=truth(target))
    assert result.recovered == ((5, 9, 9),)
    assert (result.precision, result.recall, result.f1) == (1.0, 1.0, 1.0)
    assert result.final_loss < 1e-10


def test_reconstruction_is_deterministic(attack_store):
    target = capture(attack_store, DeltaSpec.bitfit(), two_example_batch())
    cfg = AttackConfig(max_iters=2, restarts=2, mode="gradient")
    first = attack.dlg_reconstruct(target, cfg)
    assert first == attack.dlg_reconstruct(target, cfg)
    assert [len(row) for row in first.recovered] == [2, 3]
    assert 0.0 <= first.f1 <= 1.0
    assert first.restart in (0, 1)
    assert first.iterations == 2
    assert all(0 not in row for row in first.recovered)


def test_attack_record(attack_store):
    target = capture(attack_store, DeltaSpec.full(), leak_batch())
    result = attack.dlg_reconstruct(target, AttackConfig(max_iters=1, restarts=1), init=truth(target))
    record = attack.attack_record("FullFT", target, result, seed=4)
    assert record["method"] == "FullFT"
    assert record["seed"] == 4
    assert record["target"] == [[5, 9, 9]]
    assert record["embedding_leak"]["leaked"] == [5, 9]
    assert record["f1"] == 1.0


def test_only_non_padding_rows_are_free(attack_store):
    target = capture(attack_store, DeltaSpec.bitfit(), leak_batch())
    variables = attack._variables(target)
    embeds, logits = truth(target)
    theta = variables.pack(embeds, logits)
    assert theta.shape == (3 * 8 + 3,)
    unpacked, unpacked_logits = variables.unpack(theta)
    assert np.array_equal(unpacked[0, :3], embeds[0, :3])
    assert not np.any(unpacked[0, 3])
    assert np.array_equal(unpacked_logits, logits)
    assert attack.matching_loss(target, unpacked, unpacked_logits) < 1e-10


# Finite-difference descent
# =============================================================================


def linear_matching_loss(observed):
    """Matching loss of a linear scorer ``z = W x`` under the loss ``-y . z``,
    whose weight gradient is ``-outer(y, x)``.
    """

    def objective(theta):
        x, y = theta[:4], theta[4:]
        return float(np.sum((-np.outer(y, x) - observed) ** 2))

    def gradient(theta):
        x, y = theta[:4], theta[4:]
        residual = -np.outer(y, x) - observed
        return np.concatenate([-2 * residual.T @ y, -2 * residual @ x])

    return objective, gradient


@pytest.mark.parametrize("seed", range(5))
def test_finite_difference_gradient_matches_the_analytic_one(seed):
    rng = np.random.default_rng(seed)
    observed = -np.outer(rng.normal(size=3), rng.normal(size=4))
    objective, gradient = linear_matching_loss(observed)
    theta = rng.normal(size=7)
    numerical = attack.matching_gradient(objective, theta, AttackConfig())
    assert ad.relative_error(numerical, gradient(theta)) < 1e-3


def test_descent_solves_a_quadratic_matching_loss():
    # With the label scores fixed the loss is |y|^2 |x - x_true|^2.
    y = np.array([1.0, 0.0, 0.0])
    x_true = np.array([0.5, -1.0, 2.0, 0.0])
    objective, _ = linear_matching_loss(-np.outer(y, x_true))

    def quadratic(x):
        return objective(np.concatenate([x, y]))

    cfg = AttackConfig(max_iters=100, attack_lr=0.1)
    loss, x = attack.descend(quadratic, np.zeros(4), cfg)
    assert loss < 1e-12
    assert np.allclose(x, x_true, atol=1e-6)


def test_descent_never_raises_the_loss():
    objective, _ = linear_matching_loss(-np.outer([1.0, 2.0, 0.0], [1.0, 0.0, 0.0, 1.0]))
    theta = np.full(7, 0.3)
    start = objective(theta)
    for max_iters in (1, 3, 10):
        cfg = AttackConfig(max_iters=max_iters, attack_lr=50.0)
        loss, end = attack.descend(objective, theta, cfg)
        assert loss <= start
        assert loss == objective(end)


# Embedding-leak prior
# =============================================================================


def test_leak_candidates(attack_store):
    full = capture(attack_store, DeltaSpec.full(), leak_batch())
    assert attack.leak_candidates(full, AttackConfig()) == [5, 9]
    assert attack.leak_candidates(full, AttackConfig(leak_prior=False)) is None
    bitfit = capture(attack_store, DeltaSpec.bitfit(), leak_batch())
    assert attack.leak_candidates(bitfit, AttackConfig()) is None


def test_leak_prior_starts_on_every_leaked_token(attack_store):
    target = capture(attack_store, DeltaSpec.full(), leak_batch())
    cfg = AttackConfig(max_iters=1, restarts=1, attack_lr=1e-12, mode="gradient")
    result = attack.dlg_reconstruct(target, cfg)
    assert set(result.recovered[0]) == {5, 9}
    assert result.recall >= 2 / 3


def test_leak_prior_decodes_only_leaked_tokens(attack_store):
    batch = two_example_batch()
    target = capture(attack_store, DeltaSpec.full(), batch)
    cfg = AttackConfig(max_iters=2, restarts=2, mode="gradient")
    result = attack.dlg_reconstruct(target, cfg)
    assert {t for row in result.recovered for t in row} <= {3, 7, 12, 20}
    assert [len(row) for row in result.recovered] == [2, 3]


# Scoring
# =============================================================================


def test_decode_embeddings():
    table = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    embeds = np.array([[[0.1, 0.0], [0.0, 0.9], [0.6, 0.5]]])
    pad_mask = np.array([[False, False, True]])
    assert attack.decode_embeddings(table, embeds, pad_mask) == [[1, 2]]
    # The padding row is never predicted, even when nearest.
    assert attack.decode_embeddings(table, np.zeros((1, 1, 2)), np.array([[False]])) == [[1]]


def test_decode_embeddings_among_candidates():
    table = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    embeds = np.array([[[0.9, 0.1], [0.0, 1.0]]])
    pad_mask = np.zeros((1, 2), dtype=bool)
    assert attack.decode_embeddings(table, embeds, pad_mask, candidates=[2, 3]) == [[2, 2]]
    assert attack.decode_embeddings(table, embeds, pad_mask, candidates=[0, 3]) == [[3, 3]]


def test_prf_metrics():
    assert attack.prf_metrics([1, 2, 3], [1, 2, 3]) == (1.0, 1.0, 1.0)
    assert attack.prf_metrics([], [1]) == (0.0, 0.0, 0.0)
    p, r, f1 = attack.prf_metrics([4, 4], [4, 5, 6, 7])
    assert (p, r) == (0.5, 0.25)
    assert f1 == pytest.approx(1 / 3)


@settings(max_examples=100, deadline=None)
@given(
    recovered=st.lists(st.integers(0, 6), max_size=12),
    target=st.lists(st.integers(0, 6), max_size=12),
)
def test_prf_metrics_is_symmetric(recovered, target):
    p, r, f1 = attack.prf_metrics(recovered, target)
    swapped_p, swapped_r, swapped_f1 = attack.prf_metrics(target, recovered)
    assert (swapped_p, swapped_r) == (r, p)
    assert swapped_f1 == pytest.approx(f1)
    assert 0.0 <= f1 <= 1.0


def test_score():
    batch = two_example_batch()
    precision, recall, f1 = attack.score([[3, 7], [1, 1, 1]], batch)
    assert precision == 0.5
    assert recall == 0.5
    assert f1 == 0.5


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(max_iters=0),
        dict(attack_lr=0.0),
        dict(fd_step=-1.0),
        dict(mode="label"),
        dict(leak_prior=1),
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        AttackConfig(**kwargs)


def test_config_json():
    cfg = AttackConfig(max_iters=7, mode="gradient")
    assert AttackConfig.from_json(cfg.to_json()) == cfg


# Privacy experiment
# =============================================================================


@pytest.fixture(scope="module")
def privacy_f1():
    """Mean F1 per (method, batch size) over the privacy preset's seeds."""
    cfg = presets.preset("privacy")
    backbone = harness.prepare_backbone(cfg)
    specs = {spec.method: spec for spec in cfg.methods}
    f1 = {}
    for method in ("fullft", "bitfit"):
        for batch_size in cfg.attack_batch_sizes:
            reports = [
                harness.attack_cell(cfg, specs[method], batch_size, seed, backbone=backbone)
                for seed in cfg.seeds
            ]
            assert all(r["mode"] == "gradient" for r in reports)
            f1[method, batch_size] = np.mean([r["f1"] for r in reports])
    return f1


@pytest.mark.slow
def test_full_updates_leak_more_than_bias_updates(privacy_f1):
    assert privacy_f1["fullft", 1] >= privacy_f1["bitfit", 1] + 0.1


@pytest.mark.slow
@pytest.mark.parametrize("method", ["fullft", "bitfit"])
def test_larger_batches_leak_less(privacy_f1, method):
    assert privacy_f1[method, 4] <= privacy_f1[method, 1]
