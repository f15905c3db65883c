#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# test/test_delta.py

import gradcheck
import numpy as np
import pytest

from fedpet import accounting, constants, data, delta, layers, model
from fedpet import autodiff as ad
from fedpet.checkpoint import encode
from fedpet.data import SyntheticSpec
from fedpet.delta import DeltaSpec, Payload
from fedpet.exceptions import ConfigError, DimensionError, PayloadError
from fedpet.optim import Adam

SPECS = [
    DeltaSpec.full(),
    DeltaSpec.bitfit(),
    DeltaSpec.adapter(16),
    DeltaSpec.lora(8),
    DeltaSpec.prefix(8),
]


def toy_batch(n=6, seed=0):
    return data.sample_batch(SyntheticSpec(), n, seed)


# Specs
# =============================================================================


def test_labels():
    assert [spec.label for spec in SPECS] == [
        "FullFT",
        "BitFit",
        "Adapter(rf=16)",
        "LoRA(r=8,q+v)",
        "Prefix(len=8)",
    ]
    assert DeltaSpec.lora(4, targets=["q", "k", "v", "o"]).label == "LoRA(r=4,q+k+v+o)"


@pytest.mark.parametrize("spec", SPECS + [DeltaSpec.lora(2, targets=["k", "o"])])
def test_spec_json(spec):
    assert DeltaSpec.from_json(spec.to_json()) == spec


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(method="ia3"),
        dict(method="lora", rank=0),
        dict(method="lora", scaling=0.0),
        dict(method="lora", targets=("z",)),
        dict(method="lora", targets=("q", "q")),
        dict(method="lora", targets=()),
        dict(method="adapter", reduction_factor=0),
        dict(method="prefix", prefix_length=0),
    ],
)
def test_invalid_spec(kwargs):
    with pytest.raises(ConfigError):
        DeltaSpec(**kwargs)


def test_invalid_for_model(toy_store):
    with pytest.raises(ConfigError):
        delta.attach(toy_store, DeltaSpec.lora(rank=32), seed=0)
    with pytest.raises(ConfigError):
        delta.attach(toy_store, DeltaSpec.prefix(17), seed=0)
    delta.attach(toy_store, DeltaSpec.lora(rank=31), seed=0)
    delta.attach(toy_store, DeltaSpec.prefix(16), seed=0)


# Trainable sets
# =============================================================================


def test_fullft_trains_everything(toy_store):
    state = delta.attach(toy_store, DeltaSpec.full(), seed=0)
    assert len(state) == 0
    assert state.trainable_names() == toy_store.names()
    assert toy_store.trainable == frozenset(toy_store.names())


def test_bitfit_trains_biases_and_head(toy_store):
    state = delta.attach(toy_store, DeltaSpec.bitfit(), seed=0)
    names = state.trainable_names()
    assert len(state) == 0
    assert "emb.ln.b" in names
    assert "layer.1.attn.ln.b" in names
    assert "layer.0.ffn.in.b" in names
    assert "head.dense.w" in names
    for name in names:
        assert name.endswith(".b") or model.is_head(name), name
    assert "emb.ln.g" not in names


def test_frozen_head(toy_store):
    spec = DeltaSpec(method="adapter", head_trainable=False)
    state = delta.attach(toy_store, spec, seed=0)
    assert state.backbone_trainable == ()
    assert all(name.startswith("delta.") for name in state.trainable_names())
    assert toy_store.trainable == frozenset()


def test_delta_names(toy_store):
    adapter = delta.attach(toy_store.copy(), DeltaSpec.adapter(16), seed=0)
    assert len(adapter) == 2 * 2 * 4
    assert adapter["delta.layer.1.ffn.adapter.down.w"].shape == (32, 2)
    assert adapter["delta.layer.0.attn.adapter.up.b"].shape == (32,)

    lora = delta.attach(toy_store.copy(), DeltaSpec.lora(8), seed=0)
    assert lora.names() == sorted(
        "delta.layer.{}.attn.{}.lora.{}".format(i, t, f)
        for i in range(2)
        for t in "qv"
        for f in "ab"
    )
    assert lora["delta.layer.0.attn.q.lora.a"].shape == (8, 32)
    assert lora["delta.layer.0.attn.q.lora.b"].shape == (32, 8)

    prefix = delta.attach(toy_store.copy(), DeltaSpec.prefix(8), seed=0)
    assert prefix["delta.layer.1.attn.prefix.v"].shape == (8, 32)
    assert set(prefix.names()).isdisjoint(toy_store.names())


@pytest.mark.parametrize(
    "spec,expected",
    zip(SPECS, [21379, 1763, 1803, 3203, 2179]),
    ids=[spec.label for spec in SPECS],
)
def test_payload_size_matches_closed_form(toy_config, toy_store, spec, expected):
    state = delta.attach(toy_store, spec, seed=0)
    payload = delta.extract_efficient(toy_store, state)
    shape = accounting.ArchShape.from_model_config(toy_config)
    assert payload.scalars() == expected
    assert accounting.trainable_param_count(shape, spec) == expected
    assert payload.layout() == accounting.trainable_layout(shape, spec)
    if spec.method != "fullft":
        assert payload.scalars() / toy_store.num_scalars() < 0.25


def test_attach_is_deterministic(toy_store):
    first = delta.attach(toy_store, DeltaSpec.lora(8), seed=3)
    second = delta.attach(toy_store, DeltaSpec.lora(8), seed=3)
    other = delta.attach(toy_store, DeltaSpec.lora(8), seed=4)
    assert delta.extract_efficient(toy_store, first) == delta.extract_efficient(
        toy_store, second
    )
    assert delta.extract_efficient(toy_store, first) != delta.extract_efficient(
        toy_store, other
    )


# Forward decorations
# =============================================================================


@pytest.mark.parametrize("spec", [DeltaSpec.adapter(16), DeltaSpec.lora(8)])
def test_identity_at_initialization(toy_store, spec):
    batch = toy_batch()
    plain = model.forward(toy_store, batch)
    state = delta.attach(toy_store, spec, seed=0)
    assert np.array_equal(model.forward(toy_store, batch, state).value, plain.value)


def test_prefix_changes_output(toy_store):
    batch = toy_batch()
    plain = model.forward(toy_store, batch)
    state = delta.attach(toy_store, DeltaSpec.prefix(4), seed=0)
    assert not np.array_equal(model.forward(toy_store, batch, state).value, plain.value)


def test_adapter_relu_gate():
    h = ad.Tensor([[1.0, 2.0]])
    out = layers.adapter_forward(
        h,
        ad.Tensor([[1.0], [1.0]]),
        ad.Tensor([[5.0, 5.0]]),
        ad.Tensor([-4.0]),
        ad.Tensor([0.5, -0.5]),
    )
    assert np.array_equal(out.value, [[1.5, 1.5]])


def test_adapter_shape_errors():
    h = ad.Tensor(np.ones((1, 2)))
    with pytest.raises(DimensionError):
        layers.adapter_forward(
            h,
            ad.Tensor(np.ones((3, 1))),
            ad.Tensor(np.ones((1, 2))),
            ad.Tensor(np.ones(1)),
            ad.Tensor(np.ones(2)),
        )


def test_lora_effective_weight():
    w = ad.Tensor(np.zeros((2, 2)))
    a = ad.Tensor([[1.0, 2.0]])
    b = ad.Tensor([[1.0], [0.0]])
    assert np.array_equal(layers.lora_effective_weight(w, a, b, 2.0).value, [[2, 4], [0, 0]])
    with pytest.raises(DimensionError):
        layers.lora_effective_weight(w, b, b, 2.0)
    # A rank-2 update of a 2x2 weight is not low rank.
    full_rank = ad.Tensor(np.eye(2))
    with pytest.raises(DimensionError, match="rank 2"):
        layers.lora_effective_weight(w, full_rank, full_rank, 2.0)


def test_lora_gradients_at_initialization(toy_store):
    state = delta.attach(toy_store, DeltaSpec.lora(8), seed=0)
    _, grads = model.loss_and_grads(toy_store, toy_batch(), state, train=False)
    assert list(grads) == state.trainable_names()
    # B starts at zero, so A receives no gradient on the first step.
    for i in range(2):
        for t in "qv":
            p = "delta.layer.{}.attn.{}.lora.".format(i, t)
            assert not np.any(grads[p + "a"].value)
            assert np.any(grads[p + "b"].value)


def test_prefix_of_length_zero_is_vanilla_attention():
    rng = np.random.default_rng(0)
    q, k, v = [ad.Tensor(rng.normal(size=(2, 2, 3, 2))) for _ in range(3)]
    empty = ad.Tensor(np.zeros((2, 0, 2)))
    plain = layers.prefix_attention(q, k, v)
    assert np.array_equal(layers.prefix_attention(q, k, v, empty, empty).value, plain.value)


def test_dominant_prefix_key():
    rng = np.random.default_rng(0)
    q = ad.Tensor(np.ones((1, 1, 3, 2)))
    k, v = [ad.Tensor(rng.normal(size=(1, 1, 3, 2))) for _ in range(2)]
    prefix_k = ad.Tensor(np.full((1, 1, 2), 1000.0))
    prefix_v = ad.Tensor([[[7.0, -3.0]]])
    out = layers.prefix_attention(q, k, v, prefix_k, prefix_v)
    assert np.allclose(out.value, np.broadcast_to([7.0, -3.0], (1, 1, 3, 2)))


def test_prefix_shape_errors():
    q = ad.Tensor(np.ones((1, 2, 3, 2)))
    with pytest.raises(DimensionError):
        layers.prefix_attention(q, q, q, ad.Tensor(np.ones((1, 2, 2))), ad.Tensor(np.ones((1, 2, 2))))
    with pytest.raises(DimensionError):
        layers.prefix_attention(q, q, q, ad.Tensor(np.ones((2, 2, 2))), None)


@pytest.mark.parametrize("trial", range(10))
def test_prefix_attention_gradient(trial):
    rng = np.random.default_rng(trial)
    key_bias = np.array([[0.0, 0.0, constants.MASK_BIAS], [0.0, 0.0, 0.0]])[:, None, None, :]
    direction = gradcheck.projection((2, 2, 3, 2), trial)
    arrays = dict(
        q=rng.normal(size=(2, 2, 3, 2)),
        k=rng.normal(size=(2, 2, 3, 2)),
        v=rng.normal(size=(2, 2, 3, 2)),
        prefix_k=rng.normal(size=(2, 2, 2)),
        prefix_v=rng.normal(size=(2, 2, 2)),
    )

    def fn(q, k, v, prefix_k, prefix_v):
        out = layers.prefix_attention(q, k, v, prefix_k, prefix_v, key_bias=key_bias)
        return gradcheck.project(out, direction)

    assert gradcheck.max_gradient_error(fn, arrays) < 1e-6


def test_tuned_delta_gradients_match_finite_differences(tiny_store, tiny_batch):
    for spec in [DeltaSpec.adapter(2), DeltaSpec.lora(2), DeltaSpec.prefix(2)]:
        store = tiny_store.copy()
        state = delta.attach(store, spec, seed=1)
        # Move off the identity initialization.
        rng = np.random.default_rng(0)
        for name, value in state.items():
            state.set(name, rng.normal(scale=0.3, size=value.shape))
        store.set("head.out.w", rng.normal(scale=0.3, size=store["head.out.w"].shape))
        _, grads = model.loss_and_grads(store, tiny_batch, state, train=False)

        for name in state.names():

            def loss(x, name=name):
                probe = state.copy()
                probe.set(name, x)
                logits = model.forward(store, tiny_batch, probe)
                return ad.cross_entropy(logits, tiny_batch.labels).item()

            numeric = ad.numerical_gradient(loss, state[name])
            assert ad.relative_error(grads[name].value, numeric) < 1e-4, (spec.label, name)


# Training
# =============================================================================


@pytest.mark.parametrize("spec", SPECS[1:], ids=[spec.label for spec in SPECS[1:]])
def test_frozen_backbone_is_untouched(toy_store, spec):
    store = model.prepare_downstream(toy_store, seed=0)
    before = store.copy()
    state = delta.attach(store, spec, seed=0)
    opt = Adam(lr=1e-2)
    rng = np.random.default_rng(0)
    for step in range(3):
        model.train_step(store, toy_batch(seed=step), opt, state, rng=rng)
    trainable = set(state.trainable_names())
    for name in store.names():
        if name in trainable:
            assert not np.array_equal(store[name], before[name]), name
        else:
            assert store[name] is before[name], name


# Payloads
# =============================================================================


def test_extract_inject_round_trip(toy_store):
    state = delta.attach(toy_store, DeltaSpec.lora(8), seed=0)
    before = toy_store.copy()
    payload = delta.extract_efficient(toy_store, state)
    assert payload.names() == state.trainable_names()

    rng = np.random.default_rng(0)
    changed = Payload((name, rng.normal(size=value.shape)) for name, value in payload)
    delta.inject_efficient(toy_store, state, changed)
    assert delta.extract_efficient(toy_store, state) == changed
    for name in toy_store.names():
        if name not in state.backbone_trainable:
            assert toy_store[name] is before[name]

    delta.inject_efficient(toy_store, state, payload)
    assert delta.extract_efficient(toy_store, state) == payload


def test_inject_errors(toy_store):
    state = delta.attach(toy_store, DeltaSpec.bitfit(), seed=0)
    entries = dict(delta.extract_efficient(toy_store, state))

    missing = dict(entries)
    del missing["head.out.b"]
    with pytest.raises(PayloadError):
        delta.inject_efficient(toy_store, state, Payload(missing.items()))

    extra = dict(entries, **{"emb.word": toy_store["emb.word"]})
    with pytest.raises(PayloadError):
        delta.inject_efficient(toy_store, state, Payload(extra.items()))

    wrong = dict(entries, **{"head.out.b": np.zeros(4)})
    with pytest.raises(PayloadError):
        delta.inject_efficient(toy_store, state, Payload(wrong.items()))

    with pytest.raises(PayloadError):
        Payload([("a", np.zeros(1)), ("a", np.ones(1))])

    with pytest.raises(PayloadError):
        state.set("delta.nope", np.zeros(1))


def test_payload_bytes(toy_store):
    state = delta.attach(toy_store, DeltaSpec.adapter(16), seed=0)
    payload = delta.extract_efficient(toy_store, state)
    data = payload.to_bytes(8)
    assert len(data) == payload.byte_length(8)
    assert Payload.from_bytes(data) == payload
    assert len(payload.to_bytes(4)) == payload.byte_length(4)
    assert payload.byte_length(4) < payload.byte_length(8)

    with pytest.raises(PayloadError):
        Payload.from_bytes(encode(payload, constants.KIND_CHECKPOINT, 8))
