#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# model.py

"""
A small post-layer-norm transformer encoder classifier.

The model's parameters live in a |ParameterStore|, a named collection of
immutable arrays with per-name trainable flags. Parameter names follow a
fixed scheme::

    emb.word  emb.pos  emb.ln.{g,b}
    layer.{i}.attn.{q,k,v,o}.{w,b}  layer.{i}.attn.ln.{g,b}
    layer.{i}.ffn.{in,out}.{w,b}    layer.{i}.ffn.ln.{g,b}
    head.dense.{w,b}  head.out.{w,b}

The classification head (dense, tanh, output projection over the mean-pooled
encoding) mirrors the RoBERTa classification head.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import truncnorm

from . import autodiff as ad
from . import config, constants, exceptions, jsonify, layers, optim, utils, validate
from .log import progress, stage
from .models import fmt

log = logging.getLogger(__name__)

ATTENTION_PROJECTIONS = ("q", "k", "v", "o")


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the encoder classifier."""

    vocab_size: int = 64
    max_positions: int = 32
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 64
    n_labels: int = 3
    dropout: float = 0.1

    @property
    def d_head(self):
        return self.d_model // self.n_heads

    @classmethod
    def attack(cls):
        """The one-layer model used for gradient-inversion experiments."""
        return cls(
            vocab_size=32,
            max_positions=8,
            d_model=8,
            n_layers=1,
            n_heads=2,
            d_ff=16,
            n_labels=3,
            dropout=0.0,
        )

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, dct):
        cfg = jsonify.build_dataclass(cls, dct)
        validate.model_config(cfg)
        return cfg


def layer_prefix(i):
    return "layer.{}.".format(i)


def parameter_shapes(
    vocab_size, max_positions, d_model, n_layers, d_ff, n_labels, type_vocab=0
):
    """Return an ordered ``{name: shape}`` dictionary of encoder parameters.

    ``type_vocab`` adds a token-type embedding (``emb.type``); the simulated
    encoder has none, but RoBERTa-shaped layouts do.
    """
    shapes = {
        "emb.word": (vocab_size, d_model),
        "emb.pos": (max_positions, d_model),
    }
    if type_vocab:
        shapes["emb.type"] = (type_vocab, d_model)
    shapes["emb.ln.g"] = (d_model,)
    shapes["emb.ln.b"] = (d_model,)
    for i in range(n_layers):
        p = layer_prefix(i)
        for proj in ATTENTION_PROJECTIONS:
            shapes[p + "attn.{}.w".format(proj)] = (d_model, d_model)
            shapes[p + "attn.{}.b".format(proj)] = (d_model,)
        shapes[p + "attn.ln.g"] = (d_model,)
        shapes[p + "attn.ln.b"] = (d_model,)
        shapes[p + "ffn.in.w"] = (d_model, d_ff)
        shapes[p + "ffn.in.b"] = (d_ff,)
        shapes[p + "ffn.out.w"] = (d_ff, d_model)
        shapes[p + "ffn.out.b"] = (d_model,)
        shapes[p + "ffn.ln.g"] = (d_model,)
        shapes[p + "ffn.ln.b"] = (d_model,)
    shapes.update(head_shapes(d_model, n_labels))
    return shapes


def head_shapes(d_model, n_labels):
    return {
        "head.dense.w": (d_model, d_model),
        "head.dense.b": (d_model,),
        "head.out.w": (d_model, n_labels),
        "head.out.b": (n_labels,),
    }


def is_head(name):
    return name.startswith("head.")


def is_bias(name):
    """Bias terms: every ``.b`` parameter, including layer-norm shifts."""
    return name.endswith(".b")


class ParameterStore:
    """Named, immutable parameter arrays with per-name trainable flags.

    Iteration is in lexicographic name order. Values are replaced, never
    mutated, so copies share arrays safely.

    Args:
        model_config (ModelConfig): Shape of the model.
        tensors (dict[str, np.ndarray]): Parameter arrays.

    Keyword Args:
        trainable (Iterable[str]): Names flagged trainable.
    """

    def __init__(self, model_config, tensors, trainable=()):
        self.config = model_config
        self._tensors = {name: utils.freeze(value) for name, value in tensors.items()}
        self._trainable = frozenset()
        self.set_trainable(trainable)

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self.names())

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return sorted(self._tensors)

    def items(self):
        return [(name, self._tensors[name]) for name in self.names()]

    @property
    def trainable(self):
        return self._trainable

    def set_trainable(self, names):
        names = frozenset(names)
        unknown = names - set(self._tensors)
        if unknown:
            raise exceptions.PayloadError(
                "Unknown parameter names: {}".format(sorted(unknown))
            )
        self._trainable = names

    def set(self, name, value):
        """Replace the array stored under ``name``."""
        if name not in self._tensors:
            raise exceptions.PayloadError("Unknown parameter name {!r}.".format(name))
        value = np.asarray(value)
        if value.shape != self._tensors[name].shape:
            raise exceptions.PayloadError(
                "Shape mismatch for {}: expected {}, got {}.".format(
                    name, self._tensors[name].shape, value.shape
                )
            )
        self._tensors[name] = utils.freeze(value)

    def copy(self):
        return ParameterStore(self.config, self._tensors, self._trainable)

    def num_scalars(self, names=None):
        names = self.names() if names is None else names
        return int(np.sum([self._tensors[name].size for name in names], dtype=np.int64))

    def equals(self, other):
        """Bitwise equality of names and values."""
        return self.names() == other.names() and all(
            utils.bitwise_equal(self[name], other[name]) for name in self
        )

    def __getstate__(self):
        return {
            "config": self.config,
            "tensors": self._tensors,
            "trainable": self._trainable,
        }

    def __setstate__(self, state):
        # Unpickled arrays are writable again.
        self.config = state["config"]
        self._tensors = {k: utils.freeze(v) for k, v in state["tensors"].items()}
        self._trainable = frozenset(state["trainable"])

    def __repr__(self):
        return fmt.make_repr(self, ["config"])

    def __str__(self):
        return "ParameterStore({} tensors, {} scalars, {} trainable)".format(
            len(self), self.num_scalars(), len(self._trainable)
        )


def _initial_value(name, shape, seed):
    if is_bias(name):
        return np.zeros(shape)
    if name.endswith(".ln.g"):
        return np.ones(shape)
    rng = utils.rng_for(seed, "init", name)
    return truncnorm.rvs(-2, 2, scale=constants.INIT_STD, size=shape, random_state=rng)


def build(model_config, seed):
    """Initialize a |ParameterStore|.

    Weights are truncated-normal with standard deviation 0.02, biases zero
    and layer-norm gains one. Each tensor draws from its own seeded stream.

    Raises:
        ConfigError: If the config is invalid.
    """
    validate.model_config(model_config)
    dtype = utils.float_dtype()
    shapes = parameter_shapes(
        model_config.vocab_size,
        model_config.max_positions,
        model_config.d_model,
        model_config.n_layers,
        model_config.d_ff,
        model_config.n_labels,
    )
    tensors = {
        name: _initial_value(name, shape, seed).astype(dtype)
        for name, shape in shapes.items()
    }
    return ParameterStore(model_config, tensors)


def prepare_downstream(store, seed):
    """Return a copy of ``store`` with a freshly initialized classification
    head and no trainable flags.

    The output projection starts at zero, so the untrained model predicts
    the same class for every input.
    """
    store = store.copy()
    rng = utils.rng_for(seed, "head")
    dtype = utils.float_dtype()
    d = store.config.d_model
    store.set(
        "head.dense.w",
        truncnorm.rvs(-2, 2, scale=constants.INIT_STD, size=(d, d), random_state=rng).astype(
            dtype
        ),
    )
    for name in ("head.dense.b", "head.out.w", "head.out.b"):
        store.set(name, np.zeros(store[name].shape, dtype=dtype))
    store.set_trainable(())
    return store


# Forward pass
# =============================================================================


def trainable_names(store, delta=None):
    """Names of the parameters that receive gradients."""
    if delta is not None:
        return delta.trainable_names()
    return sorted(store.trainable)


def bind(store, delta=None):
    """Wrap the arrays of ``store`` and ``delta`` as tensors, flagging the
    trainable ones.
    """
    trainable = set(trainable_names(store, delta))
    params = {
        name: ad.Tensor.wrap(value, requires_grad=name in trainable, name=name)
        for name, value in store.items()
    }
    if delta is not None:
        params.update(
            {
                name: ad.Tensor.wrap(value, requires_grad=True, name=name)
                for name, value in delta.items()
            }
        )
    return params


def _projection(params, delta, i, proj):
    p = layer_prefix(i) + "attn.{}.".format(proj)
    w = params[p + "w"]
    lora = delta.lora_params(params, i, proj) if delta is not None else None
    if lora is not None:
        a, b, scaling = lora
        w = layers.lora_effective_weight(w, a, b, scaling)
    return w, params[p + "b"]


def _attention_block(params, cfg, i, x, key_bias, delta):
    q, k, v, o = [_projection(params, delta, i, proj) for proj in ATTENTION_PROJECTIONS]
    prefix = delta.prefix_params(params, i) if delta is not None else None
    prefix_k, prefix_v = (
        [layers.prefix_to_heads(t, cfg.n_heads) for t in prefix] if prefix else (None, None)
    )
    heads = layers.prefix_attention(
        layers.split_heads(layers.linear(x, *q), cfg.n_heads),
        layers.split_heads(layers.linear(x, *k), cfg.n_heads),
        layers.split_heads(layers.linear(x, *v), cfg.n_heads),
        prefix_k=prefix_k,
        prefix_v=prefix_v,
        key_bias=key_bias,
    )
    return layers.linear(layers.merge_heads(heads), *o)


def _adapt(h, params, delta, i, site):
    adapter = delta.adapter_params(params, i, site) if delta is not None else None
    if adapter is None:
        return h
    return layers.adapter_forward(h, *adapter)


def _encoder_layer(params, cfg, i, x, key_bias, delta, rate, rng):
    p = layer_prefix(i)

    a = _attention_block(params, cfg, i, x, key_bias, delta)
    a = _adapt(ad.dropout(a, rate, rng), params, delta, i, "attn")
    x = ad.layer_norm(ad.add(x, a), params[p + "attn.ln.g"], params[p + "attn.ln.b"])

    f = layers.linear(x, params[p + "ffn.in.w"], params[p + "ffn.in.b"])
    f = layers.linear(ad.gelu(f), params[p + "ffn.out.w"], params[p + "ffn.out.b"])
    f = _adapt(ad.dropout(f, rate, rng), params, delta, i, "ffn")
    return ad.layer_norm(ad.add(x, f), params[p + "ffn.ln.g"], params[p + "ffn.ln.b"])


def forward(store, batch, delta=None, train=False, rng=None, params=None, inputs_embeds=None):
    """Compute classification logits.

    Args:
        store (ParameterStore): The backbone.
        batch (Batch): Token ids, labels and pad mask.

    Keyword Args:
        delta (DeltaState): Attached tuning-method state, if any.
        train (bool): Apply dropout, drawing masks from ``rng``.
        rng (np.random.Generator): Dropout stream.
        params (dict[str, Tensor]): Pre-bound parameters (see ``bind``);
            bound from ``store`` and ``delta`` when omitted.
        inputs_embeds (Tensor): ``[B, S, d_model]`` word embeddings used in
            place of looking up ``batch.token_ids``.

    Returns:
        Tensor: Logits of shape ``[B, n_labels]``.

    Raises:
        InputError: If a token id is out of range.
    """
    cfg = store.config
    validate.batch(batch, cfg)
    if params is None:
        params = bind(store, delta)
    rate = cfg.dropout if train else 0.0
    n_batch, seq = batch.token_ids.shape

    if inputs_embeds is None:
        x = ad.embedding(params["emb.word"], batch.token_ids)
    else:
        if inputs_embeds.shape != (n_batch, seq, cfg.d_model):
            raise exceptions.DimensionError(
                "inputs_embeds must have shape {}; got {}.".format(
                    (n_batch, seq, cfg.d_model), inputs_embeds.shape
                )
            )
        x = inputs_embeds
    x = ad.add(x, ad.embedding(params["emb.pos"], np.arange(seq)))
    x = ad.layer_norm(x, params["emb.ln.g"], params["emb.ln.b"])
    x = ad.dropout(x, rate, rng)

    key_bias = np.where(batch.pad_mask, constants.MASK_BIAS, 0.0)[:, None, None, :]
    for i in range(cfg.n_layers):
        x = _encoder_layer(params, cfg, i, x, key_bias, delta, rate, rng)

    pooled = layers.mean_pool(x, batch.pad_mask)
    h = ad.tanh(layers.linear(pooled, params["head.dense.w"], params["head.dense.b"]))
    h = ad.dropout(h, rate, rng)
    return layers.linear(h, params["head.out.w"], params["head.out.b"])


# Training and evaluation
# =============================================================================


def loss_and_grads(store, batch, delta=None, train=True, rng=None, inputs_embeds=None):
    """Return the batch loss and its |GradientMap| over the trainable set."""
    params = bind(store, delta)
    names = trainable_names(store, delta)
    with ad.Tape() as tape:
        tape.watch({name: params[name] for name in names})
        logits = forward(
            store,
            batch,
            delta,
            train=train,
            rng=rng,
            params=params,
            inputs_embeds=inputs_embeds,
        )
        loss = ad.cross_entropy(logits, batch.labels)
    return loss.item(), tape.backward(loss)


def get_array(store, delta, name):
    if delta is not None and name in delta:
        return delta[name]
    return store[name]


def assign(store, delta, arrays):
    """Write arrays to their owners; delta names go to ``delta``."""
    for name, value in arrays.items():
        if delta is not None and name in delta:
            delta.set(name, value)
        else:
            store.set(name, value)


def train_step(store, batch, optimizer, delta=None, rng=None):
    """Take one optimizer step on ``batch``; returns the pre-step loss."""
    loss, grads = loss_and_grads(store, batch, delta, train=True, rng=rng)
    current = {name: get_array(store, delta, name) for name in grads}
    assign(store, delta, optimizer.step(current, grads.arrays()))
    return loss


def predict(store, batch, delta=None):
    return np.argmax(forward(store, batch, delta).value, axis=1)


def evaluate(store, split, delta=None, batch_size=256):
    """Eval-mode accuracy of the model on a data split."""
    if len(split) == 0:
        return 0.0
    correct = 0
    for batch in split.batches(batch_size):
        correct += int(np.sum(predict(store, batch, delta) == batch.labels))
    return correct / len(split)


def evaluate_loss(store, split, delta=None, batch_size=256):
    """Eval-mode mean cross-entropy of the model on a data split."""
    total = 0.0
    for batch in split.batches(batch_size):
        logits = forward(store, batch, delta)
        total += ad.cross_entropy(logits, batch.labels).item() * len(batch.labels)
    return total / max(len(split), 1)


# Pretraining
# =============================================================================


def _pretrain(store, pretext, steps, lr, seed, batch_size, dtype):
    # `dtype` keys the joblib cache; the run precision is set by the caller.
    store = store.copy()
    store.set_trainable(store.names())
    opt = optim.Adam(lr=lr)
    rng = utils.rng_for(seed, "pretrain")
    batch_size = min(batch_size, len(pretext))
    order, pos = rng.permutation(len(pretext)), 0
    losses = []
    for _ in progress(range(steps), desc="Pretraining"):
        if pos + batch_size > len(order):
            order, pos = rng.permutation(len(pretext)), 0
        batch = pretext.batch(order[pos : pos + batch_size])
        pos += batch_size
        losses.append(train_step(store, batch, opt, rng=rng))
    log.info(
        "Pretrained backbone for %s steps; final loss %.4f",
        steps,
        float(np.mean(losses[-10:])),
    )
    store.set_trainable(())
    return store


def pretrain_backbone(store, pretext, steps, lr, seed, batch_size=32):
    """Train every parameter of ``store`` on a pretext split.

    The result stands in for a public pretrained checkpoint and is frozen
    during federated tuning. Results are memoized on disk when
    ``config.CACHE_BACKBONES`` is on.

    Args:
        store (ParameterStore): Freshly built parameters.
        pretext (Split): Nonempty pretext training data.
        steps (int): Number of Adam steps.
        lr (float): Adam learning rate.
        seed (int): Seed of the batch-order and dropout streams.

    Returns:
        ParameterStore: The pretrained backbone, with no trainable flags.
    """
    if len(pretext) == 0:
        raise exceptions.ConfigError("The pretext dataset is empty.")
    if steps == 0:
        return store.copy()
    func = _pretrain
    if config.CACHE_BACKBONES:
        func = constants.joblib_memory.cache(_pretrain)
    with stage(log, "pretraining (%s steps, lr=%s, seed=%s)", steps, lr, seed):
        return func(store, pretext, steps, lr, seed, batch_size, config.FLOAT_DTYPE)
