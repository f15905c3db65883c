#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# delta.py

"""
Parameter-efficient tuning methods as decorations of a frozen backbone.

A |DeltaSpec| names a method and its hyperparameters; ``attach`` turns it
into a |DeltaState| holding the tensors the method adds and the list of
backbone tensors it trains. The trainable set (delta tensors plus trainable
backbone tensors) is what clients exchange with the server as a |Payload|.

Delta tensor names never collide with backbone names::

    delta.layer.{i}.{attn,ffn}.adapter.{down,up}.{w,b}   Adapter
    delta.layer.{i}.attn.{q,k,v,o}.lora.{a,b}           LoRA
    delta.layer.{i}.attn.prefix.{k,v}                   Prefix

Methods are looked up in the ``methods`` registry, so new ones can be added
without touching this module.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import truncnorm

from . import checkpoint, config, constants, jsonify, model, utils, validate
from .exceptions import PayloadError
from .registry import Registry

log = logging.getLogger(__name__)

ADAPTER_SITES = ("attn", "ffn")


@dataclass(frozen=True)
class DeltaSpec:
    """A tuning method and its hyperparameters.

    Only the fields of the chosen ``method`` are used: ``reduction_factor``
    for Adapter, ``rank``, ``scaling`` and ``targets`` for LoRA and
    ``prefix_length`` for Prefix.
    """

    method: str = "fullft"
    reduction_factor: int = 16
    rank: int = 8
    scaling: float = 16.0
    targets: tuple = ("q", "v")
    prefix_length: int = 8
    head_trainable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        validate.delta_spec(self)

    @classmethod
    def full(cls):
        return cls(method="fullft")

    @classmethod
    def adapter(cls, reduction_factor=16):
        return cls(method="adapter", reduction_factor=reduction_factor)

    @classmethod
    def lora(cls, rank=8, scaling=16.0, targets=("q", "v")):
        return cls(method="lora", rank=rank, scaling=scaling, targets=tuple(targets))

    @classmethod
    def bitfit(cls):
        return cls(method="bitfit")

    @classmethod
    def prefix(cls, length=8):
        return cls(method="prefix", prefix_length=length)

    @property
    def label(self):
        """Display name, e.g. ``'LoRA(r=8,q+v)'``."""
        return methods[self.method].label(self)

    def to_json(self):
        dct = asdict(self)
        dct["targets"] = list(self.targets)
        return dct

    @classmethod
    def from_json(cls, dct):
        return jsonify.build_dataclass(cls, dct)


# Method registry
# =============================================================================


class MethodRegistry(Registry):
    """Storage for tuning methods.

    A method is a ``TuningMethod`` subclass. Users can register their own::

        @methods.register('bias-free')
        class BiasFree(TuningMethod):
            ...
    """

    desc = "tuning methods"


methods = MethodRegistry()


def _truncnorm(shape, rng):
    return truncnorm.rvs(-2, 2, scale=constants.INIT_STD, size=shape, random_state=rng)


def layer_delta(i):
    return "delta.layer.{}.".format(i)


class TuningMethod:
    """Base class of tuning methods; by default a method adds no tensors
    and trains only the classification head.
    """

    @staticmethod
    def label(spec):
        return spec.method

    @staticmethod
    def delta_shapes(d_model, n_layers, spec):  # pylint: disable=unused-argument
        """Return ``{name: shape}`` of the tensors the method adds."""
        return {}

    @staticmethod
    def backbone_trainable(names, spec):
        """Return the backbone names the method trains."""
        return [name for name in names if spec.head_trainable and model.is_head(name)]

    @staticmethod
    def initial_value(name, shape, rng):  # pylint: disable=unused-argument
        raise NotImplementedError


@methods.register("fullft")
class FullFineTuning(TuningMethod):
    """Every backbone tensor is trained and exchanged."""

    @staticmethod
    def label(spec):
        return "FullFT"

    @staticmethod
    def backbone_trainable(names, spec):
        return list(names)


@methods.register("bitfit")
class BitFit(TuningMethod):
    """Only bias terms (including layer-norm shifts) and the head."""

    @staticmethod
    def label(spec):
        return "BitFit"

    @staticmethod
    def backbone_trainable(names, spec):
        return [
            name
            for name in names
            if (model.is_bias(name) and not model.is_head(name))
            or (spec.head_trainable and model.is_head(name))
        ]


@methods.register("adapter")
class Adapter(TuningMethod):
    """Bottleneck adapters after the attention and feed-forward sublayers."""

    @staticmethod
    def label(spec):
        return "Adapter(rf={})".format(spec.reduction_factor)

    @staticmethod
    def bottleneck(d_model, spec):
        return max(1, d_model // spec.reduction_factor)

    @staticmethod
    def delta_shapes(d_model, n_layers, spec):
        m = Adapter.bottleneck(d_model, spec)
        shapes = {}
        for i in range(n_layers):
            for site in ADAPTER_SITES:
                p = layer_delta(i) + "{}.adapter.".format(site)
                shapes[p + "down.w"] = (d_model, m)
                shapes[p + "down.b"] = (m,)
                shapes[p + "up.w"] = (m, d_model)
                shapes[p + "up.b"] = (d_model,)
        return shapes

    @staticmethod
    def initial_value(name, shape, rng):
        # The up-projection starts at zero, so the adapter is the identity.
        if name.endswith("down.w"):
            return _truncnorm(shape, rng)
        return np.zeros(shape)


@methods.register("lora")
class LoRA(TuningMethod):
    """Low-rank updates ``(scaling / r) B A`` of attention projections."""

    @staticmethod
    def label(spec):
        return "LoRA(r={},{})".format(spec.rank, "+".join(spec.targets))

    @staticmethod
    def delta_shapes(d_model, n_layers, spec):
        shapes = {}
        for i in range(n_layers):
            for target in spec.targets:
                p = layer_delta(i) + "attn.{}.lora.".format(target)
                shapes[p + "a"] = (spec.rank, d_model)
                shapes[p + "b"] = (d_model, spec.rank)
        return shapes

    @staticmethod
    def initial_value(name, shape, rng):
        if name.endswith(".a"):
            return rng.normal(0.0, 1.0 / np.sqrt(shape[1]), size=shape)
        return np.zeros(shape)


@methods.register("prefix")
class Prefix(TuningMethod):
    """Trainable key and value vectors prepended in every layer."""

    @staticmethod
    def label(spec):
        return "Prefix(len={})".format(spec.prefix_length)

    @staticmethod
    def delta_shapes(d_model, n_layers, spec):
        shapes = {}
        for i in range(n_layers):
            p = layer_delta(i) + "attn.prefix."
            shapes[p + "k"] = (spec.prefix_length, d_model)
            shapes[p + "v"] = (spec.prefix_length, d_model)
        return shapes

    @staticmethod
    def initial_value(name, shape, rng):
        return _truncnorm(shape, rng)


def delta_shapes(d_model, n_layers, spec):
    """Shapes of the tensors ``spec`` adds to a backbone."""
    return methods[spec.method].delta_shapes(d_model, n_layers, spec)


def backbone_trainable(names, spec):
    """Sorted backbone names that ``spec`` trains."""
    return sorted(methods[spec.method].backbone_trainable(names, spec))


# Delta state
# =============================================================================


class DeltaState:
    """The tensors a method adds to a backbone, plus the names of the
    backbone tensors it trains.

    Args:
        spec (DeltaSpec): The method.
        tensors (dict[str, np.ndarray]): Delta tensors.
        backbone_trainable (Iterable[str]): Trainable backbone names.
    """

    def __init__(self, spec, tensors, backbone_trainable):
        self.spec = spec
        self._tensors = {name: utils.freeze(value) for name, value in tensors.items()}
        self.backbone_trainable = tuple(sorted(backbone_trainable))

    def __contains__(self, name):
        return name in self._tensors

    def __getitem__(self, name):
        return self._tensors[name]

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return sorted(self._tensors)

    def items(self):
        return [(name, self._tensors[name]) for name in self.names()]

    def trainable_names(self):
        """Delta names and trainable backbone names, lexicographically."""
        return sorted(self.names() + list(self.backbone_trainable))

    def set(self, name, value):
        current = self._tensors.get(name)
        if current is None:
            raise PayloadError("Unknown delta tensor {!r}.".format(name))
        value = np.asarray(value)
        if value.shape != current.shape:
            raise PayloadError(
                "Shape mismatch for {}: expected {}, got {}.".format(
                    name, current.shape, value.shape
                )
            )
        self._tensors[name] = utils.freeze(value)

    def copy(self):
        return DeltaState(self.spec, self._tensors, self.backbone_trainable)

    def __getstate__(self):
        return {
            "spec": self.spec,
            "tensors": self._tensors,
            "backbone_trainable": self.backbone_trainable,
        }

    def __setstate__(self, state):
        self.__init__(state["spec"], state["tensors"], state["backbone_trainable"])

    def __repr__(self):
        return "DeltaState({}, {} tensors, {} trainable backbone tensors)".format(
            self.spec.label, len(self), len(self.backbone_trainable)
        )

    # Forward hooks; each returns ``None`` when the method does not decorate
    # the given site.

    def adapter_params(self, params, i, site):
        """``(w_down, w_up, b_down, b_up)`` of the adapter at ``site``."""
        p = layer_delta(i) + "{}.adapter.".format(site)
        if p + "down.w" not in self._tensors:
            return None
        return tuple(params[p + part] for part in ("down.w", "up.w", "down.b", "up.b"))

    def lora_params(self, params, i, target):
        """``(a, b, scaling)`` of the LoRA update of projection ``target``."""
        p = layer_delta(i) + "attn.{}.lora.".format(target)
        if p + "a" not in self._tensors:
            return None
        return params[p + "a"], params[p + "b"], self.spec.scaling

    def prefix_params(self, params, i):
        """``(k, v)`` prefix vectors of layer ``i``."""
        p = layer_delta(i) + "attn.prefix."
        if p + "k" not in self._tensors:
            return None
        return params[p + "k"], params[p + "v"]


def attach(store, spec, seed):
    """Decorate ``store`` with a tuning method.

    Flags the backbone tensors the method trains and creates the tensors it
    adds, each drawn from its own stream keyed by ``seed`` and its name.
    LoRA and Adapter start as the identity, so eval-mode outputs are
    unchanged.

    Returns:
        DeltaState: The method's state.

    Raises:
        ConfigError: If ``spec`` is invalid for the store's shape.
    """
    cfg = store.config
    validate.delta_spec(spec, cfg)
    method = methods[spec.method]
    dtype = utils.float_dtype()
    tensors = {
        name: np.asarray(
            method.initial_value(name, shape, utils.rng_for(seed, "delta", name)),
            dtype=dtype,
        )
        for name, shape in method.delta_shapes(cfg.d_model, cfg.n_layers, spec).items()
    }
    trainable = backbone_trainable(store.names(), spec)
    store.set_trainable(trainable)
    state = DeltaState(spec, tensors, trainable)
    log.debug(
        "Attached %s: %s delta tensors, %s trainable backbone tensors",
        spec.label,
        len(tensors),
        len(trainable),
    )
    return state


# Payloads
# =============================================================================


class Payload:
    """An immutable, name-ordered list of trainable tensors.

    Args:
        entries (Iterable[tuple[str, np.ndarray]]): Tensors; sorted by name
            on construction.
    """

    def __init__(self, entries):
        entries = sorted(((name, utils.freeze(a)) for name, a in entries), key=lambda e: e[0])
        names = [name for name, _ in entries]
        if len(set(names)) != len(names):
            raise PayloadError("Payload repeats a tensor name.")
        self.entries = tuple(entries)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def names(self):
        return [name for name, _ in self.entries]

    def as_dict(self):
        return dict(self.entries)

    def layout(self):
        """``(name, shape)`` of every entry."""
        return [(name, a.shape) for name, a in self.entries]

    def scalars(self):
        """Total number of scalars."""
        return int(np.sum([a.size for _, a in self.entries], dtype=np.int64))

    def byte_length(self, width=None):
        """Length of the wire encoding, computed without encoding."""
        width = config.WIRE_BYTES_PER_SCALAR if width is None else width
        return checkpoint.encoded_length(self.layout(), width)

    def to_bytes(self, width=None):
        width = config.WIRE_BYTES_PER_SCALAR if width is None else width
        return checkpoint.encode(self.entries, constants.KIND_PAYLOAD, width)

    @classmethod
    def from_bytes(cls, data):
        kind, _, _, records = checkpoint.decode(data)
        if kind != constants.KIND_PAYLOAD:
            raise PayloadError("Data does not hold a payload.")
        return cls(records)

    def __eq__(self, other):
        return (
            isinstance(other, Payload)
            and self.names() == other.names()
            and all(
                utils.bitwise_equal(a, b)
                for (_, a), (_, b) in zip(self.entries, other.entries)
            )
        )

    def __hash__(self):
        return hash(tuple((name, utils.np_hash(a)) for name, a in self.entries))

    def __repr__(self):
        return "Payload({} tensors, {} scalars)".format(len(self), self.scalars())


def extract_efficient(store, delta):
    """Collect the trainable set: delta tensors and trainable backbone
    tensors, in lexicographic order.
    """
    return Payload(
        (name, model.get_array(store, delta, name)) for name in delta.trainable_names()
    )


def check_layout(expected, payload):
    """Check that a payload has exactly the ``expected`` ``{name: shape}``.

    Raises:
        PayloadError: On unknown or missing names, or a shape mismatch.
    """
    got = dict(payload.layout())
    unknown = sorted(set(got) - set(expected))
    missing = sorted(set(expected) - set(got))
    if unknown:
        raise PayloadError("Payload has unknown tensors: {}".format(unknown))
    if missing:
        raise PayloadError("Payload is missing tensors: {}".format(missing))
    for name, shape in got.items():
        if tuple(shape) != tuple(expected[name]):
            raise PayloadError(
                "Shape mismatch for {}: expected {}, got {}".format(
                    name, expected[name], shape
                )
            )


def inject_efficient(store, delta, payload):
    """Overwrite the trainable set with the tensors of ``payload``.

    Frozen backbone tensors are left untouched.

    Raises:
        PayloadError: If the payload's names or shapes differ from the
            trainable set.
    """
    expected = {
        name: model.get_array(store, delta, name).shape
        for name in delta.trainable_names()
    }
    check_layout(expected, payload)
    model.assign(store, delta, payload.as_dict())
