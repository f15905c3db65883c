#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# federation.py

"""
Federated parameter-efficient tuning.

Every round the server samples clients, sends them the global trainable
payload, lets each tune it on its local data and replaces it with the
size-weighted average of the returned payloads. The frozen backbone never
leaves the clients and never changes.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import config, jsonify, model, utils, validate
from .compute.parallel import KeyedMapReduce
from .delta import Payload, attach, check_layout, extract_efficient, inject_efficient
from .exceptions import ConfigError, ContractError
from .log import progress
from .models import RoundRecord, fmt
from .optim import OptimizerConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FederationConfig:
    """Schedule of a federated run.

    Attributes:
        total_clients (int): Number of clients ``C``.
        sample_size (int): Clients sampled per round ``K``.
        rounds (int): Communication rounds ``T``.
        local_epochs (int): Local epochs ``E`` per round.
        batch_size (int): Local mini-batch size.
        optimizer (OptimizerConfig): Local optimizer, rebuilt every round.
        seed (int): Seed of sampling, shuffling and dropout streams.
        scenario (str): ``'standard'``, ``'cross-silo'`` or ``'large-scale'``.
    """

    total_clients: int = 10
    sample_size: int = 10
    rounds: int = 30
    local_epochs: int = 1
    batch_size: int = 64
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    scenario: str = "standard"

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            object.__setattr__(self, "optimizer", OptimizerConfig.from_json(self.optimizer))
        validate.federation_config(self)

    def to_json(self):
        return {
            "total_clients": self.total_clients,
            "sample_size": self.sample_size,
            "rounds": self.rounds,
            "local_epochs": self.local_epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer.to_json(),
            "seed": self.seed,
            "scenario": self.scenario,
        }

    @classmethod
    def from_json(cls, dct):
        return jsonify.build_dataclass(cls, dct)


def sample_clients(total, k, round, seed):  # pylint: disable=redefined-builtin
    """Sample ``k`` distinct client ids uniformly without replacement.

    Returns:
        list[int]: Ids in ascending order; a function of ``(seed, round)``.

    Raises:
        ConfigError: If ``k > total``.

    Example:
        >>> sample_clients(5, 5, round=1, seed=0)
        [0, 1, 2, 3, 4]
    """
    validate.sample_size(total, k)
    rng = utils.rng_for(seed, "sample", round)
    return sorted(int(c) for c in rng.choice(total, size=k, replace=False))


class ClientState:
    """A client: its id, local data and private copies of the backbone and
    tuning-method state.
    """

    def __init__(self, client_id, split, backbone, delta):
        self.client_id = client_id
        self.split = split
        self.backbone = backbone
        self.delta = delta

    def __len__(self):
        return len(self.split)

    def __repr__(self):
        return "ClientState(id={}, n={})".format(self.client_id, len(self))


class ClientUpdate:
    """The payload a client returns after local tuning."""

    def __init__(self, client_id, n_examples, payload, train_loss):
        self.client_id = client_id
        self.n_examples = n_examples
        self.payload = payload
        self.train_loss = train_loss

    def __repr__(self):
        return "ClientUpdate(id={}, n={}, loss={:.4f})".format(
            self.client_id, self.n_examples, self.train_loss
        )


def local_epoch_rng(seed, round, client_id, epoch):  # pylint: disable=redefined-builtin
    """Stream for batch order and dropout of one local epoch."""
    return utils.rng_for(seed, "local", round, client_id, epoch)


def train_epoch(store, delta, split, optimizer, batch_size, rng):
    """Run one shuffled epoch of mini-batch training; return the mean loss."""
    order = rng.permutation(len(split))
    losses, sizes = [], []
    for start in range(0, len(order), batch_size):
        batch = split.batch(order[start : start + batch_size])
        losses.append(model.train_step(store, batch, optimizer, delta, rng=rng))
        sizes.append(len(batch))
    return float(np.average(losses, weights=sizes)) if losses else 0.0


def client_local_tuning(
    client, global_payload, epochs, optimizer, seed, round=1, batch_size=32
):  # pylint: disable=redefined-builtin
    """Tune the global payload on one client's data.

    Injects ``global_payload`` into private copies of the client's model,
    runs ``epochs`` shuffled epochs with a fresh optimizer and extracts the
    result.

    Args:
        client (ClientState): The client.
        global_payload (Payload): The server's current trainable set.
        epochs (int): Local epochs.
        optimizer (OptimizerConfig): Local optimizer.
        seed (int): Run seed; with ``round`` and the client id it keys the
            shuffling and dropout streams.

    Returns:
        ClientUpdate: The tuned payload and the mean training loss.

    Raises:
        PayloadError: If the payload does not match the client's trainable
            set.
    """
    store, delta = client.backbone.copy(), client.delta.copy()
    inject_efficient(store, delta, global_payload)
    opt = optimizer.build()
    loss = 0.0
    for epoch in range(1, epochs + 1):
        rng = local_epoch_rng(seed, round, client.client_id, epoch)
        loss = train_epoch(store, delta, client.split, opt, batch_size, rng)
    log.debug(
        "Client %s, round %s: %s examples, final-epoch loss %.4f",
        client.client_id,
        round,
        len(client),
        loss,
    )
    return ClientUpdate(client.client_id, len(client), extract_efficient(store, delta), loss)


def aggregate(updates):
    """Size-weighted average of client payloads.

    Args:
        updates (list[tuple[int, Payload]]): ``(n_examples, payload)`` pairs
            in ascending client-id order.

    Returns:
        Payload: ``sum_k (n_k / n) x_k``, accumulated in float64 as
        ``x_0 + sum_k (n_k / n) (x_k - x_0)`` so that unchanged payloads are
        returned bitwise. A single update is returned as it is.

    Raises:
        ContractError: If ``updates`` is empty or a size is not positive.
        PayloadError: If payload names or shapes differ.

    Example:
        >>> p = lambda v: Payload([('w', np.array([v]))])
        >>> aggregate([(1, p(0.0)), (3, p(4.0))]).as_dict()['w']
        array([3.])
    """
    if not updates:
        raise ContractError("Cannot aggregate an empty list of payloads.")
    sizes = np.array([n for n, _ in updates], dtype=np.float64)
    if np.any(sizes <= 0):
        raise ContractError("Client sizes must be positive; got {}".format(sizes))
    anchor = updates[0][1]
    expected = dict(anchor.layout())
    for _, payload in updates[1:]:
        check_layout(expected, payload)
    if len(updates) == 1:
        return anchor

    weights = sizes / sizes.sum()
    out = []
    for name, x0 in anchor:
        base = x0.astype(np.float64)
        acc = np.zeros_like(base)
        for w, (_, payload) in zip(weights, updates):
            acc += w * (payload.as_dict()[name].astype(np.float64) - base)
        out.append((name, (base + acc).astype(x0.dtype)))
    return Payload(out)


class ClientTuning(KeyedMapReduce):
    """Tune the sampled clients of one round, keyed by client id."""

    description = "Clients"

    @staticmethod
    def compute(client_id, clients, payload, cfg, round):  # pylint: disable=arguments-differ,redefined-builtin
        update = client_local_tuning(
            clients[client_id],
            payload,
            cfg.local_epochs,
            cfg.optimizer,
            cfg.seed,
            round=round,
            batch_size=cfg.batch_size,
        )
        return client_id, update


class GlobalState:
    """Server state of a run.

    Attributes:
        store (ParameterStore): The global model: frozen backbone with the
            current trainable set injected.
        delta (DeltaState): The tuning-method state of the global model.
        payload (Payload): The current global trainable set.
        history (list[RoundRecord]): One record per round.
        best_round (int): Round with the highest validation accuracy (the
            earliest on ties); 0 before any round.
        best_payload (Payload): Global payload after ``best_round``.
    """

    def __init__(self, store, delta):
        self.store = store
        self.delta = delta
        self.payload = extract_efficient(store, delta)
        self.history = []
        self.best_round = 0
        self.best_val = -np.inf
        self.best_test = float("nan")
        self.best_payload = self.payload

    def set_payload(self, payload):
        inject_efficient(self.store, self.delta, payload)
        self.payload = payload

    def record(self, record, payload):
        self.history.append(record)
        if record.val > self.best_val:
            self.best_round = record.round
            self.best_val = record.val
            self.best_test = record.test
            self.best_payload = payload

    def best_model(self):
        """Copies of the store and delta with the best payload injected."""
        store, delta = self.store.copy(), self.delta.copy()
        inject_efficient(store, delta, self.best_payload)
        return store, delta

    def __repr__(self):
        return "GlobalState(rounds={}, best_round={}, best_val={})".format(
            len(self.history), self.best_round, self.best_val
        )

    def __str__(self):
        return fmt.fmt_history(self.history)


@utils.time_annotated
def federated_round(state, clients, cfg, round, dataset):  # pylint: disable=redefined-builtin
    """Run one round of sampling, local tuning and aggregation."""
    sampled = sample_clients(cfg.total_clients, cfg.sample_size, round, cfg.seed)
    updates = ClientTuning(sampled, clients, state.payload, cfg, round).run(
        config.PARALLEL_CLIENT_TRAINING
    )
    payload = aggregate([(u.n_examples, u.payload) for u in updates])
    state.set_payload(payload)

    sizes = [u.n_examples for u in updates]
    train_loss = float(np.average([u.train_loss for u in updates], weights=sizes))
    transfer = cfg.sample_size * payload.byte_length()
    record = RoundRecord(
        round=round,
        clients=sampled,
        val=model.evaluate(state.store, dataset.val, state.delta),
        test=model.evaluate(state.store, dataset.test, state.delta),
        bytes_up=transfer,
        bytes_down=transfer,
        trainable_scalars=payload.scalars(),
        train_loss=train_loss,
    )
    state.record(record, payload)
    return record


def run_federated(dataset, plan, backbone, spec, cfg):
    """Run federated parameter-efficient tuning.

    Args:
        dataset (Dataset): Train, validation and test splits; clients hold
            the training examples assigned by ``plan``.
        plan (PartitionPlan): Client data assignment.
        backbone (ParameterStore): The frozen pretrained backbone with a
            downstream head.
        spec (DeltaSpec): Tuning method.
        cfg (FederationConfig): Schedule.

    Returns:
        tuple[GlobalState, list[RoundRecord]]: The final server state, which
        holds the best-by-validation snapshot, and the round history.

    Raises:
        ConfigError: If the plan's client count differs from
            ``cfg.total_clients``.
    """
    validate.federation_config(cfg)
    if plan.n_clients != cfg.total_clients:
        raise ConfigError(
            "Plan has {} clients but the federation expects {}".format(
                plan.n_clients, cfg.total_clients
            )
        )
    store = backbone.copy()
    delta = attach(store, spec, cfg.seed)
    state = GlobalState(store, delta)
    # Clients share the global objects; local tuning works on private copies
    # and overwrites every trainable tensor on injection.
    clients = [
        ClientState(k, dataset.train.subset(plan[k]), store, delta)
        for k in range(plan.n_clients)
    ]
    log.info(
        "Federated %s: C=%s K=%s T=%s E=%s, payload %s scalars (%s)",
        spec.label,
        cfg.total_clients,
        cfg.sample_size,
        cfg.rounds,
        cfg.local_epochs,
        state.payload.scalars(),
        fmt.fmt_bytes(state.payload.byte_length()),
    )
    for t in progress(range(1, cfg.rounds + 1), desc="Rounds"):
        record = federated_round(state, clients, cfg, t, dataset)
        log.info("%s (%.2fs)", record, record.wall_time or 0.0)
    log.info(
        "Federated %s done: best round %s, val %.4f, test %.4f",
        spec.label,
        state.best_round,
        state.best_val,
        state.best_test,
    )
    return state, state.history


def run_centralized(
    dataset, backbone, spec, epochs, optimizer, seed, batch_size=32, reset_optimizer=True
):
    """Tune on the pooled training data, the centralized baseline.

    The schedule matches a one-client federation with one local epoch:
    epoch ``e`` uses the same stream as round ``e`` of client 0 and, unless
    ``reset_optimizer`` is off, starts from fresh optimizer state as every
    federated round does. With ``reset_optimizer=False`` momentum and Adam
    moments carry across epochs.

    Returns:
        tuple[GlobalState, list[RoundRecord]]: The final state, with the
        best-by-validation epoch, and one record per epoch (with no bytes
        transferred).
    """
    store = backbone.copy()
    delta = attach(store, spec, seed)
    state = GlobalState(store, delta)
    opt = optimizer.build()
    n_scalars = state.payload.scalars()
    log.info("Centralized %s: %s epochs on %s examples", spec.label, epochs, len(dataset.train))
    for epoch in progress(range(1, epochs + 1), desc="Epochs"):
        if reset_optimizer and epoch > 1:
            opt = optimizer.build()
        rng = local_epoch_rng(seed, epoch, 0, 1)
        loss = train_epoch(store, delta, dataset.train, opt, batch_size, rng)
        payload = extract_efficient(store, delta)
        state.payload = payload
        record = RoundRecord(
            round=epoch,
            clients=(0,),
            val=model.evaluate(store, dataset.val, delta),
            test=model.evaluate(store, dataset.test, delta),
            bytes_up=0,
            bytes_down=0,
            trainable_scalars=n_scalars,
            train_loss=loss,
        )
        state.record(record, payload)
        log.info("Epoch %s", record)
    return state, state.history
