#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# attack.py

"""
Gradient-inversion attacks on captured client uploads.

The server sees what a client uploads after local tuning. From a single
captured update the attacker optimizes dummy input embeddings and soft label
logits until the update they would produce matches the observation, then
decodes each dummy row to its nearest vocabulary embedding.

The matching loss is differentiated by central finite differences, so the
autodiff core stays first order. This is tractable only at toy sizes.

When the word-embedding table is trainable its gradient names the tokens of
the batch outright; ``embedding_grad_leak`` reads them off. With
``AttackConfig.leak_prior`` the reconstruction then starts from the leaked
rows and decodes only to leaked tokens.
"""

import logging
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import config, constants, jsonify, model, utils, validate
from .compute.parallel import KeyedMapReduce
from .data import Batch
from .delta import extract_efficient
from .exceptions import CaptureError, LeakUnavailableError
from .models import AttackResult

log = logging.getLogger(__name__)

EMBEDDING = "emb.word"


@dataclass(frozen=True)
class AttackConfig:
    """Attacker settings.

    Attributes:
        max_iters (int): Gradient-descent iterations per restart.
        attack_lr (float): Initial step size on the dummy variables; halved
            whenever a step would raise the matching loss.
        fd_step (float): Central finite-difference step.
        restarts (int): Independent random initializations; the one with
            the lowest final matching loss is reported.
        seed (int): Seed of the initializations.
        mode (str): ``'delta'`` matches parameter differences; ``'gradient'``
            converts an SGD step back to a gradient and matches gradients.
        leak_prior (bool): When the upload carries the word-embedding table,
            start from the leaked token rows and decode only among them.
    """

    max_iters: int = 100
    attack_lr: float = 0.1
    fd_step: float = 1e-3
    restarts: int = 2
    seed: int = 0
    mode: str = "delta"
    leak_prior: bool = True

    def __post_init__(self):
        validate.attack_config(self)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, dct):
        return jsonify.build_dataclass(cls, dct)


class AttackTarget:
    """A captured client upload and everything the attacker knows.

    Attributes:
        store (ParameterStore): The model the client received.
        delta (DeltaState): Its tuning-method state.
        observed (dict[str, np.ndarray]): Captured gradient (``mode ==
            'gradient'``) or parameter difference (``mode == 'delta'``) of
            every trainable tensor.
        mode (str): What ``observed`` holds.
        optimizer (OptimizerConfig): The client's optimizer.
        steps (int): Local optimizer steps behind the capture.
        batch (Batch): The client's true batch; used only for scoring,
            except for its padding mask, which the attacker is assumed to
            know.
    """

    def __init__(self, store, delta, observed, mode, optimizer, steps, batch):
        self.store = store
        self.delta = delta
        self.observed = {name: utils.freeze(a) for name, a in observed.items()}
        self.mode = mode
        self.optimizer = optimizer
        self.steps = steps
        self.batch = batch

    @property
    def batch_size(self):
        return len(self.batch)

    @property
    def lr(self):
        return self.optimizer.lr

    @property
    def multi_step(self):
        return self.steps > 1

    def names(self):
        return sorted(self.observed)

    def __repr__(self):
        return "AttackTarget(mode={!r}, batch_size={}, steps={}, tensors={})".format(
            self.mode, self.batch_size, self.steps, len(self.observed)
        )


def capture_update(store, delta, batch, optimizer, steps=1, mode="delta", seed=0):
    """Let a client take ``steps`` optimizer steps on ``batch`` and capture
    its upload.

    Args:
        store (ParameterStore): The model sent to the client.
        delta (DeltaState): Its tuning-method state.
        batch (Batch): The client's data.
        optimizer (OptimizerConfig): The client's optimizer.

    Keyword Args:
        steps (int): Local steps; more than one flags the capture as
            multi-step, and it is matched as a parameter difference.
        mode (str): ``'gradient'`` recovers ``g = -delta / lr`` from a single
            plain SGD step; ``'delta'`` keeps the difference.
        seed (int): Seed of the client's dropout stream.

    Returns:
        AttackTarget: The capture.

    Raises:
        CaptureError: If gradient recovery is requested for an optimizer
            other than plain SGD.
    """
    validate.batch(batch, store.config)
    if mode == "gradient" and (optimizer.name != "sgd" or optimizer.momentum):
        raise CaptureError(
            "Cannot recover a gradient from a {} update; capture in delta mode".format(
                optimizer.name
            )
        )
    if mode == "gradient" and steps > 1:
        log.warning("Multi-step capture (%s steps) is matched as a delta", steps)
        mode = "delta"

    before = extract_efficient(store, delta).as_dict()
    client_store, client_delta = store.copy(), delta.copy()
    opt = optimizer.build()
    rng = utils.rng_for(seed, "capture")
    for _ in range(steps):
        model.train_step(client_store, batch, opt, client_delta, rng=rng)
    after = extract_efficient(client_store, client_delta).as_dict()

    observed = {name: after[name] - before[name] for name in before}
    if mode == "gradient":
        observed = {name: -d / optimizer.lr for name, d in observed.items()}
    return AttackTarget(store, delta, observed, mode, optimizer, steps, batch)


# Matching
# =============================================================================


def _softmax(logits):
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _dummy_batch(target):
    # Token ids only carry the padding mask; embeddings are supplied directly.
    mask = target.batch.pad_mask
    token_ids = np.where(mask, constants.PAD_ID, 1)
    labels = np.zeros(len(token_ids), dtype=np.int64)
    return Batch(token_ids, labels, mask)


def simulated_update(target, embeds, label_logits):
    """The update the client would upload for dummy inputs.

    Returns:
        dict[str, np.ndarray]: A gradient or a one-step parameter difference
        from a fresh optimizer, matching ``target.mode``.
    """
    store, delta = target.store, target.delta
    params = model.bind(store, delta)
    names = model.trainable_names(store, delta)
    with ad.Tape() as tape:
        tape.watch({name: params[name] for name in names})
        logits = model.forward(
            store,
            _dummy_batch(target),
            delta,
            params=params,
            inputs_embeds=ad.Tensor(embeds),
        )
        loss = ad.cross_entropy(logits, _softmax(label_logits))
    grads = tape.backward(loss).arrays()
    if target.mode == "gradient":
        return grads
    current = {name: model.get_array(store, delta, name) for name in grads}
    stepped = target.optimizer.build().step(current, grads)
    return {name: stepped[name] - current[name] for name in grads}


def matched_names(target):
    """Observed tensors compared by the matching loss.

    The word-embedding table is excluded: dummy inputs bypass the lookup,
    so its simulated gradient is identically zero.
    """
    return [name for name in target.names() if name != EMBEDDING]


def matching_loss(target, embeds, label_logits):
    """Squared distance between the simulated and the observed update."""
    simulated = simulated_update(target, embeds, label_logits)
    return float(
        sum(np.sum((simulated[n] - target.observed[n]) ** 2) for n in matched_names(target))
    )


class _Variables:
    """Packs dummy embeddings and label logits into one flat vector.

    Only non-padding rows are free; padding rows unpack as zeros, which the
    attention mask and pooling keep out of the loss.
    """

    def __init__(self, pad_mask, d_model, n_labels):
        self.keep = ~np.asarray(pad_mask, dtype=bool)
        self.embeds_shape = self.keep.shape + (d_model,)
        self.labels_shape = (self.keep.shape[0], n_labels)
        self.split = int(np.sum(self.keep)) * d_model

    def pack(self, embeds, label_logits):
        embeds = np.asarray(embeds, dtype=np.float64)[self.keep]
        return np.concatenate([np.ravel(embeds), np.ravel(label_logits)])

    def unpack(self, theta):
        embeds = np.zeros(self.embeds_shape)
        embeds[self.keep] = theta[: self.split].reshape(-1, self.embeds_shape[-1])
        return embeds, theta[self.split :].reshape(self.labels_shape)


def _variables(target):
    cfg = target.store.config
    return _Variables(target.batch.pad_mask, cfg.d_model, cfg.n_labels)


def leak_candidates(target, cfg):
    """Token ids the reconstruction may decode to.

    Returns:
        list[int] | None: The leaked ids when ``cfg.leak_prior`` is on and the
        upload carries the word-embedding table; otherwise ``None``, meaning
        the whole vocabulary.
    """
    if not cfg.leak_prior:
        return None
    try:
        return sorted(embedding_grad_leak(target)) or None
    except LeakUnavailableError:
        return None


def _initial_point(target, variables, restart, seed, candidates=None):
    rng = utils.rng_for(seed, "attack", restart)
    table = np.asarray(target.store[EMBEDDING], dtype=np.float64)
    if candidates is None:
        embeds = rng.normal(0.0, float(np.std(table)), size=variables.embeds_shape)
    else:
        # Non-padding slots cycle through a shuffled order of the leaked ids.
        token_ids = np.full(target.batch.token_ids.shape, constants.PAD_ID)
        for row, mask in zip(token_ids, target.batch.pad_mask):
            row[~mask] = np.resize(rng.permutation(candidates), int(np.sum(~mask)))
        embeds = table[token_ids]
    logits = rng.normal(0.0, 1.0, size=variables.labels_shape)
    return variables.pack(embeds, logits)


def matching_gradient(objective, theta, cfg):
    """Central finite-difference gradient of a matching loss."""
    return ad.numerical_gradient(objective, theta, step=cfg.fd_step)


def descend(objective, theta, cfg):
    """Minimize ``objective`` from ``theta`` by gradient descent.

    The step size starts at ``cfg.attack_lr``. A step that would not lower
    the loss is rejected and the step size halved, so the returned loss is
    the lowest over all iterates.

    Returns:
        tuple[float, np.ndarray]: The final loss and iterate.
    """
    theta = np.array(theta, dtype=np.float64)
    loss, lr = objective(theta), cfg.attack_lr
    for _ in range(cfg.max_iters):
        candidate = theta - lr * matching_gradient(objective, theta, cfg)
        candidate_loss = objective(candidate)
        if candidate_loss < loss:
            theta, loss = candidate, candidate_loss
        else:
            lr /= 2
    return loss, theta


def optimize_dummy(target, cfg, theta):
    """Minimize the matching loss of ``target`` from ``theta``.

    Returns:
        tuple[float, np.ndarray]: The lowest loss and the iterate reaching it.
    """
    variables = _variables(target)

    def objective(x):
        return matching_loss(target, *variables.unpack(x))

    return descend(objective, theta, cfg)


class AttackRestarts(KeyedMapReduce):
    """Run independent restarts, keyed by restart index."""

    description = "Attack restarts"

    @staticmethod
    def compute(restart, target, cfg):  # pylint: disable=arguments-differ
        theta = _initial_point(
            target, _variables(target), restart, cfg.seed, leak_candidates(target, cfg)
        )
        loss, theta = optimize_dummy(target, cfg, theta)
        log.debug("Attack restart %s: matching loss %.3e", restart, loss)
        return restart, (loss, restart, theta)


# Decoding and scoring
# =============================================================================


def decode_embeddings(table, embeds, pad_mask, candidates=None):
    """Map every non-padding dummy row to its nearest vocabulary row.

    Distances are Euclidean and ties go to the lowest token id. The padding
    token is never predicted.

    Keyword Args:
        candidates (Iterable[int]): Restrict decoding to these token ids.

    Returns:
        list[list[int]]: Recovered token ids per example.
    """
    table = np.asarray(table, dtype=np.float64)
    allowed = np.ones(len(table), dtype=bool)
    if candidates is not None:
        allowed[:] = False
        allowed[list(candidates)] = True
    allowed[constants.PAD_ID] = False
    rows = []
    for example, mask in zip(np.asarray(embeds), np.asarray(pad_mask)):
        dist = np.sum((example[~mask][:, None, :] - table[None]) ** 2, axis=-1)
        dist[:, ~allowed] = np.inf
        rows.append([int(t) for t in np.argmin(dist, axis=1)])
    return rows


def true_tokens(batch):
    """Non-padding token ids per example."""
    return [
        [int(t) for t in ids[~mask]] for ids, mask in zip(batch.token_ids, batch.pad_mask)
    ]


def harmonic_mean(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def prf_metrics(recovered, target):
    """Precision, recall and F1 of a recovered token multiset.

    Example:
        >>> [round(x, 4) for x in prf_metrics(['a', 'a', 'b'], ['a', 'b', 'b'])]
        [0.6667, 0.6667, 0.6667]
    """
    recovered, target = Counter(recovered), Counter(target)
    hits = sum((recovered & target).values())
    n_recovered, n_target = sum(recovered.values()), sum(target.values())
    precision = hits / n_recovered if n_recovered else 0.0
    recall = hits / n_target if n_target else 0.0
    return precision, recall, harmonic_mean(precision, recall)


def score(recovered, batch):
    """Per-example precision and recall, averaged; F1 of the averages."""
    pairs = [prf_metrics(r, t)[:2] for r, t in zip(recovered, true_tokens(batch))]
    precision = float(np.mean([p for p, _ in pairs]))
    recall = float(np.mean([r for _, r in pairs]))
    return precision, recall, harmonic_mean(precision, recall)


def dlg_reconstruct(target, cfg, init=None):
    """Reconstruct the client's batch from its captured update.

    When the word-embedding table leaks (see ``leak_candidates``) restarts
    begin on the leaked rows and decoding is restricted to leaked tokens.

    Args:
        target (AttackTarget): The capture.
        cfg (AttackConfig): Attacker settings.

    Keyword Args:
        init (tuple[np.ndarray, np.ndarray]): Starting embeddings
            ``[B, S, d_model]`` and label logits ``[B, n_labels]``; replaces
            the restarts.

    Returns:
        AttackResult: Decoded tokens, scores and the best matching loss.
    """
    validate.attack_config(cfg)
    if init is not None:
        variables = _variables(target)
        loss, theta = optimize_dummy(target, cfg, variables.pack(*init))
        restart = 0
    else:
        runs = AttackRestarts(range(cfg.restarts), target, cfg).run(
            config.PARALLEL_ATTACK_EVALUATION
        )
        loss, restart, theta = min(runs, key=lambda run: (run[0], run[1]))

    embeds, _ = _variables(target).unpack(theta)
    recovered = decode_embeddings(
        target.store[EMBEDDING],
        embeds,
        target.batch.pad_mask,
        candidates=leak_candidates(target, cfg),
    )
    precision, recall, f1 = score(recovered, target.batch)
    result = AttackResult(
        recovered, precision, recall, f1, loss, cfg.max_iters, restart=restart
    )
    log.info(
        "Gradient inversion (%s, batch %s): loss %.3e, F1 %.3f",
        target.mode,
        target.batch_size,
        loss,
        f1,
    )
    return result


def embedding_grad_leak(target):
    """Tokens whose word-embedding rows changed.

    Only rows looked up by the batch receive gradient, so these are exactly
    the batch's tokens.

    Returns:
        set[int]: Leaked token ids.

    Raises:
        LeakUnavailableError: If the embedding table is not part of the
            upload.
    """
    if EMBEDDING not in target.observed:
        raise LeakUnavailableError(
            "The upload does not include `{}`; it is frozen".format(EMBEDDING)
        )
    norms = np.linalg.norm(target.observed[EMBEDDING], axis=1)
    return {int(i) for i in np.flatnonzero(norms > constants.GRAD_ZERO_TOL)}


def leak_record(target):
    """Precision, recall and leaked ids of the embedding leak, or ``None``."""
    try:
        leaked = embedding_grad_leak(target)
    except LeakUnavailableError:
        return None
    present = {t for row in true_tokens(target.batch) for t in row}
    precision, recall, f1 = prf_metrics(sorted(leaked), sorted(present))
    return {"leaked": sorted(leaked), "precision": precision, "recall": recall, "f1": f1}


def attack_record(method, target, result, seed):
    """The attack report of one target."""
    return {
        "method": method,
        "batch_size": target.batch_size,
        "seed": seed,
        "mode": target.mode,
        "iterations": result.iterations,
        "final_loss": result.final_loss,
        "precision": result.precision,
        "recall": result.recall,
        "f1": result.f1,
        "recovered": [list(row) for row in result.recovered],
        "target": true_tokens(target.batch),
        "embedding_leak": leak_record(target),
    }
