#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# gradcheck.py

import numpy as np

from fedpet import autodiff as ad


def gradient_errors(fn, arrays, step=1e-5):
    """Relative error between the taped and the finite-difference gradient
    of ``fn`` with respect to each named array.

    ``fn`` takes the arrays as keyword tensors and returns a scalar tensor.
    """
    tensors = {
        name: ad.Tensor(value, requires_grad=True, name=name)
        for name, value in arrays.items()
    }
    with ad.Tape() as tape:
        tape.watch(tensors)
        out = fn(**tensors)
    grads = tape.backward(out)

    errors = {}
    for name, value in arrays.items():

        def f(x, name=name):
            args = {k: ad.Tensor(x if k == name else v) for k, v in arrays.items()}
            return fn(**args).item()

        numeric = ad.numerical_gradient(f, value, step=step)
        errors[name] = ad.relative_error(grads[name].value, numeric)
    return errors


def max_gradient_error(fn, arrays, step=1e-5):
    return max(gradient_errors(fn, arrays, step=step).values())


def projection(shape, seed):
    """A fixed random direction for reducing a tensor to a scalar."""
    return ad.Tensor(np.random.default_rng(seed).normal(size=shape))


def project(t, direction):
    return ad.sum(ad.mul(t, direction))
