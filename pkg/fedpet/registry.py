#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# registry.py

"""
Named, pluggable entries: tuning methods, optimizers, heterogeneity measures
and experiment presets all live in a ``Registry``.

>>> shapes = Registry()
>>> @shapes.register('square')
... def square(x):
...     return x * x
>>> shapes['square'](3)
9
>>> sorted(shapes)
['square']
"""

import difflib
from collections.abc import Mapping


class Registry(Mapping):
    """A read-only mapping from names to registered objects.

    Entries are added with the ``register`` decorator and never replaced.
    Subclasses set ``desc`` to name what they hold in error messages.
    """

    desc = "entries"

    def __init__(self):
        self.store = {}

    def register(self, name):
        """Decorator registering the decorated object under ``name``.

        Raises:
            ValueError: If ``name`` is already taken.
        """

        def register_func(obj):
            if name in self.store:
                raise ValueError(
                    "{!r} is already registered among the {}".format(name, self.desc)
                )
            self.store[name] = obj
            return obj

        return register_func

    def all(self):
        """Return the registered names in registration order."""
        return list(self)

    def __iter__(self):
        return iter(self.store)

    def __len__(self):
        return len(self.store)

    def __getitem__(self, name):
        if name in self.store:
            return self.store[name]
        message = "{!r} not found among the installed {}: {}.".format(
            name, self.desc, ", ".join(map(str, self.store))
        )
        close = difflib.get_close_matches(str(name), list(map(str, self.store)), n=1)
        if close:
            message += " Did you mean {!r}?".format(close[0])
        raise KeyError(message)
