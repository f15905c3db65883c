#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# compute/__init__.py

"""
See |compute.parallel| for documentation.

Attributes:
    MapReduce: Alias for :class:`fedpet.compute.parallel.MapReduce`.
    KeyedMapReduce: Alias for :class:`fedpet.compute.parallel.KeyedMapReduce`.
"""

# pylint: disable=unused-import

from .parallel import KeyedMapReduce, MapReduce, get_num_processes
