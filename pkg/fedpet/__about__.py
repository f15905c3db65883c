#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# __about__.py

"""fedpet metadata."""

__title__ = "fedpet"
__version__ = "0.3.0"
__description__ = (
    "Desk-scale simulator of federated parameter-efficient tuning of "
    "transformer classifiers."
)
__author__ = "fedpet developers"
__copyright__ = "Copyright 2024 fedpet developers"
__license__ = "GNU General Public License v3.0"

__all__ = [
    "__title__",
    "__version__",
    "__description__",
    "__author__",
    "__copyright__",
    "__license__",
]
