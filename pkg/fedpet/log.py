#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# log.py

"""
Logging and progress bars.

Console records go through ``TqdmHandler`` so they print above any active
progress bar. Long stages of an experiment (pretraining, cells, attacks) are
wrapped in ``stage``, which logs when they start and how long they took.
"""

import contextlib
import logging
from time import perf_counter

from tqdm import tqdm


class TqdmHandler(logging.StreamHandler):
    """A stream handler that writes with ``tqdm.write``."""

    def emit(self, record):
        try:
            tqdm.write(self.format(record), file=self.stream, end=self.terminator)
            self.flush()
        except Exception:  # pylint: disable=broad-except
            self.handleError(record)


def progress(iterable, desc="", total=None, disable=False):
    """Wrap ``iterable`` in a progress bar.

    The bar is hidden when ``config.PROGRESS_BARS`` is off, inside forked
    ``MapReduce`` workers, or when ``disable`` is set.
    """
    from . import config
    from .compute.parallel import MapReduce

    disable = disable or MapReduce._forked or not config.PROGRESS_BARS
    return tqdm(iterable, desc=desc, total=total, leave=False, disable=disable)


@contextlib.contextmanager
def stage(logger, what, *args):
    """Log the start and the duration of a stage at INFO level.

    Args:
        logger (logging.Logger): Where to log.
        what (str): %-style description of the stage, formatted with
            ``args``.

    Example:
        >>> with stage(logging.getLogger('fedpet'), 'cell %s', 'main-s0'):
        ...     pass
    """
    logger.info("Started " + what, *args)
    start = perf_counter()
    try:
        yield
    except BaseException:
        logger.info("Aborted " + what + " after %.2fs", *args, perf_counter() - start)
        raise
    logger.info("Finished " + what + " in %.2fs", *args, perf_counter() - start)
