#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# compute/parallel.py

"""
Parallel execution of independent tasks.

Clients within a round, experiment cells and attack restarts are independent
tasks. ``MapReduce`` maps over them either sequentially or in worker
processes. Every task carries its position in the input and results are
reduced in that order once all of them have arrived, so a parallel run
reduces exactly like a sequential one.
"""

import logging
import logging.handlers
import multiprocessing
import sys
import threading
from itertools import chain, islice
from operator import itemgetter

from tblib import Traceback
from tqdm import tqdm

from .. import config

log = logging.getLogger(__name__)

#: Sentinel that stops workers and the log thread.
STOP = None

#: Tasks queued ahead per worker.
QUEUE_WINDOW = 2


def get_num_processes():
    """Return the number of worker processes ``NUMBER_OF_CORES`` asks for.

    Negative values count back from the number of CPUs: ``-1`` means every
    core, ``-2`` all but one. Requests beyond the CPU count are capped.

    Raises:
        ValueError: If a negative value leaves no cores.
    """
    requested = config.NUMBER_OF_CORES
    available = multiprocessing.cpu_count()
    if requested < 0:
        n = available + requested + 1
        if n <= 0:
            raise ValueError(
                "Invalid NUMBER_OF_CORES {}: only {} cores are available.".format(
                    requested, available
                )
            )
        return n
    if requested > available:
        log.info("Requesting %s cores; only %s available", requested, available)
    return min(requested, available)


class TaskFailure:
    """An exception raised by a task, with a traceback that survives
    pickling through a ``multiprocessing.Queue``.
    """

    def __init__(self, index, exception):  # coverage: disable
        self.index = index
        self.exception = exception
        self.traceback = Traceback(sys.exc_info()[2])

    def reraise(self):
        raise self.exception.with_traceback(self.traceback.as_traceback())


def _work(compute, tasks, results, log_queue, context):  # coverage: disable
    """Body of a worker process: run tasks until ``STOP``."""
    MapReduce._forked = True
    configure_worker_logging(log_queue)
    log.debug("Worker started")
    for index, task in iter(tasks.get, STOP):
        try:
            results.put((index, compute(task, *context)))
        except Exception as e:  # pylint: disable=broad-except
            results.put(TaskFailure(index, e))
    log.debug("Worker stopped")


class WorkerPool:
    """Worker processes running ``compute``, plus the thread that re-emits
    their log records in this process.

    Use as a context manager. When the block ends with an exception, the
    workers are terminated instead of drained.

    Args:
        n_workers (int): Number of processes.
        compute (Callable): Called as ``compute(task, *context)``.
        context (tuple): Extra arguments of ``compute``.
    """

    def __init__(self, n_workers, compute, context):
        self.tasks = multiprocessing.Queue()
        self.results = multiprocessing.Queue()
        self.log_queue = multiprocessing.Queue()
        self.processes = [
            multiprocessing.Process(
                target=_work,
                args=(compute, self.tasks, self.results, self.log_queue, context),
                daemon=True,
            )
            for _ in range(n_workers)
        ]
        self.log_thread = LogThread(self.log_queue)

    def __enter__(self):
        for process in self.processes:
            process.start()
        self.log_thread.start()
        return self

    def __exit__(self, exc_type, *exc):
        for process in self.processes:
            if exc_type is not None:
                process.terminate()
            process.join()
        if exc_type is not None:
            self.tasks.cancel_join_thread()
        self.log_queue.put(STOP)
        self.log_thread.join()
        for queue in (self.tasks, self.results, self.log_queue):
            queue.close()
        return False

    def imap(self, tasks):
        """Yield ``(index, result)`` for every task, as workers finish them.

        At most ``QUEUE_WINDOW`` tasks per worker wait in the queue; the next
        one is queued whenever a result comes back.

        Raises:
            Exception: The first exception raised by a task, with its
                traceback from the worker.
        """
        feed = chain(enumerate(tasks), [STOP] * len(self.processes))
        for item in islice(feed, QUEUE_WINDOW * len(self.processes)):
            self.tasks.put(item)
        for _ in range(len(tasks)):
            outcome = self.results.get()
            for item in islice(feed, 1):
                self.tasks.put(item)
            if isinstance(outcome, TaskFailure):
                log.debug("Task %s failed", outcome.index)
                outcome.reraise()
            yield outcome


class MapReduce:
    """Map ``compute`` over tasks and fold the results.

    Args:
        iterable (Iterable): The tasks; materialized on construction.
        *context: Extra arguments passed to ``compute`` with every task.

    Subclasses implement ``compute`` (map), ``empty_result`` and
    ``process_result`` (reduce), and may override ``finalize``.
    ``process_result`` sees results in task order whether or not the
    computation ran in parallel.

    The engine shows a ``tqdm`` progress bar unless
    ``fedpet.config.PROGRESS_BARS`` is ``False``. Log records of worker
    processes are re-emitted in the parent. Workers never start workers of
    their own, so in a nested computation only the outermost level runs in
    parallel.
    """

    #: Description of the progress bar.
    description = ""

    #: Is this process a worker of a parallel computation?
    _forked = False

    def __init__(self, iterable, *context):
        self.iterable = list(iterable)
        self.context = context

    def empty_result(self, *context):
        """Return the result the reduction starts from."""
        raise NotImplementedError

    @staticmethod
    def compute(obj, *context):
        """Map over a single task."""
        raise NotImplementedError

    def process_result(self, new_result, old_result):
        """Fold ``new_result`` into the accumulated ``old_result`` and return
        the new accumulated result.
        """
        raise NotImplementedError

    def finalize(self, result):
        """Post-process the accumulated result."""
        return result

    def progress_bar(self):
        return tqdm(
            total=len(self.iterable),
            disable=MapReduce._forked or not config.PROGRESS_BARS,
            leave=False,
            desc=self.description,
        )

    def _reduce(self, results):
        result = self.empty_result(*self.context)
        for r in results:
            result = self.process_result(r, result)
        return self.finalize(result)

    def run_sequential(self):
        """Compute and fold the tasks one at a time in this process."""
        result = self.empty_result(*self.context)
        with self.progress_bar() as progress:
            for task in self.iterable:
                result = self.process_result(self.compute(task, *self.context), result)
                progress.update(1)
        return self.finalize(result)

    def run_parallel(self):
        """Compute the tasks in worker processes, then fold the results in
        task order.
        """
        n_workers = min(get_num_processes(), max(len(self.iterable), 1))
        results = [None] * len(self.iterable)
        log.debug("Running %s tasks on %s workers", len(self.iterable), n_workers)
        with self.progress_bar() as progress:
            with WorkerPool(n_workers, self.compute, self.context) as pool:
                for index, value in pool.imap(self.iterable):
                    results[index] = value
                    progress.update(1)
        return self._reduce(results)

    def run(self, parallel=True):
        """Perform the computation.

        Keyword Args:
            parallel (bool): Run in worker processes. A single task, or a
                computation started inside a worker, always runs
                sequentially.
        """
        if parallel and len(self.iterable) > 1 and not MapReduce._forked:
            return self.run_parallel()
        return self.run_sequential()


class KeyedMapReduce(MapReduce):
    """A ``MapReduce`` whose ``compute`` returns ``(key, value)`` pairs.

    The result is the list of values sorted by key.
    """

    def empty_result(self, *context):
        return []

    def process_result(self, new_result, old_result):
        old_result.append(new_result)
        return old_result

    def finalize(self, result):
        return [value for _, value in sorted(result, key=itemgetter(0))]


class LogThread(threading.Thread):
    """Re-emit the log records worker processes put on ``queue`` through
    the loggers of this process, until it receives ``STOP``.
    """

    def __init__(self, queue):
        super().__init__(daemon=True)
        self.queue = queue

    def run(self):
        for record in iter(self.queue.get, STOP):
            logging.getLogger(record.name).handle(record)


def configure_worker_logging(queue):  # coverage: disable
    """Send every log record of a worker process to ``queue``."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    root.addHandler(logging.handlers.QueueHandler(queue))
    root.setLevel(logging.DEBUG)
