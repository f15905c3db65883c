#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# conf.py

"""
Loading a configuration
~~~~~~~~~~~~~~~~~~~~~~~

Various aspects of fedpet's runtime behavior can be configured. Experiment
parameters (model shapes, partitions, federation schedules) are *not* runtime
options; they live in versioned JSON experiment configs (see
:mod:`fedpet.harness`).

When fedpet is imported, it checks for a YAML file named ``fedpet_config.yml``
in the current directory and automatically loads it if it exists; otherwise the
default configuration is used.

.. only:: never

    This py.test fixture resets fedpet config back to defaults after running
    this doctest. This will not be shown in the output markup.

    >>> getfixture('restore_config_afterwards')

The various settings are listed here with their defaults.

    >>> import fedpet
    >>> defaults = fedpet.config.defaults()

Setting can be changed on the fly by assigning them a new value:

    >>> fedpet.config.PROGRESS_BARS = False

It is also possible to manually load a configuration file:

    >>> fedpet.config.load_file('fedpet_config.yml')

Or load a dictionary of configuration values:

    >>> fedpet.config.load_dict({'PRECISION': 4})


Numerics
~~~~~~~~

- :attr:`~fedpet.conf.FedpetConfig.FLOAT_DTYPE`
- :attr:`~fedpet.conf.FedpetConfig.CHECK_FINITE`
- :attr:`~fedpet.conf.FedpetConfig.WIRE_BYTES_PER_SCALAR`
- :attr:`~fedpet.conf.FedpetConfig.PRECISION`


Parallelization
~~~~~~~~~~~~~~~

- :attr:`~fedpet.conf.FedpetConfig.PARALLEL_CLIENT_TRAINING`
- :attr:`~fedpet.conf.FedpetConfig.PARALLEL_CELL_EVALUATION`
- :attr:`~fedpet.conf.FedpetConfig.PARALLEL_ATTACK_EVALUATION`
- :attr:`~fedpet.conf.FedpetConfig.NUMBER_OF_CORES`

  .. important::
    Only one of the ``PARALLEL_*`` options can be set to ``True`` at a time;
    worker processes cannot spawn workers of their own.


Caching
~~~~~~~

- :attr:`~fedpet.conf.FedpetConfig.CACHE_BACKBONES`
- :attr:`~fedpet.conf.FedpetConfig.FS_CACHE_DIRECTORY`
- :attr:`~fedpet.conf.FedpetConfig.FS_CACHE_VERBOSITY`


Logging
~~~~~~~

- :attr:`~fedpet.conf.FedpetConfig.LOG_FILE`
- :attr:`~fedpet.conf.FedpetConfig.LOG_FILE_LEVEL`
- :attr:`~fedpet.conf.FedpetConfig.LOG_STDOUT_LEVEL`
- :attr:`~fedpet.conf.FedpetConfig.PROGRESS_BARS`
- :attr:`~fedpet.conf.FedpetConfig.REPR_VERBOSITY`


The ``config`` API
~~~~~~~~~~~~~~~~~~
"""

# pylint: disable=protected-access

import contextlib
import logging
import logging.config
import os
import pprint
from pathlib import Path

import joblib
import yaml

from . import __about__, constants

log = logging.getLogger(__name__)

_VALID_LOG_LEVELS = [None, "CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG", "NOTSET"]

LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s %(processName)s: %(message)s"


class Option:
    """A configuration option, implemented as a descriptor.

    Args:
        default: The value the option starts with.

    Keyword Args:
        values (list): If given, the only values the option accepts.
        type (type or tuple[type]): If given, values must be instances of it.
            Booleans are refused where an ``int`` is required.
        check (Callable): If given, called with a candidate value; returns a
            message explaining why the value is invalid, or ``None``.
        on_change (Callable): Called with the ``Config`` whenever the option
            is set.
        doc (str): Description of the option.
    """

    def __init__(
        self, default, values=None, type=None, check=None, on_change=None, doc=None
    ):  # pylint: disable=redefined-builtin
        self.default = default
        self.values = values
        self.type = type
        self.check = check
        self.on_change = on_change
        self.doc = doc
        self.name = None
        self.__doc__ = self._docstring()

    def __set_name__(self, owner, name):
        self.name = name

    def _docstring(self):
        facts = ["``default={!r}``".format(self.default)]
        if self.values is not None:
            facts.append("``values={!r}``".format(self.values))
        if self.on_change is not None:
            facts.append("``on_change={}``".format(self.on_change.__name__))
        return "{}\n{}".format(", ".join(facts), self.doc or "")

    def __get__(self, obj, cls=None):
        if obj is None:
            return self
        return obj._values[self.name]

    def __set__(self, obj, value):
        obj.load_dict({self.name: value})

    def problem(self, value):
        """Return why ``value`` is invalid for this option, or ``None``."""
        if self.type is int and isinstance(value, bool):
            return "{} must be an integer; got {!r}".format(self.name, value)
        if self.type is not None and not isinstance(value, self.type):
            return "{} must be of type {}; got {!r} of type {}".format(
                self.name, self.type, value, type(value).__name__
            )
        if self.values is not None and value not in self.values:
            return "{!r} is not a valid value for {}; must be one of {}".format(
                value, self.name, self.values
            )
        if self.check is not None:
            return self.check(value)
        return None


class Config:
    """A set of ``Option`` values.

    Subclasses declare their options as class attributes; see
    ``FedpetConfig``. Values change by attribute assignment, ``load_dict``,
    ``load_file`` or ``override``. Every change is checked against the
    option's own rules and the class's ``constraints``; an invalid change
    raises ``ValueError`` and leaves every value as it was.
    """

    #: ``(message, predicate)`` pairs over the mapping of option values. The
    #: predicate returns ``False`` when the values are inconsistent.
    constraints = ()

    def __init__(self):
        self._values = {}
        self._loaded_files = []
        options = self.options()
        for name, opt in options.items():
            problem = opt.problem(opt.default)
            if problem:
                raise ValueError(problem)
            self._values[name] = opt.default
        # Callbacks run once all defaults are in place; logging reads several
        # options at once.
        self._notify(options)

    def __str__(self):
        return pprint.pformat(self._values, indent=2)

    def __setattr__(self, name, value):
        if not name.startswith("_") and name not in self.options():
            raise ValueError("{} is not a valid config option".format(name))
        super().__setattr__(name, value)

    @classmethod
    def options(cls):
        """Return the ``Option`` objects of this config, by name, in
        declaration order.
        """
        found = {}
        for klass in reversed(cls.__mro__):
            found.update(
                (name, attr) for name, attr in vars(klass).items() if isinstance(attr, Option)
            )
        return found

    def defaults(self):
        """Return the default values of this configuration."""
        return {name: opt.default for name, opt in self.options().items()}

    def snapshot(self):
        """Return a copy of the current values."""
        return dict(self._values)

    def _notify(self, options):
        called = []
        for opt in options.values():
            if opt.on_change is not None and opt.on_change not in called:
                called.append(opt.on_change)
                opt.on_change(self)

    def load_dict(self, dct):
        """Set several options at once.

        The values are checked together and applied only if all of them are
        valid. Each distinct ``on_change`` callback of the options set then
        runs once.

        Raises:
            ValueError: If a key is not an option, a value breaks its option's
                rules, or the new values break a constraint.
        """
        options = self.options()
        unknown = [name for name in dct if name not in options]
        if unknown:
            raise ValueError("{} is not a valid config option".format(", ".join(unknown)))
        for name, value in dct.items():
            problem = options[name].problem(value)
            if problem:
                raise ValueError(problem)
        candidate = dict(self._values, **dct)
        for message, holds in self.constraints:
            if not holds(candidate):
                raise ValueError(message)
        self._values = candidate
        self._notify({name: options[name] for name in options if name in dct})

    def load_file(self, filename):
        """Load options from a YAML file holding a mapping of names to values.

        Raises:
            ValueError: If the file holds something other than a mapping, or
                an invalid option.
        """
        filename = os.path.abspath(filename)
        with open(filename) as f:
            dct = yaml.safe_load(f) or {}
        if not isinstance(dct, dict):
            raise ValueError("{} does not hold a mapping of options".format(filename))
        self.load_dict(dct)
        self._loaded_files.append(filename)

    def override(self, **new_values):
        """Decorator and context manager to override configuration values.

        The previous values come back when the decorated function returns or
        the block ends, even if it raises. Values are saved on entry, so an
        override can be nested or reused.

        Example:
            >>> from fedpet import config
            >>> @config.override(PRECISION=12)
            ... def test_something():
            ...     assert config.PRECISION == 12
            ...
            >>> test_something()
            >>> with config.override(PRECISION=3):
            ...     assert config.PRECISION == 3
            ...
        """
        return _override(self, **new_values)


class _override(contextlib.ContextDecorator):
    """See ``Config.override`` for usage."""

    def __init__(self, conf, **new_values):
        self.conf = conf
        self.new_values = new_values
        self._saved = []

    def __enter__(self):
        saved = self.conf.snapshot()
        self.conf.load_dict(self.new_values)
        self._saved.append(saved)
        return self.conf

    def __exit__(self, *exc):
        self.conf.load_dict(self._saved.pop())
        return False


# Callbacks
# =============================================================================


def configure_logging(conf):
    """Send log records to ``LOG_FILE`` and the console at the configured
    levels. A level of ``None`` turns that destination off.
    """
    handlers = {}
    if conf.LOG_FILE_LEVEL:
        handlers["file"] = {
            "class": "logging.FileHandler",
            "filename": str(conf.LOG_FILE),
            "level": conf.LOG_FILE_LEVEL,
            "formatter": "standard",
            "delay": True,
        }
    if conf.LOG_STDOUT_LEVEL:
        handlers["stdout"] = {
            "class": "fedpet.log.TqdmHandler",
            "level": conf.LOG_STDOUT_LEVEL,
            "formatter": "standard",
        }
    logging.config.dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {"standard": {"format": LOG_FORMAT}},
            "handlers": handlers,
            "root": {"level": "DEBUG", "handlers": list(handlers)},
        }
    )


def configure_joblib(conf):
    constants.joblib_memory = joblib.Memory(
        location=conf.FS_CACHE_DIRECTORY, verbose=conf.FS_CACHE_VERBOSITY
    )


def configure_precision(conf):
    constants.EPSILON = 10 ** (-conf.PRECISION)


def _nonzero(n):
    return "NUMBER_OF_CORES may not be 0" if n == 0 else None


def _non_negative(n):
    return "PRECISION must be non-negative; got {}".format(n) if n < 0 else None


PARALLEL_OPTIONS = (
    "PARALLEL_CLIENT_TRAINING",
    "PARALLEL_CELL_EVALUATION",
    "PARALLEL_ATTACK_EVALUATION",
)


class FedpetConfig(Config):
    """``fedpet.config`` is an instance of this class."""

    constraints = (
        (
            "Only one of {} may be enabled at a time".format(", ".join(PARALLEL_OPTIONS)),
            lambda values: sum(bool(values[name]) for name in PARALLEL_OPTIONS) <= 1,
        ),
    )

    FLOAT_DTYPE = Option(
        "float64",
        values=["float64", "float32"],
        doc="""
    Precision of every tensor created during a run. Finite-difference gradient
    checks assume ``'float64'``. Communication accounting does not depend on
    this setting; see ``WIRE_BYTES_PER_SCALAR``.""",
    )

    CHECK_FINITE = Option(
        True,
        type=bool,
        doc="""
    Controls whether every autodiff operation checks its output for NaN and
    infinite values, raising ``NonFiniteError`` when it finds one.""",
    )

    WIRE_BYTES_PER_SCALAR = Option(
        4,
        type=int,
        values=[4, 8],
        doc="""
    Scalar width, in bytes, of the payload wire format. Uploads and downloads
    are counted at this width regardless of ``FLOAT_DTYPE``.""",
    )

    PARALLEL_CLIENT_TRAINING = Option(
        False,
        type=bool,
        doc="""
    Controls whether the sampled clients of a round tune in parallel worker
    processes. Aggregation always happens in ascending client-id order, so
    results do not depend on this setting.""",
    )

    PARALLEL_CELL_EVALUATION = Option(
        False,
        type=bool,
        doc="""
    Controls whether the cells of an experiment (one per method, partition,
    local-epoch setting and repetition) run in parallel worker processes.""",
    )

    PARALLEL_ATTACK_EVALUATION = Option(
        False,
        type=bool,
        doc="""
    Controls whether the random restarts of a gradient-inversion attack run in
    parallel worker processes.""",
    )

    NUMBER_OF_CORES = Option(
        -1,
        type=int,
        check=_nonzero,
        doc="""
    Number of worker processes of parallel computations. Negative numbers
    count back from the number of available cores: ``-1`` uses every core,
    ``-2`` all but one. ``0`` is invalid.""",
    )

    CACHE_BACKBONES = Option(
        True,
        type=bool,
        doc="""
    Controls whether pretrained backbones are memoized on disk with joblib.
    Pretraining is deterministic, so the cache never changes results.""",
    )

    FS_CACHE_VERBOSITY = Option(
        0,
        type=int,
        on_change=configure_joblib,
        doc="""
    Controls how much caching information joblib prints. Takes a value between
    ``0`` and ``11``.""",
    )

    FS_CACHE_DIRECTORY = Option(
        "__fedpet_cache__",
        type=(str, Path),
        on_change=configure_joblib,
        doc="""
    Directory holding the joblib cache of pretrained backbones.""",
    )

    LOG_FILE = Option(
        "fedpet.log",
        type=(str, Path),
        on_change=configure_logging,
        doc="""
    The log file. It is created when the first record is written.""",
    )

    LOG_FILE_LEVEL = Option(
        "INFO",
        values=_VALID_LOG_LEVELS,
        on_change=configure_logging,
        doc="""
    Level of the records written to ``LOG_FILE``. Takes the same values as
    ``LOG_STDOUT_LEVEL``.""",
    )

    LOG_STDOUT_LEVEL = Option(
        "WARNING",
        values=_VALID_LOG_LEVELS,
        on_change=configure_logging,
        doc="""
    Level of the records written to the console (standard error, through
    ``tqdm`` so progress bars stay intact). One of ``'DEBUG'``, ``'INFO'``,
    ``'WARNING'``, ``'ERROR'``, ``'CRITICAL'`` or ``None``, which turns console
    logging off.""",
    )

    PROGRESS_BARS = Option(
        True,
        type=bool,
        doc="""
    Controls whether to show progress bars over rounds, clients, experiment
    cells and attack restarts.""",
    )

    PRECISION = Option(
        6,
        type=int,
        check=_non_negative,
        on_change=configure_precision,
        doc="""
    Number of decimal places kept when metrics, distances and report values
    are written to disk. Values that differ by less than ``10e-PRECISION`` are
    reported as equal.""",
    )

    REPR_VERBOSITY = Option(
        2,
        type=int,
        values=[0, 1, 2],
        doc="""
    Controls the verbosity of ``__repr__`` methods on fedpet records. If set
    to ``0``, ``repr`` returns traditional object representations; ``1`` gives
    a one-line summary and ``2`` a multi-line summary.""",
    )

    def log(self):
        """Log the version and the settings in effect."""
        source = self._loaded_files or "defaults (no configuration file found)"
        log.info("fedpet v%s; configuration from %s", __about__.__version__, source)
        log.info("Current fedpet configuration:\n %s", str(self))


FEDPET_CONFIG_FILENAME = "fedpet_config.yml"

config = FedpetConfig()

if os.path.exists(FEDPET_CONFIG_FILENAME):
    config.load_file(FEDPET_CONFIG_FILENAME)

config.log()
