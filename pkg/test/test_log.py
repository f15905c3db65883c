#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# test/test_log.py

import logging

import pytest

from fedpet import config
from fedpet.log import progress, stage

log = logging.getLogger("fedpet.harness")


def test_stage_logs_start_and_finish(caplog):
    with caplog.at_level(logging.INFO, logger="fedpet.harness"):
        with stage(log, "cell %s", "fed-lora-s0"):
            pass
    messages = [r.getMessage() for r in caplog.records]
    assert messages[0] == "Started cell fed-lora-s0"
    assert messages[1].startswith("Finished cell fed-lora-s0 in ")
    assert messages[1].endswith("s")


def test_stage_logs_aborts_and_reraises(caplog):
    with caplog.at_level(logging.INFO, logger="fedpet.harness"):
        with pytest.raises(KeyError):
            with stage(log, "attack on %s", "BitFit"):
                raise KeyError("restart")
    messages = [r.getMessage() for r in caplog.records]
    assert messages[-1].startswith("Aborted attack on BitFit after ")
    assert not any(m.startswith("Finished") for m in messages)


def test_progress_bar_respects_config():
    with config.override(PROGRESS_BARS=False):
        assert progress(range(3), desc="Rounds").disable
    assert list(progress(range(3), disable=True)) == [0, 1, 2]
