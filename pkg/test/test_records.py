#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# test/test_records.py

import pytest

from fedpet import config
from fedpet.models import AttackResult, CostReport, RoundRecord, fmt


def round_record(**kwargs):
    fields = dict(
        round=1,
        clients=[2, 0],
        val=0.5,
        test=0.25,
        bytes_up=2_000_000,
        bytes_down=2_000_000,
        trainable_scalars=250_000,
        train_loss=1.1,
    )
    fields.update(kwargs)
    return RoundRecord(**fields)


def test_round_record_equality_ignores_wall_time():
    assert round_record(wall_time=1.0) == round_record(wall_time=2.0)
    assert hash(round_record(wall_time=1.0)) == hash(round_record())
    assert round_record() != round_record(test=0.5)


def test_round_record_coerces_types():
    record = round_record(clients=(3, 1), val=1)
    assert record.clients == (3, 1)
    assert isinstance(record.val, float)


def test_round_record_json_keys():
    assert list(round_record().to_json()) == [
        "round",
        "clients",
        "val",
        "test",
        "bytes_up",
        "bytes_down",
        "trainable_scalars",
        "train_loss",
    ]


@config.override(REPR_VERBOSITY=0)
def test_low_verbosity_repr():
    assert repr(round_record()).startswith("RoundRecord(round=1, clients=(2, 0),")


@config.override(REPR_VERBOSITY=1, PRECISION=3)
def test_one_line_repr():
    text = repr(round_record(val=0.123456))
    assert text.startswith("<RoundRecord round=1 clients=(2, 0) val=0.123 test=0.25 ")
    assert "\n" not in text


@config.override(REPR_VERBOSITY=2)
def test_round_record_str():
    text = str(round_record())
    assert text.startswith("Round   1: val 0.5000  test 0.2500")
    assert "↑2.00 MB" in text
    assert "K=2" in text
    assert repr(round_record()) == text


def test_history_box():
    text = fmt.fmt_history([round_record(), round_record(round=2)], title="Run")
    lines = text.splitlines()
    assert lines[0].startswith(fmt.CORNERS[0])
    assert lines[-1].startswith(fmt.CORNERS[2])
    assert len(lines) == 6
    assert "(no rounds)" in fmt.fmt_history([])


def test_cost_report_str():
    report = CostReport("LoRA(r=8,q+v)", 887042, 3548168, 70963360, 2128900800, 140.52)
    text = str(report)
    assert "Cost of LoRA(r=8,q+v)" in text
    assert "887,042" in text
    assert "2.13 GB" in text


def test_attack_result_str():
    result = AttackResult([[9, 5]], 1.0, 0.5, 2 / 3, 1e-3, 10)
    text = str(result)
    assert "Gradient inversion" in text
    assert "example 0: [5, 9]" in text


@pytest.mark.parametrize(
    "n,expected", [(0, "0 B"), (999_999, "999999 B"), (10 ** 6, "1.00 MB"), (3 * 10 ** 9, "3.00 GB")]
)
def test_fmt_bytes(n, expected):
    assert fmt.fmt_bytes(n) == expected


@config.override(PRECISION=3)
def test_fmt_number():
    assert fmt.fmt_number(0.123456) == "0.123"
    assert fmt.fmt_number(52.3456) == "52.3"
