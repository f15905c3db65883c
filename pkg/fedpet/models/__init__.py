#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# models/__init__.py

"""
See |models.records| and |models.plan| for documentation.

Attributes:
    AttackResult: Alias for :class:`fedpet.models.records.AttackResult`.
    CostReport: Alias for :class:`fedpet.models.records.CostReport`.
    PartitionPlan: Alias for :class:`fedpet.models.plan.PartitionPlan`.
    RoundRecord: Alias for :class:`fedpet.models.records.RoundRecord`.
"""

# pylint: disable=unused-import

from .plan import PartitionPlan
from .records import ROUND_RECORD_KEYS, AttackResult, CostReport, RoundRecord
