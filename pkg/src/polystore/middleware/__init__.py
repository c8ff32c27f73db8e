"""Planner, monitor, migrator driver and executor."""

from .executor import ExecutionResult, execute_plan
from .monitor import (MonitorRecord, MonitorStore, UsageSnapshot, monitor_lookup,
                      usage_divergence)
from .plan import CombineRemainder, ExecuteContainer, Migrate, QueryPlan, plan_enumerate, validate_plan
from .signature import Signature, signature_of
from .system import Polystore, QueryOutcome, QueryReport

__all__ = [
    "CombineRemainder", "ExecuteContainer", "ExecutionResult", "Migrate", "MonitorRecord",
    "MonitorStore", "Polystore", "QueryOutcome", "QueryPlan", "QueryReport", "Signature",
    "UsageSnapshot", "execute_plan", "monitor_lookup", "plan_enumerate", "signature_of",
    "usage_divergence", "validate_plan",
]
