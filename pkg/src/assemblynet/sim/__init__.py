"""Deterministic discrete-event simulation of a digital assembly."""

from assemblynet.sim.audit import AuditMismatch, AuditReport, check_invariants, derive_metrics, replay_audit
from assemblynet.sim.config import AdversarySpec, InvalidScenario, ScenarioConfig, load_scenario, parse_scenario
from assemblynet.sim.engine import Trace, run
from assemblynet.sim.metrics import Metrics

__all__ = [
    "AdversarySpec",
    "AuditMismatch",
    "AuditReport",
    "InvalidScenario",
    "Metrics",
    "ScenarioConfig",
    "Trace",
    "check_invariants",
    "derive_metrics",
    "load_scenario",
    "parse_scenario",
    "replay_audit",
    "run",
]
