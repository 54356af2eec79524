"""Continuous distributed tracking of approximate election winners."""

from .audit import AuditSummary, audit_declarations, audit_transcript
from .election import Election, ElectionError, Rule, Tally, evaluate_rule
from .harness import StreamEvent, Transcript, run_stream
from .oracle import eps_winner_verdict, is_eps_winner_exact, is_eps_winner_witness
from .trackers import TrackerConfig, make_protocol
from .workloads import AssignmentPolicy, GeneratorSpec, generate

__version__ = "0.1.0"

__all__ = [
    "AssignmentPolicy", "AuditSummary", "Election", "ElectionError", "GeneratorSpec", "Rule",
    "StreamEvent", "Tally", "TrackerConfig", "Transcript", "audit_declarations",
    "audit_transcript", "eps_winner_verdict", "evaluate_rule", "generate", "is_eps_winner_exact",
    "is_eps_winner_witness", "make_protocol", "run_stream",
]
