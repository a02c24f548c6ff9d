from .audit import AuditReport, Violation, audit_leakage
from .ordeq import brute_force_recovery, candidate_count
from .session import (
    Direction, Faults, Message, PartyOne, PartyRole, PartyTwo, Permutation, Protocol, Session,
    SessionConfig, StepTag, Transcript, invert, permute, run_session,
)

__all__ = [
    "AuditReport", "Direction", "Faults", "Message", "PartyOne", "PartyRole", "PartyTwo",
    "Permutation", "Protocol", "Session", "SessionConfig", "StepTag", "Transcript", "Violation",
    "audit_leakage", "brute_force_recovery", "candidate_count", "invert", "permute", "run_session",
]
