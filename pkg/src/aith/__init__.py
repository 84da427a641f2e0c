"""AITH v5.1 continuous delegation: sign once, enforce continuously.

A human principal signs a Delegation Certificate once; every subsequent
agent operation passes a deterministic six-check boundary pipeline with
no cryptography on the hot path. Escalation routes edge cases to the
principal with an auto-deny timeout, revocation is pushed to every
registered target in under a second, and a three-tier hash chain keeps a
tamper-evident record of decisions, confirmations, and executions.
"""

from .certificate import (
    CertCheck,
    DelegationCertificate,
    DelegationLevel,
    TargetEndpoint,
    canonical_bytes,
    from_wire,
    issue,
    to_text,
    to_wire,
    verify_certificate,
)
from .chain import Chain, ChainEntry, ChainSet, Tier
from .crypto import (
    SUITE_ML_DSA_87,
    SUITE_SIMULATED_MAC,
    CryptoProvider,
    KeyPair,
    register_mldsa_backend,
    sha256,
)
from .engine import BoundaryDecision, BoundaryEngine, Verdict
from .evidence import extract_evidence, verify_evidence
from .policy import (
    AnomalyConfig,
    Constraint,
    ConstraintAction,
    ConstraintKind,
    EscalationTrigger,
    Operation,
    TriggerKind,
    eval_constraint,
    eval_trigger,
)
from .revocation import (
    PropagationReport,
    RevocationMessage,
    RevocationMode,
    apply_revocation,
    build_revocation,
    check_tightening,
    dispatch_revocation,
)
from .session import (
    EscalationTicket,
    ProtocolState,
    ResponseDecision,
    Session,
    SessionEvent,
    TicketStatus,
    transition,
)

__version__ = "0.1.0"
PROTOCOL_VERSION = "5.1"
