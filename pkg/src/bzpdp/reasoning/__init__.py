from ..intake import RiskAttribute
from .context import (
    AgentContext,
    DecisionRecord,
    Obligation,
    Request,
    RequestContext,
    build_context,
    intent_alignment,
)
from .detectors import (
    detect_exfiltration_pattern,
    detect_knowledge_inconsistency,
    detect_peer_volume_anomaly,
    detect_rapid_succession,
    detect_scope_deviation,
    run_detectors,
)
from .engine import Engine, InvestigationReport, decide_action
from .lattice import BOTTOM, SEVERITY, Combined, Judgement, combine

__all__ = [
    "AgentContext", "BOTTOM", "Combined", "DecisionRecord", "Engine", "InvestigationReport",
    "Judgement", "Obligation", "Request", "RequestContext", "RiskAttribute", "SEVERITY",
    "build_context", "combine", "decide_action", "detect_exfiltration_pattern",
    "detect_knowledge_inconsistency", "detect_peer_volume_anomaly", "detect_rapid_succession",
    "detect_scope_deviation", "intent_alignment", "run_detectors",
]
