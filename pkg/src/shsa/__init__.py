"""Self-healing structural adaptation for networked sensor systems."""

__version__ = "0.1.0"

from .errors import (
    ConfigSyntaxError,
    DiagnosisError,
    EvaluationError,
    ExpressionError,
    ExpressionSyntaxError,
    FaultInjectionError,
    KnowledgeBaseError,
    MalformedSubstitutionError,
    MonitorSetupError,
    NoFailingRunsError,
    NumericalGuardError,
    ScenarioError,
    ShsaError,
    SubstitutionError,
    UnknownVariableError,
)
from .expr import Expression, compile_expression
from .knowledge_base import (
    Itom,
    ItomRegistry,
    ItomStatus,
    KnowledgeBase,
    Relation,
    Variable,
    eval_relation,
    provided_variables,
    validate_kb,
)
from .substitution import (
    SearchConfig,
    Substitute,
    Substitution,
    best_substitution,
    enumerate_substitutions,
    instantiate_substitute,
    is_valid,
    structure_violations,
    substitution_cost,
)
from .monitoring import (
    BranchStatus,
    ConfidenceReport,
    Monitor,
    MonitorSpec,
    agreement_confidence,
    classify_failed,
    majority_vote,
    monitor_step,
    setup_monitor,
)
from .diagnosis import (
    ChannelClass,
    ChannelStats,
    Ranking,
    Spectrum,
    build_spectrum,
    comm_behavior_classify,
    ochiai,
    sfl_rank,
    tarantula,
)
from .config import bundled, parse_kb_file, serialize_kb

__all__ = [
    "ConfigSyntaxError",
    "DiagnosisError",
    "EvaluationError",
    "ExpressionError",
    "ExpressionSyntaxError",
    "FaultInjectionError",
    "KnowledgeBaseError",
    "MalformedSubstitutionError",
    "MonitorSetupError",
    "NoFailingRunsError",
    "NumericalGuardError",
    "ScenarioError",
    "ShsaError",
    "SubstitutionError",
    "UnknownVariableError",
    "Expression",
    "compile_expression",
    "Itom",
    "ItomRegistry",
    "ItomStatus",
    "KnowledgeBase",
    "Relation",
    "Variable",
    "eval_relation",
    "provided_variables",
    "validate_kb",
    "SearchConfig",
    "Substitute",
    "Substitution",
    "best_substitution",
    "enumerate_substitutions",
    "instantiate_substitute",
    "is_valid",
    "structure_violations",
    "substitution_cost",
    "BranchStatus",
    "ConfidenceReport",
    "Monitor",
    "MonitorSpec",
    "agreement_confidence",
    "classify_failed",
    "majority_vote",
    "monitor_step",
    "setup_monitor",
    "ChannelClass",
    "ChannelStats",
    "Ranking",
    "Spectrum",
    "build_spectrum",
    "comm_behavior_classify",
    "ochiai",
    "sfl_rank",
    "tarantula",
    "bundled",
    "parse_kb_file",
    "serialize_kb",
]
