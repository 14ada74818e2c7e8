from libs.core.models import (
    LESION_CLASSES,
    SCHEMA_VERSION,
    AiResult,
    AiStatus,
    BootstrapSummary,
    ConfusionCounts,
    FilterDecision,
    FilterReason,
    HistogramBin,
    LesionBox,
    MatchedPair,
    MatchOutcome,
    RadiologyReport,
    Region,
    ReportLabel,
    RunManifest,
    Session,
    StageArtifact,
    StudyMeta,
    UnmatchedReport,
    Verdict,
    new_manifest,
    write_json_schemas,
)

__all__ = [
    "LESION_CLASSES",
    "SCHEMA_VERSION",
    "AiResult",
    "AiStatus",
    "BootstrapSummary",
    "ConfusionCounts",
    "FilterDecision",
    "FilterReason",
    "HistogramBin",
    "LesionBox",
    "MatchedPair",
    "MatchOutcome",
    "RadiologyReport",
    "Region",
    "ReportLabel",
    "RunManifest",
    "Session",
    "StageArtifact",
    "StudyMeta",
    "UnmatchedReport",
    "Verdict",
    "new_manifest",
    "write_json_schemas",
]
