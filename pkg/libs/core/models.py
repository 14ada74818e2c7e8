from __future__ import annotations

import json
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1

# Lesion detector classes, in the published order.
LESION_CLASSES = (
    "Aortic enlargement",
    "Atelectasis",
    "Calcification",
    "Cardiomegaly",
    "Clavicle fracture",
    "Consolidation",
    "Emphysema",
    "Enlarged PA",
    "Infiltration",
    "Interstitial lung disease (ILD)",
    "Nodule/Mass",
    "Opacity",
    "Pleural effusion",
    "Pleural thickening",
    "Pneumothorax",
    "Pulmonary fibrosis",
    "Rib fracture",
)


def _naive_seconds(value: datetime) -> datetime:
    if value.tzinfo is not None:
        raise ValueError("timestamps must be timezone-naive local time")
    return value.replace(microsecond=0)


# ------------------------
# PACS side
# ------------------------


class FilterReason(str, Enum):
    ACCEPTED = "accepted"
    BAD_MODALITY = "bad-modality"
    BAD_BODY_PART = "bad-body-part"
    MISSING_TAG = "missing-tag"


class FilterDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    accepted: bool
    reason: FilterReason

    @model_validator(mode="after")
    def _reason_matches(self) -> "FilterDecision":
        if self.accepted != (self.reason is FilterReason.ACCEPTED):
            raise ValueError("reason must be 'accepted' exactly when accepted is true")
        return self


class StudyMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    patient_id: str
    study_uid: str
    study_time: datetime
    modality: str
    body_part: str
    source_uri: str = ""

    @field_validator("patient_id", "study_uid")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        v = v.strip()
        if not v:
            raise ValueError("must be non-empty")
        return v

    @field_validator("modality", "body_part")
    @classmethod
    def _upper(cls, v: str) -> str:
        return v.strip().upper()

    @field_validator("study_time")
    @classmethod
    def _naive(cls, v: datetime) -> datetime:
        return _naive_seconds(v)


# ------------------------
# AI side
# ------------------------


class AiStatus(str, Enum):
    INVALID = "Invalid"
    NORMAL = "Normal"
    ABNORMAL = "Abnormal"


class LesionBox(BaseModel):
    model_config = ConfigDict(frozen=True)

    lesion_class: str
    x_min: float = Field(ge=0.0, le=1.0)
    y_min: float = Field(ge=0.0, le=1.0)
    x_max: float = Field(ge=0.0, le=1.0)
    y_max: float = Field(ge=0.0, le=1.0)
    confidence: float = Field(default=1.0, ge=0.0, le=1.0)

    @field_validator("lesion_class")
    @classmethod
    def _known_class(cls, v: str) -> str:
        if v not in LESION_CLASSES:
            raise ValueError(f"unknown lesion class '{v}'")
        return v

    @model_validator(mode="after")
    def _ordered(self) -> "LesionBox":
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("box must satisfy x_min < x_max and y_min < y_max")
        return self


class AiResult(BaseModel):
    study_uid: str
    patient_id: str
    study_time: datetime
    status: AiStatus
    pa_probability: float = Field(ge=0.0, le=1.0)
    abnormal_probability: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    lesions: List[LesionBox] = Field(default_factory=list)

    @field_validator("study_time")
    @classmethod
    def _naive(cls, v: datetime) -> datetime:
        return _naive_seconds(v)

    @model_validator(mode="after")
    def _status_consistent(self) -> "AiResult":
        if self.status is AiStatus.INVALID:
            if self.abnormal_probability is not None or self.lesions:
                raise ValueError("Invalid results carry no abnormal probability or lesions")
        else:
            if self.abnormal_probability is None:
                raise ValueError(f"{self.status.value} results need abnormal_probability")
            if self.status is AiStatus.NORMAL and self.lesions:
                raise ValueError("Normal results carry no lesions")
        return self

    @property
    def abnormal_status(self) -> int:
        return 1 if self.status is AiStatus.ABNORMAL else 0


# ------------------------
# HIS side
# ------------------------


class RadiologyReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    service_id: str
    report_time: datetime
    description: str = ""

    @field_validator("report_time")
    @classmethod
    def _naive(cls, v: datetime) -> datetime:
        return _naive_seconds(v)


class Session(BaseModel):
    session_id: str
    patient_id: str
    check_in_time: datetime
    check_out_time: datetime
    reports: List[RadiologyReport] = Field(default_factory=list)

    @field_validator("patient_id")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        v = v.strip()
        if not v:
            raise ValueError("patient_id must be non-empty")
        return v

    @field_validator("check_in_time", "check_out_time")
    @classmethod
    def _naive(cls, v: datetime) -> datetime:
        return _naive_seconds(v)

    @model_validator(mode="after")
    def _ordered(self) -> "Session":
        if self.check_in_time > self.check_out_time:
            raise ValueError("check_in_time must not be after check_out_time")
        return self


# ------------------------
# Labels
# ------------------------


class Verdict(str, Enum):
    NORMAL = "Normal"
    ABNORMAL = "Abnormal"


class Region(str, Enum):
    CHEST_WALL = "ChestWall"
    PLEURA = "Pleura"
    LUNG = "Lung"
    MEDIASTINUM = "Mediastinum"


class ReportLabel(BaseModel):
    overall: Verdict
    region_normal: Dict[Region, bool]
    empty_description: bool = False

    @model_validator(mode="after")
    def _overall_consistent(self) -> "ReportLabel":
        if set(self.region_normal) != set(Region):
            raise ValueError("region_normal must cover all four regions")
        all_normal = all(self.region_normal.values())
        if (self.overall is Verdict.NORMAL) != all_normal:
            raise ValueError("overall is Normal exactly when every region is normal")
        return self


# ------------------------
# Matching
# ------------------------


class MatchedPair(BaseModel):
    model_config = ConfigDict(ser_json_timedelta="float")

    ai: AiResult
    report: RadiologyReport
    session_id: str
    report_index: int = Field(ge=0)
    time_delta: timedelta

    @model_validator(mode="after")
    def _delta_consistent(self) -> "MatchedPair":
        if self.time_delta != self.report.report_time - self.ai.study_time:
            raise ValueError("time_delta must equal report_time - study_time")
        return self


class UnmatchedReport(BaseModel):
    session_id: str
    report_index: int = Field(ge=0)
    patient_id: str
    report: RadiologyReport


class MatchOutcome(BaseModel):
    pairs: List[MatchedPair] = Field(default_factory=list)
    unmatched_ai: List[AiResult] = Field(default_factory=list)
    unmatched_reports: List[UnmatchedReport] = Field(default_factory=list)


# ------------------------
# Evaluation
# ------------------------


class ConfusionCounts(BaseModel):
    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


class HistogramBin(BaseModel):
    bin_low: float
    bin_high: float
    count: int = Field(ge=0)


class BootstrapSummary(BaseModel):
    mean_f1: float
    ci_low: float
    ci_high: float
    n_resamples: int = Field(ge=1)
    seed: int
    rng: str = "PCG64"
    histogram: List[HistogramBin] = Field(default_factory=list)


# ------------------------
# Run manifest
# ------------------------


class StageArtifact(BaseModel):
    id: str
    type: str
    content: Dict[str, Any]


class RunManifest(BaseModel):
    pipeline: str
    schema_version: int
    artifacts: List[StageArtifact]


def new_manifest(pipeline: str, artifacts: List[StageArtifact]) -> RunManifest:
    """Create a RunManifest stamped with the current artifact schema version."""
    return RunManifest(pipeline=pipeline, schema_version=SCHEMA_VERSION, artifacts=artifacts)


_SCHEMA_MODELS = {
    "study_meta": StudyMeta,
    "ai_result": AiResult,
    "session": Session,
    "matched_pair": MatchedPair,
    "bootstrap_summary": BootstrapSummary,
    "run_manifest": RunManifest,
}


def write_json_schemas(out_dir: Path) -> Dict[str, str]:
    """Write one <name>.schema.json per persisted artifact model into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: Dict[str, str] = {}
    for name, model in _SCHEMA_MODELS.items():
        path = out_dir / f"{name}.schema.json"
        schema = model.model_json_schema()
        schema["x-schema-version"] = SCHEMA_VERSION
        path.write_text(json.dumps(schema, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        written[name] = str(path)
    return written
