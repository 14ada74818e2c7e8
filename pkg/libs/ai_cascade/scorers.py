from __future__ import annotations

import hashlib
import json
import logging
from fnmatch import fnmatchcase
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from libs.ai_cascade.cascade import STAGE_ABNORMALITY, STAGE_DETECTOR, STAGE_PA
from libs.core.errors import ConfigError
from libs.core.models import LESION_CLASSES, LesionBox, StudyMeta

logger = logging.getLogger(__name__)

StageName = Literal["pa-classifier", "abnormality-classifier", "lesion-detector"]


class StubEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pa: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    abn: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    lesions: Optional[List[LesionBox]] = None
    fail_stage: Optional[StageName] = None


class StubPattern(StubEntry):
    match: str


class StubScorerConfig(BaseModel):
    """Fixed scores per study uid or uid glob, with a seeded-hash fallback."""

    model_config = ConfigDict(extra="forbid")

    abnormal_rate: float = Field(default=0.276, ge=0.0, le=1.0)
    invalid_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    studies: Dict[str, StubEntry] = Field(default_factory=dict)
    patterns: List[StubPattern] = Field(default_factory=list)


def load_scorer_config(path: Path) -> StubScorerConfig:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read scorer config: {e}", record=str(path)) from e
    return _validate(data, str(path))


def _validate(data: Any, record: Optional[str] = None) -> StubScorerConfig:
    try:
        return StubScorerConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Malformed scorer config: {e}", record=record) from e


class StubScorer:
    """Deterministic stand-in for the three trained models.

    Holds no mutable state after construction, so concurrent calls are safe.
    """

    def __init__(self, config: StubScorerConfig, seed: int) -> None:
        self.config = config
        self.seed = seed

    def _entry(self, study_uid: str) -> Optional[StubEntry]:
        entry = self.config.studies.get(study_uid)
        if entry is not None:
            return entry
        for pattern in self.config.patterns:
            if fnmatchcase(study_uid, pattern.match):
                return pattern
        return None

    def _unit(self, stage: str, study_uid: str, salt: int = 0) -> float:
        key = f"{self.seed}:{stage}:{study_uid}:{salt}".encode("utf-8")
        digest = hashlib.blake2b(key, digest_size=8).digest()
        return int.from_bytes(digest, "big") / 2**64

    @staticmethod
    def _maybe_fail(entry: Optional[StubEntry], stage: str) -> None:
        if entry is not None and entry.fail_stage == stage:
            raise RuntimeError(f"simulated {stage} failure")

    def pa_score(self, study: StudyMeta) -> float:
        entry = self._entry(study.study_uid)
        self._maybe_fail(entry, STAGE_PA)
        if entry is not None and entry.pa is not None:
            return entry.pa
        u = self._unit(STAGE_PA, study.study_uid)
        rate = self.config.invalid_rate
        if u < rate:
            return round(0.5 * u / rate, 6)
        return round(0.51 + 0.49 * (u - rate) / (1.0 - rate), 6)

    def abnormal_score(self, study: StudyMeta) -> float:
        entry = self._entry(study.study_uid)
        self._maybe_fail(entry, STAGE_ABNORMALITY)
        if entry is not None and entry.abn is not None:
            return entry.abn
        v = self._unit(STAGE_ABNORMALITY, study.study_uid)
        rate = self.config.abnormal_rate
        if v < rate:
            return round(0.51 + 0.49 * v / rate, 6)
        return round(0.49 * (v - rate) / (1.0 - rate), 6)

    def detect(self, study: StudyMeta) -> List[LesionBox]:
        entry = self._entry(study.study_uid)
        self._maybe_fail(entry, STAGE_DETECTOR)
        if entry is not None and entry.lesions is not None:
            return list(entry.lesions)
        uid = study.study_uid
        u = [self._unit(STAGE_DETECTOR, uid, salt) for salt in range(6)]
        x_min = 0.05 + 0.5 * u[1]
        y_min = 0.05 + 0.5 * u[2]
        return [
            LesionBox(
                lesion_class=LESION_CLASSES[int(u[0] * len(LESION_CLASSES))],
                x_min=round(x_min, 4),
                y_min=round(y_min, 4),
                x_max=round(min(x_min + 0.05 + 0.35 * u[3], 1.0), 4),
                y_max=round(min(y_min + 0.05 + 0.35 * u[4], 1.0), 4),
                confidence=round(0.4 + 0.6 * u[5], 4),
            )
        ]


def stub_scorer(
    config: Union[StubScorerConfig, Mapping[str, Any], None] = None, seed: int = 0
) -> StubScorer:
    """Build a deterministic ScorerContract; identical (config, seed) give identical scores."""
    if config is None:
        cfg = StubScorerConfig()
    elif isinstance(config, StubScorerConfig):
        cfg = config
    elif isinstance(config, Mapping):
        cfg = _validate(dict(config))
    else:
        raise ConfigError(f"Scorer config must be a mapping, got {type(config).__name__}")
    logger.debug(
        "Stub scorer: %d explicit studies, %d patterns, seed=%d",
        len(cfg.studies),
        len(cfg.patterns),
        seed,
    )
    return StubScorer(cfg, seed)
