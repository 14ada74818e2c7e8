from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Protocol, Sequence, Union

from pydantic import BaseModel, Field, ValidationError

from libs.core.errors import CascadeError, InputError
from libs.core.models import SCHEMA_VERSION, AiResult, AiStatus, LesionBox, StudyMeta
from libs.pacs_ingest.cxr_filter import is_cxr

logger = logging.getLogger(__name__)

STAGE_PA = "pa-classifier"
STAGE_ABNORMALITY = "abnormality-classifier"
STAGE_DETECTOR = "lesion-detector"
STAGES = (STAGE_PA, STAGE_ABNORMALITY, STAGE_DETECTOR)


class ScorerContract(Protocol):
    """The three model roles of the cascade. Implementations must be deterministic."""

    def pa_score(self, study: StudyMeta) -> float: ...

    def abnormal_score(self, study: StudyMeta) -> float: ...

    def detect(self, study: StudyMeta) -> List[LesionBox]: ...


def decide_status(
    pa_probability: float,
    abnormal_probability: float | None,
    pa_threshold: float = 0.5,
    abn_threshold: float = 0.5,
) -> AiStatus:
    # Both gates are strict: a probability equal to the threshold fails.
    if not pa_probability > pa_threshold:
        return AiStatus.INVALID
    if abnormal_probability is None or not abnormal_probability > abn_threshold:
        return AiStatus.NORMAL
    return AiStatus.ABNORMAL


def _probability(stage: str, study_uid: str, value: Any) -> float:
    try:
        p = float(value)
    except (TypeError, ValueError) as e:
        raise CascadeError(stage, study_uid, f"non-numeric score {value!r}") from e
    if math.isnan(p) or not 0.0 <= p <= 1.0:
        raise CascadeError(stage, study_uid, f"score {p} outside [0, 1]")
    return p


def _boxes(study_uid: str, raw: Any) -> List[LesionBox]:
    try:
        return [b if isinstance(b, LesionBox) else LesionBox.model_validate(b) for b in raw]
    except (TypeError, ValidationError) as e:
        raise CascadeError(STAGE_DETECTOR, study_uid, f"invalid detector output: {e}") from e


def run_cascade(
    meta: StudyMeta,
    scorers: ScorerContract,
    pa_threshold: float = 0.5,
    abn_threshold: float = 0.5,
) -> AiResult:
    """Gate a study through PA check, abnormality check and lesion detection.

    A later stage is only invoked when the earlier gate passes. Any scorer
    exception surfaces as CascadeError naming the stage.
    """
    decision = is_cxr(meta)
    if not decision.accepted:
        raise InputError(
            f"Study rejected by CXR filter ({decision.reason.value})", record=meta.study_uid
        )
    uid = meta.study_uid
    base = {"study_uid": uid, "patient_id": meta.patient_id, "study_time": meta.study_time}

    try:
        raw_pa = scorers.pa_score(meta)
    except Exception as e:  # noqa: BLE001
        raise CascadeError(STAGE_PA, uid, str(e)) from e
    pa = _probability(STAGE_PA, uid, raw_pa)
    if decide_status(pa, None, pa_threshold, abn_threshold) is AiStatus.INVALID:
        return AiResult(**base, status=AiStatus.INVALID, pa_probability=pa)

    try:
        raw_abn = scorers.abnormal_score(meta)
    except Exception as e:  # noqa: BLE001
        raise CascadeError(STAGE_ABNORMALITY, uid, str(e)) from e
    abn = _probability(STAGE_ABNORMALITY, uid, raw_abn)
    status = decide_status(pa, abn, pa_threshold, abn_threshold)
    if status is AiStatus.NORMAL:
        return AiResult(**base, status=status, pa_probability=pa, abnormal_probability=abn)

    try:
        raw_boxes = scorers.detect(meta)
    except Exception as e:  # noqa: BLE001
        raise CascadeError(STAGE_DETECTOR, uid, str(e)) from e
    return AiResult(
        **base,
        status=AiStatus.ABNORMAL,
        pa_probability=pa,
        abnormal_probability=abn,
        lesions=_boxes(uid, raw_boxes),
    )


class CascadeFailure(BaseModel):
    study_uid: str
    stage: str
    error: str


class CascadeBatch(BaseModel):
    results: List[AiResult] = Field(default_factory=list)
    failures: List[CascadeFailure] = Field(default_factory=list)

    def tallies(self) -> Dict[str, int]:
        counts = {s.value.lower(): 0 for s in AiStatus}
        for r in self.results:
            counts[r.status.value.lower()] += 1
        return {
            "total": len(self.results) + len(self.failures),
            **counts,
            "errored": len(self.failures),
        }


def run_cascade_batch(
    metas: Sequence[StudyMeta],
    scorers: ScorerContract,
    pa_threshold: float = 0.5,
    abn_threshold: float = 0.5,
    workers: int = 1,
) -> CascadeBatch:
    """Run the cascade over many studies; failures are collected, never scored as Normal."""

    def one(meta: StudyMeta) -> Union[AiResult, CascadeFailure]:
        try:
            return run_cascade(meta, scorers, pa_threshold, abn_threshold)
        except CascadeError as e:
            logger.warning("Cascade failed for %s at %s: %s", e.study_uid, e.stage, e.message)
            return CascadeFailure(study_uid=e.study_uid, stage=e.stage, error=e.message)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, metas))
    else:
        outcomes = [one(m) for m in metas]

    batch = CascadeBatch()
    for item in outcomes:
        if isinstance(item, CascadeFailure):
            batch.failures.append(item)
        else:
            batch.results.append(item)
    logger.info("Cascade tallies: %s", batch.tallies())
    return batch


def dump_result(result: AiResult) -> str:
    """One JSON-lines record carrying ABNORMAL_STATUS alongside the status string."""
    record: Dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    record.update(result.model_dump(mode="json"))
    record["ABNORMAL_STATUS"] = result.abnormal_status
    return json.dumps(record, ensure_ascii=False)


def load_result(line: str) -> AiResult:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise InputError(f"Malformed AI result line: {e.msg}") from e
    if not isinstance(obj, dict):
        raise InputError("AI result line must be a JSON object")
    flag = obj.pop("ABNORMAL_STATUS", None)
    obj.pop("schema_version", None)
    try:
        result = AiResult.model_validate(obj)
    except ValidationError as e:
        raise InputError(f"Invalid AI result: {e}", record=obj.get("study_uid")) from e
    if flag is not None and int(flag) != result.abnormal_status:
        raise InputError(
            f"ABNORMAL_STATUS={flag} disagrees with status {result.status.value}",
            record=result.study_uid,
        )
    return result
