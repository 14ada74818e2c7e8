from __future__ import annotations

from datetime import datetime
from pathlib import Path
from typing import List, Optional

import pydicom

from libs.core.models import (
    AiResult,
    AiStatus,
    LesionBox,
    RadiologyReport,
    Session,
    StudyMeta,
)
from libs.synth import study_dataset

T0 = datetime(2020, 11, 15, 9, 30)


def make_meta(
    uid: str = "1.2.3.1",
    patient_id: str = "P001",
    when: datetime = T0,
    modality: str = "DX",
    body_part: str = "CHEST",
) -> StudyMeta:
    return StudyMeta(
        patient_id=patient_id,
        study_uid=uid,
        study_time=when,
        modality=modality,
        body_part=body_part,
    )


def make_ai(
    uid: str = "1.2.3.1",
    patient_id: str = "P001",
    when: datetime = T0,
    status: AiStatus = AiStatus.NORMAL,
) -> AiResult:
    if status is AiStatus.INVALID:
        return AiResult(
            study_uid=uid, patient_id=patient_id, study_time=when, status=status, pa_probability=0.2
        )
    abnormal = status is AiStatus.ABNORMAL
    return AiResult(
        study_uid=uid,
        patient_id=patient_id,
        study_time=when,
        status=status,
        pa_probability=0.9,
        abnormal_probability=0.8 if abnormal else 0.2,
        lesions=[box()] if abnormal else [],
    )


def make_session(
    session_id: str = "S001",
    patient_id: str = "P001",
    check_in: datetime = datetime(2020, 11, 15, 9, 0),
    check_out: datetime = datetime(2020, 11, 15, 11, 0),
    report_times: Optional[List[datetime]] = None,
    service_id: str = "CXR",
    description: str = "",
) -> Session:
    times = report_times if report_times is not None else [datetime(2020, 11, 15, 10, 0)]
    return Session(
        session_id=session_id,
        patient_id=patient_id,
        check_in_time=check_in,
        check_out_time=check_out,
        reports=[
            RadiologyReport(service_id=service_id, report_time=t, description=description)
            for t in times
        ],
    )


def box(
    x_min: float = 0.1,
    y_min: float = 0.1,
    x_max: float = 0.4,
    y_max: float = 0.4,
    confidence: float = 1.0,
    lesion_class: str = "Nodule/Mass",
) -> LesionBox:
    return LesionBox(
        lesion_class=lesion_class,
        x_min=x_min,
        y_min=y_min,
        x_max=x_max,
        y_max=y_max,
        confidence=confidence,
    )


def write_dicom(path: Path, meta: StudyMeta, pixel_bytes: int = 0, **overrides) -> Path:
    """Part-10 file for `meta`; overrides set (value) or delete (None) attributes."""
    ds = study_dataset(meta, seed=0, pixel_bytes=pixel_bytes)
    for keyword, value in overrides.items():
        if keyword == "TransferSyntaxUID":
            ds.file_meta.TransferSyntaxUID = value
        elif value is None:
            delattr(ds, keyword)
        else:
            setattr(ds, keyword, value)
    path.parent.mkdir(parents=True, exist_ok=True)
    pydicom.dcmwrite(path, ds, enforce_file_format=True)
    return path
