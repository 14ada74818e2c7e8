from __future__ import annotations

import json
import logging
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import pydicom
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydicom.dataset import Dataset, FileMetaDataset
from pydicom.uid import ExplicitVRLittleEndian, generate_uid

from libs.ai_cascade.scorers import StubEntry, StubScorerConfig
from libs.core.errors import ConfigError, InputError
from libs.core.models import (
    ConfusionCounts,
    RadiologyReport,
    Region,
    RunManifest,
    Session,
    StageArtifact,
    StudyMeta,
    new_manifest,
)
from libs.his_parser.parser import serialize_session
from libs.report_labeler.labeler import load_templates

logger = logging.getLogger(__name__)

# Digital X-Ray Image Storage - For Presentation
DX_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.1.1"

EPOCH = datetime(2020, 11, 1)
VISIT_SPACING = timedelta(days=3)
DECOY_OVERSHOOT = timedelta(hours=6)
MATCH_WINDOW = timedelta(hours=24)

LESION_SENTENCES: Dict[Region, List[str]] = {
    Region.CHEST_WALL: ["Gãy cung sau xương sườn 5 bên phải", "Gãy xương đòn trái"],
    Region.PLEURA: ["Tràn dịch màng phổi phải lượng ít", "Dày dính màng phổi đáy trái"],
    Region.LUNG: ["Đám mờ thùy trên phổi phải", "Nốt mờ đường kính 1cm đáy phổi trái"],
    Region.MEDIASTINUM: ["Bóng tim to, chỉ số tim ngực 0,6", "Quai động mạch chủ giãn"],
}
OTHER_SERVICE_DESCRIPTION = "Xét nghiệm công thức máu"

Cell = Literal["tp", "fp", "fn", "tn"]
Violation = Literal["patient-id", "check-window", "report-window"]
_DECOY_CYCLE: Tuple[Violation, ...] = ("patient-id", "check-window", "report-window")


class TimeWindowProfile(BaseModel):
    """Report delay (report_time - study_time) drawn uniformly from [min, max] hours."""

    model_config = ConfigDict(extra="forbid")

    min_delay_hours: float = Field(default=0.0, ge=-24.0, le=24.0)
    max_delay_hours: float = Field(default=24.0, ge=-24.0, le=24.0)

    @model_validator(mode="after")
    def _ordered(self) -> "TimeWindowProfile":
        if self.min_delay_hours > self.max_delay_hours:
            raise ValueError("min_delay_hours must not exceed max_delay_hours")
        if self.min_delay_hours == 0.0 and self.max_delay_hours == 0.0:
            raise ValueError("use zero_delay_fraction for same-time reports")
        return self


class CorpusSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_studies: int = Field(ge=0)
    target_counts: ConfusionCounts
    unmatched_ai: int = Field(default=0, ge=0)
    unmatched_reports: int = Field(default=0, ge=0)
    invalid_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    seed: int = 0
    time_window_profile: TimeWindowProfile = Field(default_factory=TimeWindowProfile)
    non_cxr_studies: int = Field(default=0, ge=0)
    repeat_patients: int = Field(default=0, ge=0)
    empty_descriptions: int = Field(default=0, ge=0)
    other_service_reports: int = Field(default=0, ge=0)
    zero_delay_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    service_id: str = "CXR"
    other_service_id: str = "LAB-01"
    output_format: Literal["dicom", "dicomweb"] = "dicom"
    pixel_bytes: int = Field(default=16, ge=0)

    @property
    def n_invalid(self) -> int:
        return round(self.invalid_rate * self.n_studies)

    @model_validator(mode="after")
    def _consistent(self) -> "CorpusSpec":
        matched = self.target_counts.total
        expected = matched + self.unmatched_ai + self.n_invalid
        if self.n_studies != expected:
            raise ValueError(
                f"n_studies={self.n_studies} but matched ({matched}) + unmatched_ai "
                f"({self.unmatched_ai}) + invalid ({self.n_invalid}) = {expected}"
            )
        if self.empty_descriptions > self.target_counts.tp + self.target_counts.fn:
            raise ValueError("empty_descriptions cannot exceed abnormal reports (tp + fn)")
        if self.repeat_patients > matched // 2:
            raise ValueError("repeat_patients cannot exceed half the matched studies")
        if self.other_service_reports and matched == 0:
            raise ValueError("other_service_reports need at least one matched session")
        if not self.service_id.strip() or self.service_id == self.other_service_id:
            raise ValueError("service_id must be non-empty and differ from other_service_id")
        return self

    @classmethod
    def from_counts(
        cls,
        target_counts: ConfusionCounts,
        unmatched_ai: int = 0,
        invalid_rate: float = 0.0,
        **kwargs: Any,
    ) -> "CorpusSpec":
        """Build a CorpusSpec whose n_studies is derived from the counts and the invalid rate."""
        base = target_counts.total + unmatched_ai
        n = base
        while n - base != round(invalid_rate * n):
            n += 1
        return cls(
            n_studies=n,
            target_counts=target_counts,
            unmatched_ai=unmatched_ai,
            invalid_rate=invalid_rate,
            **kwargs,
        )


def load_corpus_spec(path: Path) -> CorpusSpec:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read corpus spec: {e}", record=str(path)) from e
    try:
        return CorpusSpec.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Inconsistent corpus spec: {e}", record=str(path)) from e


class ExpectedOutcome(BaseModel):
    counts: ConfusionCounts
    unmatched_ai: int
    unmatched_reports: int
    invalid: int
    rejected: int
    zero_delay_pairs: int
    empty_descriptions: int


class SynthStudy(BaseModel):
    meta: StudyMeta
    outcome: str
    violates: Optional[Violation] = None


class SynthCorpus(BaseModel):
    spec: CorpusSpec
    studies: List[SynthStudy]
    sessions: List[Session]
    scorer_config: StubScorerConfig
    expected: ExpectedOutcome
    report_outcomes: Dict[str, List[Dict[str, Any]]]


class _Builder:
    def __init__(self, spec: CorpusSpec) -> None:
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.templates = load_templates()
        self.studies: List[SynthStudy] = []
        self.sessions: List[Session] = []
        self.entries: Dict[str, StubEntry] = {}
        self.report_outcomes: Dict[str, List[Dict[str, Any]]] = {}
        self.slot = 0

    # ---- ids and times ----

    def _next_slot(self) -> Tuple[int, datetime]:
        slot = self.slot
        self.slot += 1
        offset = int(self.rng.integers(7 * 3600, 17 * 3600))
        return slot, EPOCH + slot * VISIT_SPACING + timedelta(seconds=offset)

    def _uid(self, kind: str, slot: int) -> str:
        return generate_uid(entropy_srcs=[str(self.spec.seed), kind, str(slot)])

    def _patient(self, slot: int) -> str:
        return f"PT{slot:05d}"

    def _delay(self) -> timedelta:
        profile = self.spec.time_window_profile
        hours = self.rng.uniform(profile.min_delay_hours, profile.max_delay_hours)
        seconds = int(round(hours * 3600))
        if abs(seconds) < 60:
            seconds = 60 if profile.max_delay_hours > 0 else -60
        return timedelta(seconds=seconds)

    # ---- report text ----

    def _sentence(self, text: str) -> str:
        return text[:1].upper() + text[1:] + "."

    def normal_description(self) -> str:
        parts = []
        for region in Region:
            options = self.templates.for_region(region)
            parts.append(self._sentence(options[int(self.rng.integers(len(options)))]))
        return self._join(parts)

    def abnormal_description(self) -> str:
        regions = list(Region)
        lesion_region = regions[int(self.rng.integers(len(regions)))]
        parts = []
        for region in regions:
            if region is lesion_region:
                options = LESION_SENTENCES[region]
                parts.append(options[int(self.rng.integers(len(options)))] + ".")
            else:
                options = self.templates.for_region(region)
                parts.append(self._sentence(options[int(self.rng.integers(len(options)))]))
        return self._join(parts)

    def _join(self, parts: List[str]) -> str:
        return ("\n" if self.rng.random() < 0.5 else " ").join(parts)

    # ---- records ----

    def _study(
        self, slot: int, patient_id: str, when: datetime, outcome: str, **kw: Any
    ) -> StudyMeta:
        meta = StudyMeta(
            patient_id=patient_id,
            study_uid=self._uid("study", slot),
            study_time=when,
            modality=kw.pop("modality", "DX"),
            body_part=kw.pop("body_part", "CHEST"),
        )
        self.studies.append(SynthStudy(meta=meta, outcome=outcome, **kw))
        return meta

    def _score(self, meta: StudyMeta, abnormal: bool) -> None:
        pa = round(float(self.rng.uniform(0.56, 0.99)), 4)
        if abnormal:
            abn = round(float(self.rng.uniform(0.56, 0.99)), 4)
        else:
            abn = round(float(self.rng.uniform(0.01, 0.44)), 4)
        self.entries[meta.study_uid] = StubEntry(pa=pa, abn=abn)

    def _session(
        self,
        slot: int,
        patient_id: str,
        check_in: datetime,
        check_out: datetime,
        reports: List[Tuple[RadiologyReport, Dict[str, Any]]],
    ) -> None:
        session_id = f"S{slot:05d}"
        self.sessions.append(
            Session(
                session_id=session_id,
                patient_id=patient_id,
                check_in_time=check_in,
                check_out_time=check_out,
                reports=[r for r, _ in reports],
            )
        )
        self.report_outcomes[session_id] = [
            {"index": i, "service_id": r.service_id, **info} for i, (r, info) in enumerate(reports)
        ]

    def _report(self, when: datetime, description: str) -> RadiologyReport:
        return RadiologyReport(
            service_id=self.spec.service_id, report_time=when, description=description
        )

    def matched(self) -> int:
        c = self.spec.target_counts
        cells: List[Cell] = ["tp"] * c.tp + ["fp"] * c.fp + ["fn"] * c.fn + ["tn"] * c.tn
        order = self.rng.permutation(len(cells))
        cells = [cells[i] for i in order]

        m = len(cells)
        n_zero = round(self.spec.zero_delay_fraction * m)
        zero = set(int(i) for i in self.rng.choice(m, size=n_zero, replace=False)) if m else set()
        abnormal_truth = [i for i, cell in enumerate(cells) if cell in ("tp", "fn")]
        empty = set(abnormal_truth[: self.spec.empty_descriptions])

        patients: List[str] = []
        for i, cell in enumerate(cells):
            slot, when = self._next_slot()
            repeat_of = i - (m - self.spec.repeat_patients)
            patient_id = patients[repeat_of] if repeat_of >= 0 else self._patient(slot)
            patients.append(patient_id)

            meta = self._study(slot, patient_id, when, cell)
            self._score(meta, abnormal=cell in ("tp", "fp"))
            delay = timedelta(0) if i in zero else self._delay()
            report_time = when + delay
            if i in empty:
                description = ""
            elif cell in ("tp", "fn"):
                description = self.abnormal_description()
            else:
                description = self.normal_description()
            reports = [
                (self._report(report_time, description), {"outcome": "matched", "pair": cell})
            ]
            self._session(
                slot,
                patient_id,
                min(when, report_time) - timedelta(minutes=30),
                max(when, report_time) + timedelta(hours=1),
                reports,
            )
        return n_zero

    def decoys(self) -> int:
        """Unmatched AI results; returns how many reports they brought along."""
        used_reports = 0
        for i in range(self.spec.unmatched_ai):
            violation = _DECOY_CYCLE[i % len(_DECOY_CYCLE)]
            if violation != "patient-id" and used_reports >= self.spec.unmatched_reports:
                violation = "patient-id"
            slot, when = self._next_slot()
            patient_id = self._patient(slot)
            meta = self._study(slot, patient_id, when, "unmatched-ai", violates=violation)
            self._score(meta, abnormal=bool(self.rng.random() < 0.3))
            info = {"outcome": "unmatched-report", "violates": violation}
            if violation == "check-window":
                report = self._report(when + timedelta(hours=3), self.normal_description())
                self._session(
                    slot, patient_id, when + timedelta(hours=2), when + timedelta(hours=6),
                    [(report, info)],
                )
                used_reports += 1
            elif violation == "report-window":
                late = when + MATCH_WINDOW + DECOY_OVERSHOOT
                report = self._report(late, self.normal_description())
                self._session(
                    slot, patient_id, when - timedelta(hours=1), late + timedelta(hours=10),
                    [(report, info)],
                )
                used_reports += 1
        return used_reports

    def lone_reports(self, count: int) -> None:
        for _ in range(count):
            slot, when = self._next_slot()
            report = self._report(when + timedelta(hours=1), self.normal_description())
            info = {"outcome": "unmatched-report", "violates": "patient-id"}
            self._session(
                slot, self._patient(slot), when, when + timedelta(hours=2), [(report, info)]
            )

    def invalid(self) -> None:
        for _ in range(self.spec.n_invalid):
            slot, when = self._next_slot()
            meta = self._study(slot, self._patient(slot), when, "invalid")
            self.entries[meta.study_uid] = StubEntry(pa=0.3)

    def rejected(self) -> None:
        for i in range(self.spec.non_cxr_studies):
            slot, when = self._next_slot()
            if i % 2 == 0:
                self._study(slot, self._patient(slot), when, "rejected", modality="CT")
            else:
                self._study(slot, self._patient(slot), when, "rejected", body_part="ABDOMEN")

    def other_service(self) -> None:
        for i in range(self.spec.other_service_reports):
            session = self.sessions[i % self.spec.target_counts.total]
            report = RadiologyReport(
                service_id=self.spec.other_service_id,
                report_time=session.check_in_time + timedelta(minutes=10),
                description=OTHER_SERVICE_DESCRIPTION,
            )
            session.reports.append(report)
            self.report_outcomes[session.session_id].append(
                {
                    "index": len(session.reports) - 1,
                    "service_id": report.service_id,
                    "outcome": "other-service",
                }
            )


def build_corpus(spec: CorpusSpec) -> SynthCorpus:
    """Generate the corpus in memory; identical specs give identical corpora."""
    b = _Builder(spec)
    zero_delay = b.matched()
    paired_reports = b.decoys()
    if paired_reports > spec.unmatched_reports:
        raise InputError("decoys produced more unmatched reports than requested")
    b.lone_reports(spec.unmatched_reports - paired_reports)
    b.invalid()
    b.rejected()
    b.other_service()

    expected = ExpectedOutcome(
        counts=spec.target_counts,
        unmatched_ai=spec.unmatched_ai,
        unmatched_reports=spec.unmatched_reports,
        invalid=spec.n_invalid,
        rejected=spec.non_cxr_studies,
        zero_delay_pairs=zero_delay,
        empty_descriptions=spec.empty_descriptions,
    )
    logger.info(
        "Synth corpus: %d studies (%d non-CXR), %d sessions",
        len(b.studies),
        spec.non_cxr_studies,
        len(b.sessions),
    )
    return SynthCorpus(
        spec=spec,
        studies=b.studies,
        sessions=b.sessions,
        scorer_config=StubScorerConfig(abnormal_rate=0.0, studies=b.entries),
        expected=expected,
        report_outcomes=b.report_outcomes,
    )


def study_dataset(meta: StudyMeta, seed: int, pixel_bytes: int = 0) -> Dataset:
    sop_uid = generate_uid(entropy_srcs=[str(seed), "sop", meta.study_uid])
    file_meta = FileMetaDataset()
    file_meta.MediaStorageSOPClassUID = DX_IMAGE_STORAGE
    file_meta.MediaStorageSOPInstanceUID = sop_uid
    file_meta.TransferSyntaxUID = ExplicitVRLittleEndian

    ds = Dataset()
    ds.file_meta = file_meta
    ds.SOPClassUID = DX_IMAGE_STORAGE
    ds.SOPInstanceUID = sop_uid
    ds.PatientID = meta.patient_id
    ds.StudyInstanceUID = meta.study_uid
    ds.SeriesInstanceUID = generate_uid(entropy_srcs=[str(seed), "series", meta.study_uid])
    ds.StudyDate = meta.study_time.strftime("%Y%m%d")
    ds.StudyTime = meta.study_time.strftime("%H%M%S")
    ds.Modality = meta.modality
    ds.BodyPartExamined = meta.body_part
    if pixel_bytes:
        ds.add_new(0x7FE00010, "OB", bytes(pixel_bytes))
    return ds


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def write_corpus(corpus: SynthCorpus, out_dir: Path) -> RunManifest:
    spec = corpus.spec
    pacs_dir = out_dir / "pacs"
    his_dir = out_dir / "his"
    try:
        pacs_dir.mkdir(parents=True, exist_ok=True)
        his_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"Cannot create corpus directories: {e}", record=str(out_dir)) from e

    artifacts: List[StageArtifact] = []
    documents: List[Dict[str, Any]] = []
    for index, study in enumerate(corpus.studies):
        if spec.output_format == "dicom":
            rel = f"pacs/{index:05d}.dcm"
            ds = study_dataset(study.meta, spec.seed, spec.pixel_bytes)
            pydicom.dcmwrite(out_dir / rel, ds, enforce_file_format=True)
        else:
            rel = f"pacs/studies.json#{index}"
            documents.append(study_dataset(study.meta, spec.seed).to_json_dict())
        artifacts.append(
            StageArtifact(
                id=rel,
                type="study",
                content={
                    "study_uid": study.meta.study_uid,
                    "patient_id": study.meta.patient_id,
                    "outcome": study.outcome,
                    "violates": study.violates,
                },
            )
        )
    if spec.output_format == "dicomweb":
        _write_text(pacs_dir / "studies.json", _dump(documents))

    for session in corpus.sessions:
        rel = f"his/{session.session_id}.xml"
        (out_dir / rel).write_bytes(serialize_session(session))
        artifacts.append(
            StageArtifact(
                id=rel,
                type="his-session",
                content={
                    "session_id": session.session_id,
                    "patient_id": session.patient_id,
                    "reports": corpus.report_outcomes[session.session_id],
                },
            )
        )

    config = corpus.scorer_config.model_dump(mode="json", exclude_none=True)
    _write_text(out_dir / "scorer_config.json", _dump(config))
    artifacts.append(StageArtifact(id="scorer_config.json", type="scorer-config", content={}))
    artifacts.append(
        StageArtifact(
            id="expected", type="expected-outcome", content=corpus.expected.model_dump(mode="json")
        )
    )
    artifacts.append(
        StageArtifact(id="spec", type="corpus-spec", content=spec.model_dump(mode="json"))
    )

    manifest = new_manifest("synth", artifacts)
    _write_text(out_dir / "manifest.json", _dump(manifest.model_dump(mode="json")))
    logger.info("Wrote synth corpus to %s (%d artifacts)", out_dir, len(artifacts))
    return manifest


def generate_corpus(spec: CorpusSpec, out_dir: Path) -> RunManifest:
    """Write DICOM (or DICOMweb JSON), HIS XML and a stub scorer config under out_dir."""
    return write_corpus(build_corpus(spec), out_dir)
