from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import requests
from pydantic import BaseModel

from libs.core.errors import InputError, MissingTagError, ParseError
from libs.core.models import SCHEMA_VERSION, FilterDecision, StudyMeta
from libs.core.timestamps import format_timestamp
from libs.pacs_ingest.cxr_filter import MISSING_TAG, is_cxr
from libs.pacs_ingest.reader import iter_dicomweb_datasets, meta_from_dataset, parse_dicom_file

logger = logging.getLogger(__name__)


class IngestRecord(BaseModel):
    source_uri: str
    decision: FilterDecision
    meta: Optional[StudyMeta] = None
    missing_tag: Optional[str] = None

    def manifest_line(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "source_uri": self.source_uri,
            "accepted": self.decision.accepted,
            "reason": self.decision.reason.value,
            "patient_id": self.meta.patient_id if self.meta else None,
            "study_time": format_timestamp(self.meta.study_time) if self.meta else None,
        }


def _decide(meta: StudyMeta) -> IngestRecord:
    return IngestRecord(source_uri=meta.source_uri, decision=is_cxr(meta), meta=meta)


def _missing(source_uri: str, err: MissingTagError) -> IngestRecord:
    logger.warning("Rejecting %s: %s", source_uri, err.message)
    return IngestRecord(source_uri=source_uri, decision=MISSING_TAG, missing_tag=err.keyword)


def _ingest_file(root: Path, path: Path) -> IngestRecord:
    uri = path.relative_to(root).as_posix()
    try:
        meta = parse_dicom_file(path, uri)
    except MissingTagError as e:
        return _missing(uri, e)
    return _decide(meta)


def _check_unique(records: List[IngestRecord]) -> None:
    seen: Dict[str, str] = {}
    for rec in records:
        if rec.meta is None:
            continue
        uid = rec.meta.study_uid
        if uid in seen:
            raise InputError(
                f"Duplicate StudyInstanceUID {uid} (also in {seen[uid]})", record=rec.source_uri
            )
        seen[uid] = rec.source_uri


def list_dicom_files(root: Path) -> List[Path]:
    files = [p for p in root.rglob("*") if p.is_file() and p.name != "DICOMDIR"]
    return sorted(files, key=lambda p: p.relative_to(root).as_posix())


def ingest_directory(root: Path, workers: int = 1) -> List[IngestRecord]:
    """Parse every file under root and run the CXR filter on each.

    Files are processed in sorted relative-path order; with workers > 1 they are
    parsed on a thread pool and the output order is unchanged.
    """
    files = list_dicom_files(root)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda p: _ingest_file(root, p), files))
    else:
        records = [_ingest_file(root, p) for p in files]
    _check_unique(records)
    logger.info(
        "Ingested %d files from %s (%d accepted)",
        len(records),
        root,
        sum(1 for r in records if r.decision.accepted),
    )
    return records


def ingest_dicomweb(doc: Union[str, bytes], source: str = "") -> List[IngestRecord]:
    records: List[IngestRecord] = []
    for uri, ds in iter_dicomweb_datasets(doc, source):
        try:
            meta = meta_from_dataset(ds, uri)
        except MissingTagError as e:
            records.append(_missing(uri, e))
            continue
        records.append(_decide(meta))
    _check_unique(records)
    return records


def admitted(records: Iterable[IngestRecord]) -> List[StudyMeta]:
    """StudyMeta of accepted records only; nothing else may go downstream."""
    return [r.meta for r in records if r.decision.accepted and r.meta is not None]


def fetch_dicomweb_studies(
    base_url: str, params: Optional[Dict[str, str]] = None, timeout: float = 30.0
) -> str:
    """One QIDO-RS style GET of {base_url}/studies returning the DICOM JSON body."""
    url = f"{base_url.rstrip('/')}/studies"
    try:
        r = requests.get(
            url, params=params, headers={"Accept": "application/dicom+json"}, timeout=timeout
        )
        r.raise_for_status()
    except Exception as e:  # noqa: BLE001
        raise ParseError(f"DICOMweb request failed: {e}", record=url) from e
    return r.text if r.content else "[]"
