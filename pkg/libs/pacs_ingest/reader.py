from __future__ import annotations

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import BinaryIO, Iterator, List, Tuple, Union

import pydicom
from pydicom.dataset import Dataset
from pydicom.errors import InvalidDicomError
from pydicom.uid import ExplicitVRLittleEndian, ImplicitVRLittleEndian
from pydicom.valuerep import DA, TM

from libs.core.errors import (
    BadTimestampError,
    MalformedFileError,
    MissingTagError,
    ParseError,
    UnsupportedSyntaxError,
)
from libs.core.models import StudyMeta

logger = logging.getLogger(__name__)

SUPPORTED_TRANSFER_SYNTAXES = frozenset({ExplicitVRLittleEndian, ImplicitVRLittleEndian})

# (keyword, tag id) in the order they are checked.
REQUIRED_TAGS: Tuple[Tuple[str, str], ...] = (
    ("PatientID", "(0010,0020)"),
    ("StudyInstanceUID", "(0020,000D)"),
    ("StudyDate", "(0008,0020)"),
    ("StudyTime", "(0008,0030)"),
    ("Modality", "(0008,0060)"),
    ("BodyPartExamined", "(0018,0015)"),
)
_REQUIRED_KEYWORDS = [kw for kw, _ in REQUIRED_TAGS]


def _text(ds: Dataset, keyword: str, tag: str, record: str) -> str:
    value = ds.get(keyword)
    text = "" if value is None else str(value).strip()
    if not text:
        raise MissingTagError(tag, keyword, record=record)
    return text


def _study_time(date_text: str, time_text: str, record: str) -> datetime:
    try:
        day = DA(date_text)
        clock = TM(time_text)
    except ValueError as e:
        raise BadTimestampError(
            f"Unparseable StudyDate/StudyTime '{date_text}' '{time_text}': {e}", record=record
        ) from e
    if day is None or clock is None:
        raise BadTimestampError(f"Empty StudyDate/StudyTime for {record}", record=record)
    # fractional seconds truncated
    return datetime.combine(day, clock).replace(microsecond=0, tzinfo=None)


def meta_from_dataset(ds: Dataset, source_uri: str) -> StudyMeta:
    """Map the required DICOM attributes of a dataset onto StudyMeta."""
    values = {kw: _text(ds, kw, tag, source_uri) for kw, tag in REQUIRED_TAGS}
    return StudyMeta(
        patient_id=values["PatientID"],
        study_uid=values["StudyInstanceUID"],
        study_time=_study_time(values["StudyDate"], values["StudyTime"], source_uri),
        modality=values["Modality"],
        body_part=values["BodyPartExamined"],
        source_uri=source_uri,
    )


def parse_dicom_meta(stream: BinaryIO, source_uri: str = "") -> StudyMeta:
    """Read study identity from a DICOM part-10 stream.

    Only the required elements are decoded; everything else, pixel data
    included, is skipped by its declared length.
    """
    try:
        ds = pydicom.dcmread(stream, stop_before_pixels=True, specific_tags=_REQUIRED_KEYWORDS)
    except InvalidDicomError as e:
        raise MalformedFileError(f"Not a DICOM part-10 stream: {e}", record=source_uri) from e
    except Exception as e:  # noqa: BLE001
        raise MalformedFileError(f"Unreadable DICOM stream: {e}", record=source_uri) from e

    file_meta = getattr(ds, "file_meta", None)
    syntax = file_meta.get("TransferSyntaxUID") if file_meta is not None else None
    if syntax not in SUPPORTED_TRANSFER_SYNTAXES:
        raise UnsupportedSyntaxError(
            f"Unsupported transfer syntax {syntax or '<missing>'}", record=source_uri
        )
    return meta_from_dataset(ds, source_uri)


def parse_dicom_file(path: Path, source_uri: str | None = None) -> StudyMeta:
    uri = source_uri if source_uri is not None else path.as_posix()
    with path.open("rb") as fh:
        return parse_dicom_meta(fh, uri)


def iter_dicomweb_datasets(
    doc: Union[str, bytes], source: str = ""
) -> Iterator[Tuple[str, Dataset]]:
    """Yield (source_uri, Dataset) per element of a DICOMweb study array."""
    try:
        payload = json.loads(doc)
    except json.JSONDecodeError as e:
        raise ParseError(
            f"Malformed DICOMweb JSON: {e.msg}", record=source, line=e.lineno, column=e.colno
        ) from e
    except UnicodeDecodeError as e:
        raise ParseError(f"DICOMweb JSON is not UTF-8: {e}", record=source) from e
    if not isinstance(payload, list):
        raise ParseError("DICOMweb document must be a JSON array of study objects", record=source)

    for index, obj in enumerate(payload):
        uri = f"{source}#{index}"
        if not isinstance(obj, dict):
            raise ParseError("Study entry must be a JSON object", record=uri)
        try:
            ds = Dataset.from_json(obj)
        except Exception as e:  # noqa: BLE001
            raise ParseError(f"Invalid DICOM JSON object: {e}", record=uri) from e
        yield uri, ds


def parse_dicomweb_json(doc: Union[str, bytes], source: str = "") -> List[StudyMeta]:
    """Parse a DICOMweb metadata array (tag-keyed objects with vr/Value members)."""
    metas: List[StudyMeta] = []
    for uri, ds in iter_dicomweb_datasets(doc, source):
        metas.append(meta_from_dataset(ds, uri))
    logger.debug("Parsed %d DICOMweb studies from %s", len(metas), source or "<document>")
    return metas


__all__ = [
    "REQUIRED_TAGS",
    "SUPPORTED_TRANSFER_SYNTAXES",
    "iter_dicomweb_datasets",
    "meta_from_dataset",
    "parse_dicom_file",
    "parse_dicom_meta",
    "parse_dicomweb_json",
]
