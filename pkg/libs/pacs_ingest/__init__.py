from .cxr_filter import CXR_BODY_PARTS, CXR_MODALITIES, is_cxr
from .ingest import (
    IngestRecord,
    admitted,
    fetch_dicomweb_studies,
    ingest_dicomweb,
    ingest_directory,
)
from .reader import parse_dicom_file, parse_dicom_meta, parse_dicomweb_json

__all__ = [
    "CXR_BODY_PARTS",
    "CXR_MODALITIES",
    "IngestRecord",
    "admitted",
    "fetch_dicomweb_studies",
    "ingest_dicomweb",
    "ingest_directory",
    "is_cxr",
    "parse_dicom_file",
    "parse_dicom_meta",
    "parse_dicomweb_json",
]
