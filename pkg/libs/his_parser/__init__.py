from .parser import (
    CANONICAL_NAMES,
    filter_cxr_reports,
    list_session_files,
    load_alias_map,
    parse_session,
    parse_session_file,
    serialize_session,
)

__all__ = [
    "CANONICAL_NAMES",
    "filter_cxr_reports",
    "list_session_files",
    "load_alias_map",
    "parse_session",
    "parse_session_file",
    "serialize_session",
]
