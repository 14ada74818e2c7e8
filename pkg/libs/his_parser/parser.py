from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

from lxml import etree

from libs.core.errors import (
    ConfigError,
    InconsistentSessionError,
    InputError,
    MissingAttributeError,
    ParseError,
)
from libs.core.models import RadiologyReport, Session
from libs.core.timestamps import format_timestamp, parse_timestamp

logger = logging.getLogger(__name__)

# Canonical element and attribute names of a session export. Deployments with
# other (e.g. Vietnamese) names supply an alias map {canonical: deployment}.
CANONICAL_NAMES = (
    "session",
    "report",
    "description",
    "id",
    "patient_id",
    "check_in_time",
    "check_out_time",
    "service_id",
    "report_time",
)

AliasMap = Mapping[str, str]


def _names(aliases: Optional[AliasMap]) -> Dict[str, str]:
    aliases = aliases or {}
    return {name: aliases.get(name, name) for name in CANONICAL_NAMES}


def load_alias_map(path: Path) -> Dict[str, str]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read alias map: {e}", record=str(path)) from e
    if not isinstance(data, dict):
        raise ConfigError("Alias map must be a JSON object", record=str(path))
    unknown = sorted(k for k in data if k not in CANONICAL_NAMES)
    if unknown:
        raise ConfigError(f"Unknown canonical names in alias map: {unknown}", record=str(path))
    bad = sorted(k for k, v in data.items() if not isinstance(v, str) or not v.strip())
    if bad:
        raise ConfigError(f"Alias values must be non-empty strings: {bad}", record=str(path))
    return {k: v.strip() for k, v in data.items()}


def _attr(el: etree._Element, canonical: str, names: Dict[str, str], source: str) -> str:
    value = el.get(names[canonical])
    if value is None or not value.strip():
        raise MissingAttributeError(f"{canonical} ({names[canonical]})", record=source)
    return value.strip()


def parse_session(
    xml: Union[str, bytes], aliases: Optional[AliasMap] = None, source: str = ""
) -> Session:
    """Parse one HIS session export: a header plus its reports in document order."""
    data = xml.encode("utf-8") if isinstance(xml, str) else xml
    parser = etree.XMLParser(resolve_entities=False, no_network=True)
    try:
        root = etree.fromstring(data, parser=parser)
    except etree.XMLSyntaxError as e:
        line, column = e.position
        raise ParseError(
            f"Malformed session XML: {e.msg}", record=source, line=line, column=column
        ) from e

    encoding = (root.getroottree().docinfo.encoding or "UTF-8").upper()
    if encoding not in ("UTF-8", "UTF8"):
        raise ParseError(f"Session XML must be UTF-8, got {encoding}", record=source)

    names = _names(aliases)
    if etree.QName(root).localname != names["session"]:
        raise ParseError(
            f"Root element must be <{names['session']}>, got <{etree.QName(root).localname}>",
            record=source,
        )

    session_id = _attr(root, "id", names, source)
    record = source or session_id
    patient_id = _attr(root, "patient_id", names, record)
    check_in = parse_timestamp(_attr(root, "check_in_time", names, record), record=record)
    check_out = parse_timestamp(_attr(root, "check_out_time", names, record), record=record)
    if check_in > check_out:
        raise InconsistentSessionError(
            f"check_in_time {format_timestamp(check_in)} is after "
            f"check_out_time {format_timestamp(check_out)}",
            record=record,
        )

    reports: List[RadiologyReport] = []
    for position, el in enumerate(root.findall(names["report"])):
        where = f"{record}#report[{position}]"
        desc_el = el.find(names["description"])
        reports.append(
            RadiologyReport(
                service_id=_attr(el, "service_id", names, where),
                report_time=parse_timestamp(_attr(el, "report_time", names, where), record=where),
                description="".join(desc_el.itertext()) if desc_el is not None else "",
            )
        )

    return Session(
        session_id=session_id,
        patient_id=patient_id,
        check_in_time=check_in,
        check_out_time=check_out,
        reports=reports,
    )


def parse_session_file(path: Path, aliases: Optional[AliasMap] = None) -> Session:
    return parse_session(path.read_bytes(), aliases, source=path.name)


def list_session_files(root: Path) -> List[Path]:
    return sorted(p for p in root.rglob("*.xml") if p.is_file())


def filter_cxr_reports(session: Session, cxr_service_id: str) -> List[RadiologyReport]:
    """Keep only the reports of the chest radiograph service, in order."""
    wanted = cxr_service_id.strip()
    if not wanted:
        raise InputError("cxr_service_id must be non-empty")
    return [r for r in session.reports if r.service_id.strip() == wanted]


def serialize_session(session: Session, aliases: Optional[AliasMap] = None) -> bytes:
    names = _names(aliases)
    root = etree.Element(names["session"])
    root.set(names["id"], session.session_id)
    root.set(names["patient_id"], session.patient_id)
    root.set(names["check_in_time"], format_timestamp(session.check_in_time))
    root.set(names["check_out_time"], format_timestamp(session.check_out_time))
    for report in session.reports:
        el = etree.SubElement(root, names["report"])
        el.set(names["service_id"], report.service_id)
        el.set(names["report_time"], format_timestamp(report.report_time))
        desc = etree.SubElement(el, names["description"])
        desc.text = report.description
    return etree.tostring(root, xml_declaration=True, encoding="UTF-8", pretty_print=True)
