from __future__ import annotations

import json
import logging
import re
import unicodedata
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from libs.core.errors import ConfigError
from libs.core.models import Region, ReportLabel, Verdict

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATES_PATH = Path(__file__).parent / "templates" / "default_templates.json"

_WHITESPACE = re.compile(r"\s+")


def normalize_text(s: str) -> str:
    """NFC, lowercase, single spaces, trimmed."""
    s = unicodedata.normalize("NFC", s).lower()
    return _WHITESPACE.sub(" ", s).strip()


class TemplateSet(BaseModel):
    """Normal-description sentences per anatomical region, stored normalized."""

    regions: Dict[Region, List[str]]

    @field_validator("regions")
    @classmethod
    def _complete(cls, v: Dict[Region, List[str]]) -> Dict[Region, List[str]]:
        missing = [r.value for r in Region if r not in v]
        if missing:
            raise ValueError(f"missing regions: {missing}")
        out: Dict[Region, List[str]] = {}
        for region in Region:
            templates = [normalize_text(t) for t in v[region]]
            if not templates:
                raise ValueError(f"region {region.value} has no templates")
            if any(not t for t in templates):
                raise ValueError(f"region {region.value} has an empty template")
            out[region] = templates
        return out

    def for_region(self, region: Region) -> List[str]:
        return self.regions[region]


def load_templates(path: Optional[Path] = None) -> TemplateSet:
    path = path or DEFAULT_TEMPLATES_PATH
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read template file: {e}", record=str(path)) from e
    try:
        return TemplateSet(regions=data)
    except ValidationError as e:
        raise ConfigError(f"Malformed template file: {e}", record=str(path)) from e


def label_region(description: str, region: Region, templates: TemplateSet) -> bool:
    # Inputs are expected normalized; containment is plain substring search.
    return any(t in description for t in templates.for_region(region))


def label_report(description: str, templates: TemplateSet) -> ReportLabel:
    text = normalize_text(description)
    region_normal = {region: label_region(text, region, templates) for region in Region}
    overall = Verdict.NORMAL if all(region_normal.values()) else Verdict.ABNORMAL
    return ReportLabel(overall=overall, region_normal=region_normal, empty_description=not text)


class LabelQuality(BaseModel):
    total: int = 0
    normal: int = 0
    abnormal: int = 0
    empty_descriptions: int = 0
    region_failures: Dict[Region, int] = Field(
        default_factory=lambda: {region: 0 for region in Region}
    )

    def add(self, label: ReportLabel) -> None:
        self.total += 1
        if label.overall is Verdict.NORMAL:
            self.normal += 1
        else:
            self.abnormal += 1
        if label.empty_description:
            self.empty_descriptions += 1
        for region, ok in label.region_normal.items():
            if not ok:
                self.region_failures[region] += 1


def label_reports(
    descriptions: Iterable[str], templates: TemplateSet
) -> tuple[List[ReportLabel], LabelQuality]:
    labels: List[ReportLabel] = []
    quality = LabelQuality()
    for description in descriptions:
        label = label_report(description, templates)
        labels.append(label)
        quality.add(label)
    if quality.empty_descriptions:
        logger.warning(
            "%d of %d reports have an empty description; labeled Abnormal",
            quality.empty_descriptions,
            quality.total,
        )
    return labels, quality
