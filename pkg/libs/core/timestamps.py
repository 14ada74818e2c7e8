from __future__ import annotations

from datetime import datetime
from typing import Optional

from libs.core.errors import BadTimestampError

# Local hospital time, no zone. Fractional seconds are dropped.
_FORMATS = ("%Y-%m-%dT%H:%M:%S", "%Y%m%d%H%M%S")


def parse_timestamp(text: Optional[str], *, record: Optional[str] = None) -> datetime:
    """Parse "YYYY-MM-DDTHH:MM:SS" or compact "YYYYMMDDHHMMSS" into a naive datetime."""
    if text is None or not str(text).strip():
        raise BadTimestampError("Empty timestamp", record=record)
    raw = str(text).strip()
    for fmt in _FORMATS:
        try:
            return datetime.strptime(raw, fmt)
        except ValueError:
            continue
    raise BadTimestampError(f"Unparseable timestamp '{raw}'", record=record)


def format_timestamp(value: datetime) -> str:
    return value.replace(microsecond=0).strftime(_FORMATS[0])
