from __future__ import annotations

from datetime import timedelta
from typing import Any, Dict, List, Sequence, Tuple

from libs.core.models import AiResult, ConfusionCounts, MatchedPair, Session, StudyMeta
from libs.matcher.matcher import DEFAULT_WINDOW, check_pair
from libs.pacs_ingest.cxr_filter import is_cxr


def validate_admitted(admitted: Sequence[StudyMeta]) -> Tuple[bool, str]:
    leaked = [m.study_uid for m in admitted if not is_cxr(m).accepted]
    if leaked:
        return False, f"Non-CXR studies admitted: {', '.join(leaked[:5])}"
    return True, "Admitted studies validation passed"


def validate_ai_results(
    results: Sequence[AiResult], admitted: Sequence[StudyMeta]
) -> Tuple[bool, str]:
    known = {m.study_uid for m in admitted}
    stray = [r.study_uid for r in results if r.study_uid not in known]
    if stray:
        return False, f"AI results for studies that were never admitted: {', '.join(stray[:5])}"
    return True, "AI results validation passed"


def validate_pairs(
    pairs: Sequence[MatchedPair], sessions: Sequence[Session], window: timedelta
) -> Tuple[bool, str]:
    by_id = {s.session_id: s for s in sessions}
    problems: List[str] = []
    seen_ai: set[str] = set()
    seen_reports: set[Tuple[str, int]] = set()
    for pair in pairs:
        session = by_id.get(pair.session_id)
        if session is None:
            problems.append(f"{pair.ai.study_uid}: unknown session {pair.session_id}")
            continue
        failed = check_pair(pair, session, window)
        if failed:
            problems.append(f"{pair.ai.study_uid}: violates {', '.join(failed)}")
        key = (pair.session_id, pair.report_index)
        if pair.ai.study_uid in seen_ai or key in seen_reports:
            problems.append(f"{pair.ai.study_uid}: record used twice")
        seen_ai.add(pair.ai.study_uid)
        seen_reports.add(key)
    if problems:
        return False, "Matched pairs invalid: " + "; ".join(problems[:5])
    return True, "Matched pairs validation passed"


def validate_counts(counts: ConfusionCounts, n_pairs: int) -> Tuple[bool, str]:
    if counts.total != n_pairs:
        return False, f"Confusion total {counts.total} != {n_pairs} labeled pairs"
    return True, "Confusion counts validation passed"


def run_quality_gates(run: Dict[str, Any]) -> Dict[str, Any]:
    """Apply all validators and return status, errors and warnings.

    Expected keys in `run`: 'admitted', 'ai_results', 'sessions', 'pairs',
    'counts'; optional 'window' and 'empty_descriptions'. Missing sections are
    treated as empty.
    """
    errors: List[str] = []
    warnings: List[str] = []
    admitted = run.get("admitted") or []
    pairs = run.get("pairs") or []
    window = run.get("window")
    if window is None:
        window = DEFAULT_WINDOW

    checks = [
        validate_admitted(admitted),
        validate_ai_results(run.get("ai_results") or [], admitted),
        validate_pairs(pairs, run.get("sessions") or [], window),
        validate_counts(run.get("counts") or ConfusionCounts(), len(pairs)),
    ]
    for ok, msg in checks:
        if not ok:
            errors.append(msg)

    empty = int(run.get("empty_descriptions") or 0)
    if empty:
        warnings.append(f"{empty} matched reports have an empty description (labeled Abnormal)")

    status = "PASSED" if not errors else "FAILED"
    return {"status": status, "errors": errors, "warnings": warnings}
