from __future__ import annotations

import logging
from collections import Counter, defaultdict
from datetime import timedelta
from typing import Dict, List, Sequence, Tuple

from libs.core.errors import InputError
from libs.core.models import (
    AiResult,
    AiStatus,
    MatchedPair,
    MatchOutcome,
    RadiologyReport,
    Session,
    UnmatchedReport,
)

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = timedelta(hours=24)

# (|delta|, session_id, report_index, study_uid)
_Candidate = Tuple[timedelta, str, int, str]


def _conditions(
    ai: AiResult, session: Session, report: RadiologyReport, window: timedelta
) -> List[str]:
    """Names of the linking conditions the (ai, report) combination violates."""
    failed: List[str] = []
    if ai.patient_id != session.patient_id:
        failed.append("patient-id")
    if not session.check_in_time <= ai.study_time <= session.check_out_time:
        failed.append("check-window")
    if abs(report.report_time - ai.study_time) > window:
        failed.append("report-window")
    return failed


def check_pair(
    pair: MatchedPair, session: Session, window: timedelta = DEFAULT_WINDOW
) -> List[str]:
    """Re-check an emitted pair against its session; returns violated conditions."""
    failed = _conditions(pair.ai, session, pair.report, window)
    if pair.session_id != session.session_id:
        failed.append("session-id")
    elif not (
        pair.report_index < len(session.reports)
        and session.reports[pair.report_index] == pair.report
    ):
        failed.append("report-index")
    return failed


def match_pairs(
    ai_results: Sequence[AiResult],
    sessions: Sequence[Session],
    window: timedelta = DEFAULT_WINDOW,
) -> MatchOutcome:
    """Link AI results to reports one-to-one.

    A candidate must share the patient id, have the study inside the session's
    check-in/check-out interval and a report within `window` of the study
    (all bounds inclusive). Candidates are taken greedily by smallest
    |report_time - study_time|, ties by (session_id, report position).
    Sessions are expected to hold CXR reports only.
    """
    if window < timedelta(0):
        raise InputError(f"window must be non-negative, got {window}")

    by_uid: Dict[str, AiResult] = {}
    for ai in ai_results:
        if ai.study_uid in by_uid:
            raise InputError(f"Duplicate study_uid {ai.study_uid}", record=ai.study_uid)
        if ai.status is AiStatus.INVALID:
            raise InputError("Invalid AI results cannot be matched", record=ai.study_uid)
        by_uid[ai.study_uid] = ai

    dupes = sorted(sid for sid, n in Counter(s.session_id for s in sessions).items() if n > 1)
    if dupes:
        raise InputError(f"Duplicate session ids: {dupes}", record=dupes[0])
    sessions_by_id = {s.session_id: s for s in sessions}

    ai_by_patient: Dict[str, List[AiResult]] = defaultdict(list)
    for ai in by_uid.values():
        ai_by_patient[ai.patient_id].append(ai)

    candidates: List[_Candidate] = []
    for session in sessions:
        for ai in ai_by_patient.get(session.patient_id, ()):
            for index, report in enumerate(session.reports):
                if not _conditions(ai, session, report, window):
                    delta = abs(report.report_time - ai.study_time)
                    candidates.append((delta, session.session_id, index, ai.study_uid))
    candidates.sort()

    used_ai: set[str] = set()
    used_reports: set[Tuple[str, int]] = set()
    pairs: List[MatchedPair] = []
    for _, session_id, index, uid in candidates:
        if uid in used_ai or (session_id, index) in used_reports:
            continue
        used_ai.add(uid)
        used_reports.add((session_id, index))
        ai = by_uid[uid]
        report = sessions_by_id[session_id].reports[index]
        pairs.append(
            MatchedPair(
                ai=ai,
                report=report,
                session_id=session_id,
                report_index=index,
                time_delta=report.report_time - ai.study_time,
            )
        )

    pairs.sort(key=lambda p: p.ai.study_uid)
    unmatched_ai = sorted(
        (ai for uid, ai in by_uid.items() if uid not in used_ai), key=lambda a: a.study_uid
    )
    unmatched_reports = [
        UnmatchedReport(
            session_id=s.session_id, report_index=i, patient_id=s.patient_id, report=r
        )
        for s in sorted(sessions, key=lambda s: s.session_id)
        for i, r in enumerate(s.reports)
        if (s.session_id, i) not in used_reports
    ]
    logger.info(
        "Matched %d pairs; %d AI results and %d reports unmatched",
        len(pairs),
        len(unmatched_ai),
        len(unmatched_reports),
    )
    return MatchOutcome(pairs=pairs, unmatched_ai=unmatched_ai, unmatched_reports=unmatched_reports)
