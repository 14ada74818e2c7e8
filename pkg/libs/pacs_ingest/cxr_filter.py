from __future__ import annotations

from libs.core.models import FilterDecision, FilterReason, StudyMeta

CXR_MODALITIES = frozenset({"CR", "DR", "DX"})
CXR_BODY_PARTS = frozenset({"CHEST", "THORAX"})

ACCEPTED = FilterDecision(accepted=True, reason=FilterReason.ACCEPTED)
BAD_MODALITY = FilterDecision(accepted=False, reason=FilterReason.BAD_MODALITY)
BAD_BODY_PART = FilterDecision(accepted=False, reason=FilterReason.BAD_BODY_PART)
MISSING_TAG = FilterDecision(accepted=False, reason=FilterReason.MISSING_TAG)


def is_cxr(meta: StudyMeta) -> FilterDecision:
    """Admit a study only when MODALITY is CR/DR/DX and BODY_PART_EXAMINED is CHEST/THORAX."""
    if meta.modality.strip().upper() not in CXR_MODALITIES:
        return BAD_MODALITY
    if meta.body_part.strip().upper() not in CXR_BODY_PARTS:
        return BAD_BODY_PART
    return ACCEPTED
