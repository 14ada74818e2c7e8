from .cascade import (
    STAGE_ABNORMALITY,
    STAGE_DETECTOR,
    STAGE_PA,
    CascadeBatch,
    CascadeFailure,
    ScorerContract,
    decide_status,
    dump_result,
    load_result,
    run_cascade,
    run_cascade_batch,
)
from .scorers import (
    StubEntry,
    StubPattern,
    StubScorer,
    StubScorerConfig,
    load_scorer_config,
    stub_scorer,
)

__all__ = [
    "STAGE_ABNORMALITY",
    "STAGE_DETECTOR",
    "STAGE_PA",
    "CascadeBatch",
    "CascadeFailure",
    "ScorerContract",
    "StubEntry",
    "StubPattern",
    "StubScorer",
    "StubScorerConfig",
    "decide_status",
    "dump_result",
    "load_result",
    "load_scorer_config",
    "run_cascade",
    "run_cascade_batch",
    "stub_scorer",
]
