from __future__ import annotations

from pathlib import Path

import pytest

from libs.core.models import ConfusionCounts
from libs.synth import CorpusSpec, generate_corpus


@pytest.fixture
def small_spec() -> CorpusSpec:
    return CorpusSpec.from_counts(
        ConfusionCounts(tp=5, fp=3, fn=2, tn=10),
        unmatched_ai=3,
        unmatched_reports=4,
        invalid_rate=0.1,
        non_cxr_studies=2,
        other_service_reports=2,
        empty_descriptions=1,
        zero_delay_fraction=0.2,
        repeat_patients=2,
        seed=7,
    )


@pytest.fixture
def corpus_dir(tmp_path: Path, small_spec: CorpusSpec) -> Path:
    out = tmp_path / "corpus"
    generate_corpus(small_spec, out)
    return out
