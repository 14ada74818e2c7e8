from datetime import timedelta

from libs.core.models import ConfusionCounts
from libs.core.quality import run_quality_gates
from libs.matcher import match_pairs
from tests.builders import T0, make_ai, make_meta, make_session


def _run(**overrides):
    meta = make_meta()
    ai = make_ai()
    session = make_session()
    run = {
        "admitted": [meta],
        "ai_results": [ai],
        "sessions": [session],
        "pairs": match_pairs([ai], [session]).pairs,
        "counts": ConfusionCounts(tn=1),
    }
    run.update(overrides)
    return run


def test_quality_pass():
    result = run_quality_gates(_run())
    assert result["status"] == "PASSED"
    assert result["errors"] == []
    assert result["warnings"] == []


def test_quality_empty_run_passes():
    assert run_quality_gates({})["status"] == "PASSED"


def test_non_cxr_study_leaked():
    result = run_quality_gates(_run(admitted=[make_meta(modality="CT")]))
    assert result["status"] == "FAILED"
    assert any("Non-CXR" in e for e in result["errors"])


def test_result_for_unadmitted_study():
    result = run_quality_gates(_run(ai_results=[make_ai(uid="9.9.9")]))
    assert result["status"] == "FAILED"
    assert any("never admitted" in e for e in result["errors"])


def test_pair_outside_window():
    result = run_quality_gates(_run(window=timedelta(minutes=5)))
    assert result["status"] == "FAILED"
    assert any("report-window" in e for e in result["errors"])


def test_zero_window_is_not_replaced_by_default():
    session = make_session(report_times=[T0])
    ai = make_ai()
    pairs = match_pairs([ai], [session], window=timedelta(0)).pairs
    run = _run(sessions=[session], pairs=pairs, window=timedelta(0))
    assert run_quality_gates(run)["status"] == "PASSED"


def test_pair_reused():
    run = _run()
    result = run_quality_gates({**run, "pairs": run["pairs"] * 2, "counts": ConfusionCounts(tn=2)})
    assert result["status"] == "FAILED"
    assert any("used twice" in e for e in result["errors"])


def test_pair_with_unknown_session():
    result = run_quality_gates(_run(sessions=[make_session(session_id="S777")]))
    assert result["status"] == "FAILED"
    assert any("unknown session" in e for e in result["errors"])


def test_counts_disagree_with_pairs():
    result = run_quality_gates(_run(counts=ConfusionCounts(tn=1, tp=1)))
    assert result["status"] == "FAILED"
    assert any("Confusion total" in e for e in result["errors"])


def test_empty_descriptions_warn_only():
    result = run_quality_gates(_run(empty_descriptions=2))
    assert result["status"] == "PASSED"
    assert result["warnings"] == ["2 matched reports have an empty description (labeled Abnormal)"]
