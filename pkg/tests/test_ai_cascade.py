import json

import pytest

from libs.ai_cascade import (
    STAGE_ABNORMALITY,
    STAGE_DETECTOR,
    STAGE_PA,
    StubScorerConfig,
    decide_status,
    dump_result,
    load_result,
    load_scorer_config,
    run_cascade,
    run_cascade_batch,
    stub_scorer,
)
from libs.core.errors import CascadeError, ConfigError, InputError
from libs.core.models import AiStatus
from tests.builders import make_meta


class Recording:
    """Scorer that records which stages ran."""

    def __init__(self, pa=0.9, abn=0.9, boxes=None, fail=None):
        self.pa, self.abn, self.boxes, self.fail = pa, abn, boxes or [], fail
        self.calls = []

    def _call(self, stage):
        self.calls.append(stage)
        if stage == self.fail:
            raise RuntimeError("model crashed")

    def pa_score(self, study):
        self._call(STAGE_PA)
        return self.pa

    def abnormal_score(self, study):
        self._call(STAGE_ABNORMALITY)
        return self.abn

    def detect(self, study):
        self._call(STAGE_DETECTOR)
        return self.boxes


def test_decide_status_thresholds_are_strict():
    assert decide_status(0.5, 0.9) is AiStatus.INVALID
    assert decide_status(0.51, 0.5) is AiStatus.NORMAL
    assert decide_status(0.51, 0.51) is AiStatus.ABNORMAL
    assert decide_status(0.9, 0.9, pa_threshold=0.95) is AiStatus.INVALID


def test_invalid_study_stops_after_pa_check():
    scorer = Recording(pa=0.2)
    result = run_cascade(make_meta(), scorer)
    assert result.status is AiStatus.INVALID
    assert result.abnormal_probability is None
    assert scorer.calls == [STAGE_PA]


def test_normal_study_skips_detector():
    scorer = Recording(abn=0.3)
    result = run_cascade(make_meta(), scorer)
    assert result.status is AiStatus.NORMAL
    assert scorer.calls == [STAGE_PA, STAGE_ABNORMALITY]


def test_abnormal_study_gets_boxes():
    raw = {"lesion_class": "Cardiomegaly", "x_min": 0.3, "y_min": 0.4, "x_max": 0.7, "y_max": 0.8}
    result = run_cascade(make_meta(), Recording(boxes=[raw]))
    assert result.status is AiStatus.ABNORMAL
    assert result.lesions[0].lesion_class == "Cardiomegaly"


@pytest.mark.parametrize("stage", [STAGE_PA, STAGE_ABNORMALITY, STAGE_DETECTOR])
def test_scorer_failure_names_stage(stage):
    with pytest.raises(CascadeError) as exc:
        run_cascade(make_meta(uid="7.7"), Recording(fail=stage))
    assert exc.value.stage == stage
    assert exc.value.record == "7.7"


def test_out_of_range_probability():
    with pytest.raises(CascadeError):
        run_cascade(make_meta(), Recording(pa=1.5))


def test_rejects_non_cxr_input():
    with pytest.raises(InputError):
        run_cascade(make_meta(modality="CT"), Recording())


def test_batch_collects_failures_without_scoring_them():
    config = StubScorerConfig.model_validate(
        {
            "studies": {
                "1.1": {"pa": 0.9, "abn": 0.1},
                "1.2": {"pa": 0.9, "abn": 0.9},
                "1.3": {"pa": 0.2},
                "1.4": {"fail_stage": "abnormality-classifier"},
            }
        }
    )
    metas = [make_meta(uid=f"1.{i}", patient_id=f"P{i}") for i in range(1, 5)]
    batch = run_cascade_batch(metas, stub_scorer(config), workers=2)
    assert [r.status for r in batch.results] == [
        AiStatus.NORMAL,
        AiStatus.ABNORMAL,
        AiStatus.INVALID,
    ]
    assert batch.failures[0].study_uid == "1.4"
    assert batch.failures[0].stage == STAGE_ABNORMALITY
    assert batch.tallies() == {
        "total": 4,
        "invalid": 1,
        "normal": 1,
        "abnormal": 1,
        "errored": 1,
    }


def test_stub_scorer_is_deterministic_and_seeded():
    meta = make_meta(uid="2.25.42")
    a, b, c = stub_scorer(seed=1), stub_scorer(seed=1), stub_scorer(seed=2)
    assert run_cascade(meta, a) == run_cascade(meta, b)
    scores = {stub_scorer(seed=s).pa_score(meta) for s in range(5)}
    assert len(scores) > 1
    assert c.pa_score(meta) == c.pa_score(meta)


def test_stub_scorer_patterns():
    scorer = stub_scorer({"patterns": [{"match": "9.*", "pa": 0.1}]})
    assert run_cascade(make_meta(uid="9.1"), scorer).status is AiStatus.INVALID


def test_stub_abnormal_rate_extremes():
    metas = [make_meta(uid=f"3.{i}", patient_id=f"P{i}") for i in range(50)]
    always = run_cascade_batch(metas, stub_scorer({"abnormal_rate": 1.0}))
    never = run_cascade_batch(metas, stub_scorer({"abnormal_rate": 0.0}))
    assert always.tallies()["abnormal"] == 50
    assert never.tallies()["normal"] == 50


def test_stub_fallback_hits_abnormal_rate():
    metas = [make_meta(uid=f"2.25.{i}", patient_id=f"P{i}") for i in range(10000)]
    fractions = []
    for seed in range(5):
        scorer = stub_scorer({"abnormal_rate": 0.276}, seed=seed)
        abnormal = sum(scorer.abnormal_score(m) > 0.5 for m in metas)
        fractions.append(abnormal / len(metas))
    assert sum(fractions) / len(fractions) == pytest.approx(0.276, abs=0.01)
    assert all(abs(f - 0.276) < 0.02 for f in fractions)


@pytest.mark.parametrize("config", [["abnormal_rate"], "abnormal_rate=0.3", 0.3])
def test_stub_scorer_rejects_non_mapping_config(config):
    with pytest.raises(ConfigError):
        stub_scorer(config)


def test_load_scorer_config_errors(tmp_path):
    path = tmp_path / "scorer.json"
    path.write_text('{"abnormal_rate": 2}', encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scorer_config(path)
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scorer_config(path)


def test_result_line_carries_abnormal_status():
    result = run_cascade(make_meta(), Recording(boxes=[]))
    line = dump_result(result)
    obj = json.loads(line)
    assert obj["ABNORMAL_STATUS"] == 1
    assert obj["status"] == "Abnormal"
    assert obj["schema_version"] == 1
    assert load_result(line) == result


def test_load_result_rejects_disagreeing_flag():
    line = dump_result(run_cascade(make_meta(), Recording(abn=0.1)))
    obj = json.loads(line)
    obj["ABNORMAL_STATUS"] = 1
    with pytest.raises(InputError):
        load_result(json.dumps(obj))
