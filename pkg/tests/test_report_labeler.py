import json
import logging
import unicodedata
from pathlib import Path

import pytest

from libs.core.errors import ConfigError
from libs.core.models import Region, Verdict
from libs.report_labeler import (
    TemplateSet,
    label_region,
    label_report,
    label_reports,
    load_templates,
    normalize_text,
)

FIXTURES = Path(__file__).parent / "fixtures" / "labeler_reports.json"

NORMAL = (
    "Không thấy hình bất thường xương lồng ngực. Không thấy hình tràn dịch màng phổi. "
    "Nhu mô phổi không thấy bất thường. Hình tim và trung thất bình thường."
)


@pytest.fixture(scope="module")
def templates() -> TemplateSet:
    return load_templates()


def _reports():
    return json.loads(FIXTURES.read_text(encoding="utf-8"))


def test_default_templates_cover_every_region(templates):
    assert len(templates.for_region(Region.CHEST_WALL)) == 2
    assert len(templates.for_region(Region.PLEURA)) == 3
    assert len(templates.for_region(Region.LUNG)) == 1
    assert len(templates.for_region(Region.MEDIASTINUM)) == 2
    for region in Region:
        for t in templates.for_region(region):
            assert t == normalize_text(t)


@pytest.mark.parametrize("report", _reports(), ids=lambda r: f"report-{r['id']}")
def test_hand_labeled_reports(templates, report):
    label = label_report(report["description"], templates)
    assert label.overall.value == report["label"]
    assert label.empty_description is report.get("empty", False)


def test_decomposed_unicode_labels_the_same(templates):
    for report in _reports():
        nfd = unicodedata.normalize("NFD", report["description"])
        assert label_report(nfd, templates).overall.value == report["label"]


def test_normalize_text():
    assert normalize_text("  Nhu  Mô\tPhổi\n ") == "nhu mô phổi"
    assert normalize_text(unicodedata.normalize("NFD", "Phổi")) == "phổi"
    assert normalize_text("") == ""
    assert normalize_text(" \n\t") == ""


def test_normalize_text_is_idempotent():
    for report in _reports():
        once = normalize_text(report["description"])
        assert normalize_text(once) == once


def test_appending_text_never_turns_normal_into_abnormal(templates):
    suffixes = ["", " Tim to.", "\nĐám mờ thùy trên phổi phải.", " KẾT LUẬN: BÌNH THƯỜNG"]
    base = label_report(NORMAL, templates)
    assert base.overall is Verdict.NORMAL
    for suffix in suffixes:
        assert label_report(NORMAL + suffix, templates).overall is Verdict.NORMAL
        assert label_report(suffix + " " + NORMAL, templates).overall is Verdict.NORMAL


def test_region_flags_name_the_failing_region(templates):
    text = NORMAL.replace("Không thấy hình tràn dịch màng phổi.", "Tràn dịch màng phổi phải.")
    label = label_report(text, templates)
    assert label.overall is Verdict.ABNORMAL
    assert label.region_normal == {
        Region.CHEST_WALL: True,
        Region.PLEURA: False,
        Region.LUNG: True,
        Region.MEDIASTINUM: True,
    }


def test_label_region_expects_normalized_input(templates):
    assert label_region("nhu mô phổi không thấy bất thường", Region.LUNG, templates)
    assert not label_region("Nhu mô phổi không thấy bất thường", Region.LUNG, templates)


def test_empty_description_is_abnormal_and_flagged(templates):
    label = label_report("   ", templates)
    assert label.overall is Verdict.ABNORMAL
    assert label.empty_description
    assert not any(label.region_normal.values())


def test_label_reports_tallies_quality(templates, caplog):
    reports = _reports()
    with caplog.at_level(logging.WARNING):
        labels, quality = label_reports([r["description"] for r in reports], templates)
    assert len(labels) == 50
    assert quality.total == 50
    assert quality.normal == sum(1 for r in reports if r["label"] == "Normal")
    assert quality.abnormal == 50 - quality.normal
    assert quality.empty_descriptions == 3
    assert quality.region_failures[Region.LUNG] >= 3
    assert "empty description" in caplog.text


def test_custom_templates_are_normalized():
    ts = TemplateSet(
        regions={
            "ChestWall": ["  Xương  BÌNH thường "],
            "Pleura": ["màng phổi bình thường"],
            "Lung": ["phổi sáng"],
            "Mediastinum": ["trung thất cân đối"],
        }
    )
    assert ts.for_region(Region.CHEST_WALL) == ["xương bình thường"]
    text = "Xương bình thường. Màng phổi bình thường. Phổi sáng. Trung thất cân đối."
    assert label_report(text, ts).overall is Verdict.NORMAL


def test_load_templates_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_templates(tmp_path / "nope.json")


def test_load_templates_not_json(tmp_path):
    path = tmp_path / "t.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_templates(path)


def test_load_templates_missing_region(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(
        json.dumps({"ChestWall": ["a"], "Pleura": ["b"], "Lung": ["c"]}), encoding="utf-8"
    )
    with pytest.raises(ConfigError) as exc:
        load_templates(path)
    assert "Mediastinum" in exc.value.message


def test_load_templates_empty_region(tmp_path):
    path = tmp_path / "t.json"
    doc = {"ChestWall": ["a"], "Pleura": ["b"], "Lung": [], "Mediastinum": ["d"]}
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_templates(path)


def test_load_templates_blank_template(tmp_path):
    path = tmp_path / "t.json"
    doc = {"ChestWall": ["a"], "Pleura": ["b"], "Lung": ["  "], "Mediastinum": ["d"]}
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_templates(path)
