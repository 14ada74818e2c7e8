import io
import json
import random
from datetime import datetime

import pytest
from pydicom.uid import JPEGBaseline8Bit

from libs.ai_cascade import run_cascade, run_cascade_batch, stub_scorer
from libs.core.errors import (
    BadTimestampError,
    InputError,
    MalformedFileError,
    MissingTagError,
    ParseError,
    UnsupportedSyntaxError,
)
from libs.core.models import FilterReason
from libs.pacs_ingest import (
    admitted,
    fetch_dicomweb_studies,
    ingest_dicomweb,
    ingest_directory,
    is_cxr,
    parse_dicom_file,
    parse_dicom_meta,
    parse_dicomweb_json,
)
from libs.pacs_ingest.ingest import IngestRecord
from libs.synth import study_dataset
from tests.builders import T0, make_meta, write_dicom


class CountingStream(io.BytesIO):
    def __init__(self, data: bytes) -> None:
        super().__init__(data)
        self.bytes_read = 0

    def read(self, size=-1):
        chunk = super().read(size)
        self.bytes_read += len(chunk)
        return chunk


def test_parse_dicom_file_reads_required_tags(tmp_path):
    path = write_dicom(tmp_path / "a.dcm", make_meta(uid="1.2.3.9", patient_id="P9"))
    meta = parse_dicom_file(path, "a.dcm")
    assert meta.patient_id == "P9"
    assert meta.study_uid == "1.2.3.9"
    assert meta.study_time == T0
    assert (meta.modality, meta.body_part) == ("DX", "CHEST")
    assert meta.source_uri == "a.dcm"


def test_pixel_data_is_never_read(tmp_path):
    path = write_dicom(tmp_path / "big.dcm", make_meta(), pixel_bytes=1 << 20)
    stream = CountingStream(path.read_bytes())
    parse_dicom_meta(stream, "big.dcm")
    assert stream.bytes_read < 4096


def test_missing_tag_names_the_attribute(tmp_path):
    path = write_dicom(tmp_path / "m.dcm", make_meta(), BodyPartExamined=None)
    with pytest.raises(MissingTagError) as exc:
        parse_dicom_file(path)
    assert exc.value.keyword == "BodyPartExamined"
    assert exc.value.tag == "(0018,0015)"


def test_unsupported_transfer_syntax(tmp_path):
    path = write_dicom(tmp_path / "j.dcm", make_meta(), TransferSyntaxUID=JPEGBaseline8Bit)
    with pytest.raises(UnsupportedSyntaxError):
        parse_dicom_file(path)


def test_not_dicom_is_malformed():
    with pytest.raises(MalformedFileError):
        parse_dicom_meta(io.BytesIO(b"definitely not a dicom file" * 10), "x")


def test_bad_study_date(tmp_path):
    path = write_dicom(tmp_path / "d.dcm", make_meta(), StudyDate="20201340")
    with pytest.raises(BadTimestampError):
        parse_dicom_file(path)


def test_ingest_directory_records_rejections(tmp_path):
    write_dicom(tmp_path / "b" / "ok.dcm", make_meta(uid="1.1"))
    write_dicom(tmp_path / "a" / "ct.dcm", make_meta(uid="1.2", modality="CT"))
    write_dicom(tmp_path / "c.dcm", make_meta(uid="1.3", body_part="ABDOMEN"))
    write_dicom(tmp_path / "d.dcm", make_meta(uid="1.4"), Modality=None)

    records = ingest_directory(tmp_path)
    assert [r.source_uri for r in records] == ["a/ct.dcm", "b/ok.dcm", "c.dcm", "d.dcm"]
    assert [r.decision.reason for r in records] == [
        FilterReason.BAD_MODALITY,
        FilterReason.ACCEPTED,
        FilterReason.BAD_BODY_PART,
        FilterReason.MISSING_TAG,
    ]
    assert records[3].missing_tag == "Modality"
    assert [m.study_uid for m in admitted(records)] == ["1.1"]
    assert records[1].manifest_line()["schema_version"] == 1


def test_ingest_directory_parallel_keeps_order(tmp_path):
    for i in range(8):
        write_dicom(tmp_path / f"{i}.dcm", make_meta(uid=f"1.{i}"))
    serial = ingest_directory(tmp_path)
    parallel = ingest_directory(tmp_path, workers=4)
    assert [r.source_uri for r in serial] == [r.source_uri for r in parallel]


def test_duplicate_study_uid_rejected(tmp_path):
    write_dicom(tmp_path / "a.dcm", make_meta(uid="1.1"))
    write_dicom(tmp_path / "b.dcm", make_meta(uid="1.1"))
    with pytest.raises(InputError):
        ingest_directory(tmp_path)


def _doc(*metas) -> str:
    return json.dumps([study_dataset(m, seed=0).to_json_dict() for m in metas])


def test_parse_dicomweb_json():
    metas = parse_dicomweb_json(_doc(make_meta(uid="1.1"), make_meta(uid="1.2")), "qido.json")
    assert [m.study_uid for m in metas] == ["1.1", "1.2"]
    assert metas[1].source_uri == "qido.json#1"
    assert metas[0].study_time == T0


def test_dicomweb_malformed_json_reports_position():
    with pytest.raises(ParseError) as exc:
        parse_dicomweb_json('[{"00100020": ', "bad.json")
    assert exc.value.line == 1
    assert exc.value.record == "bad.json"


def test_dicomweb_must_be_array():
    with pytest.raises(ParseError):
        parse_dicomweb_json("{}")


def test_dicomweb_empty_array():
    assert parse_dicomweb_json("[]") == []
    assert parse_dicomweb_json(b"[]") == []


def test_dicomweb_missing_modality_names_the_attribute():
    obj = study_dataset(make_meta(), seed=0).to_json_dict()
    del obj["00080060"]
    with pytest.raises(MissingTagError) as exc:
        parse_dicomweb_json(json.dumps([obj]), "qido.json")
    assert exc.value.keyword == "Modality"
    assert exc.value.tag == "(0008,0060)"
    assert exc.value.record == "qido.json#0"


def test_dicomweb_attribute_order_does_not_matter():
    obj = study_dataset(make_meta(uid="4.4", patient_id="P44"), seed=0).to_json_dict()
    expected = parse_dicomweb_json(json.dumps([obj]), "qido.json")
    rng = random.Random(5)
    for _ in range(10):
        keys = list(obj)
        rng.shuffle(keys)
        shuffled = {k: obj[k] for k in keys}
        assert parse_dicomweb_json(json.dumps([shuffled]), "qido.json") == expected


def test_fetch_dicomweb_studies(monkeypatch):
    calls = {}

    class FakeResponse:
        content = b"[]"
        text = _doc(make_meta(uid="9.9"))

        def raise_for_status(self):
            return None

    def fake_get(url, params=None, headers=None, timeout=None):
        calls.update(url=url, headers=headers)
        return FakeResponse()

    monkeypatch.setattr("libs.pacs_ingest.ingest.requests.get", fake_get)
    body = fetch_dicomweb_studies("http://pacs.local/dicom-web/")
    assert calls["url"] == "http://pacs.local/dicom-web/studies"
    assert calls["headers"]["Accept"] == "application/dicom+json"
    assert [m.study_uid for m in admitted(ingest_dicomweb(body, "qido"))] == ["9.9"]


def test_fetch_dicomweb_failure(monkeypatch):
    def boom(*args, **kwargs):
        raise ConnectionError("refused")

    monkeypatch.setattr("libs.pacs_ingest.ingest.requests.get", boom)
    with pytest.raises(ParseError) as exc:
        fetch_dicomweb_studies("http://pacs.local")
    assert exc.value.record == "http://pacs.local/studies"


def test_non_cxr_never_reaches_ai_output():
    rng = random.Random(20201115)
    modalities = ["CR", "DR", "DX", "cr", " dx", "CT", "MR", "US", "XA", "MG", "OT", "PX"]
    body_parts = ["CHEST", "THORAX", "chest", "Thorax ", "ABDOMEN", "HEAD", "SKULL", "PELVIS"]
    metas = [
        make_meta(
            uid=f"2.25.{i}",
            patient_id=f"P{i}",
            when=datetime(2020, 1, 1),
            modality=rng.choice(modalities),
            body_part=rng.choice(body_parts),
        )
        for i in range(10_000)
    ]
    records = [IngestRecord(source_uri=m.study_uid, decision=is_cxr(m), meta=m) for m in metas]
    batch = run_cascade_batch(admitted(records), stub_scorer(seed=3))

    cxr = {
        m.study_uid
        for m in metas
        if m.modality in {"CR", "DR", "DX"} and m.body_part in {"CHEST", "THORAX"}
    }
    produced = {r.study_uid for r in batch.results} | {f.study_uid for f in batch.failures}
    assert produced == cxr
    rejected = next(m for m in metas if m.study_uid not in cxr)
    with pytest.raises(InputError):
        run_cascade(rejected, stub_scorer(seed=3))
