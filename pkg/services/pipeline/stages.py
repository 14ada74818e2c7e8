from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path
from typing import Any, Callable, Dict, List, Tuple

import pandas as pd
from pydantic import ValidationError

from libs.ai_cascade import (
    dump_result,
    load_result,
    load_scorer_config,
    run_cascade_batch,
    stub_scorer,
)
from libs.core.errors import InputError, StageError
from libs.core.models import (
    SCHEMA_VERSION,
    AiResult,
    AiStatus,
    ConfusionCounts,
    LesionBox,
    MatchedPair,
    Session,
    StudyMeta,
    write_json_schemas,
)
from libs.core.quality import run_quality_gates
from libs.core.timestamps import format_timestamp
from libs.docgen import write_summary
from libs.evaluator import (
    DEFAULT_IOU_THRESHOLD,
    bootstrap_f1,
    confusion,
    evaluate_detections,
    f1,
    precision,
    prevalence,
    recall,
)
from libs.his_parser import (
    filter_cxr_reports,
    list_session_files,
    load_alias_map,
    parse_session_file,
)
from libs.matcher import match_pairs
from libs.pacs_ingest import admitted, fetch_dicomweb_studies, ingest_dicomweb, ingest_directory
from libs.report_labeler import label_reports, load_templates

from ._utils import (
    read_json,
    read_models,
    read_text,
    record_line,
    require,
    write_json,
    write_jsonl,
)
from .config import RunConfig

logger = logging.getLogger(__name__)

PAIRS_CSV_SCHEMA = f"# schema: cxrval-pairs v{SCHEMA_VERSION}"
PAIRS_CSV_COLUMNS = [
    "study_uid",
    "patient_id",
    "study_time",
    "session_id",
    "report_time",
    "time_delta_seconds",
    "ai_status",
    "report_label",
]


# ------------------------
# Artifact loaders
# ------------------------


def load_studies(cfg: RunConfig, stage: str) -> List[StudyMeta]:
    path = cfg.stage_dir("ingest") / "studies.jsonl"
    return read_models(path, stage, StudyMeta)


def load_results(cfg: RunConfig, stage: str) -> List[AiResult]:
    path = require(cfg.stage_dir("ai") / "results.jsonl", "AI results", stage)
    results: List[AiResult] = []
    for number, line in enumerate(read_text(path, stage).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            results.append(load_result(line))
        except InputError as e:
            raise InputError(e.message, record=e.record or f"{path}:{number}") from e
    return results


def load_sessions(cfg: RunConfig, stage: str) -> List[Session]:
    path = cfg.stage_dir("his") / "sessions.jsonl"
    return read_models(path, stage, Session)


def cxr_sessions(sessions: List[Session], service_id: str) -> List[Session]:
    """Sessions reduced to their CXR-service reports; report positions refer to this view."""
    return [
        s.model_copy(update={"reports": filter_cxr_reports(s, service_id)}) for s in sessions
    ]


def load_pairs(cfg: RunConfig, stage: str) -> List[MatchedPair]:
    path = cfg.stage_dir("match") / "pairs.jsonl"
    return read_models(path, stage, MatchedPair)


def read_pairs_csv(path: Path, stage: str) -> pd.DataFrame:
    require(path, "matched-pair CSV", stage)
    with path.open(encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
    if header != PAIRS_CSV_SCHEMA:
        raise StageError(stage, f"Unexpected CSV schema line {header!r}", record=str(path))
    try:
        return pd.read_csv(path, skiprows=1, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=PAIRS_CSV_COLUMNS)


# ------------------------
# Stages
# ------------------------


def ingest_pacs(cfg: RunConfig) -> Dict[str, Any]:
    stage = "ingest-pacs"
    sources = [s for s in (cfg.pacs_dir, cfg.pacs_json, cfg.pacs_url) if s is not None]
    if len(sources) != 1:
        raise StageError(stage, "Give exactly one of --pacs-dir, --pacs-json, --pacs-url")
    if cfg.pacs_dir is not None:
        records = ingest_directory(require(cfg.pacs_dir, "PACS directory", stage), cfg.workers)
    elif cfg.pacs_json is not None:
        path = require(cfg.pacs_json, "DICOMweb JSON", stage)
        records = ingest_dicomweb(path.read_bytes(), source=path.name)
    else:
        records = ingest_dicomweb(fetch_dicomweb_studies(str(cfg.pacs_url)), source="qido")

    studies = admitted(records)
    out = cfg.stage_dir("ingest")
    write_jsonl(out / "manifest.jsonl", (record_line(r.manifest_line()) for r in records))
    write_jsonl(out / "studies.jsonl", (record_line(m.model_dump(mode="json")) for m in studies))
    reasons = Counter(r.decision.reason.value for r in records)
    summary = {
        "files": len(records),
        "admitted": len(studies),
        "rejected": len(records) - len(studies),
        "reasons": dict(sorted(reasons.items())),
    }
    write_json(out / "summary.json", summary)
    logger.info("Ingested %d PACS records, admitted %d", len(records), len(studies))
    return summary


def run_ai(cfg: RunConfig) -> Dict[str, Any]:
    stage = "run-ai"
    studies = load_studies(cfg, stage)
    config = None
    if cfg.scorer_config is not None:
        config = load_scorer_config(require(cfg.scorer_config, "scorer config", stage))
    scorers = stub_scorer(config, seed=cfg.seed)
    batch = run_cascade_batch(
        studies, scorers, cfg.pa_threshold, cfg.abn_threshold, workers=cfg.workers
    )
    out = cfg.stage_dir("ai")
    write_jsonl(out / "results.jsonl", (dump_result(r) for r in batch.results))
    write_jsonl(
        out / "errors.jsonl", (record_line(f.model_dump(mode="json")) for f in batch.failures)
    )
    summary = batch.tallies()
    write_json(out / "summary.json", summary)
    return summary


def ingest_his(cfg: RunConfig) -> Dict[str, Any]:
    stage = "ingest-his"
    root = require(cfg.his_dir, "HIS directory", stage)
    aliases = None
    if cfg.his_aliases is not None:
        aliases = load_alias_map(require(cfg.his_aliases, "alias map", stage))
    sessions = [parse_session_file(p, aliases) for p in list_session_files(root)]
    ids = Counter(s.session_id for s in sessions)
    dupes = sorted(k for k, n in ids.items() if n > 1)
    if dupes:
        raise InputError(f"Duplicate session ids: {dupes}", record=dupes[0])

    out = cfg.stage_dir("his")
    write_jsonl(out / "sessions.jsonl", (record_line(s.model_dump(mode="json")) for s in sessions))
    cxr = sum(len(filter_cxr_reports(s, cfg.service_id)) for s in sessions)
    summary = {
        "sessions": len(sessions),
        "reports": sum(len(s.reports) for s in sessions),
        "cxr_reports": cxr,
        "service_id": cfg.service_id,
    }
    write_json(out / "summary.json", summary)
    logger.info("Parsed %d sessions with %d CXR reports", len(sessions), cxr)
    return summary


def match(cfg: RunConfig) -> Dict[str, Any]:
    stage = "match"
    # Invalid results carry no status to compare and never enter matching.
    results = [r for r in load_results(cfg, stage) if r.status is not AiStatus.INVALID]
    sessions = cxr_sessions(load_sessions(cfg, stage), cfg.service_id)
    outcome = match_pairs(results, sessions, cfg.window)

    out = cfg.stage_dir("match")
    write_jsonl(
        out / "pairs.jsonl", (record_line(p.model_dump(mode="json")) for p in outcome.pairs)
    )
    write_jsonl(out / "unmatched_ai.jsonl", (dump_result(r) for r in outcome.unmatched_ai))
    write_jsonl(
        out / "unmatched_reports.jsonl",
        (record_line(u.model_dump(mode="json")) for u in outcome.unmatched_reports),
    )
    summary = {
        "window_hours": cfg.window_hours,
        "ai_results": len(results),
        "pairs": len(outcome.pairs),
        "unmatched_ai": len(outcome.unmatched_ai),
        "unmatched_reports": len(outcome.unmatched_reports),
    }
    write_json(out / "summary.json", summary)
    return summary


def label(cfg: RunConfig) -> Dict[str, Any]:
    stage = "label"
    pairs = load_pairs(cfg, stage)
    template_path = require(cfg.templates, "template file", stage) if cfg.templates else None
    labels, quality_tally = label_reports(
        (p.report.description for p in pairs), load_templates(template_path)
    )

    rows = [
        {
            "study_uid": p.ai.study_uid,
            "patient_id": p.ai.patient_id,
            "study_time": format_timestamp(p.ai.study_time),
            "session_id": p.session_id,
            "report_time": format_timestamp(p.report.report_time),
            "time_delta_seconds": int(p.time_delta.total_seconds()),
            "ai_status": p.ai.status.value,
            "report_label": lab.overall.value,
        }
        for p, lab in zip(pairs, labels)
    ]
    out = cfg.stage_dir("label")
    out.mkdir(parents=True, exist_ok=True)
    with (out / "pairs.csv").open("w", encoding="utf-8", newline="") as f:
        f.write(PAIRS_CSV_SCHEMA + "\n")
        pd.DataFrame(rows, columns=PAIRS_CSV_COLUMNS).to_csv(f, index=False, lineterminator="\n")
    write_jsonl(
        out / "labels.jsonl",
        (
            record_line({"study_uid": p.ai.study_uid, **lab.model_dump(mode="json")})
            for p, lab in zip(pairs, labels)
        ),
    )
    summary = quality_tally.model_dump(mode="json")
    write_json(out / "summary.json", summary)
    return summary


def evaluate(cfg: RunConfig) -> Dict[str, Any]:
    stage = "evaluate"
    path = cfg.stage_dir("label") / "pairs.csv"
    frame = read_pairs_csv(path, stage)
    if frame.empty:
        raise StageError(stage, "no pairs to evaluate", record=str(path))
    try:
        counts = confusion(zip(frame["ai_status"], frame["report_label"]))
    except InputError as e:
        raise StageError(stage, e.message, record=str(path)) from e
    boot = bootstrap_f1(counts, cfg.bootstrap_n, cfg.seed, cfg.histogram_bins)
    histogram = [b.model_dump() for b in boot.histogram]

    evaluation = {
        "schema_version": SCHEMA_VERSION,
        "counts": counts.model_dump(),
        "point_f1": f1(counts),
        "precision": precision(counts),
        "recall": recall(counts),
        "prevalence": prevalence(counts),
        "bootstrap": {
            "mean": boot.mean_f1,
            "ci_low": boot.ci_low,
            "ci_high": boot.ci_high,
            "n": boot.n_resamples,
            "seed": boot.seed,
            "rng": boot.rng,
            "histogram": histogram,
        },
    }
    out = cfg.stage_dir("evaluate")
    write_json(out / "evaluation.json", evaluation)
    write_json(
        out / "confusion_matrix.json",
        {
            "schema_version": SCHEMA_VERSION,
            "rows": "ai_status",
            "columns": "report_label",
            "labels": ["Abnormal", "Normal"],
            "matrix": [[counts.tp, counts.fp], [counts.fn, counts.tn]],
        },
    )
    pd.DataFrame(histogram, columns=["bin_low", "bin_high", "count"]).to_csv(
        out / "histogram.csv", index=False, lineterminator="\n"
    )
    write_summary(evaluation, out)
    return {
        "counts": evaluation["counts"],
        "point_f1": evaluation["point_f1"],
        "mean_f1": boot.mean_f1,
        "ci_low": boot.ci_low,
        "ci_high": boot.ci_high,
    }


def quality(cfg: RunConfig) -> Dict[str, Any]:
    stage = "quality"
    label_summary = read_json(cfg.stage_dir("label") / "summary.json", stage)
    evaluation = read_json(cfg.stage_dir("evaluate") / "evaluation.json", stage)
    report = run_quality_gates(
        {
            "admitted": load_studies(cfg, stage),
            "ai_results": load_results(cfg, stage),
            "sessions": cxr_sessions(load_sessions(cfg, stage), cfg.service_id),
            "pairs": load_pairs(cfg, stage),
            "counts": ConfusionCounts.model_validate(evaluation.get("counts") or {}),
            "window": cfg.window,
            "empty_descriptions": label_summary.get("empty_descriptions", 0),
        }
    )
    write_json(cfg.out / "quality.json", report)
    for warning in report["warnings"]:
        logger.warning("Quality: %s", warning)
    return report


STAGES: Tuple[Tuple[str, Callable[[RunConfig], Dict[str, Any]]], ...] = (
    ("ingest-pacs", ingest_pacs),
    ("run-ai", run_ai),
    ("ingest-his", ingest_his),
    ("match", match),
    ("label", label),
    ("evaluate", evaluate),
)


def run_all(cfg: RunConfig) -> Dict[str, Any]:
    """Run every stage in order through the artifact files, then the quality gates."""
    summary: Dict[str, Any] = {}
    for name, fn in STAGES:
        logger.info("Stage %s", name)
        try:
            summary[name] = fn(cfg)
        except StageError:
            raise
        except InputError as e:
            raise StageError(name, e.message, record=e.record) from e
    report = quality(cfg)
    write_json_schemas(cfg.out / "schemas")
    summary["quality"] = report
    if report["status"] != "PASSED":
        raise StageError(
            "quality", "; ".join(report["errors"]), record=str(cfg.out / "quality.json")
        )
    return summary


def detection_eval(
    predictions: Path, truths: Path, out: Path, iou_threshold: float = DEFAULT_IOU_THRESHOLD
) -> Dict[str, Any]:
    """Per-class AP and mAP from two JSON files mapping image id to box lists."""
    stage = "detection-eval"

    def boxes(path: Path) -> Dict[str, List[LesionBox]]:
        doc = read_json(path, stage)
        if not isinstance(doc, dict):
            raise StageError(stage, "expected an object keyed by image id", record=str(path))
        try:
            return {
                str(image): [LesionBox.model_validate(b) for b in items]
                for image, items in doc.items()
            }
        except (TypeError, ValidationError) as e:
            raise StageError(stage, f"Invalid boxes: {e}", record=str(path)) from e

    result = evaluate_detections(boxes(predictions), boxes(truths), iou_threshold)
    write_json(out / "detection" / "detection.json", {"schema_version": SCHEMA_VERSION, **result})
    return {"mAP": result["mAP"], "iou_threshold": iou_threshold}
