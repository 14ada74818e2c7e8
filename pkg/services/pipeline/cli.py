from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Annotated, Any, Callable, Dict, Optional

import typer
from dotenv import load_dotenv

from libs.core.errors import ConfigError, CxrValError, StageError
from libs.core.models import ConfusionCounts
from libs.synth import CorpusSpec, generate_corpus, load_corpus_spec

from . import stages
from ._utils import env
from .config import RunConfig, resolve_config

load_dotenv()

logger = logging.getLogger("cxrval")

app = typer.Typer(help="Chest X-ray AI validation pipeline", no_args_is_help=True)

# Options default to None so that environment and config-file values can fill them.
PacsDir = Annotated[Optional[Path], typer.Option("--pacs-dir", help="DICOM part-10 directory")]
PacsJson = Annotated[Optional[Path], typer.Option("--pacs-json", help="DICOMweb JSON document")]
PacsUrl = Annotated[Optional[str], typer.Option("--pacs-url", help="DICOMweb base URL")]
HisDir = Annotated[Optional[Path], typer.Option("--his-dir", help="HIS session XML directory")]
HisAliases = Annotated[
    Optional[Path], typer.Option("--his-aliases", help="JSON map of HIS element names")
]
Templates = Annotated[Optional[Path], typer.Option("--templates", help="Template JSON file")]
ScorerConfig = Annotated[
    Optional[Path], typer.Option("--scorer-config", help="Stub scorer JSON config")
]
ServiceId = Annotated[Optional[str], typer.Option("--service-id", help="CXR service id in HIS")]
PaThreshold = Annotated[Optional[float], typer.Option("--pa-threshold")]
AbnThreshold = Annotated[Optional[float], typer.Option("--abn-threshold")]
WindowHours = Annotated[
    Optional[str], typer.Option("--window-hours", help="Hours, e.g. 24, 0 or 0h. Default 24")
]
BootstrapN = Annotated[Optional[int], typer.Option("--bootstrap-n", help="Default 10000")]
Seed = Annotated[Optional[int], typer.Option("--seed")]
HistogramBins = Annotated[Optional[int], typer.Option("--histogram-bins", help="Default 50")]
Workers = Annotated[Optional[int], typer.Option("--workers")]
Out = Annotated[Optional[Path], typer.Option("--out", help="Artifact directory")]
ConfigFile = Annotated[Optional[Path], typer.Option("--config", help="JSON config file")]


def _print_result(result: Dict[str, Any]) -> None:
    typer.echo(json.dumps(result, indent=2, ensure_ascii=False))


def _fail(stage: str, err: CxrValError) -> None:
    diagnostic = {"status": "failed", "stage": getattr(err, "stage", stage), **err.to_dict()}
    logger.error("%s failed: %s", diagnostic["stage"], err.message)
    typer.echo(json.dumps(diagnostic, ensure_ascii=False), err=True)
    raise typer.Exit(code=1)


def _execute(
    stage: str,
    fn: Callable[[RunConfig], Dict[str, Any]],
    flags: Dict[str, Any],
    config: Optional[Path],
) -> None:
    try:
        cfg = resolve_config(flags, config)
        result = fn(cfg)
    except CxrValError as e:
        _fail(stage, e)
        return
    except OSError as e:
        _fail(stage, StageError(stage, str(e), record=e.filename and str(e.filename)))
        return
    _print_result({"status": "ok", "stage": stage, "out": str(cfg.out), **result})


@app.callback()
def _setup(
    log_level: Annotated[
        Optional[str], typer.Option("--log-level", help="DEBUG, INFO, WARNING, ERROR")
    ] = None,
) -> None:
    level = (log_level or env("log_level") or "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO))


@app.command("ingest-pacs")
def ingest_pacs(
    pacs_dir: PacsDir = None,
    pacs_json: PacsJson = None,
    pacs_url: PacsUrl = None,
    workers: Workers = None,
    out: Out = None,
    config: ConfigFile = None,
) -> None:
    """Read study metadata and keep chest radiographs."""
    flags = dict(
        pacs_dir=pacs_dir, pacs_json=pacs_json, pacs_url=pacs_url, workers=workers, out=out
    )
    _execute("ingest-pacs", stages.ingest_pacs, flags, config)


@app.command("run-ai")
def run_ai(
    scorer_config: ScorerConfig = None,
    pa_threshold: PaThreshold = None,
    abn_threshold: AbnThreshold = None,
    seed: Seed = None,
    workers: Workers = None,
    out: Out = None,
    config: ConfigFile = None,
) -> None:
    """Run the PA / abnormality / lesion cascade over admitted studies."""
    flags = dict(
        scorer_config=scorer_config,
        pa_threshold=pa_threshold,
        abn_threshold=abn_threshold,
        seed=seed,
        workers=workers,
        out=out,
    )
    _execute("run-ai", stages.run_ai, flags, config)


@app.command("ingest-his")
def ingest_his(
    his_dir: HisDir = None,
    his_aliases: HisAliases = None,
    service_id: ServiceId = None,
    out: Out = None,
    config: ConfigFile = None,
) -> None:
    """Parse HIS session exports."""
    flags = dict(his_dir=his_dir, his_aliases=his_aliases, service_id=service_id, out=out)
    _execute("ingest-his", stages.ingest_his, flags, config)


@app.command("match")
def match(
    service_id: ServiceId = None,
    window_hours: WindowHours = None,
    out: Out = None,
    config: ConfigFile = None,
) -> None:
    """Link AI results to CXR reports."""
    flags = dict(service_id=service_id, window_hours=window_hours, out=out)
    _execute("match", stages.match, flags, config)


@app.command("label")
def label(templates: Templates = None, out: Out = None, config: ConfigFile = None) -> None:
    """Label matched reports Normal/Abnormal by template containment."""
    _execute("label", stages.label, dict(templates=templates, out=out), config)


@app.command("evaluate")
def evaluate(
    bootstrap_n: BootstrapN = None,
    seed: Seed = None,
    histogram_bins: HistogramBins = None,
    out: Out = None,
    config: ConfigFile = None,
) -> None:
    """Confusion matrix, F1 and bootstrap confidence interval."""
    flags = dict(bootstrap_n=bootstrap_n, seed=seed, histogram_bins=histogram_bins, out=out)
    _execute("evaluate", stages.evaluate, flags, config)


@app.command("run-all")
def run_all(
    pacs_dir: PacsDir = None,
    pacs_json: PacsJson = None,
    pacs_url: PacsUrl = None,
    his_dir: HisDir = None,
    his_aliases: HisAliases = None,
    templates: Templates = None,
    scorer_config: ScorerConfig = None,
    service_id: ServiceId = None,
    pa_threshold: PaThreshold = None,
    abn_threshold: AbnThreshold = None,
    window_hours: WindowHours = None,
    bootstrap_n: BootstrapN = None,
    seed: Seed = None,
    histogram_bins: HistogramBins = None,
    workers: Workers = None,
    out: Out = None,
    config: ConfigFile = None,
) -> None:
    """Chain every stage, then write quality.json."""
    flags = {k: v for k, v in locals().items() if k != "config"}
    _execute("run-all", stages.run_all, flags, config)


@app.command("synth")
def synth(
    out: Annotated[Path, typer.Option("--out", help="Corpus directory")],
    spec: Annotated[Optional[Path], typer.Option("--spec", help="CorpusSpec JSON file")] = None,
    tp: int = 5,
    fp: int = 3,
    fn: int = 2,
    tn: int = 10,
    unmatched_ai: int = 0,
    unmatched_reports: int = 0,
    invalid_rate: float = 0.0,
    non_cxr_studies: int = 0,
    seed: int = 0,
    output_format: Annotated[str, typer.Option("--format", help="dicom or dicomweb")] = "dicom",
) -> None:
    """Write a synthetic corpus whose pipeline run yields known counts."""
    try:
        if spec is not None:
            corpus_spec = load_corpus_spec(spec)
        else:
            corpus_spec = CorpusSpec.from_counts(
                ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn),
                unmatched_ai=unmatched_ai,
                invalid_rate=invalid_rate,
                unmatched_reports=unmatched_reports,
                non_cxr_studies=non_cxr_studies,
                seed=seed,
                output_format=output_format,
            )
        manifest = generate_corpus(corpus_spec, out)
    except CxrValError as e:
        _fail("synth", e)
        return
    except ValueError as e:
        _fail("synth", ConfigError(f"Inconsistent corpus spec: {e}"))
        return
    _print_result(
        {
            "status": "ok",
            "stage": "synth",
            "out": str(out),
            "studies": corpus_spec.n_studies + corpus_spec.non_cxr_studies,
            "artifacts": len(manifest.artifacts),
        }
    )


@app.command("detection-eval")
def detection_eval(
    predictions: Annotated[Path, typer.Option("--predictions")],
    truths: Annotated[Path, typer.Option("--truths")],
    out: Annotated[Path, typer.Option("--out")] = Path("out"),
    iou_threshold: Annotated[float, typer.Option("--iou-threshold")] = 0.4,
) -> None:
    """Per-class AP@IoU and mAP over the 17 lesion classes."""
    try:
        result = stages.detection_eval(predictions, truths, out, iou_threshold)
    except CxrValError as e:
        _fail("detection-eval", e)
        return
    _print_result({"status": "ok", "stage": "detection-eval", **result})


def main() -> None:
    app()


if __name__ == "__main__":
    main()
