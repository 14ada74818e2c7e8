from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

from jinja2 import Environment, FileSystemLoader, StrictUndefined


def _env() -> Environment:
    templates_dir = Path(__file__).resolve().parent / "templates"
    return Environment(
        loader=FileSystemLoader(str(templates_dir)),
        autoescape=False,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
        undefined=StrictUndefined,
    )


def _ensure_dir(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)


def render_summary(evaluation: Dict[str, Any]) -> str:
    """Render the Markdown summary (confusion matrix and F1 histogram) of an evaluation."""
    template = _env().get_template("summary.md.j2")
    return template.render(evaluation=evaluation)


def write_summary(evaluation: Dict[str, Any], out_dir: Path) -> Path:
    _ensure_dir(out_dir)
    path = out_dir / "summary.md"
    path.write_text(render_summary(evaluation), encoding="utf-8")
    return path
