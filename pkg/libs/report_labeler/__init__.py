from .labeler import (
    DEFAULT_TEMPLATES_PATH,
    LabelQuality,
    TemplateSet,
    label_region,
    label_report,
    label_reports,
    load_templates,
    normalize_text,
)

__all__ = [
    "DEFAULT_TEMPLATES_PATH",
    "LabelQuality",
    "TemplateSet",
    "label_region",
    "label_report",
    "label_reports",
    "load_templates",
    "normalize_text",
]
