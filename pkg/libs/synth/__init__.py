from .generator import (
    LESION_SENTENCES,
    CorpusSpec,
    ExpectedOutcome,
    SynthCorpus,
    SynthStudy,
    TimeWindowProfile,
    build_corpus,
    generate_corpus,
    load_corpus_spec,
    study_dataset,
    write_corpus,
)

__all__ = [
    "LESION_SENTENCES",
    "CorpusSpec",
    "ExpectedOutcome",
    "SynthCorpus",
    "SynthStudy",
    "TimeWindowProfile",
    "build_corpus",
    "generate_corpus",
    "load_corpus_spec",
    "study_dataset",
    "write_corpus",
]
