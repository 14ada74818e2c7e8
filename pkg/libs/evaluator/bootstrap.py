from __future__ import annotations

import logging
from typing import Iterable, List, Tuple, Union

import numpy as np

from libs.core.errors import InputError
from libs.core.models import BootstrapSummary, ConfusionCounts, HistogramBin
from libs.evaluator.metrics import StatusLike, confusion

logger = logging.getLogger(__name__)

RNG_NAME = "PCG64"
BLOCK_SIZE = 4096
CI_PERCENTILES = (2.5, 97.5)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def f1_vector(cells: np.ndarray) -> np.ndarray:
    """Row-wise F1 over an (n, 4) array of tp, fp, fn, tn counts."""
    tp = cells[:, 0].astype(float)
    denominator = tp + (cells[:, 1] + cells[:, 2]) / 2.0
    safe = np.where(denominator > 0, denominator, 1.0)
    return np.where(denominator > 0, tp / safe, 1.0)


def resample_counts(counts: ConfusionCounts, n_resamples: int, seed: int) -> np.ndarray:
    """Confusion cells of `n_resamples` with-replacement resamples of size counts.total.

    Resampling pairs only changes how many land in each of the four cells, so
    each resample is one multinomial draw. Block b always uses the substream
    (seed, b), independent of how many blocks are requested.
    """
    n = counts.total
    p = np.array([counts.tp, counts.fp, counts.fn, counts.tn], dtype=float) / n
    blocks: List[np.ndarray] = []
    remaining = n_resamples
    block = 0
    while remaining > 0:
        size = min(BLOCK_SIZE, remaining)
        blocks.append(_block_rng(seed, block).multinomial(n, p, size=size))
        remaining -= size
        block += 1
    return np.concatenate(blocks, axis=0)


def histogram(values: np.ndarray, bins: int = 50) -> List[HistogramBin]:
    counts, edges = np.histogram(values, bins=bins)
    return [
        HistogramBin(bin_low=float(edges[i]), bin_high=float(edges[i + 1]), count=int(c))
        for i, c in enumerate(counts)
    ]


def bootstrap_f1(
    pairs: Union[ConfusionCounts, Iterable[Tuple[StatusLike, StatusLike]]],
    n_resamples: int = 10000,
    seed: int = 0,
    bins: int = 50,
) -> BootstrapSummary:
    """Mean F1 and 95% percentile interval over bootstrap resamples of the pairs."""
    counts = pairs if isinstance(pairs, ConfusionCounts) else confusion(pairs)
    if counts.total == 0:
        raise InputError("bootstrap_f1 needs at least one pair")
    if n_resamples < 1:
        raise InputError(f"n_resamples must be >= 1, got {n_resamples}")
    if bins < 1:
        raise InputError(f"bins must be >= 1, got {bins}")

    scores = f1_vector(resample_counts(counts, n_resamples, seed))
    low, high = np.percentile(scores, CI_PERCENTILES)
    summary = BootstrapSummary(
        mean_f1=float(scores.mean()),
        ci_low=float(low),
        ci_high=float(high),
        n_resamples=n_resamples,
        seed=seed,
        rng=RNG_NAME,
        histogram=histogram(scores, bins),
    )
    logger.info(
        "Bootstrap F1 %.4f (95%% CI %.4f, %.4f) over %d resamples",
        summary.mean_f1,
        summary.ci_low,
        summary.ci_high,
        n_resamples,
    )
    return summary
