"""Statistics over evolution logs: per-iteration gains and their summaries.

A gain sample is the score delta a refinement iteration produced against the
incumbent it challenged (candidate overall minus incumbent-before). Iteration
0 establishes the baseline and contributes no sample; iterations whose
proposal never reached evaluation (null verdict) are skipped.

Randomized procedures are fully pinned so independent implementations agree
bit-for-bit given the same seed:

- bootstrap CI: ``numpy.random.default_rng(seed)``, 10,000 resamples drawn as
  ``rng.integers(0, n, size=(10000, n))``, 95% interval from
  ``numpy.percentile(means, [2.5, 97.5])`` (linear interpolation);
- permutation test: ``numpy.random.default_rng(seed + 1)``, 10,000 sign
  flips drawn as ``rng.integers(0, 2, size=(10000, n)) * 2 - 1``, two-sided
  p-value with add-one smoothing:
  ``(1 + #{|mean(flipped)| >= |mean(observed)|}) / (10000 + 1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

N_BOOTSTRAP = 10_000
"""Bootstrap resample count for the 95% confidence interval."""

N_PERMUTATION = 10_000
"""Sign-flip count for the permutation test."""


class LogFormatError(ValueError):
    """An evolution log line is not valid JSON or lacks required fields."""


@dataclass(frozen=True)
class GainSample:
    """One refinement iteration's score delta against its incumbent."""

    run_id: str
    task_id: str
    iteration: int
    gain: float
    accepted: bool


@dataclass(frozen=True)
class GainStats:
    n: int
    mean: float
    sem: float
    ci_low: float
    ci_high: float
    cohens_d: float
    p_value: float


def load_log(path: str) -> list[dict]:
    """Read one JSONL evolution log into a list of record dicts."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            if not isinstance(record, dict) or "record" not in record:
                raise LogFormatError(f"{path}:{lineno}: missing record field")
            records.append(record)
    return records


def extract_gains(records: Iterable[dict]) -> list[GainSample]:
    """Pull gain samples out of one log's records.

    Only refinement iterations count: ``iteration >= 1`` with a non-null
    verdict. The baseline evaluation at iteration 0 has nothing to be
    compared against, and proposal-exhausted iterations never produced a
    candidate to score.
    """
    run_id = ""
    task_id = ""
    samples = []
    for record in records:
        kind = record.get("record")
        if kind == "header":
            run_id = str(record.get("run_id", ""))
            task_id = str(record.get("task_id", ""))
            continue
        if kind != "iteration":
            continue
        iteration = record.get("iteration")
        verdict = record.get("verdict")
        before = record.get("incumbent_before")
        if not isinstance(iteration, int) or iteration < 1 or verdict is None:
            continue
        if not isinstance(verdict, dict) or "overall" not in verdict or before is None:
            raise LogFormatError(f"iteration {iteration}: malformed verdict or incumbent_before")
        samples.append(
            GainSample(
                run_id=run_id,
                task_id=task_id,
                iteration=iteration,
                gain=float(verdict["overall"]) - float(before),
                accepted=bool(record.get("accepted", False)),
            )
        )
    return samples


def extract_gains_from_paths(paths: Sequence[str]) -> list[GainSample]:
    samples: list[GainSample] = []
    for path in paths:
        samples.extend(extract_gains(load_log(path)))
    return samples


def usage_by_model(records: Iterable[dict]) -> dict[str, dict]:
    """Sum token usage across a log's iteration records, keyed by model_ref."""
    totals: dict[str, dict] = {}
    for record in records:
        if record.get("record") != "iteration":
            continue
        for usage in record.get("usage", []):
            ref = str(usage.get("model_ref", ""))
            slot = totals.setdefault(
                ref, {"input_tokens": 0, "output_tokens": 0, "estimated": False}
            )
            slot["input_tokens"] += int(usage.get("input_tokens", 0))
            slot["output_tokens"] += int(usage.get("output_tokens", 0))
            slot["estimated"] = slot["estimated"] or bool(usage.get("estimated", False))
    return totals


def _cohens_d(values: np.ndarray) -> float:
    mean = float(values.mean())
    if values.size < 2:
        return 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    std = float(values.std(ddof=1))
    if std == 0.0:
        return 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    return mean / std


def compute_stats(
    gains: Sequence[float],
    seed: int,
    n_bootstrap: int = N_BOOTSTRAP,
    n_permutation: int = N_PERMUTATION,
) -> GainStats:
    """Summary statistics for a set of gain samples.

    ``sem`` uses the sample standard deviation (ddof=1) and is 0.0 for a
    single sample. ``cohens_d`` is mean over sample standard deviation; with
    zero variance it degenerates to signed infinity (0.0 when the mean is
    also zero). CI and p-value follow the pinned procedures in the module
    docstring.
    """
    if not len(gains):
        raise ValueError("no gain samples")
    values = np.asarray(list(gains), dtype=float)
    n = int(values.size)
    mean = float(values.mean())

    if n >= 2:
        sem = float(values.std(ddof=1)) / math.sqrt(n)
    else:
        sem = 0.0

    boot_rng = np.random.default_rng(seed)
    indices = boot_rng.integers(0, n, size=(n_bootstrap, n))
    boot_means = values[indices].mean(axis=1)
    ci_low, ci_high = np.percentile(boot_means, [2.5, 97.5])

    perm_rng = np.random.default_rng(seed + 1)
    flips = perm_rng.integers(0, 2, size=(n_permutation, n)) * 2 - 1
    perm_means = (values[np.newaxis, :] * flips).mean(axis=1)
    exceed = int(np.count_nonzero(np.abs(perm_means) >= abs(mean)))
    p_value = (1 + exceed) / (n_permutation + 1)

    return GainStats(
        n=n,
        mean=mean,
        sem=sem,
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        cohens_d=_cohens_d(values),
        p_value=float(p_value),
    )
