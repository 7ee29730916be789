"""Tests for gain extraction and summary statistics over evolution logs."""

from __future__ import annotations

import json
import math
import random

import numpy as np
import pytest

from flowsmith.stats import (
    GainSample,
    LogFormatError,
    compute_stats,
    extract_gains,
    extract_gains_from_paths,
    load_log,
    usage_by_model,
)


def _header(run_id="r1", task_id="t1") -> dict:
    return {"record": "header", "run_id": run_id, "task_id": task_id}


def _iteration(i, overall, before, accepted, usage=()) -> dict:
    return {
        "record": "iteration",
        "iteration": i,
        "candidate_workflow_id": f"wf-{i}",
        "mutation": None if i == 0 else "prompt_refine(a)",
        "verdict": None
        if overall is None
        else {"g": overall, "c": overall, "q": overall, "a": overall, "overall": overall, "feedback": "f"},
        "accepted": accepted,
        "incumbent_before": before,
        "incumbent_after": overall if accepted and overall is not None else before,
        "usage": list(usage),
    }


def _terminal() -> dict:
    return {"record": "terminal", "reason": "iteration_cap", "iterations": 2}


class TestExtractGains:
    def test_baseline_iteration_contributes_no_sample(self):
        records = [_header(), _iteration(0, 0.5, None, True), _terminal()]
        assert extract_gains(records) == []

    def test_gain_is_candidate_minus_incumbent_before(self):
        records = [
            _header(),
            _iteration(0, 0.5, None, True),
            _iteration(1, 0.7, 0.5, True),
            _iteration(2, 0.6, 0.7, False),
            _terminal(),
        ]
        samples = extract_gains(records)
        assert [s.iteration for s in samples] == [1, 2]
        assert samples[0].gain == pytest.approx(0.2)
        assert samples[0].accepted is True
        assert samples[1].gain == pytest.approx(-0.1)
        assert samples[1].accepted is False
        assert all(s.run_id == "r1" and s.task_id == "t1" for s in samples)

    def test_null_verdict_iterations_skipped(self):
        records = [
            _header(),
            _iteration(0, 0.5, None, True),
            _iteration(1, None, 0.5, False),
            _iteration(2, 0.8, 0.5, True),
            _terminal(),
        ]
        samples = extract_gains(records)
        assert [s.iteration for s in samples] == [2]

    def test_malformed_iteration_rejected(self):
        bad = [
            _header(),
            {"record": "iteration", "iteration": 1, "verdict": {"feedback": "no overall"},
             "incumbent_before": 0.5},
        ]
        with pytest.raises(LogFormatError):
            extract_gains(bad)

    def test_multiple_paths_concatenate(self, tmp_path):
        paths = []
        for name, score in (("a", 0.6), ("b", 0.9)):
            records = [
                _header(run_id=name),
                _iteration(0, 0.5, None, True),
                _iteration(1, score, 0.5, True),
                _terminal(),
            ]
            path = tmp_path / f"{name}.jsonl"
            path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
            paths.append(str(path))
        samples = extract_gains_from_paths(paths)
        assert [s.run_id for s in samples] == ["a", "b"]
        assert [round(s.gain, 6) for s in samples] == [0.1, 0.4]


class TestLoadLog:
    def test_rejects_invalid_json_line(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text('{"record": "header"}\nnot json\n', encoding="utf-8")
        with pytest.raises(LogFormatError):
            load_log(str(path))

    def test_rejects_record_without_kind(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text('{"iteration": 1}\n', encoding="utf-8")
        with pytest.raises(LogFormatError):
            load_log(str(path))

    def test_skips_blank_lines(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text('{"record": "header"}\n\n{"record": "terminal"}\n', encoding="utf-8")
        assert len(load_log(str(path))) == 2


class TestUsageByModel:
    def test_sums_tokens_per_model(self):
        records = [
            _header(),
            _iteration(0, 0.5, None, True, usage=[
                {"model_ref": "agent_model", "input_tokens": 10, "output_tokens": 5, "estimated": True},
                {"model_ref": "judge_model", "input_tokens": 7, "output_tokens": 3, "estimated": False},
            ]),
            _iteration(1, 0.6, 0.5, True, usage=[
                {"model_ref": "agent_model", "input_tokens": 20, "output_tokens": 8, "estimated": False},
            ]),
            _terminal(),
        ]
        totals = usage_by_model(records)
        assert totals["agent_model"] == {"input_tokens": 30, "output_tokens": 13, "estimated": True}
        assert totals["judge_model"] == {"input_tokens": 7, "output_tokens": 3, "estimated": False}


class TestComputeStats:
    def test_hand_worked_two_samples(self):
        # gains [0.2, -0.1]: mean 0.05, sample std 0.2121..., sem std/sqrt(2).
        stats = compute_stats([0.2, -0.1], seed=7)
        assert stats.n == 2
        assert stats.mean == pytest.approx(0.05, abs=1e-12)
        expected_std = math.sqrt(((0.2 - 0.05) ** 2 + (-0.1 - 0.05) ** 2) / 1)
        assert stats.sem == pytest.approx(expected_std / math.sqrt(2), abs=1e-12)
        assert stats.cohens_d == pytest.approx(0.05 / expected_std, abs=1e-12)

    def test_single_sample_degenerates(self):
        stats = compute_stats([0.3], seed=7)
        assert stats.n == 1
        assert stats.sem == 0.0
        assert stats.cohens_d == math.inf
        assert stats.ci_low == stats.ci_high == pytest.approx(0.3)

    def test_zero_variance_positive_gains(self):
        # Identical positive gains (0.25 is an exact binary fraction, so the
        # variance is exactly zero): d is signed infinity, and any sign flip
        # shrinks |mean|, so p sits at the add-one floor.
        n = 30
        stats = compute_stats([0.25] * n, seed=11)
        assert stats.cohens_d == math.inf
        assert stats.p_value == pytest.approx(1 / 10001)
        assert stats.ci_low == stats.ci_high == pytest.approx(0.25)

    def test_zero_variance_negative_gains(self):
        stats = compute_stats([-0.25] * 20, seed=11)
        assert stats.cohens_d == -math.inf
        assert stats.mean == pytest.approx(-0.25)

    def test_uniform_decimal_gains_hit_p_floor(self):
        # 0.1 is not an exact binary fraction — the variance is tiny but
        # nonzero — yet the permutation floor still holds: no flipped row
        # reaches the observed |mean|.
        stats = compute_stats([0.1] * 30, seed=11)
        assert stats.p_value == pytest.approx(1 / 10001)
        assert stats.mean == pytest.approx(0.1)

    def test_all_zero_gains(self):
        stats = compute_stats([0.0] * 5, seed=3)
        assert stats.cohens_d == 0.0
        assert stats.mean == 0.0
        # |perm mean| >= 0 always holds, so p is exactly 1.
        assert stats.p_value == pytest.approx(1.0)

    def test_symmetric_gains_not_significant(self):
        # Perfectly balanced gains: observed |mean| is 0, every permutation
        # ties or exceeds it, p is exactly 1.
        stats = compute_stats([0.1, -0.1] * 10, seed=5)
        assert stats.mean == pytest.approx(0.0)
        assert stats.p_value == pytest.approx(1.0)

    def test_deterministic_given_seed(self):
        rng = random.Random(13)
        gains = [rng.gauss(0.02, 0.05) for _ in range(40)]
        a = compute_stats(gains, seed=99)
        b = compute_stats(gains, seed=99)
        assert a == b

    def test_different_seed_moves_randomized_outputs(self):
        rng = random.Random(14)
        gains = [rng.gauss(0.02, 0.05) for _ in range(40)]
        a = compute_stats(gains, seed=1)
        b = compute_stats(gains, seed=2)
        assert a.mean == b.mean and a.sem == b.sem
        assert (a.ci_low, a.ci_high, a.p_value) != (b.ci_low, b.ci_high, b.p_value)

    def test_empty_gains_rejected(self):
        with pytest.raises(ValueError):
            compute_stats([], seed=1)

    def test_ci_brackets_mean_for_real_data(self):
        rng = random.Random(15)
        gains = [rng.gauss(0.05, 0.02) for _ in range(100)]
        stats = compute_stats(gains, seed=21)
        assert stats.ci_low < stats.mean < stats.ci_high
        assert stats.ci_high - stats.ci_low < 0.02

    def test_matches_independent_reimplementation(self):
        # Oracle: same pinned RNG procedures, written separately from the
        # module under test, plus numpy reference values for mean/sem/d.
        rng = random.Random(16)
        for trial in range(20):
            n = rng.randint(2, 60)
            gains = [rng.gauss(0.0, 0.1) for _ in range(n)]
            seed = rng.randint(0, 10_000)
            stats = compute_stats(gains, seed=seed)

            arr = np.array(gains)
            assert stats.mean == pytest.approx(float(arr.mean()), abs=1e-12)
            assert stats.sem == pytest.approx(float(arr.std(ddof=1)) / math.sqrt(n), abs=1e-12)
            assert stats.cohens_d == pytest.approx(float(arr.mean() / arr.std(ddof=1)), abs=1e-12)

            boot = np.random.default_rng(seed)
            idx = boot.integers(0, n, size=(10_000, n))
            means = arr[idx].mean(axis=1)
            lo, hi = np.percentile(means, [2.5, 97.5])
            assert stats.ci_low == lo
            assert stats.ci_high == hi

            perm = np.random.default_rng(seed + 1)
            flips = perm.integers(0, 2, size=(10_000, n)) * 2 - 1
            perm_means = (arr[None, :] * flips).mean(axis=1)
            exceed = int(np.count_nonzero(np.abs(perm_means) >= abs(arr.mean())))
            assert stats.p_value == (1 + exceed) / 10_001
