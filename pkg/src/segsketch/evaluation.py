"""Epoch runner, scoring, and benchmarking for any detector.

A detector is anything exposing ``update(src, dst)``, ``detect()`` and
``reset()``; an optional ``update_batch(srcs, dsts)`` fast path is used
when present. Reports are iterables of entries with ``host`` and
``estimate`` attributes.

Scoring conventions (applied consistently and echoed in output
metadata): an empty report scores precision 1, an empty positive set
scores recall 1, F1 is 0 when both precision and recall are 0, and the
average relative error is computed over true-positive reports only.
False positives have no defined subnet cardinality to compare against;
they are already penalised through precision.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from statistics import median
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .workload import GroundTruth, SPREADER_ROLE, Trace

SCORING_CONVENTIONS = (
    "precision=1 when nothing is reported; recall=1 when the truth has no "
    "positives; F1=0 when precision+recall=0; ARE over true-positive reports only"
)


class Detector(Protocol):
    def update(self, src: int, dst: int) -> object: ...

    def detect(self) -> Sequence: ...

    def reset(self) -> None: ...


@dataclass(frozen=True)
class MetricsSummary:
    precision: float
    recall: float
    f1: float
    are: float
    throughput_mpps: float
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "are": self.are,
            "throughput_mpps": self.throughput_mpps,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


def _feed(detector, trace: Trace) -> None:
    batch = getattr(detector, "update_batch", None)
    if batch is not None:
        batch(trace.srcs, trace.dsts)
        return
    update = detector.update
    for src, dst in zip(trace.srcs.tolist(), trace.dsts.tolist()):
        update(src, dst)


def run_epoch(detector, trace: Trace) -> tuple[list, float]:
    """Feed every record, then sweep. Returns (report, update seconds)."""
    start = time.perf_counter()
    _feed(detector, trace)
    elapsed = time.perf_counter() - start
    return list(detector.detect()), elapsed


def score(
    report: Iterable,
    truth: GroundTruth,
    positive_role: str = SPREADER_ROLE,
    throughput_mpps: float = 0.0,
) -> MetricsSummary:
    """Precision/recall/F1/ARE of a report against ground truth."""
    positives = truth.positives(positive_role)
    entries = list(report)
    reported = {e.host for e in entries}
    tp_hosts = reported & positives
    tp, fp = len(tp_hosts), len(reported - positives)
    fn = len(positives - reported)

    precision = 1.0 if not reported else tp / len(reported)
    recall = 1.0 if not positives else tp / len(positives)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)

    rel_errors = []
    seen: set[int] = set()
    for e in entries:
        if e.host in tp_hosts and e.host not in seen:
            seen.add(e.host)
            true_c = truth.hosts[e.host].subnet_cardinality
            rel_errors.append(abs(true_c - e.estimate) / true_c)
    are = float(np.mean(rel_errors)) if rel_errors else 0.0
    return MetricsSummary(
        precision=precision,
        recall=recall,
        f1=f1,
        are=are,
        throughput_mpps=throughput_mpps,
        tp=tp,
        fp=fp,
        fn=fn,
    )


def evaluate(
    detector, trace: Trace, truth: GroundTruth, positive_role: str = SPREADER_ROLE
) -> MetricsSummary:
    """One epoch on a fresh detector, scored, with the epoch's own rate."""
    detector.reset()
    report, elapsed = run_epoch(detector, trace)
    mpps = len(trace) / elapsed / 1e6 if elapsed > 0 else 0.0
    return score(report, truth, positive_role, throughput_mpps=mpps)


def throughput_bench(detector, trace: Trace, repetitions: int = 3) -> float:
    """Median update-only throughput in million packets per second.

    Detection is excluded; each repetition runs on a freshly reset
    detector so bucket occupancy patterns are comparable.
    """
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    rates = []
    for _ in range(repetitions):
        detector.reset()
        start = time.perf_counter()
        _feed(detector, trace)
        elapsed = time.perf_counter() - start
        rates.append(len(trace) / elapsed / 1e6)
    return median(rates)


def sweep(
    factories: Mapping[str, Callable[[int], Detector]],
    budgets_kb: Sequence[int],
    trace: Trace,
    truth: GroundTruth,
    positive_role: str = SPREADER_ROLE,
) -> list[dict]:
    """Full detector x budget grid; one fresh detector per cell.

    ``factories`` maps a detector name to a callable taking the budget
    in bytes. Rows come back in (factory order, ascending budget) order
    with stable keys: detector, budget_kb, then the metric fields.
    Wall-clock throughput is omitted so identical seeds give identical
    tables.
    """
    rows = []
    for name, factory in factories.items():
        for budget_kb in sorted(budgets_kb):
            detector = factory(budget_kb * 1024)
            metrics = evaluate(detector, trace, truth, positive_role)
            cells = {k: v for k, v in metrics.to_dict().items() if k != "throughput_mpps"}
            rows.append({"detector": name, "budget_kb": budget_kb, **cells})
    return rows
