"""Synthetic participant workload generator.

Submits n random-but-schema-valid participations against a collecting
study, recording client-side latency per submission, and writes a CSV
(`seq,latency_ms`) plus a summary row.
"""

from __future__ import annotations

import csv
import random
import statistics
from dataclasses import dataclass
from pathlib import Path

from peqes.clients import ParticipantClient
from peqes.study import StudySpec

_WORDS = ("alpha", "bravo", "carol", "delta", "echo", "fox", "golf", "hotel")


def random_answers(spec: StudySpec, rng: random.Random) -> dict:
    answers = {}
    for item in spec.survey:
        if item.kind == "integer":
            answers[item.id] = rng.randint(item.min_value, item.max_value)
        elif item.kind == "choice":
            answers[item.id] = rng.choice(item.options)
        else:
            answers[item.id] = " ".join(rng.choices(_WORDS, k=3))
    return answers


@dataclass
class LoadgenResult:
    latencies_ms: list[float]
    answers: list[dict]

    @property
    def summary(self) -> dict:
        ordered = sorted(self.latencies_ms)
        n = len(ordered)
        return {
            "n": n,
            "mean_ms": statistics.fmean(ordered) if n else 0.0,
            "p50_ms": ordered[n // 2] if n else 0.0,
            "p99_ms": ordered[min(n - 1, int(n * 0.99))] if n else 0.0,
        }


def run_loadgen(
    client: ParticipantClient,
    study_id: str,
    n: int,
    seed: int | None = None,
    verify: bool = False,
) -> LoadgenResult:
    offer = client.fetch_offer(study_id)
    spec = StudySpec.from_dict(offer["spec"])
    rng = random.Random(seed)
    latencies, answers = [], []
    for _ in range(n):
        row = random_answers(spec, rng)
        receipt = client.participate(study_id, row, offer=offer, verify=verify)
        latencies.append(receipt["latency_ms"])
        answers.append(row)
    return LoadgenResult(latencies_ms=latencies, answers=answers)


def write_csv(result: LoadgenResult, path: str | Path, analysis_seconds: float | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seq", "latency_ms"])
        for seq, latency in enumerate(result.latencies_ms):
            writer.writerow([seq, f"{latency:.3f}"])
        summary = result.summary
        writer.writerow([])
        writer.writerow(["# summary", ""])
        writer.writerow(["n", summary["n"]])
        writer.writerow(["mean_ms", f"{summary['mean_ms']:.3f}"])
        writer.writerow(["p50_ms", f"{summary['p50_ms']:.3f}"])
        writer.writerow(["p99_ms", f"{summary['p99_ms']:.3f}"])
        if analysis_seconds is not None:
            writer.writerow(["analysis_s", f"{analysis_seconds:.3f}"])
