"""On-disk formats: sensor CSV, run outputs, JSON summaries.

All numbers are written with a fixed 17-significant-digit, locale-free
format so reruns with the same seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .ou import SampleTimes, SensorBatch
from .experiment import EpisodeLog, PsychometricCurve

__all__ = [
    "FormatError",
    "fmt",
    "write_sensor_csv",
    "read_sensor_csv",
    "write_episodes_csv",
    "write_psychometric_csv",
    "write_tderror_csv",
    "write_json",
]

_SPACING_RTOL = 1e-6


class FormatError(ValueError):
    """Malformed input file; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def fmt(x: float) -> str:
    """17-significant-digit decimal text; round-trips any float64."""
    return format(float(x), ".17g")


def write_sensor_csv(path: str, batch: SensorBatch) -> None:
    """Sensor schema: header ``t,ch1,...,chM``, one row per sample time."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"ch{i + 1}" for i in range(batch.m)])
        for j, t in enumerate(batch.sample_times.times):
            writer.writerow([fmt(t)] + [fmt(v) for v in batch.channels[:, j]])


def read_sensor_csv(path: str) -> SensorBatch:
    """Parse and validate a sensor CSV.

    Times must be strictly increasing with uniform spacing; every row needs
    one value per channel.  Violations raise FormatError with the line.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty file", line=1) from None
        if len(header) < 2 or header[0].strip() != "t":
            raise FormatError(
                "header must be t,ch1,...,chM with at least one channel", line=1
            )
        n_channels = len(header) - 1

        times: list[float] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_channels + 1:
                raise FormatError(
                    f"expected {n_channels + 1} fields, got {len(row)}", line=line_no
                )
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise FormatError("non-numeric field", line=line_no) from None
            if not all(np.isfinite(values)):
                raise FormatError("non-finite value", line=line_no)
            if times and values[0] <= times[-1]:
                raise FormatError("times must be strictly increasing", line=line_no)
            times.append(values[0])
            rows.append(values[1:])

    if len(times) < 2:
        raise FormatError(f"need at least 2 samples, got {len(times)}")

    diffs = np.diff(times)
    spacing = float(np.mean(diffs))
    if np.max(np.abs(diffs - spacing)) > _SPACING_RTOL * spacing:
        raise FormatError("sample times must be uniformly spaced")

    return SensorBatch(
        channels=np.asarray(rows, dtype=float).T,
        sample_times=SampleTimes(np.asarray(times)),
    )


def write_episodes_csv(path: str, logs: list[EpisodeLog], dt: float) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "episode",
                "points",
                "true_steps",
                "true_seconds",
                "estimated_tau",
                "classification",
                "correct",
                "reward",
                "delta_at_reward",
                "epsilon_end",
            ]
        )
        for log in logs:
            writer.writerow(
                [
                    log.index,
                    log.points,
                    log.true_interval_steps,
                    fmt(log.true_interval_steps * dt),
                    fmt(log.estimated_tau) if log.estimated_tau is not None else "",
                    log.classification or "",
                    "true" if log.correct else "false",
                    fmt(log.reward_total),
                    fmt(log.delta_at_reward),
                    fmt(log.epsilon_end),
                ]
            )


def write_psychometric_csv(path: str, curve: PsychometricCurve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["duration_s", "p_long", "count"])
        for duration, p_long, count in curve.bins:
            writer.writerow([fmt(duration), fmt(p_long), count])


def write_tderror_csv(path: str, series: list[tuple[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "mean_abs_delta"])
        for episode, value in series:
            writer.writerow([episode, fmt(value)])


def write_json(path: str, payload: dict) -> None:
    """Sorted-key JSON with a trailing newline; floats use shortest repr."""
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
