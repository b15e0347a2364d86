"""Packaged synthetic dataset: ABPM-like long-format records, fully seeded.

Sixty subjects on a 24-hour grid with SBP/DBP/HR readings in original units.
The underlying signal is smooth and rank-(3, 2): the temporal components live
in the span of {constant, cos, sin} on the grid but are mixed into level /
nocturnal-dip / dip-timing shapes. Some subjects miss a long contiguous block
of hours across all measures (device non-wear); most miss a few scattered
hours. Used by the CLI smoke tests, the demos, and the penalize-the-components
failure-mode demonstration.
"""

from dataclasses import dataclass

import numpy as np

from .ingest import DEFAULT_GRID_START_HOUR, LongRecord
from .simulate import SimulationConfig, default_measure_basis, generate_truth

DEMO_SEED = 20240811
DEMO_MEASURES = ("SBP", "DBP", "HR")
# original-unit location/scale per measure
_DEMO_OFFSETS = {"SBP": 120.0, "DBP": 75.0, "HR": 72.0}
_DEMO_SCALES = {"SBP": 15.0, "DBP": 10.0, "HR": 9.0}
_DEMO_N = 60
_DEMO_NOISE_SD = 0.7
_N_BLOCK_SUBJECTS = 6


@dataclass(frozen=True)
class DemoDataset:
    records: list[LongRecord]
    # grid rows (0 = noon) that are missing for every measure, per subject
    block_rows: dict[str, tuple[int, ...]]
    measures: tuple[str, ...] = DEMO_MEASURES
    grid_start_hour: int = DEFAULT_GRID_START_HOUR


def _demo_temporal_basis(a: int) -> np.ndarray:
    """Level / nocturnal-dip / dip-shift shapes inside the low-frequency span."""
    t = np.arange(a)
    phase = 2 * np.pi * (t - 8) / a
    raw = np.column_stack([np.ones(a), -np.cos(phase), np.sin(phase)])
    q, r = np.linalg.qr(raw)
    return q * np.sign(np.diag(r))


def demo_records(seed: int = DEMO_SEED) -> DemoDataset:
    """Deterministic synthetic readings, in original measurement units."""
    a, b, n = 24, len(DEMO_MEASURES), _DEMO_N
    config = SimulationConfig(a=a, b=b, n=n, truth_ranks=(3, 2))
    truth = generate_truth(config, l_true=_demo_temporal_basis(a),
                           r_true=default_measure_basis(b, 2), seed=[seed, 0])
    rng = np.random.default_rng([seed, 1])
    normalized = truth.values + rng.normal(0.0, _DEMO_NOISE_SD, size=truth.values.shape)

    mask = np.ones((a, b, n), dtype=bool)
    block_rows: dict[str, tuple[int, ...]] = {}
    subject_ids = [f"S{i:03d}" for i in range(n)]
    for i in range(n):
        if i < _N_BLOCK_SUBJECTS:
            length = int(rng.integers(10, 15))
            start = int(rng.integers(0, a - length))
            rows = tuple(range(start, start + length))
            block_rows[subject_ids[i]] = rows
            mask[list(rows), :, i] = False
        else:
            hours = int(rng.integers(0, 9))
            if hours:
                drop = rng.choice(a, size=hours, replace=False)
                mask[drop, :, i] = False

    records = []
    for i, sid in enumerate(subject_ids):
        for row in range(a):
            hour = (DEFAULT_GRID_START_HOUR + row) % 24
            for j, measure in enumerate(DEMO_MEASURES):
                if not mask[row, j, i]:
                    continue
                value = _DEMO_OFFSETS[measure] + _DEMO_SCALES[measure] * normalized[row, j, i]
                records.append(LongRecord(sid, hour, measure, round(float(value), 2)))
    return DemoDataset(records, block_rows)


def write_demo_csv(path, seed: int = DEMO_SEED) -> DemoDataset:
    """Write the packaged dataset as a long-format CSV; returns the dataset."""
    import csv

    dataset = demo_records(seed)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "hour", "measure", "value"])
        for rec in dataset.records:
            writer.writerow([rec.subject_id, rec.hour, rec.measure, f"{rec.value:.2f}"])
    return dataset
