"""Long-format record ingestion: quality filtering, gridding, normalization.

Input data are long-format readings (subject, clock hour, measure, value).
Readings outside physiological plausibility bounds are set to missing, the
rest are averaged into a subject x hour x measure grid aligned to a start hour
(noon by default, so the grid covers 12:00 p.m. through 11:00 a.m.), and each
measure is z-scored across its observed cells so a single smoothing parameter
applies to all measures.
"""

import csv
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .tensor import MaskedTensor

# reading is unreliable outside [low, high]; boundary values are retained
ABPM_BOUNDS = {
    "SBP": (50.0, 240.0),
    "DBP": (40.0, 140.0),
    "HR": (27.0, 220.0),
}

DEFAULT_GRID_START_HOUR = 12


class InputFormatError(ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class LongRecord:
    subject_id: str
    hour: int          # clock hour, 0-23
    measure: str
    value: float

    def __post_init__(self):
        if not 0 <= self.hour <= 23:
            raise ValueError(f"clock hour {self.hour} outside 0-23")
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite value {self.value}")


@dataclass(frozen=True)
class NormalizationInfo:
    """Per-measure z-scoring parameters and the grid alignment."""

    measures: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    grid_start_hour: int = DEFAULT_GRID_START_HOUR

    def __post_init__(self):
        if np.any(np.asarray(self.sds) <= 0):
            raise ValueError("normalization SDs must be positive")

    @classmethod
    def identity(cls, measures, grid_start_hour: int = 0) -> "NormalizationInfo":
        """No-op scaling, for data already on a normalized scale."""
        b = len(measures)
        return cls(tuple(measures), np.zeros(b), np.ones(b), grid_start_hour)


def quality_filter(records, bounds=None):
    """Drop physiologically implausible readings; returns (kept, rejection log).

    A reading is unreliable when its value is strictly outside the [low, high]
    bounds of its measure; boundary values are kept. Records whose measure has
    no declared bounds raise, since no plausibility judgment is possible.
    """
    if bounds is None:
        bounds = ABPM_BOUNDS
    kept = []
    rejections = []
    for rec in records:
        if rec.measure not in bounds:
            raise ValueError(f"no physiological bounds declared for measure {rec.measure!r}")
        low, high = bounds[rec.measure]
        if rec.value > high:
            rejections.append(f"subject {rec.subject_id} hour {rec.hour}: "
                              f"{rec.measure} {rec.value:g} above {high:g}")
        elif rec.value < low:
            rejections.append(f"subject {rec.subject_id} hour {rec.hour}: "
                              f"{rec.measure} {rec.value:g} below {low:g}")
        else:
            kept.append(rec)
    return kept, rejections


def gridify(records, grid_start_hour: int = DEFAULT_GRID_START_HOUR, measures=None):
    """Average readings onto the 24-hour grid, mask empty cells, z-score per measure.

    Returns (tensor, normalization, subject_ids, warnings). Multiple readings
    in one subject-hour-measure cell are averaged (values sorted first, so the
    result is identical under input row permutation). Subjects are ordered by
    id; subjects contributing no readings are dropped with a warning.
    """
    records = list(records)
    if measures is None:
        measures = tuple(sorted({rec.measure for rec in records}))
    else:
        measures = tuple(measures)
        unknown = {rec.measure for rec in records} - set(measures)
        if unknown:
            raise ValueError(f"records contain undeclared measures {sorted(unknown)}")
    if not records:
        raise ValueError("no records to grid")

    cells: dict[tuple[str, int, str], list[float]] = {}
    for rec in records:
        cells.setdefault((rec.subject_id, rec.hour, rec.measure), []).append(rec.value)

    subject_ids = sorted({rec.subject_id for rec in records})
    subject_index = {s: i for i, s in enumerate(subject_ids)}
    measure_index = {m: j for j, m in enumerate(measures)}
    a, b, n = 24, len(measures), len(subject_ids)
    values = np.zeros((a, b, n))
    mask = np.zeros((a, b, n), dtype=bool)
    for (sid, hour, measure), vals in cells.items():
        row = (hour - grid_start_hour) % 24
        i = subject_index[sid]
        j = measure_index[measure]
        values[row, j, i] = float(np.mean(sorted(vals)))
        mask[row, j, i] = True

    warnings = []
    observed_per_subject = mask.any(axis=(0, 1))
    if not observed_per_subject.all():
        dropped = [subject_ids[i] for i in np.flatnonzero(~observed_per_subject)]
        warnings.append(f"dropped subjects with no observations: {dropped}")
        keep = np.flatnonzero(observed_per_subject)
        values = values[:, :, keep]
        mask = mask[:, :, keep]
        subject_ids = [subject_ids[i] for i in keep]

    means = np.empty(b)
    sds = np.empty(b)
    for j in range(b):
        observed = values[:, j, :][mask[:, j, :]]
        if observed.size == 0:
            raise ValueError(f"measure {measures[j]!r} has no observed cells")
        means[j] = observed.mean()
        sds[j] = observed.std(ddof=0)
        if sds[j] == 0:
            raise ValueError(f"measure {measures[j]!r} is constant; cannot z-score")
        values[:, j, :] = (values[:, j, :] - means[j]) / sds[j]
    values[~mask] = 0.0

    info = NormalizationInfo(measures, means, sds, grid_start_hour)
    return MaskedTensor(values, mask), info, subject_ids, warnings


def denormalize(values: np.ndarray, info: NormalizationInfo) -> np.ndarray:
    """Map (a, b, ...) normalized values back to original per-measure units."""
    values = np.asarray(values, dtype=float)
    shape = [1] * values.ndim
    shape[1] = len(info.measures)
    return values * np.asarray(info.sds).reshape(shape) + np.asarray(info.means).reshape(shape)


def _parse_hour(row: dict, line: int) -> int:
    if row.get("hour") not in (None, ""):
        try:
            hour = int(row["hour"])
        except ValueError as exc:
            raise InputFormatError(f"hour {row['hour']!r} is not an integer", line) from exc
        if not 0 <= hour <= 23:
            raise InputFormatError(f"hour {hour} outside 0-23", line)
        return hour
    if row.get("timestamp") not in (None, ""):
        try:
            return datetime.fromisoformat(row["timestamp"]).hour
        except ValueError as exc:
            raise InputFormatError(f"timestamp {row['timestamp']!r} not ISO format", line) from exc
    raise InputFormatError("row has neither hour nor timestamp", line)


def read_long_csv(path) -> list[LongRecord]:
    """Read long-format readings; empty value fields are skipped (missing)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputFormatError("empty file", 1)
        fields = set(reader.fieldnames)
        if "subject_id" not in fields or "measure" not in fields or "value" not in fields:
            raise InputFormatError(
                f"header must contain subject_id, hour (or timestamp), measure, value;"
                f" got {reader.fieldnames}", 1)
        if "hour" not in fields and "timestamp" not in fields:
            raise InputFormatError("header needs an hour or timestamp column", 1)
        for line, row in enumerate(reader, start=2):
            raw = (row.get("value") or "").strip()
            if raw == "":
                continue
            try:
                value = float(raw)
            except ValueError as exc:
                raise InputFormatError(f"value {raw!r} is not a number", line) from exc
            sid = (row.get("subject_id") or "").strip()
            if not sid:
                raise InputFormatError("empty subject_id", line)
            measure = (row.get("measure") or "").strip()
            if not measure:
                raise InputFormatError("empty measure", line)
            hour = _parse_hour(row, line)
            try:
                records.append(LongRecord(sid, hour, measure, value))
            except ValueError as exc:
                raise InputFormatError(str(exc), line) from exc
    return records


def write_long_csv(path, values: np.ndarray, mask: np.ndarray | None, subject_ids,
                   info: NormalizationInfo) -> None:
    """Write an (a, b, n) array as long-format CSV in original units.

    The ``observed`` column records the mask (1 observed, 0 imputed) so a
    round trip preserves which cells were real readings.
    """
    a, b, n = values.shape
    original = denormalize(values, info)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "hour", "measure", "value", "observed"])
        for i in range(n):
            for row in range(a):
                hour = (info.grid_start_hour + row) % 24
                for j in range(b):
                    observed = 1 if (mask is None or mask[row, j, i]) else 0
                    writer.writerow([subject_ids[i], hour, info.measures[j],
                                     repr(float(original[row, j, i])), observed])
