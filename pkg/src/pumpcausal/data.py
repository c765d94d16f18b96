"""Domain types, CSV ingestion, and transition construction.

Raw inputs are periodic inspections (pump, day, discrete health state in
1..K) and daily measurement series per pump.  Consecutive inspection pairs
become binary transition observations: y = 1 when the state increased over
the interval, with the interval-mean covariate vector attached.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

N_STATES = 8

INSPECTIONS_HEADER = ["pump_id", "day", "state"]
TIMESERIES_HEADER = ["pump_id", "day", "value"]


@dataclass(frozen=True)
class InspectionRecord:
    """One inspection row: health state of a pump on a given day."""

    pump_id: str
    day: int
    state: int

    def __post_init__(self):
        if self.day < 0:
            raise DataError(f"pump {self.pump_id}: negative day {self.day}")
        if not 1 <= self.state <= N_STATES:
            raise DataError(
                f"pump {self.pump_id}: state {self.state} outside 1..{N_STATES}"
            )


@dataclass(frozen=True, eq=False)
class CovariateSeries:
    """Daily measurements for one pump over a contiguous day range."""

    pump_id: str
    start_day: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise DataError(f"pump {self.pump_id}: non-finite measurement value")

    @property
    def end_day(self) -> int:
        """First day past the covered range."""
        return self.start_day + len(self.values)

    def window(self, start: int, end: int) -> np.ndarray:
        """Values for days [start, end); raises on incomplete coverage."""
        if start < self.start_day or end > self.end_day:
            raise DataError(
                f"pump {self.pump_id}: series covers days "
                f"[{self.start_day}, {self.end_day}) but [{start}, {end}) requested"
            )
        return self.values[start - self.start_day : end - self.start_day]


@dataclass(frozen=True, eq=False)
class TransitionObservation:
    """One inspection interval that started below the absorbing state."""

    pump_index: int
    state_index: int  # 1-based state at interval start, in 1..K-1
    delta_t: float
    y: int
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        if self.delta_t <= 0:
            raise DataError(f"non-positive interval length {self.delta_t}")
        if self.y not in (0, 1):
            raise DataError(f"transition indicator {self.y} not in {{0, 1}}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransitionObservation):
            return NotImplemented
        return (
            self.pump_index == other.pump_index
            and self.state_index == other.state_index
            and self.delta_t == other.delta_t
            and self.y == other.y
            and np.array_equal(self.x, other.x)
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Transition observations plus the dimensions the model needs."""

    observations: tuple[TransitionObservation, ...]
    n_pumps: int
    n_states: int
    n_covariates: int

    def __post_init__(self):
        for obs in self.observations:
            if not 0 <= obs.pump_index < self.n_pumps:
                raise DataError(f"pump index {obs.pump_index} out of range")
            if not 1 <= obs.state_index < self.n_states:
                raise DataError(
                    f"state index {obs.state_index} outside 1..{self.n_states - 1}"
                )
            if len(obs.x) != self.n_covariates:
                raise DataError(
                    f"covariate length {len(obs.x)} != {self.n_covariates}"
                )

    def __len__(self) -> int:
        return len(self.observations)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n_pumps == other.n_pumps
            and self.n_states == other.n_states
            and self.n_covariates == other.n_covariates
            and self.observations == other.observations
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Column arrays (y, delta_t, state_idx0, pump_idx, X) for vectorized code.

        ``state_idx0`` is 0-based (state_index - 1).
        """
        n = len(self.observations)
        y = np.fromiter((o.y for o in self.observations), float, n)
        dt = np.fromiter((o.delta_t for o in self.observations), float, n)
        k = np.fromiter((o.state_index - 1 for o in self.observations), np.intp, n)
        i = np.fromiter((o.pump_index for o in self.observations), np.intp, n)
        if n:
            x = np.stack([o.x for o in self.observations])
        else:
            x = np.empty((0, self.n_covariates))
        return y, dt, k, i, x


@dataclass(frozen=True, eq=False)
class TransitionBuild:
    """Result of transition construction, with drop accounting."""

    dataset: Dataset
    pump_ids: tuple[str, ...]
    dropped_decrease: int
    dropped_absorbing: int

    @property
    def dropped(self) -> int:
        return self.dropped_decrease + self.dropped_absorbing


def _open_rows(path: str | Path, expected_header: list[str]):
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header != expected_header:
            raise DataError(
                f"{path}: expected header {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        yield from ((line_no, row) for line_no, row in enumerate(reader, start=2))


def ingest_inspections(path: str | Path) -> list[InspectionRecord]:
    """Parse an inspections CSV into records grouped by pump, day-ordered.

    Enforces strictly increasing days within each pump and states in 1..K.
    Errors carry the offending line number.
    """
    by_pump: dict[str, list[InspectionRecord]] = {}
    for line_no, row in _open_rows(path, INSPECTIONS_HEADER):
        if len(row) != 3:
            raise DataError(f"{path} line {line_no}: expected 3 fields, got {len(row)}")
        pump_id, day_s, state_s = row
        try:
            day = int(day_s)
            state = int(state_s)
        except ValueError:
            raise DataError(f"{path} line {line_no}: non-integer day or state") from None
        if not 1 <= state <= N_STATES:
            raise DataError(
                f"{path} line {line_no}: state {state} outside 1..{N_STATES}"
            )
        if day < 0:
            raise DataError(f"{path} line {line_no}: negative day {day}")
        group = by_pump.setdefault(pump_id, [])
        if group and day <= group[-1].day:
            raise DataError(
                f"{path} line {line_no}: pump {pump_id} days not strictly "
                f"increasing ({group[-1].day} then {day})"
            )
        group.append(InspectionRecord(pump_id, day, state))
    records: list[InspectionRecord] = []
    for group in by_pump.values():
        records.extend(group)
    return records


def ingest_timeseries(path: str | Path) -> list[CovariateSeries]:
    """Parse a timeseries CSV into one contiguous daily series per pump."""
    by_pump: dict[str, tuple[int, list[float]]] = {}
    for line_no, row in _open_rows(path, TIMESERIES_HEADER):
        if len(row) != 3:
            raise DataError(f"{path} line {line_no}: expected 3 fields, got {len(row)}")
        pump_id, day_s, value_s = row
        try:
            day = int(day_s)
            value = float(value_s)
        except ValueError:
            raise DataError(f"{path} line {line_no}: non-numeric day or value") from None
        if not math.isfinite(value):
            raise DataError(f"{path} line {line_no}: non-finite value")
        if pump_id not in by_pump:
            by_pump[pump_id] = (day, [value])
        else:
            start, values = by_pump[pump_id]
            if day != start + len(values):
                raise DataError(
                    f"{path} line {line_no}: pump {pump_id} days not contiguous "
                    f"(expected {start + len(values)}, got {day})"
                )
            values.append(value)
    return [
        CovariateSeries(pump_id, start, np.array(values))
        for pump_id, (start, values) in by_pump.items()
    ]


def build_transitions(
    records: Sequence[InspectionRecord],
    covariates: Sequence[CovariateSeries] = (),
    n_states: int = N_STATES,
) -> TransitionBuild:
    """Turn consecutive inspection pairs into transition observations.

    One observation per interval whose start state is below the absorbing
    state K; y = 1 iff the state increased (multi-step jumps included), the
    interval covariate is the mean of each daily series over [start, end).
    Intervals with state decreases (repairs) are dropped and counted.
    """
    by_pump: dict[str, list[InspectionRecord]] = {}
    for rec in records:
        by_pump.setdefault(rec.pump_id, []).append(rec)
    for pump_id, group in by_pump.items():
        days = [r.day for r in group]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise DataError(f"pump {pump_id}: inspection days not strictly increasing")

    series_by_pump: dict[str, list[CovariateSeries]] = {}
    for series in covariates:
        series_by_pump.setdefault(series.pump_id, []).append(series)
    p_counts = {len(v) for v in series_by_pump.values()}
    if len(p_counts) > 1:
        raise DataError(f"pumps have differing covariate counts: {sorted(p_counts)}")
    n_covariates = p_counts.pop() if p_counts else 0

    pump_ids = tuple(by_pump)
    observations: list[TransitionObservation] = []
    dropped_decrease = 0
    dropped_absorbing = 0
    for pump_index, pump_id in enumerate(pump_ids):
        group = by_pump[pump_id]
        if n_covariates:
            if pump_id not in series_by_pump:
                raise DataError(f"pump {pump_id}: no covariate series")
            pump_series = series_by_pump[pump_id]
        for start, end in zip(group, group[1:]):
            if start.state >= n_states:
                dropped_absorbing += 1
                continue
            if end.state < start.state:
                dropped_decrease += 1
                continue
            if n_covariates:
                x = np.array(
                    [s.window(start.day, end.day).mean() for s in pump_series]
                )
            else:
                x = np.empty(0)
            observations.append(
                TransitionObservation(
                    pump_index=pump_index,
                    state_index=start.state,
                    delta_t=float(end.day - start.day),
                    y=int(end.state > start.state),
                    x=x,
                )
            )
    dataset = Dataset(
        observations=tuple(observations),
        n_pumps=len(pump_ids),
        n_states=n_states,
        n_covariates=n_covariates,
    )
    return TransitionBuild(dataset, pump_ids, dropped_decrease, dropped_absorbing)


def transitions_header(n_covariates: int) -> list[str]:
    return ["pump_index", "state_index", "delta_t", "y"] + [
        f"x{j}" for j in range(n_covariates)
    ]


def write_transitions_csv(dataset: Dataset, path: str | Path) -> None:
    """Export observations; numbers use shortest round-trip formatting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(transitions_header(dataset.n_covariates))
        for obs in dataset.observations:
            writer.writerow(
                [obs.pump_index, obs.state_index, repr(obs.delta_t), obs.y]
                + [repr(float(v)) for v in obs.x]
            )


def read_transitions_csv(
    path: str | Path, n_pumps: int | None = None, n_states: int = N_STATES
) -> Dataset:
    """Re-ingest an exported transitions CSV; round-trips exactly."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != transitions_header(0):
            raise DataError(f"{path}: bad transitions header")
        n_covariates = len(header) - 4
        observations = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4 + n_covariates:
                raise DataError(f"{path} line {line_no}: wrong field count")
            try:
                observations.append(
                    TransitionObservation(
                        pump_index=int(row[0]),
                        state_index=int(row[1]),
                        delta_t=float(row[2]),
                        y=int(row[3]),
                        x=np.array([float(v) for v in row[4:]]),
                    )
                )
            except ValueError:
                raise DataError(f"{path} line {line_no}: malformed row") from None
    if n_pumps is None:
        n_pumps = max((o.pump_index for o in observations), default=-1) + 1
    return Dataset(tuple(observations), n_pumps, n_states, n_covariates)


def write_inspections_csv(records: Iterable[InspectionRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(INSPECTIONS_HEADER)
        for rec in records:
            writer.writerow([rec.pump_id, rec.day, rec.state])


def write_timeseries_csv(series: Iterable[CovariateSeries], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMESERIES_HEADER)
        for s in series:
            for offset, value in enumerate(s.values):
                writer.writerow([s.pump_id, s.start_day + offset, repr(float(value))])
