"""Stroke ingestion: CSV parsing, click filtering, direction labeling, user selection.

The canonical input is a CSV with one row per touch sample:

    user_id,swipe_id,session,timestamp_ms,x,y,pressure,area

Rows are grouped by (user_id, swipe_id) into strokes and sorted by timestamp.
Screen coordinates follow the usual convention: y grows downward.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import SchemaError

logger = logging.getLogger(__name__)

CANONICAL_COLUMNS = ("user_id", "swipe_id", "session", "timestamp_ms", "x", "y", "pressure", "area")
SESSIONS = ("A", "B")

#: strokes with <= MAX_CLICK_SAMPLES points, or a polyline shorter than
#: MIN_TRAJECTORY_PX, are clicks and excluded from modeling
MAX_CLICK_SAMPLES = 5
MIN_TRAJECTORY_PX = 3.0

TRAIN_SESSION = "A"
TEST_SESSION = "B"


class Direction(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"


#: stable numeric encoding used by the categorical-direction feature and by
#: the compact per-stroke direction arrays in the experiment runner
DIRECTION_CODES = {
    Direction.LEFT: 0,
    Direction.RIGHT: 1,
    Direction.UP: 2,
    Direction.DOWN: 3,
}
DIRECTIONS = tuple(DIRECTION_CODES)

HORIZONTAL_DIRECTIONS = (Direction.LEFT, Direction.RIGHT)
VERTICAL_DIRECTIONS = (Direction.UP, Direction.DOWN)


class TouchSample(NamedTuple):
    timestamp_ms: int
    x: float
    y: float
    pressure: float
    area: float


@dataclass(frozen=True)
class Stroke:
    """One finger-down-to-finger-up trajectory.

    Sample channels are stored as parallel arrays sorted by timestamp; the
    arrays are marked read-only so strokes can be shared across workers.
    """

    user_id: str
    swipe_id: str
    session: str
    timestamps_ms: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    pressures: np.ndarray
    areas: np.ndarray
    direction: Direction | None = None

    def __post_init__(self):
        if self.session not in SESSIONS:
            raise ValueError(f"session must be one of {SESSIONS}, got {self.session!r}")
        ts = np.asarray(self.timestamps_ms, dtype=np.int64)
        if ts.ndim != 1 or ts.size == 0:
            raise ValueError("stroke needs at least one sample")
        if np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be non-decreasing")
        object.__setattr__(self, "timestamps_ms", ts)
        for name in ("xs", "ys", "pressures", "areas"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != ts.shape:
                raise ValueError(f"{name} must match timestamp count")
            object.__setattr__(self, name, arr)
        if np.any(self.pressures < 0) or np.any(self.areas < 0):
            raise ValueError("pressure and area must be non-negative")
        for name in ("timestamps_ms", "xs", "ys", "pressures", "areas"):
            getattr(self, name).flags.writeable = False

    @property
    def n_samples(self) -> int:
        return int(self.timestamps_ms.size)

    @property
    def start_ms(self) -> int:
        return int(self.timestamps_ms[0])

    @property
    def end_ms(self) -> int:
        return int(self.timestamps_ms[-1])

    def samples(self) -> Iterator[TouchSample]:
        for i in range(self.n_samples):
            yield TouchSample(
                int(self.timestamps_ms[i]),
                float(self.xs[i]),
                float(self.ys[i]),
                float(self.pressures[i]),
                float(self.areas[i]),
            )

    def trajectory_length(self) -> float:
        """Polyline length in pixels."""
        return float(np.hypot(np.diff(self.xs), np.diff(self.ys)).sum())

    def displacement(self) -> tuple[float, float]:
        """End-to-end (dx, dy) in pixels."""
        return float(self.xs[-1] - self.xs[0]), float(self.ys[-1] - self.ys[0])


class ParseStats(NamedTuple):
    rows_read: int
    rows_bad: int


@dataclass(frozen=True)
class Corpus:
    strokes: tuple[Stroke, ...]
    users: tuple[str, ...]
    parse_stats: ParseStats | None = None

    @classmethod
    def from_strokes(cls, strokes, parse_stats=None) -> "Corpus":
        strokes = tuple(strokes)
        users = tuple(sorted({s.user_id for s in strokes}))
        return cls(strokes=strokes, users=users, parse_stats=parse_stats)

    def __len__(self) -> int:
        return len(self.strokes)


def _parse_canonical_row(row: dict) -> tuple:
    session = row["session"].strip()
    if session not in SESSIONS:
        raise ValueError(f"bad session {session!r}")
    ts = int(row["timestamp_ms"])
    x = float(row["x"])
    y = float(row["y"])
    pressure = float(row["pressure"])
    area = float(row["area"])
    if not np.isfinite([x, y, pressure, area]).all():
        raise ValueError("non-finite sample value")
    if pressure < 0 or area < 0:
        raise ValueError("negative pressure/area")
    return row["user_id"].strip(), row["swipe_id"].strip(), session, ts, x, y, pressure, area


#: per-format row adapters; each maps a csv.DictReader row onto the canonical
#: tuple.  New dataset layouts plug in here.
ROW_ADAPTERS = {"canonical": _parse_canonical_row}


def parse_raw_events(path: str | Path, fmt: str = "canonical") -> Corpus:
    """Parse a raw touch-event CSV into a corpus of timestamp-sorted strokes.

    Malformed rows (non-numeric fields, bad session labels) are skipped and
    counted in the corpus parse stats; a missing required column raises
    :class:`SchemaError`.
    """
    if fmt not in ROW_ADAPTERS:
        raise SchemaError(f"unknown input format {fmt!r}")
    adapt = ROW_ADAPTERS[fmt]
    path = Path(path)

    groups: dict[tuple[str, str], list[tuple]] = {}
    rows_read = 0
    rows_bad = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or ()
        missing = [c for c in CANONICAL_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")
        for row in reader:
            rows_read += 1
            try:
                user_id, swipe_id, session, ts, x, y, pressure, area = adapt(row)
            except (ValueError, TypeError, AttributeError):
                rows_bad += 1
                continue
            groups.setdefault((user_id, swipe_id), []).append((ts, x, y, pressure, area, session))

    strokes = []
    for (user_id, swipe_id), samples in groups.items():
        arr = np.array([s[:5] for s in samples], dtype=np.float64)
        order = np.argsort(arr[:, 0], kind="stable")
        arr = arr[order]
        strokes.append(
            Stroke(
                user_id=user_id,
                swipe_id=swipe_id,
                session=samples[0][5],
                timestamps_ms=arr[:, 0].astype(np.int64),
                xs=arr[:, 1],
                ys=arr[:, 2],
                pressures=arr[:, 3],
                areas=arr[:, 4],
            )
        )
    # canonical corpus order: user, then chronological, then swipe id
    strokes.sort(key=lambda s: (s.user_id, s.start_ms, s.swipe_id))
    if rows_bad:
        logger.info("parse: skipped %d malformed rows out of %d", rows_bad, rows_read)
    return Corpus.from_strokes(strokes, parse_stats=ParseStats(rows_read, rows_bad))


def is_click(stroke: Stroke) -> bool:
    """True for short interactions that are excluded from modeling."""
    if stroke.n_samples <= MAX_CLICK_SAMPLES:
        return True
    return stroke.trajectory_length() < MIN_TRAJECTORY_PX


def filter_clicks(corpus: Corpus) -> Corpus:
    """Drop clicks (<= 5 samples or < 3 px of trajectory). Idempotent."""
    kept = []
    n_few = 0
    n_short = 0
    for s in corpus.strokes:
        if s.n_samples <= MAX_CLICK_SAMPLES:
            n_few += 1
        elif s.trajectory_length() < MIN_TRAJECTORY_PX:
            n_short += 1
        else:
            kept.append(s)
    if n_few or n_short:
        logger.info("filter_clicks: removed %d short-sample and %d short-path strokes", n_few, n_short)
    return Corpus.from_strokes(kept, parse_stats=corpus.parse_stats)


def classify_direction(stroke: Stroke) -> Direction:
    """Dominant-axis direction of the end-to-end displacement.

    |dx| >= |dy| resolves to horizontal, dx >= 0 to right; on screens y grows
    downward, so positive dy is a downward swipe.  A zero displacement is
    degenerate and falls through the >= tie-breaks to RIGHT.
    """
    if stroke.n_samples < 2:
        raise ValueError("direction needs at least 2 samples")
    dx, dy = stroke.displacement()
    if dx == 0.0 and dy == 0.0:
        logger.debug("degenerate zero-displacement stroke %s/%s", stroke.user_id, stroke.swipe_id)
    if abs(dx) >= abs(dy):
        return Direction.RIGHT if dx >= 0 else Direction.LEFT
    return Direction.DOWN if dy > 0 else Direction.UP


def label_directions(corpus: Corpus) -> Corpus:
    """Return a corpus whose strokes carry their derived direction label."""
    strokes = [replace(s, direction=classify_direction(s)) for s in corpus.strokes]
    return Corpus.from_strokes(strokes, parse_stats=corpus.parse_stats)


@dataclass(frozen=True)
class UserSubset:
    """Balanced per-direction train/test strokes for one eligible user."""

    user_id: str
    train: dict[Direction, tuple[Stroke, ...]]
    test: dict[Direction, tuple[Stroke, ...]]

    @property
    def n_train(self) -> int:
        return sum(len(v) for v in self.train.values())

    @property
    def n_test(self) -> int:
        return sum(len(v) for v in self.test.values())


class Exclusion(NamedTuple):
    user_id: str
    reason: str


def select_eligible_users(
    corpus: Corpus,
    train_per_dir: int = 50,
    test_per_dir: int = 30,
    seed: int | None = None,
) -> tuple[list[UserSubset], list[Exclusion]]:
    """Keep users with enough strokes per direction in both sessions.

    Session A must supply at least `train_per_dir` strokes in every direction
    and session B at least `test_per_dir`.  For kept users the first
    `train_per_dir`/`test_per_dir` strokes per direction, in chronological
    order, are selected; the truncation is deterministic, so `seed` is unused
    by this policy and reserved for alternative samplers.

    Returns the subsets plus an exclusion record per rejected user.
    """
    del seed
    by_user: dict[str, dict[str, dict[Direction, list[Stroke]]]] = {}
    for s in corpus.strokes:
        if s.direction is None:
            raise ValueError("corpus must be direction-labeled first")
        by_user.setdefault(s.user_id, {}).setdefault(s.session, {}).setdefault(s.direction, []).append(s)

    subsets = []
    excluded = []
    for user_id in sorted(by_user):
        sessions = by_user[user_id]
        shortfalls = []
        for session, quota in ((TRAIN_SESSION, train_per_dir), (TEST_SESSION, test_per_dir)):
            for direction in DIRECTIONS:
                n = len(sessions.get(session, {}).get(direction, ()))
                if n < quota:
                    shortfalls.append(f"session {session} {direction.value}: {n}/{quota}")
        if shortfalls:
            excluded.append(Exclusion(user_id, "; ".join(shortfalls)))
            continue

        def take(session: str, quota: int) -> dict[Direction, tuple[Stroke, ...]]:
            out = {}
            for direction in DIRECTIONS:
                strokes = sorted(sessions[session][direction], key=lambda s: (s.start_ms, s.swipe_id))
                out[direction] = tuple(strokes[:quota])
            return out

        subsets.append(
            UserSubset(
                user_id=user_id,
                train=take(TRAIN_SESSION, train_per_dir),
                test=take(TEST_SESSION, test_per_dir),
            )
        )
    return subsets, excluded


def chronological_test_strokes(subset: UserSubset) -> list[Stroke]:
    """The user's selected session-B strokes as one interleaved stream."""
    strokes = [s for per_dir in subset.test.values() for s in per_dir]
    strokes.sort(key=lambda s: (s.start_ms, s.swipe_id))
    return strokes
