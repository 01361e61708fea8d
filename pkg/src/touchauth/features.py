"""The 76 behavioural stroke features and the five published feature sets.

Features are indexed 1..76; the five named sets (ta, wvw, syed, bs, cheng)
are projections onto fixed subsets of those indices.  Extraction never raises
on degenerate geometry: undefined quantities (inter-stroke time without a
predecessor, the slope of a vertical end-to-end chord, velocities across a
zero time gap) become non-finite values and are handled by `clean_nonfinite`,
which keeps a stroke only when every member of all five sets is finite so the
same stroke population backs every set.

Conventions used throughout:

- velocities are per-gap (px/s), accelerations are per-gap velocity
  differences divided by the later gap's duration (px/s^2);
- percentiles interpolate linearly between order statistics;
- standard deviations are population (ddof=0);
- "mid-stroke" is the sample at floor(n/2) and, for gap series, the value at
  floor(len/2);
- the largest deviating point (LDP) is the sample farthest from the
  end-to-end chord, ties resolved to the lowest index;
- the "@ max/min velocity" sample is the end sample of the extreme gap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import DIRECTION_CODES, Corpus, Stroke

N_FEATURES = 76

# feature index (1-based), name, and the sets that include it
_TABLE = (
    (1, "Inter-stroke time", "ta syed cheng"),
    (2, "Stroke duration", "ta wvw syed cheng"),
    (3, "Start X", "ta wvw syed bs cheng"),
    (4, "Start Y", "ta wvw syed bs cheng"),
    (5, "Stop X", "ta wvw syed bs cheng"),
    (6, "Stop Y", "ta wvw syed bs cheng"),
    (7, "Length E2E", "ta wvw syed cheng"),
    (8, "Mean resultant length", "ta cheng"),
    (9, "Numeric direction", "ta"),
    (10, "Direction E2E", "ta wvw syed cheng"),
    (11, "20% velocity", "ta syed"),
    (12, "50% velocity", "ta wvw syed"),
    (13, "80% velocity", "ta syed"),
    (14, "20% acceleration", "ta"),
    (15, "50% acceleration", "ta wvw"),
    (16, "80% acceleration", "ta"),
    (17, "Median velocity last 3 pts", "ta cheng"),
    (18, "Largest deviation from E2E", "ta"),
    (19, "20% deviation", "ta"),
    (20, "50% deviation", "ta"),
    (21, "80% deviation", "ta"),
    (22, "Average direction", "ta"),
    (23, "Length of trajectory", "ta wvw syed cheng"),
    (24, "Ratio length E2E-to-trajectory", "ta syed"),
    (25, "Mean velocity", "ta wvw syed cheng"),
    (26, "Median acceleration last 5 pts", "ta"),
    (27, "Mid-stroke pressure", "ta syed cheng"),
    (28, "Mid-stroke area", "ta cheng"),
    (29, "Mid-stroke finger orientation", "ta"),
    (30, "Phone orientation (label)", "ta"),
    (31, "Standard deviation velocity", "wvw cheng"),
    (32, "25% velocity", "wvw"),
    (33, "75% velocity", "wvw"),
    (34, "Mean acceleration", "wvw"),
    (35, "Standard deviation acceleration", "wvw"),
    (36, "25% acceleration", "wvw"),
    (37, "75% acceleration", "wvw"),
    (38, "Mean pressure", "wvw cheng"),
    (39, "Standard deviation pressure", "cheng"),
    (40, "25% pressure", "ta"),
    (41, "50% pressure", "ta"),
    (42, "75% pressure", "ta"),
    (43, "Mean area", "ta cheng"),
    (44, "Standard deviation area", "ta cheng"),
    (45, "25% area", "ta"),
    (46, "50% area", "ta"),
    (47, "75% area", "ta"),
    (48, "Start pressure", "wvw syed cheng"),
    (49, "Stop pressure", "wvw syed"),
    (50, "Categorical direction", "syed"),
    (51, "X @ max velocity", "bs"),
    (52, "X @ min velocity", "bs"),
    (53, "Y @ max velocity", "bs"),
    (54, "Y @ min velocity", "bs"),
    (55, "Max velocity", "syed bs"),
    (56, "Min velocity", "bs"),
    (57, "Slope of E2E line", "bs"),
    (58, "Intercept of E2E line", "bs"),
    (59, "X @ LDP", "bs"),
    (60, "Y @ LDP", "bs"),
    (61, "LDP pressure", "bs"),
    (62, "Mean velocity X-axis prev to LDP", "bs"),
    (63, "Mean velocity Y-axis prev to LDP", "bs"),
    (64, "Mean velocity X-axis post to LDP", "bs"),
    (65, "Mean velocity Y-axis post to LDP", "bs"),
    (66, "Start pressure", "bs"),
    (67, "Time to reach max velocity", "bs"),
    (68, "X displacement finger down-down", "bs"),
    (69, "Y displacement finger down-down", "bs"),
    (70, "X displacement finger down-up", "bs"),
    (71, "Y displacement finger down-up", "bs"),
    (72, "Median velocity first 3 pts", "bs"),
    (73, "Mid-stroke velocity", "bs"),
    (74, "Median acceleration first 3 pts", "bs"),
    (75, "Median acceleration last 3 pts", "bs"),
    (76, "Mid-stroke acceleration", "bs"),
)

FEATURE_NAMES: tuple[str, ...] = tuple(name for _, name, _sets in _TABLE)

SET_NAMES = ("ta", "wvw", "syed", "bs", "cheng")


@dataclass(frozen=True)
class FeatureId:
    index: int  # 1-based
    name: str


@dataclass(frozen=True)
class FeatureSetSchema:
    name: str
    members: tuple[FeatureId, ...]

    @property
    def rows(self) -> tuple[int, ...]:
        return tuple(m.index for m in self.members)

    @property
    def indices(self) -> np.ndarray:
        """0-based positions into a 76-value feature vector."""
        return np.array([m.index - 1 for m in self.members], dtype=np.intp)

    def __len__(self) -> int:
        return len(self.members)


FEATURE_IDS: tuple[FeatureId, ...] = tuple(FeatureId(i, name) for i, name, _ in _TABLE)

FEATURE_SETS: dict[str, FeatureSetSchema] = {
    set_name: FeatureSetSchema(
        name=set_name,
        members=tuple(FEATURE_IDS[i - 1] for i, _, sets in _TABLE if set_name in sets.split()),
    )
    for set_name in SET_NAMES
}

#: 0-based indices that must be finite for a stroke to survive cleaning
#: (= the union of all five sets, which covers all 76 features)
REQUIRED_FINITE = np.unique(np.concatenate([FEATURE_SETS[n].indices for n in SET_NAMES]))


@dataclass(frozen=True)
class KinematicsSeries:
    """Per-gap velocities/angles, per-gap accelerations, per-point deviations."""

    velocities: np.ndarray  # px/s, length n-1
    accelerations: np.ndarray  # px/s^2, length n-2
    deviations: np.ndarray  # px from the end-to-end chord, length n
    angles: np.ndarray  # radians in (-pi, pi], length n-1
    axis_velocities: np.ndarray  # (2, n-1) signed dx/dt, dy/dt


def compute_kinematics(stroke: Stroke) -> KinematicsSeries:
    xs, ys = stroke.xs, stroke.ys
    dx = np.diff(xs)
    dy = np.diff(ys)
    dt = np.diff(stroke.timestamps_ms).astype(np.float64) / 1000.0
    dist = np.hypot(dx, dy)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = dist / dt
        vx = dx / dt
        vy = dy / dt
        a = np.diff(v) / dt[1:]
    angles = np.arctan2(dy, dx)

    cx = xs[-1] - xs[0]
    cy = ys[-1] - ys[0]
    chord = np.hypot(cx, cy)
    if chord > 0.0:
        deviations = np.abs(cx * (ys - ys[0]) - cy * (xs - xs[0])) / chord
    else:
        deviations = np.hypot(xs - xs[0], ys - ys[0])
    return KinematicsSeries(
        velocities=v,
        accelerations=a,
        deviations=deviations,
        angles=angles,
        axis_velocities=np.vstack((vx, vy)),
    )


@dataclass(frozen=True)
class FeatureVector:
    user_id: str
    swipe_id: str
    session: str
    direction: object  # ingest.Direction
    values: np.ndarray  # 76 floats, index i-1 holds feature i

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


def _median_of(series: np.ndarray, count: int, tail: bool) -> float:
    if series.size == 0:
        return np.nan
    chunk = series[-count:] if tail else series[:count]
    return float(np.median(chunk))


def stroke_feature_values(stroke: Stroke, prev_stroke: Stroke | None = None) -> np.ndarray:
    """All 76 feature values of a stroke (nan where undefined)."""
    n = stroke.n_samples
    if n < 3:
        raise ValueError("features need at least 3 samples; run filter_clicks first")
    xs, ys = stroke.xs, stroke.ys
    ts = stroke.timestamps_ms
    press, area = stroke.pressures, stroke.areas
    kin = compute_kinematics(stroke)
    v, acc, dev, ang = kin.velocities, kin.accelerations, kin.deviations, kin.angles
    vx, vy = kin.axis_velocities

    f = np.full(N_FEATURES, np.nan)

    def put(row: int, value) -> None:
        f[row - 1] = value

    mid = n // 2
    dx_e2e = xs[-1] - xs[0]
    dy_e2e = ys[-1] - ys[0]
    e2e = float(np.hypot(dx_e2e, dy_e2e))
    traj = float(np.hypot(np.diff(xs), np.diff(ys)).sum())

    with np.errstate(invalid="ignore", over="ignore"):
        if prev_stroke is not None:
            put(1, float(ts[0] - prev_stroke.end_ms))
            put(68, float(xs[0] - prev_stroke.xs[0]))
            put(69, float(ys[0] - prev_stroke.ys[0]))
        put(2, float(ts[-1] - ts[0]))
        put(3, xs[0])
        put(4, ys[0])
        put(5, xs[-1])
        put(6, ys[-1])
        put(7, e2e)

        unit = np.exp(1j * ang)
        put(8, float(np.abs(unit.mean())))

        theta = float(np.arctan2(dy_e2e, dx_e2e))
        put(9, float(min(3, int((theta + np.pi) // (np.pi / 2)))))
        put(10, theta)

        put(11, np.percentile(v, 20))
        put(12, np.percentile(v, 50))
        put(13, np.percentile(v, 80))
        if acc.size:
            put(14, np.percentile(acc, 20))
            put(15, np.percentile(acc, 50))
            put(16, np.percentile(acc, 80))
        put(17, _median_of(v, 3, tail=True))

        put(18, float(dev.max()))
        put(19, np.percentile(dev, 20))
        put(20, np.percentile(dev, 50))
        put(21, np.percentile(dev, 80))

        put(22, float(np.arctan2(np.sin(ang).mean(), np.cos(ang).mean())))
        put(23, traj)
        put(24, min(1.0, e2e / traj) if traj > 0 else np.nan)
        put(25, float(v.mean()))
        put(26, _median_of(acc, 5, tail=True))
        put(27, press[mid])
        put(28, area[mid])
        put(29, 0.0)  # raw schema carries no finger-orientation channel
        put(30, 0.0)  # portrait-only corpus

        put(31, float(v.std()))
        put(32, np.percentile(v, 25))
        put(33, np.percentile(v, 75))
        if acc.size:
            put(34, float(acc.mean()))
            put(35, float(acc.std()))
            put(36, np.percentile(acc, 25))
            put(37, np.percentile(acc, 75))
        put(38, float(press.mean()))
        put(39, float(press.std()))
        put(40, np.percentile(press, 25))
        put(41, np.percentile(press, 50))
        put(42, np.percentile(press, 75))
        put(43, float(area.mean()))
        put(44, float(area.std()))
        put(45, np.percentile(area, 25))
        put(46, np.percentile(area, 50))
        put(47, np.percentile(area, 75))
        put(48, press[0])
        put(49, press[-1])
        put(50, float(DIRECTION_CODES[stroke.direction]) if stroke.direction is not None else np.nan)

        g_max = int(np.argmax(v))
        g_min = int(np.argmin(v))
        put(51, xs[g_max + 1])
        put(52, xs[g_min + 1])
        put(53, ys[g_max + 1])
        put(54, ys[g_min + 1])
        put(55, float(v.max()))
        put(56, float(v.min()))
        if dx_e2e != 0.0:
            slope = dy_e2e / dx_e2e
            put(57, slope)
            put(58, ys[0] - slope * xs[0])

        ldp = int(np.argmax(dev))
        put(59, xs[ldp])
        put(60, ys[ldp])
        put(61, press[ldp])
        put(62, float(vx[:ldp].mean()) if ldp > 0 else 0.0)
        put(63, float(vy[:ldp].mean()) if ldp > 0 else 0.0)
        put(64, float(vx[ldp + 1:].mean()) if ldp + 1 < vx.size else 0.0)
        put(65, float(vy[ldp + 1:].mean()) if ldp + 1 < vy.size else 0.0)
        put(66, press[0])
        put(67, float(ts[g_max + 1] - ts[0]))
        put(70, float(xs[-1] - xs[0]))
        put(71, float(ys[-1] - ys[0]))
        put(72, _median_of(v, 3, tail=False))
        put(73, v[(n - 1) // 2])
        put(74, _median_of(acc, 3, tail=False))
        put(75, _median_of(acc, 3, tail=True))
        if acc.size:
            put(76, acc[(n - 2) // 2])

    return f


def extract_features(stroke: Stroke, prev_stroke: Stroke | None = None) -> FeatureVector:
    return FeatureVector(
        user_id=stroke.user_id,
        swipe_id=stroke.swipe_id,
        session=stroke.session,
        direction=stroke.direction,
        values=stroke_feature_values(stroke, prev_stroke),
    )


def extract_corpus(corpus: Corpus) -> list[FeatureVector]:
    """Extract vectors for a whole corpus, resolving each stroke's predecessor.

    The predecessor is the same user's chronologically previous stroke within
    the same session; each (user, session) first stroke has none, leaving its
    inter-stroke features non-finite.
    """
    order: dict[tuple[str, str], list[Stroke]] = {}
    for s in corpus.strokes:
        order.setdefault((s.user_id, s.session), []).append(s)
    prev_of: dict[tuple[str, str, str], Stroke | None] = {}
    for key, strokes in order.items():
        strokes = sorted(strokes, key=lambda s: (s.start_ms, s.swipe_id))
        prev = None
        for s in strokes:
            prev_of[(s.user_id, s.session, s.swipe_id)] = prev
            prev = s
    return [
        extract_features(s, prev_of[(s.user_id, s.session, s.swipe_id)])
        for s in corpus.strokes
    ]


def clean_nonfinite(vectors: list[FeatureVector]) -> list[FeatureVector]:
    """Keep only vectors that are finite for every member of all five sets."""
    return [fv for fv in vectors if np.isfinite(fv.values[REQUIRED_FINITE]).all()]


def project(fv: FeatureVector | np.ndarray, schema: FeatureSetSchema | str) -> np.ndarray:
    """Values of the schema members, in schema order."""
    if isinstance(schema, str):
        schema = FEATURE_SETS[schema]
    values = fv.values if isinstance(fv, FeatureVector) else np.asarray(fv)
    return values[schema.indices]


def project_matrix(vectors: list[FeatureVector], schema: FeatureSetSchema | str) -> np.ndarray:
    if isinstance(schema, str):
        schema = FEATURE_SETS[schema]
    if not vectors:
        return np.empty((0, len(schema)))
    return np.vstack([fv.values[schema.indices] for fv in vectors])


FEATURE_CSV_HEADER = ["user_id", "swipe_id", "session", "direction"] + [f"f{i}" for i in range(1, N_FEATURES + 1)]


def write_feature_csv(vectors: list[FeatureVector], path: str | Path) -> None:
    """Dump vectors to CSV; non-finite values serialize as empty cells."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_CSV_HEADER)
        for fv in vectors:
            cells = [fv.user_id, fv.swipe_id, fv.session,
                     fv.direction.value if fv.direction is not None else ""]
            cells += [repr(float(v)) if np.isfinite(v) else "" for v in fv.values]
            writer.writerow(cells)
