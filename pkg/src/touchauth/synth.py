"""Seeded synthetic corpora for tests and smoke experiments.

Each user gets a private set of kinematic traits (speed, curvature, pressure,
area, pacing, preferred screen region).  `separability` scales how far those
traits spread between users: 0 collapses everyone onto one shared behaviour
(downstream AUC ~ 0.5), larger values make users easy to tell apart.

Strokes are smooth cubic Bezier arcs sampled with a slow-fast-slow time
profile, which keeps every one of the behavioural features non-degenerate:
more than 5 samples, trajectory well over 3 px, strictly increasing integer
timestamps, and a never-vertical end-to-end chord (finite slope).
"""

from __future__ import annotations

import numpy as np

from .ingest import Corpus, Direction, Stroke
from .seeding import derive_seed

SCREEN_W = 1080.0
SCREEN_H = 1920.0

_SESSION_START_MS = {"A": 1_600_000_000_000, "B": 1_600_000_000_000 + 86_400_000}

# (dx, dy) unit vectors per direction; screen y grows downward
_DIR_VECTORS = {
    Direction.LEFT: (-1.0, 0.0),
    Direction.RIGHT: (1.0, 0.0),
    Direction.UP: (0.0, -1.0),
    Direction.DOWN: (0.0, 1.0),
}


def _user_traits(master_seed: int, user_idx: int, separability: float) -> dict:
    rng = np.random.default_rng(derive_seed(master_seed, "traits", user_idx))
    z = rng.standard_normal(12)
    sep = float(separability)
    return {
        "speed": 650.0 * np.exp(0.22 * sep * z[0]),
        "speed_jitter": float(np.clip(0.16 * np.exp(0.12 * sep * z[1]), 0.02, 0.6)),
        "length": 420.0 * np.exp(0.18 * sep * z[2]),
        "pressure": float(np.clip(0.55 + 0.055 * sep * z[3], 0.12, 0.95)),
        "pressure_spread": float(np.clip(0.035 * np.exp(0.18 * sep * z[4]), 0.004, 0.15)),
        "area": 6.0 * np.exp(0.14 * sep * z[5]),
        "curvature": float(np.clip(0.10 * np.exp(0.25 * sep * z[6]), 0.01, 0.45)),
        "n_points": float(np.clip(18.0 + 2.5 * sep * z[7], 8.0, 34.0)),
        "cx": float(np.clip(SCREEN_W / 2 + 55.0 * sep * z[8], 160.0, SCREEN_W - 160.0)),
        "cy": float(np.clip(SCREEN_H / 2 + 90.0 * sep * z[9], 260.0, SCREEN_H - 260.0)),
        "ease": float(np.clip(0.55 + 0.12 * sep * z[10], 0.0, 0.95)),
        "drift": float(np.clip(0.05 * np.exp(0.2 * sep * z[11]), 0.005, 0.2)),
    }


def _bezier(p0, p1, p2, p3, t):
    t = t[:, None]
    u = 1.0 - t
    return u**3 * p0 + 3 * u**2 * t * p1 + 3 * u * t**2 * p2 + t**3 * p3


def _make_stroke(
    user_id: str,
    swipe_id: str,
    session: str,
    start_ms: int,
    direction: Direction,
    traits: dict,
    rng: np.random.Generator,
) -> Stroke:
    n = int(round(traits["n_points"] * float(np.exp(rng.normal(0.0, 0.10)))))
    n = max(8, min(40, n))

    length = traits["length"] * float(np.exp(rng.normal(0.0, 0.15)))
    length = float(np.clip(length, 120.0, 900.0))
    ux, uy = _DIR_VECTORS[direction]
    # cross-axis drift; kept well under the main axis so the direction label
    # survives, and never exactly zero so the E2E slope stays finite
    drift = float(np.clip(rng.normal(0.0, traits["drift"] * length), -0.35 * length, 0.35 * length))
    if direction in (Direction.UP, Direction.DOWN) and abs(drift) < 2.0:
        drift = 2.0 if drift >= 0 else -2.0
    dx = ux * length + (0.0 if ux else drift)
    dy = uy * length + (0.0 if uy else drift)

    # keep both endpoints on screen
    x0 = traits["cx"] - dx / 2 + rng.normal(0.0, 30.0)
    y0 = traits["cy"] - dy / 2 + rng.normal(0.0, 45.0)
    x0 = float(np.clip(x0, 5.0 - min(dx, 0.0), SCREEN_W - 5.0 - max(dx, 0.0)))
    y0 = float(np.clip(y0, 5.0 - min(dy, 0.0), SCREEN_H - 5.0 - max(dy, 0.0)))

    p0 = np.array([x0, y0])
    p3 = p0 + (dx, dy)
    perp = np.array([-dy, dx]) / max(np.hypot(dx, dy), 1e-9)
    bulge = traits["curvature"] * length
    p1 = p0 + np.array([dx, dy]) / 3 + perp * bulge * (1.0 + rng.normal(0.0, 0.25))
    p2 = p0 + 2 * np.array([dx, dy]) / 3 + perp * bulge * (1.0 + rng.normal(0.0, 0.25))

    # slow-fast-slow arc progression blended with a linear ramp
    t = np.linspace(0.0, 1.0, n)
    smooth = 3 * t**2 - 2 * t**3
    s = (1.0 - traits["ease"]) * t + traits["ease"] * smooth
    pts = _bezier(p0, p1, p2, p3, s)
    pts += rng.normal(0.0, 0.8, size=pts.shape)
    pts[0] = p0
    pts[-1] = p3

    speed = traits["speed"] * float(np.exp(rng.normal(0.0, traits["speed_jitter"])))
    duration_ms = float(np.clip(1000.0 * length / max(speed, 1.0), 80.0, 2000.0))
    gaps = np.maximum(3, np.round(duration_ms / (n - 1) * np.exp(rng.normal(0.0, 0.12, n - 1))))
    ts = start_ms + np.concatenate(([0], np.cumsum(gaps))).astype(np.int64)

    bell = 0.85 + 0.3 * np.sin(np.pi * t)
    pressures = np.clip(traits["pressure"] * bell + rng.normal(0.0, traits["pressure_spread"], n), 0.02, 1.0)
    areas = np.maximum(traits["area"] * (0.9 + 0.2 * np.sin(np.pi * t)) * np.exp(rng.normal(0.0, 0.05, n)), 0.1)

    return Stroke(
        user_id=user_id,
        swipe_id=swipe_id,
        session=session,
        timestamps_ms=ts,
        xs=pts[:, 0],
        ys=pts[:, 1],
        pressures=pressures,
        areas=areas,
        direction=direction,
    )


def generate_synthetic_corpus(
    n_users: int,
    train_per_dir: int,
    test_per_dir: int,
    seed: int,
    separability: float = 1.0,
) -> Corpus:
    """Deterministic synthetic corpus with both sessions and all directions.

    Each user receives `train_per_dir` strokes per direction in session A and
    `test_per_dir` per direction in session B, interleaved chronologically
    across directions the way real usage would be.
    """
    if n_users < 2:
        raise ValueError("need at least 2 users")
    if separability < 0:
        raise ValueError("separability must be >= 0")

    strokes: list[Stroke] = []
    for u in range(n_users):
        user_id = f"u{u:03d}"
        traits = _user_traits(seed, u, separability)
        for session, per_dir in (("A", train_per_dir), ("B", test_per_dir)):
            if per_dir <= 0:
                continue
            rng = np.random.default_rng(derive_seed(seed, "session", u, session))
            order = [d for d in _DIR_VECTORS for _ in range(per_dir)]
            order = [order[i] for i in rng.permutation(len(order))]
            t_cursor = _SESSION_START_MS[session] + int(rng.integers(0, 60_000))
            for k, direction in enumerate(order):
                stroke = _make_stroke(
                    user_id=user_id,
                    swipe_id=f"{session}{k:05d}",
                    session=session,
                    start_ms=t_cursor,
                    direction=direction,
                    traits=traits,
                    rng=rng,
                )
                gap = int(np.clip(rng.lognormal(6.8, 0.5), 200, 30_000))
                t_cursor = stroke.end_ms + gap
                strokes.append(stroke)
    return Corpus.from_strokes(strokes)


def write_corpus_csv(corpus: Corpus, path) -> None:
    """Serialize a corpus in the canonical CSV layout."""
    import csv
    from pathlib import Path

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "swipe_id", "session", "timestamp_ms", "x", "y", "pressure", "area"])
        for s in corpus.strokes:
            for sample in s.samples():
                writer.writerow(
                    [s.user_id, s.swipe_id, s.session, sample.timestamp_ms,
                     repr(sample.x), repr(sample.y), repr(sample.pressure), repr(sample.area)]
                )
