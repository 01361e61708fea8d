from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from touchauth.features import (
    FEATURE_NAMES,
    FEATURE_SETS,
    N_FEATURES,
    REQUIRED_FINITE,
    clean_nonfinite,
    compute_kinematics,
    extract_corpus,
    extract_features,
    project,
    stroke_feature_values,
    write_feature_csv,
)
from touchauth.ingest import Corpus, Direction, filter_clicks, label_directions
from touchauth.synth import generate_synthetic_corpus

from conftest import make_stroke, random_stroke

# Independent transcription of the five feature-set memberships (1-based
# feature rows).  Kept literal on purpose: the module constant and this table
# were entered separately and must agree cell for cell.
EXPECTED_MEMBERS = {
    "ta": list(range(1, 31)) + list(range(40, 48)),
    "wvw": [2, 3, 4, 5, 6, 7, 10, 12, 15, 23, 25, 31, 32, 33, 34, 35, 36, 37, 38, 48, 49],
    "syed": [1, 2, 3, 4, 5, 6, 7, 10, 11, 12, 13, 23, 24, 25, 27, 48, 49, 50, 55],
    "bs": [3, 4, 5, 6] + list(range(51, 77)),
    "cheng": [1, 2, 3, 4, 5, 6, 7, 8, 10, 17, 23, 25, 27, 28, 31, 38, 39, 43, 44, 48],
}


class TestFeatureTable:
    def test_set_memberships_match_transcription(self):
        for name, rows in EXPECTED_MEMBERS.items():
            assert list(FEATURE_SETS[name].rows) == rows, name

    def test_set_sizes(self):
        sizes = {name: len(FEATURE_SETS[name]) for name in FEATURE_SETS}
        assert sizes == {"ta": 38, "wvw": 21, "syed": 19, "bs": 30, "cheng": 20}

    def test_union_covers_all_features(self):
        assert list(REQUIRED_FINITE) == list(range(N_FEATURES))

    def test_start_coordinates_shared_by_all_sets(self):
        for row in (3, 4, 5, 6):
            for name in FEATURE_SETS:
                assert row in FEATURE_SETS[name].rows

    def test_names_table(self):
        assert len(FEATURE_NAMES) == N_FEATURES
        assert FEATURE_NAMES[0] == "Inter-stroke time"
        # rows 48 and 66 intentionally share a name (same computation)
        assert FEATURE_NAMES[47] == FEATURE_NAMES[65] == "Start pressure"


class TestKinematics:
    def test_velocities_3_4_5(self):
        stroke = make_stroke([(0, 0), (3, 0), (3, 4)], timestamps=[0, 10, 20])
        kin = compute_kinematics(stroke)
        assert kin.velocities == pytest.approx([300.0, 400.0])
        assert len(kin.accelerations) == 1
        assert kin.accelerations[0] == pytest.approx((400.0 - 300.0) / 0.010)

    def test_collinear_deviations_zero(self):
        n = 9
        stroke = make_stroke([(i * 5.0, i * 2.0) for i in range(n)])
        kin = compute_kinematics(stroke)
        assert kin.deviations == pytest.approx(np.zeros(n), abs=1e-9)

    def test_isoceles_apex_deviation(self):
        stroke = make_stroke([(0, 0), (5, 5), (10, 0)])
        kin = compute_kinematics(stroke)
        assert kin.deviations.max() == pytest.approx(5.0)
        assert int(np.argmax(kin.deviations)) == 1

    def test_series_lengths(self, rng):
        stroke = random_stroke(rng)
        n = stroke.n_samples
        kin = compute_kinematics(stroke)
        assert len(kin.velocities) == n - 1
        assert len(kin.accelerations) == n - 2
        assert len(kin.deviations) == n
        assert len(kin.angles) == n - 1

    def test_zero_dt_gives_nonfinite_velocity(self):
        stroke = make_stroke([(0, 0), (5, 0), (9, 0)], timestamps=[0, 10, 10])
        kin = compute_kinematics(stroke)
        assert not np.isfinite(kin.velocities[1])


def feature(stroke, row, prev=None):
    return stroke_feature_values(stroke, prev)[row - 1]


class TestExtraction:
    def test_three_four_five_triangle(self):
        pts = [(0, 0), (1.5, 0), (3, 0), (3, 1), (3, 2.5), (3, 4)]
        stroke = make_stroke(pts, direction=Direction.RIGHT)
        values = stroke_feature_values(stroke)
        assert values[23 - 1] == pytest.approx(7.0)  # trajectory
        assert values[7 - 1] == pytest.approx(5.0)  # end-to-end
        assert values[24 - 1] == pytest.approx(5.0 / 7.0)

    def test_constant_direction_mean_resultant_length_one(self):
        pts = [(i * 10.0, i * 3.0) for i in range(8)]
        stroke = make_stroke(pts)
        assert feature(stroke, 8) == pytest.approx(1.0)

    def test_first_stroke_inter_stroke_time_nonfinite(self):
        stroke = make_stroke([(i * 10.0, 0) for i in range(7)])
        values = stroke_feature_values(stroke, prev_stroke=None)
        assert not np.isfinite(values[1 - 1])
        assert not np.isfinite(values[68 - 1])
        assert not np.isfinite(values[69 - 1])

    def test_inter_stroke_time_and_displacements(self):
        prev = make_stroke([(5.0, 7.0), (10, 7), (20, 7)], timestamps=[0, 10, 20])
        cur = make_stroke([(11.0, 9.0), (30, 9), (50, 9)], timestamps=[250, 260, 270])
        values = stroke_feature_values(cur, prev)
        assert values[1 - 1] == pytest.approx(230.0)  # start(cur) - end(prev)
        assert values[68 - 1] == pytest.approx(6.0)  # start-to-start dx
        assert values[69 - 1] == pytest.approx(2.0)
        assert values[70 - 1] == pytest.approx(39.0)  # within-stroke dx
        assert values[71 - 1] == pytest.approx(0.0)

    def test_vertical_chord_has_nonfinite_slope(self):
        pts = [(10.0, i * 8.0) for i in range(7)]
        stroke = make_stroke(pts)
        values = stroke_feature_values(stroke)
        assert not np.isfinite(values[57 - 1])
        assert not np.isfinite(values[58 - 1])

    def test_slope_and_intercept(self):
        pts = [(x, 2.0 * x + 1.0) for x in np.linspace(0, 30, 8)]
        stroke = make_stroke(pts)
        values = stroke_feature_values(stroke)
        assert values[57 - 1] == pytest.approx(2.0)
        assert values[58 - 1] == pytest.approx(1.0)

    def test_duplicate_start_pressure_rows_agree(self, rng):
        for _ in range(20):
            stroke = random_stroke(rng)
            values = stroke_feature_values(stroke)
            assert values[48 - 1] == values[66 - 1] == stroke.pressures[0]

    def test_direction_code(self):
        pts = [(0, 0), (40, 1), (100, 2)]
        stroke = make_stroke(pts, direction=Direction.RIGHT)
        assert feature(stroke, 50) == 1.0

    def test_percentiles_interpolate_linearly(self):
        # gap velocities 100, 200, 300, 400 px/s
        xs = np.concatenate(([0.0], np.cumsum([1.0, 2.0, 3.0, 4.0])))
        stroke = make_stroke(np.column_stack([xs, np.zeros(5)]))
        values = stroke_feature_values(stroke)
        assert values[12 - 1] == pytest.approx(250.0)  # median velocity
        assert values[11 - 1] == pytest.approx(160.0)  # 20th percentile
        assert values[13 - 1] == pytest.approx(340.0)  # 80th

    def test_ldp_features(self):
        pts = [(0, 0), (2, 1), (5, 30), (8, 1), (10, 0)]
        press = [0.1, 0.2, 0.9, 0.3, 0.4]
        stroke = make_stroke(pts, pressures=press)
        values = stroke_feature_values(stroke)
        assert values[59 - 1] == 5.0 and values[60 - 1] == 30.0
        assert values[61 - 1] == pytest.approx(0.9)
        kin = compute_kinematics(stroke)
        vx, vy = kin.axis_velocities
        assert values[62 - 1] == pytest.approx(vx[:2].mean())
        assert values[64 - 1] == pytest.approx(vx[3:].mean())

    def test_ldp_empty_side_is_zero(self):
        # monotone bulge puts the LDP at index 1 -> no gaps strictly before it...
        pts = [(0, 0), (1, 12), (4, 2), (7, 1), (10, 0)]
        stroke = make_stroke(pts)
        values = stroke_feature_values(stroke)
        kin = compute_kinematics(stroke)
        assert int(np.argmax(kin.deviations)) == 1
        vx, vy = kin.axis_velocities
        assert values[62 - 1] == pytest.approx(vx[:1].mean())
        first = make_stroke([(0, 0), (9, 1), (1, 2), (2, 3), (3, 1)])
        kin_first = compute_kinematics(first)
        if int(np.argmax(kin_first.deviations)) == 0:
            vals = stroke_feature_values(first)
            assert vals[62 - 1] == 0.0 and vals[63 - 1] == 0.0


class TestCleaning:
    def make_vectors(self, rng, n=30):
        corpus = Corpus.from_strokes(
            [random_stroke(rng, swipe_id=f"s{i}") for i in range(n)]
        )
        return extract_corpus(corpus)

    def test_session_first_stroke_dropped(self, rng):
        vectors = self.make_vectors(rng)
        kept = clean_nonfinite(vectors)
        # all strokes share one (user, session): exactly the first survives nowhere
        assert len(kept) == len(vectors) - 1
        dropped = set(v.swipe_id for v in vectors) - set(v.swipe_id for v in kept)
        first = min(
            vectors, key=lambda v: 0 if v.swipe_id in dropped else 1
        )
        assert len(dropped) == 1

    def test_nonfinite_slope_dropped(self):
        vertical = make_stroke([(10.0, i * 9.0) for i in range(7)], direction=Direction.DOWN)
        prev = make_stroke([(0, 0), (30, 1), (60, 2)], timestamps=[-500, -490, -480])
        fv = extract_features(vertical, prev)
        assert clean_nonfinite([fv]) == []

    def test_finite_vector_kept_unchanged(self, rng):
        vectors = self.make_vectors(rng)
        kept = clean_nonfinite(vectors)
        assert kept and all(np.isfinite(v.values).all() for v in kept)
        assert kept[0] is vectors[vectors.index(kept[0])]


class TestProjection:
    def test_lengths(self, rng):
        fv = extract_features(random_stroke(rng))
        assert len(project(fv, "ta")) == 38
        assert len(project(fv, "bs")) == 30

    def test_shared_members_consistent(self, rng):
        fv = extract_features(random_stroke(rng))
        for name in FEATURE_SETS:
            rows = FEATURE_SETS[name].rows
            vec = project(fv, name)
            assert vec[rows.index(3)] == fv.values[2]  # Start X everywhere
        ta = project(fv, "ta")
        cheng = project(fv, "cheng")
        assert ta[FEATURE_SETS["ta"].rows.index(8)] == cheng[FEATURE_SETS["cheng"].rows.index(8)]


# rows whose values legitimately depend on absolute screen position
TRANSLATION_DEPENDENT = {3, 4, 5, 6, 51, 52, 53, 54, 58, 59, 60}


class TestInvariants:
    N_STROKES = 300  # the acceptance suite re-runs these checks at 10^4 scale

    def test_translation_invariance(self, rng):
        for i in range(self.N_STROKES):
            prev = random_stroke(rng, swipe_id="p")
            stroke = random_stroke(rng, swipe_id="s")
            base = stroke_feature_values(stroke, prev)
            dx, dy = rng.uniform(-500, 500, size=2)

            def shift(s):
                return dataclasses.replace(
                    s, xs=np.asarray(s.xs) + dx, ys=np.asarray(s.ys) + dy
                )

            moved = stroke_feature_values(shift(stroke), shift(prev))
            for row in range(1, 77):
                if row in TRANSLATION_DEPENDENT:
                    continue
                a, b = base[row - 1], moved[row - 1]
                if np.isfinite(a) or np.isfinite(b):
                    assert a == pytest.approx(b, rel=1e-6, abs=1e-6), f"row {row}"

    def test_time_shift_invariance_all_but_inter_stroke(self, rng):
        for _ in range(self.N_STROKES):
            prev = random_stroke(rng, swipe_id="p")
            stroke = random_stroke(rng, swipe_id="s")
            base = stroke_feature_values(stroke, prev)
            shift = int(rng.integers(1, 10_000_000))
            shifted = dataclasses.replace(
                stroke, timestamps_ms=np.asarray(stroke.timestamps_ms) + shift
            )
            moved = stroke_feature_values(shifted, prev)
            assert moved[1 - 1] == base[1 - 1] + shift
            for row in range(2, 77):
                a, b = base[row - 1], moved[row - 1]
                if np.isfinite(a) or np.isfinite(b):
                    assert a == pytest.approx(b, rel=1e-9, abs=1e-9), f"row {row}"

    def test_ratio_and_resultant_bounds(self, rng):
        for _ in range(self.N_STROKES):
            values = stroke_feature_values(random_stroke(rng))
            assert 0.0 < values[24 - 1] <= 1.0
            assert 0.0 <= values[8 - 1] <= 1.0

    def test_ratio_one_iff_monotone_collinear(self):
        stroke = make_stroke([(i * 7.0, i * 3.0) for i in range(7)])
        assert feature(stroke, 24) == pytest.approx(1.0)
        bent = make_stroke([(0, 0), (5, 8), (10, 0), (15, 8), (20, 0), (25, 8)])
        assert feature(bent, 24) < 1.0

    def test_percentiles_within_min_max(self, rng):
        percentile_rows = {
            11: "v", 12: "v", 13: "v", 32: "v", 33: "v",
            14: "a", 15: "a", 16: "a", 36: "a", 37: "a",
            19: "d", 20: "d", 21: "d",
            40: "p", 41: "p", 42: "p", 45: "ar", 46: "ar", 47: "ar",
        }
        for _ in range(self.N_STROKES):
            stroke = random_stroke(rng)
            kin = compute_kinematics(stroke)
            series = {
                "v": kin.velocities, "a": kin.accelerations, "d": kin.deviations,
                "p": stroke.pressures, "ar": stroke.areas,
            }
            values = stroke_feature_values(stroke)
            for row, key in percentile_rows.items():
                s = series[key]
                assert s.min() - 1e-12 <= values[row - 1] <= s.max() + 1e-12, f"row {row}"

    def test_deviation_features_zero_on_chord(self, rng):
        for _ in range(50):
            n = int(rng.integers(7, 20))
            t = np.sort(rng.uniform(0, 1, n))
            t[0], t[-1] = 0, 1
            start = rng.uniform(0, 500, 2)
            delta = rng.uniform(10, 300, 2)
            pts = start + np.outer(t, delta)
            stroke = make_stroke(pts)
            values = stroke_feature_values(stroke)
            for row in (18, 19, 20, 21):
                assert abs(values[row - 1]) < 1e-9


class TestDump:
    def test_feature_csv(self, tmp_path, rng):
        corpus = generate_synthetic_corpus(2, 6, 6, seed=1)
        corpus = label_directions(filter_clicks(corpus))
        vectors = extract_corpus(corpus)
        path = tmp_path / "features.csv"
        write_feature_csv(vectors, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("user_id,swipe_id,session,direction,f1,")
        assert lines[0].endswith(",f76")
        assert len(lines) == len(vectors) + 1
        # non-finite serialized as empty cells: session-first strokes lack f1
        first_cells = lines[1].split(",")
        assert first_cells[4] == ""
