from __future__ import annotations

import numpy as np
import pytest

from touchauth import classifiers, pipeline, runner, synth
from touchauth.classifiers import ClassifierSpec
from touchauth.errors import MetricError
from touchauth.evaluation import score_test_strokes
from touchauth.ingest import Direction, chronological_test_strokes
from touchauth.seeding import derive_seed


@pytest.fixture(scope="module")
def fitted_world():
    """Small corpus with final hs/vs/omni models for one owner."""
    corpus = synth.generate_synthetic_corpus(3, 14, 9, seed=42, separability=2.5)
    cfg = runner.ExperimentConfig(
        master_seed=7, families=("knn",), schemas=("ta",),
        approaches=("bi", "omni"), windows=(1,),
        train_per_dir=12, test_per_dir=8, workers=1,
    )
    ds = runner.prepare_dataset(corpus, cfg)
    owner = ds.users[0]
    models = {}
    for slot in ("hs", "vs", "omni"):
        mats = {u: ds.train["ta"][u][slot] for u in ds.users}
        x, y = pipeline.build_ovr_training_set(owner, slot, mats, seed=derive_seed(7, "ovr", owner, slot))
        models[slot] = classifiers.fit(ClassifierSpec("knn", {"k": 3}, seed=1), x, y)

    from touchauth.features import clean_nonfinite, extract_corpus
    from touchauth.ingest import Corpus, filter_clicks, label_directions, select_eligible_users

    labeled = label_directions(filter_clicks(corpus))
    kept = {(fv.user_id, fv.session, fv.swipe_id) for fv in clean_nonfinite(extract_corpus(labeled))}
    cleaned = Corpus.from_strokes(
        [s for s in labeled.strokes if (s.user_id, s.session, s.swipe_id) in kept]
    )
    subsets, _ = select_eligible_users(cleaned, 12, 8)
    # predecessor linkage uses the full filtered session stream, not just the
    # cleaned survivors, so context comes from the labeled corpus
    session_b = {
        u: sorted([s for s in labeled.strokes if s.user_id == u and s.session == "B"],
                  key=lambda s: (s.start_ms, s.swipe_id))
        for u in ds.users
    }
    return ds, owner, models, subsets, session_b


class TestScoreTestStrokes:
    def test_omni_scores_every_stroke(self, fitted_world):
        ds, owner, models, subsets, session_b = fitted_world
        subset = [s for s in subsets if s.user_id == owner][0]
        strokes = chronological_test_strokes(subset)
        picked = {s.swipe_id for s in strokes}
        context = [s for s in session_b[owner] if s.swipe_id not in picked]
        stream = score_test_strokes({"omni": models["omni"]}, strokes, "ta", owner,
                                    context_strokes=context)
        assert len(stream) == 32  # 4 directions x 8
        assert stream.is_genuine
        assert np.all((stream.probabilities >= 0) & (stream.probabilities <= 1))
        assert np.all(np.diff(stream.timestamps_ms) >= 0)

    def test_bidirectional_routes_by_direction(self, fitted_world):
        ds, owner, models, subsets, session_b = fitted_world
        impostor = ds.users[1]
        subset = [s for s in subsets if s.user_id == impostor][0]
        strokes = chronological_test_strokes(subset)
        picked = {s.swipe_id for s in strokes}
        context = [s for s in session_b[impostor] if s.swipe_id not in picked]
        bi = {"hs": models["hs"], "vs": models["vs"]}
        stream = score_test_strokes(bi, strokes, "ta", owner, context_strokes=context)
        assert not stream.is_genuine
        # horizontal strokes must carry the hs model's scores exactly
        horizontal = [s for s in strokes if s.direction in (Direction.LEFT, Direction.RIGHT)]
        h_ids = {s.swipe_id for s in horizontal}
        hs_context = [s for s in session_b[impostor] if s.swipe_id not in h_ids]
        hs_only = score_test_strokes({"hs": models["hs"]}, horizontal,
                                     "ta", owner, context_strokes=hs_context)
        mask = np.isin(stream.directions, ["left", "right"])
        assert np.array_equal(stream.probabilities[mask], hs_only.probabilities)

    def test_matches_runner_stream_assembly(self, fitted_world):
        ds, owner, models, subsets, session_b = fitted_world
        all_models = {owner: models}
        for other in ds.users[1:]:
            all_models[other] = {}
            for slot in ("hs", "vs", "omni"):
                mats = {u: ds.train["ta"][u][slot] for u in ds.users}
                x, y = pipeline.build_ovr_training_set(
                    other, slot, mats, seed=derive_seed(7, "ovr", other, slot)
                )
                all_models[other][slot] = classifiers.fit(
                    ClassifierSpec("knn", {"k": 3}, seed=1), x, y
                )
        key_scores = {}
        for u, slot_models in all_models.items():
            for slot, model in slot_models.items():
                slot_codes = {"hs": [0, 1], "vs": [2, 3], "omni": [0, 1, 2, 3]}[slot]
                sc = {}
                for v in ds.users:
                    mask = np.isin(ds.test_direction_codes[v], slot_codes)
                    sc[v] = classifiers.predict_proba(model, ds.test["ta"][v][mask])
                key_scores[(u, "ta", "knn", slot)] = type("R", (), {"scores": sc})()
        cfg = runner.ExperimentConfig(master_seed=7, families=("knn",), schemas=("ta",),
                                      approaches=("bi", "omni"), windows=(1,),
                                      train_per_dir=12, test_per_dir=8)
        streams = runner.assemble_streams(ds, cfg, key_scores)
        for identity in (owner, ds.users[1]):
            subset = [s for s in subsets if s.user_id == identity][0]
            strokes = chronological_test_strokes(subset)
            picked = {s.swipe_id for s in strokes}
            context = [s for s in session_b[identity] if s.swipe_id not in picked]
            api = score_test_strokes({"hs": models["hs"], "vs": models["vs"]},
                                     strokes, "ta", owner, context_strokes=context)
            assembled = streams[("knn", "ta", "bi")][owner][identity]
            assert np.array_equal(api.probabilities, assembled)

    def test_cold_stream_drops_first_stroke_with_warning(self, fitted_world, caplog):
        ds, owner, models, subsets, session_b = fitted_world
        subset = [s for s in subsets if s.user_id == owner][0]
        strokes = chronological_test_strokes(subset)
        head_is_session_first = strokes[0].swipe_id == session_b[owner][0].swipe_id
        with caplog.at_level("WARNING"):
            stream = score_test_strokes({"omni": models["omni"]}, strokes, "ta", owner)
        if head_is_session_first:
            assert len(stream) == 31
            assert any("non-finite" in r.message for r in caplog.records)
        else:
            assert len(stream) <= 32

    def test_empty_raises(self, fitted_world):
        _, owner, models, _, _ = fitted_world
        with pytest.raises(MetricError):
            score_test_strokes({"omni": models["omni"]}, [], "ta", owner)


class TestSynthEdgeCases:
    def test_zero_strokes_requested_gives_empty_corpus(self):
        corpus = synth.generate_synthetic_corpus(2, 0, 0, seed=1)
        assert len(corpus) == 0 and corpus.users == ()
