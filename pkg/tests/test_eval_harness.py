"""Evaluation protocol tests: metrics, folding, attacks, synthetic corpus."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipdyn.config import Config
from lipdyn.errors import EmptyInput, EmptySet, InsufficientData
from lipdyn.eval_harness import (
    METRIC_NAMES,
    REFERENCE_RESULTS,
    EvalReport,
    attack_deepfake_proxy,
    attack_mimic,
    attack_static_photo,
    build_system,
    confusion_counts,
    deepfake_rows,
    equal_error_rate,
    fold_assignments,
    fold_assignments_by_subject,
    kfold,
    make_pairs,
    metrics,
    metrics_from_counts,
    pr_curve,
    synth_generate,
    synth_photo_probes,
)
from lipdyn.pipeline import RAW_DIM, FeatureSet, extract_clip
from lipdyn.synth import render_clip, subject_params

RAW_STATIC = slice(0, 8)
RAW_LIPPRINT = slice(248, 269)
RAW_ARTICULATOR = slice(269, 652)
LIPPRINT_FLAG = 654
ARTICULATOR_FLAG = 655


def decisions_from_counts(tp, fp, tn, fn):
    return ([(True, True)] * tp + [(True, False)] * fp
            + [(False, False)] * tn + [(False, True)] * fn)


class TestMetrics:
    def test_nine_one_matrix_gives_point_nine_everywhere(self):
        # TP=9 FP=1 FN=1 TN=9 makes every ratio exactly 0.9
        counts, core = metrics(decisions_from_counts(9, 1, 9, 1))
        assert counts == (9, 1, 9, 1)
        assert core["accuracy"] == 0.9
        assert core["precision"] == 0.9
        assert core["recall"] == 0.9
        assert core["f1"] == 0.9
        assert core["far"] == 0.1
        assert core["frr"] == 0.1

    def test_all_correct_is_perfect(self):
        _, core = metrics(decisions_from_counts(5, 0, 5, 0))
        assert core["accuracy"] == 1.0
        assert core["precision"] == 1.0
        assert core["recall"] == 1.0
        assert core["f1"] == 1.0
        assert core["far"] == 0.0
        assert core["frr"] == 0.0

    def test_no_accepts_leaves_precision_absent(self):
        _, core = metrics(decisions_from_counts(0, 0, 4, 2))
        assert core["precision"] is None
        assert core["f1"] is None
        assert core["recall"] == 0.0

    def test_empty_decision_list_rejected(self):
        with pytest.raises(EmptyInput):
            confusion_counts([])
        with pytest.raises(EmptyInput):
            metrics_from_counts(0, 0, 0, 0)

    def test_reference_results_are_rates(self):
        # context constants for dashboards; shape and range only
        for name in ("accuracy", "precision", "recall", "f1"):
            assert name in METRIC_NAMES
            for stat in ("mean", "median", "deviation"):
                assert 0.0 < REFERENCE_RESULTS[f"{name}_{stat}"] < 1.0
        for scenario in ("mimic", "static_photo", "deepfake"):
            assert 0.0 < REFERENCE_RESULTS[f"attack_{scenario}"] < 0.02

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
    @settings(max_examples=40, deadline=None)
    def test_counts_match_brute_force_recount(self, decisions):
        tp, fp, tn, fn = confusion_counts(decisions)
        assert tp == sum(1 for a, g in decisions if a and g)
        assert fp == sum(1 for a, g in decisions if a and not g)
        assert tn == sum(1 for a, g in decisions if not a and not g)
        assert fn == sum(1 for a, g in decisions if not a and g)
        core = metrics_from_counts(tp, fp, tn, fn)
        assert core["accuracy"] == (tp + tn) / len(decisions)
        if tp + fp:
            assert core["precision"] == tp / (tp + fp)
        if tp + fn:
            assert core["recall"] == tp / (tp + fn)


class TestPrCurve:
    def test_separable_scores_reach_a_perfect_point(self):
        points = pr_curve(np.array([0.1, 0.2]), np.array([0.8, 0.9]))
        assert (1.0, 1.0) in [(p, r) for p, r, _ in points]

    def test_single_pair(self):
        points = pr_curve(np.array([1.0]), np.array([2.0]))
        assert points == [(1.0, 1.0, 1.0), (0.5, 1.0, 2.0)]

    def test_identical_multisets_end_at_genuine_share(self):
        scores = np.array([0.3, 0.5, 0.7])
        points = pr_curve(scores, scores)
        precision, recall, tau = points[-1]
        assert (precision, recall, tau) == (0.5, 1.0, 0.7)

    def test_recall_monotone_and_final_point_accepts_everything(self):
        rng = np.random.default_rng(3)
        genuine = rng.normal(0.0, 1.0, 40) ** 2
        impostor = rng.normal(1.5, 1.0, 25) ** 2
        points = pr_curve(genuine, impostor)
        recalls = [r for _, r, _ in points]
        assert recalls == sorted(recalls)
        precision, recall, tau = points[-1]
        assert tau == max(genuine.max(), impostor.max())
        assert recall == 1.0
        assert precision == genuine.size / (genuine.size + impostor.size)

    def test_empty_side_rejected(self):
        with pytest.raises(EmptySet):
            pr_curve(np.array([]), np.array([1.0]))

    def test_separated_clusters_have_zero_eer(self):
        tau, eer = equal_error_rate(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        assert tau == 2.5
        assert eer == 0.0


class TestFolds:
    def test_disjoint_cover_and_stratified_balance(self):
        subjects = np.repeat(np.arange(4), 20)
        folds = fold_assignments(subjects, 10, seed=0)
        assert folds.min() == 0 and folds.max() == 9
        assert np.all(folds >= 0)
        for s in range(4):
            sizes = np.bincount(folds[subjects == s], minlength=10)
            assert sizes.max() - sizes.min() <= 1

    def test_each_window_tested_exactly_once(self):
        subjects = np.repeat(np.arange(3), 10)
        folds = fold_assignments(subjects, 10, seed=4)
        tested = np.zeros(subjects.size, dtype=int)
        for fold in range(10):
            tested[folds == fold] += 1
        assert np.all(tested == 1)

    def test_same_seed_identical_different_seed_not(self):
        subjects = np.repeat(np.arange(5), 12)
        a = fold_assignments(subjects, 10, seed=7)
        b = fold_assignments(subjects, 10, seed=7)
        c = fold_assignments(subjects, 10, seed=8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_nine_windows_cannot_fill_ten_folds(self):
        subjects = np.repeat(np.arange(2), 9)
        with pytest.raises(InsufficientData):
            fold_assignments(subjects, 10, seed=0)

    def test_subject_folds_keep_subjects_whole(self):
        subjects = np.repeat(np.arange(6), 5)
        folds = fold_assignments_by_subject(subjects, 3, seed=1)
        for s in range(6):
            assert np.unique(folds[subjects == s]).size == 1
        assert np.unique(folds).tolist() == [0, 1, 2]

    def test_subject_folds_need_enough_subjects(self):
        with pytest.raises(InsufficientData):
            fold_assignments_by_subject(np.repeat(np.arange(2), 8), 3, seed=0)


class TestMakePairs:
    def test_labels_match_pair_sides(self):
        labels = np.repeat(np.arange(4), 6)
        a, b, y = make_pairs(labels, np.random.default_rng(0), max_pairs=100)
        assert a.size == b.size == y.size <= 100
        same = labels[a] == labels[b]
        assert np.array_equal(same.astype(float), y)
        assert np.all(a < b)

    def test_cap_and_balance(self):
        labels = np.repeat(np.arange(4), 10)
        a, _, y = make_pairs(labels, np.random.default_rng(1), max_pairs=60)
        assert a.size == 60
        assert int(y.sum()) == 30

    def test_deterministic_for_same_generator_seed(self):
        labels = np.repeat(np.arange(3), 8)
        first = make_pairs(labels, np.random.default_rng(5), max_pairs=40)
        second = make_pairs(labels, np.random.default_rng(5), max_pairs=40)
        for x, z in zip(first, second):
            assert np.array_equal(x, z)


def cluster_feature_set(n_subjects=4, windows=12, seed=0) -> FeatureSet:
    """Raw-shaped rows with a strong per-subject offset; fast to train on."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 4.0, (n_subjects, RAW_DIM))
    rows = np.vstack([
        centers[s] + rng.normal(0.0, 0.3, (windows, RAW_DIM))
        for s in range(n_subjects)
    ])
    index = np.repeat(np.arange(n_subjects), windows)
    starts = np.tile(np.arange(windows), n_subjects)
    return FeatureSet(rows=rows, subjects=[f"u{s}" for s in range(n_subjects)],
                      subject_index=index, window_start=starts)


FAST = {"training": {"epochs": 4, "max_pairs": 80}, "eval": {"folds": 3}}


@pytest.fixture(scope="module")
def small_system():
    features = cluster_feature_set()
    system, held_out = build_system(features, Config().merged(FAST))
    return system, held_out, features


class TestKfold:
    def test_summary_covers_all_folds_and_scores_pool(self):
        features = cluster_feature_set()
        out = kfold(features, Config().merged(FAST))
        assert len(out["folds"]) == 3
        assert out["genuine_scores"].size == features.count
        assert {"mean", "median", "std"} <= set(out["summary"]["accuracy"])
        assert 0.0 <= out["summary"]["eer"]["mean"] <= 1.0
        for row in out["folds"]:
            assert row["tau"] > 0.0

    def test_separable_clusters_score_high(self):
        out = kfold(cluster_feature_set(), Config().merged(FAST))
        assert out["summary"]["accuracy"]["mean"] > 0.9
        assert out["summary"]["eer"]["mean"] < 0.1

    def test_subject_disjoint_mode_runs_and_separates(self):
        cfg = Config().merged({"training": {"epochs": 4, "max_pairs": 80},
                               "eval": {"folds": 3, "subject_disjoint": True}})
        out = kfold(cluster_feature_set(n_subjects=6, windows=8), cfg)
        assert len(out["folds"]) == 3
        assert out["summary"]["accuracy"]["mean"] > 0.9

    def test_two_folds_rejected(self):
        cfg = Config().merged({"eval": {"folds": 2}})
        with pytest.raises(InsufficientData):
            kfold(cluster_feature_set(), cfg)


class TestSystemAndAttacks:
    def test_enrolled_windows_always_accepted(self, small_system):
        # min distance to the gallery is zero for an enrolled row itself
        system, held_out, features = small_system
        for s, name in enumerate(features.subjects):
            enrolled = ~held_out & (features.subject_index == s)
            assert system.accept_rate(name, features.rows[enrolled]) == 1.0

    def test_mimic_rate_bounded_and_zero_at_zero_tau(self, small_system):
        system, held_out, features = small_system
        rate = attack_mimic(system, features, held_out)
        assert 0.0 <= rate <= 1.0
        saved = {name: t.tau for name, t in system.templates.items()}
        try:
            for t in system.templates.values():
                t.tau = 0.0
            assert attack_mimic(system, features, held_out) == 0.0
        finally:
            for name, t in system.templates.items():
                t.tau = saved[name]

    def test_mimic_needs_two_subjects(self, small_system):
        system, _, _ = small_system
        rows = cluster_feature_set(n_subjects=4, windows=4).rows[:4]
        lonely = FeatureSet(rows=rows, subjects=["u0"],
                            subject_index=np.zeros(4, dtype=int),
                            window_start=np.arange(4))
        with pytest.raises(InsufficientData):
            attack_mimic(system, lonely, np.ones(4, dtype=bool))

    def test_deepfake_rate_bounded(self, small_system):
        system, held_out, features = small_system
        rate = attack_deepfake_proxy(system, features, held_out, alpha=1.0)
        assert 0.0 <= rate <= 1.0


class TestDeepfakeRows:
    def test_alpha_zero_reproduces_target(self):
        rng = np.random.default_rng(2)
        target = rng.normal(size=(3, RAW_DIM))
        attacker = rng.normal(size=(5, RAW_DIM))
        probe = deepfake_rows(target, attacker, alpha=0.0)
        assert probe.shape == (3, RAW_DIM)
        assert np.array_equal(probe[:, :LIPPRINT_FLAG], target[:, :LIPPRINT_FLAG])

    def test_alpha_one_swaps_dynamics_keeps_appearance(self):
        rng = np.random.default_rng(3)
        target = rng.normal(size=(4, RAW_DIM))
        attacker = rng.normal(size=(4, RAW_DIM))
        probe = deepfake_rows(target, attacker, alpha=1.0)
        assert np.array_equal(probe[:, RAW_STATIC], target[:, RAW_STATIC])
        assert np.array_equal(probe[:, RAW_LIPPRINT], attacker[:, RAW_LIPPRINT])
        assert np.array_equal(probe[:, RAW_ARTICULATOR], attacker[:, RAW_ARTICULATOR])

    def test_flags_follow_blended_content(self):
        target = np.ones((2, RAW_DIM))
        attacker = np.zeros((2, RAW_DIM))
        probe = deepfake_rows(target, attacker, alpha=1.0)
        assert np.all(probe[:, LIPPRINT_FLAG] == 0.0)
        assert np.all(probe[:, ARTICULATOR_FLAG] == 0.0)
        genuine = deepfake_rows(target, attacker, alpha=0.0)
        assert np.all(genuine[:, LIPPRINT_FLAG] == 1.0)
        assert np.all(genuine[:, ARTICULATOR_FLAG] == 1.0)

    def test_row_count_is_pairwise_minimum(self):
        target = np.zeros((5, RAW_DIM))
        attacker = np.ones((3, RAW_DIM))
        assert deepfake_rows(target, attacker).shape[0] == 3


class TestSyntheticCorpus:
    def test_count_and_determinism(self):
        first = synth_generate(2, 3, seed=11)
        again = synth_generate(2, 3, seed=11)
        assert first.count == 2 * 3
        assert first.subjects == ["subject00", "subject01"]
        assert np.array_equal(first.rows, again.rows)
        other = synth_generate(2, 3, seed=12)
        assert not np.array_equal(first.rows, other.rows)

    def test_needs_two_subjects(self):
        with pytest.raises(InsufficientData):
            synth_generate(1, 3, seed=0)

    def test_identical_parameters_are_indistinguishable(self):
        # negative control: same dynamics re-rendered under fresh jitter
        # must look like more windows of the same person, while a real
        # second subject must not
        cfg = Config()
        params = subject_params(31, 0)
        n_frames = cfg.window.length + cfg.window.stride * 3
        sets = []
        for clip_idx, name in ((0, "a"), (1, "a-again")):
            images, records = render_clip(params, n_frames, 31, 0,
                                          clip_idx=clip_idx)
            sets.append(extract_clip(images, records, name, cfg))
        other_params = subject_params(31, 1)
        images, records = render_clip(other_params, n_frames, 31, 1)
        sets.append(extract_clip(images, records, "b", cfg))

        pooled = np.vstack([f.rows for f in sets])
        mu, sd = pooled.mean(axis=0), pooled.std(axis=0)
        sd[sd == 0] = 1.0
        z = [(f.rows - mu) / sd for f in sets]

        def pair_distances(x, y):
            d = x[:, None, :] - y[None, :, :]
            return np.sqrt((d * d).sum(axis=2)).ravel()

        genuine = pair_distances(z[0], z[0])
        genuine = genuine[genuine > 0]
        twin = pair_distances(z[0], z[1])
        stranger = pair_distances(z[0], z[2])
        assert np.median(twin) < 1.5 * np.median(genuine)
        assert np.median(stranger) > np.median(twin)

    def test_photo_probes_have_degenerate_dynamics(self):
        photo = synth_photo_probes(2, 2, seed=9)
        assert photo.count == 4
        assert np.all(photo.rows[:, RAW_ARTICULATOR] == 0.0)
        assert np.all(photo.rows[:, RAW_LIPPRINT] == 0.0)
        assert np.all(photo.rows[:, LIPPRINT_FLAG] == 0.0)
        assert np.all(photo.rows[:, ARTICULATOR_FLAG] == 0.0)

    def test_photo_attack_round_trip(self, small_system):
        system, _, features = small_system
        photo_rows = features.rows.copy()
        photo_rows[:, RAW_LIPPRINT.start:RAW_ARTICULATOR.stop] = 0.0
        photo_rows[:, LIPPRINT_FLAG] = 0.0
        photo_rows[:, ARTICULATOR_FLAG] = 0.0
        photo = FeatureSet(rows=photo_rows, subjects=features.subjects,
                           subject_index=features.subject_index,
                           window_start=features.window_start)
        rate = attack_static_photo(system, photo)
        assert 0.0 <= rate <= 1.0


class TestReport:
    def report(self):
        return EvalReport(
            seed=7, subjects=2, windows=12, counts=(9, 1, 9, 1),
            core=metrics_from_counts(9, 1, 9, 1),
            eer_mean=0.05,
            fold_summary={"accuracy": {"mean": 0.9, "median": 0.9, "std": 0.0}},
            attacks={"mimic": 0.1},
            pr_points=[(1.0, 0.5, 0.25), (0.9, 1.0, 0.5)])

    def test_render_is_stable_and_parseable(self):
        text = self.report().render()
        assert text == self.report().render()
        parsed = dict(line.split(" = ", 1) for line in text.strip().splitlines())
        assert parsed["seed"] == "7"
        assert parsed["accuracy"] == "0.9"
        assert parsed["f1"] == repr(metrics_from_counts(9, 1, 9, 1)["f1"])
        assert parsed["attack_mimic"] == "0.1"
        assert parsed["fold_accuracy_std"] == "0.0"

    def test_absent_metric_rendered_as_absent(self):
        report = self.report()
        report.core = metrics_from_counts(0, 0, 4, 2)
        assert "precision = absent" in report.render()

    def test_points_text_lists_every_threshold(self):
        lines = self.report().points_text().strip().splitlines()
        assert lines[0] == "tau precision recall"
        assert lines[1:] == ["0.25 1.0 0.5", "0.5 0.9 1.0"]
