"""Evaluation protocol: confusion metrics, PR curves, tenfold CV, attacks.

Decisions pool into exact confusion counts; undefined ratios are
reported as absent rather than zero. Cross-validation is window-level
and stratified per subject: eight folds train, one picks the operating
threshold, one is tested. The three attack scenarios (cross-subject
probing, repeated-frame photo, feature-level dynamic swap) run against
a system trained on the full corpus with held-out probe windows.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .errors import (
    EmptyInput,
    EmptySet,
    InsufficientData,
    TooFewWindows,
)
from .pipeline import FeatureSet, extract_clip
from .synth import render_clip, subject_params
from .verifier import (
    RAW_ARTICULATOR,
    RAW_LIPPRINT,
    FeatureTransform,
    SiameseModel,
    Template,
    choose_threshold,
    train_network,
)

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "far", "frr")

# Operating points reported for this approach on a large private cohort.
# Desk-scale synthetic runs are not comparable; these are context for
# dashboards and release notes, never acceptance targets.
REFERENCE_RESULTS = {
    "accuracy_mean": 0.990588,
    "accuracy_median": 0.994669,
    "accuracy_deviation": 0.0097,
    "recall_mean": 0.989273,
    "recall_median": 0.995880,
    "recall_deviation": 0.0046,
    "precision_mean": 0.992578,
    "precision_median": 0.993990,
    "precision_deviation": 0.0046,
    "f1_mean": 0.990886,
    "f1_median": 0.994879,
    "f1_deviation": 0.0095,
    "attack_mimic": 0.0037,
    "attack_static_photo": 0.0068,
    "attack_deepfake": 0.0172,
}

# raw-row column spans swapped by the dynamic-forgery proxy
_DYN = slice(RAW_LIPPRINT.start, RAW_ARTICULATOR.stop)
_LIPPRINT_FLAG = 654
_ARTICULATOR_FLAG = 655


def confusion_counts(decisions) -> tuple[int, int, int, int]:
    """Count (TP, FP, TN, FN) from (accepted, genuine) pairs."""
    decisions = list(decisions)
    if not decisions:
        raise EmptyInput("no decisions to score")
    tp = fp = tn = fn = 0
    for accepted, genuine in decisions:
        if genuine:
            tp += accepted
            fn += not accepted
        else:
            fp += accepted
            tn += not accepted
    return tp, fp, tn, fn


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> dict:
    """The six ratios; a ratio with a zero denominator is None (absent)."""
    total = tp + fp + tn + fn
    if total == 0:
        raise EmptyInput("empty confusion matrix")

    def ratio(num, den):
        return num / den if den > 0 else None

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    if precision is None or recall is None or (precision + recall) == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return {
        "accuracy": (tp + tn) / total,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "far": ratio(fp, fp + tn),
        "frr": ratio(fn, fn + tp),
    }


def metrics(decisions) -> tuple[tuple[int, int, int, int], dict]:
    counts = confusion_counts(decisions)
    return counts, metrics_from_counts(*counts)


def pr_curve(genuine: np.ndarray, impostor: np.ndarray) -> list[tuple[float, float, float]]:
    """(precision, recall, tau) at every threshold in the sorted score union.

    Accept means score <= tau, so recall is monotone along the sweep and
    the smallest candidate already accepts at least one probe.
    """
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise EmptySet("both genuine and impostor scores are required")
    points = []
    for tau in np.unique(np.concatenate([genuine, impostor])):
        tp = int(np.count_nonzero(genuine <= tau))
        fp = int(np.count_nonzero(impostor <= tau))
        fn = genuine.size - tp
        if tp + fp == 0:
            continue
        points.append((tp / (tp + fp), tp / (tp + fn), float(tau)))
    return points


def equal_error_rate(genuine: np.ndarray, impostor: np.ndarray) -> tuple[float, float]:
    """Operating threshold and the balanced error rate at it."""
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    tau = choose_threshold(genuine, impostor)
    far = np.count_nonzero(impostor <= tau) / impostor.size
    frr = np.count_nonzero(genuine > tau) / genuine.size
    return tau, (far + frr) / 2.0


def fold_assignments(subject_index: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Stratified window-level folds: each subject round-robins its windows."""
    subject_index = np.asarray(subject_index)
    folds = np.full(subject_index.shape[0], -1, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for s in np.unique(subject_index):
        where = np.flatnonzero(subject_index == s)
        if where.size < k:
            raise InsufficientData(
                f"subject {s} has {where.size} windows; {k}-fold needs >= {k}")
        order = rng.permutation(where.size)
        folds[where[order]] = np.arange(where.size) % k
    return folds


def fold_assignments_by_subject(subject_index: np.ndarray, k: int,
                                seed: int) -> np.ndarray:
    """Subject-disjoint folds: every window inherits its subject's fold."""
    subject_index = np.asarray(subject_index)
    distinct = np.unique(subject_index)
    if distinct.size < k:
        raise InsufficientData(
            f"{distinct.size} subjects cannot fill {k} disjoint folds")
    order = np.random.default_rng(seed).permutation(distinct.size)
    fold_of = {int(distinct[j]): i % k for i, j in enumerate(order)}
    return np.array([fold_of[int(s)] for s in subject_index], dtype=np.int64)


def make_pairs(labels: np.ndarray, rng: np.random.Generator, max_pairs: int
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Balanced same/different index pairs, deterministically subsampled."""
    labels = np.asarray(labels)
    pos, neg = [], []
    n = labels.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            (pos if labels[i] == labels[j] else neg).append((i, j))
    half = max_pairs // 2
    if len(pos) > half:
        pos = [pos[t] for t in rng.choice(len(pos), half, replace=False)]
    if len(neg) > half:
        neg = [neg[t] for t in rng.choice(len(neg), half, replace=False)]
    pairs = pos + neg
    y = np.array([1.0] * len(pos) + [0.0] * len(neg))
    a = np.array([p[0] for p in pairs], dtype=np.int64)
    b = np.array([p[1] for p in pairs], dtype=np.int64)
    return a, b, y


def train_verifier(rows: np.ndarray, labels: np.ndarray,
                   config: Config | None = None) -> SiameseModel:
    """Fit the feature transform and train the twin network on raw rows."""
    cfg = config or Config()
    transform = FeatureTransform.fit(rows)
    assembled = transform.apply(rows)
    rng = np.random.default_rng([cfg.training.seed, 23])
    a, b, y = make_pairs(labels, rng, cfg.training.max_pairs)
    params, train_loss, _ = train_network(
        assembled[a], assembled[b], y, cfg.network, cfg.training)
    return SiameseModel(net=cfg.network, params=params, transform=transform,
                        seed=cfg.training.seed, final_train_loss=train_loss)


def _min_distances(gallery: np.ndarray, probes: np.ndarray) -> np.ndarray:
    diff = probes[:, None, :] - gallery[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2)).min(axis=1)


def kfold(features: FeatureSet, config: Config | None = None) -> dict:
    """Tenfold protocol: train on 8 folds, pick tau on 1, test on 1.

    Window-level by default; with ``eval.subject_disjoint`` the folds
    partition subjects instead and scored subjects are enrolled from
    their own fold (the model has never seen them), with training
    windows as the impostor cohort. Returns per-fold metric rows,
    pooled decisions and scores, and mean/median/standard deviation
    summaries per metric.
    """
    cfg = config or Config()
    k = cfg.eval.folds
    if k < 3:
        raise InsufficientData(
            "the train/validate/test split needs at least 3 folds")
    if cfg.eval.subject_disjoint:
        folds = fold_assignments_by_subject(features.subject_index, k,
                                            cfg.training.seed)
    else:
        folds = fold_assignments(features.subject_index, k, cfg.training.seed)

    fold_rows: list[dict] = []
    pooled_decisions: list[tuple[bool, bool]] = []
    pooled_genuine: list[float] = []
    pooled_impostor: list[float] = []

    for test_fold in range(k):
        val_fold = (test_fold + 1) % k
        in_test = folds == test_fold
        in_val = folds == val_fold
        in_train = ~(in_test | in_val)

        model = train_verifier(features.rows[in_train],
                               features.subject_index[in_train], cfg)
        train_emb = model.embed(model.transform.apply(features.rows[in_train]))
        train_labels = features.subject_index[in_train]
        galleries = {
            int(s): train_emb[train_labels == s]
            for s in np.unique(train_labels)
        }

        def scores(selector):
            emb = model.embed(model.transform.apply(features.rows[selector]))
            labels = features.subject_index[selector]
            genuine, impostor = [], []
            if cfg.eval.subject_disjoint:
                # unseen-subject protocol: enroll a spread half of the
                # scored fold, probe the rest; training windows all
                # belong to other subjects, so they form the impostors.
                for s in np.unique(labels):
                    own = np.flatnonzero(labels == s)
                    if own.size < 4:
                        raise InsufficientData(
                            f"subject {s} has {own.size} fold windows;"
                            " enrolling needs >= 4")
                    take = max(own.size // 2, 2)
                    spread = np.unique(np.round(
                        np.linspace(0, own.size - 1, take)).astype(int))
                    gallery = emb[own[spread]]
                    probes = np.setdiff1d(own, own[spread])
                    genuine.extend(_min_distances(gallery, emb[probes]))
                    impostor.extend(_min_distances(gallery, train_emb))
                return np.array(genuine), np.array(impostor)
            for s, gallery in galleries.items():
                own = labels == s
                if own.any():
                    genuine.extend(_min_distances(gallery, emb[own]))
                if (~own).any():
                    impostor.extend(_min_distances(gallery, emb[~own]))
            return np.array(genuine), np.array(impostor)

        val_genuine, val_impostor = scores(in_val)
        tau = choose_threshold(val_genuine, val_impostor)

        test_genuine, test_impostor = scores(in_test)
        decisions = [(float(d) <= tau, True) for d in test_genuine]
        decisions += [(float(d) <= tau, False) for d in test_impostor]
        counts = confusion_counts(decisions)
        row = metrics_from_counts(*counts)
        _, row["eer"] = equal_error_rate(test_genuine, test_impostor)
        row["tau"] = tau
        fold_rows.append(row)

        pooled_decisions.extend(decisions)
        pooled_genuine.extend(test_genuine)
        pooled_impostor.extend(test_impostor)

    summary = {}
    for name in METRIC_NAMES + ("eer",):
        values = [r[name] for r in fold_rows if r.get(name) is not None]
        if values:
            summary[name] = {
                "mean": statistics.fmean(values),
                "median": statistics.median(values),
                "std": statistics.pstdev(values),
            }
    return {
        "folds": fold_rows,
        "assignments": folds,
        "summary": summary,
        "decisions": pooled_decisions,
        "genuine_scores": np.array(pooled_genuine),
        "impostor_scores": np.array(pooled_impostor),
    }


@dataclass
class VerificationSystem:
    """A trained model with enrolled per-subject templates."""

    model: SiameseModel
    templates: dict[str, Template]
    config: Config = field(default_factory=Config)

    def score(self, subject: str, raw_rows: np.ndarray) -> np.ndarray:
        template = self.templates[subject]
        probes = self.model.embed(self.model.transform.apply(np.atleast_2d(raw_rows)))
        return _min_distances(template.gallery, probes)

    def accept_rate(self, subject: str, raw_rows: np.ndarray) -> float:
        scores = self.score(subject, raw_rows)
        return float(np.count_nonzero(scores <= self.templates[subject].tau) / scores.size)


def build_system(features: FeatureSet, config: Config | None = None,
                 gallery_share: float = 0.5) -> tuple[VerificationSystem, np.ndarray]:
    """Train on all windows, enroll an evenly spaced share per subject.

    Returns the system plus a boolean held-out mask over the feature rows;
    held-out windows serve as genuine controls and attack material. The
    gallery is spread across each subject's clip rather than taken from
    its start: a time-contiguous gallery calibrates tau on a biased
    sample of the window phases and under-covers the held-out half.
    """
    cfg = config or Config()
    model = train_verifier(features.rows, features.subject_index, cfg)
    assembled = model.transform.apply(features.rows)

    held_out = np.ones(features.count, dtype=bool)
    gallery_idx: dict[int, np.ndarray] = {}
    for s in range(len(features.subjects)):
        where = np.flatnonzero(features.subject_index == s)
        take = max(int(round(where.size * gallery_share)), 3)
        if where.size < take:
            raise TooFewWindows(
                f"subject {features.subjects[s]} has too few windows to enroll")
        spread = np.unique(np.round(np.linspace(0, where.size - 1, take)).astype(int))
        gallery_idx[s] = where[spread]
        held_out[where[spread]] = False

    templates = {}
    for s, idx in gallery_idx.items():
        others = np.concatenate([v for t, v in gallery_idx.items() if t != s])
        gallery = model.embed(assembled[idx])
        genuine = []
        for i in range(gallery.shape[0]):
            rest = np.delete(gallery, i, axis=0)
            genuine.append(float(np.sqrt(((rest - gallery[i]) ** 2).sum(axis=1)).min()))
        impostor = _min_distances(gallery, model.embed(assembled[others]))
        tau = choose_threshold(np.array(genuine), impostor)
        if tau <= 0:
            tau = float(np.nextafter(0.0, 1.0))
        templates[features.subjects[s]] = Template(
            subject=features.subjects[s], gallery=gallery, tau=tau,
            model_version=model.version,
            metadata={"windows": int(idx.size), "impostors": int(others.size)})
    return VerificationSystem(model=model, templates=templates, config=cfg), held_out


def genuine_control(system: VerificationSystem, features: FeatureSet,
                    probe_mask: np.ndarray) -> float:
    """Mean held-out genuine accept rate; the control leg run before attacks."""
    rates = [
        system.accept_rate(name, features.rows[probe_mask & (features.subject_index == s)])
        for s, name in enumerate(features.subjects)
        if (probe_mask & (features.subject_index == s)).any()
    ]
    if not rates:
        raise EmptyInput("no held-out genuine probes available")
    return float(np.mean(rates))


def attack_mimic(system: VerificationSystem, features: FeatureSet,
                 probe_mask: np.ndarray) -> float:
    """Every held-out window of every other subject probes each template."""
    if len(features.subjects) < 2:
        raise InsufficientData("cross-subject probing needs at least 2 subjects")
    attempts = 0
    successes = 0
    for s, name in enumerate(features.subjects):
        other = probe_mask & (features.subject_index != s)
        if not other.any():
            continue
        scores = system.score(name, features.rows[other])
        tau = system.templates[name].tau
        successes += int(np.count_nonzero(scores <= tau))
        attempts += scores.size
    if attempts == 0:
        raise EmptyInput("no impostor probes available")
    return successes / attempts


def attack_static_photo(system: VerificationSystem, photo: FeatureSet) -> float:
    """Repeated-frame probe windows verified against their subject's template."""
    attempts = 0
    successes = 0
    for s, name in enumerate(photo.subjects):
        own = photo.subject_index == s
        if not own.any() or name not in system.templates:
            continue
        scores = system.score(name, photo.rows[own])
        successes += int(np.count_nonzero(scores <= system.templates[name].tau))
        attempts += scores.size
    if attempts == 0:
        raise EmptyInput("no photo probes available")
    return successes / attempts


def deepfake_rows(target_rows: np.ndarray, attacker_rows: np.ndarray,
                  alpha: float = 1.0) -> np.ndarray:
    """Forgery probes: the target's appearance with blended-in attacker dynamics.

    alpha = 0 reproduces the target's genuine rows; alpha = 1 fully
    replaces the lip-print-motion and articulator blocks. Presence flags
    of the blended blocks follow their content.
    """
    target_rows = np.atleast_2d(target_rows)
    attacker_rows = np.atleast_2d(attacker_rows)
    n = min(target_rows.shape[0], attacker_rows.shape[0])
    probe = target_rows[:n].copy()
    blended = ((1.0 - alpha) * target_rows[:n, _DYN]
               + alpha * attacker_rows[:n, _DYN])
    probe[:, _DYN] = blended
    lipprint = probe[:, RAW_LIPPRINT]
    articulator = probe[:, RAW_ARTICULATOR]
    probe[:, _LIPPRINT_FLAG] = (np.abs(lipprint).sum(axis=1) > 0).astype(np.float64)
    probe[:, _ARTICULATOR_FLAG] = (np.abs(articulator).sum(axis=1) > 0).astype(np.float64)
    return probe


def attack_deepfake_proxy(system: VerificationSystem, features: FeatureSet,
                          probe_mask: np.ndarray, alpha: float = 1.0) -> float:
    """Dynamic-swap probes for every ordered (target, attacker) subject pair."""
    if len(features.subjects) < 2:
        raise InsufficientData("the forgery proxy needs at least 2 subjects")
    attempts = 0
    successes = 0
    for t, target in enumerate(features.subjects):
        target_rows = features.rows[probe_mask & (features.subject_index == t)]
        if not target_rows.size:
            continue
        for a in range(len(features.subjects)):
            if a == t:
                continue
            attacker_rows = features.rows[probe_mask & (features.subject_index == a)]
            if not attacker_rows.size:
                continue
            probes = deepfake_rows(target_rows, attacker_rows, alpha)
            scores = system.score(target, probes)
            successes += int(np.count_nonzero(scores <= system.templates[target].tau))
            attempts += scores.size
    if attempts == 0:
        raise EmptyInput("no forgery probes available")
    return successes / attempts


def synth_generate(num_subjects: int, windows_per_subject: int, seed: int,
                   config: Config | None = None) -> FeatureSet:
    """Deterministic corpus through the real pipeline, one clip per subject."""
    cfg = config or Config()
    if num_subjects < 2:
        raise InsufficientData("a corpus needs at least 2 subjects")
    length, stride = cfg.window.length, cfg.window.stride
    n_frames = length + stride * (windows_per_subject - 1)
    parts = []
    for idx in range(num_subjects):
        params = subject_params(seed, idx)
        images, records = render_clip(params, n_frames, seed, idx)
        parts.append(extract_clip(images, records, f"subject{idx:02d}", cfg))
    return FeatureSet.merge(parts)


def synth_photo_probes(num_subjects: int, windows_per_subject: int, seed: int,
                       config: Config | None = None) -> FeatureSet:
    """Static-photo probe windows matching ``synth_generate`` subjects."""
    cfg = config or Config()
    length, stride = cfg.window.length, cfg.window.stride
    n_frames = length + stride * (windows_per_subject - 1)
    parts = []
    for idx in range(num_subjects):
        params = subject_params(seed, idx)
        images, records = render_clip(params, n_frames, seed, idx,
                                      clip_idx=1, static_photo=True)
        parts.append(extract_clip(images, records, f"subject{idx:02d}", cfg))
    return FeatureSet.merge(parts)


@dataclass
class EvalReport:
    """Full evaluation outcome, serializable without timestamps."""

    seed: int
    subjects: int
    windows: int
    counts: tuple[int, int, int, int]
    core: dict
    eer_mean: float
    fold_summary: dict
    attacks: dict
    pr_points: list[tuple[float, float, float]]

    def render(self) -> str:
        tp, fp, tn, fn = self.counts
        lines = [
            f"seed = {self.seed}",
            f"subjects = {self.subjects}",
            f"windows = {self.windows}",
            f"tp = {tp}",
            f"fp = {fp}",
            f"tn = {tn}",
            f"fn = {fn}",
        ]
        for name in METRIC_NAMES:
            value = self.core.get(name)
            lines.append(f"{name} = " + ("absent" if value is None else repr(value)))
        lines.append(f"eer_mean = {self.eer_mean!r}")
        for name in sorted(self.fold_summary):
            stats = self.fold_summary[name]
            for stat in ("mean", "median", "std"):
                lines.append(f"fold_{name}_{stat} = {stats[stat]!r}")
        for name in sorted(self.attacks):
            lines.append(f"attack_{name} = {self.attacks[name]!r}")
        return "\n".join(lines) + "\n"

    def points_text(self) -> str:
        lines = ["tau precision recall"]
        for precision, recall, tau in self.pr_points:
            lines.append(f"{tau!r} {precision!r} {recall!r}")
        return "\n".join(lines) + "\n"


def evaluate_corpus(num_subjects: int = 10, windows_per_subject: int = 20,
                    seed: int = 0, config: Config | None = None,
                    features: FeatureSet | None = None) -> EvalReport:
    """The whole protocol on a synthetic corpus: CV, controls, attacks."""
    cfg = (config or Config()).merged({"training": {"seed": seed}})
    if features is None:
        features = synth_generate(num_subjects, windows_per_subject, seed, cfg)

    cv = kfold(features, cfg)
    counts = confusion_counts(cv["decisions"])
    core = metrics_from_counts(*counts)
    points = pr_curve(cv["genuine_scores"], cv["impostor_scores"])

    system, held_out = build_system(features, cfg)
    photo = synth_photo_probes(num_subjects, min(3, windows_per_subject), seed, cfg)

    attacks = {
        "genuine_control": genuine_control(system, features, held_out),
        "mimic": attack_mimic(system, features, held_out),
        "static_photo": attack_static_photo(system, photo),
        "deepfake_alpha1": attack_deepfake_proxy(system, features, held_out, 1.0),
    }
    return EvalReport(
        seed=seed,
        subjects=len(features.subjects),
        windows=features.count,
        counts=counts,
        core=core,
        eer_mean=cv["summary"]["eer"]["mean"],
        fold_summary=cv["summary"],
        attacks=attacks,
        pr_points=points,
    )
