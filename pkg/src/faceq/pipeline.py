"""End-to-end experimental protocols and a synthetic-corpus generator.

protocol_within: repeated subject-disjoint train/test splits of one corpus
with grid-searched SVR inside the training side, reporting test Spearman.
protocol_cross: grid search and final fit on one corpus, prediction on
another (no training on the test corpus), with the detection-failure floor
applied to the output.
synth_corpus: a seeded, fully deterministic world with known latent quality
so every stage of the toolkit can be verified at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (
    FaceRecord,
    FeatureCorpus,
    QualityAssignment,
    ScoreSet,
    Template,
)
from .errors import DimensionMismatch, MissingTarget, UnknownImageId
from .evaluation import apply_failure_floor, spearman
from .pairwise import Coarse, Comparison, ComparisonSet
from .svr import (
    DEFAULT_GRID,
    GridSearchResult,
    QualityModel,
    SvrParams,
    TargetKind,
    grid_search,
    predict_many,
)


# ---------------------------------------------------------------------------
# protocol A: train, validate, and test within one corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitOutcome:
    split: int
    rho_test: float
    best_params: SvrParams
    train_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]
    model: QualityModel


@dataclass(frozen=True)
class WithinResult:
    splits: tuple[SplitOutcome, ...]
    mean_rho: float
    std_rho: float


def _resolve_rows(
    corpus: FeatureCorpus,
    targets: QualityAssignment,
    probe_ids: Sequence[str] | None,
) -> list[str]:
    if probe_ids is None:
        multi = set(corpus.multi_image_subjects())
        rows = [r.image_id for r in corpus.records if r.subject_id in multi]
    else:
        rows = list(probe_ids)
        for image_id in rows:
            if image_id not in corpus:
                raise UnknownImageId(f"probe {image_id!r} not in corpus")
    for image_id in rows:
        if image_id not in targets:
            raise MissingTarget(f"no target quality for probe {image_id!r}")
    return rows


def protocol_within(
    corpus: FeatureCorpus,
    targets: QualityAssignment,
    splits: int = 10,
    train_frac: float = 2.0 / 3.0,
    folds: int = 5,
    grid: Sequence[SvrParams] = DEFAULT_GRID,
    seed: int = 0,
    probe_ids: Sequence[str] | None = None,
    target_kind: TargetKind = TargetKind.HQV,
    jobs: int = 1,
) -> WithinResult:
    """Random subject-disjoint splits; grid search with inner subject-disjoint
    folds on the training side only; report test Spearman per split."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    rows = _resolve_rows(corpus, targets, probe_ids)
    X = corpus.feature_matrix(rows)
    y = np.array([targets[r] for r in rows])
    subj = np.array([corpus.subject_of(r) for r in rows])
    subjects = list(dict.fromkeys(subj))
    n_train = int(math.floor(train_frac * len(subjects)))
    if n_train < 1 or n_train >= len(subjects):
        raise ValueError(
            f"train_frac {train_frac} gives {n_train} training subjects out of {len(subjects)}"
        )

    outcomes = []
    for s in range(splits):
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, s])
        order = rng.permutation(len(subjects))
        train_subjects = {subjects[i] for i in order[:n_train]}
        in_train = np.array([sub in train_subjects for sub in subj])
        result = grid_search(
            X[in_train],
            y[in_train],
            subj[in_train],
            grid=grid,
            k=folds,
            seed=seed + s,
            target_kind=target_kind,
            jobs=jobs,
        )
        pred = predict_many(result.model, X[~in_train])
        rho = spearman(y[~in_train], pred)
        outcomes.append(
            SplitOutcome(
                split=s,
                rho_test=rho,
                best_params=result.best_params,
                train_subjects=tuple(sorted(train_subjects)),
                test_subjects=tuple(sorted(set(subjects) - train_subjects)),
                model=result.model,
            )
        )
    rhos = np.array([o.rho_test for o in outcomes])
    std = float(rhos.std(ddof=1)) if len(rhos) > 1 else 0.0
    return WithinResult(splits=tuple(outcomes), mean_rho=float(rhos.mean()), std_rho=std)


def save_within_summary(result: WithinResult, path: str | Path) -> None:
    """Plain-text split table with a mean,std footer."""
    with open(path, "w") as fh:
        fh.write("split,rho_test,best_C,best_gamma,best_epsilon\n")
        for o in result.splits:
            fh.write(
                f"{o.split},{o.rho_test!r},{o.best_params.C!r},"
                f"{o.best_params.gamma!r},{o.best_params.epsilon!r}\n"
            )
        fh.write(f"mean,{result.mean_rho!r}\n")
        fh.write(f"std,{result.std_rho!r}\n")


# ---------------------------------------------------------------------------
# protocol B: train on one corpus, predict on another
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossResult:
    quality: QualityAssignment
    model: QualityModel
    search: GridSearchResult


def protocol_cross(
    train_corpus: FeatureCorpus,
    train_targets: QualityAssignment,
    test_corpus: FeatureCorpus,
    folds: int = 5,
    grid: Sequence[SvrParams] = DEFAULT_GRID,
    seed: int = 0,
    target_kind: TargetKind = TargetKind.HQV,
    apply_floor: bool = True,
    jobs: int = 1,
) -> CrossResult:
    """Grid search (subject-disjoint folds) on the training corpus, retrain on
    all its target rows, predict every test record; detection failures are
    floored below the minimum predicted quality."""
    if train_corpus.dim != test_corpus.dim:
        raise DimensionMismatch(
            f"train dim {train_corpus.dim} != test dim {test_corpus.dim}"
        )
    rows = [r.image_id for r in train_corpus.records if r.image_id in train_targets]
    extra = [i for i in train_targets.values if i not in train_corpus]
    if extra:
        raise UnknownImageId(f"targets name images missing from corpus: {extra[:5]!r}")
    if not rows:
        raise MissingTarget("no training corpus row has a target")
    X = train_corpus.feature_matrix(rows)
    y = np.array([train_targets[r] for r in rows])
    subj = [train_corpus.subject_of(r) for r in rows]
    search = grid_search(
        X, y, subj, grid=grid, k=folds, seed=seed, target_kind=target_kind, jobs=jobs
    )

    test_ids = [r.image_id for r in test_corpus.records]
    pred = predict_many(search.model, test_corpus.feature_matrix(test_ids))
    quality = QualityAssignment({i: float(p) for i, p in zip(test_ids, pred)})
    if apply_floor:
        quality = apply_failure_floor(quality, test_corpus)
    return CrossResult(quality=quality, model=search.model, search=search)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthNoise:
    """Noise levels for the synthetic world; all default to a clean corpus."""

    feature_noise: float = 0.0
    genuine_noise: float = 0.0
    impostor_noise: float = 0.0
    flip_prob: float = 0.0
    similar_band: float = 0.0
    affinity_spread: float = 0.0


@dataclass(frozen=True)
class SynthData:
    corpus: FeatureCorpus
    latent_quality: QualityAssignment
    scores: ScoreSet
    comparisons: ComparisonSet
    gallery_ids: tuple[str, ...]
    probe_ids: tuple[str, ...]
    templates: tuple[Template, ...]


def synth_corpus(
    n_subjects: int,
    images_per_subject: int,
    dim: int = 8,
    noise: SynthNoise = SynthNoise(),
    seed: int = 0,
    n_raters: int = 20,
    comparisons_per_rater: int = 800,
) -> SynthData:
    """Deterministic synthetic world with a known latent quality per image.

    Each image draws a latent quality q in [0, 1]; features embed q in the
    first dimensions plus pure-noise distractors. The first image of each
    subject is enrolled as gallery, the rest are probes. A probe's genuine
    score is its subject's base affinity scaled down by (1 - q) plus noise;
    its impostor scores are one fixed q-independent multiset (identical for
    every probe when impostor_noise is zero). Rater comparisons follow
    sign(q_left - q_right) with flip probability flip_prob and SIMILAR when
    |dq| < similar_band.
    """
    if n_subjects < 1 or images_per_subject < 1 or dim < 1:
        raise ValueError("counts must be >= 1")
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)

    image_ids: list[str] = []
    subject_of: list[str] = []
    for s in range(n_subjects):
        for j in range(images_per_subject):
            image_ids.append(f"s{s:04d}_i{j:02d}")
            subject_of.append(f"s{s:04d}")
    total = len(image_ids)

    q = rng.uniform(0.0, 1.0, size=total)
    informative = min(3, dim)
    feats = rng.normal(0.0, 1.0, size=(total, dim))
    base = np.stack([q, q * q, 1.0 - q], axis=1)[:, :informative]
    feats[:, :informative] = base + noise.feature_noise * rng.normal(size=(total, informative))

    records = tuple(
        FaceRecord(image_ids[i], subject_of[i], tuple(float(v) for v in feats[i]))
        for i in range(total)
    )
    corpus = FeatureCorpus(records)
    latent = QualityAssignment({image_ids[i]: float(q[i]) for i in range(total)})

    gallery_ids = tuple(f"s{s:04d}_i00" for s in range(n_subjects))
    probe_ids = tuple(i for i in image_ids if i not in set(gallery_ids))

    affinity = 0.9 + noise.affinity_spread * (rng.uniform(size=n_subjects) - 0.5)
    q_of = {image_ids[i]: q[i] for i in range(total)}
    subject_map = dict(zip(image_ids, subject_of))
    subject_index = {f"s{s:04d}": s for s in range(n_subjects)}

    impostor_pattern = (
        np.linspace(0.05, 0.45, n_subjects - 1) if n_subjects > 1 else np.empty(0)
    )
    entries: list[tuple[str, str, float]] = []
    for probe in probe_ids:
        subject = subject_map[probe]
        s_idx = subject_index[subject]
        rank = 0
        for g in gallery_ids:
            if subject_map[g] == subject:
                score = affinity[s_idx] * (1.0 - 0.5 * (1.0 - q_of[probe]))
                if noise.genuine_noise:
                    score += noise.genuine_noise * rng.normal()
            else:
                score = impostor_pattern[rank]
                if noise.impostor_noise:
                    score += noise.impostor_noise * rng.normal()
                rank += 1
            entries.append((probe, g, float(score)))
    scores = ScoreSet(tuple(entries))

    rows: list[Comparison] = []
    for r in range(n_raters):
        rater = f"r{r:03d}"
        for _ in range(comparisons_per_rater):
            i = int(rng.integers(total))
            j = int(rng.integers(total))
            while j == i:
                j = int(rng.integers(total))
            dq = q[i] - q[j]
            if abs(dq) < noise.similar_band:
                coarse = Coarse.SIMILAR
            else:
                coarse = Coarse.LEFT if dq > 0 else Coarse.RIGHT
                if noise.flip_prob and rng.random() < noise.flip_prob:
                    coarse = Coarse.RIGHT if coarse is Coarse.LEFT else Coarse.LEFT
            rows.append(Comparison(rater, image_ids[i], image_ids[j], coarse))
    comparisons = ComparisonSet(tuple(rows))

    templates = tuple(
        Template(f"tg{s:04d}", f"s{s:04d}", (f"s{s:04d}_i00",)) for s in range(n_subjects)
    ) + tuple(
        Template(
            f"tp{s:04d}",
            f"s{s:04d}",
            tuple(i for i in probe_ids if subject_map[i] == f"s{s:04d}"),
        )
        for s in range(n_subjects)
        if images_per_subject > 1
    )

    return SynthData(
        corpus=corpus,
        latent_quality=latent,
        scores=scores,
        comparisons=comparisons,
        gallery_ids=gallery_ids,
        probe_ids=probe_ids,
        templates=templates,
    )
