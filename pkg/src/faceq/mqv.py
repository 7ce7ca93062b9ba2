"""Matcher Quality Values: impostor-normalized genuine scores.

Each probe's quality is z = (s_genuine - mean_impostor) / std_impostor with
the population (divide-by-N) standard deviation, computed against the gallery
under a one-gallery-image-per-subject partition. Probes whose profile is
unusable (missing genuine pair, fewer than two impostors, or zero impostor
spread) are reported and omitted rather than clamped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import FeatureCorpus, QualityAssignment, ScoreSet, validate_partition
from .errors import (
    DegenerateImpostorSpread,
    MissingGenuineScore,
    TooFewImpostors,
)

SIGMA_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ProbeScoreProfile:
    """One probe's genuine score and its impostor score population."""

    probe_id: str
    genuine_score: float
    impostor_scores: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.impostor_scores:
            raise TooFewImpostors(f"probe {self.probe_id!r} has no impostor scores")

    @property
    def impostor_mean(self) -> float:
        return math.fsum(self.impostor_scores) / len(self.impostor_scores)

    @property
    def impostor_std(self) -> float:
        mu = self.impostor_mean
        var = math.fsum((s - mu) ** 2 for s in self.impostor_scores) / len(self.impostor_scores)
        return math.sqrt(var)


def z_score(profile: ProbeScoreProfile) -> float:
    """(genuine - impostor mean) / impostor population std."""
    sigma = profile.impostor_std
    if sigma <= SIGMA_TOLERANCE:
        raise DegenerateImpostorSpread(
            f"probe {profile.probe_id!r}: impostor spread {sigma} below tolerance"
        )
    return (profile.genuine_score - profile.impostor_mean) / sigma


@dataclass(frozen=True)
class MqvResult:
    quality: QualityAssignment
    errors: tuple[tuple[str, str], ...]  # (probe_id, error code)
    profiles: tuple[ProbeScoreProfile, ...]


def compute_mqv(
    scores: ScoreSet,
    corpus: FeatureCorpus,
    gallery_ids: Sequence[str],
    probe_ids: Sequence[str],
) -> MqvResult:
    """Quality for each probe as the z-score of its genuine score against its
    own impostor population. Quality attaches to the probe only, assuming the
    enrolled gallery image is at least as good.

    Unusable probes are collected into the error report (probe_id, code) and
    omitted from the output assignment.
    """
    report = validate_partition(corpus, gallery_ids, probe_ids)
    if not report.ok:
        raise ValueError(
            "gallery/probe partition invalid: " + "; ".join(report.violations[:5])
        )
    gallery_by_subject = {corpus.subject_of(g): g for g in gallery_ids}

    values: dict[str, float] = {}
    errors: list[tuple[str, str]] = []
    profiles: list[ProbeScoreProfile] = []
    for probe_id in probe_ids:
        subject = corpus.subject_of(probe_id)
        genuine = scores.score(probe_id, gallery_by_subject[subject])
        if genuine is None:
            errors.append((probe_id, MissingGenuineScore.code))
            continue
        impostors = tuple(
            s
            for g in gallery_ids
            if corpus.subject_of(g) != subject
            and (s := scores.score(probe_id, g)) is not None
        )
        if len(impostors) < 2:
            errors.append((probe_id, TooFewImpostors.code))
            continue
        profile = ProbeScoreProfile(probe_id, genuine, impostors)
        try:
            values[probe_id] = z_score(profile)
        except DegenerateImpostorSpread:
            errors.append((probe_id, DegenerateImpostorSpread.code))
            continue
        profiles.append(profile)

    return MqvResult(
        quality=QualityAssignment(values),
        errors=tuple(errors),
        profiles=tuple(profiles),
    )


def save_probe_errors(errors: Sequence[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["probe_id", "error_kind"])
        for probe_id, kind in errors:
            writer.writerow([probe_id, kind])
