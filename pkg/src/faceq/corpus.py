"""Data model and file IO for feature corpora, similarity scores, templates,
and per-image quality assignments.

All values are immutable after construction and safe to share across threads.
Text formats are comma-separated with a mandatory header row; floats are
serialized with full round-trip precision so that save -> load reproduces a
value bit-for-bit.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateImageId,
    DuplicatePair,
    MalformedRow,
    NonFiniteInput,
    UnknownImageId,
)


class MediaKind(enum.Enum):
    STILL = "STILL"
    FRAME = "FRAME"


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class FaceRecord:
    """One image: identifier, subject, and its precomputed feature vector."""

    image_id: str
    subject_id: str
    features: tuple[float, ...]
    media_kind: MediaKind = MediaKind.STILL
    detect_ok: bool = True

    def __post_init__(self) -> None:
        if len(self.features) < 1:
            raise DimensionMismatch(f"record {self.image_id!r} has an empty feature vector")
        if self.detect_ok and not all(math.isfinite(v) for v in self.features):
            raise NonFiniteInput(
                f"record {self.image_id!r} has non-finite features but detect_ok=true"
            )

    @property
    def dim(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class FeatureCorpus:
    """An ordered collection of FaceRecords sharing one feature dimension."""

    records: tuple[FaceRecord, ...]
    dim: int = 0
    _by_id: dict = field(init=False, repr=False, compare=False)
    _by_subject: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        dim = self.dim
        by_id: dict[str, FaceRecord] = {}
        by_subject: dict[str, list[str]] = {}
        for i, rec in enumerate(self.records):
            if dim == 0:
                dim = rec.dim
            elif rec.dim != dim:
                raise DimensionMismatch(
                    f"record {i + 1} ({rec.image_id!r}) has {rec.dim} features, expected {dim}"
                )
            if rec.image_id in by_id:
                raise DuplicateImageId(f"duplicate image_id {rec.image_id!r}")
            by_id[rec.image_id] = rec
            by_subject.setdefault(rec.subject_id, []).append(rec.image_id)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_by_subject", by_subject)

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._by_id

    def get(self, image_id: str) -> FaceRecord:
        try:
            return self._by_id[image_id]
        except KeyError:
            raise UnknownImageId(f"unknown image_id {image_id!r}") from None

    def subject_of(self, image_id: str) -> str:
        return self.get(image_id).subject_id

    def subjects(self) -> tuple[str, ...]:
        return tuple(self._by_subject)

    def images_of(self, subject_id: str) -> tuple[str, ...]:
        return tuple(self._by_subject.get(subject_id, ()))

    def multi_image_subjects(self) -> tuple[str, ...]:
        return tuple(s for s, ids in self._by_subject.items() if len(ids) >= 2)

    def feature_matrix(self, image_ids: Sequence[str] | None = None) -> np.ndarray:
        ids = tuple(self._by_id) if image_ids is None else tuple(image_ids)
        out = np.array([self.get(i).features for i in ids], dtype=float)
        return out.reshape(len(ids), self.dim if self.dim else 0)


@dataclass(frozen=True)
class ScoreSet:
    """Similarity scores for (probe, gallery) pairs; higher means more similar."""

    entries: tuple[tuple[str, str, float], ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index: dict[tuple[str, str], float] = {}
        for probe_id, gallery_id, score in self.entries:
            key = (probe_id, gallery_id)
            if key in index:
                raise DuplicatePair(f"duplicate (probe, gallery) pair {key!r}")
            index[key] = score
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.entries)

    def score(self, probe_id: str, gallery_id: str) -> float | None:
        return self._index.get((probe_id, gallery_id))

    def is_genuine(self, probe_id: str, gallery_id: str, corpus: FeatureCorpus) -> bool:
        return corpus.subject_of(probe_id) == corpus.subject_of(gallery_id)

    def split_genuine_impostor(self, corpus: FeatureCorpus) -> tuple[np.ndarray, np.ndarray]:
        genuine, impostor = [], []
        for probe_id, gallery_id, score in self.entries:
            if self.is_genuine(probe_id, gallery_id, corpus):
                genuine.append(score)
            else:
                impostor.append(score)
        return np.asarray(genuine, dtype=float), np.asarray(impostor, dtype=float)


@dataclass(frozen=True)
class Template:
    """The set of face samples representing one subject on one comparison side."""

    template_id: str
    subject_id: str
    member_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.member_ids:
            raise MalformedRow(f"template {self.template_id!r} has no members")


@dataclass(frozen=True)
class QualityAssignment:
    """Map image_id -> scalar quality; every value finite."""

    values: Mapping[str, float]

    def __post_init__(self) -> None:
        frozen = dict(self.values)
        for image_id, q in frozen.items():
            if not math.isfinite(q):
                raise NonFiniteInput(f"non-finite quality for {image_id!r}")
        object.__setattr__(self, "values", frozen)

    def __getitem__(self, image_id: str) -> float:
        return self.values[image_id]

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.values

    def __len__(self) -> int:
        return len(self.values)

    def get(self, image_id: str, default: float | None = None) -> float | None:
        return self.values.get(image_id, default)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(f"{path}: empty file, expected a header row") from None
        return header, [row for row in reader if row]


def _parse_bool(token: str, path: str | Path, row_no: int) -> bool:
    low = token.strip().lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise MalformedRow(f"{path}: row {row_no}: expected true/false, got {token!r}")


def _parse_float(token: str, path: str | Path, row_no: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise MalformedRow(f"{path}: row {row_no}: non-numeric value {token!r}") from None


def load_features(path: str | Path) -> FeatureCorpus:
    """Load a features file: header image_id,subject_id[,detect_ok][,media_kind],f0,...

    detect_ok defaults to true and media_kind to STILL when the column is
    absent. A row whose feature count disagrees with the rest of the file
    raises DimensionMismatch naming the (1-based) data row; an empty file
    (header only) yields an empty corpus.
    """
    header, rows = _read_rows(path)
    if len(header) < 2 or header[0] != "image_id" or header[1] != "subject_id":
        raise MalformedRow(f"{path}: bad header {header!r}")
    col = 2
    has_detect = col < len(header) and header[col] == "detect_ok"
    col += has_detect
    has_kind = col < len(header) and header[col] == "media_kind"
    col += has_kind
    n_fixed = col
    dim = len(header) - n_fixed

    records: list[FaceRecord] = []
    for row_no, row in enumerate(rows, start=1):
        if len(row) < n_fixed:
            raise MalformedRow(
                f"{path}: row {row_no}: expected at least {n_fixed} fields, got {len(row)}"
            )
        image_id, subject_id = row[0], row[1]
        c = 2
        detect_ok = _parse_bool(row[c], path, row_no) if has_detect else True
        c += has_detect
        kind = MediaKind(row[c]) if has_kind else MediaKind.STILL
        c += has_kind
        if len(row) - n_fixed != dim:
            raise DimensionMismatch(
                f"{path}: row {row_no}: {len(row) - n_fixed} features, expected {dim}"
            )
        features = tuple(_parse_float(tok, path, row_no) for tok in row[c:])
        records.append(
            FaceRecord(image_id, subject_id, features, media_kind=kind, detect_ok=detect_ok)
        )
    return FeatureCorpus(tuple(records))


def save_features(corpus: FeatureCorpus, path: str | Path) -> None:
    dim = corpus.dim
    with_kind = any(r.media_kind is not MediaKind.STILL for r in corpus.records)
    header = ["image_id", "subject_id", "detect_ok"]
    if with_kind:
        header.append("media_kind")
    header += [f"f{i}" for i in range(dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in corpus.records:
            row = [rec.image_id, rec.subject_id, "true" if rec.detect_ok else "false"]
            if with_kind:
                row.append(rec.media_kind.value)
            row += [_fmt(v) for v in rec.features]
            writer.writerow(row)


def load_scores(path: str | Path, corpus: FeatureCorpus) -> ScoreSet:
    """Load a scores file (probe_id,gallery_id,score); ids must resolve in corpus."""
    header, rows = _read_rows(path)
    if header != ["probe_id", "gallery_id", "score"]:
        raise MalformedRow(f"{path}: bad header {header!r}")
    entries: list[tuple[str, str, float]] = []
    for row_no, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise MalformedRow(f"{path}: row {row_no}: expected 3 fields, got {len(row)}")
        probe_id, gallery_id, tok = row
        for image_id in (probe_id, gallery_id):
            if image_id not in corpus:
                raise UnknownImageId(f"{path}: row {row_no}: unknown image_id {image_id!r}")
        entries.append((probe_id, gallery_id, _parse_float(tok, path, row_no)))
    return ScoreSet(tuple(entries))


def save_scores(scores: ScoreSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["probe_id", "gallery_id", "score"])
        for probe_id, gallery_id, score in scores.entries:
            writer.writerow([probe_id, gallery_id, _fmt(score)])


def load_quality(path: str | Path) -> QualityAssignment:
    header, rows = _read_rows(path)
    if header != ["image_id", "quality"]:
        raise MalformedRow(f"{path}: bad header {header!r}")
    values: dict[str, float] = {}
    for row_no, row in enumerate(rows, start=1):
        if len(row) != 2:
            raise MalformedRow(f"{path}: row {row_no}: expected 2 fields, got {len(row)}")
        image_id, tok = row
        if image_id in values:
            raise DuplicateImageId(f"{path}: row {row_no}: duplicate image_id {image_id!r}")
        values[image_id] = _parse_float(tok, path, row_no)
    return QualityAssignment(values)


def save_quality(quality: QualityAssignment, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "quality"])
        for image_id, q in quality.values.items():
            writer.writerow([image_id, _fmt(q)])


def load_templates(path: str | Path, corpus: FeatureCorpus | None = None) -> tuple[Template, ...]:
    """Load a templates file (template_id,subject_id,image_id; one member per row)."""
    header, rows = _read_rows(path)
    if header != ["template_id", "subject_id", "image_id"]:
        raise MalformedRow(f"{path}: bad header {header!r}")
    members: dict[str, list[str]] = {}
    subjects: dict[str, str] = {}
    for row_no, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise MalformedRow(f"{path}: row {row_no}: expected 3 fields, got {len(row)}")
        template_id, subject_id, image_id = row
        if corpus is not None and image_id not in corpus:
            raise UnknownImageId(f"{path}: row {row_no}: unknown image_id {image_id!r}")
        if template_id in subjects and subjects[template_id] != subject_id:
            raise MalformedRow(
                f"{path}: row {row_no}: template {template_id!r} mixes subjects"
            )
        subjects[template_id] = subject_id
        members.setdefault(template_id, []).append(image_id)
    return tuple(
        Template(tid, subjects[tid], tuple(ids)) for tid, ids in members.items()
    )


def save_templates(templates: Iterable[Template], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["template_id", "subject_id", "image_id"])
        for tpl in templates:
            for image_id in tpl.member_ids:
                writer.writerow([tpl.template_id, tpl.subject_id, image_id])


def load_id_list(path: str | Path) -> tuple[str, ...]:
    """One image_id per line, blank lines ignored."""
    with open(path) as fh:
        return tuple(line.strip() for line in fh if line.strip())


def save_id_list(ids: Iterable[str], path: str | Path) -> None:
    with open(path, "w") as fh:
        for image_id in ids:
            fh.write(image_id + "\n")


# ---------------------------------------------------------------------------
# gallery / probe partition checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionReport:
    violations: tuple[str, ...]
    n_gallery: int
    n_probes: int
    n_gallery_subjects: int

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_partition(
    corpus: FeatureCorpus,
    gallery_ids: Sequence[str],
    probe_ids: Sequence[str],
) -> PartitionReport:
    """Check the gallery/probe construction: one gallery image per subject,
    every probe subject enrolled, and disjoint id sets. Returns a report
    listing violations instead of raising."""
    violations: list[str] = []
    gallery = list(gallery_ids)
    probes = list(probe_ids)

    for image_id in list(dict.fromkeys(gallery + probes)):
        if image_id not in corpus:
            violations.append(f"unknown image_id {image_id!r}")
    known_gallery = [i for i in gallery if i in corpus]
    known_probes = [i for i in probes if i in corpus]

    per_subject: dict[str, list[str]] = {}
    for image_id in known_gallery:
        per_subject.setdefault(corpus.subject_of(image_id), []).append(image_id)
    for subject_id, ids in per_subject.items():
        if len(ids) > 1:
            violations.append(f"multiple gallery images for subject {subject_id!r}: {sorted(ids)}")

    gallery_subjects = set(per_subject)
    for image_id in known_probes:
        subject_id = corpus.subject_of(image_id)
        if subject_id not in gallery_subjects:
            violations.append(f"probe {image_id!r} has no gallery image for subject {subject_id!r}")

    overlap = sorted(set(gallery) & set(probes))
    for image_id in overlap:
        violations.append(f"image {image_id!r} appears in both gallery and probes")

    return PartitionReport(
        violations=tuple(violations),
        n_gallery=len(gallery),
        n_probes=len(probes),
        n_gallery_subjects=len(gallery_subjects),
    )
