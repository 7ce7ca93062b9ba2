"""Recognition-performance evaluation of quality measures.

Error conventions are fixed package-wide: FNMR counts genuine scores strictly
below the threshold, FMR counts impostor scores at or above it. Error-vs-
Reject curves hold the decision threshold fixed from the full score set and
never re-tune it per point. Equal-quality ties are broken by lexicographic
image_id so every run is reproducible.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .corpus import FeatureCorpus, QualityAssignment, ScoreSet, Template
from .errors import (
    DegenerateConstantInput,
    EmptyScores,
    LengthMismatch,
    MalformedRow,
    MissingPairScore,
    MissingQuality,
)


class FuseRule(enum.Enum):
    MEAN = "MEAN"
    MAX = "MAX"


# ---------------------------------------------------------------------------
# error rates at a fixed threshold
# ---------------------------------------------------------------------------

def fnmr(genuine_scores: Sequence[float], threshold: float) -> float:
    g = np.asarray(genuine_scores, dtype=float)
    if g.size == 0:
        raise EmptyScores("no genuine scores")
    return float(np.mean(g < threshold))


def fmr(impostor_scores: Sequence[float], threshold: float) -> float:
    s = np.asarray(impostor_scores, dtype=float)
    if s.size == 0:
        raise EmptyScores("no impostor scores")
    return float(np.mean(s >= threshold))


def threshold_at_fmr(impostor_scores: Sequence[float], target_fmr: float) -> float:
    """Smallest threshold t, chosen from the score values (plus a +inf
    sentinel), with fraction(impostors >= t) <= target_fmr."""
    s = np.sort(np.asarray(impostor_scores, dtype=float))
    if s.size == 0:
        raise EmptyScores("no impostor scores")
    if not 0.0 < target_fmr <= 1.0:
        raise ValueError("target_fmr must be in (0, 1]")
    candidates = np.unique(s)
    n_ge = s.size - np.searchsorted(s, candidates, side="left")
    ok = n_ge / s.size <= target_fmr
    if not ok.any():
        return float("inf")
    return float(candidates[int(np.argmax(ok))])


def _threshold_at_fnmr(genuine_scores: np.ndarray, target_fnmr: float) -> float:
    """Candidate threshold whose full-set FNMR is closest to the target
    (ties toward the smaller threshold)."""
    g = np.sort(genuine_scores)
    candidates = np.concatenate([np.unique(g), [np.inf]])
    n_below = np.searchsorted(g, candidates, side="left")
    errors = np.abs(n_below / g.size - target_fnmr)
    return float(candidates[int(np.argmin(errors))])


# ---------------------------------------------------------------------------
# Error-vs-Reject curves
# ---------------------------------------------------------------------------

class ErrorKind(enum.Enum):
    FNMR = "FNMR"
    FMR = "FMR"


@dataclass(frozen=True)
class EvrCurve:
    reject_fractions: tuple[float, ...]
    error_values: tuple[float, ...]
    error_kind: ErrorKind
    fixed_threshold: float

    def __post_init__(self) -> None:
        if len(self.reject_fractions) != len(self.error_values):
            raise ValueError("fraction and error sequences differ in length")
        if any(b <= a for a, b in zip(self.reject_fractions, self.reject_fractions[1:])):
            raise ValueError("reject fractions must be strictly increasing")

    def area(self) -> float:
        trapezoid = getattr(np, "trapezoid", None) or np.trapz
        return float(trapezoid(self.error_values, self.reject_fractions))


DEFAULT_REJECT_GRID = tuple(np.round(np.arange(0.0, 0.5001, 0.01), 10))


def rejection_order(quality: QualityAssignment, probe_ids: Sequence[str]) -> list[str]:
    """Probes sorted worst quality first; equal quality ties break by id."""
    missing = [p for p in probe_ids if p not in quality]
    if missing:
        raise MissingQuality(f"no quality for probes {missing[:5]!r}")
    return sorted(probe_ids, key=lambda p: (quality[p], p))


def evr_curve(
    scores: ScoreSet,
    corpus: FeatureCorpus,
    quality: QualityAssignment,
    error_kind: ErrorKind = ErrorKind.FNMR,
    initial_error: float = 0.2,
    reject_fractions: Sequence[float] = DEFAULT_REJECT_GRID,
) -> EvrCurve:
    """Error at a fixed threshold as the lowest-quality probes are removed.

    The threshold is fixed once so that the full-set error equals
    initial_error (for FNMR, the closest achievable value on the given
    scores; for FMR via threshold_at_fmr), then for each fraction f the
    floor(f * n_probes) lowest-quality probes are dropped and the error is
    recomputed over the surviving pairs.
    """
    probe_ids = list(dict.fromkeys(p for p, _, _ in scores.entries))
    if not probe_ids:
        raise EmptyScores("empty score set")
    order = rejection_order(quality, probe_ids)
    rank_of = {p: i for i, p in enumerate(order)}

    per_probe_total = np.zeros(len(order))
    per_probe_err = np.zeros(len(order))
    want_genuine = error_kind is ErrorKind.FNMR

    relevant = [
        (p, s)
        for p, g, s in scores.entries
        if (corpus.subject_of(p) == corpus.subject_of(g)) == want_genuine
    ]
    if not relevant:
        raise EmptyScores(f"no {'genuine' if want_genuine else 'impostor'} pairs")
    values = np.array([s for _, s in relevant])

    if error_kind is ErrorKind.FNMR:
        t = _threshold_at_fnmr(values, initial_error)
        flags = values < t
    else:
        t = threshold_at_fmr(values, initial_error)
        flags = values >= t

    for (p, _), bad in zip(relevant, flags):
        per_probe_total[rank_of[p]] += 1
        per_probe_err[rank_of[p]] += bad

    cum_total = np.concatenate([[0.0], np.cumsum(per_probe_total)])
    cum_err = np.concatenate([[0.0], np.cumsum(per_probe_err)])
    total, errors = cum_total[-1], cum_err[-1]

    points = []
    for f in reject_fractions:
        k = int(math.floor(f * len(order)))
        surviving = total - cum_total[k]
        bad = errors - cum_err[k]
        points.append(bad / surviving if surviving > 0 else 0.0)

    return EvrCurve(
        reject_fractions=tuple(float(f) for f in reject_fractions),
        error_values=tuple(points),
        error_kind=error_kind,
        fixed_threshold=t,
    )


# ---------------------------------------------------------------------------
# rank correlation
# ---------------------------------------------------------------------------

def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rho: Pearson correlation of tie-averaged ranks."""
    av = np.asarray(a, dtype=float)
    bv = np.asarray(b, dtype=float)
    if av.shape != bv.shape or av.ndim != 1:
        raise LengthMismatch(f"shapes differ: {av.shape} vs {bv.shape}")
    if av.size < 2:
        raise LengthMismatch("need at least 2 values")
    ra = rankdata(av)
    rb = rankdata(bv)
    if np.all(ra == ra[0]) or np.all(rb == rb[0]):
        raise DegenerateConstantInput("constant input has no rank ordering")
    ra -= ra.mean()
    rb -= rb.mean()
    return float(np.dot(ra, rb) / math.sqrt(np.dot(ra, ra) * np.dot(rb, rb)))


# ---------------------------------------------------------------------------
# quality-gated template fusion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GateResult:
    template_id: str
    selected_ids: tuple[str, ...]
    fallback_used: bool


def gate_template(
    template: Template, quality: QualityAssignment, threshold: float
) -> GateResult:
    """Keep members with quality >= threshold; if none qualify fall back to
    the single best member (quality ties break by image_id)."""
    missing = [m for m in template.member_ids if m not in quality]
    if missing:
        raise MissingQuality(
            f"template {template.template_id!r}: no quality for {missing[:5]!r}"
        )
    selected = tuple(m for m in template.member_ids if quality[m] >= threshold)
    if selected:
        return GateResult(template.template_id, selected, fallback_used=False)
    best = min(template.member_ids, key=lambda m: (-quality[m], m))
    return GateResult(template.template_id, (best,), fallback_used=True)


def fuse(scores: Sequence[float], rule: FuseRule = FuseRule.MEAN) -> float:
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise EmptyScores("nothing to fuse")
    return float(s.mean() if rule is FuseRule.MEAN else s.max())


def template_verify(
    gallery_template: Template,
    probe_template: Template,
    pair_scores: Mapping[tuple[str, str], float],
    quality: QualityAssignment,
    threshold: float,
    rule: FuseRule = FuseRule.MEAN,
) -> float:
    """Gate both templates at the same quality threshold, then fuse the
    scores over selected x selected member pairs."""
    g_sel = gate_template(gallery_template, quality, threshold).selected_ids
    p_sel = gate_template(probe_template, quality, threshold).selected_ids
    values = []
    for g in g_sel:
        for p in p_sel:
            s = pair_scores.get((g, p))
            if s is None:
                raise MissingPairScore(f"no score for member pair ({g!r}, {p!r})")
            values.append(s)
    return fuse(values, rule)


@dataclass(frozen=True)
class SweepCurve:
    percentiles: tuple[float, ...]
    fnmr_values: tuple[float, ...]
    score_threshold: float
    target_fmr: float
    n_genuine_pairs: int
    n_impostor_pairs: int
    reference: str  # which quality distribution set the percentile thresholds


def quality_sweep(
    templates: Sequence[Template],
    comparison_pairs: Sequence[tuple[str, str]],
    pair_scores: Mapping[tuple[str, str], float],
    quality: QualityAssignment,
    percentiles: Sequence[float],
    target_fmr: float = 0.01,
    rule: FuseRule = FuseRule.MEAN,
    reference_qualities: Sequence[float] | None = None,
) -> SweepCurve:
    """FNMR after quality-gated fusion, swept over percentile thresholds.

    The score threshold is fixed from the fused baseline (0th percentile)
    at target_fmr and the comparison-pair population is identical at every
    sweep point; only the member selection inside each template changes.
    """
    if any(not 0.0 <= p <= 100.0 for p in percentiles):
        raise ValueError("percentiles must lie in [0, 100]")
    by_id = {t.template_id: t for t in templates}
    pairs = []
    for gal_id, probe_id in comparison_pairs:
        if gal_id not in by_id or probe_id not in by_id:
            raise MissingPairScore(f"unknown template in pair ({gal_id!r}, {probe_id!r})")
        pairs.append((by_id[gal_id], by_id[probe_id]))
    if not pairs:
        raise EmptyScores("no comparison pairs")

    if reference_qualities is None:
        reference = "evaluation"
        member_ids = sorted({m for t in by_id.values() for m in t.member_ids})
        missing = [m for m in member_ids if m not in quality]
        if missing:
            raise MissingQuality(f"no quality for members {missing[:5]!r}")
        ref = np.array([quality[m] for m in member_ids])
    else:
        reference = "custom"
        ref = np.asarray(reference_qualities, dtype=float)
        if ref.size == 0:
            raise ValueError("reference_qualities is empty")

    genuine_mask = np.array([g.subject_id == p.subject_id for g, p in pairs])

    def fused_at(threshold: float) -> np.ndarray:
        return np.array(
            [template_verify(g, p, pair_scores, quality, threshold, rule) for g, p in pairs]
        )

    baseline = fused_at(float(np.percentile(ref, 0.0)))
    impostor_baseline = baseline[~genuine_mask]
    if impostor_baseline.size == 0:
        raise EmptyScores("no impostor template pairs")
    if not genuine_mask.any():
        raise EmptyScores("no genuine template pairs")
    t = threshold_at_fmr(impostor_baseline, target_fmr)

    values = []
    for p in percentiles:
        fused = fused_at(float(np.percentile(ref, p)))
        assert fused.size == len(pairs)  # population held constant
        values.append(fnmr(fused[genuine_mask], t))

    return SweepCurve(
        percentiles=tuple(float(p) for p in percentiles),
        fnmr_values=tuple(values),
        score_threshold=t,
        target_fmr=target_fmr,
        n_genuine_pairs=int(genuine_mask.sum()),
        n_impostor_pairs=int((~genuine_mask).sum()),
        reference=reference,
    )


def apply_failure_floor(quality: QualityAssignment, corpus: FeatureCorpus) -> QualityAssignment:
    """Give every record with detect_ok=false a quality below the assignment
    minimum so those images sort first for rejection."""
    if not quality.values:
        return quality
    failed = [
        image_id
        for image_id in quality.values
        if image_id in corpus and not corpus.get(image_id).detect_ok
    ]
    if not failed:
        return quality
    floor = min(quality.values.values()) - 1.0
    updated = dict(quality.values)
    for image_id in failed:
        updated[image_id] = floor
    return QualityAssignment(updated)


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    fars: tuple[float, ...]
    tars: tuple[float, ...]
    thresholds: tuple[float, ...]


def roc(
    genuine_scores: Sequence[float],
    impostor_scores: Sequence[float],
    far_grid: Sequence[float],
) -> RocCurve:
    """TAR at each requested FAR: 1 - FNMR at the threshold achieving it."""
    tars, thresholds = [], []
    for far in far_grid:
        t = threshold_at_fmr(impostor_scores, far)
        thresholds.append(t)
        tars.append(1.0 - fnmr(genuine_scores, t))
    return RocCurve(
        fars=tuple(float(f) for f in far_grid),
        tars=tuple(tars),
        thresholds=tuple(thresholds),
    )


# ---------------------------------------------------------------------------
# curve emission: metadata preamble + x,y rows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Curve:
    kind: str         # FNMR | FMR | ROC | SWEEP
    threshold: float
    fmr_target: float
    xs: tuple[float, ...]
    ys: tuple[float, ...]


def as_curve(obj: EvrCurve | RocCurve | SweepCurve) -> Curve:
    if isinstance(obj, EvrCurve):
        return Curve(obj.error_kind.value, obj.fixed_threshold, float("nan"),
                     obj.reject_fractions, obj.error_values)
    if isinstance(obj, RocCurve):
        return Curve("ROC", float("nan"), float("nan"), obj.fars, obj.tars)
    return Curve("SWEEP", obj.score_threshold, obj.target_fmr,
                 obj.percentiles, obj.fnmr_values)


def save_curve(curve: Curve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# kind={curve.kind} threshold={repr(curve.threshold)} "
            f"fmr={repr(curve.fmr_target)}\n"
        )
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y"])
        for x, y in zip(curve.xs, curve.ys):
            writer.writerow([repr(float(x)), repr(float(y))])


def load_curve(path: str | Path) -> Curve:
    with open(path) as fh:
        preamble = fh.readline().strip()
        if not preamble.startswith("# "):
            raise MalformedRow(f"{path}: missing metadata preamble")
        meta = dict(tok.split("=", 1) for tok in preamble[2:].split())
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x", "y"]:
            raise MalformedRow(f"{path}: bad header {header!r}")
        xs, ys = [], []
        for row in reader:
            if not row:
                continue
            xs.append(float(row[0]))
            ys.append(float(row[1]))
    return Curve(
        kind=meta["kind"],
        threshold=float(meta["threshold"]),
        fmr_target=float(meta["fmr"]),
        xs=tuple(xs),
        ys=tuple(ys),
    )
