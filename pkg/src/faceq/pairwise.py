"""Rater-session logic for pairwise quality comparisons.

A session presents a fixed schedule of image pairs in three phases: tutorial
pairs with a known correct side (gating), random pairs (the payload), and
consistency-check pairs that silently repeat earlier random pairs. Sessions
are immutable; recording a response returns an updated session.
"""

from __future__ import annotations

import csv
import enum
import hashlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import Incomplete, MalformedRow, OutOfOrder, PoolTooSmall, SessionClosed


class Response(enum.Enum):
    LEFT_MUCH = "LEFT_MUCH"
    LEFT_SLIGHT = "LEFT_SLIGHT"
    SIMILAR = "SIMILAR"
    RIGHT_SLIGHT = "RIGHT_SLIGHT"
    RIGHT_MUCH = "RIGHT_MUCH"


class Coarse(enum.Enum):
    LEFT = "LEFT"
    SIMILAR = "SIMILAR"
    RIGHT = "RIGHT"


class Phase(enum.Enum):
    TUTORIAL = "TUTORIAL"
    RANDOM = "RANDOM"
    CONSISTENCY = "CONSISTENCY"


class SessionState(enum.Enum):
    TUTORIAL = "TUTORIAL"
    ACTIVE = "ACTIVE"
    COMPLETE = "COMPLETE"
    REJECTED_TUTORIAL = "REJECTED_TUTORIAL"
    REJECTED_CONSISTENCY = "REJECTED_CONSISTENCY"

TERMINAL_STATES = frozenset(
    {SessionState.COMPLETE, SessionState.REJECTED_TUTORIAL, SessionState.REJECTED_CONSISTENCY}
)


def coarsen(response: Response) -> Coarse:
    """Collapse the five-level response to which side won (or SIMILAR)."""
    if response in (Response.LEFT_MUCH, Response.LEFT_SLIGHT):
        return Coarse.LEFT
    if response in (Response.RIGHT_MUCH, Response.RIGHT_SLIGHT):
        return Coarse.RIGHT
    return Coarse.SIMILAR


def _mirror(coarse: Coarse) -> Coarse:
    if coarse is Coarse.LEFT:
        return Coarse.RIGHT
    if coarse is Coarse.RIGHT:
        return Coarse.LEFT
    return Coarse.SIMILAR


@dataclass(frozen=True)
class TutorialPair:
    """A bank pair with an unambiguous answer: better_id beats worse_id."""

    better_id: str
    worse_id: str


@dataclass(frozen=True)
class SessionConfig:
    n_tutorial: int = 6
    n_random: int = 974
    n_consistency: int = 21
    tutorial_bank: tuple[TutorialPair, ...] = ()
    consistency_fail_min: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_consistency > self.n_random:
            raise ValueError("n_consistency must be <= n_random")
        if len(self.tutorial_bank) < self.n_tutorial:
            raise ValueError("tutorial_bank smaller than n_tutorial")
        if self.consistency_fail_min < 1:
            raise ValueError("consistency_fail_min must be >= 1")

    @property
    def total_pairs(self) -> int:
        return self.n_tutorial + self.n_random + self.n_consistency


@dataclass(frozen=True)
class ScheduledPair:
    left_id: str
    right_id: str
    phase: Phase
    expected: Coarse | None = None       # tutorial pairs only
    source_position: int | None = None   # consistency pairs: index of the original


@dataclass(frozen=True)
class Session:
    rater_id: str
    config: SessionConfig
    schedule: tuple[ScheduledPair, ...]
    responses: tuple[Response, ...] = ()
    state: SessionState = SessionState.TUTORIAL

    @property
    def next_position(self) -> int | None:
        if self.state in TERMINAL_STATES:
            return None
        return len(self.responses)

    @property
    def answered(self) -> int:
        return len(self.responses)


def _session_rng(rater_id: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(rater_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, *words])


def create_session(
    rater_id: str, config: SessionConfig, image_pool: Sequence[str]
) -> Session:
    """Build a rater's schedule: tutorial, then random pairs sampled without
    replacement from distinct-image pairs, then consistency repeats of a
    seed-determined subset of the random pairs with re-randomized orientation.

    Deterministic given (rater_id, config.seed, pool order).
    """
    pool = list(dict.fromkeys(image_pool))
    n = len(pool)
    if n < 2:
        raise PoolTooSmall(f"need at least 2 distinct images, got {n}")
    max_pairs = n * (n - 1) // 2
    if config.n_random > max_pairs:
        raise PoolTooSmall(
            f"pool of {n} images yields {max_pairs} distinct pairs, "
            f"cannot sample {config.n_random} without replacement"
        )

    rng = _session_rng(rater_id, config.seed)
    schedule: list[ScheduledPair] = []

    if config.n_tutorial:
        bank_idx = rng.choice(len(config.tutorial_bank), size=config.n_tutorial, replace=False)
        for k in bank_idx:
            pair = config.tutorial_bank[int(k)]
            if rng.random() < 0.5:
                schedule.append(
                    ScheduledPair(pair.better_id, pair.worse_id, Phase.TUTORIAL, expected=Coarse.LEFT)
                )
            else:
                schedule.append(
                    ScheduledPair(pair.worse_id, pair.better_id, Phase.TUTORIAL, expected=Coarse.RIGHT)
                )

    seen: set[tuple[int, int]] = set()
    random_start = len(schedule)
    while len(seen) < config.n_random:
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        if i == j:
            continue
        key = (i, j) if i < j else (j, i)
        if key in seen:
            continue
        seen.add(key)
        schedule.append(ScheduledPair(pool[i], pool[j], Phase.RANDOM))

    if config.n_consistency:
        repeat_idx = np.sort(
            rng.choice(config.n_random, size=config.n_consistency, replace=False)
        )
        for k in repeat_idx:
            src = random_start + int(k)
            original = schedule[src]
            if rng.random() < 0.5:
                left, right = original.left_id, original.right_id
            else:
                left, right = original.right_id, original.left_id
            schedule.append(
                ScheduledPair(left, right, Phase.CONSISTENCY, source_position=src)
            )

    if not schedule:
        state = SessionState.COMPLETE
    elif config.n_tutorial:
        state = SessionState.TUTORIAL
    else:
        state = SessionState.ACTIVE
    return Session(rater_id=rater_id, config=config, schedule=tuple(schedule), state=state)


@dataclass(frozen=True)
class ConsistencyVerdict:
    passed: bool
    inconsistent_count: int
    n_repeats: int


def consistency_verdict(session: Session) -> ConsistencyVerdict:
    """Compare each consistency repeat with its original random-phase answer.

    If the repeat swapped left/right, the repeat's coarse response is mirrored
    before comparison; a repeat is inconsistent iff the normalized coarse
    responses differ. FAIL iff inconsistent_count >= consistency_fail_min.
    """
    if len(session.responses) < len(session.schedule):
        raise Incomplete(
            f"session has {len(session.responses)}/{len(session.schedule)} responses"
        )
    inconsistent = 0
    n_repeats = 0
    for pos, pair in enumerate(session.schedule):
        if pair.phase is not Phase.CONSISTENCY:
            continue
        n_repeats += 1
        original = session.schedule[pair.source_position]
        repeat_coarse = coarsen(session.responses[pos])
        if pair.left_id != original.left_id:
            repeat_coarse = _mirror(repeat_coarse)
        if repeat_coarse is not coarsen(session.responses[pair.source_position]):
            inconsistent += 1
    passed = inconsistent < session.config.consistency_fail_min
    return ConsistencyVerdict(passed=passed, inconsistent_count=inconsistent, n_repeats=n_repeats)


def record_response(session: Session, position: int, response: Response) -> Session:
    """Store a response at the next unanswered position (strictly sequential).

    Tutorial answers are gated immediately: a wrong side (or SIMILAR) rejects
    the session. Answering the final position triggers the consistency
    verdict and moves the session to COMPLETE or REJECTED_CONSISTENCY.
    """
    if session.state in TERMINAL_STATES:
        raise SessionClosed(f"session is {session.state.value}")
    expected_pos = len(session.responses)
    if position != expected_pos:
        raise OutOfOrder(f"expected position {expected_pos}, got {position}")

    updated = replace(session, responses=session.responses + (response,))
    pair = session.schedule[position]

    if pair.phase is Phase.TUTORIAL:
        if coarsen(response) is not pair.expected:
            return replace(updated, state=SessionState.REJECTED_TUTORIAL)
        tutorial_done = position == session.config.n_tutorial - 1
        if tutorial_done:
            updated = replace(updated, state=SessionState.ACTIVE)

    if len(updated.responses) == len(updated.schedule):
        verdict = consistency_verdict(updated)
        state = SessionState.COMPLETE if verdict.passed else SessionState.REJECTED_CONSISTENCY
        updated = replace(updated, state=state)
    return updated


# ---------------------------------------------------------------------------
# exported comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    rater_id: str
    left_id: str
    right_id: str
    coarse: Coarse


@dataclass(frozen=True)
class ComparisonSet:
    rows: tuple[Comparison, ...]

    def __len__(self) -> int:
        return len(self.rows)


def export_comparisons(sessions: Iterable[Session]) -> ComparisonSet:
    """Coarsened random + consistency responses from COMPLETE sessions only."""
    rows: list[Comparison] = []
    for session in sessions:
        if session.state is not SessionState.COMPLETE:
            continue
        for pair, response in zip(session.schedule, session.responses):
            if pair.phase is Phase.TUTORIAL:
                continue
            rows.append(
                Comparison(session.rater_id, pair.left_id, pair.right_id, coarsen(response))
            )
    return ComparisonSet(tuple(rows))


def load_comparisons(path: str | Path) -> ComparisonSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(f"{path}: empty file, expected a header row") from None
        if header != ["rater_id", "left_id", "right_id", "response"]:
            raise MalformedRow(f"{path}: bad header {header!r}")
        rows: list[Comparison] = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(f"{path}: row {row_no}: expected 4 fields, got {len(row)}")
            rater_id, left_id, right_id, token = row
            try:
                coarse = Coarse(token)
            except ValueError:
                raise MalformedRow(
                    f"{path}: row {row_no}: response must be LEFT/SIMILAR/RIGHT, got {token!r}"
                ) from None
            rows.append(Comparison(rater_id, left_id, right_id, coarse))
    return ComparisonSet(tuple(rows))


def save_comparisons(comparisons: ComparisonSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rater_id", "left_id", "right_id", "response"])
        for row in comparisons.rows:
            writer.writerow([row.rater_id, row.left_id, row.right_id, row.coarse.value])
