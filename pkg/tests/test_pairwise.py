import pytest

from faceq.errors import Incomplete, OutOfOrder, PoolTooSmall, SessionClosed
from faceq.pairwise import (
    Coarse,
    Phase,
    Response,
    SessionConfig,
    SessionState,
    TutorialPair,
    coarsen,
    consistency_verdict,
    create_session,
    export_comparisons,
    load_comparisons,
    record_response,
    save_comparisons,
)

BANK = tuple(TutorialPair(f"good{i}", f"bad{i}") for i in range(8))


def small_config(n_tutorial=0, n_random=3, n_consistency=0, **kw):
    return SessionConfig(
        n_tutorial=n_tutorial,
        n_random=n_random,
        n_consistency=n_consistency,
        tutorial_bank=BANK[:n_tutorial] if n_tutorial else (),
        seed=kw.pop("seed", 7),
        **kw,
    )


def pool(n):
    return [f"img{i:04d}" for i in range(n)]


def correct_answer(pair):
    return Response.LEFT_MUCH if pair.expected is Coarse.LEFT else Response.RIGHT_MUCH


def answer_consistently(session):
    """Answer every position: tutorial on the banked side, LEFT elsewhere,
    and consistency repeats mirrored to agree with their original."""
    while session.state not in (
        SessionState.COMPLETE,
        SessionState.REJECTED_TUTORIAL,
        SessionState.REJECTED_CONSISTENCY,
    ):
        pos = session.next_position
        pair = session.schedule[pos]
        if pair.phase is Phase.TUTORIAL:
            response = correct_answer(pair)
        elif pair.phase is Phase.CONSISTENCY:
            original = session.schedule[pair.source_position]
            same_orientation = pair.left_id == original.left_id
            response = Response.LEFT_SLIGHT if same_orientation else Response.RIGHT_SLIGHT
        else:
            response = Response.LEFT_MUCH
        session = record_response(session, pos, response)
    return session


# -- coarsening ---------------------------------------------------------------

@pytest.mark.parametrize(
    "response,expected",
    [
        (Response.LEFT_MUCH, Coarse.LEFT),
        (Response.LEFT_SLIGHT, Coarse.LEFT),
        (Response.SIMILAR, Coarse.SIMILAR),
        (Response.RIGHT_SLIGHT, Coarse.RIGHT),
        (Response.RIGHT_MUCH, Coarse.RIGHT),
    ],
)
def test_coarsen(response, expected):
    assert coarsen(response) is expected


# -- schedule construction ------------------------------------------------------

def test_default_schedule_length_is_1001():
    config = SessionConfig(tutorial_bank=BANK[:6], seed=11)
    session = create_session("worker-1", config, pool(1949))
    assert len(session.schedule) == 1001
    phases = [p.phase for p in session.schedule]
    assert phases[:6] == [Phase.TUTORIAL] * 6
    assert phases[6:980] == [Phase.RANDOM] * 974
    assert phases[980:] == [Phase.CONSISTENCY] * 21


def test_small_config_schedule():
    session = create_session("w", small_config(0, 3, 0), ["a", "b", "c"])
    assert len(session.schedule) == 3
    assert session.state is SessionState.ACTIVE
    keys = {frozenset((p.left_id, p.right_id)) for p in session.schedule}
    assert len(keys) == 3  # without replacement over distinct-image pairs


def test_pool_too_small():
    with pytest.raises(PoolTooSmall):
        create_session("w", small_config(0, 1, 0), ["only"])
    with pytest.raises(PoolTooSmall):
        create_session("w", small_config(0, 4, 0), ["a", "b", "c"])  # C(3,2)=3 < 4


def test_schedule_deterministic():
    config = small_config(2, 10, 4)
    a = create_session("worker-9", config, pool(30))
    b = create_session("worker-9", config, pool(30))
    assert a.schedule == b.schedule
    other = create_session("worker-8", config, pool(30))
    assert other.schedule != a.schedule


def test_consistency_pairs_repeat_earlier_random_pairs():
    session = create_session("w", small_config(0, 50, 10), pool(40))
    random_keys = [
        frozenset((p.left_id, p.right_id))
        for p in session.schedule
        if p.phase is Phase.RANDOM
    ]
    for pair in session.schedule:
        if pair.phase is Phase.CONSISTENCY:
            original = session.schedule[pair.source_position]
            assert original.phase is Phase.RANDOM
            assert frozenset((pair.left_id, pair.right_id)) == frozenset(
                (original.left_id, original.right_id)
            )
            assert frozenset((pair.left_id, pair.right_id)) in random_keys


# -- tutorial gate ---------------------------------------------------------------

def test_tutorial_pass_activates():
    session = create_session("w", small_config(3, 2, 0), pool(10))
    assert session.state is SessionState.TUTORIAL
    for pos in range(3):
        session = record_response(session, pos, correct_answer(session.schedule[pos]))
    assert session.state is SessionState.ACTIVE


@pytest.mark.parametrize("wrongness", ["wrong_side", "similar"])
def test_tutorial_failure_rejects_immediately(wrongness):
    session = create_session("w", small_config(3, 2, 0), pool(10))
    session = record_response(session, 0, correct_answer(session.schedule[0]))
    pair = session.schedule[1]
    if wrongness == "wrong_side":
        bad = Response.RIGHT_MUCH if pair.expected is Coarse.LEFT else Response.LEFT_MUCH
    else:
        bad = Response.SIMILAR
    session = record_response(session, 1, bad)
    assert session.state is SessionState.REJECTED_TUTORIAL
    with pytest.raises(SessionClosed):
        record_response(session, 2, Response.SIMILAR)


# -- sequencing --------------------------------------------------------------------

def test_out_of_order_rejected():
    session = create_session("w", small_config(0, 5, 0), pool(10))
    session = record_response(session, 0, Response.LEFT_MUCH)
    with pytest.raises(OutOfOrder):
        record_response(session, 2, Response.LEFT_MUCH)
    with pytest.raises(OutOfOrder):
        record_response(session, 0, Response.LEFT_MUCH)


def test_completed_session_is_closed():
    session = answer_consistently(create_session("w", small_config(0, 2, 0), pool(5)))
    assert session.state is SessionState.COMPLETE
    with pytest.raises(SessionClosed):
        record_response(session, 2, Response.SIMILAR)


# -- consistency verdict -------------------------------------------------------------

def run_with_inconsistencies(n_random, n_consistency, n_bad, fail_min=10):
    """Answer so that exactly n_bad consistency repeats contradict their
    original; originals are all answered LEFT."""
    config = small_config(0, n_random, n_consistency, consistency_fail_min=fail_min)
    session = create_session("w", config, pool(60))
    bad_positions = {
        pos
        for pos, pair in enumerate(session.schedule)
        if pair.phase is Phase.CONSISTENCY
    }
    bad_positions = set(sorted(bad_positions)[:n_bad])
    while session.state is SessionState.ACTIVE:
        pos = session.next_position
        pair = session.schedule[pos]
        if pair.phase is Phase.RANDOM:
            response = Response.LEFT_MUCH
        else:
            original = session.schedule[pair.source_position]
            same = pair.left_id == original.left_id
            if pos in bad_positions:
                response = Response.RIGHT_SLIGHT if same else Response.LEFT_SLIGHT
            else:
                response = Response.LEFT_SLIGHT if same else Response.RIGHT_SLIGHT
        session = record_response(session, pos, response)
    return session


def test_consistency_boundary_nine_passes_ten_fails():
    passed = run_with_inconsistencies(40, 21, 9)
    assert passed.state is SessionState.COMPLETE
    assert consistency_verdict(passed).inconsistent_count == 9

    failed = run_with_inconsistencies(40, 21, 10)
    assert failed.state is SessionState.REJECTED_CONSISTENCY
    assert consistency_verdict(failed).inconsistent_count == 10


def test_zero_repeats_pass():
    session = answer_consistently(create_session("w", small_config(0, 3, 0), pool(6)))
    verdict = consistency_verdict(session)
    assert verdict.passed and verdict.inconsistent_count == 0


def test_verdict_requires_all_answered():
    session = create_session("w", small_config(0, 3, 1), pool(6))
    session = record_response(session, 0, Response.LEFT_MUCH)
    with pytest.raises(Incomplete):
        consistency_verdict(session)


def test_similar_mismatch_counts_as_inconsistent():
    config = small_config(0, 4, 2, consistency_fail_min=1)
    session = create_session("w", config, pool(12))
    while session.state is SessionState.ACTIVE:
        pos = session.next_position
        pair = session.schedule[pos]
        response = Response.SIMILAR if pair.phase is Phase.CONSISTENCY else Response.LEFT_MUCH
        session = record_response(session, pos, response)
    assert session.state is SessionState.REJECTED_CONSISTENCY
    assert consistency_verdict(session).inconsistent_count == 2


# -- export ---------------------------------------------------------------------------

def test_export_only_complete_sessions():
    done1 = answer_consistently(create_session("w1", small_config(0, 3, 0), pool(8)))
    done2 = answer_consistently(create_session("w2", small_config(0, 3, 0), pool(8)))
    rejected = run_with_inconsistencies(4, 2, 2, fail_min=1)
    assert rejected.state is SessionState.REJECTED_CONSISTENCY

    out = export_comparisons([done1, done2, rejected])
    assert len(out) == 6
    assert {row.rater_id for row in out.rows} == {"w1", "w2"}


def test_export_excludes_tutorial_and_counts():
    session = answer_consistently(create_session("w", small_config(2, 3, 1), pool(8)))
    out = export_comparisons([session])
    assert len(out) == 4  # 3 random + 1 consistency
    assert export_comparisons([]).rows == ()


def test_comparisons_file_round_trip(tmp_path):
    session = answer_consistently(create_session("w", small_config(0, 4, 2), pool(9)))
    out = export_comparisons([session])
    save_comparisons(out, tmp_path / "c.csv")
    assert load_comparisons(tmp_path / "c.csv") == out


def test_state_machine_safety_random_walk():
    """No attempt sequence answers an unscheduled position or revives a
    terminal session."""
    import numpy as np

    rng = np.random.default_rng(123)
    responses = list(Response)
    for trial in range(30):
        session = create_session(
            f"w{trial}", small_config(2, 5, 2, consistency_fail_min=1), pool(12)
        )
        for _ in range(40):
            position = int(rng.integers(-1, len(session.schedule) + 2))
            response = responses[int(rng.integers(len(responses)))]
            terminal_before = session.state in (
                SessionState.COMPLETE,
                SessionState.REJECTED_TUTORIAL,
                SessionState.REJECTED_CONSISTENCY,
            )
            try:
                session = record_response(session, position, response)
            except (OutOfOrder, SessionClosed):
                continue
            assert not terminal_before  # a terminal session never accepts
            assert len(session.responses) <= len(session.schedule)
        assert len(session.responses) <= len(session.schedule)
