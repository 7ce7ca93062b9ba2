import json
import math
from pathlib import Path

import numpy as np
import pytest

from faceq.errors import (
    DimensionMismatch,
    GridExhausted,
    MalformedModelFile,
    TooFewRows,
    TooFewSubjects,
    VersionMismatch,
)
from faceq.evaluation import spearman
from faceq.svr import (
    DEFAULT_GRID,
    SvrParams,
    TargetKind,
    grid_search,
    load_grid,
    load_model,
    predict,
    predict_many,
    rbf,
    save_model,
    subject_disjoint_folds,
    train,
)

from helpers import make_qp_instance

FIXTURES = json.loads(
    (Path(__file__).parent / "data" / "svr_qp_fixtures.json").read_text()
)


# -- kernel -----------------------------------------------------------------

def test_rbf_identity_and_limits():
    x = (0.3, -1.2, 4.0)
    assert rbf(x, x, gamma=3.0) == 1.0
    assert rbf((0.0, 0.0), (1.0, 1.0), 1e-12) == pytest.approx(1.0, abs=1e-9)
    assert rbf((0.0, 0.0), (1.0, 1.0), 0.5) == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_rbf_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        rbf((1.0,), (1.0, 2.0), 1.0)


# -- training basics -----------------------------------------------------------

def test_flat_targets_give_constant_model():
    X = [[0.0], [1.0], [2.0], [3.0]]
    model = train(X, [2.5] * 4, SvrParams(C=10.0, epsilon=0.1, gamma=1.0))
    assert len(model.dual_coefs) == 0
    assert model.bias == pytest.approx(2.5)
    assert predict(model, [7.0]) == pytest.approx(2.5)


def test_too_few_rows():
    with pytest.raises(TooFewRows):
        train([[1.0]], [1.0], SvrParams())


def test_non_finite_rejected():
    from faceq.errors import NonFiniteInput

    with pytest.raises(NonFiniteInput):
        train([[1.0], [float("nan")]], [0.0, 1.0], SvrParams())


def test_line_fit_within_tube():
    X = [[0.0], [1.0], [2.0]]
    y = [0.0, 1.0, 2.0]
    model = train(X, y, SvrParams(C=100.0, epsilon=0.1, gamma=1.0))
    preds = predict_many(model, X)
    assert np.all(np.abs(preds - np.array(y)) <= 0.1 + 1e-6)


def test_dual_feasibility_invariants():
    for seed in (3, 17, 29):
        X, y, params, _ = make_qp_instance(seed)
        model = train(X, y, params)
        assert abs(float(np.sum(model.dual_coefs))) <= 1e-9
        assert np.all(np.abs(model.dual_coefs) <= params.C + 1e-9)


def test_in_tube_rows_have_zero_coefficient():
    for seed in (1, 8, 21):
        X, y, params, _ = make_qp_instance(seed)
        model = train(X, y, params)
        sv_rows = {tuple(row) for row in model.support_vectors}
        preds = predict_many(model, X)
        scaled = (X - model.feature_shift) / model.feature_scale
        for i in range(len(y)):
            if abs(preds[i] - y[i]) < params.epsilon - 1e-6:
                assert tuple(scaled[i]) not in sv_rows


def test_qp_oracle_subset():
    # full 50-instance sweep runs in the acceptance suite
    for fixture in FIXTURES[:8]:
        X, y, params, X_test = make_qp_instance(fixture["seed"])
        model = train(X, y, params)
        assert model.dual_objective == pytest.approx(
            fixture["dual_objective"], abs=1e-6
        )
        preds = predict_many(model, X_test)
        np.testing.assert_allclose(preds, fixture["predictions"], atol=1e-4)


def test_update_cap_flags_no_convergence_but_returns_model():
    X, y, params, _ = make_qp_instance(13)
    model = train(X, y, params, max_updates=2)
    assert model.converged is False
    assert np.all(np.isfinite(predict_many(model, X)))


def test_monotone_target_transform_preserves_ranking():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 3))
    y = np.sin(X[:, 0]) + 0.2 * X[:, 1]
    X_test = rng.normal(size=(15, 3))
    a, b = 3.5, -2.0
    base = train(X, y, SvrParams(C=1e5, epsilon=0.05, gamma=0.5))
    moved = train(X, a * y + b, SvrParams(C=1e5, epsilon=a * 0.05, gamma=0.5))
    p0 = predict_many(base, X_test)
    p1 = predict_many(moved, X_test)
    assert list(np.argsort(p0)) == list(np.argsort(p1))


def test_predict_dimension_mismatch():
    model = train([[0.0, 0.0], [1.0, 1.0]], [0.0, 1.0], SvrParams())
    with pytest.raises(DimensionMismatch):
        predict(model, [1.0])
    with pytest.raises(DimensionMismatch):
        predict_many(model, [[1.0], [2.0]])


# -- folds ------------------------------------------------------------------------

def test_folds_keep_subjects_together():
    folds = subject_disjoint_folds(["A", "A", "B", "C"], k=2, seed=0)
    assert folds[0] == folds[1]


def test_folds_balanced():
    subjects = [f"s{i}" for i in range(10) for _ in range(3)]
    folds = subject_disjoint_folds(subjects, k=5, seed=1)
    per_fold = {f: set() for f in range(5)}
    for s, f in zip(subjects, folds):
        per_fold[f].add(s)
    assert all(len(v) == 2 for v in per_fold.values())


def test_folds_errors():
    with pytest.raises(TooFewSubjects):
        subject_disjoint_folds(["a", "b", "c"], k=5, seed=0)
    with pytest.raises(ValueError):
        subject_disjoint_folds(["a", "b", "c"], k=1, seed=0)


def test_folds_deterministic():
    subjects = [f"s{i}" for i in range(20)]
    a = subject_disjoint_folds(subjects, k=4, seed=9)
    b = subject_disjoint_folds(subjects, k=4, seed=9)
    np.testing.assert_array_equal(a, b)


# -- grid search ----------------------------------------------------------------------

def _smooth_problem(seed=5, n_subjects=24, per_subject=3):
    rng = np.random.default_rng(seed)
    subjects = np.repeat([f"s{i}" for i in range(n_subjects)], per_subject)
    n = len(subjects)
    X = rng.normal(size=(n, 2))
    y = np.tanh(X[:, 0]) + 0.1 * X[:, 1]
    return X, y, list(subjects)


def test_grid_of_one_cell():
    X, y, subjects = _smooth_problem()
    cell = SvrParams(C=10.0, epsilon=0.1, gamma=0.5)
    result = grid_search(X, y, subjects, grid=[cell], k=3, seed=0)
    assert result.best_params == cell


def test_grid_winner_matches_independent_reevaluation():
    X, y, subjects = _smooth_problem()
    grid = [
        SvrParams(C=10.0, epsilon=0.1, gamma=g) for g in (2.0**-9, 0.5, 2.0**6)
    ]
    result = grid_search(X, y, subjects, grid=grid, k=3, seed=2)

    folds = subject_disjoint_folds(subjects, k=3, seed=2)
    means = []
    for params in grid:
        rhos = []
        for fold in range(3):
            val = folds == fold
            model = train(np.asarray(X)[~val], np.asarray(y)[~val], params)
            rhos.append(spearman(np.asarray(y)[val], predict_many(model, np.asarray(X)[val])))
        means.append(float(np.mean(rhos)))
    assert result.best_params == grid[int(np.argmax(means))]
    by_cell = {c.params: c.mean_rho for c in result.cells}
    for params, mean in zip(grid, means):
        assert by_cell[params] == pytest.approx(mean, abs=1e-12)


def test_grid_exhausted_when_every_cell_fails():
    # one row per subject and k=2: each training side has a single row
    X = [[0.0], [1.0]]
    y = [0.0, 1.0]
    with pytest.raises(GridExhausted):
        grid_search(X, y, ["a", "b"], grid=[SvrParams()], k=2, seed=0)


def test_tie_break_prefers_smaller_c_then_gamma_then_larger_eps():
    X, y, subjects = _smooth_problem(seed=8, n_subjects=8)
    dup = [
        SvrParams(C=10.0, epsilon=0.1, gamma=0.5),
        SvrParams(C=1.0, epsilon=0.1, gamma=0.5),
    ]
    result = grid_search(X, y, subjects, grid=dup, k=2, seed=3)
    scores = {c.params: c.mean_rho for c in result.cells}
    if scores[dup[0]] == scores[dup[1]]:
        assert result.best_params == dup[1]
    else:
        assert result.best_params == max(dup, key=lambda p: scores[p])


def test_default_grid_shape():
    assert len(DEFAULT_GRID) == 4 * 5 * 3
    cs = {p.C for p in DEFAULT_GRID}
    assert cs == {0.1, 1.0, 10.0, 100.0}


def test_load_grid(tmp_path):
    p = tmp_path / "grid.csv"
    p.write_text("C,gamma,epsilon\n1.0,0.5,0.1\n10.0,0.25,0.01\n")
    grid = load_grid(p)
    assert grid == (
        SvrParams(C=1.0, gamma=0.5, epsilon=0.1),
        SvrParams(C=10.0, gamma=0.25, epsilon=0.01),
    )


# -- persistence -------------------------------------------------------------------------

def test_model_round_trip_bit_for_bit(tmp_path):
    X, y, params, _ = make_qp_instance(2)
    model = train(X, y, params, target_kind=TargetKind.MQV)
    save_model(model, tmp_path / "m.json")
    loaded = load_model(tmp_path / "m.json")
    rng = np.random.default_rng(0)
    points = rng.normal(size=(100, X.shape[1]))
    np.testing.assert_array_equal(predict_many(model, points), predict_many(loaded, points))
    assert loaded.target_kind is TargetKind.MQV
    assert loaded.params == model.params


def test_truncated_model_file(tmp_path):
    X, y, params, _ = make_qp_instance(2)
    model = train(X, y, params)
    save_model(model, tmp_path / "m.json")
    text = (tmp_path / "m.json").read_text()
    (tmp_path / "m.json").write_text(text[: len(text) // 2])
    with pytest.raises(MalformedModelFile):
        load_model(tmp_path / "m.json")


def test_tampered_coefficients_rejected_on_load(tmp_path):
    X, y, params, _ = make_qp_instance(5)
    model = train(X, y, params)
    assert len(model.dual_coefs) > 0
    save_model(model, tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["dual_coefs"][0] = doc["params"]["C"] * 10.0
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(MalformedModelFile):
        load_model(tmp_path / "m.json")


def test_unknown_version_tag(tmp_path):
    X, y, params, _ = make_qp_instance(2)
    model = train(X, y, params)
    save_model(model, tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["version"] = 99
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(VersionMismatch):
        load_model(tmp_path / "m.json")
