import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from cobra_regression.collective import (EPSILON_MIN, CalibrationError, CollectiveModel,
                                         build_epsilon_grid, calibrate, calibration_risks,
                                         consensus_weights, fit_collective, predict,
                                         predict_batch, quantize_alpha, random_cut_ensemble,
                                         theoretical_epsilon)
from cobra_regression.data import Dataset, RngStream
from cobra_regression.machines import MachineSpec, train_pool

import oracles
from conftest import lookup_pool


def bare_model(cached, y, eps, alpha=1.0):
    return CollectiveModel(None, None, np.asarray(y, float), np.asarray(cached, float),
                           eps, alpha)


CACHED = [[0.0, 0.0], [5.0, 5.0], [0.1, -0.1]]


def test_hand_enumerated_weights():
    w = consensus_weights(bare_model(CACHED, [1, 2, 3], 0.2), [0.0, 0.0])
    assert_array_equal(w.weights, [0.5, 0.0, 0.5])
    assert w.selected_count == 2
    assert_array_equal(w.selected, [0, 2])


@pytest.mark.parametrize("eps", [5.0, 7.5, 1e6])
def test_full_tolerance_is_uniform(eps):
    w = consensus_weights(bare_model(CACHED, [1, 2, 3], eps), [0.0, 0.0])
    assert_array_equal(w.weights, [1 / 3] * 3)


def test_empty_selection_predicts_zero_and_is_flagged():
    m = bare_model(CACHED, [1, 2, 3], 0.01)
    res = m.aggregate(np.array([[2.0, 2.0], [0.0, 0.0]]))
    assert_array_equal(res.predictions, [0.0, 1.0])
    assert_array_equal(res.empty, [True, False])
    assert res.empty_count == 1
    assert consensus_weights(m, [2.0, 2.0]).empty


def test_alpha_relaxation_hand_case():
    # query (0, 0): row 1 agrees on no machine, row 2 on the second machine only
    cached = [[0.0, 0.0], [9.0, 9.0], [9.0, 0.05]]
    assert_array_equal(consensus_weights(bare_model(cached, [1, 2, 3], 0.1, 1.0),
                                         [0, 0]).weights, [1, 0, 0])
    assert_array_equal(consensus_weights(bare_model(cached, [1, 2, 3], 0.1, 0.5),
                                         [0, 0]).weights, [0.5, 0, 0.5])


@pytest.mark.parametrize("alpha, M, expected", [
    (1.0, 5, (1.0, 5)), (0.8, 5, (0.8, 4)), (0.5, 4, (0.5, 2)), (0.01, 5, (0.2, 1)),
    (0.7, 5, (0.8, 4)), (0.5, 5, (0.6, 3)), (1e-9, 1, (1.0, 1)),
])
def test_alpha_quantization(alpha, M, expected):
    a, need = quantize_alpha(alpha, M)
    assert need == expected[1]
    assert a == pytest.approx(expected[0])


@pytest.mark.parametrize("alpha", [0.0, -0.5, 1.01, float("nan")])
def test_alpha_outside_unit_interval_rejected(alpha):
    with pytest.raises(ValueError):
        quantize_alpha(alpha, 3)


def test_model_rejects_bad_epsilon():
    for eps in (0.0, -1.0, float("inf")):
        with pytest.raises(ValueError):
            bare_model(CACHED, [1, 2, 3], eps)


def test_prediction_averages_responses_not_machine_outputs():
    # machine outputs far from the responses: only the responses may appear
    cached = [[100.0], [100.2], [-50.0]]
    m = bare_model(cached, [1.0, 3.0, 7.0], 0.5)
    assert m.aggregate(np.array([[100.1]])).predictions[0] == 2.0


def test_two_band_toy_example():
    # two machines, retained points on a grid; selected = inside both bands
    g = np.random.default_rng(11)
    X = g.uniform(0, 1, (200, 2))
    pool = lookup_pool(X, np.column_stack([X[:, 0], X[:, 1] ** 2]))
    y = np.sin(6 * X[:, 0]) + X[:, 1]
    model = fit_collective(pool, Dataset(X, y), epsilon=0.1)
    x = X[0]
    inside = (np.abs(X[:, 0] - x[0]) <= 0.1) & (np.abs(X[:, 1] ** 2 - x[1] ** 2) <= 0.1)
    value, w = predict(model, x)
    assert_array_equal(w.weights > 0, inside)
    assert value == pytest.approx(y[inside].mean(), rel=1e-14)


def test_batch_matches_scalar_loop_and_counts_operations():
    g = np.random.default_rng(4)
    X = g.uniform(-1, 1, (80, 3))
    pool = lookup_pool(np.vstack([X, X + 5]),
                       np.vstack([X, X * 0.5 + 5]))
    model = fit_collective(pool, Dataset(X[:60], X[:60, 0]), epsilon=0.2, alpha=2 / 3)
    Q = np.vstack([X[60:], X[60:] + 5])
    batch, empty = predict_batch(model, Q)
    loop = [predict(model, q)[0] for q in Q]
    assert_array_equal(batch, loop)
    assert empty == sum(predict(model, q)[1].empty for q in Q)
    res = model.aggregate(model.machine_outputs(Q), early_exit=False)
    assert res.evaluations == model.ell * model.M * len(Q)
    fast = model.aggregate(model.machine_outputs(Q))
    assert fast.evaluations <= res.evaluations
    assert_array_equal(fast.predictions, res.predictions)


def test_batch_is_worker_independent():
    g = np.random.default_rng(5)
    C, y, Q = g.normal(size=(300, 4)), g.normal(size=300), g.normal(size=(101, 4))
    m = bare_model(C, y, 0.7, 0.5)
    one = m.aggregate(Q)
    for workers in (2, 3, 8):
        many = m.aggregate(Q, workers=workers)
        assert_array_equal(many.predictions, one.predictions)
        assert_array_equal(many.counts, one.counts)


@pytest.mark.parametrize("seed", range(40))
def test_kernel_matches_naive_oracle(seed):
    g = np.random.default_rng(seed)
    ell, M, q = g.integers(1, 51), g.integers(1, 5), g.integers(1, 21)
    C = g.integers(-4, 5, (ell, M)) * 0.25
    Q = g.integers(-4, 5, (q, M)) * 0.25
    y = g.normal(size=ell)
    eps = float(g.choice([0.25, 0.5, 1.0, 0.3]))
    for need in range(1, M + 1):
        m = bare_model(C, y, eps, need / M)
        assert m.need == need
        expected = oracles.selection_mask(Q, C, eps, need)
        assert_array_equal(m.selection_mask(Q), expected)
        assert_array_equal(m.selection_mask(Q, early_exit=False), expected)
        preds = m.aggregate(Q).predictions
        assert_allclose(preds, [oracles.local_average(r, y) for r in expected],
                        rtol=1e-15, atol=1e-15)


def test_unanimity_equals_indicator_product():
    g = np.random.default_rng(9)
    C, Q = g.normal(size=(40, 3)), g.normal(size=(15, 3))
    m = bare_model(C, np.zeros(40), 0.8)
    assert_array_equal(m.selection_mask(Q), oracles.unanimity_mask(Q, C, 0.8))


# ---------------------------------------------------------------- properties

@st.composite
def instances(draw):
    ell = draw(st.integers(1, 25))
    M = draw(st.integers(1, 4))
    q = draw(st.integers(1, 4))
    grid = draw(st.booleans())
    if grid:
        vals = st.integers(-6, 6).map(lambda v: v * 0.25)
    else:
        vals = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
    C = np.array(draw(st.lists(st.lists(vals, min_size=M, max_size=M),
                               min_size=ell, max_size=ell)))
    Q = np.array(draw(st.lists(st.lists(vals, min_size=M, max_size=M),
                               min_size=q, max_size=q)))
    y = np.array(draw(st.lists(st.floats(-1e3, 1e3), min_size=ell, max_size=ell)))
    eps = draw(st.sampled_from([0.25, 0.5, 1.0, 2.5]) | st.floats(1e-3, 20))
    need = draw(st.integers(1, M))
    return C, Q, y, eps, need


@settings(max_examples=300, deadline=None)
@given(instances())
def test_weights_normalized_and_convex(inst):
    C, Q, y, eps, need = inst
    m = bare_model(C, y, eps, need / C.shape[1])
    res = m.aggregate(Q)
    for v, q in enumerate(Q):
        w = consensus_weights(m, q)
        total = w.weights.sum()
        assert total == 0 or abs(total - 1) <= 1e-12
        nz = w.weights[w.weights > 0]
        assert np.all(nz == nz[0]) if nz.size else w.empty
        if not w.empty:
            sel = y[w.weights > 0]
            assert sel.min() <= res.predictions[v] <= sel.max()


@settings(max_examples=300, deadline=None)
@given(instances(), st.floats(1.0, 4.0))
def test_selection_grows_with_epsilon_and_shrinks_with_alpha(inst, stretch):
    C, Q, y, eps, need = inst
    M = C.shape[1]
    small = bare_model(C, y, eps, need / M).selection_mask(Q)
    wide = bare_model(C, y, eps * stretch, need / M).selection_mask(Q)
    assert np.all(wide[small])
    if need < M:
        strict = bare_model(C, y, eps, (need + 1) / M).selection_mask(Q)
        assert np.all(small[strict])


# ---------------------------------------------------------------- epsilon grid

def test_grid_endpoints():
    C = np.array([[0.0], [10.0], [4.0]])
    assert_array_equal(build_epsilon_grid(C, 2), [EPSILON_MIN, 10.0])


def test_grid_default_size_and_widest_range():
    C = np.column_stack([np.linspace(0, 3, 50), np.linspace(-2, 5, 50)])
    grid = build_epsilon_grid(C)
    assert grid.size == 200 and grid[0] == 1e-300 and grid[-1] == 7.0
    assert np.all(np.diff(grid) > 0)


def test_logistic_grid_spans_eight_decades():
    C = np.array([[0.0], [3.0]])
    grid = build_epsilon_grid(C, 50, "logistic")
    assert grid[0] == 1e-300 and grid[-1] == 3.0
    assert math.log10(grid[-1] / grid[1]) >= 8 - 1e-12
    assert_allclose(np.diff(np.log(grid[1:])), math.log(1e8) / 48, rtol=1e-9)


@pytest.mark.parametrize("C, size, scale, message", [
    (np.ones((4, 2)), 10, "linear", "degenerate"),
    (np.array([[0.0], [1.0]]), 1, "linear", "at least 2"),
    (np.array([[0.0], [1.0]]), 5, "cubic", "unknown grid scale"),
])
def test_grid_errors(C, size, scale, message):
    with pytest.raises(CalibrationError, match=message):
        build_epsilon_grid(C, size, scale)


# ---------------------------------------------------------------- calibration

def test_two_point_risk_matrix_by_hand():
    ret = np.array([[0.0, 0.0], [1.0, 1.0], [3.0, 0.0]])
    ret_y = np.array([1.0, 2.0, 3.0])
    val = np.array([[0.0, 0.5], [3.0, 3.0]])
    val_y = np.array([0.0, 4.0])
    risks = calibration_risks(ret, ret_y, val, val_y, [0.25, 1.0, 3.0], [1, 2])
    assert_allclose(risks, [[1.0, 8.0], [2.5, 9.125], [4.0, 4.0]], rtol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_risk_matrix_matches_naive_route(seed):
    g = np.random.default_rng(100 + seed)
    M = int(g.integers(1, 5))
    ret, val = g.integers(-3, 4, (30, M)) * 0.5, g.integers(-3, 4, (12, M)) * 0.5
    ret_y, val_y = g.normal(size=30), g.normal(size=12)
    eps = build_epsilon_grid(ret, 15)
    needs = list(range(1, M + 1))
    assert_allclose(calibration_risks(ret, ret_y, val, val_y, eps, needs),
                    oracles.calibration_risks(ret, ret_y, val, val_y, eps, needs),
                    rtol=1e-12, atol=1e-15)


def test_perfect_machine_reaches_zero_risk():
    g = np.random.default_rng(6)
    X = g.integers(0, 2, (200, 2)).astype(float)
    truth = X[:, 0] * 2 - X[:, 1]
    pool = lookup_pool(X, truth)
    model = calibrate(pool, Dataset(X, truth), grid_size=20, rng=RngStream(1))
    grid = model.grid
    assert grid.risk == 0.0
    first_zero = np.flatnonzero(grid.risks.min(axis=1) == 0.0)[0]
    assert grid.chosen[0] == first_zero
    assert model.ell == 200


def _machines_and_data(n=240, seed=0):
    g = np.random.default_rng(seed)
    X = g.uniform(-1, 1, (n, 4))
    y = X[:, 0] ** 2 + np.sin(3 * X[:, 1]) + 0.1 * g.normal(size=n)
    data = Dataset(X, y)
    specs = [MachineSpec("ridge", name="ridge"), MachineSpec("knn", name="knn"),
             MachineSpec("tree", {"max_depth": 5}, name="tree")]
    return data, specs


def test_calibration_chooses_matrix_minimum_and_keeps_all_rows():
    data, specs = _machines_and_data()
    pool = train_pool(data.subset(range(120)), specs, RngStream(0))
    retained = data.subset(range(120, 240))
    model = calibrate(pool, retained, grid_size=50, rng=RngStream(2))
    g = model.grid
    assert g.risks.shape == (50, 3)
    assert g.risk == g.risks.min()
    flat = np.flatnonzero(g.risks.ravel() == g.risks.min())[0]
    assert g.chosen == divmod(flat, 3)
    assert (model.epsilon, model.alpha) == (g.epsilons[g.chosen[0]], g.alphas[g.chosen[1]])
    assert model.ell == 120
    assert_array_equal(model.cached_predictions, pool.predict(retained.features))
    again = calibrate(pool, retained, grid_size=50, rng=RngStream(2))
    assert_array_equal(again.grid.risks, g.risks)


def test_calibration_overrides():
    data, specs = _machines_and_data()
    pool = train_pool(data.subset(range(120)), specs, RngStream(0))
    retained = data.subset(range(120, 240))
    pinned = calibrate(pool, retained, epsilon=0.1, alpha=0.8)
    assert (pinned.epsilon, pinned.alpha, pinned.need, pinned.grid) == (0.1, 2 / 3, 2, None)
    half = calibrate(pool, retained, grid_size=30, rng=RngStream(0), epsilon=0.3)
    assert half.epsilon == 0.3 and half.grid.scale == "fixed"
    assert half.grid.risks.shape == (1, 3)
    other = calibrate(pool, retained, grid_size=30, rng=RngStream(0), alpha=1.0)
    assert other.alpha == 1.0 and other.grid.risks.shape == (30, 1)


def test_calibration_needs_four_rows():
    pool = lookup_pool(np.arange(3.0)[:, None], np.arange(3.0))
    with pytest.raises(CalibrationError, match="at least 4"):
        calibrate(pool, Dataset(np.arange(3.0)[:, None], np.arange(3.0)))


# ---------------------------------------------------------------- schedule

def test_theoretical_epsilon_values():
    assert theoretical_epsilon(1, 7) == 1.0
    assert theoretical_epsilon(1024, 2) == pytest.approx(0.1767766953, abs=1e-10)
    for M in (1, 3, 5):
        ratio = theoretical_epsilon(2000, M, 0.5) / theoretical_epsilon(1000, M, 0.5)
        assert ratio == pytest.approx(2 ** (-1 / (M + 2)), rel=1e-14)
    with pytest.raises(ValueError):
        theoretical_epsilon(0, 2)


# ---------------------------------------------------------------- random cuts

def test_random_cut_ensemble_combines_runs():
    data, specs = _machines_and_data(120, 3)
    Q = data.features[:15] + 0.01
    combined, runs, cuts = random_cut_ensemble(data, specs, Q, 3, "median", RngStream(5),
                                               grid_size=20, return_runs=True)
    assert runs.shape == (3, 15) and cuts.shape == (3,)
    assert np.all((cuts >= 2) & (cuts <= 116))
    assert_array_equal(combined, np.median(runs, axis=0))
    mean = random_cut_ensemble(data, specs, Q, 3, "mean", RngStream(5), grid_size=20)
    assert_allclose(mean, runs.mean(axis=0), rtol=1e-15)


def test_combine_arithmetic():
    runs = np.array([[1.0], [2.0], [9.0]])
    assert np.median(runs, axis=0)[0] == 2.0 and runs.mean(axis=0)[0] == 4.0


def test_single_repeat_equals_one_random_cut_run():
    from cobra_regression.collective import _draw_cut

    data, specs = _machines_and_data(100, 4)
    Q = data.features[:10]
    got = random_cut_ensemble(data, specs, Q, 1, rng=RngStream(8), grid_size=20)
    stream = RngStream(8).fork(0)
    k = _draw_cut(100, stream.fork(0), 2, 4, 100)
    order = stream.fork(1).generator.permutation(100)
    pool = train_pool(data.subset(order[:k]), specs, stream.fork(2))
    model = calibrate(pool, data.subset(order[k:]), 20, "linear", stream.fork(3))
    assert_array_equal(got, predict_batch(model, Q)[0])


def test_random_cut_gives_up_on_tiny_data():
    data = Dataset(np.arange(5.0)[:, None], np.arange(5.0))
    with pytest.raises(ValueError, match="no usable random cut"):
        random_cut_ensemble(data, [MachineSpec("knn")], data.features, 1, rng=RngStream(0),
                            max_retries=3)
