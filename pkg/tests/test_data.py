import numpy as np
import pytest
from numpy.testing import assert_array_equal

from cobra_regression.collective import _draw_cut
from cobra_regression.data import (DataError, Dataset, RngStream, SplitSpec, load_csv,
                                   split, train_test_split, write_csv)


def _write(path, text):
    path.write_text(text)
    return path


def test_load_small_csv(tmp_path):
    p = _write(tmp_path / "a.csv", "x1,x2,y\n1,2,3\n4,5,6\n7,8.5,-9e-3\n")
    data = load_csv(p)
    assert (data.n, data.d) == (3, 2)
    assert_array_equal(data.features, [[1, 2], [4, 5], [7, 8.5]])
    assert_array_equal(data.responses, [3, 6, -9e-3])
    assert data.names == ("x1", "x2")


def test_response_by_index(tmp_path):
    p = _write(tmp_path / "a.csv", "y,x\n1,2\n3,4\n")
    data = load_csv(p, 0)
    assert_array_equal(data.responses, [1, 3])
    assert_array_equal(data.features[:, 0], [2, 4])


def test_unparseable_cell_is_located(tmp_path):
    p = _write(tmp_path / "a.csv", "x1,x2,y\n1,2,3\n4,5,NA\n")
    with pytest.raises(DataError, match=r"row 2, column 'y'.*'NA'"):
        load_csv(p)


@pytest.mark.parametrize("body, message", [
    ("x1,y\n", "no data rows"),
    ("", "empty file"),
    ("x1,x2\n1,2\n", "response column 'y' not in header"),
    ("x1,y\n1,2,3\n", "row 1: expected 2 cells"),
])
def test_malformed_files(tmp_path, body, message):
    p = _write(tmp_path / "a.csv", body)
    with pytest.raises(DataError, match=message):
        load_csv(p)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "absent.csv")


def test_write_load_round_trip_is_exact(tmp_path):
    g = np.random.default_rng(3)
    # a 103-row file, the shape of a small real-data benchmark
    data = Dataset(g.standard_normal((103, 9)) * 10.0 ** g.integers(-8, 8, (103, 9)),
                   g.standard_normal(103))
    write_csv(data, tmp_path / "a.csv")
    again = load_csv(tmp_path / "a.csv")
    assert again.n == 103
    assert_array_equal(again.features, data.features)
    assert_array_equal(again.responses, data.responses)
    write_csv(again, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("features, responses", [
    (np.ones((3, 2)), np.ones(2)),
    (np.array([[1.0, np.nan]]), np.ones(1)),
    (np.ones((2, 1)), np.array([1.0, np.inf])),
    (np.ones((0, 2)), np.ones(0)),
    (np.ones((2, 0)), np.ones(2)),
])
def test_dataset_invariants(features, responses):
    with pytest.raises(DataError):
        Dataset(features, responses)


def test_dataset_is_immutable():
    data = Dataset(np.ones((2, 1)), np.ones(2))
    with pytest.raises(ValueError):
        data.features[0, 0] = 5.0


def test_split_without_shuffle_keeps_order():
    data = Dataset(np.arange(10.0)[:, None], np.arange(10.0))
    a, b = split(data, SplitSpec(5, shuffle=False))
    assert_array_equal(a.responses, [0, 1, 2, 3, 4])
    assert_array_equal(b.responses, [5, 6, 7, 8, 9])


def test_split_is_seeded_permutation():
    data = Dataset(np.arange(800.0)[:, None], np.arange(800.0))
    a1, b1 = split(data, SplitSpec(400, seed=9))
    a2, b2 = split(data, SplitSpec(400, seed=9))
    assert_array_equal(a1.responses, a2.responses)
    assert_array_equal(b1.responses, b2.responses)
    both = np.concatenate([a1.responses, b1.responses])
    assert_array_equal(np.sort(both), data.responses)
    assert not np.array_equal(both, data.responses)


@pytest.mark.parametrize("k", [0, 10, -1])
def test_split_rejects_empty_side(k):
    data = Dataset(np.ones((10, 1)), np.ones(10))
    with pytest.raises(DataError, match="out of range"):
        split(data, SplitSpec(k))


def test_random_cuts_leave_both_sides_nonempty():
    stream = RngStream(4)
    for r in range(1000):
        k = _draw_cut(1200, stream.fork(r), 1, 1, 1)
        assert 1 <= k <= 1199


@pytest.mark.parametrize("n, fraction, sizes", [(800, 0.8, (640, 160)), (600, 0.9, (540, 60))])
def test_train_test_sizes(n, fraction, sizes):
    data = Dataset(np.arange(float(n))[:, None], np.arange(float(n)))
    train, test = train_test_split(data, fraction, RngStream(0))
    assert (train.n, test.n) == sizes
    assert_array_equal(np.sort(np.concatenate([train.responses, test.responses])),
                       data.responses)


def test_train_test_split_rejects_empty_test_side():
    data = Dataset(np.ones((5, 1)), np.ones(5))
    with pytest.raises(DataError, match="0 test rows"):
        train_test_split(data, 0.999, RngStream(0))


def test_streams_replay_and_differ():
    a = RngStream(7, 3).generator.random(5)
    b = RngStream(7, 3).generator.random(5)
    c = RngStream(7, 4).generator.random(5)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert_array_equal(RngStream(7).fork(2).generator.random(3),
                       RngStream(7, (0, 2)).generator.random(3))
    s = RngStream(1)
    s.generator.random(10)
    assert_array_equal(s.clone().generator.random(2), RngStream(1).generator.random(2))
