import numpy as np
import pytest

from martprop.rng import BRIDGE_STREAM, MAIN_STREAM, path_generator


def test_same_key_same_stream():
    a = path_generator(42, 7).standard_normal(16)
    b = path_generator(42, 7).standard_normal(16)
    np.testing.assert_array_equal(a, b)


def test_distinct_paths_distinct_streams():
    a = path_generator(42, 0).standard_normal(16)
    b = path_generator(42, 1).standard_normal(16)
    assert not np.array_equal(a, b)


def test_distinct_seeds_distinct_streams():
    a = path_generator(1, 0).standard_normal(16)
    b = path_generator(2, 0).standard_normal(16)
    assert not np.array_equal(a, b)


def test_named_streams_are_independent():
    a = path_generator(42, 0, stream=MAIN_STREAM).standard_normal(16)
    b = path_generator(42, 0, stream=BRIDGE_STREAM).standard_normal(16)
    assert not np.array_equal(a, b)


def test_index_bound():
    with pytest.raises(Exception):
        path_generator(0, 2 ** 48)
