import numpy as np
import pytest

from hsmmseg.validation import (
    as_float_matrix,
    as_int_vector,
    as_rng,
    check_positive,
    check_row_stochastic,
    check_simplex,
    check_spd,
)


def test_as_rng_accepts_int_none_generator():
    assert isinstance(as_rng(None), np.random.Generator)
    a = as_rng(3)
    b = as_rng(3)
    assert a.random() == b.random()
    gen = np.random.default_rng(0)
    assert as_rng(gen) is gen


def test_as_float_matrix_promotes_vectors():
    out = as_float_matrix([1, 2, 3])
    assert out.shape == (3, 1)
    assert out.dtype == np.float64


def test_as_float_matrix_rejects_bad_input():
    with pytest.raises(ValueError):
        as_float_matrix(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        as_float_matrix([np.inf, 1.0])
    with pytest.raises(ValueError):
        as_float_matrix(np.empty((0, 3)))


def test_as_int_vector_rejects_fractions():
    with pytest.raises(ValueError):
        as_int_vector([1.5, 2.0])
    assert np.array_equal(as_int_vector([1.0, 2.0]), [1, 2])


def test_check_positive():
    assert check_positive(2) == 2.0
    for bad in (0, -1, np.nan, np.inf):
        with pytest.raises(ValueError):
            check_positive(bad)


def test_check_simplex():
    check_simplex(np.array([0.2, 0.8]))
    with pytest.raises(ValueError):
        check_simplex(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        check_simplex(np.array([-0.1, 1.1]))


def test_check_row_stochastic():
    check_row_stochastic(np.full((3, 3), 1 / 3))
    with pytest.raises(ValueError):
        check_row_stochastic(np.ones((2, 3)))
    with pytest.raises(ValueError):
        check_row_stochastic(np.eye(2) * 0.9)


def test_check_spd():
    check_spd(np.eye(3))
    with pytest.raises(ValueError):
        check_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))  # indefinite
    with pytest.raises(ValueError):
        check_spd(np.array([[1.0, 0.1], [0.0, 1.0]]))  # asymmetric
