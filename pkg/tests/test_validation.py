import numpy as np
import numpy.testing as npt
import pytest

from smmt.errors import DimensionError, InputError, NumericError
from smmt.tensor import Tensor
from smmt.validation import (as_matrix, check_finite, check_labels,
                             check_positive_int, check_unit_interval)


def test_as_matrix_accepts_tensors_and_lists():
    npt.assert_array_equal(as_matrix([[1, 2]]), [[1.0, 2.0]])
    npt.assert_array_equal(as_matrix(Tensor([[3.0]])), [[3.0]])
    with pytest.raises(DimensionError):
        as_matrix(np.ones(3))
    with pytest.raises(DimensionError):
        as_matrix(np.ones((2, 2, 2)))


def test_check_finite():
    arr = np.ones(4)
    assert check_finite(arr) is arr
    with pytest.raises(NumericError):
        check_finite(np.array([1.0, np.inf]))


def test_check_positive_int():
    assert check_positive_int(3, "n") == 3
    assert check_positive_int(np.int64(2), "n") == 2
    for bad in (0, -1, 2.5, "3"):
        with pytest.raises(InputError):
            check_positive_int(bad, "n")


def test_check_unit_interval():
    assert check_unit_interval(0.0, "r") == 0.0
    assert check_unit_interval(1.0, "r") == 1.0
    for bad in (-0.01, 1.01, np.nan):
        with pytest.raises(InputError):
            check_unit_interval(bad, "r")


def test_check_labels():
    out = check_labels(np.array([0.0, 1.0]))
    assert out.dtype == np.int64
    with pytest.raises(InputError):
        check_labels(np.array([0.5, 1.0]))
    with pytest.raises(InputError):
        check_labels(np.array([0, 2]))
    with pytest.raises(DimensionError):
        check_labels(np.zeros((2, 2)))
