import numpy as np
import pytest

from smmt.errors import NumericError
from smmt.gradcheck import finite_diff_gradcheck
from smmt.tensor import ParameterStore, mul_const, mul_elem, sum_all


def test_quadratic_at_three():
    store = ParameterStore()
    store.add("x", np.array(3.0))

    def f():
        x = store["x"]
        return sum_all(mul_elem(x, x))

    # analytic 6 vs central difference 6
    assert finite_diff_gradcheck(f, store) < 1e-9


def test_linear_is_machine_precision():
    store = ParameterStore()
    store.add("x", np.array([1.0, -2.0, 0.5]))
    c = np.array([3.0, 1.0, -4.0])
    err = finite_diff_gradcheck(lambda: sum_all(mul_const(store["x"], c)), store)
    assert err < 1e-10


def test_restores_parameters():
    store = ParameterStore()
    store.add("x", np.array([2.0, 5.0]))
    before = store["x"].data.copy()
    finite_diff_gradcheck(lambda: sum_all(mul_elem(store["x"], store["x"])), store)
    np.testing.assert_array_equal(store["x"].data, before)


def test_nonfinite_objective_rejected():
    store = ParameterStore()
    store.add("x", np.array(0.0))

    def f():
        return sum_all(mul_const(store["x"], np.inf))

    with np.errstate(invalid="ignore"):
        with pytest.raises(NumericError):
            finite_diff_gradcheck(f, store)


def test_param_subset():
    store = ParameterStore()
    store.add("a", np.array(2.0))
    store.add("b", np.array(4.0))
    err = finite_diff_gradcheck(
        lambda: sum_all(mul_elem(store["a"], store["a"])), store,
        param_names=["a"])
    assert err < 1e-9
