import numpy as np


def numeric_grad(loss_fn, array, h=1e-3):
    """Central-difference gradient of ``loss_fn()`` w.r.t. ``array`` (mutated in place)."""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + h
        plus = loss_fn()
        array[index] = original - h
        minus = loss_fn()
        array[index] = original
        grad[index] = (plus - minus) / (2 * h)
    return grad


def assert_grad_close(analytic, numeric, rtol=1e-3, atol=1e-6):
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)
