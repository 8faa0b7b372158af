import numpy as np
import pytest

from unifilter import NonlinearModel


def scalar_model(func, noise=1.0, jacobian=None, name="g"):
    """Scalar NonlinearModel from a function of a float."""
    return NonlinearModel(
        func=lambda x: np.atleast_1d(func(np.asarray(x, dtype=float)[..., 0])),
        noise_cov=[[noise]],
        input_dim=1,
        jacobian=None if jacobian is None else (lambda x: np.array([[jacobian(float(x[0]))]])),
        name=name,
    )


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n) * 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def square():
    return scalar_model(lambda x: x**2, jacobian=lambda x: 2 * x, name="square")
