"""
Shared pytest fixtures for the hocpdmp test suite.

The one-neuron model with constant rate 1 and lambda = v* = 1 has the
uniform law on [0, 1) as invariant measure (the state is 1 - exp(-age),
age ~ Exp(1)), which gives the Monte Carlo tests an exact target.
"""

from pathlib import Path

import numpy as np
import pytest

from hocpdmp.core.model import build_neuron_model, build_non_interacting_model, neuron_params
from hocpdmp.core.models import IntegratorConfig, ModelSpec, NonInteractingSpec, ProductDensity, RateFunction
from hocpdmp.utils.testfns import Bump

PROJECT_ROOT = Path(__file__).resolve().parent.parent


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------

def sigmoid_rate() -> RateFunction:
    return RateFunction(kind="sigmoid", bound=1.5, floor=0.5, params={"slope": 4.0, "threshold": 0.5})


@pytest.fixture
def sigmoid():
    return sigmoid_rate()


# ---------------------------------------------------------------------------
# Neuron models
# ---------------------------------------------------------------------------

@pytest.fixture
def neuron1():
    """N=1, constant rate 1: invariant law uniform on [0, 1)"""
    return build_neuron_model(neuron_params(1, lam=1.0, v_star=1.0, rate=1.0))


@pytest.fixture
def neuron1_sigmoid():
    return build_neuron_model(neuron_params(1, lam=1.0, v_star=1.0, rate=sigmoid_rate()))


@pytest.fixture
def neuron2_params():
    return neuron_params(2, lam=1.0, v_star=1.0, weights=0.2, rate=1.0)


@pytest.fixture
def neuron2(neuron2_params):
    return build_neuron_model(neuron2_params)


@pytest.fixture
def neuron3():
    return build_neuron_model(neuron_params(3, lam=1.0, v_star=1.0, weights=0.2, rate=sigmoid_rate()))


@pytest.fixture
def neuron_description():
    return {
        "type": "neuron",
        "N": 2,
        "lambda": 1.0,
        "v_star": 1.0,
        "weights": [[0.0, 0.2], [0.2, 0.0]],
        "rates": {"kind": "constant", "value": 1.0},
    }


# ---------------------------------------------------------------------------
# Custom non-interacting model without closed forms
# ---------------------------------------------------------------------------

def cubic_spec(N: int = 2) -> NonInteractingSpec:
    """b~(v) = 1 - v - 0.2 v^3, a_i^j(v) = 0.1 + 0.05 sin(v), sigmoid rates"""
    def shift(v):
        return 0.1 + 0.05 * np.sin(v)

    def shift_prime(v):
        return 0.05 * np.cos(v)

    rate = sigmoid_rate()
    return NonInteractingSpec(
        N=N,
        drift=lambda v: 1.0 - v - 0.2 * np.asarray(v) ** 3,
        drift_prime=lambda v: -1.0 - 0.6 * np.asarray(v) ** 2,
        shifts=tuple(tuple(None if i == j else shift for j in range(N)) for i in range(N)),
        shift_primes=tuple(tuple(None if i == j else shift_prime for j in range(N)) for i in range(N)),
        rates=tuple([rate] * N),
        a=0.95,
        A=0.15,
        B=2.0,
        F=rate.bound,
        f0=rate.floor,
        name=f"cubic(N={N})",
    )


@pytest.fixture
def cubic():
    return cubic_spec(2)


@pytest.fixture
def cubic_model(cubic):
    return build_non_interacting_model(cubic)


@pytest.fixture
def custom_model():
    """Factory for hand-built ModelSpec objects with a linear drift x' = -x + 1"""
    def make(N=2, drift=None, rates=None, rate_bound=1.0, jump_jacobians=None):
        def reset(i):
            def delta(x):
                y = np.array(x, dtype=float, copy=True)
                y[..., i] = 0.0
                return y
            return delta

        def reset_jac(i):
            def jac(x):
                x = np.asarray(x, dtype=float)
                out = np.broadcast_to(np.eye(N), x.shape + (N,)).copy()
                out[..., i, i] = 0.0
                return out
            return jac

        return ModelSpec(
            dimension=N,
            drift=drift or (lambda x: 1.0 - np.asarray(x)),
            jump_maps=tuple(reset(i) for i in range(N)),
            jump_jacobians=jump_jacobians or tuple(reset_jac(i) for i in range(N)),
            rates=rates or tuple((lambda x: np.full(np.shape(x)[:-1], 0.5)) for _ in range(N)),
            rate_bound=rate_bound,
            house_of_cards=True,
            name="custom",
        )
    return make


# ---------------------------------------------------------------------------
# Configs, generators and densities
# ---------------------------------------------------------------------------

@pytest.fixture
def rk4_cfg():
    """RK4 everywhere; max_time keeps flow-limit estimates cheap"""
    return IntegratorConfig(method="rk4", max_time=40.0)


@pytest.fixture
def exact_cfg():
    return IntegratorConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def bump_density():
    return ProductDensity(r=Bump(0.0, 0.5), lo=0.0, hi=0.5, name="bump")


@pytest.fixture
def uniform_samples(rng):
    """Exact draws from the invariant law of neuron1"""
    return rng.uniform(0.0, 1.0, size=(2000, 1))


@pytest.fixture
def make_cubic():
    """cubic_spec as a factory, for tests that need another N or field values"""
    return cubic_spec
