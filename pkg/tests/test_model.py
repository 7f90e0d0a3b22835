"""
Tests for hocpdmp.core.model and the model-side data classes.
"""

import json
import logging
from dataclasses import replace

import numpy as np
import pytest

from hocpdmp.core.errors import ConfigError, JumpIndexError, ModelValidationError, RateBoundError
from hocpdmp.core.model import (
    MODEL_BUILDERS,
    build_neuron_model,
    build_non_interacting_model,
    drift_jacobian,
    estimate_shift_constants,
    fd_jacobian,
    jump,
    jump_jacobian,
    load_model,
    model_from_description,
    neuron_params,
    neuron_params_from_description,
    neuron_spec,
    rate_vector,
    register_model_type,
    total_rate,
    validate_model,
    validate_non_interacting,
)
from hocpdmp.core.models import NeuronParams, RateFunction, RateKind


# ---------------------------------------------------------------------------
# Rate functions
# ---------------------------------------------------------------------------

class TestRateFunction:
    def test_constant(self):
        f = RateFunction(kind="constant", bound=2.0, floor=1.0, params={"value": 1.0})
        assert np.allclose(f(np.array([-3.0, 0.0, 7.0])), 1.0)
        assert f.kind is RateKind.CONSTANT

    def test_sigmoid_between_floor_and_bound(self, sigmoid):
        v = np.linspace(-20, 20, 101)
        out = sigmoid(v)
        assert np.all(out >= sigmoid.floor) and np.all(out <= sigmoid.bound)
        assert sigmoid(np.asarray(0.5)) == pytest.approx(1.0)

    def test_affine_clipped(self):
        f = RateFunction(kind="affine_clipped", bound=2.0, floor=0.5, params={"intercept": 1.0, "slope": 1.0})
        assert np.allclose(f(np.array([-5.0, 0.0, 0.5, 5.0])), [0.5, 1.0, 1.5, 2.0])

    def test_polynomial_clipped(self):
        f = RateFunction(kind="polynomial_clipped", bound=3.0, floor=1.0, params={"coefficients": [1.0, 0.0, 1.0]})
        assert np.allclose(f(np.array([0.0, 1.0, 5.0])), [1.0, 2.0, 3.0])

    def test_from_dict_constant_infers_bound(self):
        f = RateFunction.from_dict({"kind": "constant", "value": 0.7})
        assert f.bound == 0.7
        assert f.floor == 0.7

    def test_from_dict_missing_bound(self):
        with pytest.raises(ConfigError, match="bound"):
            RateFunction.from_dict({"kind": "sigmoid", "slope": 1.0})

    def test_from_dict_invalid_kind(self):
        with pytest.raises(ConfigError, match="Invalid rate kind"):
            RateFunction.from_dict({"kind": "bogus", "bound": 1.0})

    @pytest.mark.parametrize("bound,floor", [(0.0, 0.0), (-1.0, 0.0), (1.0, 2.0), (np.inf, 0.0)])
    def test_invalid_bound_or_floor(self, bound, floor):
        with pytest.raises(ModelValidationError):
            RateFunction(kind="constant", bound=bound, floor=floor)

    def test_all_kinds_described(self):
        for kind in RateKind:
            assert RateKind.get_description(kind)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class TestEvaluation:
    def test_house_of_cards_reset(self, neuron3, rng):
        x = rng.uniform(-2, 2, size=(50, 3))
        for i in range(1, 4):
            y = jump(neuron3, i, x)
            assert np.all(y[:, i - 1] == 0.0)

    def test_neuron_jump_adds_weights(self, neuron2):
        y = jump(neuron2, 1, np.array([0.4, 0.3]))
        assert np.allclose(y, [0.0, 0.5])

    def test_jump_jacobian_matches_fd(self, cubic_model, rng):
        x = rng.uniform(-1, 1, size=(20, 2))
        for i in (1, 2):
            fd = fd_jacobian(cubic_model.jump_maps[i - 1], x)
            assert np.max(np.abs(jump_jacobian(cubic_model, i, x) - fd)) < 1e-4

    @pytest.mark.parametrize("i", [0, 3, -1])
    def test_jump_index_out_of_range(self, neuron2, i):
        with pytest.raises(JumpIndexError):
            jump(neuron2, i, np.zeros(2))

    def test_rate_vector_shape(self, neuron3, rng):
        x = rng.uniform(-1, 1, size=(4, 5, 3))
        assert rate_vector(neuron3, x).shape == (4, 5, 3)

    def test_total_rate_scalar(self, neuron2):
        assert total_rate(neuron2, np.zeros(2)) == pytest.approx(2.0)

    def test_rate_above_bound_raises(self, custom_model):
        model = custom_model(rates=(lambda x: np.full(np.shape(x)[:-1], 5.0),) * 2, rate_bound=1.0)
        with pytest.raises(RateBoundError) as exc:
            rate_vector(model, np.zeros(2))
        assert exc.value.module == "model"

    def test_drift_jacobian_fd_fallback(self, custom_model):
        model = custom_model(drift=lambda x: np.sin(np.asarray(x)))
        x = np.array([0.3, -1.2])
        assert np.allclose(drift_jacobian(model, x), np.diag(np.cos(x)), atol=1e-8)

    def test_drift_jacobian_supplied(self, cubic_model):
        x = np.array([0.5, -0.5])
        assert np.allclose(drift_jacobian(cubic_model, x), np.diag(-1.0 - 0.6 * x ** 2))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

class TestValidation:
    def test_custom_model_valid(self, custom_model):
        validate_model(custom_model())

    def test_wrong_jacobian_rejected(self, custom_model):
        wrong = tuple((lambda x: np.broadcast_to(np.eye(2), np.shape(x) + (2,)).copy()) for _ in range(2))
        with pytest.raises(ModelValidationError, match="finite-difference"):
            validate_model(custom_model(jump_jacobians=wrong))

    def test_non_interacting_constants(self, make_cubic):
        validate_non_interacting(make_cubic(2))

    def test_non_interacting_A_too_small(self, make_cubic):
        with pytest.raises(ModelValidationError) as exc:
            validate_non_interacting(replace(make_cubic(2), A=0.01))
        assert "A" in exc.value.invariant

    def test_non_interacting_a_nonpositive(self, make_cubic):
        with pytest.raises(ModelValidationError):
            validate_non_interacting(replace(make_cubic(2), a=0.0))

    @pytest.mark.parametrize("fields,invariant", [
        ({"a": -1.0}, "a > 0"),
        ({"a": 1.0}, "|1 + (a_i^j)'(v)| >= a"),
        ({"A": 0.01}, "|d^k a_i^j / dv^k| <= A"),
        ({"f0": 1.0}, "f_i(v) >= f0"),
        ({"f0": 2.0}, "0 <= f0 <= F"),
        ({"F": 1.0}, "f_i(v) <= F"),
    ])
    def test_build_rejects_wrong_constants(self, make_cubic, fields, invariant):
        with pytest.raises(ModelValidationError) as exc:
            build_non_interacting_model(replace(make_cubic(2), **fields))
        assert exc.value.invariant == invariant

    def test_build_rejects_wrong_neuron_constants(self, neuron2_params):
        spec = replace(neuron_spec(neuron2_params), a=-1.0, A=0.0, f0=5.0)
        with pytest.raises(ModelValidationError):
            build_non_interacting_model(spec)

    def test_build_unvalidated_skips_constants(self, make_cubic):
        model = build_non_interacting_model(replace(make_cubic(2), A=0.01), validate=False)
        assert model.scalar_spec.A == 0.01

    def test_floor_above_rates_rejected(self, neuron3):
        with pytest.raises(ModelValidationError) as exc:
            validate_model(replace(neuron3, rate_floor=1.0))
        assert exc.value.invariant == "f_i(x) >= rate_floor"

    def test_estimate_shift_constants(self, make_cubic):
        spec = make_cubic(2)
        a, A = estimate_shift_constants(spec.shifts)
        assert a >= 0.95 - 1e-9
        assert A <= 0.15

    @pytest.mark.parametrize("kwargs", [
        {"lam": 0.0},
        {"lam": -1.0},
        {"v_star": 0.0},
        {"weights": -0.1},
    ])
    def test_neuron_invalid_params(self, kwargs):
        with pytest.raises(ModelValidationError):
            build_neuron_model(neuron_params(2, **{"lam": 1.0, "v_star": 1.0, "weights": 0.2, **kwargs}))

    def test_neuron_wrong_weight_shape(self):
        params = NeuronParams(N=2, lam=1.0, v_star=1.0, weights=np.zeros((3, 3)), rate_fns=(RateFunction("constant", 1.0),) * 2)
        with pytest.raises(ModelValidationError, match="2x2"):
            build_neuron_model(params)

    def test_neuron_flags(self, neuron2):
        assert neuron2.house_of_cards and neuron2.non_interacting
        assert neuron2.exact_flow is not None
        assert neuron2.scalar_spec.A == pytest.approx(0.2)
        assert neuron2.scalar_spec.B == 1.0

    def test_rate_floor_zero_warns(self, caplog):
        rate = RateFunction(kind="affine_clipped", bound=2.0, floor=0.0, params={"intercept": 0.0, "slope": 1.0})
        with caplog.at_level(logging.WARNING):
            build_neuron_model(neuron_params(2, rate=rate))
        assert "no guarantee" in caplog.text


# ---------------------------------------------------------------------------
# Descriptions
# ---------------------------------------------------------------------------

class TestDescriptions:
    def test_from_description(self, neuron_description):
        model = model_from_description(neuron_description)
        assert model.dimension == 2
        assert model.description == neuron_description
        assert np.allclose(jump(model, 2, np.array([0.1, 0.5])), [0.3, 0.0])

    def test_scalar_weight_and_rate_list(self):
        params = neuron_params_from_description({
            "type": "neuron", "N": 2, "lambda": 2.0, "v_star": 1.5, "weights": 0.1,
            "rates": [{"kind": "constant", "value": 1.0}, {"kind": "constant", "value": 2.0}],
        })
        assert params.weights[0, 1] == 0.1 and params.weights[0, 0] == 0.0
        assert params.rate_bound == 2.0 and params.rate_floor == 1.0

    def test_missing_key(self, neuron_description):
        del neuron_description["lambda"]
        with pytest.raises(ConfigError, match="lambda"):
            model_from_description(neuron_description)

    def test_missing_rates(self, neuron_description):
        del neuron_description["rates"]
        with pytest.raises(ConfigError, match="rates"):
            model_from_description(neuron_description)

    def test_unknown_type(self):
        with pytest.raises(ConfigError, match="Unknown model type"):
            model_from_description({"type": "nope"})

    def test_load_model(self, tmp_path, neuron_description):
        path = tmp_path / "model.json"
        path.write_text(json.dumps(neuron_description), encoding="utf-8")
        assert load_model(path).name == "neuron(N=2)"

    def test_load_model_unreadable(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_model(bad)
        with pytest.raises(ConfigError):
            load_model(tmp_path / "missing.json")

    def test_register_model_type(self, make_cubic):
        @register_model_type("cubic_test")
        def build(desc):
            return build_non_interacting_model(make_cubic(int(desc["N"])))

        try:
            model = model_from_description({"type": "cubic_test", "N": 3})
            assert model.dimension == 3 and model.name == "cubic(N=3)"
        finally:
            MODEL_BUILDERS.pop("cubic_test", None)
