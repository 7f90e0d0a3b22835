"""
PDMP model construction: drift, jump maps, jump Jacobians and rates.

Supports general house-of-cards models, the non-interacting specialisation
(scalar drift shared by all particles, pairwise scalar shifts) and the
interacting-neuron preset built on top of it.
"""

import json
import logging
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, JumpIndexError, ModelValidationError, RateBoundError
from .models import ModelSpec, NeuronParams, NonInteractingSpec, RateFunction
from ..utils.constants import (
    FD_DRIFT_REL,
    FD_JACOBIAN_TOL,
    FD_ORACLE_STEP,
    NON_INTERACTING_KMAX,
    VALIDATION_BOX,
    VALIDATION_SAMPLES,
)

logger = logging.getLogger(__name__)

RATE_TOL = 1e-12

# Builders for model description files: "type" -> builder(description dict)
MODEL_BUILDERS: Dict[str, Callable[[dict], ModelSpec]] = {}


def register_model_type(name: str):
    """Decorator registering a builder for model description files"""
    def decorator(builder: Callable[[dict], ModelSpec]):
        MODEL_BUILDERS[name] = builder
        return builder
    return decorator


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _check_index(model: ModelSpec, i: int) -> int:
    if not 1 <= int(i) <= model.dimension:
        raise JumpIndexError(f"jump index {i} outside 1..{model.dimension}", invariant="1 <= i <= N")
    return int(i)


def rate_vector(model: ModelSpec, x) -> np.ndarray:
    """
    All rates (f_1(x), ..., f_N(x)) stacked on the last axis.

    Raises:
        RateBoundError: if any rate is negative or exceeds model.rate_bound
    """
    x = np.asarray(x, dtype=float)
    r = np.stack([np.broadcast_to(f(x), x.shape[:-1]) for f in model.rates], axis=-1).astype(float)
    if np.any(r > model.rate_bound + RATE_TOL) or np.any(r < 0):
        worst = float(np.max(r)) if np.any(r > model.rate_bound + RATE_TOL) else float(np.min(r))
        raise RateBoundError(
            f"rate {worst} outside [0, rate_bound={model.rate_bound}] in model '{model.name}'",
            invariant="0 <= f_i(x) <= rate_bound",
        )
    return r


def total_rate(model: ModelSpec, x):
    """f_bar(x) = sum_i f_i(x)"""
    r = rate_vector(model, x)
    out = r.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def jump(model: ModelSpec, i: int, x) -> np.ndarray:
    """Delta_i(x), i 1-based"""
    i = _check_index(model, i)
    return model.jump_maps[i - 1](np.asarray(x, dtype=float))


def jump_jacobian(model: ModelSpec, i: int, x) -> np.ndarray:
    """A^i(x) = d Delta_i / dx"""
    i = _check_index(model, i)
    return model.jump_jacobians[i - 1](np.asarray(x, dtype=float))


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x, step: float = FD_ORACLE_STEP, relative: bool = False) -> np.ndarray:
    """
    Central finite-difference Jacobian of fn at x.

    Args:
        fn: map (..., N) -> (..., M)
        x: point(s) of shape (..., N)
        step: absolute step, or relative to max(1, |x_k|) when relative=True

    Returns:
        Array of shape (..., M, N)
    """
    x = np.asarray(x, dtype=float)
    N = x.shape[-1]
    cols = []
    for k in range(N):
        h = step * np.maximum(1.0, np.abs(x[..., k])) if relative else np.full(x.shape[:-1], step)
        e = np.zeros(N)
        e[k] = 1.0
        dx = h[..., None] * e
        cols.append((fn(x + dx) - fn(x - dx)) / (2.0 * h[..., None]))
    return np.stack(cols, axis=-1)


def drift_jacobian(model: ModelSpec, x) -> np.ndarray:
    """b-dot(x); central differences with step 1e-6 * max(1, |x|) when not supplied"""
    x = np.asarray(x, dtype=float)
    if model.drift_jacobian is not None:
        return model.drift_jacobian(x)
    return fd_jacobian(model.drift, x, step=FD_DRIFT_REL, relative=True)


def validate_model(
    model: ModelSpec,
    samples: int = VALIDATION_SAMPLES,
    box: float = VALIDATION_BOX,
    seed: int = 0,
    tol: float = FD_JACOBIAN_TOL,
) -> None:
    """
    Check the ModelSpec invariants on states drawn uniformly from [-box, box]^N.

    Raises:
        ModelValidationError / RateBoundError naming the violated invariant
    """
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-box, box, size=(samples, model.dimension))
    r = rate_vector(model, xs)
    if np.any(r < model.rate_floor - RATE_TOL):
        raise ModelValidationError(
            f"rate {float(np.min(r))} below the declared floor {model.rate_floor} in model '{model.name}'",
            invariant="f_i(x) >= rate_floor",
        )
    for i in range(1, model.dimension + 1):
        y = jump(model, i, xs)
        if model.house_of_cards and np.any(y[..., i - 1] != 0.0):
            raise ModelValidationError(
                f"house-of-cards jump {i} does not reset coordinate {i} to 0",
                invariant="Delta_i(x)^i == 0",
            )
        err = np.max(np.abs(jump_jacobian(model, i, xs) - fd_jacobian(model.jump_maps[i - 1], xs)))
        if err >= tol:
            raise ModelValidationError(
                f"A^{i} differs from the finite-difference Jacobian by {err:.3e}",
                invariant="A^i == FD Jacobian of Delta_i",
            )
    logger.debug(f"Model '{model.name}' validated on {samples} states")


# ---------------------------------------------------------------------------
# Non-interacting models
# ---------------------------------------------------------------------------

def build_non_interacting_model(spec: NonInteractingSpec, validate: bool = True) -> ModelSpec:
    """
    N-dimensional house-of-cards model from a non-interacting spec:
    b(x) = (b~(x^1), ..., b~(x^N)), Delta_i(x)^j = x^j + a_i^j(x^j) for j != i,
    Delta_i(x)^i = 0, f_i(x) = f_i(x^i).
    """
    N = spec.N

    def drift(x):
        return spec.drift(x)

    def drift_jac(x):
        d = spec.drift_prime(x)
        out = np.zeros(x.shape + (N,))
        idx = np.arange(N)
        out[..., idx, idx] = d
        return out

    def make_jump(i):
        def delta(x):
            y = np.array(x, dtype=float, copy=True)
            for j in range(1, N + 1):
                if j != i:
                    y[..., j - 1] = x[..., j - 1] + spec.shift(i, j, x[..., j - 1])
            y[..., i - 1] = 0.0
            return y
        return delta

    def make_jump_jac(i):
        def jac(x):
            out = np.zeros(x.shape + (N,))
            for j in range(1, N + 1):
                if j != i:
                    out[..., j - 1, j - 1] = 1.0 + spec.shift_prime(i, j, x[..., j - 1])
            return out
        return jac

    def make_rate(i):
        f = spec.rates[i - 1]
        return lambda x: f(x[..., i - 1])

    exact_flow = None
    exact_variational = None
    if spec.exact_flow is not None:
        def exact_flow(x, t):
            return spec.exact_flow(x, np.asarray(t, dtype=float)[..., None])
    if spec.exact_flow_factor is not None:
        def exact_variational(x, t):
            d = np.broadcast_to(spec.exact_flow_factor(x, np.asarray(t, dtype=float)[..., None]), x.shape)
            out = np.zeros(x.shape + (N,))
            idx = np.arange(N)
            out[..., idx, idx] = d
            return out

    model = ModelSpec(
        dimension=N,
        drift=drift,
        jump_maps=tuple(make_jump(i) for i in range(1, N + 1)),
        jump_jacobians=tuple(make_jump_jac(i) for i in range(1, N + 1)),
        rates=tuple(make_rate(i) for i in range(1, N + 1)),
        rate_bound=spec.F,
        drift_jacobian=drift_jac,
        house_of_cards=True,
        non_interacting=True,
        name=spec.name,
        rate_floor=spec.f0,
        exact_flow=exact_flow,
        exact_variational=exact_variational,
        scalar_spec=spec,
    )
    if validate:
        validate_non_interacting(spec)
        validate_model(model)
    return model


def estimate_shift_constants(
    shifts: Sequence[Sequence[Optional[Callable]]],
    box: float = VALIDATION_BOX,
    samples: int = VALIDATION_SAMPLES,
    k_max: int = NON_INTERACTING_KMAX,
    fd_step: float = 1e-3,
):
    """
    Sampled constants of the shifts: a = inf |1 + (a_i^j)'| and
    A = sup of |d^k a_i^j / dv^k| for k = 0..k_max (finite differences).
    """
    v = np.linspace(-box, box, samples)
    a_const = np.inf
    A_const = 0.0
    for row in shifts:
        for s in row:
            if s is None:
                continue
            vals = [np.asarray(s(v), dtype=float) * np.ones_like(v)]
            d1 = (s(v + fd_step) - s(v - fd_step)) / (2 * fd_step) * np.ones_like(v)
            vals.append(d1)
            if k_max >= 2:
                vals.append((s(v + fd_step) - 2 * s(v) + s(v - fd_step)) / fd_step ** 2 * np.ones_like(v))
            a_const = min(a_const, float(np.min(np.abs(1.0 + d1))))
            A_const = max(A_const, max(float(np.max(np.abs(w))) for w in vals[: k_max + 1]))
    return (1.0 if a_const == np.inf else a_const), A_const


def validate_non_interacting(spec: NonInteractingSpec, box: float = VALIDATION_BOX) -> None:
    """Check a > 0, |1 + (a_i^j)'| >= a, |d^k a_i^j| <= A and f0 <= f_i <= F on a grid"""
    if not spec.a > 0:
        raise ModelValidationError(f"constant a must be positive, got {spec.a}", invariant="a > 0")
    if not 0 <= spec.f0 <= spec.F:
        raise ModelValidationError(f"rate floor {spec.f0} outside [0, F={spec.F}]", invariant="0 <= f0 <= F")
    v = np.linspace(-box, box, VALIDATION_SAMPLES)
    for i, f in enumerate(spec.rates, start=1):
        r = np.asarray(f(v), dtype=float)
        if np.any(r < spec.f0 - RATE_TOL):
            raise ModelValidationError(
                f"rate f_{i} reaches {float(np.min(r)):.6g} < f0 = {spec.f0}",
                invariant="f_i(v) >= f0",
            )
        if np.any(r > spec.F + RATE_TOL):
            raise ModelValidationError(
                f"rate f_{i} reaches {float(np.max(r)):.6g} > F = {spec.F}",
                invariant="f_i(v) <= F",
            )
    a_obs, A_obs = estimate_shift_constants(spec.shifts, box=box)
    if a_obs < spec.a * (1 - 1e-9):
        raise ModelValidationError(
            f"|1 + (a_i^j)'| reaches {a_obs:.6g} < a = {spec.a}",
            invariant="|1 + (a_i^j)'(v)| >= a",
        )
    if A_obs > spec.A * (1 + 1e-6) + 1e-9:
        raise ModelValidationError(
            f"shift derivatives reach {A_obs:.6g} > A = {spec.A}",
            invariant="|d^k a_i^j / dv^k| <= A",
        )


# ---------------------------------------------------------------------------
# Neuron preset
# ---------------------------------------------------------------------------

def neuron_spec(params: NeuronParams) -> NonInteractingSpec:
    """Non-interacting spec of the neuron model: b~(v) = -lam (v - v*), a_i^j = W_{i->j}"""
    _validate_neuron_params(params)
    N, lam, v_star = params.N, float(params.lam), float(params.v_star)
    W = np.array(params.weights, dtype=float)

    def const_shift(w):
        return lambda v: np.full(np.shape(v), w)

    def zero(v):
        return np.zeros(np.shape(v))

    def inv_shift(w):
        return lambda u: np.asarray(u, dtype=float) - w

    shifts = tuple(
        tuple(None if i == j else const_shift(W[i, j]) for j in range(N)) for i in range(N)
    )
    primes = tuple(tuple(None if i == j else zero for j in range(N)) for i in range(N))
    inverses = tuple(
        tuple(None if i == j else inv_shift(W[i, j]) for j in range(N)) for i in range(N)
    )
    off = W[~np.eye(N, dtype=bool)]
    A_const = float(off.max()) if off.size else 0.0

    return NonInteractingSpec(
        N=N,
        drift=lambda v: -lam * (np.asarray(v, dtype=float) - v_star),
        drift_prime=lambda v: np.full(np.shape(v), -lam),
        shifts=shifts,
        shift_primes=primes,
        rates=tuple(params.rate_fns),
        a=1.0,
        A=A_const,
        B=lam,
        F=params.rate_bound,
        f0=params.rate_floor,
        name=f"neuron(N={N})",
        exact_flow=lambda v, t: np.exp(-lam * t) * v + (1.0 - np.exp(-lam * t)) * v_star,
        exact_flow_factor=lambda v, t: np.exp(-lam * t) * np.ones_like(v),
        exact_inverse_flow=lambda y, t: v_star + (y - v_star) * np.exp(lam * t),
        exact_kappa=lambda y: np.log(v_star / (v_star - np.asarray(y, dtype=float))) / lam,
        inverse_shifts=inverses,
    )


def _validate_neuron_params(params: NeuronParams) -> None:
    if params.N < 1:
        raise ModelValidationError(f"N must be a positive integer, got {params.N}")
    if not params.lam > 0:
        raise ModelValidationError(f"lambda must be positive, got {params.lam}", invariant="lambda > 0")
    if not params.v_star > 0:
        raise ModelValidationError(f"v* must be positive, got {params.v_star}", invariant="v* > 0")
    W = np.asarray(params.weights, dtype=float)
    if W.shape != (params.N, params.N):
        raise ModelValidationError(f"weights must be {params.N}x{params.N}, got {W.shape}")
    if np.any(W[~np.eye(params.N, dtype=bool)] < 0):
        raise ModelValidationError("synaptic weights must be nonnegative", invariant="W_{i->j} >= 0")
    if len(params.rate_fns) != params.N:
        raise ModelValidationError(f"need {params.N} rate functions, got {len(params.rate_fns)}")
    for f in params.rate_fns:
        if not isinstance(f, RateFunction) or not np.isfinite(f.bound):
            raise ModelValidationError("every neuron rate needs a declared bound", invariant="rate_bound declared")


def build_neuron_model(params: NeuronParams, validate: bool = True) -> ModelSpec:
    """
    Interacting-neuron model: Delta_i(x)^j = x^j + W_{i->j} (j != i),
    Delta_i(x)^i = 0, b^i(x) = -lam (x^i - v*), exact flows attached.
    """
    spec = neuron_spec(params)
    model = build_non_interacting_model(spec, validate=validate)
    if params.rate_floor == 0:
        logger.warning(f"Model '{model.name}' has rate floor 0: regularity threshold carries no guarantee")
    logger.info(f"Built neuron model N={params.N}, lambda={params.lam}, v*={params.v_star}")
    return model


def neuron_params(
    N: int,
    lam: float = 1.0,
    v_star: float = 1.0,
    weights=None,
    rate: Union[RateFunction, Sequence[RateFunction], float, None] = None,
) -> NeuronParams:
    """Convenience constructor: scalar weight or matrix, one rate for all or per neuron"""
    if weights is None:
        weights = 0.0
    W = np.array(weights, dtype=float)
    if W.ndim == 0:
        W = np.full((N, N), float(W))
    W = W.copy()
    np.fill_diagonal(W, 0.0)
    if rate is None:
        rate = 1.0
    if isinstance(rate, (int, float)):
        rate = RateFunction(kind="constant", bound=float(rate), floor=float(rate), params={"value": float(rate)})
    if isinstance(rate, RateFunction):
        rates = tuple([rate] * N)
    else:
        rates = tuple(rate)
    return NeuronParams(N=N, lam=lam, v_star=v_star, weights=W, rate_fns=rates)


def neuron_params_from_description(desc: dict) -> NeuronParams:
    """NeuronParams from a {"type": "neuron", ...} description"""
    try:
        N = int(desc["N"])
        lam = float(desc["lambda"])
        v_star = float(desc["v_star"])
    except KeyError as e:
        raise ConfigError(f"neuron model description is missing {e}") from e
    rates_desc = desc.get("rates")
    if rates_desc is None:
        raise ConfigError("neuron model description is missing 'rates' (with a declared bound)")
    if isinstance(rates_desc, list):
        rates = [RateFunction.from_dict(r) for r in rates_desc]
    else:
        rates = RateFunction.from_dict(rates_desc)
    return neuron_params(N, lam=lam, v_star=v_star, weights=desc.get("weights", 0.0), rate=rates)


@register_model_type("neuron")
def _neuron_from_description(desc: dict) -> ModelSpec:
    model = build_neuron_model(neuron_params_from_description(desc))
    return _with_description(model, desc)


def _with_description(model: ModelSpec, desc: dict) -> ModelSpec:
    from dataclasses import replace
    return replace(model, description=dict(desc))


def model_from_description(desc: dict) -> ModelSpec:
    """Build a model from a description dict via the builder registry"""
    kind = desc.get("type")
    if kind not in MODEL_BUILDERS:
        raise ConfigError(f"Unknown model type: {kind!r}. Registered: {sorted(MODEL_BUILDERS)}")
    return MODEL_BUILDERS[kind](desc)


def load_model(path: Union[str, Path]) -> ModelSpec:
    """Read a JSON model description file"""
    path = Path(path)
    try:
        desc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read model file {path}: {e}") from e
    model = model_from_description(desc)
    logger.info(f"Loaded model '{model.name}' from {path}")
    return model
