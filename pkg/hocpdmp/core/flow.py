"""
Deterministic flow integration.

Fixed-step classical RK4 (or a model's exact flow), variational matrices,
survival function, survival-weighted time integrals and the scalar-flow
helpers of non-interacting models (inverse flow, flow factor, kappa).
"""

import logging
import math
from typing import Callable, Iterator, Optional, Tuple

import numpy as np
from scipy import integrate, optimize

from .errors import FlowDomainError, IntegrationError
from .model import drift_jacobian, rate_vector
from .models import FlowResult, IntegratorConfig, ModelSpec, NonInteractingSpec
from ..utils.constants import BISECTION_MAX_ITER, KAPPA_BRACKET_START, KAPPA_XTOL

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = IntegratorConfig()


def _cfg(cfg: Optional[IntegratorConfig]) -> IntegratorConfig:
    return cfg if cfg is not None else DEFAULT_CONFIG


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise IntegrationError(f"non-finite {what} during integration", invariant="finite state")
    return arr


def _n_steps(t: float, h: float) -> int:
    return max(1, int(math.ceil(t / h - 1e-12)))


def rk4_step(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt) -> np.ndarray:
    """One classical Runge-Kutta step; dt may be an array broadcasting against x"""
    k1 = fn(x)
    k2 = fn(x + 0.5 * dt * k1)
    k3 = fn(x + 0.5 * dt * k2)
    k4 = fn(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(fn: Callable[[np.ndarray], np.ndarray], x, t: float, h: float) -> np.ndarray:
    """Integrate x' = fn(x) over [0, t] with ceil(t/h) equal steps"""
    x = np.array(x, dtype=float, copy=True)
    if t == 0:
        return x
    n = _n_steps(t, h)
    dt = t / n
    for _ in range(n):
        x = rk4_step(fn, x, dt)
    return _check_finite(x, "state")


def _use_exact(model: ModelSpec, cfg: IntegratorConfig) -> bool:
    return cfg.method == "auto" and model.exact_flow is not None


# ---------------------------------------------------------------------------
# Flow and survival
# ---------------------------------------------------------------------------

def flow(model: ModelSpec, x, t: float, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """
    gamma_t(x). Vectorized over leading axes of x for a scalar t.

    Raises:
        IntegrationError: if the state becomes non-finite
    """
    cfg = _cfg(cfg)
    if t < 0:
        raise ValueError(f"flow time must be >= 0, got {t}")
    x = np.asarray(x, dtype=float)
    if _use_exact(model, cfg):
        return _check_finite(model.exact_flow(x, t), "state")
    return rk4(model.drift, x, t, cfg.step)


def flow_grid(
    model: ModelSpec,
    x,
    t: float,
    cfg: Optional[IntegratorConfig] = None,
    grid_step: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Flow sampled on ceil(t / grid_step) + 1 equally spaced times in [0, t].

    RK4 sub-steps never exceed cfg.step. Returns (times, states) with states
    of shape (len(times),) + x.shape.
    """
    cfg = _cfg(cfg)
    x = np.asarray(x, dtype=float)
    grid_step = grid_step or cfg.step
    n = _n_steps(t, grid_step) if t > 0 else 0
    times = np.linspace(0.0, t, n + 1)
    if _use_exact(model, cfg):
        tt = times.reshape((n + 1,) + (1,) * (x.ndim - 1))
        states = model.exact_flow(np.broadcast_to(x, (n + 1,) + x.shape), tt)
        return times, _check_finite(states, "state")
    states = np.empty((n + 1,) + x.shape)
    states[0] = x
    if n:
        dt = t / n
        sub = _n_steps(dt, cfg.step)
        for k in range(n):
            states[k + 1] = rk4(model.drift, states[k], dt, dt / sub)
    return times, states


def flow_with_rate(
    model: ModelSpec,
    x,
    t: float,
    cfg: Optional[IntegratorConfig] = None,
    keep_path: bool = False,
) -> FlowResult:
    """End state and integrated rate Lambda(t) (trapezoid on the step grid)"""
    cfg = _cfg(cfg)
    times, states = flow_grid(model, x, t, cfg)
    rates = rate_vector(model, states).sum(axis=-1)
    lam = float(integrate.trapezoid(rates, times)) if len(times) > 1 else 0.0
    return FlowResult(
        end_state=states[-1].copy(),
        integrated_rate=lam,
        times=times if keep_path else None,
        states=states if keep_path else None,
    )


def integrated_rate(model: ModelSpec, x, t: float, cfg: Optional[IntegratorConfig] = None) -> float:
    return flow_with_rate(model, x, t, cfg).integrated_rate


def survival(model: ModelSpec, x, t: float, cfg: Optional[IntegratorConfig] = None) -> float:
    """e(x, t) = exp(-Lambda(t)), the probability of no jump before t"""
    if t == 0:
        return 1.0
    return float(np.exp(-integrated_rate(model, x, t, cfg)))


def march(
    model: ModelSpec,
    starts,
    cfg: Optional[IntegratorConfig] = None,
) -> Iterator[Tuple[float, np.ndarray, np.ndarray]]:
    """
    Step a batch of start states forward on the quad_step grid.

    Yields (t, states, Lambda) starting at t = 0, with Lambda the trapezoid
    integrated total rate of each row. Stops once every survival is below
    trunc_eps; past max_time it warns and stops.
    """
    cfg = _cfg(cfg)
    states = np.atleast_2d(np.asarray(starts, dtype=float)).copy()
    lam = np.zeros(len(states))
    rate = rate_vector(model, states).sum(axis=-1)
    dt = cfg.quad_step
    t = 0.0
    cutoff = -math.log(cfg.trunc_eps)
    exact = _use_exact(model, cfg)
    sub_h = dt / _n_steps(dt, cfg.step)
    k = 0
    yield t, states, lam
    while True:
        if np.all(lam > cutoff):
            return
        if t >= cfg.max_time:
            logger.warning(
                f"Truncation cap reached at t={t:g}: max survival {float(np.exp(-lam.min())):.3e} "
                f"above trunc_eps={cfg.trunc_eps:g}"
            )
            return
        k += 1
        if exact:
            states = _check_finite(model.exact_flow(states, dt), "state")
        else:
            states = rk4(model.drift, states, dt, sub_h)
        t = k * dt
        new_rate = rate_vector(model, states).sum(axis=-1)
        lam = lam + 0.5 * dt * (rate + new_rate)
        rate = new_rate
        yield t, states, lam


def truncation_time(model: ModelSpec, x, cfg: Optional[IntegratorConfig] = None) -> float:
    """T_max = first grid time with survival below trunc_eps (capped at max_time)"""
    t_end = 0.0
    for t, _, _ in march(model, x, cfg):
        t_end = t
    return t_end


def survival_weighted_integral(
    model: ModelSpec,
    starts,
    integrand: Callable[[np.ndarray], np.ndarray],
    cfg: Optional[IntegratorConfig] = None,
) -> Tuple[np.ndarray, bool]:
    """
    int_0^inf e(x, t) h(gamma_t(x)) dt for every start row x.

    Args:
        starts: (M, N) start states
        integrand: h, mapping (M, N) states to (M,) or (M, K) values
        cfg: quad_step is the trapezoid grid; truncation per trunc_eps/max_time

    Returns:
        Tuple of (integrals shaped like h's output, truncated flag). The flag
        is True when the max_time cap ended the integral early.
    """
    cfg = _cfg(cfg)
    dt = cfg.quad_step
    acc = None
    prev = None
    t_last = 0.0
    lam_last = None
    for t, states, lam in march(model, starts, cfg):
        surv = np.exp(-lam)
        vals = np.asarray(integrand(states), dtype=float)
        weighted = vals * (surv if vals.ndim == 1 else surv[:, None])
        if prev is None:
            acc = np.zeros_like(weighted)
        else:
            acc += 0.5 * dt * (prev + weighted)
        prev = weighted
        t_last, lam_last = t, lam
    cutoff = -math.log(cfg.trunc_eps)
    truncated = bool(lam_last is not None and np.any(lam_last <= cutoff) and t_last >= cfg.max_time)
    return acc, truncated


# ---------------------------------------------------------------------------
# Variational matrices
# ---------------------------------------------------------------------------

def variational(model: ModelSpec, x, t: float, cfg: Optional[IntegratorConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Y_t(x) = d gamma_t / dx and its inverse Z_t(x).

    Y' = b-dot(gamma_s) Y and Z' = -Z b-dot(gamma_s) are integrated jointly
    with the flow, Y_0 = Z_0 = Id. The exact Jacobian is used when the model
    provides one.
    """
    cfg = _cfg(cfg)
    x = np.asarray(x, dtype=float)
    N = model.dimension
    eye = np.broadcast_to(np.eye(N), x.shape[:-1] + (N, N)).copy()
    if t == 0:
        return eye, eye.copy()
    if cfg.method == "auto" and model.exact_variational is not None:
        Y = model.exact_variational(x, t)
        return _check_finite(Y, "variational matrix"), np.linalg.inv(Y)

    def rhs(state):
        xs = state[..., :N]
        Y = state[..., N:N + N * N].reshape(xs.shape[:-1] + (N, N))
        Z = state[..., N + N * N:].reshape(xs.shape[:-1] + (N, N))
        J = drift_jacobian(model, xs)
        dY = J @ Y
        dZ = -Z @ J
        return np.concatenate(
            [model.drift(xs), dY.reshape(xs.shape[:-1] + (N * N,)), dZ.reshape(xs.shape[:-1] + (N * N,))],
            axis=-1,
        )

    state = np.concatenate(
        [x, eye.reshape(x.shape[:-1] + (N * N,)), eye.reshape(x.shape[:-1] + (N * N,))], axis=-1
    )
    out = rk4(rhs, state, t, cfg.step)
    Y = out[..., N:N + N * N].reshape(x.shape[:-1] + (N, N))
    Z = out[..., N + N * N:].reshape(x.shape[:-1] + (N, N))
    return _check_finite(Y, "variational matrix"), _check_finite(Z, "variational matrix")


def diagonal_variational(spec: NonInteractingSpec, x, t: float, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """Non-interacting factorisation Y_t(x) = diag(y_t(x^1), ..., y_t(x^N))"""
    x = np.asarray(x, dtype=float)
    d = scalar_flow_factor(spec, x, t, cfg)
    out = np.zeros(x.shape + (x.shape[-1],))
    idx = np.arange(x.shape[-1])
    out[..., idx, idx] = d
    return out


# ---------------------------------------------------------------------------
# Scalar flow of non-interacting models
# ---------------------------------------------------------------------------

def scalar_flow(spec: NonInteractingSpec, v, t: float, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """gamma~_t(v), vectorized over v"""
    cfg = _cfg(cfg)
    v = np.asarray(v, dtype=float)
    if cfg.method == "auto" and spec.exact_flow is not None:
        return spec.exact_flow(v, t)
    return rk4(spec.drift, v, t, cfg.step)


def inverse_scalar_flow(spec: NonInteractingSpec, y, t, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """v with gamma~_t(v) = y: the flow of -b~ over time t. t may be an array"""
    cfg = _cfg(cfg)
    y = np.asarray(y, dtype=float)
    if cfg.method == "auto" and spec.exact_inverse_flow is not None:
        return spec.exact_inverse_flow(y, np.asarray(t, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), y.shape)
    t_max = float(t.max()) if t.size else 0.0
    if t_max == 0:
        return y.copy()
    n = _n_steps(t_max, cfg.step)
    dt = t / n
    v = y.copy()
    for _ in range(n):
        v = rk4_step(lambda u: -spec.drift(u), v, dt)
    return _check_finite(v, "inverse flow")


def scalar_flow_factor(spec: NonInteractingSpec, v, t, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """
    y_t(v) = d gamma~_t(v) / dv = exp(int_0^t b~'(gamma~_s(v)) ds).
    t may be an array broadcasting against v.
    """
    cfg = _cfg(cfg)
    v = np.asarray(v, dtype=float)
    if cfg.method == "auto" and spec.exact_flow_factor is not None:
        return np.broadcast_to(spec.exact_flow_factor(v, np.asarray(t, dtype=float)), np.broadcast(v, t).shape).copy()
    t = np.broadcast_to(np.asarray(t, dtype=float), np.broadcast(v, t).shape)
    v = np.broadcast_to(v, t.shape).copy()
    t_max = float(t.max()) if t.size else 0.0
    if t_max == 0:
        return np.ones_like(v)
    n = _n_steps(t_max, cfg.step)
    dt = t / n

    def rhs(state):
        return np.stack([spec.drift(state[0]), spec.drift_prime(state[0])])

    state = np.stack([v, np.zeros_like(v)])
    for _ in range(n):
        state = rk4_step(rhs, state, dt)
    return np.exp(_check_finite(state[1], "flow factor"))


def inverse_flow_factor(spec: NonInteractingSpec, v, t, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """z_t(v) = 1 / y_t(v)"""
    return 1.0 / scalar_flow_factor(spec, v, t, cfg)


def flow_limit(spec: NonInteractingSpec, cfg: Optional[IntegratorConfig] = None) -> float:
    """
    gamma~_infinity(0): the supremum (or infimum) of gamma~^+(0).

    Approximated by gamma~_{max_time}(0) unless the flow has a closed form
    whose long-time value is finite.
    """
    cfg = _cfg(cfg)
    if spec.drift(np.asarray(0.0)) == 0:
        raise FlowDomainError("0 is an equilibrium of the scalar drift", invariant="0 not in E", boundary=0.0)
    if cfg.method == "auto" and spec.exact_flow is not None:
        with np.errstate(over="ignore"):
            return float(spec.exact_flow(np.asarray(0.0), np.asarray(np.inf)))
    return float(scalar_flow(spec, 0.0, cfg.max_time, cfg))


class _ZeroTrajectory:
    """Cached RK4 grid of gamma~_t(0) with sub-step evaluation between grid points"""

    def __init__(self, spec: NonInteractingSpec, cfg: IntegratorConfig):
        self.spec = spec
        self.h = cfg.step
        self.values = [0.0]

    def extend_to(self, t: float) -> None:
        need = int(math.ceil(t / self.h))
        v = np.asarray(self.values[-1])
        while len(self.values) <= need:
            v = rk4_step(self.spec.drift, v, self.h)
            if not np.isfinite(v):
                raise IntegrationError("non-finite scalar flow while bracketing kappa")
            self.values.append(float(v))

    def __call__(self, t: float) -> float:
        self.extend_to(t)
        k = int(math.floor(t / self.h))
        tau = t - k * self.h
        v = self.values[k]
        if tau <= 0:
            return v
        return float(rk4_step(self.spec.drift, np.asarray(v), tau))


def kappa(spec: NonInteractingSpec, y, cfg: Optional[IntegratorConfig] = None):
    """
    kappa(y): the time at which the flow started at 0 reaches y.

    The bracket starts at [0, 1] and doubles until it contains the crossing;
    bisection refines to 1e-12 in t. The closed form is used when the spec
    provides one.

    Raises:
        FlowDomainError: y not reachable from 0 (behind 0, or at/beyond the
            flow limit); boundary carries the limit value
    """
    cfg = _cfg(cfg)
    y_arr = np.asarray(y, dtype=float)
    b0 = float(spec.drift(np.asarray(0.0)))
    if b0 == 0:
        raise FlowDomainError("0 is an equilibrium of the scalar drift", invariant="0 not in E", boundary=0.0)
    direction = math.copysign(1.0, b0)
    limit = flow_limit(spec, cfg)
    behind = direction * y_arr < 0
    beyond = direction * (y_arr - limit) >= 0
    if np.any(behind | beyond):
        bad = float(y_arr[behind | beyond].flat[0])
        raise FlowDomainError(
            f"y={bad} is not reachable from 0 (reachable set lies between 0 and {limit})",
            invariant="y in gamma~^+(0)",
            boundary=limit,
        )
    if cfg.method == "auto" and spec.exact_kappa is not None:
        out = spec.exact_kappa(y_arr)
        return float(out) if out.ndim == 0 else out

    traj = _ZeroTrajectory(spec, cfg)

    def solve(target: float) -> float:
        if target == 0:
            return 0.0
        lo, hi = 0.0, KAPPA_BRACKET_START
        while direction * (traj(hi) - target) < 0:
            lo, hi = hi, 2.0 * hi
            if hi > cfg.max_time:
                raise FlowDomainError(
                    f"kappa bracket exceeded max_time={cfg.max_time} for y={target}",
                    invariant="y in gamma~^+(0)",
                    boundary=limit,
                )
        logger.debug(f"kappa bracket for y={target}: [{lo}, {hi}]")
        return float(optimize.bisect(lambda s: traj(s) - target, lo, hi, xtol=KAPPA_XTOL, maxiter=BISECTION_MAX_ITER))

    if y_arr.ndim == 0:
        return solve(float(y_arr))
    return np.array([solve(float(v)) for v in y_arr.ravel()]).reshape(y_arr.shape)


def equilibrium_avoidance(spec: NonInteractingSpec, v: float, T: float, cfg: Optional[IntegratorConfig] = None) -> float:
    """min over the step grid of |b~(gamma~_t(v))| for t in [0, T]"""
    cfg = _cfg(cfg)
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    n = _n_steps(T, cfg.step)
    if cfg.method == "auto" and spec.exact_flow is not None:
        path = spec.exact_flow(np.full(n + 1, float(v)), np.linspace(0.0, T, n + 1))
    else:
        path = np.empty(n + 1)
        path[0] = v
        dt = T / n
        cur = np.asarray(float(v))
        for k in range(n):
            cur = rk4_step(spec.drift, cur, dt)
            path[k + 1] = cur
    return float(np.min(np.abs(spec.drift(path))))
