"""
One-step density propagation for non-interacting models.

A start density nu(x) = fbar(x) prod_j r(x^j) is pushed through one
flow-then-jump step; the density of the next jump-chain state is
sum_i q_i(y), each q_i assembled from the scalar flow, kappa, the inverse
jump maps and the survival along the reconstructed pre-image.
"""

import logging
import math
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from .errors import FlowDomainError, ModelValidationError
from .flow import _cfg, _n_steps, flow_limit, inverse_flow_factor, inverse_scalar_flow, kappa, rk4_step
from .model import neuron_spec
from .models import IntegratorConfig, NeuronParams, NonInteractingSpec, ProductDensity, RateKind
from ..utils.constants import COAREA_QUAD_EPSABS, COAREA_SURVIVAL_NODES

logger = logging.getLogger(__name__)

INVERSE_SHIFT_TOL = 1e-12
BOX_SAMPLES = 201
EVAL_CHUNK = 50_000


# ---------------------------------------------------------------------------
# Input density
# ---------------------------------------------------------------------------

def _quad(fn, r: ProductDensity) -> float:
    value, _ = integrate.quad(fn, r.lo, r.hi, epsabs=COAREA_QUAD_EPSABS, limit=200)
    return float(value)


def coarea_constant(spec: NonInteractingSpec, r: ProductDensity, i: int) -> float:
    """C(f_i, nu) = int r(v) f_i(v) dv over the support of r"""
    rate = spec.rates[i - 1]
    return _quad(lambda v: float(r(v) * rate(np.asarray(v))), r)


def normalize_input(spec: NonInteractingSpec, r: ProductDensity) -> ProductDensity:
    """
    Rescale r so that fbar(x) prod_j r(x^j) integrates to 1:
    c = (R^(N-1) sum_j C_j(r))^(-1/N), R = int r.
    """
    base = replace(r, scale=1.0)
    R = _quad(lambda v: float(base(v)), base)
    total = sum(coarea_constant(spec, base, j) for j in range(1, spec.N + 1))
    if R <= 0 or total <= 0:
        raise ModelValidationError("input density must have positive mass and positive rate mass", module="density")
    c = (R ** (spec.N - 1) * total) ** (-1.0 / spec.N)
    return replace(base, scale=float(c))


# ---------------------------------------------------------------------------
# Inverse maps
# ---------------------------------------------------------------------------

def inverse_shift(spec: NonInteractingSpec, i: int, j: int, w) -> np.ndarray:
    """v with v + a_i^j(v) = w; closed form when the spec has one, else Newton"""
    w = np.asarray(w, dtype=float)
    if spec.inverse_shifts is not None and spec.inverse_shifts[i - 1][j - 1] is not None:
        return spec.inverse_shifts[i - 1][j - 1](w)
    if w.size == 0:
        return w.copy()
    root = optimize.newton(
        lambda v: v + spec.shift(i, j, v) - w,
        w.copy(),
        fprime=lambda v: 1.0 + spec.shift_prime(i, j, v),
        tol=INVERSE_SHIFT_TOL,
        maxiter=100,
    )
    return np.asarray(root, dtype=float)


def inverse_jump_flow(
    spec: NonInteractingSpec,
    i: int,
    j: int,
    yj,
    t,
    cfg: Optional[IntegratorConfig] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pre-image of y^j under v -> gamma~_t(Delta_i^j(v)).

    Returns:
        Tuple of (x^j, w) with w = Delta_i^j(x^j) = gamma~_t^{-1}(y^j)
    """
    w = inverse_scalar_flow(spec, yj, t, cfg)
    return inverse_shift(spec, i, j, w), w


def lambda_factor(spec: NonInteractingSpec, i: int, j: int, xj, w, t, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """dx^j / dy^j = z_t(w) / (1 + (a_i^j)'(x^j))"""
    return inverse_flow_factor(spec, w, t, cfg) / (1.0 + spec.shift_prime(i, j, xj))


def _survival_along(spec: NonInteractingSpec, starts: np.ndarray, t: np.ndarray, cfg: IntegratorConfig) -> np.ndarray:
    """exp(-int_0^t sum_j f_j(gamma~_s(starts^j)) ds) per row, Simpson on a fixed node count"""
    nodes = COAREA_SURVIVAL_NODES
    intervals = nodes - 1
    M, N = starts.shape
    if cfg.method == "auto" and spec.exact_flow is not None:
        s = t[:, None] * np.linspace(0.0, 1.0, nodes)[None, :]
        states = spec.exact_flow(starts[:, :, None], s[:, None, :])
    else:
        t_max = float(t.max()) if M else 0.0
        sub = _n_steps(t_max / intervals, cfg.step) if t_max > 0 else 1
        dt = (t / (intervals * sub))[:, None]
        states = np.empty((M, N, nodes))
        v = starts.copy()
        states[:, :, 0] = v
        for k in range(1, nodes):
            for _ in range(sub):
                v = rk4_step(spec.drift, v, dt)
            states[:, :, k] = v
    total = sum(spec.rates[j](states[:, j, :]) for j in range(N))
    return np.exp(-integrate.simpson(total, dx=1.0, axis=-1) * t / intervals)


# ---------------------------------------------------------------------------
# Propagated density
# ---------------------------------------------------------------------------

def coarea_propagate(
    spec: NonInteractingSpec,
    r: ProductDensity,
    i: int,
    y,
    cfg: Optional[IntegratorConfig] = None,
    strict: bool = True,
) -> np.ndarray:
    """
    q_i(y) = C(f_i, nu) prod_{j != i}[r(x^j) lambda_j] e~(y) fbar(y) / |b~(y^i)|
    for y^i in gamma~^+(0), 0 otherwise. Vectorized over (..., N).

    r is rescaled internally so that the start density has mass 1.

    Raises:
        FlowDomainError: strict and some y^i at or beyond the flow limit
    """
    cfg = _cfg(cfg)
    if not 1 <= i <= spec.N:
        raise ModelValidationError(f"index {i} outside 1..{spec.N}", module="density")
    y = np.asarray(y, dtype=float)
    shape = y.shape[:-1]
    y = y.reshape(-1, spec.N)
    r = normalize_input(spec, r)
    C = coarea_constant(spec, r, i)

    yi = y[:, i - 1]
    direction = math.copysign(1.0, float(spec.drift(np.asarray(0.0))))
    limit = flow_limit(spec, cfg)
    beyond = direction * (yi - limit) >= 0
    if strict and beyond.any():
        raise FlowDomainError(
            f"y^{i}={float(yi[beyond][0])} is at or beyond the flow limit {limit}: the density is undefined there",
            invariant="y^i in gamma~^+(0)",
            boundary=limit,
            module="density",
        )
    ok = (direction * yi >= 0) & ~beyond
    out = np.zeros(len(y))
    if not ok.any():
        return out.reshape(shape)

    ys = y[ok]
    t = np.asarray(kappa(spec, ys[:, i - 1], cfg), dtype=float).reshape(-1)
    weight = np.full(len(ys), C)
    starts = np.zeros_like(ys)
    for j in range(1, spec.N + 1):
        if j == i:
            continue
        xj, w = inverse_jump_flow(spec, i, j, ys[:, j - 1], t, cfg)
        weight *= r(xj) * lambda_factor(spec, i, j, xj, w, t, cfg)
        starts[:, j - 1] = w
    live = weight != 0
    if live.any():
        surv = _survival_along(spec, starts[live], t[live], cfg)
        fbar = sum(spec.rates[j](ys[live, j]) for j in range(spec.N))
        weight[live] *= surv * fbar / np.abs(spec.drift(ys[live, i - 1]))
    out[ok] = weight
    return out.reshape(shape)


def neuron_constant_rate_q(params: NeuronParams, r: ProductDensity, i: int, y) -> np.ndarray:
    """
    Closed form of q_i for the neuron model with constant rate f:
    C N f / lam * v*^(N - 1 - N f / lam) * (v* - y^i)^(N f / lam - N)
    * prod_{j != i} r(v* (y^j - y^i) / (v* - y^i) - W_{i->j}) on 0 <= y^i < v*.
    """
    values = {float(fn(np.asarray(0.0))) for fn in params.rate_fns}
    if any(fn.kind != RateKind.CONSTANT for fn in params.rate_fns) or len(values) != 1:
        raise ModelValidationError("closed form needs one constant rate for every neuron", module="density")

    spec = neuron_spec(params)
    r = normalize_input(spec, r)
    f = values.pop()
    N, lam, v_star = params.N, float(params.lam), float(params.v_star)
    W = np.asarray(params.weights, dtype=float)
    y = np.asarray(y, dtype=float)
    yi = y[..., i - 1]
    ok = (yi >= 0) & (yi < v_star)
    gap = np.where(ok, v_star - yi, 1.0)
    expo = N * f / lam
    value = coarea_constant(spec, r, i) * N * f / lam * v_star ** (N - 1 - expo) * gap ** (expo - N)
    for j in range(1, N + 1):
        if j != i:
            value = value * r(v_star * (y[..., j - 1] - yi) / gap - W[i - 1, j - 1])
    return np.where(ok, value, 0.0)


def propagation_box(
    spec: NonInteractingSpec,
    r: ProductDensity,
    i: int,
    cfg: Optional[IntegratorConfig] = None,
) -> List[Tuple[float, float]]:
    """
    Bounding box of the support of q_i: coordinate i spans [0, limit],
    coordinate j spans the hull of Delta_i^j(supp r) and the limit.
    """
    limit = flow_limit(spec, cfg)
    support = np.linspace(r.lo, r.hi, BOX_SAMPLES)
    box = []
    for j in range(1, spec.N + 1):
        if j == i:
            box.append((min(0.0, limit), max(0.0, limit)))
        else:
            moved = support + spec.shift(i, j, support)
            box.append((float(min(moved.min(), limit)), float(max(moved.max(), limit))))
    return box


def coarea_grid(
    spec: NonInteractingSpec,
    r: ProductDensity,
    i: int,
    axes: Sequence[np.ndarray],
    cfg: Optional[IntegratorConfig] = None,
) -> np.ndarray:
    """q_i on the tensor grid spanned by axes (non-strict at the flow limit)"""
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    flat = mesh.reshape(-1, spec.N)
    values = np.empty(len(flat))
    for lo in range(0, len(flat), EVAL_CHUNK):
        values[lo:lo + EVAL_CHUNK] = coarea_propagate(spec, r, i, flat[lo:lo + EVAL_CHUNK], cfg, strict=False)
    return values.reshape(mesh.shape[:-1])


def propagated_mass(
    spec: NonInteractingSpec,
    r: ProductDensity,
    cfg: Optional[IntegratorConfig] = None,
    points: int = 401,
) -> Dict[int, float]:
    """
    int q_i over its bounding box for every i, by Simpson's rule along each
    axis of a tensor grid. The masses sum to 1 up to quadrature error.
    """
    if points ** spec.N > 10 ** 8:
        raise ModelValidationError(f"tensor grid of {points}^{spec.N} points is too large", module="density")
    masses = {}
    for i in range(1, spec.N + 1):
        axes = [np.linspace(lo, hi, points) for lo, hi in propagation_box(spec, r, i, cfg)]
        values = coarea_grid(spec, r, i, axes, cfg)
        for axis in reversed(axes):
            values = integrate.simpson(values, x=axis, axis=-1)
        masses[i] = float(values)
    logger.info(f"Propagated mass {sum(masses.values()):.6f} over {spec.N} terms")
    return masses


def closed_form_agreement(
    params: NeuronParams,
    r: ProductDensity,
    cfg: Optional[IntegratorConfig] = None,
    points: int = 50,
    floor: float = 1e-6,
) -> Dict[int, dict]:
    """
    Max relative difference between the generic q_i and the constant-rate
    closed form, over grid points where the closed form exceeds floor.
    """
    spec = neuron_spec(params)
    out = {}
    for i in range(1, params.N + 1):
        box = propagation_box(spec, r, i, cfg)
        axes = [np.linspace(lo, hi, points) for lo, hi in box]
        generic = coarea_grid(spec, r, i, axes, cfg)
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        closed = neuron_constant_rate_q(params, r, i, mesh)
        mask = closed > floor
        rel = np.abs(generic[mask] - closed[mask]) / closed[mask]
        out[i] = {
            "max_rel_error": float(rel.max()) if rel.size else 0.0,
            "points_compared": int(mask.sum()),
        }
    return out
