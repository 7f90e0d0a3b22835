"""
Verification of the identities satisfied by the invariant measure:
the flow-time representation, one level of integration by parts, the
jump-chain relation, stationarity and the jump-count identity.

All checks return IdentityReport objects; pass/fail uses a 3-SE band.
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ModelValidationError, RegionError
from .flow import _cfg, survival_weighted_integral
from .model import jump, rate_vector
from .models import (
    EmpiricalMeasure,
    Estimate,
    IdentityReport,
    IntegratorConfig,
    ModelSpec,
    PathRecord,
    RegionSpec,
)
from .simulate import apply_generator, ergodic_average, jump_chain_average, jump_rate
from ..utils.constants import DEFAULT_BATCHES, DEFAULT_BURN_IN, SE_MULTIPLIER
from ..utils.stats import combined_se, ratio_se
from ..utils.testfns import Bump, TestFunction, constant

logger = logging.getLogger(__name__)

# quadrature allowance on top of the Monte Carlo band
IPP_RTOL = 1e-3
IPP_ATOL = 1e-10
REPRESENTATION_FLOOR = 0.01
SUPPORT_POINTS = 401


def _tolerance(se: float, scale: float = 0.0, rtol: float = 0.0, atol: float = IPP_ATOL) -> float:
    return float(max(SE_MULTIPLIER * se, rtol * scale, atol))


def _after_jumps(
    model: ModelSpec,
    x: np.ndarray,
    integrand: Callable[[np.ndarray], np.ndarray],
    cfg: IntegratorConfig,
) -> Tuple[np.ndarray, bool]:
    """
    Per sample x: sum_i f_i(x) int_0^inf e(Delta_i(x), t) h(gamma_t(Delta_i(x))) dt.

    h maps (M, N) states to (M,) or (M, K) values.
    """
    rates = rate_vector(model, x)
    total = None
    truncated = False
    for i in range(1, model.dimension + 1):
        acc, trunc = survival_weighted_integral(model, jump(model, i, x), integrand, cfg)
        w = rates[:, i - 1] if acc.ndim == 1 else rates[:, i - 1, None]
        total = w * acc if total is None else total + w * acc
        truncated = truncated or trunc
    if truncated:
        logger.warning("Representation integral hit the max_time cap; values are truncated")
    return total, truncated


# ---------------------------------------------------------------------------
# Flow-time representation
# ---------------------------------------------------------------------------

def representation_rhs(
    model: ModelSpec,
    measure: EmpiricalMeasure,
    g: Callable[[np.ndarray], np.ndarray],
    cfg: Optional[IntegratorConfig] = None,
) -> Tuple[Estimate, bool]:
    """
    m(g) = sum_i int m(dx) f_i(x) int_0^inf e(Delta_i(x), t) g(gamma_t(Delta_i(x))) dt,
    Monte Carlo over the measure samples.

    Returns:
        Tuple of (estimate with SE over samples, truncation flag)
    """
    cfg = _cfg(cfg)
    values, truncated = _after_jumps(model, measure.samples, lambda y: np.asarray(g(y), dtype=float), cfg)
    return measure.expect(values), truncated


def representation_check(
    model: ModelSpec,
    measure: EmpiricalMeasure,
    g: TestFunction,
    cfg: Optional[IntegratorConfig] = None,
    lhs: Optional[Estimate] = None,
) -> IdentityReport:
    """
    Compare m^(g) with the representation. lhs defaults to the sample mean
    of g under the measure; an ergodic average may be passed instead.
    """
    rhs, truncated = representation_rhs(model, measure, g, cfg)
    if lhs is None:
        lhs = measure.expect(g(measure.samples))
    se = combined_se(lhs.se, rhs.se)
    return IdentityReport(
        identity=f"representation[{g.name}]",
        lhs=lhs.mean,
        rhs=rhs.mean,
        se=se,
        tolerance=max(REPRESENTATION_FLOOR * max(1.0, abs(lhs.mean)), SE_MULTIPLIER * se),
        extra={"truncated": truncated, "samples": measure.size},
    )


# ---------------------------------------------------------------------------
# Integration by parts
# ---------------------------------------------------------------------------

def check_support(g: Bump, region: RegionSpec) -> None:
    """
    Raises:
        RegionError: the open support of g leaves S_{d,k+2}
    """
    v = np.linspace(g.lo, g.hi, SUPPORT_POINTS)[1:-1]
    outside = ~np.asarray(region.contains(v), dtype=bool)
    if outside.any():
        raise RegionError(
            f"support ({g.lo}, {g.hi}) of g leaves S_(d={region.d}, k+2={region.k + 2}) "
            f"near v={float(v[outside][0]):.6g}",
            invariant="supp g in S_{d,k+2}",
        )


def _ipp_columns(model: ModelSpec, H: TestFunction, g: Bump):
    """
    Integrand columns evaluated along the flow:
    0: H g''; 1: G(H) g'; 1 + (i - 1) for i >= 2: G_i(H) [g o Delta_i^1]'.
    """
    spec = model.scalar_spec
    N = model.dimension

    def columns(y: np.ndarray) -> np.ndarray:
        v = y[:, 0]
        Hy = H(y)
        g1 = g.derivative(v, 1)
        active = g1 != 0
        b = spec.drift(v)
        safe_b = np.where(active, b, 1.0)
        rates = rate_vector(model, y)
        transport = np.sum(H.gradient(y) * model.drift(y), axis=-1)
        GH = (rates.sum(axis=-1) * Hy - transport + Hy * spec.drift_prime(v)) / safe_b
        out = np.zeros((len(y), N + 1))
        out[:, 0] = Hy * g.derivative(v, 2)
        out[:, 1] = np.where(active, GH * g1, 0.0)
        for i in range(2, N + 1):
            yi = jump(model, i, y)
            u = yi[:, 0]
            gu = g.derivative(u, 1)
            on = gu != 0
            bu = np.where(on, spec.drift(u), 1.0)
            out[:, i] = np.where(on, rates[:, i - 1] * H(yi) * gu / bu, 0.0)
        return out

    return columns


def ipp_check(
    model: ModelSpec,
    H: TestFunction,
    g: Bump,
    measure: EmpiricalMeasure,
    region: RegionSpec,
    cfg: Optional[IntegratorConfig] = None,
) -> IdentityReport:
    """
    One level of integration by parts:
    pi_H(g'') = pi_{G(H)}(g') - sum_{i>=2} pi_{G_i(H)}([g o Delta_i^1]').

    The residual SE comes from the per-sample difference, so the correlation
    between the two sides is accounted for. The direct boundary-term form
    of the same identity is reported in extra["direct"].

    Raises:
        ModelValidationError: model is not non-interacting
        RegionError: g not supported in the region
    """
    cfg = _cfg(cfg)
    spec = model.scalar_spec
    if spec is None:
        raise ModelValidationError("integration by parts needs a non-interacting model", module="density")
    check_support(g, region)
    N = model.dimension
    per_sample, truncated = _after_jumps(model, measure.samples, _ipp_columns(model, H, g), cfg)
    lhs = measure.expect(per_sample[:, 0])
    jump_terms = per_sample[:, 2:].sum(axis=1)
    rhs = measure.expect(per_sample[:, 1] - jump_terms)
    diff = measure.expect(per_sample[:, 0] - per_sample[:, 1] + jump_terms)

    x = measure.samples
    rates = rate_vector(model, x)
    boundary = np.zeros(len(x))
    for i in range(2, N + 1):
        xi = jump(model, i, x)
        u = xi[:, 0]
        gu = g.derivative(u, 1)
        on = gu != 0
        bu = np.where(on, spec.drift(u), 1.0)
        boundary -= np.where(on, rates[:, i - 1] * gu * H(xi) / bu, 0.0)
    direct = measure.expect(per_sample[:, 0] - per_sample[:, 1] - boundary)

    scale = max(abs(lhs.mean), abs(rhs.mean))
    report = IdentityReport(
        identity=f"ipp[H={H.name}, g=({g.lo:g},{g.hi:g})]",
        lhs=lhs.mean,
        rhs=rhs.mean,
        se=diff.se,
        tolerance=_tolerance(diff.se, scale, IPP_RTOL),
        extra={
            "direct": {"residual": direct.mean, "se": direct.se},
            "jump_terms": float(jump_terms @ measure.weights),
            "truncated": truncated,
            "samples": measure.size,
        },
    )
    logger.info(f"IPP residual {report.residual:.3e} (se {report.se:.3e}): {report.verdict}")
    return report


def ipp_dim1_bound(
    model: ModelSpec,
    g: Bump,
    measure: EmpiricalMeasure,
    grid_points: int = SUPPORT_POINTS,
) -> IdentityReport:
    """
    |m(g')| <= 2 C(eps) ||g||_inf in dimension one, with
    eps = min |b~| on supp g and C(eps) = max(1, sup_{supp g}(f + |b~'|)) / eps.
    """
    spec = model.scalar_spec
    if spec is None or model.dimension != 1:
        raise ModelValidationError("the one-dimensional bound needs a non-interacting model with N = 1", module="density")
    v = np.linspace(g.lo, g.hi, grid_points)
    eps = float(np.min(np.abs(spec.drift(v))))
    if eps == 0:
        raise RegionError(f"b~ vanishes on the support ({g.lo}, {g.hi}) of g", invariant="|b~| > 0 on supp g")
    sup = float(np.max(spec.rates[0](v) + np.abs(spec.drift_prime(v))))
    C = max(1.0, sup) / eps
    est = measure.expect(g.derivative(measure.samples[:, 0], 1))
    return IdentityReport(
        identity=f"ipp_bound[g=({g.lo:g},{g.hi:g})]",
        lhs=abs(est.mean),
        rhs=2.0 * C * g.sup_norm,
        se=est.se,
        tolerance=SE_MULTIPLIER * est.se,
        extra={"eps": eps, "C": C},
        inequality=True,
    )


# ---------------------------------------------------------------------------
# Ergodic relations along a path
# ---------------------------------------------------------------------------

def jump_chain_identity(
    model: ModelSpec,
    path: PathRecord,
    suite: Sequence[TestFunction],
    cfg: Optional[IntegratorConfig] = None,
    batches: int = DEFAULT_BATCHES,
    burn_in: float = DEFAULT_BURN_IN,
) -> List[IdentityReport]:
    """m^Z(g) = m(fbar g) / m(fbar) for each test function"""
    fbar = ergodic_average(model, path, lambda y: rate_vector(model, y).sum(axis=-1), cfg, batches, burn_in)
    reports = []
    for g in suite:
        chain = jump_chain_average(path, g, burn_in, batches)
        weighted = ergodic_average(model, path, lambda y, g=g: rate_vector(model, y).sum(axis=-1) * g(y), cfg, batches, burn_in)
        rhs = weighted.mean / fbar.mean
        rse = ratio_se(weighted.mean, weighted.se, fbar.mean, fbar.se)
        se = combined_se(chain.se, rse)
        reports.append(IdentityReport(
            identity=f"jump_chain[{g.name}]",
            lhs=chain.mean,
            rhs=rhs,
            se=se,
            tolerance=_tolerance(se),
            extra={"jumps": chain.n},
        ))
    return reports


def stationarity_residuals(
    model: ModelSpec,
    path: PathRecord,
    suite: Sequence[TestFunction],
    cfg: Optional[IntegratorConfig] = None,
    batches: int = DEFAULT_BATCHES,
    burn_in: float = DEFAULT_BURN_IN,
) -> List[IdentityReport]:
    """m(Lg) = 0 for each test function"""
    reports = []
    for g in suite:
        est = ergodic_average(model, path, lambda y, g=g: apply_generator(model, g, y), cfg, batches, burn_in)
        reports.append(IdentityReport(
            identity=f"stationarity[{g.name}]",
            lhs=est.mean,
            rhs=0.0,
            se=est.se,
            tolerance=_tolerance(est.se),
        ))
    return reports


def jump_count_identity(
    model: ModelSpec,
    path: PathRecord,
    cfg: Optional[IntegratorConfig] = None,
    batches: int = DEFAULT_BATCHES,
    burn_in: float = DEFAULT_BURN_IN,
) -> IdentityReport:
    """m(fbar) = lim N_t / t"""
    fbar = ergodic_average(model, path, lambda y: rate_vector(model, y).sum(axis=-1), cfg, batches, burn_in)
    count = jump_rate(path, burn_in, batches)
    se = combined_se(fbar.se, count.se)
    return IdentityReport(
        identity="jump_count",
        lhs=fbar.mean,
        rhs=count.mean,
        se=se,
        tolerance=_tolerance(se),
        extra={"jumps": count.n},
    )


def unit_representation(
    model: ModelSpec,
    measure: EmpiricalMeasure,
    cfg: Optional[IntegratorConfig] = None,
) -> IdentityReport:
    """representation of g = 1, which must equal 1"""
    return representation_check(model, measure, constant(1.0), cfg, lhs=Estimate(mean=1.0, se=0.0, n=measure.size))
