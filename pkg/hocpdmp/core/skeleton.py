"""
Jump-time skeletons, the derivation matrix sigma and goodness certificates.
"""

import itertools
import logging
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, JumpIndexError
from .flow import _cfg, flow, variational
from .model import jump, jump_jacobian
from .models import (
    DerivationMatrix,
    GoodnessCertificate,
    GoodnessReport,
    IntegratorConfig,
    JumpSchedule,
    ModelSpec,
    SkeletonTrace,
)
from ..utils.constants import (
    FD_ORACLE_STEP,
    GOOD_REL_THRESHOLD,
    GOOD_SAMPLE_BOX,
    GOOD_SAMPLE_COUNT,
    MAX_ENUMERATION_N,
)

logger = logging.getLogger(__name__)

MAX_CORNER_DIMENSION = 12


def _check_indices(model: ModelSpec, indices: Sequence[int]) -> None:
    for i in indices:
        if not 1 <= i <= model.dimension:
            raise JumpIndexError(f"schedule index {i} outside 1..{model.dimension}", module="skeleton")


def skeleton(model: ModelSpec, y, sched: JumpSchedule, cfg: Optional[IntegratorConfig] = None) -> SkeletonTrace:
    """
    Positions along a prescribed schedule:
    x_0 = Delta_{i_0}(y), y_k = gamma_{t_k}(x_{k-1}), x_k = Delta_{i_k}(y_k),
    eta = gamma_{t_{n+1}}(x_n).
    """
    cfg = _cfg(cfg)
    _check_indices(model, sched.indices)
    y = np.asarray(y, dtype=float)
    x = jump(model, sched.indices[0], y)
    post = [x]
    pre = []
    for k in range(1, sched.n + 1):
        yk = flow(model, x, sched.times[k - 1], cfg)
        x = jump(model, sched.indices[k], yk)
        pre.append(yk)
        post.append(x)
    eta = flow(model, x, sched.times[-1], cfg)
    N = model.dimension
    return SkeletonTrace(
        start=y.copy(),
        post_states=np.array(post).reshape(-1, N),
        pre_states=np.array(pre).reshape(-1, N),
        endpoint=eta,
    )


def _decompose(model: ModelSpec, y, sched: JumpSchedule, cfg: IntegratorConfig):
    """Skeleton plus the factors Y_{t_{k+1}}(x_k) (k = 0..n) and A^{i_k}(y_k) (k = 1..n)"""
    trace = skeleton(model, y, sched, cfg)
    Ys = [variational(model, trace.post_states[k], sched.times[k], cfg)[0] for k in range(sched.n + 1)]
    As = [jump_jacobian(model, sched.indices[k], trace.pre_states[k - 1]) for k in range(1, sched.n + 1)]
    return trace, Ys, As


def derivation_matrix(
    model: ModelSpec,
    y,
    sched: JumpSchedule,
    cfg: Optional[IntegratorConfig] = None,
    order: str = "left_to_right",
) -> DerivationMatrix:
    """
    sigma = d eta / d(t_1, ..., t_{n+1}), an N x (n+1) matrix.

    Column k <= n is Y_{t_{n+1}}(x_n) A^{i_n}(y_n) ... Y_{t_{k+1}}(x_k) A^{i_k}(y_k) b(y_k);
    column n+1 is b(eta).

    Args:
        order: "left_to_right" accumulates the matrix prefix in one backward
            sweep; "right_to_left" pushes each b(y_k) through the later
            factors one matrix-vector product at a time
    """
    cfg = _cfg(cfg)
    trace, Ys, As = _decompose(model, y, sched, cfg)
    n = sched.n
    N = model.dimension
    sigma = np.empty((N, n + 1))
    sigma[:, n] = model.drift(trace.endpoint)
    drifts = [model.drift(trace.pre_states[k - 1]) for k in range(1, n + 1)]
    if order == "left_to_right":
        P = Ys[n]
        for k in range(n, 0, -1):
            P = P @ As[k - 1]
            sigma[:, k - 1] = P @ drifts[k - 1]
            P = P @ Ys[k - 1]
    elif order == "right_to_left":
        for k in range(1, n + 1):
            v = As[k - 1] @ drifts[k - 1]
            for m in range(k, n):
                v = As[m] @ (Ys[m] @ v)
            sigma[:, k - 1] = Ys[n] @ v
    else:
        raise ValueError(f"Unknown accumulation order: {order!r}")
    return DerivationMatrix(sigma=sigma, singular_values=np.linalg.svd(sigma, compute_uv=False))


def fd_derivation_matrix(
    model: ModelSpec,
    y,
    sched: JumpSchedule,
    cfg: Optional[IntegratorConfig] = None,
    step: float = FD_ORACLE_STEP,
) -> np.ndarray:
    """Finite-difference sigma: central in each t_k, forward where t_k < step"""
    cfg = _cfg(cfg)
    times = np.array(sched.times)
    cols = []
    for k in range(len(times)):
        up = times.copy()
        up[k] += step
        eta_up = skeleton(model, y, sched.with_times(up), cfg).endpoint
        if times[k] >= step:
            down = times.copy()
            down[k] -= step
            eta_down = skeleton(model, y, sched.with_times(down), cfg).endpoint
            cols.append((eta_up - eta_down) / (2 * step))
        else:
            eta = skeleton(model, y, sched, cfg).endpoint
            cols.append((eta_up - eta) / step)
    return np.stack(cols, axis=-1)


def zero_time_fields(model: ModelSpec, y, indices: Sequence[int]) -> List[np.ndarray]:
    """
    V_1 = b(xbar_n), V_2 = A^{i_n}(xbar_{n-1}) b(xbar_{n-1}), ...,
    V_{n+1} = A^{i_n}(xbar_{n-1}) ... A^{i_1}(xbar_0) b(xbar_0),
    with xbar_k = Delta_{i_k} o ... o Delta_{i_0}(y).
    """
    _check_indices(model, indices)
    xbar = [jump(model, indices[0], np.asarray(y, dtype=float))]
    for i in indices[1:]:
        xbar.append(jump(model, i, xbar[-1]))
    n = len(indices) - 1
    fields = [model.drift(xbar[n])]
    P = np.eye(model.dimension)
    for k in range(n, 0, -1):
        P = P @ jump_jacobian(model, indices[k], xbar[k - 1])
        fields.append(P @ model.drift(xbar[k - 1]))
    return fields


def default_threshold(dm: DerivationMatrix) -> float:
    top = float(dm.singular_values[0]) if len(dm.singular_values) else 0.0
    return GOOD_REL_THRESHOLD * top


def is_good(
    model: ModelSpec,
    y,
    sched: JumpSchedule,
    cfg: Optional[IntegratorConfig] = None,
    threshold: Optional[float] = None,
) -> GoodnessReport:
    """
    good iff the smallest singular value of sigma exceeds the threshold
    (default 1e-8 * ||sigma||_2). A nonpositive threshold reports not good.
    """
    dm = derivation_matrix(model, y, sched, cfg)
    thr = default_threshold(dm) if threshold is None else float(threshold)
    smin = dm.min_singular_value
    if not thr > 0:
        if threshold is not None:
            logger.warning(f"Goodness threshold {thr} is not positive; reporting not good")
        return GoodnessReport(good=False, min_singular_value=smin, det_gram=dm.det_gram, threshold=thr)
    return GoodnessReport(good=bool(smin > thr), min_singular_value=smin, det_gram=dm.det_gram, threshold=thr)


def certify_goodness(
    model: ModelSpec,
    sched: JumpSchedule,
    cfg: Optional[IntegratorConfig] = None,
    box: float = GOOD_SAMPLE_BOX,
    samples: int = GOOD_SAMPLE_COUNT,
    seed: int = 0,
    threshold: Optional[float] = None,
) -> GoodnessCertificate:
    """
    Sampled check of 'good for all y': uniform draws in [-box, box]^N plus
    the box corners. Reports the worst smallest singular value; a
    certificate of non-refutation only.
    """
    N = model.dimension
    rng = np.random.default_rng(seed)
    ys = [rng.uniform(-box, box, size=N) for _ in range(samples)]
    if N <= MAX_CORNER_DIMENSION:
        ys.extend(np.array(c, dtype=float) for c in itertools.product((-box, box), repeat=N))
    worst_y = None
    worst_sv = np.inf
    worst_thr = 0.0
    for y in ys:
        report = is_good(model, y, sched, cfg, threshold)
        if report.min_singular_value - report.threshold < worst_sv - worst_thr or worst_y is None:
            worst_sv, worst_thr, worst_y = report.min_singular_value, report.threshold, y
    cert = GoodnessCertificate(
        indices=tuple(sched.indices),
        times=tuple(sched.times),
        worst_y=[float(v) for v in worst_y],
        min_sv=float(worst_sv),
        threshold=float(worst_thr),
        samples=len(ys),
        box=float(box),
    )
    if cert.verdict != "good":
        logger.warning(f"Schedule {sched.indices} refuted at y={cert.worst_y}: min sv {cert.min_sv:.3e}")
    else:
        logger.info(f"Schedule {sched.indices} not refuted on {len(ys)} states, worst min sv {cert.min_sv:.3e}")
    return cert


def enumerate_good_sequences(
    model: ModelSpec,
    y,
    times: Sequence[float],
    cfg: Optional[IntegratorConfig] = None,
    index_set: Optional[Sequence[int]] = None,
    threshold: Optional[float] = None,
) -> List[dict]:
    """
    Goodness of every index sequence (i_0, ..., i_n) drawn from index_set,
    for the given times t_1..t_{n+1}. Limited to N <= 6.
    """
    if model.dimension > MAX_ENUMERATION_N:
        raise ConfigError(f"enumeration is limited to N <= {MAX_ENUMERATION_N}, got N={model.dimension}")
    pool = sorted(set(index_set)) if index_set else list(range(1, model.dimension + 1))
    _check_indices(model, pool)
    rows = []
    for idx in itertools.product(pool, repeat=len(times)):
        report = is_good(model, y, JumpSchedule(times=tuple(times), indices=idx), cfg, threshold)
        rows.append({
            "indices": list(idx),
            "min_sv": report.min_singular_value,
            "det_gram": report.det_gram,
            "threshold": report.threshold,
            "good": report.good,
        })
    logger.info(f"Enumerated {len(rows)} sequences, {sum(r['good'] for r in rows)} good")
    return rows


def neuron_det_closed_form(lam: float, v_star: float, times: Sequence[float]) -> float:
    """
    det sigma for the neuron model with indices (1, ..., N) and n + 1 = N:
    lam^N v*^N prod_k exp(-lam (s_N - s_{k-1})).
    """
    times = np.asarray(times, dtype=float)
    N = len(times)
    s = np.concatenate([[0.0], np.cumsum(times)])
    return float((lam * v_star) ** N * np.exp(-lam * np.sum(s[N] - s[:N])))
