"""
Trajectory simulation by thinning, path reconstruction and ergodic estimators.
"""

import logging
import math
from multiprocessing import Pool
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, InsufficientSamplesError, ThinningTimeoutError
from .flow import _cfg, flow, flow_grid, rk4_step
from .model import jump, model_from_description, rate_vector
from .models import Estimate, IntegratorConfig, JumpEvent, ModelSpec, PathRecord, RngSpec
from ..utils.constants import BISECTION_MAX_ITER, DEFAULT_BATCHES, DEFAULT_BURN_IN
from ..utils.stats import MergeableEstimate, batch_means, weighted_batch_se

logger = logging.getLogger(__name__)

# Upper bound on flow evaluations held in memory by the path quadrature
MAX_POINTS_PER_CHUNK = 1_000_000

ScalarFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def next_jump(
    model: ModelSpec,
    x,
    rng: np.random.Generator,
    cfg: Optional[IntegratorConfig] = None,
    horizon: Optional[float] = None,
) -> Optional[JumpEvent]:
    """
    Sample the next jump from x by thinning.

    Candidates arrive at rate N * rate_bound; the flow is advanced from one
    candidate to the next and a candidate at state y is accepted with
    probability f_bar(y) / (N * rate_bound), the index drawn proportional
    to f_i(y) from the same uniform.

    Args:
        model: The PDMP
        x: Start state
        rng: numpy Generator (one stream per path)
        cfg: Integrator settings; max_time bounds the search
        horizon: Optional time budget; None is returned if no jump occurs before it

    Returns:
        JumpEvent, or None when the horizon passes without a jump

    Raises:
        ThinningTimeoutError: no acceptance before cfg.max_time
        RateBoundError: a rate exceeds the declared bound along the flow
    """
    cfg = _cfg(cfg)
    bound = model.dimension * model.rate_bound
    state = np.asarray(x, dtype=float)
    s = 0.0
    proposals = 0
    while True:
        ds = rng.exponential(1.0 / bound)
        u = rng.random() * bound
        if horizon is not None and s + ds > horizon:
            return None
        if s + ds > cfg.max_time:
            raise ThinningTimeoutError(
                f"no jump accepted within max_time={cfg.max_time} after {proposals} proposals",
                invariant="jump before max_time",
            )
        state = flow(model, state, ds, cfg)
        s += ds
        proposals += 1
        cum = np.cumsum(rate_vector(model, state))
        if u < cum[-1]:
            i = int(np.searchsorted(cum, u, side="right")) + 1
            return JumpEvent(tau=s, index=min(i, model.dimension), pre_state=state, proposals=proposals)


def next_jump_inversion(
    model: ModelSpec,
    x,
    rng: np.random.Generator,
    cfg: Optional[IntegratorConfig] = None,
    horizon: Optional[float] = None,
) -> Optional[JumpEvent]:
    """
    Sample the next jump by inverting Lambda(t) = -log U.

    Lambda is accumulated by the trapezoid rule on the step grid; the
    crossing inside the last step is located by bisection on a partial step.
    Cross-check for next_jump; inherits the quadrature error.
    """
    cfg = _cfg(cfg)
    target = -math.log(1.0 - rng.random())
    h = cfg.step
    state = np.asarray(x, dtype=float)
    rate = float(rate_vector(model, state).sum())
    lam = 0.0
    t = 0.0

    def advance(y, dt):
        if cfg.method == "auto" and model.exact_flow is not None:
            return model.exact_flow(y, dt)
        return rk4_step(model.drift, y, dt)

    while True:
        if horizon is not None and t >= horizon:
            return None
        if t >= cfg.max_time:
            raise ThinningTimeoutError(
                f"integrated rate stayed below {target:.3g} up to max_time={cfg.max_time}",
                invariant="jump before max_time",
            )
        nxt = advance(state, h)
        nxt_rate = float(rate_vector(model, nxt).sum())
        inc = 0.5 * h * (rate + nxt_rate)
        if lam + inc >= target:
            lo, hi = 0.0, h
            for _ in range(BISECTION_MAX_ITER):
                mid = 0.5 * (lo + hi)
                part = advance(state, mid)
                val = lam + 0.5 * mid * (rate + float(rate_vector(model, part).sum()))
                if val < target:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-14:
                    break
            tau = t + hi
            if horizon is not None and tau > horizon:
                return None
            pre = advance(state, hi)
            cum = np.cumsum(rate_vector(model, pre))
            i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right")) + 1
            return JumpEvent(tau=tau, index=min(i, model.dimension), pre_state=pre)
        state, rate, lam, t = nxt, nxt_rate, lam + inc, t + h


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

def simulate_path(
    model: ModelSpec,
    x0,
    rng: RngSpec,
    cfg: Optional[IntegratorConfig] = None,
    horizon: Optional[float] = None,
    max_jumps: Optional[int] = None,
) -> PathRecord:
    """
    Simulate one trajectory.

    With a horizon the path always ends at T = horizon; a jump cap reached
    earlier lets the state flow without further jumps up to T. With only a
    jump cap the path ends at the last jump.
    """
    cfg = _cfg(cfg)
    if horizon is None and max_jumps is None:
        raise ConfigError("simulate_path needs a horizon or a jump count")
    gen = rng.generator()
    x = np.asarray(x0, dtype=float).copy()
    times: List[float] = []
    indices: List[int] = []
    pre: List[np.ndarray] = []
    post: List[np.ndarray] = []
    t = 0.0
    proposals = 0
    while max_jumps is None or len(times) < max_jumps:
        remaining = None if horizon is None else horizon - t
        event = next_jump(model, x, gen, cfg, horizon=remaining)
        if event is None:
            break
        t += event.tau
        proposals += event.proposals
        x = jump(model, event.index, event.pre_state)
        times.append(t)
        indices.append(event.index)
        pre.append(event.pre_state)
        post.append(x)
    if horizon is not None:
        x = flow(model, x, horizon - t, cfg)
        final_time = float(horizon)
    else:
        final_time = t
    N = model.dimension
    record = PathRecord(
        times=np.array(times, dtype=float),
        indices=np.array(indices, dtype=int),
        pre_states=np.array(pre, dtype=float).reshape(-1, N),
        post_states=np.array(post, dtype=float).reshape(-1, N),
        x0=np.asarray(x0, dtype=float).copy(),
        final_time=final_time,
        final_state=x,
        seed=rng.seed,
        stream=rng.stream,
    )
    logger.debug(
        f"Path seed={rng.seed} stream={rng.stream}: {record.n_jumps} jumps, "
        f"{proposals} proposals, T={final_time:g}"
    )
    return record


def _simulate_worker(task):
    desc, x0, seed, stream, cfg_dict, horizon, max_jumps = task
    model = model_from_description(desc)
    return simulate_path(model, x0, RngSpec(seed, stream), IntegratorConfig(**cfg_dict), horizon, max_jumps)


def simulate_paths(
    model: ModelSpec,
    x0,
    seed: int,
    paths: int,
    cfg: Optional[IntegratorConfig] = None,
    horizon: Optional[float] = None,
    max_jumps: Optional[int] = None,
    workers: int = 1,
) -> List[PathRecord]:
    """
    Independent paths on streams 0..paths-1 of one seed, sorted by stream.

    workers > 1 uses a process pool; the model is rebuilt in each worker
    from its description, so programmatic models without one run serially.
    """
    cfg = _cfg(cfg)
    if workers > 1 and model.description is None:
        logger.warning(f"Model '{model.name}' has no description; simulating {paths} paths serially")
        workers = 1
    if workers > 1 and paths > 1:
        tasks = [
            (model.description, np.asarray(x0, dtype=float), seed, k, cfg.to_dict(), horizon, max_jumps)
            for k in range(paths)
        ]
        with Pool(processes=min(workers, paths)) as pool:
            records = pool.map(_simulate_worker, tasks)
    else:
        records = [simulate_path(model, x0, RngSpec(seed, k), cfg, horizon, max_jumps) for k in range(paths)]
    logger.info(f"Simulated {paths} path(s), {sum(r.n_jumps for r in records)} jumps in total")
    return sorted(records, key=lambda r: r.stream)


def state_at(model: ModelSpec, path: PathRecord, times, cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """X_t reconstructed from a PathRecord at each requested time (right-continuous)"""
    cfg = _cfg(cfg)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(times > path.final_time + 1e-12):
        raise ValueError(f"times must lie in [0, {path.final_time}]")
    k = np.searchsorted(path.times, times, side="right")
    bases = np.vstack([path.x0[None, :], path.post_states])[k]
    starts = np.concatenate([[0.0], path.times])[k]
    return _flow_many(model, bases, times - starts, cfg)


def _flow_many(model: ModelSpec, bases: np.ndarray, offsets: np.ndarray, cfg: IntegratorConfig) -> np.ndarray:
    if cfg.method == "auto" and model.exact_flow is not None:
        return model.exact_flow(bases, offsets)
    out = np.empty_like(bases)
    for r in range(len(bases)):
        out[r] = flow(model, bases[r], float(offsets[r]), cfg)
    return out


# ---------------------------------------------------------------------------
# Generator and ergodic estimators
# ---------------------------------------------------------------------------

def _gradient(g, x: np.ndarray) -> np.ndarray:
    if hasattr(g, "gradient"):
        return g.gradient(x)
    N = x.shape[-1]
    out = np.empty(x.shape)
    for k in range(N):
        h = 1e-6 * np.maximum(1.0, np.abs(x[..., k]))
        e = np.zeros(N)
        e[k] = 1.0
        out[..., k] = (g(x + h[..., None] * e) - g(x - h[..., None] * e)) / (2 * h)
    return out


def apply_generator(model: ModelSpec, g, x) -> np.ndarray:
    """
    Lg(x) = sum_i f_i(x) [g(Delta_i(x)) - g(x)] + <grad g(x), b(x)>.
    Vectorized over leading axes of x; the gradient is finite-differenced
    when g does not supply one.
    """
    x = np.asarray(x, dtype=float)
    rates = rate_vector(model, x)
    gx = g(x)
    out = np.sum(_gradient(g, x) * model.drift(x), axis=-1)
    for i in range(1, model.dimension + 1):
        out = out + rates[..., i - 1] * (g(jump(model, i, x)) - gx)
    return out


def generator_short_time(
    model: ModelSpec,
    g,
    x,
    h: float,
    paths: int,
    seed: int,
    cfg: Optional[IntegratorConfig] = None,
) -> Estimate:
    """Monte Carlo semigroup derivative (E[g(X_h)] - g(x)) / h"""
    finals = np.array([
        simulate_path(model, x, RngSpec(seed, k), cfg, horizon=h).final_state for k in range(paths)
    ])
    diffs = (g(finals) - g(np.asarray(x, dtype=float))) / h
    return Estimate(mean=float(diffs.mean()), se=float(diffs.std(ddof=1) / math.sqrt(paths)), n=paths)


def burn_in_index(path: PathRecord, fraction: float = DEFAULT_BURN_IN) -> int:
    """Number of leading jumps discarded as burn-in"""
    return int(math.floor(fraction * path.n_jumps))


def burn_in_time(path: PathRecord, fraction: float = DEFAULT_BURN_IN) -> float:
    k0 = burn_in_index(path, fraction)
    return float(path.times[k0 - 1]) if k0 > 0 else 0.0


def _pieces(path: PathRecord, t0: float, edges: np.ndarray):
    """Cut [t0, T] at jump times and batch edges: (segment, start, length, batch)"""
    T = path.final_time
    inside = path.times[(path.times > t0) & (path.times < T)]
    cuts = np.unique(np.concatenate([edges, inside]))
    starts = cuts[:-1]
    lengths = np.diff(cuts)
    keep = lengths > 0
    starts, lengths = starts[keep], lengths[keep]
    segment = np.searchsorted(path.times, starts, side="right")
    batch = np.clip(np.searchsorted(edges, starts, side="right") - 1, 0, len(edges) - 2)
    return segment, starts, lengths, batch


def path_integrals(
    model: ModelSpec,
    path: PathRecord,
    g: ScalarFn,
    t0: float,
    batches: int,
    cfg: Optional[IntegratorConfig] = None,
) -> np.ndarray:
    """
    int g(X_s) ds over each of `batches` equal time windows of [t0, T].

    Each inter-jump flow piece is integrated by the trapezoid rule on a grid
    no coarser than cfg.quad_step.
    """
    cfg = _cfg(cfg)
    edges = np.linspace(t0, path.final_time, batches + 1)
    segment, starts, lengths, batch = _pieces(path, t0, edges)
    bases = np.vstack([path.x0[None, :], path.post_states])
    seg_start = np.concatenate([[0.0], path.times])
    m = np.maximum(1, np.ceil(lengths / cfg.quad_step - 1e-9).astype(int))
    out = np.zeros(batches)
    exact = cfg.method == "auto" and model.exact_flow is not None
    lo = 0
    while lo < len(starts):
        hi = lo
        points = 0
        while hi < len(starts) and (points + m[hi] + 1 <= MAX_POINTS_PER_CHUNK or hi == lo):
            points += m[hi] + 1
            hi += 1
        if exact:
            mm = m[lo:hi]
            piece = np.repeat(np.arange(lo, hi), mm + 1)
            k = np.arange(points) - np.repeat(np.cumsum(mm + 1) - (mm + 1), mm + 1)
            offsets = starts[piece] - seg_start[segment[piece]] + k * (lengths[piece] / m[piece])
            vals = np.asarray(g(model.exact_flow(bases[segment[piece]], offsets)), dtype=float)
            w = np.where((k == 0) | (k == m[piece]), 0.5, 1.0) * lengths[piece] / m[piece]
            np.add.at(out, batch[piece], w * vals)
        else:
            for p in range(lo, hi):
                y0 = flow(model, bases[segment[p]], float(starts[p] - seg_start[segment[p]]), cfg)
                _, states = flow_grid(model, y0, float(lengths[p]), cfg, grid_step=float(lengths[p] / m[p]))
                vals = np.asarray(g(states), dtype=float)
                h = lengths[p] / m[p]
                out[batch[p]] += h * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
        lo = hi
    return out


def ergodic_average(
    model: ModelSpec,
    path: PathRecord,
    g: ScalarFn,
    cfg: Optional[IntegratorConfig] = None,
    batches: int = DEFAULT_BATCHES,
    burn_in: float = DEFAULT_BURN_IN,
) -> Estimate:
    """
    Time average (1/T) int g(X_s) ds after burn-in, with batch-means SE.

    Raises:
        InsufficientSamplesError: zero averaging window
    """
    t0 = burn_in_time(path, burn_in)
    length = path.final_time - t0
    if length <= 0:
        raise InsufficientSamplesError("ergodic average needs a positive time window (T=0)", module="simulate")
    integrals = path_integrals(model, path, g, t0, batches, cfg)
    batch_means = integrals / (length / batches)
    return Estimate(mean=float(integrals.sum() / length), se=weighted_batch_se(batch_means), n=batches)


def jump_chain_average(
    path: PathRecord,
    g: ScalarFn,
    burn_in: float = DEFAULT_BURN_IN,
    batches: int = DEFAULT_BATCHES,
) -> Estimate:
    """Mean of g over the jump chain Z_k (pre-jump states) after burn-in"""
    k0 = burn_in_index(path, burn_in)
    z = path.pre_states[k0:]
    if len(z) < 2:
        raise InsufficientSamplesError(
            f"jump chain average needs at least 2 jumps after burn-in, got {len(z)}", module="simulate"
        )
    values = np.asarray(g(z), dtype=float)
    mean, se = batch_means(values, batches)
    return Estimate(mean=mean, se=se, n=len(values))


def jump_rate(path: PathRecord, burn_in: float = DEFAULT_BURN_IN, batches: int = DEFAULT_BATCHES) -> Estimate:
    """N_t / t after burn-in, with batch-means SE over equal time windows"""
    t0 = burn_in_time(path, burn_in)
    length = path.final_time - t0
    if length <= 0:
        raise InsufficientSamplesError("jump rate needs a positive time window", module="simulate")
    edges = np.linspace(t0, path.final_time, batches + 1)
    counts, _ = np.histogram(path.times[path.times > t0], bins=edges)
    rates = counts / (length / batches)
    return Estimate(mean=float(counts.sum() / length), se=weighted_batch_se(rates), n=int(counts.sum()))


def pooled_ergodic_average(
    model: ModelSpec,
    paths: Sequence[PathRecord],
    g: ScalarFn,
    cfg: Optional[IntegratorConfig] = None,
    batches: int = DEFAULT_BATCHES,
    burn_in: float = DEFAULT_BURN_IN,
) -> MergeableEstimate:
    """Batch means of every path merged by stream id; the result ignores path order"""
    est = MergeableEstimate()
    for path in paths:
        t0 = burn_in_time(path, burn_in)
        length = path.final_time - t0
        if length <= 0:
            raise InsufficientSamplesError("every path needs a positive averaging window", module="simulate")
        integrals = path_integrals(model, path, g, t0, batches, cfg)
        est = est.merge(MergeableEstimate().add(path.stream, integrals / (length / batches)))
    return est

