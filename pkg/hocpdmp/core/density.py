"""
Invariant-measure estimation, grid densities, the marginal-regularity
region and the regularity-threshold calculator.
"""

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import InsufficientSamplesError, ModelValidationError, RegionError
from .flow import _cfg, march
from .model import jump, rate_vector
from .models import (
    EmpiricalMeasure,
    GridDensity,
    IntegratorConfig,
    ModelSpec,
    NonInteractingSpec,
    PathRecord,
    RegionSpec,
    SimulationConfig,
    ThresholdResult,
)
from .simulate import burn_in_index, burn_in_time, simulate_paths, state_at
from ..utils.constants import DEFAULT_BURN_IN

logger = logging.getLogger(__name__)

REPRESENTATION_CHUNK = 2000


# ---------------------------------------------------------------------------
# Empirical measures
# ---------------------------------------------------------------------------

def sample_path(
    model: ModelSpec,
    path: PathRecord,
    stride: float,
    burn_in: float = DEFAULT_BURN_IN,
    cfg: Optional[IntegratorConfig] = None,
) -> np.ndarray:
    """States at t_b, t_b + stride, ... <= T, t_b the burn-in time"""
    t0 = burn_in_time(path, burn_in)
    times = np.arange(t0, path.final_time + 1e-12, stride)
    if len(times) == 0:
        return np.zeros((0, model.dimension))
    return state_at(model, path, times, cfg)


def measure_from_paths(
    model: ModelSpec,
    paths: Sequence[PathRecord],
    sim: SimulationConfig,
    cfg: Optional[IntegratorConfig] = None,
    provenance: str = "time",
    config_hash: str = "",
) -> EmpiricalMeasure:
    """
    Equal-weight samples from recorded paths: time-sampled states (targets m)
    or post-burn-in jump-chain states (targets m^Z).
    """
    if provenance == "time":
        chunks = [sample_path(model, p, sim.stride, sim.burn_in, cfg) for p in paths]
    elif provenance == "jump_chain":
        chunks = [p.pre_states[burn_in_index(p, sim.burn_in):] for p in paths]
    else:
        raise ValueError(f"Unknown provenance: {provenance!r}. Valid: ['time', 'jump_chain']")
    samples = np.concatenate(chunks) if chunks else np.zeros((0, model.dimension))
    if len(samples) < 2:
        raise InsufficientSamplesError(
            f"only {len(samples)} samples collected; increase the horizon or reduce the stride",
            module="density",
        )
    return EmpiricalMeasure.uniform(samples, provenance=provenance, config_hash=config_hash)


def estimate_invariant(
    model: ModelSpec,
    x0,
    sim: SimulationConfig,
    seed: int,
    cfg: Optional[IntegratorConfig] = None,
    workers: int = 1,
    provenance: str = "time",
    config_hash: str = "",
) -> EmpiricalMeasure:
    """
    Simulate sim.paths paths to sim.horizon and sample them at fixed stride
    after burn-in (or along the jump chain).

    Raises:
        InsufficientSamplesError: fewer than 2 samples
    """
    if sim.horizon is None:
        raise InsufficientSamplesError("invariant-measure estimation needs a horizon", module="density")
    paths = simulate_paths(model, x0, seed, sim.paths, cfg, horizon=sim.horizon, max_jumps=sim.max_jumps, workers=workers)
    measure = measure_from_paths(model, paths, sim, cfg, provenance, config_hash)
    logger.info(f"Estimated invariant measure ({provenance}) from {measure.size} samples")
    return measure


# ---------------------------------------------------------------------------
# Grid densities
# ---------------------------------------------------------------------------

def histogram_density(
    measure: EmpiricalMeasure,
    coord: int = 1,
    bins="fd",
    value_range: Optional[Tuple[float, float]] = None,
) -> GridDensity:
    """1D marginal histogram of coordinate `coord` (1-based); Freedman-Diaconis bins by default"""
    data = measure.samples[:, coord - 1]
    edges = np.histogram_bin_edges(data, bins=bins, range=value_range)
    values, edges = np.histogram(data, bins=edges, weights=measure.weights, density=True)
    return GridDensity(edges=[edges], values=values, method="histogram")


def histogram_density_2d(
    measure: EmpiricalMeasure,
    coords: Tuple[int, int] = (1, 2),
    bins: int = 50,
) -> GridDensity:
    x = measure.samples[:, coords[0] - 1]
    y = measure.samples[:, coords[1] - 1]
    values, ex, ey = np.histogram2d(x, y, bins=bins, weights=measure.weights, density=True)
    return GridDensity(edges=[ex, ey], values=values, method="histogram")


def kde_density(
    measure: EmpiricalMeasure,
    coord: int = 1,
    cells: int = 256,
    value_range: Optional[Tuple[float, float]] = None,
) -> GridDensity:
    """
    Gaussian-kernel estimate of a 1D marginal with Silverman's bandwidth,
    evaluated at cell centres and renormalised on the grid.
    """
    data = measure.samples[:, coord - 1]
    if np.ptp(data) == 0:
        raise InsufficientSamplesError("KDE needs non-degenerate samples", module="density")
    kde = stats.gaussian_kde(data, bw_method="silverman", weights=measure.weights)
    bandwidth = float(math.sqrt(kde.covariance[0, 0]))
    if value_range is None:
        pad = 3.0 * bandwidth
        value_range = (float(data.min()) - pad, float(data.max()) + pad)
    edges = np.linspace(value_range[0], value_range[1], cells + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    values = kde(centers)
    total = values.sum() * (edges[1] - edges[0])
    if total > 0:
        values = values / total
    return GridDensity(edges=[edges], values=values, method="kde", bandwidth=bandwidth)


# ---------------------------------------------------------------------------
# Region, threshold and smoothness probe
# ---------------------------------------------------------------------------

def region_spec(spec: NonInteractingSpec, d: float, k: int, A: Optional[float] = None) -> RegionSpec:
    """S_{d,k+2} of a non-interacting spec; warns when d <= (k+2) A B"""
    if d <= 0 or k < 0:
        raise RegionError(f"region needs d > 0 and k >= 0, got d={d}, k={k}")
    region = RegionSpec(d=float(d), k=int(k), A=float(spec.A if A is None else A), drift=spec.drift)
    if not region.admissible_for(spec.B):
        logger.warning(
            f"Region d={d} does not exceed (k+2)AB={(k + 2) * region.A * spec.B:g}: regularity claims do not apply"
        )
    return region


def regularity_threshold(N: int, f0: float, B: float) -> ThresholdResult:
    """
    k* = largest integer with B k* < N f0 - (N - 1) B.

    Raises:
        ModelValidationError: B <= 0, N < 1 or f0 < 0
    """
    if B <= 0:
        raise ModelValidationError(f"B must be positive, got {B}", module="density", invariant="B > 0")
    if N < 1 or f0 < 0:
        raise ModelValidationError(f"need N >= 1 and f0 >= 0, got N={N}, f0={f0}", module="density")
    bound = N * f0 / B - (N - 1)
    nearest = round(bound)
    if abs(bound - nearest) <= 1e-12 * max(1.0, abs(bound)):
        bound = float(nearest)
    k_star = math.ceil(bound) - 1
    if f0 == 0:
        logger.warning("Rate floor f0 = 0: no regularity guarantee")
        return ThresholdResult(k_star=None, guaranteed=False, bound=bound, note="no guarantee: rate floor is 0")
    if k_star < 0:
        return ThresholdResult(k_star=None, guaranteed=False, bound=bound, note="N f0 <= (N-1) B")
    return ThresholdResult(k_star=int(k_star), guaranteed=True, bound=bound)


def smoothness_probe(gd: GridDensity, region: RegionSpec, order: int) -> Dict[int, float]:
    """
    Suprema of |order-m finite differences| (m = 1..order) of a 1D grid
    density over stencils lying entirely inside the region. Diagnostic only.

    Raises:
        RegionError: the region has fewer than 4 * order grid points
    """
    if len(gd.edges) != 1:
        raise RegionError("smoothness probe works on 1D marginals")
    centers = gd.centers[0]
    h = float(centers[1] - centers[0])
    inside = np.asarray(region.contains(centers), dtype=bool)
    if inside.sum() == 0:
        raise RegionError(f"region S_(d={region.d}, k+2={region.k + 2}) is empty on the grid")
    if inside.sum() < 4 * order:
        raise RegionError(f"grid too coarse: {int(inside.sum())} points inside the region, need {4 * order}")
    out = {}
    for m in range(1, order + 1):
        diffs = np.diff(gd.values, n=m) / h ** m
        windows = np.lib.stride_tricks.sliding_window_view(inside, m + 1).all(axis=-1)
        out[m] = float(np.max(np.abs(diffs[windows]))) if windows.any() else float("nan")
    return out


# ---------------------------------------------------------------------------
# Flow-time representation of the first marginal
# ---------------------------------------------------------------------------

def marginal_density_representation(
    model: ModelSpec,
    measure: EmpiricalMeasure,
    s_grid,
    cfg: Optional[IntegratorConfig] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Density of the first coordinate at s from the flow-time representation
    phi(s) = sum_i E_m[f_i(x) e(Delta_i(x), tau_i(s)) / |b~(s)|], tau_i(s)
    the time for the scalar flow from Delta_i(x)^1 to reach s (terms where s
    is not ahead along the flow vanish).

    Returns:
        Tuple of (values, standard errors) on s_grid
    """
    cfg = _cfg(cfg)
    spec = model.scalar_spec
    if spec is None:
        raise ModelValidationError("marginal representation needs a non-interacting model", module="density")
    s_grid = np.asarray(s_grid, dtype=float)
    x = measure.samples
    M = len(x)
    rates = rate_vector(model, x)
    per_sample = np.zeros((M, len(s_grid)))
    for lo in range(0, M, REPRESENTATION_CHUNK):
        rows = slice(lo, min(M, lo + REPRESENTATION_CHUNK))
        for i in range(1, model.dimension + 1):
            coord, lam = [], []
            for _, states, cum in march(model, jump(model, i, x[rows]), cfg):
                coord.append(states[:, 0].copy())
                lam.append(cum.copy())
            coord = np.array(coord).T
            lam = np.array(lam).T
            for r in range(len(coord)):
                c = coord[r]
                if c[-1] == c[0]:
                    continue
                xs, ls = (c, lam[r]) if c[-1] > c[0] else (c[::-1], lam[r][::-1])
                ok = (s_grid >= xs[0]) & (s_grid <= xs[-1])
                if ok.any():
                    per_sample[lo + r, ok] += rates[lo + r, i - 1] * np.exp(-np.interp(s_grid[ok], xs, ls))
    per_sample /= np.abs(spec.drift(s_grid))[None, :]
    mean = measure.weights @ per_sample
    n_eff = 1.0 / float(np.sum(measure.weights ** 2))
    var = measure.weights @ (per_sample - mean) ** 2
    se = np.sqrt(var / max(n_eff - 1.0, 1.0))
    return mean, se
