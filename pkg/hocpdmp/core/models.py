"""
Data models for hocpdmp
"""

from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ModelValidationError
from ..utils.constants import (
    DEFAULT_STEP,
    DEFAULT_QUAD_STEP,
    DEFAULT_MAX_TIME,
    DEFAULT_TRUNC_EPS,
    DEFAULT_BATCHES,
    DEFAULT_BURN_IN,
    DEFAULT_STRIDE,
)

ArrayFn = Callable[[np.ndarray], np.ndarray]


class RateKind(str, Enum):
    """Scalar jump-rate families accepted in model description files"""
    CONSTANT = "constant"
    SIGMOID = "sigmoid"
    AFFINE_CLIPPED = "affine_clipped"
    POLYNOMIAL_CLIPPED = "polynomial_clipped"

    @classmethod
    def get_description(cls, kind: 'RateKind') -> str:
        """Get human-readable description for a rate kind"""
        descriptions = {
            cls.CONSTANT: "f(v) = value",
            cls.SIGMOID: "f(v) = floor + (bound - floor) * expit(slope * (v - threshold))",
            cls.AFFINE_CLIPPED: "f(v) = clip(intercept + slope * v, floor, bound)",
            cls.POLYNOMIAL_CLIPPED: "f(v) = clip(c0 + c1 v + c2 v^2 + ..., floor, bound)",
        }
        return descriptions.get(kind, "")


@dataclass(frozen=True)
class RateFunction:
    """
    Scalar rate f(v) >= 0 with a declared upper bound and floor.
    Vectorized over numpy arrays.
    """
    kind: RateKind
    bound: float
    floor: float = 0.0
    params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", RateKind(self.kind))
        if not np.isfinite(self.bound) or self.bound <= 0:
            raise ModelValidationError(f"rate bound must be positive and finite, got {self.bound}")
        if self.floor < 0 or self.floor > self.bound:
            raise ModelValidationError(f"rate floor must lie in [0, bound], got {self.floor}")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        p = self.params
        if self.kind == RateKind.CONSTANT:
            return np.full_like(v, float(p.get("value", self.bound)))
        if self.kind == RateKind.SIGMOID:
            slope = float(p.get("slope", 1.0))
            threshold = float(p.get("threshold", 0.0))
            return self.floor + (self.bound - self.floor) * expit(slope * (v - threshold))
        if self.kind == RateKind.AFFINE_CLIPPED:
            raw = float(p.get("intercept", 0.0)) + float(p.get("slope", 0.0)) * v
            return np.clip(raw, self.floor, self.bound)
        coeffs = [float(c) for c in p.get("coefficients", [self.bound])]
        raw = np.polynomial.polynomial.polyval(v, coeffs)
        return np.clip(raw, self.floor, self.bound)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "bound": self.bound, "floor": self.floor}
        d.update(self.params)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'RateFunction':
        d = dict(d)
        try:
            kind = RateKind(d.pop("kind"))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"Invalid rate kind in {d!r}. Valid: {[k.value for k in RateKind]}") from e
        if "bound" not in d:
            if kind == RateKind.CONSTANT and "value" in d:
                d["bound"] = d["value"]
            else:
                raise ConfigError("rate description is missing its 'bound'")
        bound = float(d.pop("bound"))
        floor = float(d.pop("floor", d.get("value", 0.0) if kind == RateKind.CONSTANT else 0.0))
        return cls(kind=kind, bound=bound, floor=floor, params=d)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    Full PDMP description. Every callable is vectorized over leading axes:
    drift and jump maps take (..., N) and return (..., N), jump Jacobians
    return (..., N, N), rates return (...). Jump indices are 1-based.
    """
    dimension: int
    drift: ArrayFn
    jump_maps: Tuple[ArrayFn, ...]
    jump_jacobians: Tuple[ArrayFn, ...]
    rates: Tuple[ArrayFn, ...]
    rate_bound: float
    drift_jacobian: Optional[ArrayFn] = None
    house_of_cards: bool = False
    non_interacting: bool = False
    name: str = "custom"
    rate_floor: float = 0.0
    # exact_flow(x, t): t broadcasts against x[..., 0]
    exact_flow: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    exact_variational: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    scalar_spec: Optional['NonInteractingSpec'] = None
    description: Optional[dict] = None

    @property
    def N(self) -> int:
        return self.dimension


@dataclass(frozen=True, eq=False)
class NeuronParams:
    """Parameters of the interacting-neuron house-of-cards model"""
    N: int
    lam: float
    v_star: float
    weights: np.ndarray
    rate_fns: Tuple[RateFunction, ...]

    @property
    def rate_floor(self) -> float:
        return min(f.floor for f in self.rate_fns)

    @property
    def rate_bound(self) -> float:
        return max(f.bound for f in self.rate_fns)


@dataclass(frozen=True, eq=False)
class NonInteractingSpec:
    """
    Non-interacting structure: scalar drift b~ shared by all particles,
    pairwise jump shifts a_i^j(v) (i != j, 1-based), scalar rates f_i(v).
    shifts[i-1][j-1] is None on the diagonal.
    """
    N: int
    drift: ArrayFn
    drift_prime: ArrayFn
    shifts: Tuple[Tuple[Optional[ArrayFn], ...], ...]
    shift_primes: Tuple[Tuple[Optional[ArrayFn], ...], ...]
    rates: Tuple[ArrayFn, ...]
    a: float
    A: float
    B: float
    F: float
    f0: float
    name: str = "non_interacting"
    exact_flow: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    exact_flow_factor: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    exact_inverse_flow: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    exact_kappa: Optional[ArrayFn] = None
    # inverse_shifts[i-1][j-1](u) solves v + a_i^j(v) = u when known in closed form
    inverse_shifts: Optional[Tuple[Tuple[Optional[ArrayFn], ...], ...]] = None

    def shift(self, i: int, j: int, v):
        return self.shifts[i - 1][j - 1](np.asarray(v, dtype=float))

    def shift_prime(self, i: int, j: int, v):
        return self.shift_primes[i - 1][j - 1](np.asarray(v, dtype=float))


@dataclass(frozen=True)
class IntegratorConfig:
    """
    Fixed-step integration settings.

    method "auto" uses a model's exact flow when it has one, "rk4" forces
    classical Runge-Kutta. quad_step is the grid for survival-weighted
    time integrals and path quadrature.
    """
    method: str = "auto"
    step: float = DEFAULT_STEP
    quad_step: float = DEFAULT_QUAD_STEP
    max_time: float = DEFAULT_MAX_TIME
    trunc_eps: float = DEFAULT_TRUNC_EPS

    def __post_init__(self):
        if self.method not in ("auto", "rk4"):
            raise ConfigError(f"Invalid integrator method: {self.method!r}. Valid: ['auto', 'rk4']")
        for name in ("step", "quad_step", "max_time"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.trunc_eps < 1:
            raise ConfigError(f"trunc_eps must lie in (0, 1), got {self.trunc_eps}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FlowResult:
    """End state and integrated rate Lambda(t) of one flow segment"""
    end_state: np.ndarray
    integrated_rate: float
    times: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None

    @property
    def survival(self) -> float:
        return float(np.exp(-self.integrated_rate))


@dataclass(frozen=True)
class RngSpec:
    """Seed and stream id; one stream per path"""
    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass
class JumpEvent:
    """Time to the next jump, the 1-based jumping index and the pre-jump state"""
    tau: float
    index: int
    pre_state: np.ndarray
    proposals: int = 1


@dataclass
class PathRecord:
    """
    One simulated trajectory. indices are 1-based; pre_states[k] is the
    state just before the k-th jump, post_states[k] just after it.
    """
    times: np.ndarray
    indices: np.ndarray
    pre_states: np.ndarray
    post_states: np.ndarray
    x0: np.ndarray
    final_time: float
    final_state: np.ndarray
    seed: int = 0
    stream: int = 0

    @property
    def n_jumps(self) -> int:
        return int(len(self.times))

    @property
    def interarrival_times(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.times]))


@dataclass(frozen=True)
class JumpSchedule:
    """Prescribed jump times t_1..t_{n+1} and 1-based indices i_0..i_n"""
    times: Tuple[float, ...]
    indices: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(self.indices) < 1:
            raise ModelValidationError("schedule needs at least one index (n >= 0)", module="skeleton")
        if len(self.times) != len(self.indices):
            raise ModelValidationError(
                f"schedule needs n+1 times for n+1 indices, got {len(self.times)} and {len(self.indices)}",
                module="skeleton",
            )
        if any(t < 0 or not np.isfinite(t) for t in self.times):
            raise ModelValidationError("schedule times must be finite and >= 0", module="skeleton")

    @property
    def n(self) -> int:
        return len(self.indices) - 1

    @property
    def cumulative(self) -> np.ndarray:
        """s_0 = 0, s_1, ..., s_{n+1}"""
        return np.concatenate([[0.0], np.cumsum(self.times)])

    def with_times(self, times: Sequence[float]) -> 'JumpSchedule':
        return JumpSchedule(times=tuple(times), indices=self.indices)


@dataclass
class SkeletonTrace:
    """Skeleton positions: y_0 = start, x_k after jumps, y_k before jumps, endpoint eta"""
    start: np.ndarray
    post_states: np.ndarray
    pre_states: np.ndarray
    endpoint: np.ndarray


@dataclass
class DerivationMatrix:
    """N x (n+1) Jacobian of the skeleton endpoint in the jump times"""
    sigma: np.ndarray
    singular_values: np.ndarray

    @property
    def gram(self) -> np.ndarray:
        return self.sigma @ self.sigma.T

    @property
    def det_gram(self) -> float:
        return float(max(np.linalg.det(self.gram), 0.0))

    @property
    def min_singular_value(self) -> float:
        N, cols = self.sigma.shape
        if cols < N:
            return 0.0
        return float(self.singular_values[-1])

    @property
    def fields(self) -> List[np.ndarray]:
        """V_1, ..., V_{n+1}: the columns of sigma in reverse order"""
        return [self.sigma[:, k].copy() for k in range(self.sigma.shape[1] - 1, -1, -1)]


@dataclass
class GoodnessReport:
    good: bool
    min_singular_value: float
    det_gram: float
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GoodnessCertificate:
    """Sampled non-refutation certificate for 'good for all y' over a box"""
    indices: Tuple[int, ...]
    times: Tuple[float, ...]
    worst_y: List[float]
    min_sv: float
    threshold: float
    samples: int
    box: float

    @property
    def verdict(self) -> str:
        return "good" if self.min_sv > self.threshold else "not_good"

    def to_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "times": list(self.times),
            "worst_y": list(self.worst_y),
            "min_sv": self.min_sv,
            "threshold": self.threshold,
            "samples": self.samples,
            "box": self.box,
            "verdict": self.verdict,
        }


@dataclass
class Estimate:
    """Point estimate with standard error"""
    mean: float
    se: float
    n: int = 0

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "n": self.n}


@dataclass
class IdentityReport:
    """Verification of one identity: lhs vs rhs with a combined standard error"""
    identity: str
    lhs: float
    rhs: float
    se: float
    tolerance: float
    extra: dict = field(default_factory=dict)
    # lhs <= rhs + tolerance instead of |lhs - rhs| <= tolerance
    inequality: bool = False

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        if self.inequality:
            return bool(self.residual <= self.tolerance)
        return bool(abs(self.residual) <= self.tolerance)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        d = {
            "identity": self.identity,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "se": self.se,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }
        if self.inequality:
            d["inequality"] = True
        if self.extra:
            d["extra"] = self.extra
        return d


@dataclass
class EmpiricalMeasure:
    """Weighted samples approximating m (time-sampled) or m^Z (jump chain)"""
    samples: np.ndarray
    weights: np.ndarray
    provenance: str = "time"
    config_hash: str = ""

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.samples) == 0:
            from .errors import InsufficientSamplesError
            raise InsufficientSamplesError("empirical measure needs at least one sample", module="density")
        if not np.all(np.isfinite(self.samples)):
            raise ModelValidationError("empirical measure samples must be finite", module="density")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ModelValidationError("weights must be nonnegative and sum to 1", module="density")

    @classmethod
    def uniform(cls, samples: np.ndarray, provenance: str = "time", config_hash: str = "") -> 'EmpiricalMeasure':
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        n = len(samples)
        weights = np.full(n, 1.0 / n) if n else np.zeros(0)
        return cls(samples=samples, weights=weights, provenance=provenance, config_hash=config_hash)

    @property
    def size(self) -> int:
        return len(self.samples)

    def expect(self, values: np.ndarray) -> Estimate:
        """Weighted mean of per-sample values, with the i.i.d.-style standard error"""
        values = np.asarray(values, dtype=float)
        mean = float(np.dot(self.weights, values))
        n_eff = 1.0 / float(np.sum(self.weights ** 2))
        var = float(np.dot(self.weights, (values - mean) ** 2))
        se = float(np.sqrt(var / max(n_eff - 1.0, 1.0)))
        return Estimate(mean=mean, se=se, n=self.size)


@dataclass
class GridDensity:
    """Density values on a regular grid: edges[d] has bins[d] + 1 entries"""
    edges: List[np.ndarray]
    values: np.ndarray
    method: str = "histogram"
    bandwidth: Optional[float] = None

    @property
    def centers(self) -> List[np.ndarray]:
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    @property
    def cell_volume(self) -> float:
        return float(np.prod([e[1] - e[0] for e in self.edges]))

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)


@dataclass(frozen=True, eq=False)
class RegionSpec:
    """S_{d,k+2} = {v : (k+2) A < |v|, |b~(v)| > d}"""
    d: float
    k: int
    A: float
    drift: ArrayFn

    def contains(self, v):
        v = np.asarray(v, dtype=float)
        return ((self.k + 2) * self.A < np.abs(v)) & (np.abs(self.drift(v)) > self.d)

    def admissible_for(self, B: float) -> bool:
        """d > (k+2) A B, required for regularity claims"""
        return self.d > (self.k + 2) * self.A * B


@dataclass(frozen=True)
class ProductDensity:
    """
    Scalar factor r of a product-form input density, supported on [lo, hi].
    Values are scale * r(v) inside the support and 0 outside.
    """
    r: ArrayFn
    lo: float
    hi: float
    scale: float = 1.0
    name: str = "r"

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ModelValidationError(f"support needs lo < hi, got [{self.lo}, {self.hi}]", module="density")
        if not self.scale > 0:
            raise ModelValidationError(f"scale must be positive, got {self.scale}", module="density")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        inside = (v >= self.lo) & (v <= self.hi)
        return np.where(inside, self.scale * self.r(np.where(inside, v, self.lo)), 0.0)


@dataclass
class ThresholdResult:
    k_star: Optional[int]
    guaranteed: bool
    bound: float
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimulationConfig:
    horizon: Optional[float] = None
    max_jumps: Optional[int] = None
    burn_in: float = DEFAULT_BURN_IN
    stride: float = DEFAULT_STRIDE
    batches: int = DEFAULT_BATCHES
    paths: int = 1

    def __post_init__(self):
        if self.horizon is not None and self.horizon <= 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.max_jumps is not None and self.max_jumps < 0:
            raise ConfigError(f"max_jumps must be >= 0, got {self.max_jumps}")
        if not 0 <= self.burn_in < 1:
            raise ConfigError(f"burn_in must lie in [0, 1), got {self.burn_in}")
        if self.stride <= 0 or self.batches < 2 or self.paths < 1:
            raise ConfigError("stride must be positive, batches >= 2, paths >= 1")

    def to_dict(self) -> dict:
        return asdict(self)
