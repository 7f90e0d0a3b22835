"""
Experiment orchestration behind the CLI subcommands.

RunConfig is the single self-describing configuration; ExperimentRunner
executes one subcommand and writes its artifacts (CSV grids and tables, a
report.json with the config hash) into the output directory.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from .coarea import closed_form_agreement, coarea_grid, propagated_mass, propagation_box
from .density import (
    estimate_invariant,
    histogram_density,
    kde_density,
    marginal_density_representation,
    measure_from_paths,
    region_spec,
    regularity_threshold,
    smoothness_probe,
)
from .errors import ConfigError, ModelValidationError, PdmpError, RegionError
from .identities import (
    ipp_check,
    ipp_dim1_bound,
    jump_chain_identity,
    jump_count_identity,
    representation_check,
    stationarity_residuals,
    unit_representation,
)
from .model import load_model, model_from_description, neuron_params_from_description
from .models import (
    EmpiricalMeasure,
    IntegratorConfig,
    JumpSchedule,
    ModelSpec,
    ProductDensity,
    RateKind,
    RngSpec,
    SimulationConfig,
)
from .simulate import ergodic_average, simulate_path, simulate_paths, state_at
from .skeleton import (
    certify_goodness,
    derivation_matrix,
    enumerate_good_sequences,
    fd_derivation_matrix,
    is_good,
    neuron_det_closed_form,
)
from ..__version__ import __version__
from ..utils.constants import (
    DEFAULT_HORIZON,
    DEFAULT_MEASURE_SAMPLES,
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    GOOD_SAMPLE_BOX,
    GOOD_SAMPLE_COUNT,
)
from ..utils.io import config_hash, write_csv, write_json
from ..utils.testfns import Bump, constant, default_suite, sine

logger = logging.getLogger(__name__)

COMMANDS = (
    "simulate",
    "check-good",
    "verify-identities",
    "estimate-density",
    "propagate-density",
    "neuron-demo",
    "threshold",
)

SIGMA_FD_TOL = 1e-4
DET_TOL_EXACT = 1e-6
DET_TOL_RK4 = 1e-4
MASS_TOL = 1e-2
CLOSED_FORM_TOL = 1e-3
REPRESENTATION_SAMPLES = 2000

# fields that never change a result
UNHASHED = ("out", "workers")

DEMO_RATE = {"kind": "sigmoid", "bound": 1.5, "floor": 0.5, "slope": 4.0, "threshold": 0.5}


@dataclass
class RunConfig:
    """Everything one subcommand run depends on"""
    command: str
    model: Optional[dict] = None
    model_path: Optional[str] = None
    params: dict = field(default_factory=dict)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    seed: int = 0
    workers: int = 1
    out: str = "hocpdmp_out"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown subcommand: {self.command!r}. Valid: {list(COMMANDS)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "model": self.model,
            "model_path": self.model_path,
            "params": dict(self.params),
            "integrator": self.integrator.to_dict(),
            "simulation": self.simulation.to_dict(),
            "seed": self.seed,
            "workers": self.workers,
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, d: dict) -> 'RunConfig':
        try:
            return cls(
                command=d["command"],
                model=d.get("model"),
                model_path=d.get("model_path"),
                params=dict(d.get("params") or {}),
                integrator=IntegratorConfig(**(d.get("integrator") or {})),
                simulation=SimulationConfig(**(d.get("simulation") or {})),
                seed=int(d.get("seed", 0)),
                workers=int(d.get("workers", 1)),
                out=str(d.get("out", "hocpdmp_out")),
            )
        except KeyError as e:
            raise ConfigError(f"run config is missing {e}") from e
        except TypeError as e:
            raise ConfigError(f"invalid run config: {e}") from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> dict:
        """Raw dict of a JSON config file, for merging with flags"""
        try:
            return json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e

    def config_hash(self) -> str:
        d = self.to_dict()
        for key in UNHASHED:
            d.pop(key)
        return config_hash(d)


def _check(name: str, value: float, tolerance: float, passed: bool, **extra) -> dict:
    d = {"name": name, "value": value, "tolerance": tolerance, "passed": bool(passed)}
    d.update(extra)
    return d


def _thin(measure: EmpiricalMeasure, limit: int) -> EmpiricalMeasure:
    """Every k-th sample so that at most `limit` remain"""
    if measure.size <= limit:
        return measure
    step = int(math.ceil(measure.size / limit))
    return EmpiricalMeasure.uniform(measure.samples[::step], measure.provenance, measure.config_hash)


class ExperimentRunner:
    """
    Runs one subcommand of a RunConfig.
    Artifacts go to config.out; the last report is kept on self.report.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.cfg = config.integrator
        self.sim = config.simulation
        self.params = config.params
        self.out = Path(config.out)
        self.hash = config.config_hash()
        self.report: dict = {}

    def run(self) -> int:
        """Execute the subcommand; returns the exit code"""
        handler: Callable[[], Tuple[List[dict], dict]] = getattr(self, "_run_" + self.config.command.replace("-", "_"))
        logger.info(f"Running '{self.config.command}' (config {self.hash[:12]})")
        self.report = {
            "command": self.config.command,
            "config_hash": self.hash,
            "version": __version__,
        }
        try:
            checks, data = handler()
        except ConfigError as e:
            logger.error(f"Configuration error: {e}")
            self.report.update({"passed": False, "error": e.to_dict()})
            code = EXIT_USAGE
        except PdmpError as e:
            logger.error(f"{e.module}: {e}")
            self.report.update({"passed": False, "error": e.to_dict()})
            code = EXIT_CHECK_FAILED
        else:
            passed = all(c["passed"] for c in checks)
            self.report.update({"passed": passed, "checks": checks, "data": data})
            code = EXIT_OK if passed else EXIT_CHECK_FAILED
            for c in checks:
                if not c["passed"]:
                    logger.warning(f"Check failed: {c['name']}")
        write_json(self.out / "report.json", self.report)
        write_json(self.out / "config.json", self.config.to_dict())
        logger.info(f"Report written to {self.out / 'report.json'}")
        return code

    # -----------------------------------------------------------------------
    # Helpers
    # -----------------------------------------------------------------------

    def _model(self) -> ModelSpec:
        if self.config.model is not None:
            return model_from_description(self.config.model)
        if self.config.model_path:
            return load_model(self.config.model_path)
        raise ConfigError(f"'{self.config.command}' needs a model (--model or 'model' in the config)")

    def _x0(self, model: ModelSpec) -> np.ndarray:
        x0 = np.asarray(self.params.get("x0", np.zeros(model.dimension)), dtype=float)
        if x0.shape != (model.dimension,):
            raise ConfigError(f"x0 must have {model.dimension} entries, got {x0.shape}")
        return x0

    def _horizon_sim(self) -> SimulationConfig:
        if self.sim.horizon is None:
            return replace(self.sim, horizon=DEFAULT_HORIZON)
        return self.sim

    def _required(self, *names: str) -> list:
        missing = [n for n in names if n not in self.params]
        if missing:
            raise ConfigError(f"'{self.config.command}' needs parameters {missing}")
        return [self.params[n] for n in names]

    def _region(self, model: ModelSpec):
        if "d" not in self.params or model.scalar_spec is None:
            return None
        return region_spec(model.scalar_spec, float(self.params["d"]), int(self.params.get("k", 0)), self.params.get("A"))

    def _identity_checks(self, model: ModelSpec, x0: np.ndarray) -> List[dict]:
        sim = self._horizon_sim()
        path = simulate_path(model, x0, RngSpec(self.config.seed, 0), self.cfg, horizon=sim.horizon, max_jumps=sim.max_jumps)
        suite = default_suite()
        reports = jump_chain_identity(model, path, suite, self.cfg, sim.batches, sim.burn_in)
        reports += stationarity_residuals(model, path, suite, self.cfg, sim.batches, sim.burn_in)
        reports.append(jump_count_identity(model, path, self.cfg, sim.batches, sim.burn_in))

        measure = measure_from_paths(model, [path], sim, self.cfg, "time", self.hash)
        measure = _thin(measure, int(self.params.get("samples", DEFAULT_MEASURE_SAMPLES)))
        reports.append(unit_representation(model, measure, self.cfg))
        g = sine(1)
        lhs = ergodic_average(model, path, g, self.cfg, sim.batches, sim.burn_in)
        reports.append(representation_check(model, measure, g, self.cfg, lhs=lhs))

        region = self._region(model)
        support = self.params.get("ipp_support")
        if region is not None and support is not None:
            bump = Bump(float(support[0]), float(support[1]))
            reports.append(ipp_check(model, constant(1.0), bump, measure, region, self.cfg))
            if model.dimension == 1:
                reports.append(ipp_dim1_bound(model, bump, measure))
        rows = [r.to_dict() for r in reports]
        write_csv(
            self.out / "identities.csv",
            ["identity", "lhs", "rhs", "residual", "se", "tolerance", "verdict"],
            ([r[k] for k in ("identity", "lhs", "rhs", "residual", "se", "tolerance", "verdict")] for r in rows),
        )
        return [dict(r, name=r["identity"], passed=r["verdict"] == "pass") for r in rows]

    # -----------------------------------------------------------------------
    # Subcommands
    # -----------------------------------------------------------------------

    def _run_simulate(self):
        model = self._model()
        x0 = self._x0(model)
        paths = simulate_paths(
            model, x0, self.config.seed, self.sim.paths, self.cfg,
            horizon=self.sim.horizon, max_jumps=self.sim.max_jumps, workers=self.config.workers,
        )
        N = model.dimension
        summary = []
        for p in paths:
            write_csv(
                self.out / f"jumps_{p.stream}.csv",
                ["k", "time", "index"] + [f"pre_{j}" for j in range(1, N + 1)] + [f"post_{j}" for j in range(1, N + 1)],
                ([k + 1, p.times[k], p.indices[k], *p.pre_states[k], *p.post_states[k]] for k in range(p.n_jumps)),
            )
            grid = np.arange(0.0, p.final_time + 1e-12, self.sim.stride)
            if grid[-1] < p.final_time:
                grid = np.append(grid, p.final_time)
            states = state_at(model, p, grid, self.cfg)
            write_csv(
                self.out / f"states_{p.stream}.csv",
                ["time"] + [f"x_{j}" for j in range(1, N + 1)],
                ([t, *s] for t, s in zip(grid, states)),
            )
            summary.append({
                "stream": p.stream,
                "n_jumps": p.n_jumps,
                "final_time": p.final_time,
                "final_state": p.final_state,
            })
        return [], {"model": model.name, "paths": summary}

    def _run_check_good(self):
        model = self._model()
        times, indices = self._required("times", "indices")
        threshold = self.params.get("threshold")
        if threshold is not None and not float(threshold) > 0:
            raise ConfigError(f"goodness threshold must be positive, got {threshold}")
        sched = JumpSchedule(times=tuple(times), indices=tuple(indices))
        y = np.asarray(self.params.get("y", np.zeros(model.dimension)), dtype=float)
        dm = derivation_matrix(model, y, sched, self.cfg)
        report = is_good(model, y, sched, self.cfg, self.params.get("threshold"))
        fd_err = float(np.max(np.abs(dm.sigma - fd_derivation_matrix(model, y, sched, self.cfg))))
        cert = certify_goodness(
            model, sched, self.cfg,
            box=float(self.params.get("box", GOOD_SAMPLE_BOX)),
            samples=int(self.params.get("samples", GOOD_SAMPLE_COUNT)),
            seed=self.config.seed,
            threshold=self.params.get("threshold"),
        )
        checks = [
            _check("sigma_vs_fd", fd_err, SIGMA_FD_TOL, fd_err < SIGMA_FD_TOL),
            _check("goodness", cert.min_sv, cert.threshold, cert.verdict == "good"),
        ]
        data = {"sigma": dm.sigma, "singular_values": dm.singular_values, "at_y": report.to_dict(), "certificate": cert.to_dict()}
        if self.params.get("enumerate"):
            rows = enumerate_good_sequences(model, y, times, self.cfg, threshold=self.params.get("threshold"))
            write_csv(
                self.out / "enumeration.csv",
                ["indices", "min_sv", "det_gram", "threshold", "good"],
                ((" ".join(map(str, r["indices"])), r["min_sv"], r["det_gram"], r["threshold"], r["good"]) for r in rows),
            )
            data["good_sequences"] = sum(r["good"] for r in rows)
            data["sequences"] = len(rows)
        return checks, data

    def _run_verify_identities(self):
        model = self._model()
        return self._identity_checks(model, self._x0(model)), {"model": model.name}

    def _run_estimate_density(self):
        model = self._model()
        sim = self._horizon_sim()
        measure = estimate_invariant(
            model, self._x0(model), sim, self.config.seed, self.cfg, self.config.workers,
            provenance=self.params.get("provenance", "time"), config_hash=self.hash,
        )
        coord = int(self.params.get("coord", 1))
        hist = histogram_density(measure, coord)
        kde = kde_density(measure, coord, cells=int(self.params.get("cells", 256)))
        write_csv(self.out / "density_hist.csv", ["x", "density"], zip(hist.centers[0], hist.values))
        write_csv(self.out / "density_kde.csv", ["x", "density"], zip(kde.centers[0], kde.values))
        data = {
            "samples": measure.size,
            "provenance": measure.provenance,
            "histogram": {"bins": int(len(hist.values)), "rule": "freedman-diaconis"},
            "kde": {"cells": int(len(kde.values)), "bandwidth": kde.bandwidth, "rule": "silverman"},
        }
        if coord == 1 and model.scalar_spec is not None:
            sub = _thin(measure, int(self.params.get("representation_samples", REPRESENTATION_SAMPLES)))
            s = kde.centers[0]
            mean, se = marginal_density_representation(model, sub, s, self.cfg)
            write_csv(self.out / "density_representation.csv", ["x", "density", "se"], zip(s, mean, se))
            data["representation_l1_to_kde"] = float(np.sum(np.abs(mean - kde.values)) * kde.cell_volume)
        region = self._region(model)
        if region is not None:
            order = int(self.params.get("order", max(1, region.k)))
            try:
                data["smoothness"] = {str(m): v for m, v in smoothness_probe(kde, region, order).items()}
            except RegionError as e:
                logger.warning(f"Smoothness probe skipped: {e}")
                data["smoothness"] = {"skipped": str(e)}
        return [], data

    def _run_propagate_density(self):
        model = self._model()
        spec = model.scalar_spec
        if spec is None:
            raise ModelValidationError("propagate-density needs a non-interacting model", module="density")
        lo, hi = self.params.get("support", (0.0, 0.5))
        r = ProductDensity(r=Bump(float(lo), float(hi)), lo=float(lo), hi=float(hi), name="bump")
        masses = propagated_mass(spec, r, self.cfg, points=int(self.params.get("mass_points", 401)))
        total = float(sum(masses.values()))
        checks = [_check("total_mass", total, MASS_TOL, abs(total - 1.0) <= MASS_TOL)]
        data = {"masses": {str(i): m for i, m in masses.items()}, "total_mass": total}

        points = int(self.params.get("points", 50))
        if spec.N <= 2:
            for i in range(1, spec.N + 1):
                axes = [np.linspace(a, b, points) for a, b in propagation_box(spec, r, i, self.cfg)]
                values = coarea_grid(spec, r, i, axes, self.cfg)
                mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.N)
                write_csv(
                    self.out / f"q_{i}.csv",
                    [f"y_{j}" for j in range(1, spec.N + 1)] + ["q"],
                    ([*y, q] for y, q in zip(mesh, values.ravel())),
                )

        desc = model.description or {}
        if desc.get("type") == "neuron":
            params = neuron_params_from_description(desc)
            constant_rates = all(fn.kind == RateKind.CONSTANT for fn in params.rate_fns)
            if constant_rates and len({float(fn(np.asarray(0.0))) for fn in params.rate_fns}) == 1:
                agreement = closed_form_agreement(params, r, self.cfg, points)
                data["closed_form"] = {str(i): a for i, a in agreement.items()}
                worst = max(a["max_rel_error"] for a in agreement.values())
                checks.append(_check("closed_form", worst, CLOSED_FORM_TOL, worst < CLOSED_FORM_TOL))
        return checks, data

    def _run_neuron_demo(self):
        N = int(self.params.get("N", 2))
        desc = {
            "type": "neuron",
            "N": N,
            "lambda": float(self.params.get("lambda", 1.0)),
            "v_star": float(self.params.get("v_star", 1.0)),
            "weights": self.params.get("weights", 0.2),
            "rates": self.params.get("rates", DEMO_RATE),
        }
        model = model_from_description(desc)
        lam, v_star = desc["lambda"], desc["v_star"]
        rng = np.random.default_rng(self.config.seed)
        y = np.zeros(N)
        errors = []
        for _ in range(int(self.params.get("schedules", 100))):
            times = rng.uniform(0.0, 2.0, size=N)
            sched = JumpSchedule(times=tuple(times), indices=tuple(range(1, N + 1)))
            det = float(np.linalg.det(derivation_matrix(model, y, sched, self.cfg).sigma))
            closed = neuron_det_closed_form(lam, v_star, times)
            errors.append(abs(det - closed) / closed)
        tol = DET_TOL_EXACT if self.cfg.method == "auto" else DET_TOL_RK4
        worst = float(max(errors))
        checks = [_check("det_sigma_closed_form", worst, tol, worst < tol, schedules=len(errors))]
        params = neuron_params_from_description(desc)
        threshold = regularity_threshold(N, params.rate_floor, lam)
        data = {"model": model.name, "det_max_rel_error": worst, "threshold": threshold.to_dict()}
        if self.params.get("identities", True):
            checks += self._identity_checks(model, y)
        return checks, data

    def _run_threshold(self):
        if {"N", "f0", "B"} <= set(self.params):
            N, f0, B = int(self.params["N"]), float(self.params["f0"]), float(self.params["B"])
        elif self.config.model is not None or self.config.model_path:
            desc = self._model().description or {}
            if desc.get("type") != "neuron":
                raise ConfigError("threshold reads N, f0 and B only from a neuron model; pass them explicitly")
            params = neuron_params_from_description(desc)
            N, f0, B = params.N, params.rate_floor, params.lam
        else:
            raise ConfigError("threshold needs N, f0 and B (or a neuron model)")
        result = regularity_threshold(N, f0, B)
        logger.info(f"k* = {result.k_star} (guaranteed: {result.guaranteed})")
        return [], {"N": N, "f0": f0, "B": B, **result.to_dict()}
