"""
hocpdmp - Unified Python API.

Provides ToolResult-based wrappers for programmatic usage
and agent integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .__version__ import __version__
from .core.errors import PdmpError
from .core.model import load_model, model_from_description
from .core.models import IntegratorConfig, JumpSchedule, ModelSpec
from .core.density import regularity_threshold
from .core.runner import ExperimentRunner, RunConfig
from .core.simulate import simulate_paths
from .core.skeleton import certify_goodness, derivation_matrix, is_good, neuron_det_closed_form
from .utils.constants import GOOD_SAMPLE_BOX, GOOD_SAMPLE_COUNT


@dataclass
class ToolResult:
    """Standardised return type for all hocpdmp API functions."""
    success: bool
    data: Any = None
    error: Optional[str] = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "data": self.data,
            "error": self.error,
            "metadata": self.metadata,
        }


def _failure(e: Exception) -> ToolResult:
    metadata = {"version": __version__}
    if isinstance(e, PdmpError):
        metadata["module"] = e.module
        if e.invariant:
            metadata["invariant"] = e.invariant
    return ToolResult(success=False, error=str(e), metadata=metadata)


def _resolve_model(model: dict | str | Path | ModelSpec) -> ModelSpec:
    if isinstance(model, ModelSpec):
        return model
    if isinstance(model, dict):
        return model_from_description(model)
    return load_model(model)


def threshold(N: int, f0: float, B: float) -> ToolResult:
    """Regularity threshold k* for N particles, rate floor f0 and drift bound B.

    Parameters
    ----------
    N : int
        Number of particles.
    f0 : float
        Lower bound of the jump rates.
    B : float
        Bound on the drift derivative (lambda for the neuron model).

    Returns
    -------
    ToolResult
        With data {k_star, guaranteed, bound, note}.
    """
    try:
        result = regularity_threshold(int(N), float(f0), float(B))
        return ToolResult(success=True, data=result.to_dict(), metadata={"version": __version__})
    except Exception as e:
        return _failure(e)


def check_good(
    model: dict | str | Path | ModelSpec,
    times: Sequence[float],
    indices: Sequence[int],
    *,
    y: Optional[Sequence[float]] = None,
    samples: int = GOOD_SAMPLE_COUNT,
    box: float = GOOD_SAMPLE_BOX,
    seed: int = 0,
    method: str = "auto",
) -> ToolResult:
    """Goodness of a jump schedule: sigma at y plus a sampled certificate.

    Parameters
    ----------
    model : dict, str, Path or ModelSpec
        Model description, description file, or a built model.
    times : sequence of float
        Inter-jump times t_1..t_{n+1}.
    indices : sequence of int
        Jumping indices i_0..i_n (1-based).
    y : sequence of float or None
        Start state for sigma; zeros by default.
    samples : int
        Number of random states for the certificate.
    box : float
        Half-width of the sampling box.
    seed : int
        Seed of the certificate sampler.
    method : str
        "auto" (exact flows when available) or "rk4".

    Returns
    -------
    ToolResult
        With data {sigma, singular_values, at_y, certificate}.
    """
    try:
        m = _resolve_model(model)
        cfg = IntegratorConfig(method=method)
        sched = JumpSchedule(times=tuple(times), indices=tuple(indices))
        y0 = np.zeros(m.dimension) if y is None else np.asarray(y, dtype=float)
        dm = derivation_matrix(m, y0, sched, cfg)
        cert = certify_goodness(m, sched, cfg, box=box, samples=samples, seed=seed)
        return ToolResult(
            success=True,
            data={
                "sigma": dm.sigma.tolist(),
                "singular_values": dm.singular_values.tolist(),
                "at_y": is_good(m, y0, sched, cfg).to_dict(),
                "certificate": cert.to_dict(),
            },
            metadata={"model": m.name, "version": __version__},
        )
    except Exception as e:
        return _failure(e)


def simulate(
    model: dict | str | Path | ModelSpec,
    x0: Optional[Sequence[float]] = None,
    *,
    horizon: Optional[float] = None,
    max_jumps: Optional[int] = None,
    paths: int = 1,
    seed: int = 0,
    workers: int = 1,
    method: str = "auto",
) -> ToolResult:
    """Simulate independent paths by thinning.

    Parameters
    ----------
    model : dict, str, Path or ModelSpec
        Model description, description file, or a built model.
    x0 : sequence of float or None
        Start state; zeros by default.
    horizon : float or None
        Simulation horizon T.
    max_jumps : int or None
        Jump cap.
    paths : int
        Number of paths (one stream each).
    seed : int
        Base seed.
    workers : int
        Worker processes.
    method : str
        "auto" or "rk4".

    Returns
    -------
    ToolResult
        With data a list of {stream, n_jumps, final_time, final_state, times, indices}.
    """
    try:
        m = _resolve_model(model)
        start = np.zeros(m.dimension) if x0 is None else np.asarray(x0, dtype=float)
        records = simulate_paths(
            m, start, seed, paths, IntegratorConfig(method=method),
            horizon=horizon, max_jumps=max_jumps, workers=workers,
        )
        data = [
            {
                "stream": p.stream,
                "n_jumps": p.n_jumps,
                "final_time": p.final_time,
                "final_state": p.final_state.tolist(),
                "times": p.times.tolist(),
                "indices": p.indices.tolist(),
            }
            for p in records
        ]
        return ToolResult(
            success=True,
            data=data,
            metadata={"model": m.name, "paths": paths, "seed": seed, "version": __version__},
        )
    except Exception as e:
        return _failure(e)


def neuron_demo(
    N: int = 2,
    *,
    lam: float = 1.0,
    v_star: float = 1.0,
    schedules: int = 100,
    seed: int = 0,
    method: str = "auto",
) -> ToolResult:
    """det sigma of the neuron model against its closed form over random schedules.

    Parameters
    ----------
    N : int
        Number of neurons; schedules use indices (1, ..., N).
    lam : float
        Leak rate.
    v_star : float
        Resting potential.
    schedules : int
        Number of random schedules with times uniform on [0, 2].
    seed : int
        Seed of the schedule sampler.
    method : str
        "auto" or "rk4".

    Returns
    -------
    ToolResult
        success is True when the worst relative error is below 1e-6
        (1e-4 with rk4).
    """
    try:
        m = model_from_description({
            "type": "neuron", "N": N, "lambda": lam, "v_star": v_star, "weights": 0.2,
            "rates": {"kind": "constant", "value": 1.0},
        })
        cfg = IntegratorConfig(method=method)
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(schedules):
            times = rng.uniform(0.0, 2.0, size=N)
            sched = JumpSchedule(times=tuple(times), indices=tuple(range(1, N + 1)))
            det = float(np.linalg.det(derivation_matrix(m, np.zeros(N), sched, cfg).sigma))
            closed = neuron_det_closed_form(lam, v_star, times)
            worst = max(worst, abs(det - closed) / closed)
        tol = 1e-6 if method == "auto" else 1e-4
        return ToolResult(
            success=worst < tol,
            data={"det_max_rel_error": worst, "schedules": schedules, "tolerance": tol},
            metadata={"model": m.name, "version": __version__},
        )
    except Exception as e:
        return _failure(e)


def run_experiment(config: dict) -> ToolResult:
    """Run one subcommand from a RunConfig dict, writing artifacts to config["out"].

    Parameters
    ----------
    config : dict
        RunConfig as a dict (command, model or model_path, params, integrator,
        simulation, seed, workers, out).

    Returns
    -------
    ToolResult
        With data the report; metadata carries the exit code.
    """
    try:
        runner = ExperimentRunner(RunConfig.from_dict(config))
        code = runner.run()
        return ToolResult(
            success=code == 0,
            data=runner.report,
            metadata={"exit_code": code, "out": str(runner.out), "version": __version__},
        )
    except Exception as e:
        return _failure(e)
