"""
hocpdmp - OpenAI function-calling tool definitions.

Provides TOOLS list and dispatch() for LLM agent integration.
"""

from __future__ import annotations

import json
from typing import Any

_MODEL_PARAM = {
    "type": "object",
    "description": (
        "Model description, e.g. {\"type\": \"neuron\", \"N\": 2, \"lambda\": 1, "
        "\"v_star\": 1, \"weights\": 0.2, \"rates\": {\"kind\": \"constant\", \"value\": 1}}."
    ),
}

TOOLS = [
    {
        "type": "function",
        "function": {
            "name": "hocpdmp_threshold",
            "description": (
                "Largest differentiability order k* guaranteed for the invariant "
                "density of a house-of-cards PDMP: B k* < N f0 - (N - 1) B."
            ),
            "parameters": {
                "type": "object",
                "properties": {
                    "N": {"type": "integer", "description": "Number of particles."},
                    "f0": {"type": "number", "description": "Lower bound of the jump rates."},
                    "B": {"type": "number", "description": "Drift derivative bound (lambda for neurons)."},
                },
                "required": ["N", "f0", "B"],
            },
        },
    },
    {
        "type": "function",
        "function": {
            "name": "hocpdmp_check_good",
            "description": (
                "Compute the derivation matrix of a jump schedule and a sampled "
                "certificate that the schedule is good (full rank) over a box of states."
            ),
            "parameters": {
                "type": "object",
                "properties": {
                    "model": _MODEL_PARAM,
                    "times": {"type": "array", "items": {"type": "number"}, "description": "Inter-jump times t_1..t_{n+1}."},
                    "indices": {"type": "array", "items": {"type": "integer"}, "description": "1-based jumping indices i_0..i_n."},
                    "samples": {"type": "integer", "description": "Random states in the certificate.", "default": 1000},
                    "box": {"type": "number", "description": "Half-width of the sampling box.", "default": 5.0},
                    "seed": {"type": "integer", "default": 0},
                },
                "required": ["model", "times", "indices"],
            },
        },
    },
    {
        "type": "function",
        "function": {
            "name": "hocpdmp_neuron_demo",
            "description": (
                "Compare det sigma of the interacting-neuron model with its closed form "
                "over random schedules."
            ),
            "parameters": {
                "type": "object",
                "properties": {
                    "N": {"type": "integer", "description": "Number of neurons.", "default": 2},
                    "lam": {"type": "number", "description": "Leak rate.", "default": 1.0},
                    "v_star": {"type": "number", "description": "Resting potential.", "default": 1.0},
                    "schedules": {"type": "integer", "default": 100},
                    "seed": {"type": "integer", "default": 0},
                },
                "required": [],
            },
        },
    },
    {
        "type": "function",
        "function": {
            "name": "hocpdmp_simulate",
            "description": "Simulate paths of a house-of-cards PDMP by thinning.",
            "parameters": {
                "type": "object",
                "properties": {
                    "model": _MODEL_PARAM,
                    "x0": {"type": "array", "items": {"type": "number"}, "description": "Start state."},
                    "horizon": {"type": "number", "description": "Simulation horizon."},
                    "max_jumps": {"type": "integer", "description": "Jump cap."},
                    "paths": {"type": "integer", "default": 1},
                    "seed": {"type": "integer", "default": 0},
                },
                "required": ["model"],
            },
        },
    },
]


def dispatch(name: str, arguments: dict[str, Any] | str) -> dict:
    """Dispatch a tool call to the appropriate API function.

    Parameters
    ----------
    name : str
        Function name from the tool call.
    arguments : dict or str
        Arguments dict or JSON string.

    Returns
    -------
    dict
        ToolResult as a dictionary.
    """
    if isinstance(arguments, str):
        arguments = json.loads(arguments)

    if name == "hocpdmp_threshold":
        from .api import threshold

        return threshold(**arguments).to_dict()

    if name == "hocpdmp_check_good":
        from .api import check_good

        return check_good(**arguments).to_dict()

    if name == "hocpdmp_neuron_demo":
        from .api import neuron_demo

        return neuron_demo(**arguments).to_dict()

    if name == "hocpdmp_simulate":
        from .api import simulate

        return simulate(**arguments).to_dict()

    raise ValueError(f"Unknown tool: {name}")
