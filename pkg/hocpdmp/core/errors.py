"""
Exception hierarchy for hocpdmp.

Every error carries the module it came from so that the CLI can report
provenance ("flow", "simulate", ...) next to the violated invariant.
"""

from typing import Optional


class PdmpError(Exception):
    """Base class for all hocpdmp errors"""

    module: str = "core"

    def __init__(self, message: str, invariant: Optional[str] = None, module: Optional[str] = None):
        super().__init__(message)
        self.invariant = invariant
        if module is not None:
            self.module = module

    def to_dict(self) -> dict:
        return {
            "error": str(self),
            "type": type(self).__name__,
            "module": self.module,
            "invariant": self.invariant,
        }


class ModelValidationError(PdmpError, ValueError):
    """Invalid model parameters or a model invariant failing on sampled states"""
    module = "model"


class RateBoundError(PdmpError):
    """A jump rate exceeded the declared rate_bound at runtime"""
    module = "model"


class JumpIndexError(PdmpError, IndexError):
    """Jump index outside 1..N"""
    module = "model"


class IntegrationError(PdmpError, ArithmeticError):
    """Non-finite state produced while integrating the flow"""
    module = "flow"


class FlowDomainError(PdmpError, ValueError):
    """Value not reachable by the scalar flow (kappa, inverse maps)"""
    module = "flow"

    def __init__(self, message: str, boundary: Optional[float] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.boundary = boundary

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["boundary"] = self.boundary
        return d


class ThinningTimeoutError(PdmpError):
    """No proposal accepted before max_time"""
    module = "simulate"


class InsufficientSamplesError(PdmpError):
    """Too few jumps or samples for an estimator"""
    module = "simulate"


class RegionError(PdmpError, ValueError):
    """Test-function support outside S_{d,k+2}, or region empty on a grid"""
    module = "density"


class ConfigError(PdmpError, ValueError):
    """Unreadable or invalid configuration / model description"""
    module = "cli"
