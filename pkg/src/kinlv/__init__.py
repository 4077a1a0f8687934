"""Kinetic Lotka-Volterra model of deposits and loans.

Moment ODEs, agent-based Monte Carlo and a Fokker-Planck solver, together
with the coefficient of variation and Gini index used to follow inequality
over time.
"""

__version__ = "0.1.0"

from .params import (  # noqa: E402
    PAPER_INITIAL,
    TABLE1,
    Config,
    InitialConditions,
    ModelParams,
    Risk,
    RunConfig,
    Shape,
    ValidationError,
    derived_delta,
    load_config,
    validate,
)

__all__ = [
    "__version__",
    "PAPER_INITIAL",
    "TABLE1",
    "Config",
    "InitialConditions",
    "ModelParams",
    "Risk",
    "RunConfig",
    "Shape",
    "ValidationError",
    "derived_delta",
    "load_config",
    "validate",
]
