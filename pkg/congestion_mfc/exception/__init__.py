from .custom_exception import (
    AuditFailedError,
    ConfigError,
    FieldFormatError,
    GridMismatchError,
    InfeasibleDualError,
    InsufficientParticlesError,
    MeanFieldControlException,
    ModelDomainError,
    NumericalConvergenceError,
    UnboundedModelError,
)

__all__ = [
    "AuditFailedError",
    "ConfigError",
    "FieldFormatError",
    "GridMismatchError",
    "InfeasibleDualError",
    "InsufficientParticlesError",
    "MeanFieldControlException",
    "ModelDomainError",
    "NumericalConvergenceError",
    "UnboundedModelError",
]
