"""Exception hierarchy shared by the numerical services, the CLI and the HTTP app."""

from typing import Any, Dict, Optional


class WeylAbcError(Exception):
    """Base class; `details` ends up in the machine-readable error payload."""

    kind = "error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_payload(self) -> Dict[str, Any]:
        return {"error": self.message, "details": {"kind": self.kind, **self.details}}


class ConfigError(WeylAbcError):
    kind = "config"


class DomainError(WeylAbcError, ValueError):
    kind = "domain"


class IntegrationError(WeylAbcError):
    kind = "integration"


class FitError(WeylAbcError):
    kind = "fit"


class SolverError(WeylAbcError):
    kind = "solver"


class QuadratureError(WeylAbcError, ValueError):
    kind = "quadrature"
