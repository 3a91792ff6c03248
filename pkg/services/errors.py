from typing import Any, Optional


class HelmholtzError(Exception):
    """Base class for every error raised by the lab; carries the CLI exit code."""
    exit_code: int = 1

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context = context


class DomainError(HelmholtzError, ValueError):
    """A scalar or field argument lies outside the operation's domain."""


class GridMismatchError(HelmholtzError, ValueError):
    """Two fields that must share a grid do not."""


class ResolutionError(HelmholtzError, ValueError):
    """The grid cannot resolve what the operation needs (wavelength, collar, ball)."""


class ConfigError(HelmholtzError, ValueError):
    """Invalid experiment configuration; `field` names the offending entry."""

    def __init__(self, detail: str, field: Optional[str] = None, **context: Any):
        super().__init__(f"{field}: {detail}" if field else detail, **context)
        self.field = field


class SolverFailure(HelmholtzError):
    """A solver or scan could not reach its target; `report` holds the diagnostics."""
    exit_code = 2

    def __init__(self, detail: str, report: Any = None, **context: Any):
        super().__init__(detail, **context)
        self.report = report
