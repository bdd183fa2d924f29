"""Exceptions module."""
from typing import Any, Dict, Optional


class PtshellError(Exception):
    """Parent exception class for all ptshell exceptions."""


class PtshellValueError(PtshellError):
    """Generic ptshell value error."""


class PtshellIOError(PtshellError):
    """Generic ptshell IO error."""


class PtshellGeometryError(PtshellValueError):
    """Surfaces that are not star-shaped, not nested, or outside the smallness budget."""


class PtshellInfeasibleError(PtshellValueError):
    """Conductivities for which no neutral coated sphere exists."""


class PtshellSolveError(PtshellError):
    """Singular linear systems and divergent quadratures."""


class PtshellDesignError(PtshellError):
    """Newton iteration failed to produce a PT-vanishing shell.

    The best iterate seen and per-iteration diagnostics are kept on the exception so
    callers can still report them.
    """

    def __init__(
        self,
        message: str,
        *,
        best: Optional[Any] = None,
        diagnostics: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}
