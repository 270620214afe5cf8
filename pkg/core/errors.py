from __future__ import annotations

from typing import Any, Dict, List, Optional, Sequence


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_INVARIANT = 4


class StratoflowError(Exception):
    """Base class; `exit_code` tells the CLI how to terminate."""

    exit_code = EXIT_RUNTIME

    def details(self) -> Dict[str, Any]:
        return {}


class ValidationError(StratoflowError):
    exit_code = EXIT_VALIDATION


class ManifestError(ValidationError):
    def __init__(self, message: str, *, line: Optional[int] = None, field: str = "") -> None:
        self.line = line
        self.field = field
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")

    def details(self) -> Dict[str, Any]:
        return {"line": self.line, "field": self.field}


class RecipeError(ValidationError):
    pass


class ConstraintError(ValidationError):
    pass


class ExactnessError(ValidationError):
    pass


class DomainError(StratoflowError):
    pass


class ResidualError(StratoflowError):
    pass


class DegenerateError(StratoflowError):
    pass


class CertificateError(StratoflowError):
    pass


class DivisorError(StratoflowError):
    pass


class BlowupError(StratoflowError):
    pass


class SummaryError(StratoflowError):
    def __init__(self, message: str, *, missing: Sequence[str] = ()) -> None:
        self.missing = list(missing)
        super().__init__(message)

    def details(self) -> Dict[str, Any]:
        return {"missing": self.missing}


class ResonantDomainError(StratoflowError):
    exit_code = EXIT_INVARIANT

    def __init__(self, message: str, *, triads: Sequence[Any] = ()) -> None:
        self.triads: List[Any] = list(triads)
        super().__init__(message)

    def details(self) -> Dict[str, Any]:
        return {"triads": [str(t) for t in self.triads[:50]], "count": len(self.triads)}


class InvariantError(StratoflowError):
    """A run finished but at least one recorded check failed."""

    exit_code = EXIT_INVARIANT

    def __init__(self, message: str, *, failed: Sequence[str] = ()) -> None:
        self.failed = list(failed)
        super().__init__(message)

    def details(self) -> Dict[str, Any]:
        return {"failed": self.failed}


class PrecisionWarning(UserWarning):
    pass


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StratoflowError):
        return exc.exit_code
    if isinstance(exc, (FileNotFoundError, ValueError)):
        return EXIT_VALIDATION
    return EXIT_RUNTIME
