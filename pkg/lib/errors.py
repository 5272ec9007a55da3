"""
Error Types

Exception hierarchy shared by every SwarmGuard module.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple


class SwarmGuardError(Exception):
    """Base class for all SwarmGuard errors."""


class InvalidInputError(SwarmGuardError, ValueError):
    """Raised when a state, command or data array is malformed or non-finite."""


class InvalidParameterError(SwarmGuardError, ValueError):
    """Raised when a tuning parameter lies outside its admissible range."""


class UnsafeStartError(SwarmGuardError, ValueError):
    """
    Raised when a configuration starts outside the safe set.

    Attributes:
        pairs: Robot index pairs (i, j) closer than the safety distance
        outside: Robot indices outside the workspace
    """

    def __init__(
        self,
        message: str,
        pairs: Optional[Sequence[Tuple[int, int]]] = None,
        outside: Optional[Sequence[int]] = None
    ):
        super().__init__(message)
        self.pairs: List[Tuple[int, int]] = [tuple(p) for p in (pairs or [])]
        self.outside: List[int] = list(outside or [])


class DegenerateDataError(SwarmGuardError, ValueError):
    """Raised when a regression column carries no energy."""

    def __init__(self, message: str, axis: int):
        super().__init__(message)
        self.axis = axis


class QpSizeError(SwarmGuardError, ValueError):
    """Raised when a problem exceeds the enumeration oracle's size caps."""


class SchemaMismatchError(SwarmGuardError, ValueError):
    """Raised when a trajectory file does not follow the log schema."""

    def __init__(self, message: str, column: Optional[str] = None):
        super().__init__(message)
        self.column = column


class ControllerError(SwarmGuardError):
    """Raised when a controller fails during a simulation tick."""


class ScenarioValidationError(SwarmGuardError, ValueError):
    """
    Raised when a scenario document fails validation.

    Attributes:
        issues: Every violated field, as produced by the scenario checker
    """

    def __init__(self, issues: List[Any]):
        self.issues = list(issues)
        fields = ", ".join(sorted({getattr(i, 'field', str(i)) for i in self.issues}))
        super().__init__(f"Scenario invalid ({len(self.issues)} issue(s)): {fields}")

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable error document."""
        return {
            'error': 'scenario_invalid',
            'issues': [
                i.to_dict() if hasattr(i, 'to_dict') else {'message': str(i)}
                for i in self.issues
            ]
        }
