from typing import Any


class WalkError(Exception):
    """Base error with a stable machine-readable code."""

    code = "internal_error"
    exit_status = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def record(self) -> dict[str, Any]:
        """Error record printed by the CLI as a single JSON line."""
        return {"error": self.code, "message": self.message, **self.details}


class ParseError(WalkError):
    code = "parse_error"
    exit_status = 2


class DomainError(WalkError, ValueError):
    code = "domain_error"
    exit_status = 3


class BudgetExceededError(WalkError):
    code = "budget_exceeded"
    exit_status = 4


class EmptyRegionError(WalkError):
    code = "empty_region"
    exit_status = 5


def require_lambda(lam: float, *, allow_reference: bool = False) -> float:
    """Validate λ ∈ (0, 1), or (0, 1] when the λ=1 reference walk is allowed."""
    upper_ok = lam <= 1.0 if allow_reference else lam < 1.0
    if not (lam > 0.0 and upper_ok):
        interval = "(0, 1]" if allow_reference else "(0, 1)"
        raise DomainError(f"lambda must lie in {interval}, got {lam}", lam=lam)
    return float(lam)


def require_dimension(d: int) -> int:
    if d < 1:
        raise DomainError(f"dimension must be at least 1, got {d}", d=d)
    return int(d)
