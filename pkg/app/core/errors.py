"""
Error hierarchy for radialiq.
Every numerical failure carries a stable machine code; the CLI serializes
`to_dict()` to stderr and exits with status 1.
"""

from typing import Any, Dict, Optional


class RadialIQError(Exception):
    """Base class for all domain errors."""

    code = "radialiq_error"

    def __init__(self, message: str = "", details: Optional[Dict[str, Any]] = None):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": self.code,
            "type": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


# ========== INPUT ==========

class ProblemFileError(RadialIQError):
    code = "problem_file"


class ConfigError(RadialIQError):
    code = "config"


class InvalidArgument(RadialIQError, ValueError):
    """A caller-supplied range, list or option the operation cannot use."""

    code = "invalid_argument"


# ========== BOUNDARY MODEL ==========

class NotMorse(RadialIQError):
    code = "not_morse"


class NoConvergence(RadialIQError):
    code = "no_convergence"


# ========== CLASSICAL ==========

class CriticalEnergy(RadialIQError):
    code = "critical_energy"


class EnergyDrift(RadialIQError):
    code = "energy_drift"


class WrongKind(RadialIQError):
    code = "wrong_kind"


class UnresolvedConnection(RadialIQError):
    code = "unresolved_connection"


# ========== LEGENDRIAN ==========

class ResonantObstruction(RadialIQError):
    code = "resonant_obstruction"

    def __init__(self, order: int, message: str = "", details: Optional[Dict[str, Any]] = None):
        super().__init__(message or f"eikonal jet obstructed at order {order}", {"order": order, **(details or {})})
        self.order = order


class FoldDetected(RadialIQError):
    code = "fold_detected"


# ========== EIGENFUNCTION MODELS ==========

class NotCenter(RadialIQError):
    code = "not_center"


class TailTooLarge(RadialIQError):
    code = "tail_too_large"


class MissingResonantC(RadialIQError):
    code = "missing_resonant_c"


class GridTooCoarse(RadialIQError):
    code = "grid_too_coarse"


class ResonantExponent(RadialIQError):
    code = "resonant_exponent"

    def __init__(self, exponent: float, message: str = "", details: Optional[Dict[str, Any]] = None):
        super().__init__(message or f"resonant exponent {exponent:.6g}", {"exponent": exponent, **(details or {})})
        self.exponent = exponent


class CharacteristicEscape(RadialIQError):
    code = "characteristic_escape"


class UnresolvedOscillation(RadialIQError):
    code = "unresolved_oscillation"


# ========== PAIRING ==========

class MixedEnergy(RadialIQError):
    code = "mixed_energy"


class SingularDiagonal(RadialIQError):
    code = "singular_diagonal"


class FormMismatch(RadialIQError):
    code = "form_mismatch"


# ========== ORACLE ==========

class ResolutionError(RadialIQError):
    code = "resolution"


class InsufficientRange(RadialIQError):
    code = "insufficient_range"


class NoLimit(RadialIQError):
    code = "no_limit"
