"""
Problem definition schema (the JSON problem file).
"""

from typing import List, Tuple

from pydantic import BaseModel, Field, field_validator


FourierTerm = Tuple[int, float, float]


class ProblemFile(BaseModel):
    """
    Boundary jet of the potential: V0 and V1 as finite Fourier series
    in theta = 2*pi*y/circumference, plus the boundary arclength.
    """

    v0: List[FourierTerm] = Field(..., description="[[k, cos_coeff, sin_coeff], ...] for V0")
    v1: List[FourierTerm] = Field(default_factory=list, description="Same layout for V1 = dV/dx at x=0")
    circumference: float = Field(2 * 3.141592653589793, gt=0, description="Boundary arclength")
    name: str = Field("", description="Free-form label")

    model_config = {
        "json_schema_extra": {
            "example": {
                "v0": [[1, 1.0, 0.0]],
                "v1": [],
                "circumference": 6.283185307179586,
                "name": "cos",
            }
        }
    }

    @field_validator("v0", "v1")
    @classmethod
    def _non_negative_modes(cls, terms: List[FourierTerm]) -> List[FourierTerm]:
        for k, _, _ in terms:
            if k < 0:
                raise ValueError(f"Fourier mode index must be >= 0, got {k}")
        return terms
