"""
Shared fixtures: cos potentials on circles of arclength 2 pi L, the default
numerics config, and the radial points used throughout the suite.
"""

import math

import pytest

from app.schemas.config import NumericsConfig
from app.services.boundary_model import BoundaryData, CriticalKind
from app.services.classical import radial_points


def cos_data(length: float = 1.0, v1=()) -> BoundaryData:
    return BoundaryData(((1, 1.0, 0.0),), tuple(v1), 2.0 * math.pi * length)


def outgoing(b: BoundaryData, lam: float, kind: CriticalKind):
    return next(q for q in radial_points(b, lam) if q.outgoing and q.crit.kind == kind)


@pytest.fixture
def config() -> NumericsConfig:
    return NumericsConfig()


@pytest.fixture
def cos_problem() -> BoundaryData:
    return cos_data(1.0)


@pytest.fixture
def cos_problem_l2() -> BoundaryData:
    return cos_data(2.0)


@pytest.fixture
def saddle_point(cos_problem):
    """Outgoing saddle over the maximum y = 0 at lambda = 5."""
    return outgoing(cos_problem, 5.0, CriticalKind.MAXIMUM)


@pytest.fixture
def sink_point(cos_problem):
    """Outgoing sink over the minimum y = pi at lambda = 5."""
    return outgoing(cos_problem, 5.0, CriticalKind.MINIMUM)


@pytest.fixture
def center_point(cos_problem):
    """Outgoing center over the minimum y = pi at lambda = 0.5."""
    return outgoing(cos_problem, 0.5, CriticalKind.MINIMUM)


@pytest.fixture
def problem_file(tmp_path):
    path = tmp_path / "cos.json"
    path.write_text('{"name": "cos", "v0": [[1, 1.0, 0.0]], "v1": [], "circumference": 6.283185307179586}')
    return str(path)


@pytest.fixture
def cos_factory():
    """cos_factory(L, v1=()) -> BoundaryData for V0 = cos(y / L)."""
    return cos_data


@pytest.fixture
def find_outgoing():
    """find_outgoing(b, lam, CriticalKind) -> the outgoing radial point over that critical point."""
    return outgoing
