"""
Sink and threshold expansion tests.
"""

import math

import numpy as np
import pytest

from app.core.errors import GridTooCoarse, MissingResonantC, WrongKind
from app.schemas.config import ExpansionSettings
from app.services.boundary_model import CriticalKind
from app.services.classical import RadialKind
from app.services.eigenfunction_models import (
    GaussianProfile,
    ZeroProfile,
    build_sink_eigenfunction,
    build_threshold_eigenfunction,
    chart_grid,
    conjugate_sink,
    resonant_constant,
    sink_expansion,
    sink_grid,
    threshold_expansion,
    threshold_fourier_field,
)
from app.services.eigenfunction_models.operator import LegendrePhaseFactor
from app.services.eigenfunction_models.sink import effective_gap, sink_beta

SMALL = ExpansionSettings(n_x=24, n_y=33, x_min=1e-3, x_max=1e-1)


@pytest.fixture
def sink(sink_point, cos_problem):
    return sink_expansion(sink_point, cos_problem, GaussianProfile(1.0),
                          (sink_point.y_c - 1.0, sink_point.y_c + 1.0))


@pytest.fixture
def threshold_point(cos_problem_l2, find_outgoing):
    """Outgoing degenerate center at lambda_Hess = -1/2 for L = 2."""
    return find_outgoing(cos_problem_l2, -0.5, CriticalKind.MINIMUM)


class TestSinkExpansion:
    """Front-face expansions at outgoing sinks"""

    def test_beta(self, sink_point, cos_factory, find_outgoing):
        """Test beta = r2/2 + i V1(y_c)/(2 nu)"""
        b = cos_factory(1.0, v1=((0, 0.6, 0.0),))
        q = find_outgoing(b, 5.0, CriticalKind.MINIMUM)
        beta = sink_beta(q, b)
        assert beta.real == pytest.approx(0.5 * q.r_real(2))
        assert beta.imag == pytest.approx(0.6 / (2 * math.sqrt(6.0)))

    def test_slow_branch_phase(self, sink, sink_point):
        """Test the phase is the continued slow branch with curvature r1"""
        assert sink.phase.curvature == pytest.approx(sink_point.r_real(1))
        assert sink.phase.curve is not None
        assert sink.resonant_order is None

    def test_index_set(self, sink):
        """Test the first gap of the index set is r1"""
        assert sink.index_generators[0] == 1.0
        assert sink.first_gap == pytest.approx(sink.r1)

    def test_effective_gap_symmetric_potential(self, sink, cos_problem):
        """Test an even potential skips the odd r1 correction"""
        assert effective_gap(sink, cos_problem) == pytest.approx(2 * sink.r1)

    def test_wrong_kind(self, saddle_point, center_point, cos_problem):
        """Test saddles and centers are rejected"""
        for q in (saddle_point, center_point):
            with pytest.raises(WrongKind):
                sink_expansion(q, cos_problem, GaussianProfile())

    def test_no_resonant_constant(self, sink):
        """Test a nonresonant phase has no resonant constant"""
        with pytest.raises(MissingResonantC):
            resonant_constant(sink.phase)

    def test_to_dict(self, sink):
        """Test the JSON summary"""
        data = sink.to_dict()
        assert data["kind"] == "sink"
        assert data["profile"]["type"] == "gaussian"
        assert data["beta"][0] == pytest.approx(0.5 * sink.r2)


class TestSinkField:
    """Sink fields on front-face grids"""

    def test_profile_on_front_face(self, sink, cos_problem):
        """Test w = x^beta u0(Y) with Y = (y - y_c)/x^{r1}"""
        grid = build_sink_eigenfunction(sink, sink_grid(sink, cos_problem, SMALL, y_half=1.0))
        expected = np.exp(sink.beta * np.log(grid.x))[:, None] * GaussianProfile(1.0)(grid.coords)[None, :]
        assert np.allclose(grid.values, expected)
        assert isinstance(grid.phase, LegendrePhaseFactor)
        assert grid.meta["leading_exponent"] == pytest.approx(0.5 * sink.r2)

    def test_grid_beyond_phase(self, sink, cos_problem):
        """Test a chart grid leaving the continued phase is rejected"""
        with pytest.raises(ValueError):
            build_sink_eigenfunction(sink, sink_grid(sink, cos_problem, SMALL, y_half=8.0))

    def test_incoming_conjugate(self, sink, cos_problem):
        """Test the incoming partner is the conjugate field"""
        grid = sink_grid(sink, cos_problem, SMALL, y_half=1.0)
        out = build_sink_eigenfunction(sink, grid)
        inc = build_sink_eigenfunction(conjugate_sink(sink), grid)
        assert np.allclose(inc.values, np.conj(out.values))
        assert inc.meta["incoming"]


class TestThreshold:
    """Degenerate centers at lambda_Hess"""

    def test_degenerate_kind(self, threshold_point):
        """Test lambda_Hess gives a degenerate center with r = 1/2"""
        assert threshold_point.kind == RadialKind.DEGENERATE_CENTER
        assert threshold_point.r1 == threshold_point.r2 == 0.5

    def test_beta_and_phase(self, threshold_point, cos_problem_l2):
        """Test beta = 1/4 and Phi = nu (1 - u^2/4)"""
        exp = threshold_expansion(threshold_point, cos_problem_l2, GaussianProfile(1.0))
        assert exp.beta == 0.25
        phi, dphi, ddphi = exp.phase(np.array([threshold_point.y_c + 1.0]))
        assert phi[0] == pytest.approx(0.75 * exp.nu)
        assert ddphi[0] == pytest.approx(-0.5 * exp.nu)

    def test_wrong_kind(self, center_point, cos_problem):
        """Test ordinary centers are rejected"""
        with pytest.raises(WrongKind):
            threshold_expansion(center_point, cos_problem, GaussianProfile())

    def test_envelope(self, threshold_point, cos_problem_l2):
        """Test |w(x, 0)| = x^{1/4} |log x|^{-1/2} g(0)"""
        exp = threshold_expansion(threshold_point, cos_problem_l2, GaussianProfile(1.0))
        grid = chart_grid(cos_problem_l2, -0.5, threshold_point.y_c, 0.5, 16, 33, 1e-4, 0.5, 4.0)
        field = build_threshold_eigenfunction(exp, grid)
        expected = grid.x ** 0.25 / np.sqrt(-np.log(grid.x))
        assert np.allclose(np.abs(field.values[:, 16]), expected)

    @pytest.mark.parametrize("x_min,x_max", [(1e-2, 0.5), (1e-4, 1.5)])
    def test_grid_too_coarse(self, threshold_point, cos_problem_l2, x_min, x_max):
        """Test the grid must reach |log x| >= 5 and stay below x = 1"""
        exp = threshold_expansion(threshold_point, cos_problem_l2, GaussianProfile(1.0))
        grid = chart_grid(cos_problem_l2, -0.5, threshold_point.y_c, 0.5, 8, 9, x_min, x_max, 2.0)
        with pytest.raises(GridTooCoarse):
            build_threshold_eigenfunction(exp, grid)

    def test_fourier_field_zero_profile(self, threshold_point, cos_problem_l2):
        """Test the quadrature of a vanishing profile is zero"""
        exp = threshold_expansion(threshold_point, cos_problem_l2, ZeroProfile())
        assert threshold_fourier_field(exp, 1e-3, 0.0) == 0j

    def test_fourier_field_matches_leading_order(self, threshold_point, cos_problem_l2):
        """Test the Fourier quadrature and the leading-order field differ by O(1/|log x|)"""
        exp = threshold_expansion(threshold_point, cos_problem_l2, GaussianProfile(1.0))
        grid = chart_grid(cos_problem_l2, -0.5, threshold_point.y_c, 0.5, 3, 5, 1e-5, 1e-3, 2.0)
        field = build_threshold_eigenfunction(exp, grid)
        errors = []
        for i, x in enumerate(grid.x):
            fourier = np.array([threshold_fourier_field(exp, float(x), float(Y)) for Y in grid.coords])
            row = field.values[i]
            error = float(np.max(np.abs(fourier - row)) / np.max(np.abs(row)))
            assert error <= 2.0 / abs(math.log(x))
            errors.append(error)
        assert errors[0] < errors[-1]
