"""
Center expansion tests: oscillator modes of the front-face operator and the
fields built from them.
"""

import math

import numpy as np
import pytest

from app.core.errors import NotCenter, TailTooLarge
from app.schemas.config import ExpansionSettings
from app.services.boundary_model import CriticalKind
from app.services.classical import radial_points
from app.services.eigenfunction_models import (
    build_center_eigenfunction,
    center_grid,
    center_modes,
    conjugate_expansion,
    eigen_residual,
    mode_gram,
    mode_zero_count,
)
from app.services.eigenfunction_models.operator import ConjugatePhase

Y_WIDE = np.linspace(-18.0, 18.0, 18001)
SMALL = ExpansionSettings(n_x=32, n_y=33, x_min=1e-3, x_max=1e-1)


@pytest.fixture
def expansion(center_point, cos_problem):
    return center_modes(center_point, cos_problem, 12)


class TestCenterModes:
    """Oscillator data at an outgoing center"""

    def test_alpha(self, expansion, center_point):
        """Test alpha^2 = V0''/2 - nu^2/4 = 1/8 at lambda = 0.5"""
        assert expansion.alpha == pytest.approx(math.sqrt(0.125))
        assert expansion.nu == pytest.approx(math.sqrt(1.5))
        assert expansion.q == center_point

    def test_betas(self, expansion):
        """Test beta_j = alpha (2j + 1)"""
        assert np.allclose(expansion.betas, expansion.alpha * (2 * np.arange(12) + 1))

    def test_thetas_use_v1(self, find_outgoing, cos_factory):
        """Test theta_j = (beta_j + V1(y_c)) / (2 nu)"""
        b = cos_factory(1.0, v1=((0, 0.3, 0.0),))
        exp = center_modes(find_outgoing(b, 0.5, CriticalKind.MINIMUM), b, 4)
        assert exp.v1_c == pytest.approx(0.3)
        assert np.allclose(exp.thetas, (exp.betas + 0.3) / (2 * exp.nu))

    def test_not_a_center(self, saddle_point, cos_problem):
        """Test saddles are rejected"""
        with pytest.raises(NotCenter):
            center_modes(saddle_point, cos_problem)

    def test_incoming_rejected(self, cos_problem):
        """Test the incoming center is rejected"""
        incoming = next(q for q in radial_points(cos_problem, 0.5) if not q.outgoing)
        with pytest.raises(NotCenter):
            center_modes(incoming, cos_problem)

    @pytest.mark.parametrize("j", [0, 1, 2, 5])
    def test_eigen_residual(self, expansion, j):
        """Test Q v_j = beta_j v_j by finite differences"""
        assert eigen_residual(expansion, j, Y_WIDE) <= 1e-6

    def test_orthonormal(self, expansion):
        """Test the modes are L2-orthonormal"""
        gram = mode_gram(expansion, Y_WIDE, 8)
        assert np.max(np.abs(gram - np.eye(8))) <= 1e-8

    def test_zero_counts(self, expansion):
        """Test mode j has j zeros"""
        assert [mode_zero_count(expansion, j, Y_WIDE) for j in range(8)] == list(range(8))

    def test_conjugate(self, expansion):
        """Test the conjugate expansion is the incoming partner"""
        partner = conjugate_expansion(expansion)
        assert partner.incoming
        assert not conjugate_expansion(partner).incoming


class TestCenterField:
    """Center fields on blow-up grids"""

    def test_ground_mode_envelope(self, expansion, cos_problem):
        """Test |w| = x^{1/4} psi_0(0) on Y = 0"""
        exp = expansion.with_gammas([1.0])
        grid = build_center_eigenfunction(exp, center_grid(exp, cos_problem, SMALL), SMALL)
        mid = SMALL.n_y // 2
        expected = grid.x ** 0.25 * (exp.alpha / math.pi) ** 0.25
        assert np.allclose(np.abs(grid.values[:, mid]), expected, rtol=1e-10)
        assert grid.meta["top_mode"] == 0

    def test_zero_coefficients(self, expansion, cos_problem):
        """Test vanishing coefficients give the zero field"""
        exp = expansion.with_gammas([0.0, 0.0])
        grid = build_center_eigenfunction(exp, center_grid(exp, cos_problem, SMALL), SMALL)
        assert not np.any(grid.values)

    def test_incoming_is_conjugate(self, expansion, cos_problem):
        """Test the incoming field is the complex conjugate with the conjugate phase"""
        exp = expansion.with_gammas([1.0, 0.5j])
        grid = center_grid(exp, cos_problem, SMALL)
        out = build_center_eigenfunction(exp, grid, SMALL)
        inc = build_center_eigenfunction(conjugate_expansion(exp), grid, SMALL)
        assert np.allclose(inc.values, np.conj(out.values))
        assert isinstance(inc.phase, ConjugatePhase)

    def test_tail_too_large(self, center_point, cos_problem):
        """Test coefficients beyond j_max are bounded by series_tol"""
        exp = center_modes(center_point, cos_problem, 2).with_gammas([1.0, 0.0, 1e-3])
        with pytest.raises(TailTooLarge):
            build_center_eigenfunction(exp, center_grid(exp, cos_problem, SMALL), SMALL)
