"""
Saddle model and transport equation tests.
"""

from dataclasses import replace

import numpy as np
import pytest

from app.core.errors import CharacteristicEscape, NoConvergence, WrongKind
from app.schemas.config import ExpansionSettings
from app.services.eigenfunction_models import (
    GeneralizedSeries,
    SaddleDirection,
    apply_model_operator,
    build_saddle_eigenfunction,
    chart_grid,
    polar_grid,
    saddle_grid,
    saddle_models,
    transport_solve,
)
from app.services.eigenfunction_models.saddle import coefficient_residual, conjugation_data, kernel_monomial

SMALL = ExpansionSettings(n_x=24, n_y=33, x_min=1e-3, x_max=1e-1)


@pytest.fixture
def outgoing_series(saddle_point, cos_problem):
    return saddle_models(saddle_point, cos_problem, SaddleDirection.OUTGOING, 2)


class TestGeneralizedSeries:
    """Exact-exponent series and the model transport operator"""

    def test_kernel_annihilated(self):
        """Test (u x^{-rho})^n lies in the kernel of the model operator"""
        for n in range(4):
            assert len(apply_model_operator(kernel_monomial(n, 0.3), 2.0)) == 0

    def test_model_operator_factor(self):
        """Test x^{p + q rho} u^m picks up -2 nu (p + rho (q + m)) and one power of x"""
        series = GeneralizedSeries(0.25, {(1, 0, 2): 1.0 + 0j})
        out = apply_model_operator(series, 3.0)
        assert list(out.coeffs) == [(2, 0, 2)]
        assert out.coeffs[(2, 0, 2)] == pytest.approx(-9.0)

    def test_evaluate(self):
        """Test evaluation of a two-term series"""
        series = GeneralizedSeries(0.5, {(0, 0, 0): 1.0 + 0j, (1, -2, 1): 2.0 + 0j})
        x = np.array([0.25, 0.5])
        u = np.array([0.1, 0.2])
        assert np.allclose(series.evaluate(x, u), 1.0 + 2.0 * u)
        assert series.exponent((1, -2, 1)) == 0.0


class TestSaddleModels:
    """Outgoing and incoming model solutions at saddles"""

    def test_beta(self, outgoing_series, saddle_point):
        """Test beta = (1 - r1)/2 outgoing and r1/2 incoming"""
        assert outgoing_series.rho == pytest.approx(saddle_point.r_real(1))
        assert outgoing_series.beta.real == pytest.approx(0.5 * (1 - saddle_point.r_real(1)))

    def test_incoming_beta(self, saddle_point, cos_problem):
        """Test the incoming models use branch 2"""
        series = saddle_models(saddle_point, cos_problem, "incoming", 1)
        assert series.rho == pytest.approx(saddle_point.r_real(2))
        assert series.beta.real == pytest.approx(0.5 * saddle_point.r_real(1))

    def test_solved_coefficients(self, outgoing_series):
        """Test every solved coefficient of (B + xX) W_n vanishes"""
        for model in outgoing_series.models:
            scale = max(1.0, model.series.max_abs())
            assert coefficient_residual(model, outgoing_series).max_abs() <= 1e-9 * scale

    def test_leading_term(self, outgoing_series):
        """Test W_n starts with u^n at level zero"""
        for model in outgoing_series.models:
            assert model.level(0)[model.n] == 1.0
            assert all(m >= model.n for m in model.level(0))

    def test_leading_exponent(self, outgoing_series):
        """Test |u_n| ~ x^{Re beta + n (rho_chart - rho)}"""
        beta = outgoing_series.beta.real
        rho = outgoing_series.rho
        assert outgoing_series.leading_exponent(2, 0.5) == pytest.approx(beta + 2 * (0.5 - rho))

    def test_coefficients(self, outgoing_series):
        """Test with_coeffs bounds the number of coefficients"""
        assert outgoing_series.with_coeffs([0, 1]).coeffs[1] == 1
        with pytest.raises(ValueError):
            outgoing_series.with_coeffs([1, 0, 0, 0])

    def test_wrong_kind(self, sink_point, cos_problem):
        """Test sinks are rejected"""
        with pytest.raises(WrongKind):
            saddle_models(sink_point, cos_problem, SaddleDirection.OUTGOING, 1)

    def test_to_dict(self, outgoing_series):
        """Test the JSON summary lists every model"""
        data = outgoing_series.to_dict()
        assert data["direction"] == "outgoing"
        assert [m["n"] for m in data["models"]] == [0, 1, 2]

    def test_field(self, outgoing_series, cos_problem):
        """Test the field records its leading exponent"""
        grid = build_saddle_eigenfunction(outgoing_series, saddle_grid(outgoing_series, cos_problem, SMALL))
        assert grid.meta["modes"] == [0]
        assert grid.meta["leading_exponent"] == pytest.approx(outgoing_series.beta.real)
        assert np.all(np.isfinite(grid.values))


class TestConjugationData:
    """Normal-form data at the saddle"""

    def test_beta0_matches_series(self, outgoing_series):
        """Test the jet reproduces beta_0 of the model series"""
        conj = conjugation_data(outgoing_series.phase, outgoing_series.v1_taylor, outgoing_series.degree)
        assert conj.beta0 == pytest.approx(outgoing_series.beta)
        assert conj.rho == pytest.approx(outgoing_series.rho)

    def test_inconsistent_jet(self, outgoing_series):
        """Test a jet not centred on the saddle raises NoConvergence"""
        jet = np.array(outgoing_series.phase.jet)
        jet[0] *= 1.1
        phase = replace(outgoing_series.phase, jet=jet)
        with pytest.raises(NoConvergence) as info:
            conjugation_data(phase, outgoing_series.v1_taylor, outgoing_series.degree)
        assert "expected" in info.value.details


class TestTransport:
    """Characteristic solver for -2 nu (theta + r u d_u) v = f"""

    def test_constant_source(self, cos_problem):
        """Test f = -2 nu C with zero data gives v = C log(x / x0)"""
        grid = polar_grid(cos_problem, 5.0, 17, 16, 1e-3, 1e-1)
        nu, C = 2.0, 0.7
        f = grid.with_values(np.full(grid.values.shape, -2.0 * nu * C))
        x0 = grid.x[-1]
        result = transport_solve(f, 0.4, x0, np.zeros(16), nu)
        expected = C * np.log(grid.x / x0)[:, None] * np.ones((1, 16))
        assert np.allclose(result.solution.values, expected, atol=1e-12)
        assert result.ok

    def test_kernel_data_transported(self, cos_problem):
        """Test constant boundary data is carried unchanged"""
        grid = polar_grid(cos_problem, 5.0, 9, 16, 1e-3, 1e-1)
        result = transport_solve(grid, 0.4, grid.x[4], np.ones(16), 2.0)
        assert np.allclose(result.solution.values, 1.0)

    def test_invalid_arguments(self, cos_problem):
        """Test r = 0, off-node x0 and stretched charts are rejected"""
        grid = polar_grid(cos_problem, 5.0, 9, 16, 1e-3, 1e-1)
        with pytest.raises(ValueError):
            transport_solve(grid, 0.0, grid.x[0], np.zeros(16), 2.0)
        with pytest.raises(ValueError):
            transport_solve(grid, 0.4, 0.05, np.zeros(16), 2.0)
        stretched = chart_grid(cos_problem, 5.0, 0.0, 0.5, 9, 16, 1e-3, 1e-1, 1.0)
        with pytest.raises(ValueError):
            transport_solve(stretched, 0.4, stretched.x[0], np.zeros(16), 2.0)

    def test_characteristic_escape(self, cos_problem):
        """Test characteristics leaving a finite window raise"""
        window = chart_grid(cos_problem, 5.0, 0.0, 0.0, 9, 16, 1e-3, 1e-1, 1.0)
        with pytest.raises(CharacteristicEscape):
            transport_solve(window, 0.4, window.x[-1], np.ones(16), 2.0)
