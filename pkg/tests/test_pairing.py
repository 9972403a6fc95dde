"""
Green pairing tests: mode formula, commutator flux, saddle Gram matrices,
trace extraction and S-matrix helpers.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from app.core.errors import FormMismatch, MixedEnergy, SingularDiagonal, WrongKind
from app.schemas.config import ExpansionSettings, NumericsConfig, OracleSettings, PairingSettings
from app.services.boundary_model import BoundaryData, CriticalKind
from app.services.classical import RadialKind
from app.services.eigenfunction_models import (
    SaddleDirection,
    build_center_eigenfunction,
    center_grid,
    center_modes,
    chart_grid,
    polar_grid,
    saddle_models,
)
from app.services.eigenfunction_models.operator import ConstantPhase
from app.services.pairing import (
    ModeTrace,
    PairingMethod,
    TraceKind,
    assemble_smatrix,
    biorthogonal_transform,
    biorthogonalize,
    cutoff_profile,
    extract_mode_trace,
    fresnel_moment,
    oscillator_basis,
    pair_flux,
    pair_modes,
    saddle_gram_modes,
    unitarity_defect,
    y_window,
)

FLAT = BoundaryData(((0, -1.0, 0.0),))
TRACE_GRID = ExpansionSettings(n_x=32, n_y=257, x_min=1e-3, x_max=1e-1)


def flat_field(n_x: int = 801, lam: float = 3.0):
    """w = x^{1/2} under the phase e^{2i/x} on the flat problem (nu = 2 at lam = 3)."""
    grid = polar_grid(FLAT, lam, n_x, 16, 1e-4, 1.0)
    return grid.with_values(np.sqrt(grid.x)[:, None] * np.ones((1, 16)), phase=ConstantPhase(2.0))


class TestCutoff:
    """Smooth step and flux windows"""

    def test_values(self):
        """Test chi vanishes below 0, is one above 1 and one half at the midpoint"""
        chi, d1, d2 = cutoff_profile(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
        assert np.allclose(chi, [0.0, 0.0, 0.5, 1.0, 1.0])
        assert d1[2] == pytest.approx(2.0)
        assert d2[2] == pytest.approx(0.0, abs=1e-12)
        assert d1[0] == d1[-1] == 0.0

    def test_derivatives(self):
        """Test the returned derivatives against central differences"""
        t = np.array([0.2, 0.35, 0.7])
        h = 1e-5
        _, d1, d2 = cutoff_profile(t)
        plus, d1p, _ = cutoff_profile(t + h)
        minus, d1m, _ = cutoff_profile(t - h)
        assert np.allclose(d1, (plus - minus) / (2 * h), rtol=1e-6)
        assert np.allclose(d2, (d1p - d1m) / (2 * h), rtol=1e-5)

    def test_y_window(self, cos_problem):
        """Test the window is one inside and zero outside"""
        grid = chart_grid(cos_problem, 5.0, 0.0, 0.5, 4, 41, 1e-2, 1e-1, 2.0)
        w = y_window(0.5, 1.0)(grid)[0]
        assert np.all(w[np.abs(grid.coords) <= 0.5] == 1.0)
        assert np.all(w[np.abs(grid.coords) >= 1.0] == 0.0)
        with pytest.raises(ValueError):
            y_window(1.0, 0.5)


class TestModeFormula:
    """B = 2 sum sqrt(lam - V0(y_c)) int M+u1 conj(M+u2)"""

    def test_center_traces(self, center_point):
        """Test center traces pair as weighted coefficient sums"""
        t = ModeTrace(center_point, TraceKind.CENTER, np.array([1.0, 0.5 + 0j]))
        result = pair_modes(t, t)
        assert result.method == PairingMethod.MODE_FORMULA
        assert result.value == pytest.approx(2 * math.sqrt(1.5) * 1.25)
        assert result.estimated_error == 0.0

    def test_sink_gaussian(self, sink_point):
        """Test a Gaussian sink profile pairs to 2 nu sqrt(pi)"""
        Y = np.linspace(-10.0, 10.0, 2001)
        t = ModeTrace(sink_point, TraceKind.SINK, np.exp(-0.5 * Y * Y) + 0j, Y=Y)
        result = pair_modes([t], [t])
        assert result.value.real == pytest.approx(2 * math.sqrt(6.0) * math.sqrt(math.pi), rel=1e-10)
        assert result.estimated_error <= 1e-8

    def test_missing_minimum(self, center_point, cos_problem_l2, find_outgoing):
        """Test a minimum present on one side only contributes nothing"""
        elsewhere = find_outgoing(cos_problem_l2, 0.5, CriticalKind.MINIMUM)
        a = ModeTrace(center_point, TraceKind.CENTER, np.array([1.0 + 0j]))
        b = ModeTrace(elsewhere, TraceKind.CENTER, np.array([1.0 + 0j]))
        assert pair_modes(a, b).value == 0j

    def test_mixed_energy(self, center_point, sink_point):
        """Test traces at different lambda are rejected"""
        c = ModeTrace(center_point, TraceKind.CENTER, np.array([1.0 + 0j]))
        s = ModeTrace(sink_point, TraceKind.SINK, np.ones(3, dtype=complex), Y=np.arange(3.0))
        with pytest.raises(MixedEnergy):
            pair_modes(c, s)

    def test_incoming_rejected(self, center_point):
        """Test incoming traces are rejected"""
        t = ModeTrace(center_point, TraceKind.CENTER, np.array([1.0 + 0j]), incoming=True)
        with pytest.raises(ValueError):
            pair_modes(t, t)

    def test_sink_without_samples(self, sink_point):
        """Test sink traces need their Y samples"""
        t = ModeTrace(sink_point, TraceKind.SINK, np.ones(3, dtype=complex))
        with pytest.raises(FormMismatch):
            pair_modes(t, t)


class TestFluxLimit:
    """Commutator flux with cutoff extrapolation"""

    def test_manufactured_flux(self):
        """Test the flux of x^{1/2} e^{2i/x} against itself is 2 nu times the circumference"""
        field = flat_field()
        result = pair_flux(field, field, PairingSettings())
        assert result.method == PairingMethod.FLUX_LIMIT
        assert result.value.real == pytest.approx(8 * math.pi, rel=1e-4)
        assert abs(result.value.imag) <= 1e-4 * 8 * math.pi
        assert len(result.scales) == PairingSettings().flux_scales
        assert all(s == pytest.approx(8 * math.pi, rel=1e-4) for s in (v.real for v in result.samples))

    def test_different_grids(self):
        """Test fields on different grids are rejected"""
        with pytest.raises(ValueError):
            pair_flux(flat_field(801), flat_field(401))

    def test_mixed_energy(self):
        """Test fields at different lambda are rejected"""
        field = flat_field()
        with pytest.raises(MixedEnergy):
            pair_flux(field, field.with_values(field.values, lam=4.0))

    def test_collar_too_short(self):
        """Test the cutoff scales must fit inside the collar"""
        grid = polar_grid(FLAT, 3.0, 64, 8, 1e-2, 1e-1)
        field = grid.with_values(np.ones((64, 8)), phase=ConstantPhase(2.0))
        with pytest.raises(ValueError):
            pair_flux(field, field)


class TestSaddleGram:
    """Saddle Gram matrices and biorthogonalization"""

    def test_fresnel_moment(self):
        """Test the Fresnel moments: odd ones vanish and k = 0 is sqrt(pi/kappa) e^{i pi/4}"""
        assert fresnel_moment(1, 2.0) == 0j
        assert fresnel_moment(0, 2.0) == pytest.approx(math.sqrt(math.pi / 2.0) * np.exp(0.25j * math.pi))

    def test_leading_gram_entry(self, saddle_point, cos_problem):
        """Test G[0, 0] = 2 nu sqrt(pi/kappa) e^{i pi/4}, kappa = nu (r2 - r1)/2"""
        out = saddle_models(saddle_point, cos_problem, SaddleDirection.OUTGOING, 1)
        inc = saddle_models(saddle_point, cos_problem, SaddleDirection.INCOMING, 1)
        G = saddle_gram_modes(out, inc)
        nu = out.nu
        kappa = 0.5 * nu * (saddle_point.r_real(2) - saddle_point.r_real(1))
        expected = 2 * nu * math.sqrt(math.pi / kappa) * np.exp(0.25j * math.pi)
        assert G[0, 0] == pytest.approx(expected, rel=1e-9)

    def test_mismatched_saddles(self, saddle_point, sink_point, cos_problem):
        """Test the series must sit at one saddle"""
        out = saddle_models(saddle_point, cos_problem, SaddleDirection.OUTGOING, 1)
        other = replace(saddle_models(saddle_point, cos_problem, SaddleDirection.INCOMING, 1), q=sink_point)
        with pytest.raises(ValueError):
            saddle_gram_modes(out, other)

    def test_transform_inverts_upper_part(self):
        """Test conj(T) inverts the upper triangle and the lower part is reported"""
        gram = np.array([[2.0, 1.0j, 0.5], [1e-3, 1.0 + 1j, -1.0], [0.0, 2e-3, 3.0]])
        result = biorthogonal_transform(gram)
        assert np.allclose(np.triu(gram) @ np.conj(result.transform), np.eye(3))
        assert result.identity_defect <= 1e-12
        assert result.lower_defect == pytest.approx(2e-3)

    def test_singular_diagonal(self):
        """Test a vanishing diagonal pairing raises"""
        with pytest.raises(SingularDiagonal) as info:
            biorthogonal_transform(np.array([[1.0, 0.3], [0.0, 0.0]]))
        assert info.value.details["n"] == 1

    def test_biorthogonalize(self, saddle_point, cos_problem):
        """Test the renormalized incoming models pair to the identity"""
        out = saddle_models(saddle_point, cos_problem, SaddleDirection.OUTGOING, 1)
        inc = saddle_models(saddle_point, cos_problem, SaddleDirection.INCOMING, 1)
        result = biorthogonalize(out, inc)
        assert result.identity_defect <= 1e-8
        assert len(result.incoming) == result.transform.shape[1]
        assert "transform" in result.to_dict()


class TestTraceExtraction:
    """M+ at outgoing minima"""

    def test_center_trace(self, center_point, cos_problem):
        """Test the oscillator coefficients of a two-mode field are recovered"""
        exp = center_modes(center_point, cos_problem, 8).with_gammas([1.0, 0.5])
        field = build_center_eigenfunction(exp, center_grid(exp, cos_problem, TRACE_GRID), TRACE_GRID)
        trace = extract_mode_trace(field, center_point, count=4)
        assert trace.kind == TraceKind.CENTER
        assert np.allclose(trace.trace, [1.0, 0.5, 0.0, 0.0], atol=1e-6)
        assert trace.fit_residual <= 1e-6
        assert pair_modes(trace, trace).value.real == pytest.approx(2 * math.sqrt(1.5) * 1.25, rel=1e-5)

    def test_saddle_rejected(self, saddle_point, cos_problem):
        """Test saddles carry no mode trace"""
        field = polar_grid(cos_problem, 5.0, 8, 8, 1e-3, 1e-1)
        with pytest.raises(WrongKind):
            extract_mode_trace(field, saddle_point)

    def test_empty_range(self, center_point, cos_problem):
        """Test an x range without shells is rejected"""
        field = polar_grid(cos_problem, 0.5, 8, 8, 1e-3, 1e-1)
        with pytest.raises(ValueError):
            extract_mode_trace(field, center_point, x_range=(0.5, 0.9))


class TestUnitarity:
    """S-matrix unitarity defect"""

    def test_unitary(self):
        """Test a unitary matrix has no defect"""
        c, s = math.cos(0.3), math.sin(0.3)
        S = np.array([[c, -s], [s, c]]) * np.exp(0.7j)
        assert unitarity_defect(S) <= 1e-14

    def test_scaled(self):
        """Test ||S*S - I|| for S = 2I"""
        assert unitarity_defect(2.0 * np.eye(3)) == pytest.approx(3.0)
        assert unitarity_defect(np.zeros((0, 0))) == 0.0


class TestOscillatorBasis:
    """Fixed sink basis for S-matrix columns"""

    @pytest.mark.parametrize("alpha", [1.0, 0.5])
    def test_orthonormal(self, alpha):
        """Test the Hermite functions are orthonormal on a wide grid"""
        Y = np.linspace(-20.0, 20.0, 8001)
        basis = oscillator_basis(5, Y, alpha)
        gram = basis @ basis.T * (Y[1] - Y[0])
        assert basis.shape == (5, Y.size)
        assert np.allclose(gram, np.eye(5), atol=1e-10)


@pytest.mark.slow
class TestAssembleSMatrix:
    """Cutoff-source S-matrix on a small collar"""

    @pytest.fixture
    def single_center(self):
        config = NumericsConfig()
        return config.model_copy(update={
            "pairing": config.pairing.model_copy(update={"j_s": 1}),
            "oracle": OracleSettings(n_s=256, n_y=128, x_min=0.01, x_abs=0.05, x_max=1.0),
        })

    def test_single_center(self, cos_problem, single_center):
        """Test one center at lambda = 0.5 scatters into itself with |S11| close to 1"""
        S = assemble_smatrix(cos_problem, 0.5, single_center)
        assert S.matrix.shape == (1, 1)
        assert np.all(np.isfinite(S.matrix))
        assert S.basis[0]["kind"] == RadialKind.CENTER.value
        assert S.columns[0]["mode"] == 0
        assert S.unitarity_defect == pytest.approx(unitarity_defect(S.matrix))
        assert abs(abs(S.matrix[0, 0]) - 1.0) <= 0.25
