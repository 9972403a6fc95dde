"""
Model operator, collar grid, field block and front-face profile tests.
"""

import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from app.core.errors import UnresolvedOscillation
from app.services.boundary_model import BoundaryData
from app.services.eigenfunction_models import (
    Chart,
    GaussianProfile,
    HermiteProfile,
    ModelOperator,
    SampledProfile,
    ZeroProfile,
    chart_grid,
    polar_grid,
    profile_from_dict,
    read_field_block,
    residual,
    write_field_block,
)
from app.services.eigenfunction_models.operator import ConstantPhase

FLAT = BoundaryData(((0, -1.0, 0.0),))


class TestGrids:
    """Collar grids and charts"""

    def test_polar_grid(self, cos_problem):
        """Test log-uniform x and a periodic y axis"""
        grid = polar_grid(cos_problem, 5.0, 16, 32, 1e-3, 1e-1)
        assert grid.periodic
        assert grid.x[0] == pytest.approx(1e-3)
        assert grid.x[-1] == pytest.approx(1e-1)
        assert np.allclose(np.diff(grid.s), grid.ds)
        assert grid.coords[-1] < cos_problem.circumference

    def test_blowup_chart(self, cos_problem):
        """Test y = y_c + x^rho Y"""
        grid = chart_grid(cos_problem, 5.0, math.pi, 0.5, 8, 9, 1e-2, 1e-1, 4.0)
        y = grid.physical_y()
        assert np.allclose(y, math.pi + np.outer(np.sqrt(grid.x), grid.coords))
        assert grid.chart == Chart.blowup(math.pi, 0.5)

    def test_invalid_axes(self, cos_problem):
        """Test bad x ranges and shapes are rejected"""
        with pytest.raises(ValueError):
            polar_grid(cos_problem, 5.0, 8, 8, 1e-1, 1e-3)
        grid = polar_grid(cos_problem, 5.0, 8, 8, 1e-3, 1e-1)
        with pytest.raises(ValueError):
            grid.with_values(np.zeros((8, 7)))


class TestModelOperator:
    """Conjugated model operator and residual slopes"""

    def test_no_phase_multiplication(self, cos_problem):
        """Test a constant amplitude gives (V0 - lam) w away from the stencil edges"""
        grid = polar_grid(cos_problem, 5.0, 16, 16, 1e-3, 1e-1)
        grid = grid.with_values(np.ones((16, 16)))
        out = ModelOperator(cos_problem, 5.0).apply(grid)
        expected = np.cos(grid.coords)[None, :] - 5.0 + 0 * grid.x[:, None]
        assert np.allclose(out[4:-4], expected[4:-4], atol=1e-10)
        assert np.all(np.isnan(out[:4]))

    def test_manufactured_slope(self):
        """Test w = x^{1/2} under the constant phase leaves exactly -x^{5/2}/4"""
        nu = 2.0
        lam = nu * nu - 1.0
        grid = polar_grid(FLAT, lam, 64, 16, 1e-3, 0.3)
        grid = grid.with_values(np.sqrt(grid.x)[:, None] * np.ones((1, 16)), phase=ConstantPhase(nu))
        report = residual(grid)
        assert report.slope == pytest.approx(2.5, abs=1e-4)
        assert report.n_fit == 56
        inner = np.isfinite(report.shell_norm)
        expected = 0.25 * grid.x[inner] ** 2.5 * math.sqrt(16 * grid.dcoord)
        assert np.allclose(report.shell_norm[inner], expected, rtol=1e-4)

    def test_symbol(self, cos_problem):
        """Test the principal symbol nu^2 + mu^2 + V0"""
        op = ModelOperator(cos_problem, 5.0)
        assert op.symbol(0.0, 2.0, 0.0) == pytest.approx(5.0)

    def test_unresolved_oscillation(self, cos_problem):
        """Test a field turning by pi per sample is rejected"""
        grid = polar_grid(cos_problem, 5.0, 16, 16, 1e-3, 1e-1)
        checker = np.where((np.arange(16)[:, None] + np.arange(16)[None, :]) % 2 == 0, 1.0, -1.0)
        with pytest.raises(UnresolvedOscillation):
            residual(grid.with_values(checker))

    def test_report_json(self):
        """Test the residual report serializes its fit"""
        grid = polar_grid(FLAT, 3.0, 32, 16, 1e-3, 0.3)
        grid = grid.with_values(np.sqrt(grid.x)[:, None] * np.ones((1, 16)), phase=ConstantPhase(2.0))
        data = residual(grid, (1e-2, 0.3)).to_dict()
        assert data["fit_range"] == [1e-2, 0.3]
        assert len(data["band95"]) == 2
        assert data["band95"][0] <= data["slope"] <= data["band95"][1]


class TestFieldBlock:
    """Binary field blocks"""

    def test_write_read(self, cos_problem, tmp_path):
        """Test the header and values survive a write/read"""
        grid = chart_grid(cos_problem, 5.0, 0.0, 0.5, 6, 5, 1e-2, 1e-1, 2.0)
        values = np.arange(30).reshape(6, 5) * (1 + 2j)
        grid = grid.with_values(values)
        path = tmp_path / "field.bin"
        header = write_field_block(grid, str(path))
        assert header["schema"] == "radialiq.field/v1"
        assert header["values"] == "amplitude"
        assert header["x"] == pytest.approx(list(grid.x))
        read_header, data = read_field_block(str(path))
        assert read_header["n_x"] == 6 and read_header["n_y"] == 5
        assert np.array_equal(data, values)

    def test_full_field(self, tmp_path):
        """Test the full field carries the phase factor"""
        grid = polar_grid(FLAT, 3.0, 4, 4, 1e-1, 0.5)
        grid = grid.with_values(np.ones((4, 4)), phase=ConstantPhase(2.0))
        path = str(tmp_path / "f.bin")
        write_field_block(grid, path, full_field=True)
        _, data = read_field_block(path)
        assert np.allclose(data, np.exp(2j / grid.x)[:, None] * np.ones((1, 4)))


class TestProfiles:
    """Front-face profiles"""

    def test_gaussian_round_trip(self):
        """Test describe() feeds back through profile_from_dict"""
        profile = GaussianProfile(0.3, 0.1, 1 + 2j, 0.5)
        assert profile_from_dict(profile.describe()) == profile

    def test_hermite_orthonormal(self):
        """Test the Hermite basis is orthonormal"""
        Y = np.linspace(-20.0, 20.0, 8001)
        basis = HermiteProfile((), 2.0).basis(Y, 6)
        gram = trapezoid(basis[:, None, :] * basis[None, :, :], Y, axis=-1)
        assert np.allclose(gram, np.eye(6), atol=1e-10)

    def test_sampled_profile(self):
        """Test the spline reproduces a cubic and vanishes outside its grid"""
        Y = np.linspace(-2.0, 2.0, 41)
        profile = SampledProfile(Y, Y ** 3)
        assert profile(0.37) == pytest.approx(0.37 ** 3, abs=1e-12)
        assert profile(3.0) == 0.0

    def test_zero_and_unknown(self):
        """Test the zero profile and an unknown type"""
        assert not np.any(ZeroProfile()(np.linspace(0, 1, 5)))
        with pytest.raises(ValueError):
            profile_from_dict({"type": "airy"})
