"""
Boundary model tests: critical points, thresholds, range report and problem files.
"""

import json
import math

import numpy as np
import pytest

from app.core.errors import NotMorse, ProblemFileError
from app.schemas.problem import ProblemFile
from app.services.boundary_model import (
    BoundaryData,
    CriticalKind,
    EnergyRange,
    energy_range,
    find_critical_points,
    load_problem,
    range_report,
    thresholds,
)


def _circle_distance(a: float, b: float, period: float) -> float:
    return abs((a - b + 0.5 * period) % period - 0.5 * period)


class TestFourierJet:
    """Exact derivatives of the Fourier series"""

    def test_values_and_derivatives(self, cos_problem):
        """Test V0 = cos y and its first two derivatives"""
        y = np.linspace(0.0, 2 * math.pi, 17)
        assert np.allclose(cos_problem.v0(y), np.cos(y), atol=1e-14)
        assert np.allclose(cos_problem.v0(y, 1), -np.sin(y), atol=1e-14)
        assert np.allclose(cos_problem.v0(y, 2), -np.cos(y), atol=1e-14)

    def test_length_scale(self, cos_problem_l2):
        """Test the series is in theta = y / L on a circle of length 2 pi L"""
        assert cos_problem_l2.v0.scalar(2 * math.pi) == pytest.approx(-1.0)
        assert cos_problem_l2.v0.scalar(1.0, 2) == pytest.approx(-0.25 * math.cos(0.5))

    def test_scalar_matches_vectorized(self, cos_factory):
        """Test the integrator fast path agrees with the array path"""
        b = cos_factory(1.0).shifted(0.3)
        for order in range(4):
            assert b.v0.scalar(0.7, order) == pytest.approx(float(b.v0(0.7, order)), abs=1e-14)

    def test_taylor(self, cos_problem):
        """Test Taylor coefficients at the maximum"""
        coeffs = cos_problem.v0.taylor(0.0, 4)
        assert np.allclose(coeffs, [1.0, 0.0, -0.5, 0.0, 1.0 / 24.0], atol=1e-14)

    def test_zero_mode(self):
        """Test a constant term contributes to the value only"""
        b = BoundaryData(((0, -1.0, 0.0), (1, 1.0, 0.0)))
        assert b.v0.scalar(0.0) == pytest.approx(0.0)
        assert b.v0.mean() == -1.0
        assert b.v0.scalar(0.0, 1) == pytest.approx(0.0)

    def test_translated(self, cos_problem):
        """Test translation moves the maximum"""
        moved = cos_problem.translated(0.5)
        assert moved.v0.scalar(0.5) == pytest.approx(1.0)


class TestCriticalPoints:
    """Critical points of V0 on the circle"""

    def test_cos_critical_points(self, cos_problem):
        """Test the maximum at 0 and the minimum at pi"""
        points = find_critical_points(cos_problem)
        assert len(points) == 2
        by_kind = {p.kind: p for p in points}
        mx, mn = by_kind[CriticalKind.MAXIMUM], by_kind[CriticalKind.MINIMUM]
        assert _circle_distance(mx.y_c, 0.0, 2 * math.pi) < 1e-10
        assert mn.y_c == pytest.approx(math.pi, abs=1e-10)
        assert mx.value == pytest.approx(1.0)
        assert mn.value == pytest.approx(-1.0)
        assert mx.hessian == pytest.approx(-1.0)
        assert mn.hessian == pytest.approx(1.0)

    def test_sorted_and_alternating(self):
        """Test higher modes give alternating sorted points"""
        b = BoundaryData(((1, 1.0, 0.0), (2, 0.2, 0.1)))
        points = find_critical_points(b)
        ys = [p.y_c for p in points]
        assert ys == sorted(ys)
        kinds = [p.kind for p in points]
        assert all(a != b for a, b in zip(kinds, kinds[1:] + kinds[:1]))

    def test_scaled_hessian(self, cos_problem_l2):
        """Test V0'' = +/- 1/L^2"""
        points = find_critical_points(cos_problem_l2)
        assert sorted(p.hessian for p in points) == pytest.approx([-0.25, 0.25])

    def test_v1_sampled(self, cos_factory):
        """Test V1 is recorded at each critical point"""
        b = cos_factory(1.0, v1=((0, 0.3, 0.0), (1, 0.1, 0.0)))
        values = {p.kind: p.v1 for p in find_critical_points(b)}
        assert values[CriticalKind.MAXIMUM] == pytest.approx(0.4)
        assert values[CriticalKind.MINIMUM] == pytest.approx(0.2)

    def test_constant_is_not_morse(self):
        """Test constant V0 raises NotMorse"""
        with pytest.raises(NotMorse):
            find_critical_points(BoundaryData(((0, 2.0, 0.0),)))

    def test_degenerate_minimum_is_not_morse(self):
        """Test V0 = -cos y + cos(2y)/4 has V0''(0) = 0"""
        with pytest.raises(NotMorse):
            find_critical_points(BoundaryData(((1, -1.0, 0.0), (2, 0.25, 0.0))))


class TestThresholds:
    """kappa, K, critical values and lambda_Hess"""

    @pytest.mark.parametrize("length,expected", [(0.5, 7.0), (1.0, 1.0), (2.0, -0.5)])
    def test_lambda_hess(self, cos_factory, length, expected):
        """Test lambda_Hess = -1 + 2 / L^2"""
        th = thresholds(cos_factory(length))
        assert th.lambda_hess == pytest.approx(expected)
        assert th.kappa == pytest.approx(-1.0)
        assert th.k_sup == pytest.approx(1.0)
        assert th.cv == pytest.approx((-1.0, 1.0))

    def test_hess_for_unknown_point(self, cos_problem, cos_problem_l2):
        """Test hess_for rejects a point of another potential"""
        other = find_critical_points(cos_problem_l2)[0]
        with pytest.raises(KeyError):
            thresholds(cos_problem).hess_for(other)


class TestEnergyRange:
    """Four-case range report"""

    @pytest.mark.parametrize("lam,expected", [
        (-2.0, EnergyRange.BELOW_KAPPA),
        (-0.8, EnergyRange.NEAR_MINIMUM),
        (0.0, EnergyRange.HESSIAN_RANGE),
        (5.0, EnergyRange.ABOVE_THRESHOLDS),
        (1.0, EnergyRange.TRANSITION),
        (-0.5, EnergyRange.TRANSITION),
    ])
    def test_hessian_below_k(self, cos_problem_l2, lam, expected):
        """Test L = 2 where lambda_Hess < K"""
        assert energy_range(thresholds(cos_problem_l2), lam) == expected

    def test_mixed_range(self, cos_factory):
        """Test L = 1/2 where K < lambda_Hess"""
        th = thresholds(cos_factory(0.5))
        assert energy_range(th, 3.0) == EnergyRange.MIXED_RANGE
        assert energy_range(th, 8.0) == EnergyRange.ABOVE_THRESHOLDS

    def test_report_intervals(self, cos_problem_l2, cos_problem):
        """Test the report lists only the intervals that occur"""
        names = [name for name, _, _ in range_report(thresholds(cos_problem_l2))]
        assert names == ["near_minimum", "hessian_range", "above_thresholds"]
        # lambda_Hess = K: no middle interval
        names = [name for name, _, _ in range_report(thresholds(cos_problem))]
        assert names == ["near_minimum", "above_thresholds"]
        assert range_report(thresholds(cos_problem))[-1][2] == math.inf


class TestProblemFile:
    """JSON problem files"""

    def test_load(self, problem_file):
        """Test a valid file loads"""
        b = load_problem(problem_file)
        assert b.circumference == pytest.approx(2 * math.pi)
        assert b.v0_coeffs == ((1, 1.0, 0.0),)

    def test_missing(self, tmp_path):
        """Test a missing file raises ProblemFileError"""
        with pytest.raises(ProblemFileError):
            load_problem(str(tmp_path / "nope.json"))

    def test_not_json(self, tmp_path):
        """Test malformed JSON raises ProblemFileError"""
        path = tmp_path / "bad.json"
        path.write_text("{v0: ")
        with pytest.raises(ProblemFileError):
            load_problem(str(path))

    def test_negative_mode(self, tmp_path):
        """Test negative Fourier modes are rejected"""
        path = tmp_path / "neg.json"
        path.write_text(json.dumps({"v0": [[-1, 1.0, 0.0]]}))
        with pytest.raises(ProblemFileError):
            load_problem(str(path))

    def test_round_trip(self, cos_factory):
        """Test BoundaryData -> ProblemFile -> BoundaryData"""
        b = cos_factory(2.0, v1=((1, 0.1, 0.2),))
        again = BoundaryData.from_problem(ProblemFile.model_validate(b.to_problem("x").model_dump()))
        assert again == b

    def test_nonpositive_circumference(self):
        """Test circumference must be positive"""
        with pytest.raises(ProblemFileError):
            BoundaryData(((1, 1.0, 0.0),), (), 0.0)
