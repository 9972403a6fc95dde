"""
Acceptance suite plumbing: tier selection, criterion outcomes and the table.
"""

import numpy as np
import pytest

from app.core.errors import CriticalEnergy
from app.schemas.config import NumericsConfig
from app.services.acceptance import CRITERIA, Criterion, SuiteContext, run_criterion, run_suite, select


def criterion(run, budget_s: float = 10.0) -> Criterion:
    return Criterion(99, "synthetic", "fast", "anything", budget_s, run)


class TestSelection:
    """Tier and id selection"""

    def test_fast_tier(self):
        """Test the fast tier holds only fast criteria, in id order"""
        chosen = select("fast")
        assert chosen and all(c.tier == "fast" for c in chosen)
        assert [c.id for c in chosen] == sorted(c.id for c in chosen)

    def test_full_tier(self):
        """Test the full tier runs everything"""
        assert [c.id for c in select("full")] == [c.id for c in CRITERIA] == list(range(1, 11))

    def test_only(self):
        """Test --only narrows the tier"""
        assert [c.id for c in select("full", [3, 9])] == [3, 9]
        assert select("fast", [9]) == []

    @pytest.mark.parametrize("tier,only", [("medium", None), ("fast", [42])])
    def test_invalid(self, tier, only):
        """Test unknown tiers and criteria are rejected"""
        with pytest.raises(ValueError):
            select(tier, only)


class TestRunCriterion:
    """Outcome recording"""

    def test_pass(self):
        """Test a passing check records plain measurements"""
        result = run_criterion(criterion(lambda ctx: (True, {"v": np.float64(0.5), "z": 1j}, "")),
                               SuiteContext(NumericsConfig()))
        assert result.status == "pass"
        assert result.measured == {"v": 0.5, "z": [0.0, 1.0]}

    def test_fail(self):
        """Test a failing check keeps its message"""
        result = run_criterion(criterion(lambda ctx: (False, {}, "too large")), SuiteContext(NumericsConfig()))
        assert result.status == "fail"
        assert result.message == "too large"

    def test_domain_error(self):
        """Test domain errors become status error without aborting"""
        def run(ctx):
            raise CriticalEnergy("lambda is critical", {"lambda": 1.0})
        result = run_criterion(criterion(run), SuiteContext(NumericsConfig()))
        assert result.status == "error"
        assert result.measured["error"] == "critical_energy"

    def test_lookup_error(self):
        """Test missing radial points are recorded as errors"""
        def run(ctx):
            raise LookupError("no outgoing radial point")
        result = run_criterion(criterion(run), SuiteContext(NumericsConfig()))
        assert result.status == "error"
        assert result.measured == {"error": "LookupError"}

    def test_over_budget(self):
        """Test a pass over its runtime budget is a failure"""
        result = run_criterion(criterion(lambda ctx: (True, {}, ""), budget_s=-1.0),
                               SuiteContext(NumericsConfig()))
        assert result.status == "fail"
        assert "over budget" in result.message


class TestSuite:
    """Whole-suite runs"""

    def test_center_modes_criterion(self):
        """Test the center-mode criterion passes and renders"""
        table = run_suite("fast", only=[4])
        assert [r.id for r in table.results] == [4]
        assert table.passed
        text = table.render()
        assert "center modes" in text
        assert text.rstrip().endswith("overall: PASS")
        assert table.dump()["schema"] == "radialiq.acceptance/v1"

    @pytest.mark.slow
    def test_eikonal_criterion(self):
        """Test the eikonal criterion passes with default numerics"""
        assert run_suite("fast", only=[3]).passed
