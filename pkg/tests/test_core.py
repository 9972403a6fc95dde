"""
Error hierarchy, structured logging and Prometheus metrics.
"""

import io
import json
import logging

import pytest

from app.core import errors
from app.core.logging import RadialJSONFormatter, log_command_event, log_event, setup_logger
from app.core.metrics import REGISTRY, MetricsTracker, Timer, write_metrics
from app.schemas.results import ErrorDocument


class TestErrors:
    """Stable machine codes"""

    def test_to_dict(self):
        """Test the serialized error carries code, type, message and details"""
        exc = errors.EnergyDrift("drift 1e-6", {"drift": 1e-6})
        assert exc.to_dict() == {"error": "energy_drift", "type": "EnergyDrift",
                                 "message": "drift 1e-6", "details": {"drift": 1e-6}}

    def test_default_message(self):
        """Test a bare error uses its code as message"""
        assert str(errors.NoLimit()) == "no_limit"

    def test_structured_errors(self):
        """Test errors with extra fields record them in details"""
        exc = errors.ResonantObstruction(3)
        assert exc.order == 3
        assert exc.details["order"] == 3
        assert errors.ResonantExponent(1.5).details["exponent"] == 1.5

    def test_codes_unique(self):
        """Test every domain error has its own code"""
        classes = [c for c in vars(errors).values()
                   if isinstance(c, type) and issubclass(c, errors.RadialIQError)]
        codes = [c.code for c in classes]
        assert len(codes) == len(set(codes))

    def test_error_document(self):
        """Test the stderr document wraps the error payload"""
        doc = ErrorDocument.from_error(errors.FoldDetected("fold at y=0.3").to_dict()).dump()
        assert doc["schema"] == "radialiq.error/v1"
        assert doc["error"] == "fold_detected"


class TestLogging:
    """JSON log records"""

    @pytest.fixture
    def stream_logger(self):
        stream = io.StringIO()
        log = setup_logger("radialiq.test_capture", logging.DEBUG)
        log.handlers[0].stream = stream
        return log, stream

    def test_json_record(self, stream_logger):
        """Test records are JSON with level, logger and details"""
        log, stream = stream_logger
        log.info("[TEST] hello", extra={"details": {"n": 3}})
        record = json.loads(stream.getvalue().strip())
        assert record["message"] == "[TEST] hello"
        assert record["level"] == "INFO"
        assert record["logger"] == "radialiq.test_capture"
        assert record["details"] == {"n": 3}
        assert record["function"] == "test_json_record"

    def test_formatter_fields(self):
        """Test the formatter stamps the call site"""
        record = logging.LogRecord("radialiq.x", logging.WARNING, "mod.py", 12, "msg", None, None, "fn")
        data = json.loads(RadialJSONFormatter("%(message)s").format(record))
        assert data["level"] == "WARNING"
        assert data["line"] == 12

    def test_log_event(self, caplog):
        """Test events are logged on the radialiq logger with action and target"""
        root = logging.getLogger("radialiq")
        root.addHandler(caplog.handler)
        try:
            log_event("criterion_failed", target="7", details={"status": "fail"}, level="WARNING")
            log_command_event("classify", "ok", 0.5)
        finally:
            root.removeHandler(caplog.handler)
        messages = [r.getMessage() for r in caplog.records]
        assert "criterion_failed on 7" in messages
        assert "command_finished on classify" in messages
        warning = next(r for r in caplog.records if r.getMessage() == "criterion_failed on 7")
        assert warning.levelno == logging.WARNING
        assert warning.details == {"status": "fail"}


class TestMetrics:
    """Counters and the text-file exporter"""

    def test_track_command(self):
        """Test command counters increase"""
        before = REGISTRY.get_sample_value("radialiq_commands_total",
                                           {"command": "unit", "status": "ok"}) or 0.0
        MetricsTracker.track_command("unit", "ok", 0.1)
        after = REGISTRY.get_sample_value("radialiq_commands_total", {"command": "unit", "status": "ok"})
        assert after == before + 1

    def test_write_metrics(self, tmp_path):
        """Test the registry is written in Prometheus text format"""
        MetricsTracker.track_error("unit_test")
        path = tmp_path / "metrics.prom"
        write_metrics(str(path))
        assert 'radialiq_errors_total{code="unit_test"}' in path.read_text()

    def test_no_path(self, tmp_path):
        """Test no file is written without a path"""
        write_metrics(None)
        assert not list(tmp_path.iterdir())

    def test_timer(self):
        """Test the timer records a non-negative duration"""
        with Timer() as timer:
            sum(range(100))
        assert timer.elapsed >= 0.0
