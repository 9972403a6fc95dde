"""
Output documents written by the CLI. Every document carries a versioned
"schema" field; complex numbers are [re, im] pairs.
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from app.core.constants import TOOL_VERSION, schema_tag


class _Document(BaseModel):
    schema_id: str = Field(..., alias="schema")
    tool_version: str = TOOL_VERSION

    model_config = {"populate_by_name": True}

    def dump(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


class CommandResult(_Document):
    """Result of one subcommand: the payload layout depends on the command."""

    command: str
    problem: Optional[str] = None
    lam: Optional[float] = Field(None, alias="lambda")
    config_hash: str
    data: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def build(cls, command: str, config_hash: str, data: Dict[str, Any],
              problem: Optional[str] = None, lam: Optional[float] = None) -> "CommandResult":
        return cls(schema=schema_tag(command.replace("-", "_")), command=command, problem=problem,
                   config_hash=config_hash, data=data, **{"lambda": lam})


class ErrorDocument(_Document):
    """JSON written to stderr when a command fails with a domain error."""

    error: str
    type: str
    message: str
    details: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def from_error(cls, payload: Dict[str, Any]) -> "ErrorDocument":
        return cls(schema=schema_tag("error"), **payload)


class CriterionResult(BaseModel):
    id: int
    name: str
    tier: Literal["fast", "full"]
    status: Literal["pass", "fail", "error", "skipped"]
    target: str
    measured: Dict[str, Any] = Field(default_factory=dict)
    message: str = ""
    duration_s: float = 0.0


class AcceptanceTable(_Document):
    tier: Literal["fast", "full"]
    results: List[CriterionResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.status in ("pass", "skipped") for r in self.results)

    def render(self) -> str:
        """Plain-text pass/fail table."""
        lines = [f"{'#':>3}  {'criterion':<28} {'tier':<5} {'status':<7} {'time[s]':>8}  target"]
        for r in self.results:
            lines.append(f"{r.id:>3}  {r.name:<28} {r.tier:<5} {r.status.upper():<7} {r.duration_s:>8.2f}  {r.target}")
            if r.message:
                lines.append(f"{'':>5}{r.message}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


class OutputFile(BaseModel):
    path: str
    sha256: str
    size_bytes: int


class RunManifest(_Document):
    """Everything needed to re-run a command and check its outputs."""

    command: str
    argv: List[str]
    config: Dict[str, Any]
    config_hash: str
    seed: int
    jobs: int
    inputs: Dict[str, str] = Field(default_factory=dict, description="input path -> sha256")
    outputs: List[OutputFile] = Field(default_factory=list)
    wall_time_s: float = 0.0
    status: Literal["ok", "error"] = "ok"
