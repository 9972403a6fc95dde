"""
Numerics configuration schemas.
Defaults live here; presets/numerics.yaml and CLI flags override them
(flags > file > defaults).
"""

import hashlib
import json
from typing import Any, Dict, Literal, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from app.config import DEFAULT_CONFIG_PATH, env_jobs, env_seed
from app.core.errors import ConfigError


class _Section(BaseModel):
    model_config = {"extra": "forbid"}


class BoundarySettings(_Section):
    morse_tol: float = Field(1e-8, gt=0, description="Minimum |V0''| at a critical point")
    root_tol: float = Field(1e-14, gt=0, description="Newton polish tolerance on V0'")
    scan_factor: int = Field(4096, ge=64, description="Samples per unit of the highest Fourier mode")


class ClassicalSettings(_Section):
    energy_tol: float = Field(1e-9, gt=0)
    cv_tol: float = Field(1e-9, gt=0, description="Distance to Cv(V) and to lambda_Hess treated as equal")
    capture_radius: float = Field(1e-4, gt=0)
    seed_eps: float = Field(1e-5, gt=0)
    n_seed: int = Field(64, ge=4)
    max_time: float = Field(1e3, gt=0)
    resonance_tol: float = Field(1e-9, gt=0)
    near_resonance: float = Field(1e-3, gt=0)
    h_max: float = Field(0.5, gt=0)
    h_min: float = Field(1e-12, gt=0)
    step_tol: float = Field(1e-12, gt=0, description="Local step-doubling error target")


class LegendrianSettings(_Section):
    n_jet: int = Field(8, ge=2)
    jet_handoff: float = Field(1e-2, gt=0)
    eik_tol: float = Field(1e-9, gt=0)
    fold_tol: float = Field(1e-6, gt=0)
    ode_rtol: float = Field(1e-13, gt=0)
    ode_atol: float = Field(1e-14, gt=0)


class ExpansionSettings(_Section):
    j_max: int = Field(32, ge=1)
    series_tol: float = Field(1e-10, gt=0)
    transport_tol: float = Field(1e-7, gt=0)
    n_x: int = Field(512, ge=16)
    n_y: int = Field(256, ge=16)
    x_min: float = Field(1e-3, gt=0)
    x_max: float = Field(0.3, gt=0)
    y_half_width: float = Field(8.0, gt=0, description="Half-width of the blow-up variable Y on chart grids")
    saddle_order: int = Field(3, ge=0)
    saddle_y_degree: int = Field(8, ge=1)

    @model_validator(mode="after")
    def _check_range(self):
        if self.x_min >= self.x_max:
            raise ValueError("expansion.x_min must be below expansion.x_max")
        return self


class PairingSettings(_Section):
    flux_scales: int = Field(3, ge=2)
    flux_ratio: float = Field(2.0, gt=1)
    richardson_order: float = Field(1.0, gt=0)
    flux_tol: float = Field(1e-3, gt=0)
    flux_width: float = Field(1.0, gt=0, description="Width of the cutoff ramp in log x")
    biorth_tol: float = Field(1e-8, gt=0)
    fit_tol: float = Field(1e-2, gt=0)
    j_s: int = Field(4, ge=1)
    sink_basis_alpha: float = Field(16.0, gt=0, description="Frequency of the oscillator basis in Y at sinks")


class OracleSettings(_Section):
    """OracleConfig: grid dims, collar range, absorption and solver controls."""

    n_s: int = Field(1536, ge=16, description="Points in s = log x")
    n_y: int = Field(256, ge=8)
    x_min: float = Field(2e-3, gt=0)
    x_max: float = Field(1.0, gt=0)
    x_abs: float = Field(2e-2, gt=0, description="Absorber ramp is active for x < x_abs")
    eps_rel: float = Field(1e-2, gt=0, description="eps = eps_rel * max(|lambda|, 1)")
    absorber_strength: float = Field(1.0, gt=0, description="Ramp height in units of max(|lambda|, 1)")
    solver: Literal["auto", "direct", "gmres"] = "auto"
    direct_limit: int = Field(120_000, ge=1)
    solver_tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(400, ge=1)
    restart: int = Field(40, ge=2)
    min_ppw: float = Field(8.0, gt=0, description="Points per wavelength required at x_max")
    min_ppw_abs: float = Field(4.0, gt=0, description="Points per wavelength required at x_abs")
    min_decades: float = Field(1.0, gt=0)
    freq_window: int = Field(64, ge=8)

    @model_validator(mode="after")
    def _check_range(self):
        if not (self.x_min < self.x_abs < self.x_max):
            raise ValueError("oracle requires x_min < x_abs < x_max")
        return self


class CliSettings(_Section):
    jobs: int = Field(default_factory=env_jobs, ge=1, validate_default=True)
    seed: int = Field(default_factory=env_seed)


class NumericsConfig(BaseModel):
    """Full numerics configuration snapshot."""

    boundary: BoundarySettings = Field(default_factory=BoundarySettings)
    classical: ClassicalSettings = Field(default_factory=ClassicalSettings)
    legendrian: LegendrianSettings = Field(default_factory=LegendrianSettings)
    expansion: ExpansionSettings = Field(default_factory=ExpansionSettings)
    pairing: PairingSettings = Field(default_factory=PairingSettings)
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    cli: CliSettings = Field(default_factory=CliSettings)

    model_config = {
        "extra": "forbid",
        "json_schema_extra": {
            "example": {
                "classical": {"energy_tol": 1e-9, "capture_radius": 1e-4},
                "oracle": {"n_s": 1536, "n_y": 256, "eps_rel": 1e-2},
            }
        },
    }

    def snapshot(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        payload = json.dumps(self.snapshot(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def with_overrides(self, overrides: Optional[Dict[str, Any]]) -> "NumericsConfig":
        """Apply dotted-key overrides ("oracle.n_s": 2048) and revalidate."""
        if not overrides:
            return self
        data = self.snapshot()
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if not key or section not in data or key not in data[section]:
                raise KeyError(dotted)
            data[section][key] = value
        return NumericsConfig.model_validate(data)


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> NumericsConfig:
    """
    Resolve the numerics configuration.

    Args:
        path: YAML preset file; a missing default preset falls back to model defaults
        overrides: dotted-key flag values applied last

    Raises:
        ConfigError: unreadable YAML or values that fail validation
    """
    explicit = path is not None
    path = path or DEFAULT_CONFIG_PATH
    raw: Dict[str, Any] = {}
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f) or {}
    except FileNotFoundError:
        if explicit:
            raise ConfigError(f"Config file not found: {path}", {"path": path})
    except yaml.YAMLError as exc:
        raise ConfigError(f"Invalid YAML in {path}: {exc}", {"path": path})

    try:
        config = NumericsConfig.model_validate(raw)
        return config.with_overrides(overrides)
    except ValidationError as exc:
        raise ConfigError("Invalid numerics configuration", {"errors": exc.errors(include_url=False)})
    except KeyError as exc:
        raise ConfigError(f"Unknown config key {exc.args[0]}", {"key": exc.args[0]})
