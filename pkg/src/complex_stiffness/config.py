"""Run configuration for the CLI.

Unknown keys anywhere in the tree are rejected.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigurationError

CONFIG_FORMAT = "complex-stiffness/config-v1"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SeaConfig(_Strict):
    omega_sea: float = Field(62.83185307179586, gt=0)
    zeta_sea: float = Field(0.7, gt=0, le=1)


class SubjectConfig(_Strict):
    K_groups: tuple[float, float, float] = (16.35, 36.52, 65.12)
    beta0: float = -0.23
    beta1: float = 0.90
    B_h: float = 0.0
    M_h: float = Field(0.11, gt=0)
    noise_std_torque: float = Field(0.05, ge=0)
    noise_std_angle: float = Field(0.002, ge=0)

    @field_validator("K_groups")
    @classmethod
    def _positive(cls, v):
        if any(k <= 0 for k in v):
            raise ValueError("group stiffnesses must be positive")
        return v


class SynthConfig(_Strict):
    subjects: int = Field(1, ge=1)
    subject: SubjectConfig = SubjectConfig()
    stiffness_spread: float = Field(0.25, ge=0)
    loss_spread: float = Field(0.2, ge=0)
    dt: float = Field(1e-3, gt=0, le=1e-3)
    M_e: float = Field(1.01, gt=0)
    boost: Literal["compound", "step"] = "compound"
    sea: SeaConfig = SeaConfig()
    precision: int = Field(12, ge=6, le=17)


class IdentifyConfig(_Strict):
    min_angle: float = Field(1e-4, gt=0)


class FtestConfig(_Strict):
    p: float = Field(0.05, gt=0, lt=1)


class DesignConfig(_Strict):
    M_h: float = Field(0.11, gt=0)
    M_e: float = Field(1.01, gt=0)
    K_low: Optional[float] = Field(None, gt=0)
    K_high: Optional[float] = Field(None, gt=0)
    K_nominal: Optional[tuple[float, float]] = None
    beta0: Optional[float] = None
    beta1: Optional[float] = None
    phi_deg: float = Field(10.8, ge=0)
    f: Optional[float] = Field(None, gt=0, lt=1)
    n_lags: int = Field(5, ge=1)
    p_1: float = Field(1.0, gt=0)
    r_pp: float = Field(10**0.5, gt=1)
    normalize: Literal["ideal", "cascade"] = "ideal"


class AnalyzeConfig(_Strict):
    sea: SeaConfig = SeaConfig()
    probe_omegas: tuple[float, ...] = (1.0, 10.0)
    sweep_points: int = Field(25, ge=20)
    bode_points_per_decade: int = Field(100, ge=50)
    marginal_search: bool = True


class RunConfig(_Strict):
    format: Literal["complex-stiffness/config-v1"] = CONFIG_FORMAT
    seed: int = Field(0, ge=0, lt=2**64)
    synth: SynthConfig = SynthConfig()
    identify: IdentifyConfig = IdentifyConfig()
    ftest: FtestConfig = FtestConfig()
    design: DesignConfig = DesignConfig()
    analyze: AnalyzeConfig = AnalyzeConfig()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
