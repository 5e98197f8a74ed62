"""Dynamic stiffness models of a human joint coupled to an exoskeleton.

Three nested models share the inertia and real stiffness terms and differ
in how energy is dissipated:

* ``M1``: viscous damping, ``S_h(jw) = K - M w**2 + j B w``
* ``M2``: hysteretic damping, ``S_h(jw) = K - M w**2 + j H``
* ``M3``: both terms

``REDUCED`` is M2 with ``H`` tied to ``K`` through a :class:`PowerLaw`.

The hysteretic term is frequency independent and only defined for w > 0;
there is no causal time-domain realization, so negative frequencies are
rejected instead of being conjugated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .scaling import PowerLaw


class ModelKind(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    REDUCED = "reduced"


def _finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v}")


@dataclass(frozen=True)
class JointParams:
    """Human joint impedance, SI units (Nm/rad, Nm s/rad, kg m^2).

    Fitted parameters may violate the physical sign constraints; they are
    kept as-is and listed by :attr:`flags`.
    """

    K_h: float
    H_h: float = 0.0
    B_h: float = 0.0
    M_h: float = 0.11

    def __post_init__(self):
        _finite(K_h=self.K_h, H_h=self.H_h, B_h=self.B_h, M_h=self.M_h)

    @property
    def flags(self) -> list[str]:
        out = []
        if self.K_h <= 0:
            out.append("nonpositive_K_h")
        if self.M_h <= 0:
            out.append("nonpositive_M_h")
        if self.H_h < 0:
            out.append("negative_H_h")
        if self.B_h < 0:
            out.append("negative_B_h")
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "JointParams":
        return cls(**{k: float(d[k]) for k in ("K_h", "H_h", "B_h", "M_h") if k in d})


@dataclass(frozen=True)
class CouplingConfig:
    M_e: float = 1.01
    alpha: float = 1.0

    def __post_init__(self):
        _finite(M_e=self.M_e, alpha=self.alpha)
        if self.M_e <= 0:
            raise DomainError(f"M_e must be positive, got {self.M_e}")
        if self.alpha < 1:
            raise DomainError(f"alpha must be >= 1, got {self.alpha}")

    @property
    def perceived_inertia(self) -> float:
        return self.M_e / self.alpha

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CouplingConfig":
        return cls(**{k: float(d[k]) for k in ("M_e", "alpha") if k in d})


@dataclass(frozen=True)
class SeaModel:
    """Closed force loop of the series elastic actuator, unity DC gain.

    Defaults: 10 Hz natural frequency, damping ratio 0.7.
    """

    omega_sea: float = 2 * math.pi * 10.0
    zeta_sea: float = 0.7

    def __post_init__(self):
        _finite(omega_sea=self.omega_sea, zeta_sea=self.zeta_sea)
        if self.omega_sea <= 0:
            raise DomainError("omega_sea must be positive")
        if not 0 < self.zeta_sea <= 1:
            raise DomainError("zeta_sea must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SeaModel":
        return cls(**{k: float(d[k]) for k in ("omega_sea", "zeta_sea") if k in d})


def _omega_array(omega, allow_zero: bool = False) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    bad = w < 0 if allow_zero else w <= 0
    if np.any(bad) or np.any(~np.isfinite(w)):
        raise DomainError("omega must be positive" + (" or zero" if allow_zero else ""))
    return w


def _scalar_or_array(z):
    return complex(z) if np.ndim(z) == 0 else z


def effective_damping(params: JointParams, kind: ModelKind, powerlaw: PowerLaw | None = None) -> tuple[float, float]:
    """(B, H) actually used by ``kind``."""
    kind = ModelKind(kind)
    if kind is ModelKind.M1:
        return params.B_h, 0.0
    if kind is ModelKind.M2:
        return 0.0, params.H_h
    if kind is ModelKind.M3:
        return params.B_h, params.H_h
    if powerlaw is None:
        raise ConfigurationError("reduced model requires a power law")
    if params.K_h <= 0:
        raise DomainError("reduced model requires K_h > 0")
    return 0.0, float(10.0**powerlaw.beta0 * params.K_h**powerlaw.beta1)


def eval_human_stiffness(params: JointParams, kind: ModelKind, omega, powerlaw: PowerLaw | None = None):
    """Dynamic stiffness of the human alone, ``S_h(jw)``."""
    w = _omega_array(omega)
    B, H = effective_damping(params, kind, powerlaw)
    return _scalar_or_array((params.K_h - params.M_h * w**2) + 1j * (B * w + H))


def eval_coupled_stiffness(
    params: JointParams,
    coupling: CouplingConfig,
    kind: ModelKind,
    omega,
    powerlaw: PowerLaw | None = None,
):
    """``S_h(jw) - (M_e/alpha) w**2``: what the subject feels through the exoskeleton."""
    w = _omega_array(omega)
    S = eval_human_stiffness(params, kind, w, powerlaw)
    return _scalar_or_array(S - coupling.perceived_inertia * w**2)


def natural_frequencies(params: JointParams, coupling: CouplingConfig) -> tuple[float, float]:
    """(omega_h, omega_he) in rad/s; the coupled one uses the full M_e."""
    if params.K_h <= 0 or params.M_h <= 0:
        raise DomainError("natural frequencies need K_h > 0 and M_h > 0")
    omega_h = math.sqrt(params.K_h / params.M_h)
    omega_he = math.sqrt(params.K_h / (params.M_h + coupling.M_e))
    return omega_h, omega_he


def loss_factor_and_ratio(K_h, powerlaw: PowerLaw):
    """Loss factor, damping ratio and low-frequency phase (deg) from the power law.

    The damping ratio is taken as exactly half the loss factor.
    """
    K = np.asarray(K_h, dtype=float)
    if np.any(K <= 0):
        raise DomainError("K_h must be positive")
    c_h = powerlaw.loss_factor(K)
    zeta = c_h / 2.0
    phase = np.degrees(np.arctan(c_h))
    if K.ndim == 0:
        return float(c_h), float(zeta), float(phase)
    return c_h, zeta, phase


def eval_sea(sea: SeaModel, omega):
    """``G_SEA(jw) = wn**2 / (wn**2 - w**2 + 2j zeta wn w)``."""
    w = _omega_array(omega, allow_zero=True)
    wn = sea.omega_sea
    return _scalar_or_array(wn**2 / (wn**2 - w**2 + 2j * sea.zeta_sea * wn * w))
