"""Power law linking hysteretic damping to stiffness.

The law ``H = 10**beta0 * K**beta1`` is a straight line in log10 space, so
fitting is ordinary least squares on ``(log10 K, log10 H)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class PowerLaw:
    beta0: float
    beta1: float
    r2: float = 1.0
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.beta0) and np.isfinite(self.beta1)):
            raise DomainError("power law coefficients must be finite")
        if not self.r2 <= 1.0 + 1e-12:
            raise DomainError(f"r2 must be <= 1, got {self.r2}")

    def loss_factor(self, K_h):
        """Hysteretic loss factor ``H/K`` implied by the law."""
        return 10.0**self.beta0 * np.asarray(K_h, dtype=float) ** (self.beta1 - 1.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PowerLaw":
        return cls(
            beta0=float(d["beta0"]),
            beta1=float(d["beta1"]),
            r2=float(d.get("r2", 1.0)),
            provenance=dict(d.get("provenance", {})),
        )


def _positive_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be strictly positive and finite")
    return arr


def fit_power_law(points: Iterable[tuple[float, float]], provenance: dict | None = None) -> PowerLaw:
    """OLS fit of log10 H against log10 K.

    Points with non-positive values are rejected rather than filtered; the
    caller decides what to do with flagged fits.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DomainError("need at least two (K_h, H_h) points")
    x = np.log10(_positive_array(pts[:, 0], "K_h"))
    y = np.log10(_positive_array(pts[:, 1], "H_h"))
    if np.ptp(x) == 0:
        raise DomainError("stiffness values must not all be equal")

    xm, ym = x.mean(), y.mean()
    slope = np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2)
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    tss = np.sum((y - ym) ** 2)
    r2 = 1.0 - np.sum(resid**2) / tss if tss > 0 else 1.0
    return PowerLaw(float(intercept), float(slope), float(min(r2, 1.0)), provenance or {})


def geometric_average(values: Sequence[float]) -> float:
    """10 to the mean of the log10 values."""
    arr = _positive_array(values, "values")
    if arr.size == 0:
        raise DomainError("geometric average of an empty set")
    return float(10.0 ** np.mean(np.log10(arr)))


def predict_H(powerlaw: PowerLaw, K_h):
    K = np.asarray(K_h, dtype=float)
    if np.any(K <= 0):
        raise DomainError("K_h must be positive")
    out = 10.0**powerlaw.beta0 * K**powerlaw.beta1
    return float(out) if out.ndim == 0 else out
