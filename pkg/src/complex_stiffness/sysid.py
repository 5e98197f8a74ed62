"""Frequency-domain identification of the joint stiffness models.

Each protocol period yields one complex sample ``S_h(jw) = tau_c / theta_e``
from least-squares phasors over the settled half of the sinusoid. The
models are linear in their parameters, so fitting stacks real and imaginary
parts into one real least-squares problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConditioningError, DegenerateExcitationError, DomainError, StiffnessError
from .model import CouplingConfig, JointParams, ModelKind, SeaModel, eval_coupled_stiffness, eval_human_stiffness
from .protocol import (
    ExperimentSpec,
    GroundTruthSubject,
    PeriodMarker,
    TimeSeries,
    build_protocol,
    synthesize_experiment,
)

MAX_CONDITION = 1e12

# unknowns per model, in column order of the design matrix
_COLUMNS = {
    ModelKind.M1: ("M_h", "B_h", "K_h"),
    ModelKind.M2: ("M_h", "H_h", "K_h"),
    ModelKind.M3: ("M_h", "B_h", "H_h", "K_h"),
}


@dataclass(frozen=True)
class FrequencySample:
    omega: float
    S: complex
    window: tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> dict:
        return {"omega": self.omega, "S_re": self.S.real, "S_im": self.S.imag, "window": list(self.window)}

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencySample":
        return cls(float(d["omega"]), complex(d["S_re"], d["S_im"]), tuple(d.get("window", (0.0, 0.0))))


@dataclass(frozen=True)
class FitResult:
    kind: ModelKind
    params: JointParams
    rss: float
    r2: float
    residuals: np.ndarray = field(repr=False)
    condition_number: float = float("nan")

    @property
    def flags(self) -> list[str]:
        return self.params.flags

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "params": self.params.to_dict(),
            "rss": self.rss,
            "r2": self.r2,
            "condition_number": self.condition_number,
            "flags": self.flags,
            "residuals_re": self.residuals.real.tolist(),
            "residuals_im": self.residuals.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        res = np.asarray(d.get("residuals_re", []), float) + 1j * np.asarray(d.get("residuals_im", []), float)
        return cls(
            kind=ModelKind(d["kind"]),
            params=JointParams.from_dict(d["params"]),
            rss=float(d["rss"]),
            r2=float(d["r2"]),
            residuals=res,
            condition_number=float(d.get("condition_number", "nan")),
        )


def phasor(t: np.ndarray, x: np.ndarray, omega: float) -> complex:
    """Complex amplitude X with x(t) ~ Re{X exp(jwt)} + c, by least squares."""
    A = np.column_stack([np.cos(omega * t), np.sin(omega * t), np.ones_like(t)])
    (a, b, _), *_ = np.linalg.lstsq(A, x, rcond=None)
    # a cos + b sin = Re{(a - jb) e^{jwt}}
    return complex(a, -b)


def extract_sample(
    ts: TimeSeries,
    marker: PeriodMarker,
    min_angle: float = 1e-4,
    window: tuple[float, float] | None = None,
) -> FrequencySample:
    t0, t1 = window or marker.analysis_window
    sl = ts.window(t0, t1)
    t = ts.t[sl]
    if len(t) < 3:
        raise DomainError(f"window [{t0}, {t1}] holds fewer than 3 samples")
    # shift the time origin to the window start for conditioning; the ratio is unaffected
    tt = t - t[0]
    theta = phasor(tt, ts.theta_e[sl], marker.omega)
    if abs(theta) < min_angle:
        raise DegenerateExcitationError(
            f"period {marker.period}: angle phasor {abs(theta):.3e} rad below threshold {min_angle:.1e}"
        )
    tau = phasor(tt, ts.tau_c[sl], marker.omega)
    return FrequencySample(omega=marker.omega, S=tau / theta, window=(float(t0), float(t1)))


def extract_samples(ts: TimeSeries, **kwargs) -> list[FrequencySample]:
    return [extract_sample(ts, m, **kwargs) for m in ts.markers]


def design_matrix(omega: np.ndarray, kind: ModelKind) -> np.ndarray:
    """Rows: real parts then imaginary parts."""
    kind = ModelKind(kind)
    n = len(omega)
    zero, one = np.zeros(n), np.ones(n)
    mass_re, stiff_re = -(omega**2), one
    cols = {
        "M_h": (mass_re, zero),
        "B_h": (zero, omega),
        "H_h": (zero, one),
        "K_h": (stiff_re, zero),
    }
    return np.vstack([np.concatenate(cols[c]) for c in _COLUMNS[kind]]).T


def _stack(samples: Sequence[FrequencySample]) -> tuple[np.ndarray, np.ndarray]:
    omega = np.array([s.omega for s in samples], dtype=float)
    S = np.array([s.S for s in samples], dtype=complex)
    return omega, S


def fit_model(samples: Sequence[FrequencySample], kind: ModelKind) -> FitResult:
    kind = ModelKind(kind)
    if kind not in _COLUMNS:
        raise DomainError(f"cannot fit {kind.value} directly; fit M2 and a power law instead")
    omega, S = _stack(samples)
    p = len(_COLUMNS[kind])
    min_samples = 4 if kind is ModelKind.M3 else 3
    if len(samples) < min_samples:
        raise DomainError(f"{kind.value} needs at least {min_samples} samples, got {len(samples)}")
    if len(np.unique(omega)) != len(omega):
        raise DomainError("sample frequencies must be distinct")

    A = design_matrix(omega, kind)
    y = np.concatenate([S.real, S.imag])
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > MAX_CONDITION or np.linalg.matrix_rank(A) < p:
        raise ConditioningError(f"rank-deficient design for {kind.value}", cond)
    theta, *_ = np.linalg.lstsq(A, y, rcond=None)

    values = dict(zip(_COLUMNS[kind], theta))
    params = JointParams(
        K_h=values["K_h"], H_h=values.get("H_h", 0.0), B_h=values.get("B_h", 0.0), M_h=values["M_h"]
    )
    fitted = A @ theta
    resid = y - fitted
    n = len(S)
    residuals = resid[:n] + 1j * resid[n:]
    rss = float(np.sum(resid**2))
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return FitResult(kind, params, rss, r2, residuals, cond)


def fit_all(samples: Sequence[FrequencySample]) -> dict[ModelKind, FitResult]:
    return {kind: fit_model(samples, kind) for kind in (ModelKind.M1, ModelKind.M2, ModelKind.M3)}


def recover_coupled(fit: FitResult, coupling: CouplingConfig, omega):
    """S_{h-e/alpha}(jw) rebuilt from a human-only fit."""
    return eval_coupled_stiffness(fit.params, coupling, fit.kind, omega)


def model_response(fit: FitResult, omega):
    return eval_human_stiffness(fit.params, fit.kind, omega)


def phase_shift_stats(experiments: Sequence[Sequence[FrequencySample]], n_exclude: int = 3) -> tuple[float, float]:
    """Mean and standard error (deg) of the phase of S_h for one group.

    ``experiments`` pools the per-experiment sample lists of a group; the
    last ``n_exclude`` frequencies of each are dropped because the phase
    rises sharply near the human natural frequency.
    """
    phases = []
    for samples in experiments:
        ordered = sorted(samples, key=lambda s: s.omega)
        keep = ordered[: max(len(ordered) - n_exclude, 0)]
        phases.extend(np.degrees(np.angle(s.S)) for s in keep)
    if not phases:
        raise StiffnessError("no samples in group")
    arr = np.asarray(phases)
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), stderr


def identify_subject(
    subject: GroundTruthSubject,
    protocol: Sequence[ExperimentSpec] | None = None,
    sea: SeaModel | None = None,
    dt: float = 1e-3,
    M_e: float = 1.01,
) -> dict[int, tuple[list[FrequencySample], dict[ModelKind, FitResult]]]:
    """Synthesize and identify every experiment of one subject in memory."""
    protocol = build_protocol() if protocol is None else protocol
    out = {}
    for spec in protocol:
        samples = extract_samples(synthesize_experiment(spec, subject, sea, dt, M_e))
        out[spec.exp_id] = (samples, fit_all(samples))
    return out
