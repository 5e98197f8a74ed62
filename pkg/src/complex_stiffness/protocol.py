"""Synthetic perturbation experiments.

Nine experiments: three stiffness groups (grip force and bias torque)
crossed with three amplification factors. Each experiment has ten 60 s
periods laid out as

    [0, 5)    bias ramps up
    [5, 15)   sinusoidal perturbation
    [15, 20)  bias ramps down
    [20, 60)  rest

The hysteretic model has no time-domain realization, so the sinusoid
segment is written directly as the steady-state response computed from the
frequency response rather than by integrating an ODE.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DomainError
from .model import (
    CouplingConfig,
    JointParams,
    ModelKind,
    SeaModel,
    eval_coupled_stiffness,
    eval_human_stiffness,
    eval_sea,
)
from .scaling import PowerLaw, predict_H

FORMAT = "complex-stiffness/timeseries-v1"

PERIOD_S = 60.0
RAMP_UP_S = 5.0
SINE_S = 10.0
RAMP_DOWN_S = 5.0
SETTLE_S = 5.0  # first half of the sinusoid is discarded

BoostMode = Literal["compound", "step"]

# (grip kg, bias Nm, base frequency rad/s) per experiment group
_GROUPS = ((10.0, 0.0, 2.0), (14.0, 4.0, 3.0), (27.0, 8.0, 4.0))
_ALPHAS = (1.0, 2.0, 4.0)


@dataclass(frozen=True)
class ExperimentSpec:
    exp_id: int
    alpha: float
    grip_kg: float
    bias_Nm: float
    base_freq: float
    load_kg: float = 4.5
    base_amplitude_Nm: float = 2.0
    n_periods: int = 10
    boost_from_period: int = 8
    boost: BoostMode = "compound"

    @property
    def group(self) -> int:
        """0, 1 or 2."""
        return (self.exp_id - 1) // 3

    def frequencies(self) -> np.ndarray:
        k = np.arange(self.n_periods)
        return self.base_freq * 10.0 ** (0.1 * k)

    def amplitudes(self) -> np.ndarray:
        k = np.arange(self.n_periods)  # 0-based; period k+1 in 1-based terms
        boosted = np.maximum(0, k - (self.boost_from_period - 2))
        if self.boost == "step":
            boosted = np.minimum(boosted, 1)
        return self.base_amplitude_Nm * 10.0 ** (0.2 * boosted)

    def to_dict(self) -> dict:
        return asdict(self)


def build_protocol(boost: BoostMode = "compound") -> list[ExperimentSpec]:
    if boost not in ("compound", "step"):
        raise ConfigurationError(f"unknown boost mode {boost!r}")
    specs = []
    for g, (grip, bias, base) in enumerate(_GROUPS):
        for a, alpha in enumerate(_ALPHAS):
            specs.append(
                ExperimentSpec(
                    exp_id=3 * g + a + 1,
                    alpha=alpha,
                    grip_kg=grip,
                    bias_Nm=bias,
                    base_freq=base,
                    boost=boost,
                )
            )
    return specs


@dataclass(frozen=True)
class GroundTruthSubject:
    """Ground truth for one synthetic subject.

    One real stiffness per experiment group; hysteretic damping follows
    ``powerlaw``. ``B_h > 0`` turns the truth into M3.
    """

    K_groups: tuple[float, float, float]
    powerlaw: PowerLaw
    B_h: float = 0.0
    M_h: float = 0.11
    noise_std_torque: float = 0.05
    noise_std_angle: float = 0.002
    rng_seed: int = 0
    subject_id: str = "S00"

    def __post_init__(self):
        if len(self.K_groups) != 3:
            raise ConfigurationError("K_groups needs exactly one stiffness per experiment group")
        if any(k <= 0 for k in self.K_groups):
            raise DomainError("all group stiffnesses must be positive")
        if self.noise_std_torque < 0 or self.noise_std_angle < 0:
            raise DomainError("noise standard deviations must be non-negative")

    @property
    def kind(self) -> ModelKind:
        return ModelKind.M3 if self.B_h != 0 else ModelKind.M2

    def joint_params(self, group: int) -> JointParams:
        try:
            K = self.K_groups[group]
        except IndexError:
            raise ConfigurationError(f"subject {self.subject_id} has no stiffness for group {group}") from None
        return JointParams(K_h=K, H_h=predict_H(self.powerlaw, K), B_h=self.B_h, M_h=self.M_h)

    def noiseless(self) -> "GroundTruthSubject":
        return GroundTruthSubject(
            self.K_groups, self.powerlaw, self.B_h, self.M_h, 0.0, 0.0, self.rng_seed, self.subject_id
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["K_groups"] = list(self.K_groups)
        d["powerlaw"] = self.powerlaw.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthSubject":
        d = dict(d)
        d["K_groups"] = tuple(float(k) for k in d["K_groups"])
        d["powerlaw"] = PowerLaw.from_dict(d["powerlaw"])
        return cls(**d)


DEFAULT_SUBJECT = GroundTruthSubject(K_groups=(16.35, 36.52, 65.12), powerlaw=PowerLaw(-0.23, 0.90))


def make_cohort(
    n_subjects: int,
    seed: int = 0,
    base: GroundTruthSubject = DEFAULT_SUBJECT,
    stiffness_spread: float = 0.25,
    loss_spread: float = 0.2,
    slope_range: tuple[float, float] = (0.7, 1.2),
) -> list[GroundTruthSubject]:
    """Random M2 subjects scattered around ``base``.

    Stiffnesses get log-normal scatter; each subject draws its own power-law
    slope and an intercept that puts its loss factor at the cohort nominal
    stiffness near the base law's value.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0401]))
    k_nominal = math.sqrt(min(base.K_groups) * max(base.K_groups))
    c_nominal = float(base.powerlaw.loss_factor(k_nominal))
    cohort = []
    for i in range(n_subjects):
        K = tuple(float(k * math.exp(stiffness_spread * rng.standard_normal())) for k in base.K_groups)
        beta1 = float(rng.uniform(*slope_range))
        c_i = c_nominal * math.exp(loss_spread * rng.standard_normal())
        beta0 = math.log10(c_i) - (beta1 - 1.0) * math.log10(k_nominal)
        cohort.append(
            GroundTruthSubject(
                K_groups=tuple(sorted(K)),
                powerlaw=PowerLaw(beta0, beta1),
                B_h=base.B_h,
                M_h=base.M_h,
                noise_std_torque=base.noise_std_torque,
                noise_std_angle=base.noise_std_angle,
                rng_seed=int(rng.integers(2**63)),
                subject_id=f"S{i:02d}",
            )
        )
    return cohort


@dataclass(frozen=True)
class PeriodMarker:
    period: int  # 1-based
    t_start: float
    t_end: float
    omega: float
    amplitude: float

    @property
    def sine_window(self) -> tuple[float, float]:
        t0 = self.t_start + RAMP_UP_S
        return t0, t0 + SINE_S

    @property
    def analysis_window(self) -> tuple[float, float]:
        """Second half of the sinusoid, after transients have settled."""
        t0, t1 = self.sine_window
        return t0 + SETTLE_S, t1


@dataclass
class TimeSeries:
    dt: float
    t: np.ndarray
    theta_e: np.ndarray
    tau_c: np.ndarray
    tau_s: np.ndarray
    markers: list[PeriodMarker]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        if not all(len(x) == n for x in (self.theta_e, self.tau_c, self.tau_s)):
            raise ConfigurationError("time-series columns differ in length")
        starts = [m.t_start for m in self.markers]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("period markers must be strictly increasing")

    def window(self, t0: float, t1: float) -> slice:
        i0 = int(math.ceil((t0 - self.t[0]) / self.dt - 1e-9))
        i1 = int(math.floor((t1 - self.t[0]) / self.dt + 1e-9))
        return slice(max(i0, 0), min(i1, len(self.t)))

    def write(self, csv_path: str | Path, json_path: str | Path | None = None, precision: int = 12) -> tuple[Path, Path]:
        """CSV with header ``t,theta_e,tau_c,tau_s`` plus a marker sidecar."""
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else _sidecar_path(csv_path)
        frame = pd.DataFrame({"t": self.t, "theta_e": self.theta_e, "tau_c": self.tau_c, "tau_s": self.tau_s})
        frame.to_csv(csv_path, index=False, float_format=f"%.{precision}g")
        sidecar = {
            "format": FORMAT,
            "dt": self.dt,
            "units": {"t": "s", "theta_e": "rad", "tau_c": "Nm", "tau_s": "Nm", "omega": "rad/s", "amplitude": "Nm"},
            "metadata": self.metadata,
            "markers": [asdict(m) for m in self.markers],
        }
        json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
        return csv_path, json_path

    @classmethod
    def read(cls, csv_path: str | Path, json_path: str | Path | None = None) -> "TimeSeries":
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else _sidecar_path(csv_path)
        sidecar = json.loads(json_path.read_text())
        if sidecar.get("format") != FORMAT:
            raise ConfigurationError(f"{json_path}: unsupported format {sidecar.get('format')!r}")
        frame = pd.read_csv(csv_path, float_precision="round_trip")
        missing = {"t", "theta_e", "tau_c", "tau_s"} - set(frame.columns)
        if missing:
            raise ConfigurationError(f"{csv_path}: missing columns {sorted(missing)}")
        return cls(
            dt=float(sidecar["dt"]),
            t=frame["t"].to_numpy(),
            theta_e=frame["theta_e"].to_numpy(),
            tau_c=frame["tau_c"].to_numpy(),
            tau_s=frame["tau_s"].to_numpy(),
            markers=[PeriodMarker(**m) for m in sidecar["markers"]],
            metadata=sidecar.get("metadata", {}),
        )


def _sidecar_path(csv_path: Path) -> Path:
    name = csv_path.name
    for suffix in (".csv.gz", ".csv"):
        if name.endswith(suffix):
            return csv_path.with_name(name[: -len(suffix)] + ".json")
    return csv_path.with_suffix(".json")


def _raised_cosine(x: np.ndarray) -> np.ndarray:
    """0 -> 1 smoothly on x in [0, 1]."""
    return 0.5 - 0.5 * np.cos(np.pi * np.clip(x, 0.0, 1.0))


def steady_state_phasors(
    spec: ExperimentSpec,
    subject: GroundTruthSubject,
    sea: SeaModel,
    M_e: float = 1.01,
) -> dict[str, np.ndarray]:
    """Complex amplitudes (x(t) = Re{X exp(jwt)}) of each period's response.

    The desired perturbation ``A sin(wt)`` passes through the SEA; the
    resulting actuator torque drives the coupled stiffness.
    """
    params = subject.joint_params(spec.group)
    coupling = CouplingConfig(M_e=M_e, alpha=spec.alpha)
    w = spec.frequencies()
    amp = spec.amplitudes()
    tau_d = -1j * amp
    tau_s = eval_sea(sea, w) * tau_d
    theta = tau_s / eval_coupled_stiffness(params, coupling, subject.kind, w)
    tau_c = eval_human_stiffness(params, subject.kind, w) * theta
    return {"omega": w, "amplitude": amp, "tau_s": tau_s, "theta_e": theta, "tau_c": tau_c}


def synthesize_experiment(
    spec: ExperimentSpec,
    subject: GroundTruthSubject,
    sea: SeaModel | None = None,
    dt: float = 1e-3,
    M_e: float = 1.01,
) -> TimeSeries:
    if not 0 < dt <= 1e-3 + 1e-15:
        raise ConfigurationError(f"dt must be in (0, 1 ms], got {dt}")
    sea = sea or SeaModel()
    ph = steady_state_phasors(spec, subject, sea, M_e)

    n_per = int(round(PERIOD_S / dt))
    n = n_per * spec.n_periods
    t = np.arange(n) * dt
    theta = np.zeros(n)
    tau_c = np.zeros(n)
    tau_s = np.zeros(n)
    tl = np.arange(n_per) * dt  # time within one period

    bias_env = np.zeros(n_per)
    up = tl < RAMP_UP_S
    bias_env[up] = _raised_cosine(tl[up] / RAMP_UP_S)
    sine = (tl >= RAMP_UP_S) & (tl < RAMP_UP_S + SINE_S)
    bias_env[sine] = 1.0
    down = (tl >= RAMP_UP_S + SINE_S) & (tl < RAMP_UP_S + SINE_S + RAMP_DOWN_S)
    bias_env[down] = 1.0 - _raised_cosine((tl[down] - RAMP_UP_S - SINE_S) / RAMP_DOWN_S)

    markers = []
    for k in range(spec.n_periods):
        sl = slice(k * n_per, (k + 1) * n_per)
        ts = t[sl][sine]
        rot = np.exp(1j * ph["omega"][k] * ts)
        seg_theta = theta[sl]
        seg_theta[sine] = np.real(ph["theta_e"][k] * rot)
        seg_tau_c = tau_c[sl]
        seg_tau_c[sine] = np.real(ph["tau_c"][k] * rot)
        seg_tau_s = tau_s[sl]
        seg_tau_s[:] = spec.bias_Nm * bias_env
        seg_tau_s[sine] += np.real(ph["tau_s"][k] * rot)
        markers.append(
            PeriodMarker(
                period=k + 1,
                t_start=k * PERIOD_S,
                t_end=(k + 1) * PERIOD_S,
                omega=float(ph["omega"][k]),
                amplitude=float(ph["amplitude"][k]),
            )
        )

    rng = np.random.default_rng(np.random.SeedSequence([subject.rng_seed, spec.exp_id]))
    if subject.noise_std_angle > 0:
        theta += rng.normal(0.0, subject.noise_std_angle, n)
    if subject.noise_std_torque > 0:
        tau_c += rng.normal(0.0, subject.noise_std_torque, n)

    metadata = {
        "experiment": spec.to_dict(),
        "subject_id": subject.subject_id,
        "M_e": M_e,
        "sea": sea.to_dict(),
    }
    return TimeSeries(dt=dt, t=t, theta_e=theta, tau_c=tau_c, tau_s=tau_s, markers=markers, metadata=metadata)


def synthesize_subject(
    subject: GroundTruthSubject,
    protocol: Sequence[ExperimentSpec] | None = None,
    sea: SeaModel | None = None,
    dt: float = 1e-3,
    M_e: float = 1.01,
) -> dict[int, TimeSeries]:
    protocol = build_protocol() if protocol is None else protocol
    return {spec.exp_id: synthesize_experiment(spec, subject, sea, dt, M_e) for spec in protocol}
