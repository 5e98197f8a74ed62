"""Open-loop analysis of the amplification controller.

``L(jw) = k_p F(jw) P(jw)`` with the plant

    P(jw) = S_h(jw) / S_he(jw) * G_SEA(jw)

from interaction-torque disturbance to cuff torque. Margins are searched on
the certification band [1e-2, 1e3] rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NumericError
from .fractional import AmplifierDesign, LagCascade
from .model import (
    CouplingConfig,
    JointParams,
    ModelKind,
    SeaModel,
    eval_coupled_stiffness,
    eval_human_stiffness,
    eval_sea,
)
from .scaling import PowerLaw

BAND = (1e-2, 1e3)
POINTS_PER_DECADE = 200
MARGINAL_DEG = 1.0

Controller = Callable[[np.ndarray], np.ndarray]


def plant_response(
    params: JointParams,
    M_e: float,
    sea: SeaModel,
    omega,
    kind: ModelKind = ModelKind.M2,
    powerlaw: PowerLaw | None = None,
):
    coupling = CouplingConfig(M_e=M_e, alpha=1.0)
    S_h = eval_human_stiffness(params, kind, omega, powerlaw)
    S_he = eval_coupled_stiffness(params, coupling, kind, omega, powerlaw)
    return S_h / S_he * eval_sea(sea, omega)


def controller_for(design: AmplifierDesign, cascade: LagCascade | None = None) -> Controller:
    """Ideal fractional law when ``cascade`` is None, else the lag ladder."""
    return design.ideal if cascade is None else cascade.response


def loop_response(
    design: AmplifierDesign,
    controller: Controller,
    params: JointParams,
    sea: SeaModel,
    omega,
    kind: ModelKind = ModelKind.M2,
    powerlaw: PowerLaw | None = None,
):
    return design.k_p * controller(omega) * plant_response(params, design.M_e, sea, omega, kind, powerlaw)


@dataclass(frozen=True)
class BodeTrace:
    omega: np.ndarray
    values: dict[str, np.ndarray]

    def __post_init__(self):
        if np.any(np.diff(self.omega) <= 0):
            raise DomainError("Bode frequencies must be strictly increasing")

    def rows(self) -> tuple[list[str], np.ndarray]:
        """Header and table: omega, then |.| in dB and unwrapped phase in deg per label."""
        header = ["omega_rad_s"]
        cols = [self.omega]
        for label, v in self.values.items():
            header += [f"{label}_mag_dB", f"{label}_phase_deg"]
            cols += [20 * np.log10(np.abs(v)), np.degrees(np.unwrap(np.angle(v)))]
        return header, np.column_stack(cols)


def bode(
    design: AmplifierDesign,
    controller: Controller,
    params: JointParams,
    sea: SeaModel,
    kind: ModelKind = ModelKind.M2,
    powerlaw: PowerLaw | None = None,
    band: tuple[float, float] = BAND,
    points_per_decade: int = POINTS_PER_DECADE,
) -> BodeTrace:
    w = log_grid(band, points_per_decade)
    P = plant_response(params, design.M_e, sea, w, kind, powerlaw)
    F = controller(w)
    return BodeTrace(w, {"P": P, "F": F, "L": design.k_p * F * P})


def log_grid(band: tuple[float, float] = BAND, points_per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    if points_per_decade < 50:
        raise DomainError("margin search needs at least 50 points per decade")
    lo, hi = np.log10(band[0]), np.log10(band[1])
    return np.logspace(lo, hi, int(round((hi - lo) * points_per_decade)) + 1)


@dataclass(frozen=True)
class Margins:
    crossovers: tuple[float, ...]
    phase_margins: tuple[float, ...]
    verdict: str  # stable | marginal | unstable | no_crossover

    @property
    def multiple(self) -> bool:
        return len(self.crossovers) > 1

    @property
    def min_pm(self) -> float:
        return min(self.phase_margins) if self.phase_margins else float("inf")

    def to_dict(self) -> dict:
        return {
            "crossovers_rad_s": list(self.crossovers),
            "phase_margins_deg": list(self.phase_margins),
            "min_pm_deg": self.min_pm if self.phase_margins else None,
            "verdict": self.verdict,
            "multiple_crossovers": self.multiple,
        }


def _unwrapped_phase(L: np.ndarray) -> np.ndarray:
    return np.unwrap(np.angle(L))


def find_margins(
    loop: Callable[[np.ndarray], np.ndarray],
    band: tuple[float, float] = BAND,
    points_per_decade: int = POINTS_PER_DECADE,
    tol_log: float = 1e-6,
    marginal_deg: float = MARGINAL_DEG,
) -> Margins:
    """All unity-gain crossings of ``|loop|`` in ``band`` and their phase margins.

    Crossings are bracketed on a log grid and refined by bisection in
    log10(omega). Phase is unwrapped from the low end of the band so
    that margins are measured against -180 deg on the right branch.
    """
    w = log_grid(band, points_per_decade)
    L = loop(w)
    g = np.log(np.abs(L))
    phase = _unwrapped_phase(L)
    crossings, margins = [], []
    for i in np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0]:
        lo, hi = math.log10(w[i]), math.log10(w[i + 1])
        g_lo = g[i]
        while hi - lo > tol_log:
            mid = 0.5 * (lo + hi)
            g_mid = math.log(abs(loop(np.array([10.0**mid]))[0]))
            if np.sign(g_mid) == np.sign(g_lo):
                lo, g_lo = mid, g_mid
            else:
                hi = mid
        wc = 10.0 ** (0.5 * (lo + hi))
        ph = float(np.angle(loop(np.array([wc]))[0]))
        # put the refined phase on the branch of the bracketing grid point
        ph += 2 * math.pi * round((phase[i] - ph) / (2 * math.pi))
        crossings.append(wc)
        margins.append(180.0 + math.degrees(ph))
    if not crossings:
        return Margins((), (), "no_crossover")
    pm = min(margins)
    verdict = "unstable" if pm <= 0 else ("marginal" if pm < marginal_deg else "stable")
    return Margins(tuple(crossings), tuple(margins), verdict)


def margins(
    design: AmplifierDesign,
    params: JointParams,
    sea: SeaModel,
    cascade: LagCascade | None = None,
    kind: ModelKind = ModelKind.M2,
    powerlaw: PowerLaw | None = None,
    **kwargs,
) -> Margins:
    ctrl = controller_for(design, cascade)
    return find_margins(lambda w: loop_response(design, ctrl, params, sea, w, kind, powerlaw), **kwargs)


def no_encirclement(
    design: AmplifierDesign,
    params: JointParams,
    sea: SeaModel,
    cascade: LagCascade | None = None,
    kind: ModelKind = ModelKind.M2,
    powerlaw: PowerLaw | None = None,
    band: tuple[float, float] = BAND,
) -> bool:
    """No frequency in ``band`` with |L| > 1 and unwrapped phase <= -180 deg."""
    w = log_grid(band)
    L = loop_response(design, controller_for(design, cascade), params, sea, w, kind, powerlaw)
    phase = np.degrees(_unwrapped_phase(L))
    return not np.any((np.abs(L) > 1) & (phase <= -180.0))


def _params_at(K: float, powerlaw: PowerLaw, M_h: float) -> JointParams:
    return JointParams(K_h=K, H_h=float(powerlaw.loss_factor(K)) * K, M_h=M_h)


@dataclass(frozen=True)
class SweepResult:
    stiffness: np.ndarray
    per_k: tuple[Margins, ...]
    worst: Margins
    K_worst: float
    worst_endpoint: str  # "low" | "high" | "interior"
    endpoint_pm: tuple[float, float] = field(default=(float("nan"), float("nan")))

    @property
    def min_pm(self) -> float:
        return self.worst.min_pm

    def to_dict(self) -> dict:
        return {
            "stiffness_Nm_rad": self.stiffness.tolist(),
            "min_pm_deg": [m.min_pm if m.phase_margins else None for m in self.per_k],
            "worst": self.worst.to_dict(),
            "K_worst_Nm_rad": self.K_worst,
            "worst_endpoint": self.worst_endpoint,
            "pm_at_K_low_deg": self.endpoint_pm[0],
            "pm_at_K_high_deg": self.endpoint_pm[1],
        }


def stability_sweep(
    design: AmplifierDesign,
    powerlaw: PowerLaw,
    sea: SeaModel,
    cascade: LagCascade | None = None,
    K_grid: Sequence[float] | None = None,
    n_points: int = 25,
) -> SweepResult:
    """Margins across the stiffness range, damping tied to stiffness by ``powerlaw``."""
    if K_grid is None:
        K_grid = np.geomspace(design.K_low, design.K_high, n_points)
    K_grid = np.asarray(K_grid, dtype=float)
    if len(K_grid) < 20:
        raise DomainError("stiffness sweep needs at least 20 points")
    per_k = tuple(margins(design, _params_at(K, powerlaw, design.M_h), sea, cascade) for K in K_grid)
    pms = np.array([m.min_pm for m in per_k])
    i = int(np.argmin(pms))
    endpoint = "low" if i == 0 else "high" if i == len(K_grid) - 1 else "interior"
    return SweepResult(K_grid, per_k, per_k[i], float(K_grid[i]), endpoint, (float(pms[0]), float(pms[-1])))


def min_pm_at(
    design: AmplifierDesign,
    f: float,
    stiffnesses: Sequence[float],
    loss: Callable[[float], float],
    sea: SeaModel,
    use_cascade: bool = True,
    cascade_kwargs: dict | None = None,
) -> float:
    """Worst margin over ``stiffnesses`` for the skeleton re-tuned to order ``f``."""
    d = design.with_order(f)
    cascade = d.cascade(**(cascade_kwargs or {})) if use_cascade else None
    worst = math.inf
    for K in stiffnesses:
        params = JointParams(K_h=K, H_h=loss(K) * K, M_h=design.M_h)
        m = margins(d, params, sea, cascade)
        worst = min(worst, m.min_pm if m.phase_margins else math.inf)
    return worst


def marginal_f_search(
    design: AmplifierDesign,
    sea: SeaModel,
    powerlaw: PowerLaw | None = None,
    c_h: float | None = None,
    stiffnesses: Sequence[float] | None = None,
    use_cascade: bool = True,
    f_max: float = 0.99,
    tol: float = 1e-3,
    cascade_kwargs: dict | None = None,
) -> float:
    """Largest order that keeps the worst-case margin positive.

    Emulates raising ``f`` until the loop starts to oscillate, testing both
    the low and high stiffness ends. Returns 0 when even a vanishing order is
    unstable.
    """
    if (powerlaw is None) == (c_h is None):
        raise DomainError("give exactly one of powerlaw or c_h")
    if c_h is not None and c_h <= 0:
        # undamped coupled resonance sits on the jw axis: no phase budget at all
        return 0.0
    loss = (lambda K: float(powerlaw.loss_factor(K))) if powerlaw is not None else (lambda K: c_h)
    Ks = stiffnesses if stiffnesses is not None else (design.K_low, design.K_high)

    def pm(f):
        return min_pm_at(design, f, Ks, loss, sea, use_cascade, cascade_kwargs)

    lo, hi = 0.0, f_max
    if pm(hi) > 0:
        raise NumericError(f"margin still positive at f = {f_max}; marginal order unbounded on (0, 1)")
    if pm(tol) <= 0:
        return 0.0
    lo = tol
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pm(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AmplificationReport:
    omega: tuple[float, ...]
    ratio: tuple[float, ...]
    phase_deg: tuple[float, ...]
    realization: str

    def to_dict(self) -> dict:
        return {
            "realization": self.realization,
            "omega_rad_s": list(self.omega),
            "ratio": list(self.ratio),
            "phase_deg": list(self.phase_deg),
            "alpha_definition": "alpha(t) = tau_s~(t) / tau_c~(t) + 1",
        }


def predicted_amplification(
    design: AmplifierDesign,
    cascade: LagCascade | None = None,
    omegas: Sequence[float] = (1.0, 10.0),
) -> AmplificationReport:
    """Commanded |tau_s~ / tau_c~| = |k_p F(jw)| and its phase."""
    w = np.asarray(omegas, dtype=float)
    g = design.k_p * controller_for(design, cascade)(w)
    return AmplificationReport(
        tuple(w.tolist()),
        tuple(np.abs(g).tolist()),
        tuple(np.degrees(np.angle(g)).tolist()),
        "ideal" if cascade is None else "cascade",
    )
