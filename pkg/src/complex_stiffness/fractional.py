"""Fractional-order amplification controller.

The amplification law is ``alpha(s) = k_p F(s) + 1`` with
``F(s) = k_f s**-f``. The proportional gain puts the loop crossover
midway (in log frequency) between the coupled and free natural
frequencies; ``k_f`` pins unit controller gain at the nominal crossover;
``f`` spends the phase lead bought by hysteretic damping, minus a
guaranteed margin.

``s**-f`` is realized as ``n`` first-order lag sections with equal
pole/zero ratio and equal spacing.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, InfeasibleDesignError
from .scaling import PowerLaw

DEFAULT_N_LAGS = 5
DEFAULT_P1 = 1.0
DEFAULT_R_PP = 10**0.5


def design_kp(M_h: float, M_e: float) -> tuple[float, "CrossoverRule"]:
    """Proportional gain ``sqrt(M_he / M_h)`` and the crossover it implies."""
    if M_h <= 0 or M_e < 0:
        raise DomainError("inertias must be positive")
    M_he = M_h + M_e
    return math.sqrt(M_he / M_h), CrossoverRule(M_h, M_e)


@dataclass(frozen=True)
class CrossoverRule:
    M_h: float
    M_e: float

    def __call__(self, K_h):
        """Gain crossover of ``k_p P(s)``: ``sqrt(K / sqrt(M_he M_h))``."""
        return np.sqrt(np.asarray(K_h, dtype=float) / math.sqrt((self.M_h + self.M_e) * self.M_h))


def nominal_stiffness(K_low: float, K_high: float) -> float:
    if not 0 < K_low <= K_high:
        raise DomainError(f"need 0 < K_low <= K_high, got ({K_low}, {K_high})")
    return math.sqrt(K_low * K_high)


def worst_case_stiffness(powerlaw: PowerLaw, K_low: float, K_high: float) -> float:
    """Stiffness bound with the smallest loss factor."""
    return K_high if powerlaw.beta1 < 1 else K_low


def max_phase_margin(powerlaw: PowerLaw, K_low: float, K_high: float) -> float:
    """Largest guaranteeable margin (deg), reached as f -> 0."""
    K_star = worst_case_stiffness(powerlaw, K_low, K_high)
    return math.degrees(math.atan(float(powerlaw.loss_factor(K_star))))


def select_fractional_order(powerlaw: PowerLaw, K_low: float, K_high: float, phi_deg: float) -> float:
    if phi_deg < 0:
        raise DomainError("phase margin must be non-negative")
    if not 0 < K_low <= K_high:
        raise DomainError("need 0 < K_low <= K_high")
    phi_max = max_phase_margin(powerlaw, K_low, K_high)
    f = (phi_max - phi_deg) / 90.0
    if f <= 0:
        raise InfeasibleDesignError(
            f"phase margin {phi_deg:.2f} deg unattainable; at most {phi_max:.2f} deg for this stiffness range",
            max_phase_margin_deg=phi_max,
        )
    return min(f, 1.0 - 1e-12)


@dataclass(frozen=True)
class LagCascade:
    """``gain * prod (1 + s/z_i) / (1 + s/p_i)``, a band-limited ``s**-f``."""

    f: float
    k_f: float
    poles: tuple[float, ...]
    zeros: tuple[float, ...]
    gain_scale: float = 1.0

    @property
    def n(self) -> int:
        return len(self.poles)

    @property
    def r_zp(self) -> float:
        return self.zeros[0] / self.poles[0]

    @property
    def r_pp(self) -> float:
        return self.poles[1] / self.poles[0] if self.n > 1 else float("nan")

    @property
    def dc_gain(self) -> float:
        return self.gain_scale * self.k_f / self.poles[0] ** self.f

    @property
    def band(self) -> tuple[float, float]:
        """Frequencies where the ladder behaves fractionally."""
        return self.poles[0], self.zeros[-1]

    @property
    def approximate_order(self) -> float:
        return math.log(self.r_zp) / math.log(self.r_pp)

    def response(self, omega):
        w = np.asarray(omega, dtype=float)
        s = 1j * w
        out = np.full(w.shape, self.dc_gain, dtype=complex)
        for p, z in zip(self.poles, self.zeros):
            out = out * (1 + s / z) / (1 + s / p)
        return complex(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(poles=list(self.poles), zeros=list(self.zeros), n=self.n, r_zp=self.r_zp,
                 r_pp=self.r_pp, dc_gain=self.dc_gain, band=list(self.band))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LagCascade":
        return cls(float(d["f"]), float(d["k_f"]), tuple(d["poles"]), tuple(d["zeros"]),
                   float(d.get("gain_scale", 1.0)))

    def discretize(self, sample_rate: float) -> tuple[np.ndarray, np.ndarray, float]:
        """Bilinear (Tustin) map to discrete zeros, poles and gain.

        DC gain is preserved.
        """
        if sample_rate <= 0:
            raise DomainError("sample rate must be positive")
        T2 = 2.0 * sample_rate
        zs = -np.asarray(self.zeros)
        ps = -np.asarray(self.poles)
        zd = (T2 + zs) / (T2 - zs)
        pd_ = (T2 + ps) / (T2 - ps)
        # (1 + s/z)/(1 + s/p) has DC gain 1; match the z = 1 value to it
        k = self.dc_gain * np.prod((1 - pd_) / (1 - zd))
        return zd, pd_, float(k)


def build_lag_cascade(
    f: float,
    k_f: float,
    n: int = DEFAULT_N_LAGS,
    p_1: float = DEFAULT_P1,
    r_pp: float = DEFAULT_R_PP,
) -> LagCascade:
    if n < 1:
        raise DomainError("need at least one lag section")
    if p_1 <= 0:
        raise DomainError("p_1 must be positive")
    if r_pp <= 1:
        raise DomainError("r_pp must exceed 1")
    if not 0 <= f < 1:
        raise DomainError(f"fractional order must satisfy 0 <= f < 1 (r_zp < r_pp), got {f}")
    r_zp = r_pp**f
    poles = tuple(p_1 * r_pp**i for i in range(n))
    zeros = tuple(p * r_zp for p in poles)
    return LagCascade(f=f, k_f=k_f, poles=poles, zeros=zeros)


def ideal_response(f: float, k_f: float, omega):
    """``k_f (jw)**-f``: slope -20 f dB/decade, constant phase -90 f deg."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise DomainError("omega must be positive")
    out = k_f * w ** (-f) * np.exp(-0.5j * math.pi * f)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AmplifierDesign:
    k_p: float
    f: float
    k_f: float
    phi_deg: float
    K_low: float
    K_high: float
    K_hat: float
    omega_gc_hat: float
    M_h: float = 0.11
    M_e: float = 1.01
    powerlaw: PowerLaw | None = None
    audit: dict = field(default_factory=dict, compare=False)

    def ideal(self, omega):
        return ideal_response(self.f, self.k_f, omega)

    def cascade(
        self,
        n: int = DEFAULT_N_LAGS,
        p_1: float = DEFAULT_P1,
        r_pp: float = DEFAULT_R_PP,
        normalize: str = "ideal",
    ) -> LagCascade:
        """Lag ladder for this design.

        ``normalize="ideal"`` keeps ``k_f`` as designed; ``"cascade"``
        rescales so the ladder itself has unit gain at the nominal crossover.
        """
        lag = build_lag_cascade(self.f, self.k_f, n, p_1, r_pp)
        if normalize == "cascade":
            scale = 1.0 / abs(lag.response(self.omega_gc_hat))
            lag = LagCascade(lag.f, lag.k_f, lag.poles, lag.zeros, scale)
        elif normalize != "ideal":
            raise DomainError(f"unknown normalization {normalize!r}")
        return lag

    def with_order(self, f: float) -> "AmplifierDesign":
        """Same skeleton, different fractional order (k_f follows)."""
        return AmplifierDesign(
            self.k_p, f, self.omega_gc_hat**f, self.phi_deg, self.K_low, self.K_high, self.K_hat,
            self.omega_gc_hat, self.M_h, self.M_e, self.powerlaw, {},
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["powerlaw"] = self.powerlaw.to_dict() if self.powerlaw else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AmplifierDesign":
        d = dict(d)
        d["powerlaw"] = PowerLaw.from_dict(d["powerlaw"]) if d.get("powerlaw") else None
        return cls(**d)


def design_amplifier(
    powerlaw: PowerLaw | None,
    K_low: float,
    K_high: float,
    phi_deg: float = 10.8,
    M_h: float = 0.11,
    M_e: float = 1.01,
    f: float | None = None,
    K_nominal: tuple[float, float] | None = None,
) -> AmplifierDesign:
    """Full design; pass ``f`` to override the power-law order selection.

    ``K_nominal`` sets the range whose geometric mean fixes the nominal
    crossover (and so ``k_f``) when it should differ from the certified
    range, e.g. one cohort-wide crossover shared by per-subject designs.
    """
    k_p, rule = design_kp(M_h, M_e)
    K_hat = nominal_stiffness(*(K_nominal or (K_low, K_high)))
    omega_gc_hat = float(rule(K_hat))
    audit: dict = {}
    if f is None:
        if powerlaw is None:
            raise DomainError("need a power law or an explicit fractional order")
        f = select_fractional_order(powerlaw, K_low, K_high, phi_deg)
        K_star = worst_case_stiffness(powerlaw, K_low, K_high)
        audit = {
            "worst_case_K": K_star,
            "min_loss_factor": float(powerlaw.loss_factor(K_star)),
            "max_phase_margin_deg": max_phase_margin(powerlaw, K_low, K_high),
            "order_source": "power law",
        }
    else:
        if not 0 < f < 1:
            raise DomainError("fractional order must lie in (0, 1)")
        audit = {"order_source": "explicit"}
    return AmplifierDesign(
        k_p=k_p, f=f, k_f=omega_gc_hat**f, phi_deg=phi_deg, K_low=K_low, K_high=K_high, K_hat=K_hat,
        omega_gc_hat=omega_gc_hat, M_h=M_h, M_e=M_e, powerlaw=powerlaw, audit=audit,
    )


def backoff_order(f_marginal: float, backoff: float = 0.12) -> float:
    """Tuning convenience: step back from the marginally stable order."""
    f = f_marginal - backoff
    if f <= 0:
        raise InfeasibleDesignError(f"backoff {backoff} exceeds marginal order {f_marginal:.3f}")
    return f
