"""Qubit-conditioned cavity fields and the measurement rates they induce.

Closed forms for both schemes, a fixed-step RK4 integrator of the underlying
field ODE (used as an independent cross-check and for post-reset restarts),
and vectorized rate tables for the trajectory integrators.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import ReadoutConfig, Scheme

# Dispersive Gamma_d can only go negative through round-off; clamp below this.
_GAMMA_D_CLAMP = 1e-12


@dataclass(frozen=True)
class CavityPair:
    """Coherent amplitudes conditioned on the qubit state, with branch separation."""

    alpha_e: complex
    alpha_g: complex
    beta: complex
    beta_mag: float
    theta_beta: float

    @classmethod
    def from_amplitudes(cls, alpha_e: complex, alpha_g: complex) -> "CavityPair":
        beta = alpha_e - alpha_g
        mag = abs(beta)
        theta = cmath.phase(beta) if mag > 0.0 else 0.0
        return cls(complex(alpha_e), complex(alpha_g), beta, mag, theta)


@dataclass(frozen=True)
class Rates:
    """Instantaneous measurement rates; gamma_m = gamma_ci + gamma_ba."""

    gamma_d: float
    gamma_ci: float
    gamma_ba: float

    @property
    def gamma_m(self) -> float:
        return self.gamma_ci + self.gamma_ba


def _check_time(t: float):
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")


def alpha_longitudinal(t: float, cfg: ReadoutConfig) -> CavityPair:
    """Fields under the modulated longitudinal coupling, from vacuum at t=0."""
    if cfg.scheme is not Scheme.LONGITUDINAL:
        raise ValueError("alpha_longitudinal requires a longitudinal-scheme config")
    _check_time(t)
    amp = (cfg.drive / cfg.kappa) * (1.0 - math.exp(-cfg.kappa * t / 2.0))
    return CavityPair.from_amplitudes(-1j * amp, 1j * amp)


def _dispersive_steady(cfg: ReadoutConfig) -> tuple[complex, complex]:
    abar_e = -1j * cfg.drive / (1j * cfg.chi + cfg.kappa / 2.0)
    abar_g = -1j * cfg.drive / (-1j * cfg.chi + cfg.kappa / 2.0)
    return abar_e, abar_g


def alpha_dispersive(t: float, cfg: ReadoutConfig) -> CavityPair:
    """Fields under the dispersive shift chi, from vacuum at t=0."""
    if cfg.scheme is not Scheme.DISPERSIVE:
        raise ValueError("alpha_dispersive requires a dispersive-scheme config")
    _check_time(t)
    abar_e, abar_g = _dispersive_steady(cfg)
    decay = math.exp(-cfg.kappa * t / 2.0)
    ae = abar_e * (1.0 - cmath.exp(-1j * cfg.chi * t) * decay)
    ag = abar_g * (1.0 - cmath.exp(1j * cfg.chi * t) * decay)
    return CavityPair.from_amplitudes(ae, ag)


def cavity_pair(t: float, cfg: ReadoutConfig) -> CavityPair:
    if cfg.scheme is Scheme.LONGITUDINAL:
        return alpha_longitudinal(t, cfg)
    return alpha_dispersive(t, cfg)


def rates_from_pair(pair: CavityPair, cfg: ReadoutConfig) -> Rates:
    b2 = pair.beta_mag * pair.beta_mag
    if b2 == 0.0:
        # |beta|^2 prefactor kills gamma_ci/ba regardless of the angle, and
        # both Gamma_d formulas vanish with the fields.
        return Rates(0.0, 0.0, 0.0)
    delta = cfg.phi_lo - pair.theta_beta
    gci = 0.25 * cfg.kappa * b2 * math.cos(delta) ** 2
    gba = 0.25 * cfg.kappa * b2 * math.sin(delta) ** 2
    if cfg.scheme is Scheme.LONGITUDINAL:
        gd = 0.5 * cfg.drive * pair.beta_mag
    else:
        gd = cfg.chi * (pair.alpha_g * pair.alpha_e.conjugate()).imag
        if gd < 0.0:
            if gd < -_GAMMA_D_CLAMP * cfg.kappa:
                raise ValueError(
                    f"dispersive Gamma_d={gd} is negative beyond round-off")
            warnings.warn("clamping slightly negative dispersive Gamma_d to 0",
                          RuntimeWarning, stacklevel=2)
            gd = 0.0
    return Rates(gd, gci, gba)


def rates_at(t: float, cfg: ReadoutConfig) -> Rates:
    """Measurement rates at time t (all-zero at t=0 where the fields vanish)."""
    _check_time(t)
    return rates_from_pair(cavity_pair(t, cfg), cfg)


def integrate_alpha_ode(alpha0: tuple[complex, complex], cfg: ReadoutConfig,
                        t_final: float) -> list[CavityPair]:
    """RK4 integration of the conditioned-field ODE on the cfg.dt grid.

    Accepts any initial pair, which supports restarts from a displaced field
    after a reset.  Agrees with the closed forms when alpha0 = (0, 0).
    """
    if cfg.dt * cfg.kappa > 0.1:
        raise ValueError(
            f"dt*kappa={cfg.dt * cfg.kappa:.3g} > 0.1: step too large for the field ODE")
    if cfg.scheme is Scheme.LONGITUDINAL:
        def deriv(a_e, a_g):
            return (-0.5j * cfg.drive - 0.5 * cfg.kappa * a_e,
                    +0.5j * cfg.drive - 0.5 * cfg.kappa * a_g)
    else:
        def deriv(a_e, a_g):
            return (-1j * cfg.drive - (1j * cfg.chi + cfg.kappa / 2.0) * a_e,
                    -1j * cfg.drive - (-1j * cfg.chi + cfg.kappa / 2.0) * a_g)

    n = int(round(t_final / cfg.dt))
    h = cfg.dt
    a_e, a_g = complex(alpha0[0]), complex(alpha0[1])
    out = [CavityPair.from_amplitudes(a_e, a_g)]
    for _ in range(n):
        k1 = deriv(a_e, a_g)
        k2 = deriv(a_e + 0.5 * h * k1[0], a_g + 0.5 * h * k1[1])
        k3 = deriv(a_e + 0.5 * h * k2[0], a_g + 0.5 * h * k2[1])
        k4 = deriv(a_e + h * k3[0], a_g + h * k3[1])
        a_e += (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        a_g += (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        out.append(CavityPair.from_amplitudes(a_e, a_g))
    return out


def field_series(cfg: ReadoutConfig, t) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized closed-form fields alpha_e(t), alpha_g(t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time grid must be nonnegative")
    decay = np.exp(-cfg.kappa * t / 2.0)
    if cfg.scheme is Scheme.LONGITUDINAL:
        amp = (cfg.drive / cfg.kappa) * (1.0 - decay)
        return -1j * amp, 1j * amp
    abar_e, abar_g = _dispersive_steady(cfg)
    rot = np.exp(-1j * cfg.chi * t)
    return abar_e * (1.0 - rot * decay), abar_g * (1.0 - np.conj(rot) * decay)


def rate_series(cfg: ReadoutConfig, t):
    """Vectorized (gamma_d, gamma_ci, gamma_ba) over a time grid."""
    ae, ag = field_series(cfg, t)
    beta = ae - ag
    b2 = np.abs(beta) ** 2
    theta = np.where(b2 > 0, np.angle(np.where(b2 > 0, beta, 1.0)), 0.0)
    delta = cfg.phi_lo - theta
    gci = 0.25 * cfg.kappa * b2 * np.cos(delta) ** 2
    gba = 0.25 * cfg.kappa * b2 * np.sin(delta) ** 2
    if cfg.scheme is Scheme.LONGITUDINAL:
        gd = 0.5 * cfg.drive * np.abs(beta)
    else:
        gd = cfg.chi * np.imag(ag * np.conj(ae))
        neg = gd < 0
        if np.any(gd < -_GAMMA_D_CLAMP * cfg.kappa):
            raise ValueError("dispersive Gamma_d negative beyond round-off on grid")
        if np.any(neg):
            gd = np.where(neg, 0.0, gd)
    return gd, gci, gba


def step_rate_table(cfg: ReadoutConfig, n_steps: int, t0: float = 0.0):
    """Left-endpoint rate arrays for n_steps integrator steps from t0.

    Returns (sqrt_gci, gamma_d, sqrt_gba), each of length n_steps.
    """
    t = t0 + cfg.dt * np.arange(n_steps)
    gd, gci, gba = rate_series(cfg, t)
    return np.sqrt(gci), gd, np.sqrt(gba)
