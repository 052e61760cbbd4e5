"""Coarse-grained state update from an accumulated homodyne record.

Diagonal elements are updated through Gaussian likelihood functionals of the
current; the coherence picks up the branch-overlap purity factor D and the
accumulated random phase Phi.  Likelihood exponents are kept in log space and
the common factor is cancelled before exponentiation, so arbitrarily long
records cannot underflow.

Integrals weighted by the noisy current use the left-endpoint rectangle rule
on the record grid (the Ito-consistent pairing with the trajectory
integrator); noise-free rate integrals use adaptive quadrature.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .cavity import (CavityPair, _dispersive_steady, cavity_pair, rates_at,
                     rates_from_pair, step_rate_table)
from .config import ReadoutConfig, Scheme
from .effective import QubitState
from .errors import ConfigError
from .records import HomodyneRecord


@dataclass(frozen=True)
class BayesUpdate:
    """Factors of one update: likelihoods, purity factor, random phase, norm."""

    p_e: float
    p_g: float
    d_factor: float
    phi_random: float
    norm: float


def _require_no_extrinsic(cfg: ReadoutConfig):
    if cfg.gamma1 != 0.0 or cfg.gamma2 != 0.0:
        raise ConfigError(
            "the Bayesian update is derived for gamma1 = gamma2 = 0")


def _steady_rates(cfg: ReadoutConfig):
    if cfg.scheme is Scheme.LONGITUDINAL:
        amp = cfg.drive / cfg.kappa
        pair = CavityPair.from_amplitudes(-1j * amp, 1j * amp)
    else:
        ae, ag = _dispersive_steady(cfg)
        pair = CavityPair.from_amplitudes(ae, ag)
    return rates_from_pair(pair, cfg)


def _record_rate_table(record: HomodyneRecord, cfg: ReadoutConfig,
                       steady_state: bool):
    n = len(record)
    if not steady_state:
        return step_rate_table(cfg, n, record.t0)
    r = _steady_rates(cfg)
    ones = np.ones(n)
    return (math.sqrt(r.gamma_ci) * ones, r.gamma_d * ones,
            math.sqrt(r.gamma_ba) * ones)


def log_gaussian_functional(record: HomodyneRecord, which: str,
                            cfg: ReadoutConfig,
                            steady_state: bool = False) -> float:
    """Log of the Gaussian likelihood functional for branch 'e' or 'g'."""
    if len(record) == 0:
        raise ValueError("empty record: no information to integrate")
    if which not in ("e", "g"):
        raise ValueError(f"branch must be 'e' or 'g', got {which!r}")
    sqrt_gci, _, _ = _record_rate_table(record, cfg, steady_state)
    sign = -1.0 if which == "e" else 1.0
    mean = sign * 2.0 * sqrt_gci
    resid = record.current - mean
    return -0.5 * float(np.sum(resid * resid)) * record.dt


def gaussian_functional(record: HomodyneRecord, which: str,
                        cfg: ReadoutConfig,
                        steady_state: bool = False) -> float:
    """Likelihood P_i of the record given qubit branch i.

    Can underflow to 0.0 for long records; bayes_update works with the
    log form internally and is immune.
    """
    return math.exp(log_gaussian_functional(record, which, cfg, steady_state))


def random_phase(record: HomodyneRecord, cfg: ReadoutConfig,
                 steady_state: bool = False) -> float:
    """Accumulated backaction phase 2 int sqrt(Gamma_ba) I dt over the record."""
    if len(record) == 0:
        return 0.0
    _, _, sqrt_gba = _record_rate_table(record, cfg, steady_state)
    return 2.0 * float(np.sum(sqrt_gba * record.current)) * record.dt


def _purity_exponent_interval(cfg: ReadoutConfig, t0: float, t1: float) -> float:
    """int_{t0}^{t1} (Gamma_d - Gamma_m) dt by adaptive quadrature."""
    if t1 <= t0:
        return 0.0

    def integrand(t):
        r = rates_at(t, cfg)
        return r.gamma_d - r.gamma_m

    val, _ = quad(integrand, t0, t1, epsabs=1e-12, epsrel=1e-12, limit=400)
    return val


def purity_factor(cfg: ReadoutConfig, tau: float,
                  t0: float = 0.0, steady_state: bool = False) -> float:
    """D over [t0, t0+tau]: exp(-2 int (Gamma_d - Gamma_m) dt)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0.0:
        return 1.0
    if steady_state:
        r = _steady_rates(cfg)
        return math.exp(-2.0 * (r.gamma_d - r.gamma_m) * tau)
    return math.exp(-2.0 * _purity_exponent_interval(cfg, t0, t0 + tau))


def branch_overlap_magnitude(cfg: ReadoutConfig, tau: float) -> float:
    """|<alpha_e(tau)|alpha_g(tau)>| = exp(-|beta(tau)|^2 / 2)."""
    pair = cavity_pair(tau, cfg)
    return math.exp(-0.5 * pair.beta_mag**2)


def compute_update(rho0: QubitState, record: HomodyneRecord,
                   cfg: ReadoutConfig,
                   steady_state: bool = False) -> BayesUpdate:
    """All factors of the update for a nonempty record."""
    _require_no_extrinsic(cfg)
    p_e = gaussian_functional(record, "e", cfg, steady_state)
    p_g = gaussian_functional(record, "g", cfg, steady_state)
    d = purity_factor(cfg, record.duration, t0=record.t0,
                      steady_state=steady_state)
    phi = random_phase(record, cfg, steady_state)
    norm = rho0.rho_ee * p_e + rho0.rho_gg * p_g
    return BayesUpdate(p_e, p_g, d, phi, norm)


def bayes_update(rho0: QubitState, record: HomodyneRecord,
                 cfg: ReadoutConfig,
                 steady_state: bool = False) -> QubitState:
    """State after conditioning on the accumulated record."""
    _require_no_extrinsic(cfg)
    if len(record) == 0:
        return rho0
    record.check_grid(cfg.dt, cfg.phi_lo)
    le = log_gaussian_functional(record, "e", cfg, steady_state)
    lg = log_gaussian_functional(record, "g", cfg, steady_state)
    ref = max(le, lg)
    pe = math.exp(le - ref)
    pg = math.exp(lg - ref)
    norm = rho0.rho_ee * pe + rho0.rho_gg * pg
    d = purity_factor(cfg, record.duration, t0=record.t0,
                      steady_state=steady_state)
    phi = random_phase(record, cfg, steady_state)
    rho_ee = rho0.rho_ee * pe / norm
    rho_gg = rho0.rho_gg * pg / norm
    rho_eg = rho0.rho_eg * (math.sqrt(pe * pg) / norm) * d \
        * cmath.exp(-1j * phi)
    return QubitState(rho_ee, rho_gg, rho_eg)
