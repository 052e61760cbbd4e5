"""Figures of merit: SNR (closed-form and Monte-Carlo), transient quantum
efficiency, purity degradation, and ensemble-vs-unconditional consistency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bayes import _purity_exponent_interval, branch_overlap_magnitude
from .cavity import rate_series
from .config import ReadoutConfig, Scheme
from .effective import (QubitState, expected_discrete_path,
                        run_effective_ensemble, unconditional_path)
from .errors import InvariantViolation

# Empirical SNR uses the quadrature-sum spread |dQ| / sqrt(var_e + var_g),
# the convention under which the closed forms below are exact.
_SNR_MIN_TRAJ = 100


def snr_longitudinal_analytic(cfg: ReadoutConfig, tau) -> float | np.ndarray:
    """Closed-form output SNR of the longitudinal scheme at optimal LO phase."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    k = cfg.kappa
    out = cfg.drive * np.sqrt(8.0 * tau / k) \
        * (1.0 - (2.0 / (k * tau)) * (1.0 - np.exp(-k * tau / 2.0)))
    return float(out) if out.ndim == 0 else out


def snr_dispersive_analytic(cfg: ReadoutConfig, tau) -> float | np.ndarray:
    """Closed-form dispersive SNR; valid only at the optimum chi = kappa/2."""
    if abs(cfg.chi - cfg.kappa / 2.0) > 1e-12 * cfg.kappa:
        raise ValueError(
            f"closed form requires chi = kappa/2, got chi={cfg.chi}; "
            "use snr_empirical for other shifts")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    k = cfg.kappa
    out = cfg.drive * np.sqrt(8.0 * tau / k) \
        * (1.0 - (2.0 / (k * tau))
           * (1.0 - np.cos(k * tau / 2.0) * np.exp(-k * tau / 2.0)))
    return float(out) if out.ndim == 0 else out


def empirical_q_samples(cfg: ReadoutConfig, n_traj: int, taus,
                        threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Accumulated-current samples Q for |e> and |g> ensembles.

    Returns arrays of shape (n_traj, len(taus)); the two ensembles use
    disjoint seed streams from the same root seed.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    marks = [int(round(t / cfg.dt)) for t in taus]
    if any(m < 1 for m in marks):
        raise ValueError("every tau must be at least one time step")
    n_steps = max(marks)
    res_e = run_effective_ensemble(
        cfg, n_traj, rho0=QubitState.excited(), n_steps=n_steps, marks=marks,
        threads=threads, seed_indices=range(n_traj))
    res_g = run_effective_ensemble(
        cfg, n_traj, rho0=QubitState.ground(), n_steps=n_steps, marks=marks,
        threads=threads, seed_indices=range(n_traj, 2 * n_traj))
    order = np.argsort(marks)
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return res_e.q_marks[:, inv], res_g.q_marks[:, inv]


def snr_empirical(cfg: ReadoutConfig, n_traj: int, tau: float,
                  threads: int = 1) -> float:
    """Monte-Carlo SNR from eigenstate-initialized trajectory ensembles."""
    if n_traj < _SNR_MIN_TRAJ:
        raise ValueError(f"need at least {_SNR_MIN_TRAJ} trajectories")
    q_e, q_g = empirical_q_samples(cfg, n_traj, [tau], threads=threads)
    return snr_from_samples(q_e[:, 0], q_g[:, 0])


def snr_from_samples(q_e: np.ndarray, q_g: np.ndarray) -> float:
    sep = abs(float(np.mean(q_e) - np.mean(q_g)))
    spread = math.sqrt(float(np.var(q_e, ddof=1) + np.var(q_g, ddof=1)))
    return sep / spread


def efficiency_curve(cfg: ReadoutConfig, t_grid) -> np.ndarray:
    """eta(t) = Gamma_m / Gamma_d; NaN flags points where Gamma_d = 0."""
    gd, gci, gba = rate_series(cfg, t_grid)
    gm = gci + gba
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(gd > 0.0, gm / np.where(gd > 0.0, gd, 1.0), np.nan)
    return eta


def purity_curve(cfg: ReadoutConfig, t_grid, check_tol: float = 1e-8
                 ) -> np.ndarray:
    """Branch-overlap purity factor D(t) on a grid.

    For the longitudinal scheme the rate-integral route is evaluated as well
    and both must agree to check_tol; a mismatch indicates a rates bug.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    overlap = np.array([branch_overlap_magnitude(cfg, t) for t in t_grid])
    if cfg.scheme is Scheme.LONGITUDINAL:
        integral = np.empty_like(t_grid)
        acc = 0.0
        prev = 0.0
        for i, t in enumerate(t_grid):
            acc += _purity_exponent_interval(cfg, prev, t)
            integral[i] = math.exp(-2.0 * acc)
            prev = t
        worst = float(np.max(np.abs(integral - overlap)))
        if worst > check_tol:
            raise InvariantViolation(
                f"purity-factor routes disagree by {worst:.2e}; rates bug")
    return overlap


@dataclass
class ConsistencyReport:
    """Ensemble mean vs deterministic evolution, with standard-error bands.

    The statistical z-scores are taken against the exact expectation of the
    discretized ensemble (``expected_path``); ``max_dev_continuum`` reports
    the absolute gap to the continuum unconditional solution, which differs
    from the discrete expectation by O(dt).
    """

    n_traj: int
    t_grid: np.ndarray
    mean_path: np.ndarray          # (n+1, 3) ensemble mean
    expected_path: np.ndarray      # (n+1, 3) discrete expectation
    continuum_path: np.ndarray     # (n+1, 3) unconditional solution
    se: np.ndarray                 # (n+1, 3) standard errors
    max_abs_dev: float
    max_dev_continuum: float
    max_z: float
    valid: bool                    # False when n_traj < 2 (band undefined)


def ensemble_vs_unconditional(cfg: ReadoutConfig, n_traj: int,
                              rho0: QubitState | None = None,
                              t_final: float | None = None,
                              threads: int = 1) -> ConsistencyReport:
    """Compare the trajectory-ensemble mean against the deterministic path.

    With n_traj < 2 the standard-error band is undefined and the report is
    flagged invalid (auto-skip).
    """
    rho0 = QubitState.plus() if rho0 is None else rho0
    n = cfg.n_steps if t_final is None else int(round(t_final / cfg.dt))
    expected = expected_discrete_path(rho0, cfg, n)
    continuum = unconditional_path(rho0, cfg, n)
    t_grid = cfg.dt * np.arange(n + 1)
    if n_traj < 2:
        mean = np.tile(rho0.as_vector(), (n + 1, 1))
        return ConsistencyReport(n_traj, t_grid, mean, expected, continuum,
                                 np.full((n + 1, 3), np.inf),
                                 math.nan, math.nan, math.nan, valid=False)
    res = run_effective_ensemble(cfg, n_traj, rho0=rho0, n_steps=n,
                                 threads=threads)
    dev = res.mean_path - expected
    max_abs_dev = float(np.max(np.abs(dev)))
    max_dev_continuum = float(np.max(np.abs(res.mean_path - continuum)))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(dev) / np.where(res.se_path > 0, res.se_path, np.inf)
    max_z = float(np.max(z))
    return ConsistencyReport(n_traj, t_grid, res.mean_path, expected,
                             continuum, res.se_path, max_abs_dev,
                             max_dev_continuum, max_z, valid=True)


@dataclass
class EnsembleSummary:
    """Wide summary of an ensemble run, as emitted by the CLI."""

    n_traj: int
    t_grid: np.ndarray
    mean_state: np.ndarray             # (n+1, 3)
    q_e: np.ndarray                    # accumulated currents, |e> ensemble
    q_g: np.ndarray
    snr_empirical: float
    eta: np.ndarray
    d_curve: np.ndarray
    se: np.ndarray | None = field(default=None)

    def validate(self):
        if not np.all(np.isfinite(self.d_curve)) or \
                np.any(self.d_curve <= 0) or np.any(self.d_curve > 1.0 + 1e-12):
            raise InvariantViolation("d_curve outside (0, 1]")
        grid = np.asarray(self.t_grid)
        eta_inner = self.eta[grid > 0]
        if not np.all(np.isfinite(eta_inner)):
            raise InvariantViolation("eta not finite at positive times")
        return self


def summarize_ensemble(cfg: ReadoutConfig, n_traj: int,
                       threads: int = 1) -> EnsembleSummary:
    """Run the three standard sub-ensembles and collect the summary."""
    n = cfg.n_steps
    res = run_effective_ensemble(cfg, n_traj, rho0=QubitState.plus(),
                                 n_steps=n, threads=threads,
                                 seed_indices=range(2 * n_traj, 3 * n_traj))
    q_e, q_g = empirical_q_samples(cfg, n_traj, [cfg.t_final],
                                   threads=threads)
    t_grid = cfg.dt * np.arange(n + 1)
    eta = efficiency_curve(cfg, t_grid)
    d = purity_curve(cfg, t_grid)
    return EnsembleSummary(
        n_traj, t_grid, res.mean_path, q_e[:, 0], q_g[:, 0],
        snr_from_samples(q_e[:, 0], q_g[:, 0]), eta, d,
        se=res.se_path).validate()
