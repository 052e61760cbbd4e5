"""Reduced-qubit stochastic trajectories and the unconditional master equation.

The cavity has been eliminated; the qubit state evolves under time-dependent
rates supplied by :mod:`qreadout.cavity`, driven either by fresh seeded noise
or by a supplied homodyne record (shared-noise cross-validation against the
full Fock-space engine, or filtering of a measured current).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .cavity import Rates, step_rate_table
from .config import ReadoutConfig
from .errors import InvariantViolation
from .records import HomodyneRecord, record_from_noise
from .seeding import noise_block, trajectory_rng

# Per-step projection distance beyond which the integrator aborts.
STEP_TOL = 1e-6


@dataclass(frozen=True)
class QubitState:
    """Qubit density matrix in the (e, g) basis."""

    rho_ee: float
    rho_gg: float
    rho_eg: complex

    @classmethod
    def from_components(cls, rho_ee: float, rho_eg: complex) -> "QubitState":
        return cls(float(rho_ee), 1.0 - float(rho_ee), complex(rho_eg))

    @classmethod
    def plus(cls) -> "QubitState":
        """(|e> + |g>)/sqrt(2), the default initial state."""
        return cls(0.5, 0.5, 0.5 + 0.0j)

    @classmethod
    def excited(cls) -> "QubitState":
        return cls(1.0, 0.0, 0.0j)

    @classmethod
    def ground(cls) -> "QubitState":
        return cls(0.0, 1.0, 0.0j)

    @property
    def sigma_z(self) -> float:
        return self.rho_ee - self.rho_gg

    @property
    def purity(self) -> float:
        return self.rho_ee**2 + self.rho_gg**2 + 2.0 * abs(self.rho_eg) ** 2

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.rho_ee, self.rho_eg],
                         [np.conj(self.rho_eg), self.rho_gg]])

    def as_vector(self) -> np.ndarray:
        return np.array([self.rho_ee, self.rho_eg.real, self.rho_eg.imag])

    def validate(self, tol: float = 1e-10) -> "QubitState":
        if abs(self.rho_ee + self.rho_gg - 1.0) > tol:
            raise InvariantViolation(
                f"qubit trace {self.rho_ee + self.rho_gg} != 1")
        if min(self.rho_ee, self.rho_gg) < -tol:
            raise InvariantViolation("negative qubit population")
        if abs(self.rho_eg) ** 2 > self.rho_ee * self.rho_gg + tol:
            raise InvariantViolation(
                "qubit coherence violates |rho_eg|^2 <= rho_ee rho_gg")
        return self


def trace_distance(a: QubitState, b: QubitState) -> float:
    """Trace distance between two qubit states."""
    d_ee = a.rho_ee - b.rho_ee
    d_gg = a.rho_gg - b.rho_gg
    c = a.rho_eg - b.rho_eg
    disc = math.sqrt((d_ee - d_gg) ** 2 + 4.0 * abs(c) ** 2)
    lam1 = 0.5 * ((d_ee + d_gg) + disc)
    lam2 = 0.5 * ((d_ee + d_gg) - disc)
    return 0.5 * (abs(lam1) + abs(lam2))


def effective_current(rho: QubitState, rates: Rates, w: float, dt: float) -> float:
    """Homodyne current sample produced by the reduced dynamics."""
    return -2.0 * math.sqrt(rates.gamma_ci) * rho.sigma_z + w / math.sqrt(dt)


def step_effective(rho: QubitState, rates: Rates, cfg: ReadoutConfig,
                   w: float) -> QubitState:
    """One Ito step of the reduced trajectory equation, then reprojection."""
    states, _, status = kernels.effective_path(
        rho.as_vector(), np.array([float(w)]),
        np.array([math.sqrt(rates.gamma_ci)]),
        np.array([rates.gamma_d]),
        np.array([math.sqrt(rates.gamma_ba)]),
        cfg.gamma1, cfg.gamma2, cfg.dt, STEP_TOL)
    if status != kernels.OK:
        raise InvariantViolation(
            "reduced-qubit step left the physical state set; decrease dt",
            step=0)
    ee, re, im = states[1]
    return QubitState.from_components(ee, re + 1j * im)


class EffectiveRun(NamedTuple):
    """Trajectory output: path[k] = (rho_ee, Re rho_eg, Im rho_eg) at t_k."""

    path: np.ndarray
    record: HomodyneRecord

    @property
    def states(self) -> list[QubitState]:
        return [QubitState.from_components(ee, re + 1j * im)
                for ee, re, im in self.path]

    def final_state(self) -> QubitState:
        ee, re, im = self.path[-1]
        return QubitState.from_components(ee, re + 1j * im)


def _resolve_noise(cfg: ReadoutConfig, noise, n_steps: int | None):
    """Returns (w draws, n_steps, t0) honoring a supplied record's grid."""
    if noise is None:
        n = cfg.n_steps if n_steps is None else n_steps
        w = trajectory_rng(cfg.seed, 0).standard_normal(n)
        return w, n, 0.0
    noise.check_grid(cfg.dt, cfg.phi_lo)
    return noise.xi * math.sqrt(cfg.dt), len(noise), noise.t0


def run_effective_trajectory(cfg: ReadoutConfig,
                             noise: HomodyneRecord | None = None,
                             rho0: QubitState | None = None,
                             n_steps: int | None = None) -> EffectiveRun:
    """Integrate one reduced-qubit trajectory.

    With ``noise=None`` the white noise is drawn from the config seed and the
    generated record is returned; with a supplied record the integrator is
    driven by its stored noise samples (same xi as whatever produced it).
    """
    rho0 = QubitState.plus() if rho0 is None else rho0
    w, n, t0 = _resolve_noise(cfg, noise, n_steps)
    sqrt_gci, gamma_d, sqrt_gba = step_rate_table(cfg, n, t0)
    path, current, status = kernels.effective_path(
        rho0.as_vector(), w, sqrt_gci, gamma_d, sqrt_gba,
        cfg.gamma1, cfg.gamma2, cfg.dt, STEP_TOL)
    if status != kernels.OK:
        raise InvariantViolation(
            "reduced-qubit trajectory left the physical state set; decrease dt",
            step=int(status))
    record = noise if noise is not None else record_from_noise(
        w, current, cfg.dt, cfg.phi_lo, t0)
    return EffectiveRun(path, record)


def run_filtering_trajectory(cfg: ReadoutConfig, record: HomodyneRecord,
                             rho0: QubitState | None = None) -> EffectiveRun:
    """Drive the trajectory by the record's *current*, not its stored noise.

    The innovation is re-derived each step from the running state,
    xi_k = I_k + 2 sqrt(Gamma_ci) <sigma_z>_k, which is the operational mode
    when only the measured current is available.  On a self-generated record
    this reproduces run_effective_trajectory exactly.
    """
    rho0 = QubitState.plus() if rho0 is None else rho0
    record.check_grid(cfg.dt, cfg.phi_lo)
    n = len(record)
    sqrt_gci, gamma_d, sqrt_gba = step_rate_table(cfg, n, record.t0)
    path = np.empty((n + 1, 3))
    path[0] = rho0.as_vector()
    ee, eg = rho0.rho_ee, rho0.rho_eg
    for k in range(n):
        z = 2.0 * ee - 1.0
        xi = record.current[k] + 2.0 * sqrt_gci[k] * z
        dw = xi * cfg.dt  # xi has units 1/sqrt(dt); dW = xi*dt
        ee_new = ee - cfg.gamma1 * ee * cfg.dt \
            - 4.0 * sqrt_gci[k] * ee * (1.0 - ee) * dw
        factor = (1.0 + (-2.0 * gamma_d[k] - cfg.gamma2 - 0.5 * cfg.gamma1) * cfg.dt
                  + 2.0 * sqrt_gci[k] * z * dw) - 2j * sqrt_gba[k] * dw
        eg = eg * factor
        viol = max(-ee_new, ee_new - 1.0, 0.0)
        ee = min(max(ee_new, 0.0), 1.0)
        bound = ee * (1.0 - ee)
        if abs(eg) ** 2 > bound:
            viol = max(viol, abs(eg) ** 2 - bound)
            eg = eg * math.sqrt(bound / abs(eg) ** 2) if abs(eg) > 0 else 0.0
        if viol > STEP_TOL:
            raise InvariantViolation("filtering step left the physical set",
                                     step=k)
        path[k + 1] = ee, eg.real, eg.imag
    return EffectiveRun(path, record)


def propagate_linear(rho0: QubitState, record: HomodyneRecord,
                     cfg: ReadoutConfig) -> QubitState:
    """Unnormalized (linear) propagation driven by the raw current.

    Validation hook for the analytic-update derivation: the per-step rescale
    only controls overflow, the normalized direction is unchanged.
    """
    record.check_grid(cfg.dt, cfg.phi_lo)
    n = len(record)
    sqrt_gci, gamma_d, sqrt_gba = step_rate_table(cfg, n, record.t0)
    ee, gg, eg = rho0.rho_ee, rho0.rho_gg, rho0.rho_eg
    dt = cfg.dt
    for k in range(n):
        u = record.current[k]
        ee_new = ee + (-cfg.gamma1 * ee - 2.0 * sqrt_gci[k] * ee * u) * dt
        gg_new = gg + (cfg.gamma1 * ee + 2.0 * sqrt_gci[k] * gg * u) * dt
        eg_new = eg + (-(2.0 * gamma_d[k] + cfg.gamma2 + 0.5 * cfg.gamma1) * eg
                       - 2j * sqrt_gba[k] * eg * u) * dt
        tr = ee_new + gg_new
        ee, gg, eg = ee_new / tr, gg_new / tr, eg_new / tr
    return QubitState(ee, gg, eg)


def unconditional_evolve(rho0: QubitState, cfg: ReadoutConfig,
                         t_final: float) -> list[QubitState]:
    """Ensemble-averaged (deterministic) evolution on the cfg.dt grid."""
    path = unconditional_path(rho0, cfg, int(round(t_final / cfg.dt)))
    return [QubitState.from_components(ee, re + 1j * im) for ee, re, im in path]


def unconditional_path(rho0: QubitState, cfg: ReadoutConfig, n_steps: int,
                       t0: float = 0.0) -> np.ndarray:
    """Array form of unconditional_evolve: exact integrating-factor solution."""
    from .cavity import rate_series

    t = t0 + cfg.dt * np.arange(n_steps + 1)
    gd, _, _ = rate_series(cfg, t)
    # cumulative trapezoid of Gamma_d
    integral = np.concatenate(
        ([0.0], np.cumsum(0.5 * (gd[1:] + gd[:-1]) * cfg.dt)))
    ee = rho0.rho_ee * np.exp(-cfg.gamma1 * (t - t0))
    eg = rho0.rho_eg * np.exp(
        -(0.5 * cfg.gamma1 + cfg.gamma2) * (t - t0) - 2.0 * integral)
    return np.column_stack((ee, eg.real, eg.imag))


def expected_discrete_path(rho0: QubitState, cfg: ReadoutConfig,
                           n_steps: int, t0: float = 0.0) -> np.ndarray:
    """Exact expectation of the discretized trajectory ensemble.

    The noise terms have zero conditional mean, so the ensemble mean follows
    the left-endpoint Euler product of the deterministic part; this agrees
    with ``unconditional_path`` to O(dt) but is the right reference when a
    statistical band at a grid point is far tighter than the O(dt) bias.
    """
    _, gamma_d, _ = step_rate_table(cfg, n_steps, t0)
    out = np.empty((n_steps + 1, 3))
    ee = rho0.rho_ee
    eg = complex(rho0.rho_eg)
    out[0] = ee, eg.real, eg.imag
    for k in range(n_steps):
        ee = ee * (1.0 - cfg.gamma1 * cfg.dt)
        eg = eg * (1.0 - (2.0 * gamma_d[k] + cfg.gamma2
                          + 0.5 * cfg.gamma1) * cfg.dt)
        out[k + 1] = ee, eg.real, eg.imag
    return out


class EnsembleResult(NamedTuple):
    finals: np.ndarray      # (n_traj, 3)
    q_marks: np.ndarray     # (n_traj, len(marks))
    mean_path: np.ndarray   # (n_steps + 1, 3)
    se_path: np.ndarray     # (n_steps + 1, 3) standard error of the mean


def run_effective_ensemble(cfg: ReadoutConfig, n_traj: int,
                           rho0: QubitState | None = None,
                           n_steps: int | None = None,
                           marks=(), threads: int = 1,
                           seed_indices=None,
                           chunk_size: int = 512) -> EnsembleResult:
    """Ensemble of independent trajectories with splittable per-index seeds.

    Aggregation is associative and applied in fixed chunk order, so results
    are identical for any thread count.
    """
    rho0 = QubitState.plus() if rho0 is None else rho0
    n = cfg.n_steps if n_steps is None else n_steps
    marks = np.asarray(sorted(marks), dtype=np.int64)
    if seed_indices is None:
        seed_indices = range(n_traj)
    seed_indices = list(seed_indices)
    if len(seed_indices) != n_traj:
        raise ValueError("seed_indices length must equal n_traj")
    rho0_vec = rho0.as_vector()
    sqrt_gci, gamma_d, sqrt_gba = step_rate_table(cfg, n)

    chunks = [seed_indices[i:i + chunk_size]
              for i in range(0, n_traj, chunk_size)]

    def run_chunk(idx_chunk):
        w = noise_block(cfg.seed, idx_chunk, n)
        r0 = np.broadcast_to(rho0_vec, (len(idx_chunk), 3)).copy()
        return kernels.effective_batch(
            r0, w, sqrt_gci, gamma_d, sqrt_gba,
            cfg.gamma1, cfg.gamma2, cfg.dt, STEP_TOL, marks)

    if threads > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]

    finals = np.concatenate([r[0] for r in results])
    q_marks = np.concatenate([r[1] for r in results])
    sums = np.zeros((n + 1, 3))
    sq_sums = np.zeros((n + 1, 3))
    for r in results:
        sums += r[2]
        sq_sums += r[3]
    for chunk, r in zip(chunks, results):
        bad = np.flatnonzero(r[4] != kernels.OK)
        if bad.size:
            raise InvariantViolation(
                f"trajectory {chunk[bad[0]]} left the physical state set; "
                "decrease dt", step=int(r[4][bad[0]]))
    mean = sums / n_traj
    if n_traj > 1:
        var = np.maximum(sq_sums / n_traj - mean**2, 0.0)
        se = np.sqrt(var / (n_traj - 1))
    else:
        se = np.full_like(mean, np.inf)
    return EnsembleResult(finals, q_marks, mean, se)
