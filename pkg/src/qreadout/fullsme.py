"""Ground-truth joint qubit-cavity trajectory engine in a truncated Fock basis.

Basis ordering is qubit (x) Fock: |e,0>, |e,1>, ..., |e,n_max>, |g,0>, ...
The stochastic step uses a positivity-preserving Kraus factorization of the
first-order homodyne update (see kernels._sme_path_loop).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from . import kernels
from .config import ReadoutConfig, Scheme
from .effective import QubitState
from .errors import InvariantViolation, PositivityError, TruncationError
from .records import HomodyneRecord, record_from_noise
from .seeding import trajectory_rng

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
EIG_TOL = 1e-8
TOP_FOCK_TOL = 1e-6
STEP_EIG_TOL = 1e-6
_N_MAX_LIMIT = 4096


def annihilation(n_max: int) -> np.ndarray:
    """Cavity annihilation operator on the (n_max + 1)-dim Fock block."""
    return np.diag(np.sqrt(np.arange(1.0, n_max + 1)), 1).astype(complex)


def coherent_vector(alpha: complex, n_max: int) -> np.ndarray:
    """Normalized coherent-state amplitudes by direct Fock expansion."""
    n = np.arange(n_max + 1)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, n_max + 1)))))
    with np.errstate(divide="ignore"):
        log_mag = n * np.log(abs(alpha)) if alpha != 0 else np.where(n == 0, 0.0, -np.inf)
    amps = np.exp(-abs(alpha) ** 2 / 2 + log_mag - 0.5 * log_fact) \
        * np.exp(1j * n * np.angle(alpha))
    return amps


def displacement_matrix(alpha: complex, n_max: int) -> np.ndarray:
    """D(alpha) = exp(alpha a^dag - alpha* a) on the truncated block."""
    a = annihilation(n_max)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


@dataclass(frozen=True)
class OperatorSet:
    """Matrices on the joint space used by the trajectory engine."""

    n_max: int
    a: np.ndarray
    a_dag: np.ndarray
    sigma_z: np.ndarray
    sigma_minus: np.ndarray
    h_z: np.ndarray
    i_phi: np.ndarray
    q_phi: np.ndarray
    kmat: np.ndarray  # -i h_z - kappa a^dag a / 2, the drift generator

    @property
    def dim_cavity(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)


def build_operators(n_max: int, cfg: ReadoutConfig) -> OperatorSet:
    """Joint-space operator set for the configured scheme."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if n_max > _N_MAX_LIMIT:
        raise ValueError(f"n_max={n_max} exceeds the {_N_MAX_LIMIT} guard")
    nc = n_max + 1
    a_c = annihilation(n_max)
    eye_c = np.eye(nc, dtype=complex)
    eye_q = np.eye(2, dtype=complex)
    a = np.kron(eye_q, a_c)
    a_dag = a.conj().T.copy()
    sigma_z = np.kron(np.diag([1.0, -1.0]).astype(complex), eye_c)
    sigma_minus = np.kron(np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex), eye_c)
    x_c = a_c + a_c.conj().T
    if cfg.scheme is Scheme.LONGITUDINAL:
        h_z = 0.5 * cfg.drive * np.kron(np.diag([1.0, -1.0]).astype(complex), x_c)
    else:
        h_z = cfg.chi * np.kron(np.diag([1.0, -1.0]).astype(complex),
                                a_c.conj().T @ a_c) \
            + cfg.drive * np.kron(eye_q, x_c)
    phase = np.exp(-1j * cfg.phi_lo)
    i_phi = 0.5 * (a * phase + a_dag * np.conj(phase))
    q_phi = -0.5j * (a * phase - a_dag * np.conj(phase))
    kmat = -1j * h_z - 0.5 * cfg.kappa * (a_dag @ a)
    return OperatorSet(n_max, a, a_dag, sigma_z, sigma_minus, h_z,
                       i_phi, q_phi, kmat)


@dataclass
class FockJointState:
    """Joint qubit-cavity density matrix with its numerical invariants."""

    rho: np.ndarray
    n_max: int

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        dim = 2 * (self.n_max + 1)
        if self.rho.shape != (dim, dim):
            raise ValueError(f"rho must be {dim}x{dim} for n_max={self.n_max}")

    @property
    def dim_qubit(self) -> int:
        return 2

    @property
    def dim_cavity(self) -> int:
        return self.n_max + 1

    @classmethod
    def from_vector(cls, psi: np.ndarray, n_max: int) -> "FockJointState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), n_max)

    @classmethod
    def product(cls, c_e: complex, c_g: complex, cavity_e: complex,
                cavity_g: complex, n_max: int) -> "FockJointState":
        """Pure state c_e|e>|cavity_e> + c_g|g>|cavity_g> (coherent branches)."""
        psi = np.concatenate((c_e * coherent_vector(cavity_e, n_max),
                              c_g * coherent_vector(cavity_g, n_max)))
        return cls.from_vector(psi, n_max)

    @classmethod
    def initial(cls, cfg: ReadoutConfig,
                qubit: tuple[complex, complex] | None = None) -> "FockJointState":
        """Default start: (|e> + |g>)/sqrt(2) (x) vacuum."""
        c_e, c_g = (1 / math.sqrt(2), 1 / math.sqrt(2)) if qubit is None else qubit
        nc = cfg.n_max + 1
        psi = np.zeros(2 * nc, dtype=complex)
        psi[0] = c_e
        psi[nc] = c_g
        return cls.from_vector(psi, cfg.n_max)

    def top_fock_occupancy(self) -> float:
        nc = self.n_max + 1
        return float(self.rho[nc - 1, nc - 1].real + self.rho[-1, -1].real)

    def validate(self) -> "FockJointState":
        asym = np.max(np.abs(self.rho - self.rho.conj().T))
        if asym > HERMITICITY_TOL:
            raise InvariantViolation(f"hermiticity broken: asymmetry {asym:.2e}")
        tr = np.trace(self.rho).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvariantViolation(f"trace {tr} != 1")
        min_eig = float(np.linalg.eigvalsh(self.rho)[0])
        if min_eig < -EIG_TOL:
            raise PositivityError(f"negative eigenvalue {min_eig:.2e}")
        occ = self.top_fock_occupancy()
        if occ > TOP_FOCK_TOL:
            raise TruncationError(f"top-Fock occupancy {occ:.2e}; raise n_max")
        return self


def reduce_qubit(state: FockJointState) -> QubitState:
    """Partial trace over the cavity."""
    nc = state.n_max + 1
    rho = state.rho
    rho_ee = float(np.trace(rho[:nc, :nc]).real)
    rho_gg = float(np.trace(rho[nc:, nc:]).real)
    rho_eg = complex(np.trace(rho[:nc, nc:]))
    return QubitState(rho_ee, rho_gg, rho_eg)


def _raise_guard_failure(rho: np.ndarray, nc: int, step: int):
    """Classify an in-loop guard trip on the state that caused it."""
    top = rho[nc - 1, nc - 1].real + rho[-1, -1].real
    if top > TOP_FOCK_TOL:
        raise TruncationError(
            f"top-Fock occupancy {top:.2e}; raise n_max", step=step)
    raise PositivityError(
        "negative population beyond tolerance; dt too large or state invalid",
        step=step)


def step_sme(state: FockJointState, ops: OperatorSet, cfg: ReadoutConfig,
             w: float) -> tuple[FockJointState, float]:
    """One stochastic step; returns the new state and the current sample.

    Errors out if the updated state develops a negative eigenvalue beyond
    tolerance or pushes weight onto the top Fock level (dt too large or
    n_max too small).
    """
    if not math.isfinite(w):
        raise ValueError("noise draw must be finite")
    stored, rho, _, _, _, current, status = kernels.sme_path(
        np.ascontiguousarray(state.rho, dtype=complex), ops.kmat, ops.a,
        ops.dim_cavity, cfg.kappa, cfg.phi_lo, cfg.dt,
        np.array([float(w)]), 1, TOP_FOCK_TOL, STEP_EIG_TOL)
    del stored
    if status != kernels.OK:
        _raise_guard_failure(rho, ops.dim_cavity, int(status))
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    if min_eig < -STEP_EIG_TOL:
        raise PositivityError(
            f"negative eigenvalue {min_eig:.2e} after step; "
            "dt too large or n_max too small")
    return FockJointState(rho, state.n_max), float(current[0])


class FullSmeRun(NamedTuple):
    """Joint-trajectory output with per-step reduced observables."""

    states: list[FockJointState]   # snapshots every store_every steps
    record: HomodyneRecord
    qubit_ee: np.ndarray           # (n+1,)
    qubit_eg: np.ndarray           # (n+1,) complex
    a_exp: np.ndarray              # (n+1,) complex
    store_every: int

    def qubit_path(self) -> np.ndarray:
        return np.column_stack(
            (self.qubit_ee, self.qubit_eg.real, self.qubit_eg.imag))

    def final_state(self) -> FockJointState:
        return self.states[-1]


def run_trajectory_full(cfg: ReadoutConfig,
                        rho0: FockJointState | None = None,
                        noise: HomodyneRecord | None = None,
                        n_steps: int | None = None,
                        store_every: int | None = None,
                        ops: OperatorSet | None = None) -> FullSmeRun:
    """Integrate one joint trajectory; deterministic for a given seed.

    A supplied record drives the integrator with its stored noise samples
    (shared-noise cross-validation); otherwise noise comes from the config
    seed and the generated record is returned.
    """
    ops = build_operators(cfg.n_max, cfg) if ops is None else ops
    state0 = FockJointState.initial(cfg) if rho0 is None else rho0
    if state0.n_max != cfg.n_max:
        raise ValueError("initial state truncation differs from cfg.n_max")
    if noise is None:
        n = cfg.n_steps if n_steps is None else n_steps
        w = trajectory_rng(cfg.seed, 0).standard_normal(n)
        t0 = 0.0
    else:
        noise.check_grid(cfg.dt, cfg.phi_lo)
        w = noise.xi * math.sqrt(cfg.dt)
        n, t0 = len(noise), noise.t0
    if store_every is None:
        store_every = max(1, n // 200)

    stored, rho_final, ee, eg, a_exp, current, status = kernels.sme_path(
        np.ascontiguousarray(state0.rho, dtype=complex), ops.kmat, ops.a,
        ops.dim_cavity, cfg.kappa, cfg.phi_lo, cfg.dt,
        np.asarray(w, dtype=float), int(store_every),
        TOP_FOCK_TOL, STEP_EIG_TOL)
    if status != kernels.OK:
        _raise_guard_failure(rho_final, ops.dim_cavity, int(status))

    states = [FockJointState(stored[i], cfg.n_max)
              for i in range(stored.shape[0])]
    if (n % store_every) != 0:
        states.append(FockJointState(rho_final, cfg.n_max))
    record = noise if noise is not None else record_from_noise(
        w, current, cfg.dt, cfg.phi_lo, t0)
    return FullSmeRun(states, record, ee, eg, a_exp, int(store_every))


def propagate_linear_full(state0: FockJointState, ops: OperatorSet,
                          record: HomodyneRecord,
                          cfg: ReadoutConfig) -> FockJointState:
    """Unnormalized joint propagation driven by the raw current samples.

    Derivation-validation hook; per-step rescaling only guards overflow.
    """
    record.check_grid(cfg.dt, cfg.phi_lo)
    rho = np.array(state0.rho, dtype=complex)
    a, a_dag = ops.a, ops.a_dag
    c = ops.a * np.exp(-1j * cfg.phi_lo)
    sqk = math.sqrt(cfg.kappa)
    dt = cfg.dt
    for u in record.current:
        drift = ops.kmat @ rho + rho @ ops.kmat.conj().T \
            + cfg.kappa * (a @ rho @ a_dag)
        stoch = sqk * (c @ rho + rho @ c.conj().T)
        rho = rho + dt * drift + (u * dt) * stoch
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
    return FockJointState(rho, state0.n_max)
