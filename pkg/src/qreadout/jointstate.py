"""Conditional qubit-plus-cavity entangled pure state and the cavity reset.

The tracked state is c1 |e>|alpha_e> + c2 e^{i Phi} |g>|alpha_g>.  Reducing
over the cavity uses the overlap convention
<alpha_g|alpha_e> = exp(-(|alpha_e|^2 + |alpha_g|^2)/2 + conj(alpha_g) alpha_e),
whose phase matches the joint-space engine (pinned by a regression test).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from .bayes import bayes_update, random_phase
from .cavity import CavityPair, cavity_pair
from .config import ReadoutConfig, Scheme
from .effective import QubitState
from .errors import ConfigError
from .fullsme import FockJointState, displacement_matrix
from .records import HomodyneRecord

_RESET_SHAPE_TOL = 1e-8


@dataclass(frozen=True)
class JointPureState:
    """Amplitudes, accumulated random phase, and the cavity branch pair."""

    c1: complex
    c2: complex
    phi: float
    cavity: CavityPair

    def __post_init__(self):
        norm = abs(self.c1) ** 2 + abs(self.c2) ** 2
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"|c1|^2 + |c2|^2 = {norm} != 1")

    @classmethod
    def initial(cls, c1: complex = 1 / math.sqrt(2),
                c2: complex = 1 / math.sqrt(2)) -> "JointPureState":
        return cls(complex(c1), complex(c2), 0.0,
                   CavityPair.from_amplitudes(0.0, 0.0))


def coherent_overlap(alpha_g: complex, alpha_e: complex) -> complex:
    """<alpha_g|alpha_e> with the package-wide phase convention."""
    return cmath.exp(-0.5 * (abs(alpha_e) ** 2 + abs(alpha_g) ** 2)
                     + np.conj(alpha_g) * alpha_e)


def qubit_reduced_from_joint(psi: JointPureState) -> QubitState:
    """Partial trace over the two coherent branches."""
    overlap = coherent_overlap(psi.cavity.alpha_g, psi.cavity.alpha_e)
    rho_eg = psi.c1 * np.conj(psi.c2) * cmath.exp(-1j * psi.phi) * overlap
    return QubitState(abs(psi.c1) ** 2, abs(psi.c2) ** 2, complex(rho_eg))


def propagate_joint(psi0: JointPureState, record: HomodyneRecord,
                    cfg: ReadoutConfig) -> JointPureState:
    """Advance the joint state across a record.

    Amplitude magnitudes follow the diagonal Bayesian update (phases of
    c1, c2 are untouched: information gain only reweights the branches),
    Phi accumulates the backaction phase, and the cavity pair is evaluated
    from the closed forms at the record end time.
    """
    if len(record) == 0:
        return psi0
    diag0 = QubitState(abs(psi0.c1) ** 2, abs(psi0.c2) ** 2, 0.0j)
    diag = bayes_update(diag0, record, cfg)
    c1 = psi0.c1 * math.sqrt(diag.rho_ee / diag0.rho_ee) \
        if diag0.rho_ee > 0 else 0.0j
    c2 = psi0.c2 * math.sqrt(diag.rho_gg / diag0.rho_gg) \
        if diag0.rho_gg > 0 else 0.0j
    # guard round-off drift in the normalization
    norm = math.sqrt(abs(c1) ** 2 + abs(c2) ** 2)
    c1, c2 = c1 / norm, c2 / norm
    phi = psi0.phi + random_phase(record, cfg)
    pair = cavity_pair(record.t0 + record.duration, cfg)
    return JointPureState(c1, c2, phi, pair)


def reset(psi: JointPureState, cfg: ReadoutConfig) -> tuple[QubitState, float]:
    """Disentangling displacement pulse; returns the pure qubit state.

    Requires the longitudinal branch structure alpha_{e,g} = -/+ i a: a fast
    inverted-modulation pulse then maps both branches to vacuum.  The pulse
    is modeled as instantaneous, so the reported residual occupation is 0.
    """
    if cfg.scheme is not Scheme.LONGITUDINAL:
        raise ConfigError("reset pulse is defined for the longitudinal scheme")
    ae, ag = psi.cavity.alpha_e, psi.cavity.alpha_g
    if abs(ae + ag) > _RESET_SHAPE_TOL or abs(ae.real) > _RESET_SHAPE_TOL \
            or ae.imag > _RESET_SHAPE_TOL:
        raise ValueError(
            f"cavity branches ({ae}, {ag}) are not of the -/+ i a form")
    qubit = QubitState(abs(psi.c1) ** 2, abs(psi.c2) ** 2,
                       psi.c1 * np.conj(psi.c2) * cmath.exp(-1j * psi.phi))
    return qubit, 0.0


def reset_joint_state(psi: JointPureState) -> JointPureState:
    """Post-reset tracker state: same amplitudes and phase, vacuum cavity."""
    return replace(psi, cavity=CavityPair.from_amplitudes(0.0, 0.0))


def reset_full_sme(state: FockJointState, a_amp: float,
                   cfg: ReadoutConfig) -> FockJointState:
    """The same conditional displacement realized on the truncated joint space.

    Applies U = exp(+i a_amp sigma_z (x) (a + a^dagger)), which sends the
    branch at -i a_amp (qubit e) and +i a_amp (qubit g) to vacuum.
    """
    if cfg.scheme is not Scheme.LONGITUDINAL:
        raise ConfigError("reset pulse is defined for the longitudinal scheme")
    n_max = state.n_max
    u_e = displacement_matrix(1j * a_amp, n_max)
    u_g = displacement_matrix(-1j * a_amp, n_max)
    nc = n_max + 1
    u = np.zeros((2 * nc, 2 * nc), dtype=complex)
    u[:nc, :nc] = u_e
    u[nc:, nc:] = u_g
    rho = u @ state.rho @ u.conj().T
    out = FockJointState(rho, n_max)
    occ = out.top_fock_occupancy()
    if occ > 1e-6:
        from .errors import TruncationError

        raise TruncationError(
            f"top-Fock occupancy {occ:.2e} after reset pulse; raise n_max")
    return out
