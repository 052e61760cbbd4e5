"""Hot integrator loops: numba-compiled by default, pure numpy on request.

Backend selection (import time) via the QREADOUT_BACKEND environment
variable: "auto" (numba when importable, else numpy), "numba", "numpy".
``benchmarks/bench_backends.py`` times the two paths against each other.

All kernels return a status code instead of raising: -1 means clean,
otherwise the first step index at which a state invariant broke beyond
tolerance.  Wrappers in effective.py / fullsme.py convert to exceptions.

Trajectory-state layout for the reduced-qubit kernels: (rho_ee, Re rho_eg,
Im rho_eg); rho_gg is implicit via the preserved unit trace.
"""
from __future__ import annotations

import math
import os

import numpy as np

from .errors import ConfigError

OK = -1


# ---------------------------------------------------------------------------
# loop-form kernel bodies (compiled verbatim by the numba backend)
# ---------------------------------------------------------------------------

def _effective_path_loop(rho0, w, sqrt_gci, gamma_d, sqrt_gba,
                         gamma1, gamma2, dt, tol):
    """One reduced-qubit trajectory; returns the full state path.

    Ito Euler-Maruyama with left-endpoint rates; after each step the state
    is projected back onto the physical set (diagonal clipped to [0, 1],
    coherence rescaled onto |rho_eg|^2 <= rho_ee rho_gg) and the projection
    distance is compared against tol.
    """
    n = w.shape[0]
    states = np.empty((n + 1, 3))
    current = np.empty(n)
    sqrt_dt = math.sqrt(dt)
    inv_sqrt_dt = 1.0 / sqrt_dt
    ee = rho0[0]
    eg_re = rho0[1]
    eg_im = rho0[2]
    states[0, 0] = ee
    states[0, 1] = eg_re
    states[0, 2] = eg_im
    status = OK
    for k in range(n):
        z = 2.0 * ee - 1.0
        current[k] = -2.0 * sqrt_gci[k] * z + w[k] * inv_sqrt_dt
        dw = w[k] * sqrt_dt
        ee_new = ee - gamma1 * ee * dt - 4.0 * sqrt_gci[k] * ee * (1.0 - ee) * dw
        fac_re = 1.0 + (-2.0 * gamma_d[k] - gamma2 - 0.5 * gamma1) * dt \
            + 2.0 * sqrt_gci[k] * z * dw
        fac_im = -2.0 * sqrt_gba[k] * dw
        re_new = eg_re * fac_re - eg_im * fac_im
        im_new = eg_re * fac_im + eg_im * fac_re

        viol = 0.0
        if ee_new < 0.0:
            viol = -ee_new
            ee_new = 0.0
        elif ee_new > 1.0:
            viol = ee_new - 1.0
            ee_new = 1.0
        bound = ee_new * (1.0 - ee_new)
        c2 = re_new * re_new + im_new * im_new
        if c2 > bound:
            if c2 - bound > viol:
                viol = c2 - bound
            if c2 > 0.0:
                scale = math.sqrt(bound / c2)
                re_new *= scale
                im_new *= scale
        if viol > tol and status == OK:
            status = k

        ee = ee_new
        eg_re = re_new
        eg_im = im_new
        states[k + 1, 0] = ee
        states[k + 1, 1] = eg_re
        states[k + 1, 2] = eg_im
    return states, current, status


def _effective_batch_loop(rho0, w, sqrt_gci, gamma_d, sqrt_gba,
                          gamma1, gamma2, dt, tol, marks):
    """Batch of reduced-qubit trajectories (one noise row each).

    Returns final states, the accumulated current Q sampled after the step
    counts listed in ``marks``, per-grid-point state sums and squared sums
    across the batch (ensemble means and standard errors), and per-trajectory
    status codes.
    """
    n_traj = w.shape[0]
    n = w.shape[1]
    finals = np.empty((n_traj, 3))
    q_marks = np.zeros((n_traj, marks.shape[0]))
    sums = np.zeros((n + 1, 3))
    sq_sums = np.zeros((n + 1, 3))
    status = np.full(n_traj, OK, np.int64)
    sqrt_dt = math.sqrt(dt)
    inv_sqrt_dt = 1.0 / sqrt_dt
    for b in range(n_traj):
        ee = rho0[b, 0]
        eg_re = rho0[b, 1]
        eg_im = rho0[b, 2]
        sums[0, 0] += ee
        sums[0, 1] += eg_re
        sums[0, 2] += eg_im
        sq_sums[0, 0] += ee * ee
        sq_sums[0, 1] += eg_re * eg_re
        sq_sums[0, 2] += eg_im * eg_im
        q = 0.0
        mi = 0
        for k in range(n):
            z = 2.0 * ee - 1.0
            wk = w[b, k]
            q += (-2.0 * sqrt_gci[k] * z + wk * inv_sqrt_dt) * dt
            dw = wk * sqrt_dt
            ee_new = ee - gamma1 * ee * dt \
                - 4.0 * sqrt_gci[k] * ee * (1.0 - ee) * dw
            fac_re = 1.0 + (-2.0 * gamma_d[k] - gamma2 - 0.5 * gamma1) * dt \
                + 2.0 * sqrt_gci[k] * z * dw
            fac_im = -2.0 * sqrt_gba[k] * dw
            re_new = eg_re * fac_re - eg_im * fac_im
            im_new = eg_re * fac_im + eg_im * fac_re

            viol = 0.0
            if ee_new < 0.0:
                viol = -ee_new
                ee_new = 0.0
            elif ee_new > 1.0:
                viol = ee_new - 1.0
                ee_new = 1.0
            bound = ee_new * (1.0 - ee_new)
            c2 = re_new * re_new + im_new * im_new
            if c2 > bound:
                if c2 - bound > viol:
                    viol = c2 - bound
                if c2 > 0.0:
                    scale = math.sqrt(bound / c2)
                    re_new *= scale
                    im_new *= scale
            if viol > tol and status[b] == OK:
                status[b] = k

            ee = ee_new
            eg_re = re_new
            eg_im = im_new
            sums[k + 1, 0] += ee
            sums[k + 1, 1] += eg_re
            sums[k + 1, 2] += eg_im
            sq_sums[k + 1, 0] += ee * ee
            sq_sums[k + 1, 1] += eg_re * eg_re
            sq_sums[k + 1, 2] += eg_im * eg_im
            if mi < marks.shape[0] and k + 1 == marks[mi]:
                q_marks[b, mi] = q
                mi += 1
        finals[b, 0] = ee
        finals[b, 1] = eg_re
        finals[b, 2] = eg_im
    return finals, q_marks, sums, sq_sums, status


def _sme_path_loop(rho0, kmat, a_mat, nc, kappa, phi, dt, w,
                   store_every, top_tol, diag_tol):
    """One joint qubit-cavity trajectory in the truncated Fock basis.

    Positivity-preserving Kraus factorization of the first-order stochastic
    step: rho -> M rho M^dag / tr, M = 1 + (-iH - kappa a^dag a / 2) dt
    + sqrt(kappa) e^{-i phi} a (dW + <measured quadrature> dt).  The raw
    Euler update dips eigenvalues by O(kappa dt), far beyond the module's
    positivity tolerance; this factorized form is exact-positive and agrees
    with it to the integrator's order.

    Basis ordering |e,0..n_max>, |g,0..n_max>; nc = n_max + 1.
    """
    dim = rho0.shape[0]
    n = w.shape[0]
    rho = rho0.copy()
    n_store = n // store_every + 1
    stored = np.empty((n_store, dim, dim), np.complex128)
    stored[0] = rho
    ee = np.empty(n + 1)
    eg = np.empty(n + 1, np.complex128)
    a_exp = np.empty(n + 1, np.complex128)
    current = np.empty(n)
    sq_n = np.sqrt(np.arange(1.0, nc))
    e_iphi = np.exp(-1j * phi)
    sqk = math.sqrt(kappa)
    sqrt_dt = math.sqrt(dt)
    inv_sqrt_dt = 1.0 / sqrt_dt
    status = OK
    for k in range(n + 1):
        tr_a = 0.0 + 0.0j
        for q in range(2):
            base = q * nc
            for m in range(nc - 1):
                tr_a += sq_n[m] * rho[base + m + 1, base + m]
        pop = 0.0
        coh = 0.0 + 0.0j
        for m in range(nc):
            pop += rho[m, m].real
            coh += rho[m, nc + m]
        ee[k] = pop
        eg[k] = coh
        a_exp[k] = tr_a
        if k == n or status != OK:
            break
        lam = 2.0 * (e_iphi * tr_a).real
        current[k] = sqk * lam + w[k] * inv_sqrt_dt
        coef = sqk * e_iphi * (w[k] * sqrt_dt + sqk * lam * dt)
        m_op = dt * kmat + coef * a_mat
        for i in range(dim):
            m_op[i, i] += 1.0
        half = np.dot(m_op, rho)
        m_h = np.ascontiguousarray(np.conj(m_op).T)
        rho_new = np.dot(half, m_h)
        tr = 0.0
        for i in range(dim):
            tr += rho_new[i, i].real
        rho = (rho_new + np.ascontiguousarray(np.conj(rho_new).T)) * (0.5 / tr)
        top = rho[nc - 1, nc - 1].real + rho[dim - 1, dim - 1].real
        if not (top < top_tol):
            status = k
        for i in range(dim):
            if rho[i, i].real < -diag_tol:
                status = k
                break
        if (k + 1) % store_every == 0:
            stored[(k + 1) // store_every] = rho
    return stored, rho, ee, eg, a_exp, current, status


# ---------------------------------------------------------------------------
# step-vectorized numpy batch (the fallback's fast path for large ensembles)
# ---------------------------------------------------------------------------

def _effective_batch_vectorized(rho0, w, sqrt_gci, gamma_d, sqrt_gba,
                                gamma1, gamma2, dt, tol, marks):
    """Same contract as _effective_batch_loop, vectorized across the batch."""
    n_traj, n = w.shape
    sqrt_dt = math.sqrt(dt)
    inv_sqrt_dt = 1.0 / sqrt_dt
    ee = rho0[:, 0].copy()
    eg = rho0[:, 1] + 1j * rho0[:, 2]
    q = np.zeros(n_traj)
    q_marks = np.zeros((n_traj, len(marks)))
    sums = np.zeros((n + 1, 3))
    sq_sums = np.zeros((n + 1, 3))
    status = np.full(n_traj, OK, np.int64)
    sums[0] = ee.sum(), eg.real.sum(), eg.imag.sum()
    sq_sums[0] = (ee**2).sum(), (eg.real**2).sum(), (eg.imag**2).sum()
    mi = 0
    for k in range(n):
        z = 2.0 * ee - 1.0
        wk = w[:, k]
        q += (-2.0 * sqrt_gci[k] * z + wk * inv_sqrt_dt) * dt
        dw = wk * sqrt_dt
        ee_new = ee - gamma1 * ee * dt - 4.0 * sqrt_gci[k] * ee * (1.0 - ee) * dw
        factor = (1.0 + (-2.0 * gamma_d[k] - gamma2 - 0.5 * gamma1) * dt
                  + 2.0 * sqrt_gci[k] * z * dw) - 2j * sqrt_gba[k] * dw
        eg = eg * factor

        viol = np.maximum(np.maximum(-ee_new, ee_new - 1.0), 0.0)
        ee = np.clip(ee_new, 0.0, 1.0)
        bound = ee * (1.0 - ee)
        c2 = eg.real**2 + eg.imag**2
        over = c2 > bound
        if np.any(over):
            viol = np.maximum(viol, np.where(over, c2 - bound, 0.0))
            safe = np.where(c2 > 0.0, c2, 1.0)
            eg = np.where(over, eg * np.sqrt(bound / safe), eg)
        bad = (viol > tol) & (status == OK)
        if np.any(bad):
            status[bad] = k

        sums[k + 1] = ee.sum(), eg.real.sum(), eg.imag.sum()
        sq_sums[k + 1] = (ee**2).sum(), (eg.real**2).sum(), (eg.imag**2).sum()
        if mi < len(marks) and k + 1 == marks[mi]:
            q_marks[:, mi] = q
            mi += 1
    finals = np.column_stack((ee, eg.real, eg.imag))
    return finals, q_marks, sums, sq_sums, status


# ---------------------------------------------------------------------------
# backend dispatch
# ---------------------------------------------------------------------------

IMPLEMENTATIONS: dict[str, dict] = {
    "numpy": {
        "effective_path": _effective_path_loop,
        "effective_batch": _effective_batch_vectorized,
        "sme_path": _sme_path_loop,
    },
}


def _load_numba_impl():
    from . import _kernels_numba
    IMPLEMENTATIONS["numba"] = {
        "effective_path": _kernels_numba.effective_path,
        "effective_batch": _kernels_numba.effective_batch,
        "sme_path": _kernels_numba.sme_path,
    }


_requested = os.environ.get("QREADOUT_BACKEND", "auto").lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ConfigError(
        f"QREADOUT_BACKEND must be auto|numba|numpy, got {_requested!r}")

if _requested == "numpy":
    BACKEND = "numpy"
elif _requested == "numba":
    _load_numba_impl()
    BACKEND = "numba"
else:
    try:
        _load_numba_impl()
        BACKEND = "numba"
    except ImportError:
        BACKEND = "numpy"

effective_path = IMPLEMENTATIONS[BACKEND]["effective_path"]
effective_batch = IMPLEMENTATIONS[BACKEND]["effective_batch"]
sme_path = IMPLEMENTATIONS[BACKEND]["sme_path"]


def get_impl(backend: str) -> dict:
    """Kernel set for an explicit backend name (benchmarks, equivalence tests)."""
    if backend == "numba" and "numba" not in IMPLEMENTATIONS:
        _load_numba_impl()
    return IMPLEMENTATIONS[backend]
