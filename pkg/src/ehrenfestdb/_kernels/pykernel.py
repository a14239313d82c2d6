"""Pure-numpy trajectory propagation kernel.

This is the reference implementation of the hot loop; the compiled Cython
kernel in ``_core`` implements the identical algorithm. Results are
per-trajectory deterministic: each row depends only on its own inputs, so
chunking across workers cannot change the numbers.

One propagation step (the four-stage loop):
  1. collective coordinates Q_r = sum_k g_k q_k per reservoir
  2. quantum step  psi <- exp(-i dt (H0 + sum_r Q_r M_r)) psi
     (truncated Taylor applied to the vector, exact to machine precision;
     sub-stepped when ||A|| is large), then optional renormalization with
     |1 - ||psi||| accumulated as norm drift
  3. mean-field displacements z_r = Re <psi|V_r|psi> (original V)
  4. velocity-Verlet for every mode with constant force -g_k z_r over the step
"""

from __future__ import annotations

import math

import numpy as np

KERNEL_NAME = "python"

# Taylor truncation order for exp(A) v given theta = ||A||_inf; thresholds
# chosen so the remainder is below double precision. Shared with the C kernel.
_THETA_STEPS = (0.01, 0.05, 0.1, 0.2, 0.4)
_ORDERS = (7, 9, 10, 12, 14)
_THETA_MAX = 0.4


def taylor_order(theta: float) -> int:
    for th, k in zip(_THETA_STEPS, _ORDERS):
        if theta <= th:
            return k
    return _ORDERS[-1]


def _taylor_orders(theta: np.ndarray) -> np.ndarray:
    out = np.full(theta.shape, _ORDERS[-1], dtype=np.int64)
    for th, k in zip(reversed(_THETA_STEPS), reversed(_ORDERS)):
        out[theta <= th] = k
    return out


def propagate_batch(psi0, h0, m_mats, v_mats, omegas, gs, res_index,
                    res_offsets, q0, p0, dt, n_steps, record_steps,
                    renormalize, drift_budget):
    """Propagate a batch of independent trajectories.

    Parameters
    ----------
    psi0 : (T, n) complex
        Initial system amplitudes (unit norm).
    h0 : (n, n) complex
        Bare Hamiltonian, rad/ps.
    m_mats, v_mats : (R, n, n) float
        Modified and original coupling matrices per reservoir.
    omegas, gs : (K,) float
        All reservoirs' mode frequencies/couplings, concatenated.
    res_index : (K,) int
        Reservoir id of each mode.
    res_offsets : (R+1,) int
        Slice boundaries of each reservoir in the concatenated arrays.
    q0, p0 : (T, K) float
        Initial mode coordinates.
    dt : float
    n_steps : int
    record_steps : (S,) int
        Ascending step indices (0 = initial state) at which psi is recorded.
    renormalize : bool
    drift_budget : float
        Trajectory is flagged invalid once accumulated |1 - ||psi||| exceeds
        this; its remaining records are NaN.

    Returns
    -------
    psi_rec : (T, S, n) complex
    norm_drift : (T,) float
    valid : (T,) bool
    q, p : (T, K) float
        Final bath coordinates.
    """
    psi = np.array(psi0, dtype=np.complex128)
    q = np.array(q0, dtype=np.float64)
    p = np.array(p0, dtype=np.float64)
    n_traj, n = psi.shape
    record_steps = np.asarray(record_steps, dtype=np.int64)

    base = -1j * dt * np.asarray(h0, dtype=np.complex128)
    m_c = -1j * dt * np.asarray(m_mats, dtype=np.complex128)
    v_mats = np.asarray(v_mats, dtype=np.float64)
    w2 = omegas * omegas
    half_dt2 = 0.5 * dt * dt
    half_dt = 0.5 * dt

    psi_rec = np.full((n_traj, record_steps.size, n), np.nan, dtype=np.complex128)
    drift = np.zeros(n_traj)
    valid = np.ones(n_traj, dtype=bool)

    rec = 0
    if record_steps.size and record_steps[0] == 0:
        psi_rec[:, 0, :] = psi
        rec = 1

    for step in range(1, n_steps + 1):
        # collective coordinate per reservoir: (T, R). Row-local reduction
        # (elementwise product + axis sum) so results cannot depend on the
        # batch composition, unlike strided BLAS matvec paths.
        qg = q * gs
        qr = np.empty((n_traj, len(res_offsets) - 1))
        for r in range(len(res_offsets) - 1):
            qr[:, r] = qg[:, res_offsets[r]:res_offsets[r + 1]].sum(axis=1)

        a = base[None, :, :] + np.einsum("tr,rij->tij", qr, m_c)
        theta = np.abs(a).sum(axis=2).max(axis=1)
        theta = np.where(np.isfinite(theta), theta, 0.0)
        n_sub = np.ones(n_traj, dtype=np.int64)
        big = theta > _THETA_MAX
        n_sub[big] = np.ceil(theta[big] / _THETA_MAX).astype(np.int64)

        for ns in np.unique(n_sub):
            rows = np.nonzero(n_sub == ns)[0]
            a_s = a[rows] / ns
            orders = _taylor_orders(theta[rows] / ns)
            kmax = int(orders.max())
            for _ in range(ns):
                phi = psi[rows]
                acc = phi.copy()
                for k in range(1, kmax + 1):
                    phi = np.einsum("tij,tj->ti", a_s, phi) / k
                    acc += np.where((orders >= k)[:, None], phi, 0.0)
                psi[rows] = acc

        nrm = np.sqrt(np.sum(np.abs(psi) ** 2, axis=1))
        inc = np.abs(1.0 - nrm)
        drift = np.where(valid, drift + inc, drift)
        if renormalize:
            safe = np.where(nrm > 0.0, nrm, 1.0)
            psi = np.where(valid[:, None], psi / safe[:, None], psi)
        newly_bad = valid & (~np.isfinite(nrm) | (drift > drift_budget))
        if np.any(newly_bad):
            valid &= ~newly_bad
            psi[newly_bad] = np.nan

        # mean-field displacement per reservoir, original V
        z = np.einsum("ti,rij,tj->tr", psi.conj(), v_mats, psi).real
        z = np.where(np.isfinite(z), z, 0.0)
        zmode = z[:, res_index]

        acc0 = -(q * w2 + gs * zmode)
        q_new = q + p * dt + acc0 * half_dt2
        acc1 = -(q_new * w2 + gs * zmode)
        p_new = p + (acc0 + acc1) * half_dt
        # invalid trajectories keep their last bath state (compiled kernel
        # exits its loop there)
        q = np.where(valid[:, None], q_new, q)
        p = np.where(valid[:, None], p_new, p)

        if rec < record_steps.size and record_steps[rec] == step:
            psi_rec[:, rec, :] = psi
            psi_rec[~valid, rec, :] = np.nan
            rec += 1

    return psi_rec, drift, valid, q, p
