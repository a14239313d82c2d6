# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory propagation kernel.

Same contract and arithmetic as ``pykernel.propagate_batch``; one C loop per
trajectory instead of batched numpy. See pykernel for the algorithm notes.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, fabs, sqrt

cnp.import_array()

KERNEL_NAME = "cython"

DEF NMAX = 8


cdef inline int _taylor_order(double theta) noexcept nogil:
    if theta <= 0.01:
        return 7
    if theta <= 0.05:
        return 9
    if theta <= 0.1:
        return 10
    if theta <= 0.2:
        return 12
    return 14


def propagate_batch(psi0, h0, m_mats, v_mats, omegas, gs, res_index,
                    res_offsets, q0, p0, double dt, long n_steps,
                    record_steps, bint renormalize, double drift_budget):
    """Compiled counterpart of ``pykernel.propagate_batch`` (same signature)."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] psi_arr = \
        np.array(psi0, dtype=np.complex128, order="C")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q_arr = \
        np.array(q0, dtype=np.float64, order="C")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_arr = \
        np.array(p0, dtype=np.float64, order="C")
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] h0_arr = \
        np.ascontiguousarray(h0, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] m_arr = \
        np.ascontiguousarray(m_mats, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] v_arr = \
        np.ascontiguousarray(v_mats, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w_arr = \
        np.ascontiguousarray(omegas, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g_arr = \
        np.ascontiguousarray(gs, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] off_arr = \
        np.ascontiguousarray(res_offsets, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rec_arr = \
        np.ascontiguousarray(record_steps, dtype=np.int64)

    cdef Py_ssize_t n_traj = psi_arr.shape[0]
    cdef Py_ssize_t n = psi_arr.shape[1]
    cdef Py_ssize_t n_res = m_arr.shape[0]
    cdef Py_ssize_t n_modes = w_arr.shape[0]
    cdef Py_ssize_t n_rec = rec_arr.shape[0]
    if n > NMAX:
        raise ValueError(f"kernel supports up to {NMAX} levels, got {n}")

    cdef cnp.ndarray[cnp.complex128_t, ndim=3] psi_rec = \
        np.full((n_traj, n_rec, n), np.nan, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] drift = np.zeros(n_traj)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] valid = np.ones(n_traj, dtype=np.uint8)

    # per-reservoir scaled coupling matrices folded with -i*dt
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] base = \
        np.ascontiguousarray(-1j * dt * np.asarray(h0_arr))
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] m_c = \
        np.ascontiguousarray(-1j * dt * np.asarray(m_arr))

    cdef cnp.ndarray[cnp.float64_t, ndim=1] w2_arr = \
        np.ascontiguousarray(np.asarray(w_arr) ** 2)

    cdef double complex A[NMAX][NMAX]
    cdef double complex psi[NMAX]
    cdef double complex phi[NMAX]
    cdef double complex acc[NMAX]
    cdef double complex tmp[NMAX]
    cdef double complex cz
    cdef double Qr[NMAX]          # one collective coordinate per reservoir
    cdef double zres[NMAX]
    cdef double theta, rowsum, nrm, inc, a0, a1, zk, scale
    cdef double half_dt2 = 0.5 * dt * dt
    cdef double half_dt = 0.5 * dt
    cdef Py_ssize_t t, step, i, j, k, r, m, rec, ns, sub, order
    cdef bint alive

    if n_res > NMAX:
        raise ValueError("too many reservoirs")

    for t in range(n_traj):
        for i in range(n):
            psi[i] = psi_arr[t, i]
        rec = 0
        if n_rec > 0 and rec_arr[0] == 0:
            for i in range(n):
                psi_rec[t, 0, i] = psi[i]
            rec = 1
        alive = True

        for step in range(1, n_steps + 1):
            if not alive:
                break
            # 1. collective coordinates
            for r in range(n_res):
                a0 = 0.0
                for m in range(off_arr[r], off_arr[r + 1]):
                    a0 += g_arr[m] * q_arr[t, m]
                Qr[r] = a0

            # 2. quantum step: A = -i dt (H0 + sum_r Q_r M_r), psi <- exp(A) psi
            for i in range(n):
                for j in range(n):
                    cz = base[i, j]
                    for r in range(n_res):
                        cz = cz + Qr[r] * m_c[r, i, j]
                    A[i][j] = cz
            theta = 0.0
            for i in range(n):
                rowsum = 0.0
                for j in range(n):
                    rowsum += sqrt(A[i][j].real * A[i][j].real
                                   + A[i][j].imag * A[i][j].imag)
                if rowsum > theta:
                    theta = rowsum
            if not (theta == theta and theta != float("inf")):
                theta = 0.0
            ns = 1
            if theta > 0.4:
                ns = <Py_ssize_t>ceil(theta / 0.4)
                scale = 1.0 / ns
                for i in range(n):
                    for j in range(n):
                        A[i][j] = A[i][j] * scale
            order = _taylor_order(theta / ns)
            for sub in range(ns):
                for i in range(n):
                    phi[i] = psi[i]
                    acc[i] = psi[i]
                for k in range(1, order + 1):
                    for i in range(n):
                        cz = 0
                        for j in range(n):
                            cz = cz + A[i][j] * phi[j]
                        tmp[i] = cz / k
                    for i in range(n):
                        phi[i] = tmp[i]
                        acc[i] = acc[i] + phi[i]
                for i in range(n):
                    psi[i] = acc[i]

            nrm = 0.0
            for i in range(n):
                nrm += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
            nrm = sqrt(nrm)
            inc = fabs(1.0 - nrm)
            drift[t] += inc
            if renormalize and nrm > 0.0:
                for i in range(n):
                    psi[i] = psi[i] / nrm
            if not (nrm == nrm) or drift[t] > drift_budget:
                valid[t] = 0
                alive = False
                break

            # 3. mean-field displacements (original V)
            for r in range(n_res):
                a0 = 0.0
                for i in range(n):
                    for j in range(n):
                        if v_arr[r, i, j] != 0.0:
                            cz = psi[i].conjugate() * psi[j]
                            a0 += v_arr[r, i, j] * cz.real
                zres[r] = a0

            # 4. velocity Verlet, constant z over the step
            for r in range(n_res):
                zk = zres[r]
                for m in range(off_arr[r], off_arr[r + 1]):
                    a0 = -(q_arr[t, m] * w2_arr[m] + g_arr[m] * zk)
                    q_arr[t, m] = q_arr[t, m] + p_arr[t, m] * dt + a0 * half_dt2
                    a1 = -(q_arr[t, m] * w2_arr[m] + g_arr[m] * zk)
                    p_arr[t, m] = p_arr[t, m] + (a0 + a1) * half_dt

            if rec < n_rec and rec_arr[rec] == step:
                for i in range(n):
                    psi_rec[t, rec, i] = psi[i]
                rec += 1

    return psi_rec, drift, valid.astype(bool), np.asarray(q_arr), np.asarray(p_arr)
