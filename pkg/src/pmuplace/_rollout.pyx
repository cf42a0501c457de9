# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernel: batched modified-Euler integration of the
classical (M1) and two-axis (M2) machine models.

Mirrors the semantics of ``_rollout_py`` on plain arrays; selected at import
by ``pmuplace.backend`` when the extension is available.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport cos, isfinite, sin

from .errors import IntegrationBlowupError

cnp.import_array()


cdef void _deriv_m1(double* x, double* dx,
                    double* eeg, double* eeb,
                    double* t_m, double* coef,
                    double omega0, Py_ssize_t g,
                    double* sd, double* cd) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double pe
    for i in range(g):
        sd[i] = sin(x[i])
        cd[i] = cos(x[i])
    for i in range(g):
        pe = 0.0
        for j in range(g):
            # cos(di-dj), sin(di-dj) from the per-machine tables
            pe += eeg[i * g + j] * (cd[i] * cd[j] + sd[i] * sd[j])
            pe += eeb[i * g + j] * (sd[i] * cd[j] - cd[i] * sd[j])
        dx[i] = x[g + i] - omega0
        dx[g + i] = coef[i] * (t_m[i] - pe)


cdef void _deriv_m2(double* x, double* dx,
                    double* y_re, double* y_im,
                    double* t_m, double* e_fd, double* coef,
                    double* kd_w0,
                    double* x_d, double* x_q, double* x_dp, double* x_qp,
                    double* t_d0, double* t_q0,
                    double* eq_frozen, double* ed_frozen,
                    long* idx4, Py_ssize_t g4,
                    double omega0, Py_ssize_t g,
                    double* sd, double* cd,
                    double* eq, double* ed,
                    double* psi_r, double* psi_i,
                    double* cur_r, double* cur_i) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double i_q, i_d, e_q, e_d, t_e, acc_r, acc_i
    for i in range(g):
        sd[i] = sin(x[i])
        cd[i] = cos(x[i])
        eq[i] = eq_frozen[i]
        ed[i] = ed_frozen[i]
    for k in range(g4):
        eq[idx4[k]] = x[2 * g + k]
        ed[idx4[k]] = x[2 * g + g4 + k]
    for i in range(g):
        psi_r[i] = ed[i] * sd[i] + eq[i] * cd[i]
        psi_i[i] = eq[i] * sd[i] - ed[i] * cd[i]
    for i in range(g):
        acc_r = 0.0
        acc_i = 0.0
        for j in range(g):
            acc_r += y_re[i * g + j] * psi_r[j] - y_im[i * g + j] * psi_i[j]
            acc_i += y_re[i * g + j] * psi_i[j] + y_im[i * g + j] * psi_r[j]
        cur_r[i] = acc_r
        cur_i[i] = acc_i
    for i in range(g):
        i_q = cur_i[i] * sd[i] + cur_r[i] * cd[i]
        i_d = cur_r[i] * sd[i] - cur_i[i] * cd[i]
        e_q = eq[i] - x_dp[i] * i_d
        e_d = ed[i] + x_qp[i] * i_q
        t_e = e_q * i_q + e_d * i_d
        dx[i] = x[g + i] - omega0
        dx[g + i] = coef[i] * (t_m[i] - t_e - kd_w0[i] * (x[g + i] - omega0))
        # stash per-machine currents for the transient-voltage equations
        psi_r[i] = i_d
        psi_i[i] = i_q
    for k in range(g4):
        i = idx4[k]
        dx[2 * g + k] = (e_fd[i] - eq[i] - (x_d[i] - x_dp[i]) * psi_r[i]) / t_d0[i]
        dx[2 * g + g4 + k] = (-ed[i] + (x_q[i] - x_qp[i]) * psi_i[i]) / t_q0[i]


def rollout_m1(double[:, ::1] y_re, double[:, ::1] y_im,
               double[::1] e_mag, double[::1] t_m, double[::1] h,
               double omega0,
               double[:, ::1] x0, double dt, Py_ssize_t n_steps):
    cdef Py_ssize_t nb = x0.shape[0]
    cdef Py_ssize_t g = e_mag.shape[0]
    cdef Py_ssize_t n = 2 * g
    cdef Py_ssize_t b, k, i, bad
    cdef double half = 0.5 * dt

    eeg_a = np.empty((g, g))
    eeb_a = np.empty((g, g))
    for i in range(g):
        for k in range(g):
            eeg_a[i, k] = e_mag[i] * e_mag[k] * y_re[i, k]
            eeb_a[i, k] = e_mag[i] * e_mag[k] * y_im[i, k]
    coef_a = np.empty(g)
    for i in range(g):
        coef_a[i] = omega0 / (2.0 * h[i])

    traj_a = np.empty((nb, n_steps + 1, n))
    cur_a = np.empty(n)
    tmp_a = np.empty(n)
    f1_a = np.empty(n)
    f2_a = np.empty(n)
    sd_a = np.empty(g)
    cd_a = np.empty(g)

    cdef double[:, ::1] eeg = eeg_a, eeb = eeb_a
    cdef double[::1] coef = coef_a, cur = cur_a, tmp = tmp_a
    cdef double[::1] f1 = f1_a, f2 = f2_a, sd = sd_a, cd = cd_a
    cdef double[:, :, ::1] traj = traj_a
    cdef double[::1] tmv = t_m

    for b in range(nb):
        for i in range(n):
            cur[i] = x0[b, i]
            traj[b, 0, i] = cur[i]
        bad = -1
        with nogil:
            for k in range(n_steps):
                _deriv_m1(&cur[0], &f1[0], &eeg[0, 0], &eeb[0, 0],
                          &tmv[0], &coef[0], omega0, g, &sd[0], &cd[0])
                for i in range(n):
                    tmp[i] = cur[i] + dt * f1[i]
                _deriv_m1(&tmp[0], &f2[0], &eeg[0, 0], &eeb[0, 0],
                          &tmv[0], &coef[0], omega0, g, &sd[0], &cd[0])
                for i in range(n):
                    cur[i] = cur[i] + half * (f1[i] + f2[i])
                    if not isfinite(cur[i]):
                        bad = k + 1
                    traj[b, k + 1, i] = cur[i]
                if bad >= 0:
                    break
        if bad >= 0:
            raise IntegrationBlowupError(step=bad, row=b)
    return traj_a


def rollout_m2(double[:, ::1] y_re, double[:, ::1] y_im,
               double[::1] t_m, double[::1] e_fd,
               double[::1] h, double[::1] k_d,
               double[::1] x_d, double[::1] x_q,
               double[::1] x_dp, double[::1] x_qp,
               double[::1] t_d0, double[::1] t_q0,
               double[::1] eq_frozen, double[::1] ed_frozen,
               long[::1] idx4,
               double omega0,
               double[:, ::1] x0, double dt, Py_ssize_t n_steps):
    cdef Py_ssize_t nb = x0.shape[0]
    cdef Py_ssize_t g = h.shape[0]
    cdef Py_ssize_t g4 = idx4.shape[0]
    cdef Py_ssize_t n = 2 * g + 2 * g4
    cdef Py_ssize_t b, k, i, bad
    cdef double half = 0.5 * dt

    coef_a = np.empty(g)
    kdw_a = np.empty(g)
    for i in range(g):
        coef_a[i] = omega0 / (2.0 * h[i])
        kdw_a[i] = k_d[i] / omega0

    traj_a = np.empty((nb, n_steps + 1, n))
    cur_a = np.empty(n)
    tmp_a = np.empty(n)
    f1_a = np.empty(n)
    f2_a = np.empty(n)
    scratch_a = np.empty((8, g))

    cdef double[::1] coef = coef_a, kdw = kdw_a
    cdef double[::1] cur = cur_a, tmp = tmp_a, f1 = f1_a, f2 = f2_a
    cdef double[:, ::1] sc = scratch_a
    cdef double[:, :, ::1] traj = traj_a

    for b in range(nb):
        for i in range(n):
            cur[i] = x0[b, i]
            traj[b, 0, i] = cur[i]
        bad = -1
        with nogil:
            for k in range(n_steps):
                _deriv_m2(&cur[0], &f1[0], &y_re[0, 0], &y_im[0, 0],
                          &t_m[0], &e_fd[0], &coef[0], &kdw[0],
                          &x_d[0], &x_q[0], &x_dp[0], &x_qp[0],
                          &t_d0[0], &t_q0[0],
                          &eq_frozen[0], &ed_frozen[0],
                          &idx4[0] if g4 > 0 else NULL, g4,
                          omega0, g,
                          &sc[0, 0], &sc[1, 0], &sc[2, 0], &sc[3, 0],
                          &sc[4, 0], &sc[5, 0], &sc[6, 0], &sc[7, 0])
                for i in range(n):
                    tmp[i] = cur[i] + dt * f1[i]
                _deriv_m2(&tmp[0], &f2[0], &y_re[0, 0], &y_im[0, 0],
                          &t_m[0], &e_fd[0], &coef[0], &kdw[0],
                          &x_d[0], &x_q[0], &x_dp[0], &x_qp[0],
                          &t_d0[0], &t_q0[0],
                          &eq_frozen[0], &ed_frozen[0],
                          &idx4[0] if g4 > 0 else NULL, g4,
                          omega0, g,
                          &sc[0, 0], &sc[1, 0], &sc[2, 0], &sc[3, 0],
                          &sc[4, 0], &sc[5, 0], &sc[6, 0], &sc[7, 0])
                for i in range(n):
                    cur[i] = cur[i] + half * (f1[i] + f2[i])
                    if not isfinite(cur[i]):
                        bad = k + 1
                    traj[b, k + 1, i] = cur[i]
                if bad >= 0:
                    break
        if bad >= 0:
            raise IntegrationBlowupError(step=bad, row=b)
    return traj_a
