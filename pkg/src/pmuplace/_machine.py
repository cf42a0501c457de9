"""Batched machine-model algebra shared by initialization, dynamics and the
pure-Python rollout backend.

All functions accept state arrays of shape (B, n) where B is a batch of
independent trajectories, and return arrays with the same leading axis.
State layout is [delta(g), omega(g), eq_prime(g4), ed_prime(g4)]; for the
classical model n = 2g.
"""
from __future__ import annotations

import numpy as np


def split_state(x, model):
    """Unpack (B, n) states into per-machine (B, g) views.

    Transient voltages of second-order members of a mixed fleet are filled
    from the model's frozen values.
    """
    g = model.g
    delta = x[:, :g]
    omega = x[:, g : 2 * g]
    if model.model_order == "second":
        eq = np.broadcast_to(model.eq_frozen, delta.shape)
        ed = np.broadcast_to(model.ed_frozen, delta.shape)
        return delta, omega, eq, ed
    b = x.shape[0]
    eq = np.tile(model.eq_frozen, (b, 1))
    ed = np.tile(model.ed_frozen, (b, 1))
    idx4 = model.idx_fourth
    g4 = idx4.size
    eq[:, idx4] = x[:, 2 * g : 2 * g + g4]
    ed[:, idx4] = x[:, 2 * g + g4 : 2 * g + 2 * g4]
    return delta, omega, eq, ed


def torque_m1(delta, model):
    """Air-gap torque of the classical model: internal sources E behind the
    reduced network."""
    e_phasor = model.e_mag * np.exp(1j * delta)
    i_net = e_phasor @ model.y_reduced.T
    return np.real(e_phasor * np.conj(i_net))


def derivative_m1(x, model):
    g = model.g
    delta = x[:, :g]
    omega = x[:, g:]
    t_e = torque_m1(delta, model)
    dx = np.empty_like(x)
    dx[:, :g] = omega - model.omega0
    dx[:, g:] = model.omega0 / (2.0 * model.h) * (model.t_m - t_e)
    return dx


def m2_network(delta, eq, ed, model):
    """Terminal currents of the two-axis model: the transient-voltage source
    is rotated to network coordinates and pushed through the reduced
    admittance matrix."""
    sin_d = np.sin(delta)
    cos_d = np.cos(delta)
    psi_r = ed * sin_d + eq * cos_d
    psi_i = eq * sin_d - ed * cos_d
    i_t = (psi_r + 1j * psi_i) @ model.y_reduced.T
    i_r = i_t.real
    i_i = i_t.imag
    i_q = i_i * sin_d + i_r * cos_d
    i_d = i_r * sin_d - i_i * cos_d
    return sin_d, cos_d, i_r, i_i, i_d, i_q


def m2_terminal(delta, eq, ed, model):
    """Terminal voltage (d-q and network frames), currents and torque."""
    sin_d, cos_d, i_r, i_i, i_d, i_q = m2_network(delta, eq, ed, model)
    e_q = eq - model.x_d_prime * i_d
    e_d = ed + model.x_q_prime * i_q
    e_r = e_d * sin_d + e_q * cos_d
    e_i = e_q * sin_d - e_d * cos_d
    t_e = e_q * i_q + e_d * i_d
    return e_r, e_i, i_r, i_i, i_d, i_q, e_d, e_q, t_e


def derivative_m2(x, model):
    g = model.g
    delta, omega, eq, ed = split_state(x, model)
    _, _, _, _, i_d, i_q, _, _, t_e = m2_terminal(delta, eq, ed, model)
    dx = np.empty_like(x)
    dx[:, :g] = omega - model.omega0
    dx[:, g : 2 * g] = (
        model.omega0
        / (2.0 * model.h)
        * (model.t_m - t_e - model.k_d / model.omega0 * (omega - model.omega0))
    )
    idx4 = model.idx_fourth
    g4 = idx4.size
    if g4:
        d_eq = (
            model.e_fd[idx4]
            - eq[:, idx4]
            - (model.x_d[idx4] - model.x_d_prime[idx4]) * i_d[:, idx4]
        ) / model.t_d0[idx4]
        d_ed = (
            -ed[:, idx4] + (model.x_q[idx4] - model.x_q_prime[idx4]) * i_q[:, idx4]
        ) / model.t_q0[idx4]
        dx[:, 2 * g : 2 * g + g4] = d_eq
        dx[:, 2 * g + g4 :] = d_ed
    return dx


def derivative(x, model):
    if model.model_order == "second":
        return derivative_m1(x, model)
    return derivative_m2(x, model)


def outputs_all(x, model):
    """Measurements with every generator instrumented.

    Classical model: [delta, omega] (a reordering of the state). Two-axis
    model: [e_R, e_I, i_R, i_I] per generator.
    """
    if model.model_order == "second":
        return x.copy()
    delta, _, eq, ed = split_state(x, model)
    e_r, e_i, i_r, i_i, *_ = m2_terminal(delta, eq, ed, model)
    return np.concatenate([e_r, e_i, i_r, i_i], axis=1)


def output_channels(model, instrumented):
    """Column indices into the all-generator output block for a set of
    instrumented generators (ids are 1-based)."""
    g = model.g
    pos = np.array(sorted(model.gen_ids.index(i) for i in instrumented), dtype=int)
    blocks = 2 if model.model_order == "second" else 4
    return np.concatenate([pos + k * g for k in range(blocks)])
