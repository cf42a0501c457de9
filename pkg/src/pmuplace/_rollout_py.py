"""Pure-numpy rollout kernel: batched modified-Euler integration.

Reference implementation of the hot loop; the compiled extension in
``_rollout.pyx`` mirrors it exactly. Inputs are held constant across steps.
"""
from __future__ import annotations

import numpy as np

from . import _machine
from .errors import IntegrationBlowupError


def rollout(model, x0_batch, dt, n_steps):
    """Integrate a batch of trajectories; returns (B, n_steps+1, n)."""
    x = np.array(x0_batch, dtype=float)
    b, n = x.shape
    traj = np.empty((b, n_steps + 1, n))
    traj[:, 0, :] = x
    half = 0.5 * dt
    # overflow is the condition being detected, not an anomaly to warn about
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            f1 = _machine.derivative(x, model)
            xt = x + dt * f1
            f2 = _machine.derivative(xt, model)
            x = x + half * (f1 + f2)
            if not np.all(np.isfinite(x)):
                row = int(np.flatnonzero(~np.isfinite(x).all(axis=1))[0])
                raise IntegrationBlowupError(step=k + 1, row=row)
            traj[:, k + 1, :] = x
    return traj
