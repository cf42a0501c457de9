"""Rollout backend selection.

The compiled extension is used when importable; otherwise the pure-numpy
kernel takes over. Set ``PMUPLACE_BACKEND=python`` or ``=compiled`` to force
a choice (forcing ``compiled`` raises if the extension is not built).
"""
from __future__ import annotations

import os

import numpy as np

from . import _rollout_py

_FORCE = os.environ.get("PMUPLACE_BACKEND", "").strip().lower()
if _FORCE not in ("", "compiled", "python"):
    raise ValueError(
        f"PMUPLACE_BACKEND must be 'compiled' or 'python', got {_FORCE!r}"
    )

_compiled = None
if _FORCE in ("", "compiled"):
    try:
        from . import _rollout as _compiled
    except ImportError:
        if _FORCE == "compiled":
            raise ImportError(
                "PMUPLACE_BACKEND=compiled but the pmuplace._rollout extension "
                "is not built; run `python setup.py build_ext --inplace`"
            ) from None
        _compiled = None


def active_backend() -> str:
    return "python" if _compiled is None else "compiled"


def _as_c(a):
    return np.ascontiguousarray(a, dtype=float)


def rollout_compiled(model, x0_batch, dt, n_steps):
    if _compiled is None:
        raise ImportError("compiled rollout backend is not built")
    x0 = np.atleast_2d(_as_c(x0_batch))
    y = model.y_reduced
    if model.model_order == "second":
        return _compiled.rollout_m1(
            _as_c(y.real),
            _as_c(y.imag),
            _as_c(model.e_mag),
            _as_c(model.t_m),
            _as_c(model.h),
            float(model.omega0),
            x0,
            float(dt),
            int(n_steps),
        )
    return _compiled.rollout_m2(
        _as_c(y.real),
        _as_c(y.imag),
        _as_c(model.t_m),
        _as_c(model.e_fd),
        _as_c(model.h),
        _as_c(model.k_d),
        _as_c(model.x_d),
        _as_c(model.x_q),
        _as_c(model.x_d_prime),
        _as_c(model.x_q_prime),
        _as_c(model.t_d0),
        _as_c(model.t_q0),
        _as_c(model.eq_frozen),
        _as_c(model.ed_frozen),
        np.ascontiguousarray(model.idx_fourth, dtype=np.int_),
        float(model.omega0),
        x0,
        float(dt),
        int(n_steps),
    )


def rollout_python(model, x0_batch, dt, n_steps):
    return _rollout_py.rollout(model, np.atleast_2d(x0_batch), float(dt), int(n_steps))


def rollout(model, x0_batch, dt, n_steps):
    """Batched modified-Euler rollout on the active backend.

    Returns (B, n_steps+1, n) including the initial state.
    """
    if _compiled is not None:
        return rollout_compiled(model, x0_batch, dt, n_steps)
    return rollout_python(model, x0_batch, dt, n_steps)
