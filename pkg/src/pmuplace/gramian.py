"""Empirical observability Gramians and their scalar observability measures.

The Gramian is assembled from simulated output responses to perturbed initial
states around a reference point. Per-output additivity lets the per-generator
Gramians be precomputed once and summed for any sensor subset.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from . import _machine, backend
from .errors import CaseValidationError, IntegrationBlowupError, NumericalError
from .network import ReducedModel

DEFAULT_SIZES = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class GramianConfig:
    """Perturbation set, horizon and quadrature grid.

    ``directions=None`` stands for the default pair {I_n, -I_n}, materialized
    once the state dimension is known. ``x_ref=None`` uses the model
    equilibrium as the unperturbed state.
    """

    sizes: tuple[float, ...] = DEFAULT_SIZES
    t_f: float = 5.0
    dt: float = 1.0 / 30.0
    directions: tuple[np.ndarray, ...] | None = None
    x_ref: np.ndarray | None = None

    def __post_init__(self):
        if self.t_f <= 0 or self.dt <= 0:
            raise CaseValidationError("t_f and dt must be positive")
        if not self.sizes or any(c <= 0 for c in self.sizes):
            raise CaseValidationError("perturbation sizes must be positive")
        if self.directions is not None:
            for t in self.directions:
                t = np.asarray(t)
                if t.ndim != 2 or t.shape[0] != t.shape[1]:
                    raise CaseValidationError("directions must be square matrices")
                if np.max(np.abs(t.T @ t - np.eye(t.shape[0]))) > 1e-12:
                    raise CaseValidationError("direction matrices must be orthogonal")

    @property
    def n_steps(self):
        return int(round(self.t_f / self.dt))

    def materialized_directions(self, n: int) -> tuple[np.ndarray, ...]:
        if self.directions is None:
            eye = np.eye(n)
            return (eye, -eye)
        for t in self.directions:
            if t.shape[0] != n:
                raise CaseValidationError(
                    f"direction matrix dimension {t.shape[0]} != state dimension {n}"
                )
        return tuple(np.asarray(t, dtype=float) for t in self.directions)

    def fingerprint(self, model: ReducedModel | None = None) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.sizes).tobytes())
        h.update(np.float64(self.t_f).tobytes())
        h.update(np.float64(self.dt).tobytes())
        if self.directions is None:
            h.update(b"pm-identity")
        else:
            for t in self.directions:
                h.update(np.asarray(t).tobytes())
        if self.x_ref is not None:
            h.update(np.asarray(self.x_ref).tobytes())
        if model is not None:
            h.update(model.model_order.encode())
            h.update(np.ascontiguousarray(model.y_reduced).tobytes())
            h.update(np.ascontiguousarray(model.x0).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Gramian:
    """Symmetric PSD matrix of output-energy sensitivities."""

    matrix: np.ndarray
    n: int
    provenance: tuple[int, ...]

    def __add__(self, other):
        if isinstance(other, Gramian):
            return Gramian(
                matrix=self.matrix + other.matrix,
                n=self.n,
                provenance=tuple(sorted(set(self.provenance) | set(other.provenance))),
            )
        return NotImplemented


@dataclass(frozen=True, eq=False)
class GramianBank:
    """Per-generator Gramians (all outputs at that generator) plus the
    configuration fingerprint they were computed under."""

    per_generator: dict[int, Gramian]
    fingerprint: str

    @property
    def gen_ids(self):
        return tuple(sorted(self.per_generator))

    @property
    def g(self):
        return len(self.per_generator)

    @property
    def n(self):
        return next(iter(self.per_generator.values())).n

    def joint(self, ids) -> np.ndarray:
        ids = sorted(set(ids))
        unknown = [i for i in ids if i not in self.per_generator]
        if unknown:
            raise CaseValidationError(f"bank has no generators {unknown}")
        w = np.zeros((self.n, self.n))
        for i in ids:
            w = w + self.per_generator[i].matrix
        return w


class ModelOutputSystem:
    """Adapter exposing batched output responses of a reduced model."""

    def __init__(self, model: ReducedModel, channels: np.ndarray | None = None):
        self.model = model
        self.n = model.n
        self.channels = channels

    def batch_outputs(self, x0_batch, dt, n_steps):
        traj = backend.rollout(self.model, x0_batch, dt, n_steps)
        b, k1, n = traj.shape
        y = _machine.outputs_all(traj.reshape(b * k1, n), self.model)
        y = y.reshape(b, k1, -1)
        if self.channels is not None:
            y = y[:, :, self.channels]
        return y


class LinearOutputSystem:
    """Modified-Euler rollout of dx = A x, y = C x (test oracle support)."""

    def __init__(self, a, c):
        self.a = np.asarray(a, dtype=float)
        self.c = np.atleast_2d(np.asarray(c, dtype=float))
        self.n = self.a.shape[0]

    def batch_outputs(self, x0_batch, dt, n_steps):
        x = np.atleast_2d(np.asarray(x0_batch, dtype=float))
        out = np.empty((x.shape[0], n_steps + 1, self.c.shape[0]))
        out[:, 0] = x @ self.c.T
        at = self.a.T
        for k in range(n_steps):
            f1 = x @ at
            f2 = (x + dt * f1) @ at
            x = x + 0.5 * dt * (f1 + f2)
            out[:, k + 1] = x @ self.c.T
        return out


def _canonical_perturbations(directions, sizes):
    keyed = []
    for t in directions:
        for c in sizes:
            keyed.append((t.tobytes(), float(c), t))
    # canonical order: results do not depend on how the sets were listed
    keyed.sort(key=lambda item: (item[0], item[1]))
    return [(t, c) for _, c, t in keyed]


def _response_accumulate(system, x_ref, cfg, reducer):
    """Simulate all perturbed trajectories and feed output differences
    (relative to the unperturbed trajectory) to ``reducer(t_l, scale, d)``."""
    n = system.n
    directions = cfg.materialized_directions(n)
    n_steps = cfg.n_steps
    x_ref = np.asarray(x_ref, dtype=float)
    y0 = system.batch_outputs(x_ref[None, :], cfg.dt, n_steps)[0]
    r = len(directions)
    s = len(cfg.sizes)
    for l_idx, (t_l, c) in enumerate(_canonical_perturbations(directions, cfg.sizes)):
        x0s = x_ref[None, :] + c * t_l.T
        try:
            y = system.batch_outputs(x0s, cfg.dt, n_steps)
        except IntegrationBlowupError as exc:
            raise NumericalError(
                f"perturbation simulation blew up at step {exc.step} "
                f"(perturbation set {l_idx}, size c={c}, state index {exc.row})"
            ) from exc
        d = y - y0[None, :, :]
        scale = cfg.dt / (r * s * c * c)
        reducer(t_l, scale, d)


def _finalize(w, n, provenance):
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite Gramian accumulation")
    w = 0.5 * (w + w.T)
    return Gramian(matrix=w, n=n, provenance=tuple(provenance))


def empirical_gramian(
    model_or_system,
    instrumented: Sequence[int] | None = None,
    cfg: GramianConfig | None = None,
) -> Gramian:
    """Empirical observability Gramian for an instrumented generator set
    (or for any object exposing ``batch_outputs``)."""
    cfg = cfg or GramianConfig()
    if isinstance(model_or_system, ReducedModel):
        model = model_or_system
        if not instrumented:
            raise CaseValidationError("instrumented set must be nonempty")
        channels = _machine.output_channels(model, instrumented)
        system = ModelOutputSystem(model, channels)
        x_ref = cfg.x_ref if cfg.x_ref is not None else model.x0
        provenance = sorted(set(instrumented))
    else:
        system = model_or_system
        x_ref = cfg.x_ref
        if x_ref is None:
            raise CaseValidationError("cfg.x_ref is required for a bare system")
        provenance = ()

    n = system.n
    w = np.zeros((n, n))
    k_quad = cfg.n_steps  # left-Riemann: the final sample is excluded

    def reducer(t_l, scale, d):
        nonlocal w
        dq = d[:, :k_quad, :]
        psi = np.tensordot(dq, dq, axes=([1, 2], [1, 2]))
        w = w + scale * (t_l @ psi @ t_l.T)

    _response_accumulate(system, x_ref, cfg, reducer)
    return _finalize(w, n, provenance)


def per_generator_bank(model: ReducedModel, cfg: GramianConfig | None = None) -> GramianBank:
    """Gramians W_i for each singly-instrumented generator, sharing one set of
    perturbation trajectories (outputs differ, trajectories do not)."""
    cfg = cfg or GramianConfig()
    system = ModelOutputSystem(model)  # all channels
    x_ref = cfg.x_ref if cfg.x_ref is not None else model.x0
    n = model.n
    g = model.g
    blocks = 2 if model.model_order == "second" else 4
    p = blocks * g
    w_channels = np.zeros((p, n, n))
    k_quad = cfg.n_steps

    def reducer(t_l, scale, d):
        dq = d[:, :k_quad, :]
        psi = np.einsum("iko,jko->oij", dq, dq)
        w_channels[:] += scale * (t_l @ psi @ t_l.T)

    _response_accumulate(system, x_ref, cfg, reducer)

    per_generator = {}
    for pos, gid in enumerate(model.gen_ids):
        idx = [pos + k * g for k in range(blocks)]
        w = w_channels[idx].sum(axis=0)
        per_generator[gid] = _finalize(w, n, (gid,))
    return GramianBank(per_generator=per_generator, fingerprint=cfg.fingerprint(model))


def _symmetric_matrix(w) -> np.ndarray:
    m = w.matrix if isinstance(w, Gramian) else np.asarray(w, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise CaseValidationError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > 1e-8 * scale:
        raise CaseValidationError("matrix is not symmetric")
    return 0.5 * (m + m.T)


def logdet(w) -> float:
    """Log-determinant through a symmetric eigendecomposition; -inf when any
    eigenvalue is at or below the numerically-unobservable floor."""
    m = _symmetric_matrix(w)
    eig = np.linalg.eigvalsh(m)
    if np.any(eig <= 1e-300):
        return -np.inf
    return float(np.sum(np.log(eig)))


def min_max_eigenvalue(w) -> tuple[float, float]:
    eig = np.linalg.eigvalsh(_symmetric_matrix(w))
    return float(eig[0]), float(eig[-1])


def linear_gramian_oracle(a, c, horizon: float, dt: float) -> np.ndarray:
    """Quadrature of the linear observability Gramian integral on the same
    left-Riemann grid the empirical computation uses (test oracle)."""
    a = np.asarray(a, dtype=float)
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n = a.shape[0]
    k = int(round(horizon / dt))
    phi = scipy.linalg.expm(a * dt)
    ctc = c.T @ c
    x = np.eye(n)
    w = np.zeros((n, n))
    for _ in range(k):
        w += x.T @ ctc @ x * dt
        x = phi @ x
    return 0.5 * (w + w.T)
