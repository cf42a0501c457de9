"""Square-root unscented Kalman filtering, validation scenarios and metrics.

The filter propagates a lower-triangular covariance factor: prediction and
update recompose it through QR factorizations plus rank-1 Cholesky
updates/downdates, never forming the full covariance. A failed downdate
falls back to eigenvalue-clipped refactorization instead of aborting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import _machine, backend
from .dynamics import FaultSchedule, Trajectory, build_fault_schedule, measure, simulate
from .errors import CaseValidationError, IntegrationBlowupError
from .network import PowerSystemCase, ReducedModel


def spawn_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Stable per-run seed: adding runs never reshuffles earlier ones."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


@dataclass(frozen=True)
class EstimatorConfig:
    """Unscented-transform scalars plus the noise/covariance recipes.

    The covariance matrices are block-diagonal in the state/output layout;
    they are materialized per model and placement by the ``p0``/``q``/``r``
    methods.
    """

    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    sample_rate: float = 30.0
    q_scale: float = 1e-7
    r_delta: float = 0.5 * math.pi / 180.0
    r_omega_per_omega0: float = 1e-3
    r_eq: float = 1e-3
    r_ed: float = 1e-3
    r_er: float = 5e-2
    r_ei: float = 5e-2
    r_ir: float = 5e-1
    r_ii: float = 5e-1

    def r_omega(self, model: ReducedModel) -> float:
        return self.r_omega_per_omega0 * model.omega0

    def p0(self, model: ReducedModel) -> np.ndarray:
        g = model.g
        g4 = int(model.is_fourth.sum()) if model.model_order == "fourth" else 0
        diag = [self.r_delta**2] * g + [self.r_omega(model) ** 2] * g
        diag += [self.r_eq**2] * g4 + [self.r_ed**2] * g4
        return np.diag(diag)

    def q(self, model: ReducedModel) -> np.ndarray:
        return self.q_scale * np.eye(model.n)

    def channel_sigmas(self, model: ReducedModel) -> np.ndarray:
        """Per-channel noise std for the all-generator output block."""
        g = model.g
        if model.model_order == "second":
            return np.array([self.r_delta] * g + [self.r_omega(model)] * g)
        return np.array(
            [self.r_er] * g + [self.r_ei] * g + [self.r_ir] * g + [self.r_ii] * g
        )

    def r(self, model: ReducedModel, instrumented: Sequence[int]) -> np.ndarray:
        channels = _machine.output_channels(model, sorted(set(instrumented)))
        sig = self.channel_sigmas(model)[channels]
        return np.diag(sig**2)


def _cholupdate(s, v, weight):
    """Rank-1 update/downdate of a lower-triangular factor:
    returns chol(S S^T + weight v v^T); raises on lost positive-definiteness."""
    n = s.shape[0]
    s = s.copy()
    v = v.copy()
    sign = 1.0 if weight >= 0 else -1.0
    v = v * math.sqrt(abs(weight))
    for k in range(n):
        r2 = s[k, k] ** 2 + sign * v[k] ** 2
        if r2 <= 0.0:
            raise np.linalg.LinAlgError("cholesky downdate lost positive definiteness")
        r = math.sqrt(r2)
        c = r / s[k, k]
        sfac = v[k] / s[k, k]
        s[k, k] = r
        if k + 1 < n:
            s[k + 1 :, k] = (s[k + 1 :, k] + sign * sfac * v[k + 1 :]) / c
            v[k + 1 :] = c * v[k + 1 :] - sfac * s[k + 1 :, k]
    return s


def _refactor(s, updates):
    """Fallback when a downdate fails: rebuild the factor from the full
    covariance with eigenvalue clipping."""
    p = s @ s.T
    for v, w in updates:
        p = p + w * np.outer(v, v)
    p = 0.5 * (p + p.T)
    eig, vec = np.linalg.eigh(p)
    floor = max(1e-14, 1e-12 * float(eig[-1]))
    eig = np.clip(eig, floor, None)
    p = (vec * eig) @ vec.T
    return np.linalg.cholesky(p)


def _apply_updates(s, updates):
    try:
        for v, w in updates:
            s = _cholupdate(s, v, w)
        return s
    except np.linalg.LinAlgError:
        return _refactor(s, updates)


class SquareRootUkf:
    """Scaled-unscented square-root filter over user-supplied batched
    transition and measurement maps."""

    def __init__(self, f_batch: Callable, h_batch: Callable, n: int, p: int, cfg: EstimatorConfig, q, r):
        self.f_batch = f_batch
        self.h_batch = h_batch
        self.n = n
        self.p = p
        lam = cfg.alpha**2 * (n + cfg.kappa) - n
        self.eta = math.sqrt(n + lam)
        wi = 1.0 / (2.0 * (n + lam))
        self.wm = np.full(2 * n + 1, wi)
        self.wc = np.full(2 * n + 1, wi)
        self.wm[0] = lam / (n + lam)
        self.wc[0] = self.wm[0] + (1.0 - cfg.alpha**2 + cfg.beta)
        self.sqrt_q = np.linalg.cholesky(np.asarray(q))
        self.sqrt_r = np.linalg.cholesky(np.asarray(r))

    def sigma_points(self, mean, s):
        pts = np.empty((2 * self.n + 1, self.n))
        pts[0] = mean
        spread = self.eta * s
        pts[1 : self.n + 1] = mean + spread.T
        pts[self.n + 1 :] = mean - spread.T
        return pts

    def _sqrt_from_residuals(self, resid, sqrt_noise):
        rows = np.vstack(
            [math.sqrt(self.wc[1]) * resid[1:], sqrt_noise.T]
        )
        r = np.linalg.qr(rows, mode="r")
        s = r[: resid.shape[1], : resid.shape[1]].T.copy()
        # qr may return negative diagonals; the factor sign is irrelevant
        signs = np.sign(np.diag(s))
        signs[signs == 0] = 1.0
        s = s * signs
        return _apply_updates(s, [(resid[0], self.wc[0])])

    def step(self, mean, s, measurement):
        """One predict-update cycle; returns the posterior (mean, factor)."""
        pts = self.sigma_points(mean, s)
        xf = self.f_batch(pts)
        x_pred = self.wm @ xf
        s_pred = self._sqrt_from_residuals(xf - x_pred, self.sqrt_q)

        # redraw sigma points so the process noise enters the cross terms
        pts_pred = self.sigma_points(x_pred, s_pred)
        resid_x = pts_pred - x_pred
        yf = self.h_batch(pts_pred)
        y_pred = self.wm @ yf
        resid_y = yf - y_pred
        s_y = self._sqrt_from_residuals(resid_y, self.sqrt_r)

        p_xy = (resid_x * self.wc[:, None]).T @ resid_y
        tmp = scipy.linalg.solve_triangular(s_y, p_xy.T, lower=True)
        gain = scipy.linalg.solve_triangular(s_y.T, tmp, lower=False).T
        mean_post = x_pred + gain @ (measurement - y_pred)
        u = gain @ s_y
        s_post = _apply_updates(s_pred, [(u[:, j], -1.0) for j in range(u.shape[1])])
        if not (np.all(np.isfinite(mean_post)) and np.all(np.isfinite(s_post))):
            raise IntegrationBlowupError(step=-1, context="filter state non-finite")
        return mean_post, s_post


def _model_maps(model: ReducedModel, instrumented, sub_dt, n_sub):
    channels = _machine.output_channels(model, sorted(set(instrumented)))

    def f_batch(pts):
        return backend.rollout(model, pts, sub_dt, n_sub)[:, -1, :]

    def h_batch(pts):
        return _machine.outputs_all(pts, model)[:, channels]

    return f_batch, h_batch


def srukf_step(prior, measurement, model: ReducedModel, cfg: EstimatorConfig,
               instrumented, sub_dt=None, n_sub=1):
    """Single filter step on a reduced model: the discrete transition is the
    modified-Euler map over one measurement period."""
    mean, s = prior
    if sub_dt is None:
        sub_dt = 1.0 / cfg.sample_rate
    instrumented = sorted(set(instrumented))
    f_batch, h_batch = _model_maps(model, instrumented, sub_dt, n_sub)
    ukf = SquareRootUkf(
        f_batch, h_batch, model.n, 2 * len(instrumented)
        if model.model_order == "second" else 4 * len(instrumented),
        cfg, cfg.q(model), cfg.r(model, instrumented),
    )
    return ukf.step(np.asarray(mean, dtype=float), np.asarray(s, dtype=float), measurement)


# --- scenarios ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    """Truth trajectory sampled on the measurement grid plus everything a
    filter run needs: the post-event model, initialization rule and seeded
    measurement-noise draws (shared across placements for fair comparison)."""

    kind: str
    filter_model: ReducedModel
    filter_x0: np.ndarray
    t_samples: np.ndarray
    truth_samples: np.ndarray
    y_clean: np.ndarray
    noise_normals: np.ndarray
    dt_sim: float
    n_sub: int
    seed: int
    descriptor: dict


def _sampled(traj: Trajectory, stride: int):
    idx = np.arange(stride, traj.states.shape[0], stride)
    return traj.t[idx], traj.states[idx], traj.outputs[idx]


def _sampling(horizon, dt, sample_rate):
    stride = round(1.0 / (sample_rate * dt))
    if stride < 1 or abs(stride * dt - 1.0 / sample_rate) > 1e-9:
        raise CaseValidationError(
            f"simulation step {dt} must divide the sample period {1.0/sample_rate}"
        )
    return stride


def method1_scenario(
    model: ReducedModel,
    seed: int,
    n_perturbed: int = 1,
    horizon: float = 5.0,
    dt: float = 1.0 / 30.0,
    sample_rate: float = 30.0,
) -> Scenario:
    """Perturb randomly selected rotor angles by e ~ U(-|delta0|, |delta0|);
    the filter starts from the unperturbed equilibrium."""
    g = model.g
    if not 1 <= n_perturbed <= g:
        raise CaseValidationError("n_perturbed must be within 1..g")
    rng = np.random.default_rng(spawn_seed(seed, 0))
    picks = np.sort(rng.choice(g, size=n_perturbed, replace=False))
    x0 = model.x0.copy()
    bounds = np.abs(x0[picks])
    e = rng.uniform(-bounds, bounds)
    x0[picks] += e
    stride = _sampling(horizon, dt, sample_rate)
    traj = simulate(model, x0, horizon, dt)
    t_s, x_s, y_s = _sampled(traj, stride)
    n_samples = len(t_s)
    noise = rng.standard_normal((n_samples, y_s.shape[1]))
    return Scenario(
        kind="method1",
        filter_model=model,
        filter_x0=model.x0.copy(),
        t_samples=t_s,
        truth_samples=x_s,
        y_clean=y_s,
        noise_normals=noise,
        dt_sim=dt,
        n_sub=stride,
        seed=seed,
        descriptor={
            "perturbed": [int(model.gen_ids[k]) for k in picks],
            "offsets": [float(v) for v in e],
        },
    )


def angle_drop_scenario(model: ReducedModel, generator: int, fraction: float = 1.0,
                        seed: int = 0, horizon: float = 5.0, dt: float = 1.0 / 30.0,
                        sample_rate: float = 30.0) -> Scenario:
    """Deterministic variant of method 1: one named angle decreased by a
    fixed fraction of its steady-state value."""
    pos = model.gen_ids.index(generator)
    x0 = model.x0.copy()
    x0[pos] -= fraction * x0[pos]
    stride = _sampling(horizon, dt, sample_rate)
    traj = simulate(model, x0, horizon, dt)
    t_s, x_s, y_s = _sampled(traj, stride)
    rng = np.random.default_rng(spawn_seed(seed, 0))
    noise = rng.standard_normal((len(t_s), y_s.shape[1]))
    return Scenario(
        kind="method1",
        filter_model=model,
        filter_x0=model.x0.copy(),
        t_samples=t_s,
        truth_samples=x_s,
        y_clean=y_s,
        noise_normals=noise,
        dt_sim=dt,
        n_sub=stride,
        seed=seed,
        descriptor={"perturbed": [generator], "fraction": fraction},
    )


def method2_scenario(
    case: PowerSystemCase,
    branch,
    model_order: str,
    seed: int = 0,
    horizon: float = 5.0,
    dt: float = 1.0 / 120.0,
    sample_rate: float = 30.0,
    schedule: FaultSchedule | None = None,
) -> Scenario:
    """Staged three-phase fault; the filter runs against the post-clearing
    model starting from the pre-contingency state."""
    if schedule is None:
        schedule = build_fault_schedule(case, branch, model_order)
    base = schedule.stages[0][2]
    stride = _sampling(horizon, dt, sample_rate)
    traj = simulate(schedule, base.x0, horizon, dt)
    t_s, x_s, y_s = _sampled(traj, stride)
    rng = np.random.default_rng(spawn_seed(seed, 0))
    noise = rng.standard_normal((len(t_s), y_s.shape[1]))
    return Scenario(
        kind="method2",
        filter_model=schedule.model,
        filter_x0=base.x0.copy(),
        t_samples=t_s,
        truth_samples=x_s,
        y_clean=y_s,
        noise_normals=noise,
        dt_sim=dt,
        n_sub=stride,
        seed=seed,
        descriptor={"branch": list(schedule.branch)},
    )


# --- runs and metrics -----------------------------------------------------------


STATE_TYPES = ("delta", "omega", "eq_prime", "ed_prime")


def _state_slice(model: ReducedModel, state_type: str):
    g = model.g
    g4 = int(model.is_fourth.sum()) if model.model_order == "fourth" else 0
    spans = {
        "delta": (0, g),
        "omega": (g, 2 * g),
        "eq_prime": (2 * g, 2 * g + g4),
        "ed_prime": (2 * g + g4, 2 * g + 2 * g4),
    }
    if state_type not in spans:
        raise CaseValidationError(f"unknown state type '{state_type}'")
    a, b = spans[state_type]
    if a == b:
        raise CaseValidationError(f"model has no '{state_type}' states")
    return slice(a, b)


@dataclass(frozen=True, eq=False)
class EstimationRun:
    scenario_kind: str
    placement: tuple[int, ...]
    seed: int
    t: np.ndarray
    truth: np.ndarray
    measurements: np.ndarray
    estimate: np.ndarray
    model: ReducedModel
    diverged: bool
    errors: dict = field(default_factory=dict)
    convergent: dict = field(default_factory=dict)


def state_error(run: EstimationRun, state_type: str) -> float:
    """RMS over machines and time steps of one state type; NaN sentinel for
    diverged runs."""
    if run.diverged:
        return float("nan")
    sl = _state_slice(run.model, state_type)
    diff = run.estimate[:, sl] - run.truth[:, sl]
    return float(np.sqrt(np.mean(diff**2)))


def count_convergent(
    run: EstimationRun,
    state_type: str,
    eps_percent: float = 2.0,
    tail_seconds: float = 1.0,
    abs_floor: float = 1e-3,
) -> int:
    """States tracking truth within eps% over the final tail; near-zero truth
    falls back to an absolute threshold in natural units."""
    if run.diverged:
        return 0
    t_end = run.t[-1]
    if t_end - run.t[0] < tail_seconds - 1e-9:
        raise CaseValidationError("run too short for the convergence tail")
    tail = run.t > t_end - tail_seconds + 1e-9
    sl = _state_slice(run.model, state_type)
    truth = run.truth[tail, sl]
    err = np.abs(run.estimate[tail, sl] - truth)
    bound = np.maximum(eps_percent / 100.0 * np.abs(truth), abs_floor)
    return int(np.sum(np.all(err < bound, axis=0)))


def run_estimation(
    scenario: Scenario,
    placement: Sequence[int],
    cfg: EstimatorConfig | None = None,
) -> EstimationRun:
    """Filter the scenario's measurement stream under one placement."""
    cfg = cfg or EstimatorConfig()
    model = scenario.filter_model
    instrumented = sorted(set(placement))
    # validates non-emptiness and id membership up front
    measure(scenario.filter_x0, model, instrumented)
    channels = _machine.output_channels(model, instrumented)
    sigmas = cfg.channel_sigmas(model)
    measurements = (
        scenario.y_clean + scenario.noise_normals * sigmas[None, :]
    )[:, channels]

    f_batch, h_batch = _model_maps(model, instrumented, scenario.dt_sim, scenario.n_sub)
    p = len(channels)
    ukf = SquareRootUkf(
        f_batch, h_batch, model.n, p, cfg, cfg.q(model), cfg.r(model, instrumented)
    )
    mean = scenario.filter_x0.copy()
    s = np.linalg.cholesky(cfg.p0(model))
    estimate = np.empty_like(scenario.truth_samples)
    diverged = False
    for k in range(len(scenario.t_samples)):
        try:
            mean, s = ukf.step(mean, s, measurements[k])
        except IntegrationBlowupError:
            diverged = True
            estimate[k:] = np.nan
            break
        estimate[k] = mean
    run = EstimationRun(
        scenario_kind=scenario.kind,
        placement=tuple(instrumented),
        seed=scenario.seed,
        t=scenario.t_samples,
        truth=scenario.truth_samples,
        measurements=measurements,
        estimate=estimate,
        model=model,
        diverged=diverged,
    )
    types = ["delta", "omega"]
    if model.model_order == "fourth" and model.idx_fourth.size:
        types += ["eq_prime", "ed_prime"]
    for st in types:
        run.errors[st] = state_error(run, st)
        run.convergent[st] = count_convergent(run, st)
    return run
