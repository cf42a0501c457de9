"""Continuous machine models, modified-Euler integration and fault staging.

Model M1 is the classical second-order fleet (states [delta, omega], outputs
rotor angle and speed of instrumented machines). Model M2 is the two-axis
fleet (states [delta, omega, e'_q, e'_d] for fourth-order members, outputs
terminal voltage and current phasor components). Inputs (mechanical torque
and E / E_fd) are constant throughout a simulation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _machine, backend
from .errors import CaseValidationError, FaultLocationError
from .network import (
    PowerSystemCase,
    PowerFlowSolution,
    ReducedModel,
    init_steady_state,
    reduced_generator_admittance,
    solve_power_flow,
)

FAULT_SHUNT = 1e6  # per-unit stand-in for a bolted three-phase short


def _check_state(x, model):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n:
        raise CaseValidationError(
            f"state dimension {x.shape[-1]} does not match model n={model.n}"
        )
    return x


def derivative_m1(x, model: ReducedModel) -> np.ndarray:
    """Swing-equation derivative of the classical fleet at a single state."""
    if model.model_order != "second":
        raise CaseValidationError("derivative_m1 requires a second-order model")
    x = _check_state(x, model)
    return _machine.derivative_m1(x[None, :], model)[0]

def derivative_m2(x, model: ReducedModel) -> np.ndarray:
    """Two-axis fleet derivative at a single state."""
    if model.model_order != "fourth":
        raise CaseValidationError("derivative_m2 requires a fourth-order model")
    x = _check_state(x, model)
    return _machine.derivative_m2(x[None, :], model)[0]


def derivative(x, model: ReducedModel) -> np.ndarray:
    if model.model_order == "second":
        return derivative_m1(x, model)
    return derivative_m2(x, model)


def measure(x, model: ReducedModel, instrumented: Sequence[int]) -> np.ndarray:
    """Outputs of the instrumented generators at a state (or batch of states).

    M1: [delta, omega] per instrumented machine; M2: [e_R, e_I, i_R, i_I].
    """
    instrumented = sorted(set(instrumented))
    if not instrumented:
        raise CaseValidationError("instrumented set must be nonempty")
    unknown = [i for i in instrumented if i not in model.gen_ids]
    if unknown:
        raise CaseValidationError(f"unknown generator ids {unknown}")
    x = _check_state(x, model)
    squeeze = x.ndim == 1
    y = _machine.outputs_all(np.atleast_2d(x), model)
    y = y[:, _machine.output_channels(model, instrumented)]
    return y[0] if squeeze else y


def modified_euler_step(model: ReducedModel, x_prev, dt: float) -> np.ndarray:
    """One predictor-corrector step with inputs held constant."""
    if dt <= 0:
        raise CaseValidationError("dt must be positive")
    x_prev = _check_state(x_prev, model)
    return backend.rollout(model, x_prev[None, :], dt, 1)[0, -1]


@dataclass(frozen=True)
class FaultSchedule:
    """Piecewise-constant network sequence for a staged three-phase fault.

    Stages tile [0, inf); the last stage has end=None.
    """

    branch: tuple[int, int]
    t_fault: float
    t_clear_near: float
    t_clear_remote: float
    stages: tuple[tuple[float, float | None, ReducedModel], ...]

    def __post_init__(self):
        t = 0.0
        for start, end, _ in self.stages:
            if abs(start - t) > 1e-12:
                raise CaseValidationError("fault stages must tile [0, horizon]")
            if end is not None and end <= start:
                raise CaseValidationError("empty or inverted fault stage")
            t = end if end is not None else np.inf
        if not np.isinf(t):
            raise CaseValidationError("last fault stage must be open-ended")

    def stage_at(self, t: float) -> ReducedModel:
        for start, end, model in self.stages:
            if t >= start and (end is None or t < end):
                return model
        return self.stages[-1][2]

    @property
    def model(self) -> ReducedModel:
        """Post-clearing model."""
        return self.stages[-1][2]


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    instrumented: tuple[int, ...]

    @property
    def n_steps(self):
        return len(self.t) - 1


def _stage_index_grid(stages, n_steps, dt):
    """Stage id per sample 0..n_steps, boundaries snapped to the grid."""
    owner = np.zeros(n_steps + 1, dtype=int)
    for s, (start, end, _) in enumerate(stages):
        k0 = int(round(start / dt))
        k1 = n_steps + 1 if end is None else min(int(round(end / dt)), n_steps + 1)
        owner[k0:k1] = s
    return owner


def simulate(
    model_or_schedule,
    x_init,
    horizon: float,
    dt: float,
    instrumented: Sequence[int] | None = None,
) -> Trajectory:
    """Fixed-step rollout; a FaultSchedule swaps the network at stage
    boundaries (snapped to the step grid)."""
    if horizon <= 0 or dt <= 0:
        raise CaseValidationError("horizon and dt must be positive")
    n_steps = int(round(horizon / dt))
    if isinstance(model_or_schedule, FaultSchedule):
        schedule = model_or_schedule
        base = schedule.model
    else:
        schedule = None
        base = model_or_schedule
    if instrumented is None:
        instrumented = base.gen_ids
    x_init = _check_state(x_init, base)

    if schedule is None:
        states = backend.rollout(base, x_init[None, :], dt, n_steps)[0]
        outputs = measure(states, base, instrumented)
        t = np.arange(n_steps + 1) * dt
        return Trajectory(t, states, outputs, tuple(sorted(set(instrumented))))

    owner = _stage_index_grid(schedule.stages, n_steps, dt)
    states = np.empty((n_steps + 1, base.n))
    states[0] = x_init
    k = 0
    while k < n_steps:
        stage = owner[k]
        k_end = k
        while k_end < n_steps and owner[k_end + 1] == stage:
            k_end += 1
        if k_end == k:
            # the next sample already belongs to a later stage
            k_end = k + 1
            stage_model = schedule.stages[owner[k]][2]
            chunk = backend.rollout(stage_model, states[k][None, :], dt, 1)
            states[k + 1] = chunk[0, -1]
            k = k_end
            continue
        stage_model = schedule.stages[stage][2]
        chunk = backend.rollout(stage_model, states[k][None, :], dt, k_end - k)
        states[k + 1 : k_end + 1] = chunk[0, 1:]
        k = k_end
    outputs = np.empty((n_steps + 1, len(_machine.output_channels(base, instrumented))))
    for s in range(len(schedule.stages)):
        mask = owner == s
        if mask.any():
            outputs[mask] = measure(states[mask], schedule.stages[s][2], instrumented)
    t = np.arange(n_steps + 1) * dt
    return Trajectory(t, states, outputs, tuple(sorted(set(instrumented))))


def _find_branch(case: PowerSystemCase, branch):
    f, t = branch
    matches = [br for br in case.branches if {br.from_bus, br.to_bus} == {f, t}]
    if not matches:
        raise CaseValidationError(f"no branch {f}-{t} in case")
    in_service = [br for br in matches if br.status]
    return in_service[0] if in_service else matches[0]


def build_fault_schedule(
    case: PowerSystemCase,
    branch,
    model_order: str,
    pf: PowerFlowSolution | None = None,
    base_model: ReducedModel | None = None,
    t_fault: float = 0.0,
    t_clear_near: float = 0.05,
    t_clear_remote: float = 0.1,
    fault_shunt: float = FAULT_SHUNT,
) -> FaultSchedule:
    """Stage a three-phase fault at the from-end of a branch.

    Stage 1 short-circuits the from-bus with the full topology; stage 2 opens
    the branch at the near end, leaving the fault tied to the remote end
    through the branch impedance; stage 3 removes the branch.
    """
    if not 0.0 <= t_fault <= t_clear_near <= t_clear_remote:
        raise CaseValidationError("fault clearing times must be ordered")
    f, t = branch
    terminal = case.generator_bus_ids
    if f in terminal or t in terminal:
        raise FaultLocationError(
            f"branch {f}-{t} touches a generator terminal bus; "
            "faults there would trip the machine"
        )
    br = _find_branch(case, branch)
    # orient so the fault sits at the requested from-bus
    if br.from_bus != f:
        br_from, br_to = br.to_bus, br.from_bus
    else:
        br_from, br_to = br.from_bus, br.to_bus

    if pf is None:
        pf = solve_power_flow(case)
    if base_model is None:
        base_model = init_steady_state(case, pf, model_order)

    if not br.status:
        # a fault on a dead line never touches the network
        return FaultSchedule(
            branch=(f, t),
            t_fault=t_fault,
            t_clear_near=t_clear_near,
            t_clear_remote=t_clear_remote,
            stages=((0.0, None, base_model),),
        )

    y_faulted = reduced_generator_admittance(
        case, pf, extra_shunts={br_from: complex(fault_shunt, 0.0)}
    )
    y_series = 1.0 / complex(br.r, br.x)
    y_half_chg = 0.5j * br.b_charging
    y_near_open = reduced_generator_admittance(
        case,
        pf,
        exclude_branches=[(br_from, br_to)],
        extra_shunts={br_to: y_half_chg},
        extra_nodes=[([(br_to, y_series)], complex(fault_shunt, 0.0) + y_half_chg)],
    )
    y_cleared = reduced_generator_admittance(
        case, pf, exclude_branches=[(br_from, br_to)]
    )

    spans = [
        (0.0, t_fault, base_model),
        (t_fault, t_clear_near, base_model.with_network(y_faulted)),
        (t_clear_near, t_clear_remote, base_model.with_network(y_near_open)),
        (t_clear_remote, None, base_model.with_network(y_cleared)),
    ]
    stages = tuple(
        (start, end, m) for start, end, m in spans if end is None or end > start
    )
    return FaultSchedule(
        branch=(f, t),
        t_fault=t_fault,
        t_clear_near=t_clear_near,
        t_clear_remote=t_clear_remote,
        stages=stages,
    )
