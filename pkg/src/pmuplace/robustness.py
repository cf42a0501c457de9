"""Placement stability under load fluctuations and contingencies.

Each disturbed case re-solves the operating point, recomputes the Gramian
bank around the disturbed reference state and re-optimizes the placement;
overlap ratios and cross-evaluated log-determinants quantify how much the
typical-conditions placement loses.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import build_fault_schedule, simulate
from .errors import CaseValidationError, NumericalError, PowerFlowNotConvergedError
from .estimation import spawn_seed
from .gramian import GramianBank, GramianConfig, logdet, per_generator_bank
from .network import (
    PowerSystemCase,
    ReducedModel,
    apply_load_scaling,
    init_steady_state,
    solve_power_flow,
)
from .placement import Placement, evaluate, exhaustive, greedy, mads

_SOLVERS = {"exhaustive": exhaustive, "greedy": greedy, "mads": mads}


def draw_load_factors(case: PowerSystemCase, gamma: float, seed) -> np.ndarray:
    """Per-load-bus factors, uniform on [2 - gamma, gamma]; gamma = 1 is the
    degenerate no-fluctuation interval."""
    if gamma < 1.0:
        raise CaseValidationError("gamma must be at least 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(2.0 - gamma, gamma, size=len(case.load_bus_ids))


def fluctuation_case(
    case: PowerSystemCase,
    model_order: str,
    gamma: float = 1.05,
    seed: int = 0,
) -> tuple[PowerSystemCase, ReducedModel]:
    """Scaled-load case and its reduced model; the disturbed steady state
    becomes the Gramian reference. Raises if the disturbed flow diverges."""
    alpha = draw_load_factors(case, gamma, seed)
    scaled = apply_load_scaling(case, alpha)
    pf = solve_power_flow(scaled)
    if not pf.converged:
        raise PowerFlowNotConvergedError(
            f"disturbed power flow diverged (seed {seed})"
        )
    return scaled, init_steady_state(scaled, pf, model_order)


def contingency_case(
    case: PowerSystemCase,
    branch,
    model_order: str,
    dt: float = 1.0 / 120.0,
) -> ReducedModel:
    """Post-contingency model around the state at the remote-clearing
    instant of a staged three-phase fault."""
    schedule = build_fault_schedule(case, branch, model_order)
    base = schedule.stages[0][2]
    traj = simulate(schedule, base.x0, schedule.t_clear_remote or dt, dt)
    x_cont = traj.states[-1]
    return schedule.model.with_network(schedule.model.y_reduced, x0=x_cont)


def overlap_ratio(a: Placement, b: Placement) -> float:
    """Shared sensor fraction |A n B| / gbar of two equal-cardinality
    placements."""
    if a.cardinality != b.cardinality:
        raise CaseValidationError(
            f"placements have different cardinalities {a.cardinality} != {b.cardinality}"
        )
    shared = set(a.selected) & set(b.selected)
    return len(shared) / a.cardinality


def cross_evaluate(base_placement: Placement, disturbed_bank: GramianBank) -> float:
    """Objective of the typical-conditions placement under the disturbed
    Gramians."""
    return logdet(disturbed_bank.joint(base_placement.selected))


def ranked_contingency_branches(case: PowerSystemCase, pf=None) -> list[tuple[int, int]]:
    """Branches eligible for faulting (no generator-terminal endpoint),
    ranked by descending line flow at the sending end."""
    if pf is None:
        pf = solve_power_flow(case)
    terminal = case.generator_bus_ids
    v = pf.voltage()
    ranked = []
    for br in case.branches:
        if not br.status or br.from_bus in terminal or br.to_bus in terminal:
            continue
        i = case.bus_index(br.from_bus)
        j = case.bus_index(br.to_bus)
        y_series = 1.0 / complex(br.r, br.x)
        y_chg = 0.5j * br.b_charging
        s_from = v[i] * np.conj(y_series * (v[i] - v[j]) + y_chg * v[i])
        s_to = v[j] * np.conj(y_series * (v[j] - v[i]) + y_chg * v[j])
        flow = max(abs(s_from.real), abs(s_to.real))
        ranked.append((flow, (br.from_bus, br.to_bus)))
    ranked.sort(key=lambda item: (-item[0], item[1]))
    return [branch for _, branch in ranked]


@dataclass(frozen=True)
class CaseResult:
    descriptor: dict
    placements: dict
    ratios: dict
    cross_logdet: dict
    disturbed_logdet: dict
    skipped: bool = False
    reason: str = ""


@dataclass(frozen=True)
class RobustnessReport:
    mode: str
    gbar_values: tuple[int, ...]
    base_placements: dict
    cases: tuple[CaseResult, ...]
    mean_ratios: dict

    def to_dict(self):
        return {
            "mode": self.mode,
            "gbar_values": list(self.gbar_values),
            "base_placements": {
                str(k): list(p.selected) for k, p in self.base_placements.items()
            },
            "base_logdet": {
                str(k): p.objective for k, p in self.base_placements.items()
            },
            "mean_ratios": {str(k): v for k, v in self.mean_ratios.items()},
            "cases": [
                {
                    "descriptor": c.descriptor,
                    "skipped": c.skipped,
                    "reason": c.reason,
                    "placements": {
                        str(k): list(p.selected) for k, p in c.placements.items()
                    },
                    "ratios": {str(k): v for k, v in c.ratios.items()},
                    "cross_logdet": {str(k): v for k, v in c.cross_logdet.items()},
                    "disturbed_logdet": {
                        str(k): v for k, v in c.disturbed_logdet.items()
                    },
                }
                for c in self.cases
            ],
        }


def _solve_bank(bank, gbars, solver, seed):
    out = {}
    for k in gbars:
        if solver == "mads":
            out[k] = mads(bank, k, seed=seed)
        else:
            out[k] = _SOLVERS[solver](bank, k)
    return out


def _case_result(descriptor, disturbed_bank, base_placements, gbars, solver, seed):
    placements = _solve_bank(disturbed_bank, gbars, solver, seed)
    ratios = {}
    cross = {}
    disturbed = {}
    for k in gbars:
        ratios[k] = overlap_ratio(base_placements[k], placements[k])
        cross[k] = cross_evaluate(base_placements[k], disturbed_bank)
        disturbed[k] = placements[k].objective
    return CaseResult(
        descriptor=descriptor,
        placements=placements,
        ratios=ratios,
        cross_logdet=cross,
        disturbed_logdet=disturbed,
    )


def _skipped_result(descriptor, reason, gbars):
    return CaseResult(
        descriptor=descriptor,
        placements={},
        ratios={},
        cross_logdet={},
        disturbed_logdet={},
        skipped=True,
        reason=reason,
    )


def _mean_ratios(cases, gbars):
    out = {}
    for k in gbars:
        values = [c.ratios[k] for c in cases if not c.skipped]
        out[k] = float(np.mean(values)) if values else float("nan")
    return out


def fluctuation_study(
    case: PowerSystemCase,
    model_order: str,
    gbar_values,
    n_cases: int = 6,
    seed: int = 0,
    gamma: float = 1.05,
    cfg: GramianConfig | None = None,
    solver: str = "mads",
) -> RobustnessReport:
    cfg = cfg or GramianConfig()
    gbars = tuple(gbar_values)
    pf = solve_power_flow(case)
    base_model = init_steady_state(case, pf, model_order)
    base_bank = per_generator_bank(base_model, cfg)
    base = _solve_bank(base_bank, gbars, solver, seed)
    results = []
    for i in range(n_cases):
        case_seed = spawn_seed(seed, i)
        alpha = draw_load_factors(case, gamma, case_seed)
        descriptor = {"case_index": i, "alpha": [float(a) for a in alpha]}
        try:
            scaled = apply_load_scaling(case, alpha)
            pf_i = solve_power_flow(scaled)
            if not pf_i.converged:
                raise PowerFlowNotConvergedError("disturbed power flow diverged")
            model_i = init_steady_state(scaled, pf_i, model_order)
            bank_i = per_generator_bank(model_i, cfg)
        except (PowerFlowNotConvergedError, NumericalError) as exc:
            results.append(_skipped_result(descriptor, str(exc), gbars))
            continue
        results.append(_case_result(descriptor, bank_i, base, gbars, solver, seed))
    return RobustnessReport(
        mode="fluctuation",
        gbar_values=gbars,
        base_placements=base,
        cases=tuple(results),
        mean_ratios=_mean_ratios(results, gbars),
    )


def contingency_study(
    case: PowerSystemCase,
    model_order: str,
    gbar_values,
    branches=None,
    n_cases: int | None = None,
    seed: int = 0,
    cfg: GramianConfig | None = None,
    solver: str = "mads",
) -> RobustnessReport:
    cfg = cfg or GramianConfig()
    gbars = tuple(gbar_values)
    pf = solve_power_flow(case)
    base_model = init_steady_state(case, pf, model_order)
    base_bank = per_generator_bank(base_model, cfg)
    base = _solve_bank(base_bank, gbars, solver, seed)
    if branches is None:
        branches = ranked_contingency_branches(case, pf)
        if n_cases is not None:
            branches = branches[:n_cases]
    results = []
    for branch in branches:
        descriptor = {"branch": list(branch)}
        try:
            model_i = contingency_case(case, branch, model_order)
            bank_i = per_generator_bank(model_i, replace(cfg, x_ref=None))
        except (NumericalError, CaseValidationError) as exc:
            results.append(_skipped_result(descriptor, str(exc), gbars))
            continue
        results.append(_case_result(descriptor, bank_i, base, gbars, solver, seed))
    return RobustnessReport(
        mode="contingency",
        gbar_values=gbars,
        base_placements=base,
        cases=tuple(results),
        mean_ratios=_mean_ratios(results, gbars),
    )
