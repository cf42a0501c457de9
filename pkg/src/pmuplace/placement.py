"""Cardinality-constrained max-log-det sensor selection over a Gramian bank.

Three solvers: exhaustive enumeration (guarded oracle), a greedy baseline,
and a mesh-adaptive direct search restricted to cardinality-preserving swap
moves with variable-neighborhood escapes. Pinned sensors support incremental
placement on an extended fleet.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CaseValidationError, CombinatorialGuardError
from .gramian import GramianBank, logdet

DEFAULT_BUDGET_PER_GENERATOR = 200
MAX_STALLED_RESTARTS = 4


@dataclass(frozen=True)
class Placement:
    selected: tuple[int, ...]
    g: int
    objective: float
    solver: str
    evaluations: int = 0
    converged: bool = True

    @property
    def cardinality(self):
        return len(self.selected)

    @property
    def z(self) -> np.ndarray:
        """Binary selection vector indexed by generator id 1..g."""
        z = np.zeros(self.g, dtype=int)
        for i in self.selected:
            z[i - 1] = 1
        return z


def evaluate(z, bank: GramianBank) -> float:
    """Objective of a binary selection vector: logdet of the summed
    per-generator Gramians; -inf for empty or singular selections."""
    z = np.asarray(z)
    ids = bank.gen_ids
    if z.shape != (len(ids),):
        raise CaseValidationError(
            f"z must have length {len(ids)}, got {z.shape}"
        )
    selected = [ids[i] for i in np.flatnonzero(z)]
    if not selected:
        return -np.inf
    return logdet(bank.joint(selected))


class _Objective:
    """Cached objective over id-sets, counting bank evaluations."""

    def __init__(self, bank, use_cache=True):
        self.bank = bank
        self.use_cache = use_cache
        self.cache = {}
        self.evaluations = 0

    def __call__(self, ids) -> float:
        key = frozenset(ids)
        if self.use_cache and key in self.cache:
            return self.cache[key]
        self.evaluations += 1
        value = logdet(self.bank.joint(key)) if key else -np.inf
        if self.use_cache:
            self.cache[key] = value
        return value


def _split_free(bank, gbar, pinned):
    pinned = tuple(sorted(set(pinned)))
    ids = bank.gen_ids
    unknown = [i for i in pinned if i not in ids]
    if unknown:
        raise CaseValidationError(f"pinned generators {unknown} not in bank")
    if gbar < len(pinned):
        raise CaseValidationError(
            f"total cardinality {gbar} is below the {len(pinned)} pinned sensors"
        )
    if not 1 <= gbar <= len(ids):
        raise CaseValidationError(f"cardinality must be within 1..{len(ids)}")
    free = [i for i in ids if i not in pinned]
    return pinned, free, gbar - len(pinned)


def exhaustive(bank: GramianBank, gbar: int, pinned=()) -> Placement:
    """Global optimum by enumeration; guarded against combinatorial blowup."""
    pinned, free, k_free = _split_free(bank, gbar, pinned)
    n_comb = math.comb(len(free), k_free)
    if n_comb > 10**6:
        raise CombinatorialGuardError(
            f"C({len(free)},{k_free}) = {n_comb} exceeds the enumeration guard; "
            "use the mads solver"
        )
    objective = _Objective(bank)
    best_ids = None
    best = -np.inf
    for combo in itertools.combinations(free, k_free):
        ids = tuple(sorted(pinned + combo))
        value = objective(ids)
        if best_ids is None or value > best:
            best_ids, best = ids, value
    return Placement(
        selected=best_ids,
        g=bank.g,
        objective=best,
        solver="exhaustive",
        evaluations=objective.evaluations,
    )


def greedy(bank: GramianBank, gbar: int, pinned=()) -> Placement:
    """Add the generator with the best marginal gain; ties go to the lowest
    generator id."""
    pinned, free, k_free = _split_free(bank, gbar, pinned)
    objective = _Objective(bank)
    selected = list(pinned)
    for _ in range(k_free):
        best_id = None
        best = -np.inf
        for gid in free:
            if gid in selected:
                continue
            value = objective(tuple(selected) + (gid,))
            if best_id is None or value > best:
                best_id, best = gid, value
        selected.append(best_id)
    selected = tuple(sorted(selected))
    return Placement(
        selected=selected,
        g=bank.g,
        objective=objective(selected),
        solver="greedy",
        evaluations=objective.evaluations,
    )


def _poll_candidates(selected, free_out, free_in, n_swaps, rng, max_points):
    """Swap-move poll set at a given mesh size (number of simultaneous
    swaps). Single swaps enumerate the whole neighborhood; larger meshes
    sample it."""
    if n_swaps == 1:
        return [
            tuple(sorted(set(selected) - {o} | {i}))
            for o in free_out
            for i in free_in
        ]
    cands = set()
    for _ in range(max_points):
        outs = rng.choice(len(free_out), size=n_swaps, replace=False)
        ins = rng.choice(len(free_in), size=n_swaps, replace=False)
        cand = set(selected)
        cand -= {free_out[k] for k in outs}
        cand |= {free_in[k] for k in ins}
        cands.add(tuple(sorted(cand)))
    return sorted(cands)


def mads(
    bank: GramianBank,
    gbar: int,
    seed: int = 0,
    budget: int | None = None,
    pinned=(),
    use_cache: bool = True,
) -> Placement:
    """Mesh-adaptive direct search on the cardinality slice of the binary
    cube.

    Poll directions are swap moves (one selected index out, one in); the mesh
    size counts simultaneous swaps and never drops below 1. Success doubles
    the mesh, failure halves it; a collapse at mesh 1 triggers a seeded
    variable-neighborhood perturbation whose strength grows with stalled
    restarts. Deterministic for a fixed seed.
    """
    pinned, free, k_free = _split_free(bank, gbar, pinned)
    if budget is None:
        budget = DEFAULT_BUDGET_PER_GENERATOR * bank.g
    rng = np.random.default_rng(seed)
    objective = _Objective(bank, use_cache=use_cache)

    if k_free == 0:
        ids = tuple(pinned)
        return Placement(ids, bank.g, objective(ids), "mads", objective.evaluations)

    greedy_cost = sum(len(free) - j for j in range(k_free))
    if budget >= greedy_cost:
        warm = greedy(bank, gbar, pinned=pinned)
        incumbent = warm.selected
        objective.evaluations = warm.evaluations
        if use_cache:
            objective.cache[frozenset(incumbent)] = warm.objective
        incumbent_obj = objective(incumbent)
    else:
        incumbent = tuple(sorted(pinned + tuple(free[:k_free])))
        incumbent_obj = objective(incumbent)

    mesh_max = max(1, min(k_free, len(free) - k_free))
    mesh = 1
    stalled_restarts = 0
    exhausted = objective.evaluations >= budget

    def poll(center, center_obj, n_swaps):
        """Evaluate the poll set around a center; returns the best improving
        point (lex-smallest among ties) or the center itself."""
        nonlocal exhausted
        free_out = [i for i in center if i not in pinned]
        free_in = [i for i in free if i not in center]
        cands = _poll_candidates(
            center, free_out, free_in, n_swaps, rng, max_points=2 * len(free)
        )
        best_ids, best = center, center_obj
        for cand in cands:
            if objective.evaluations >= budget:
                exhausted = True
                break
            value = objective(cand)
            if value > best:
                best_ids, best = cand, value
        return best_ids, best

    while not exhausted:
        cand, cand_obj = poll(incumbent, incumbent_obj, mesh)
        if cand_obj > incumbent_obj:
            incumbent, incumbent_obj = cand, cand_obj
            mesh = min(2 * mesh, mesh_max)
            continue
        if mesh > 1:
            mesh = mesh // 2
            continue
        # mesh collapse at a swap-local optimum: variable-neighborhood escape
        if stalled_restarts >= MAX_STALLED_RESTARTS or exhausted:
            break
        strength = min(2 + stalled_restarts, mesh_max, gbar)
        free_out = [i for i in incumbent if i not in pinned]
        free_in = [i for i in free if i not in incumbent]
        if not free_in:
            break
        strength = min(strength, len(free_out), len(free_in))
        outs = rng.choice(len(free_out), size=strength, replace=False)
        ins = rng.choice(len(free_in), size=strength, replace=False)
        point = set(incumbent)
        point -= {free_out[k] for k in outs}
        point |= {free_in[k] for k in ins}
        point = tuple(sorted(point))
        point_obj = objective(point)
        # poll-like descent from the perturbed point
        while not exhausted:
            nxt, nxt_obj = poll(point, point_obj, 1)
            if nxt_obj <= point_obj:
                break
            point, point_obj = nxt, nxt_obj
        if point_obj > incumbent_obj:
            incumbent, incumbent_obj = point, point_obj
            stalled_restarts = 0
        else:
            stalled_restarts += 1
        mesh = 1

    return Placement(
        selected=incumbent,
        g=bank.g,
        objective=incumbent_obj,
        solver="mads",
        evaluations=objective.evaluations,
        converged=not exhausted,
    )


def incremental(
    bank: GramianBank,
    pinned,
    gbar_total: int,
    solver: str = "mads",
    **solver_kwargs,
) -> Placement:
    """Keep the existing sensors and optimize only the free coordinates.

    The bank may cover an extended fleet (newly added generators carry their
    own Gramians); ``gbar_total`` counts pinned plus new sensors.
    """
    solvers = {"exhaustive": exhaustive, "greedy": greedy, "mads": mads}
    if solver not in solvers:
        raise CaseValidationError(f"unknown solver '{solver}'")
    return solvers[solver](bank, gbar_total, pinned=tuple(pinned), **solver_kwargs)
