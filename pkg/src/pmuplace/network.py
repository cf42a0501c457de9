"""Case handling, power flow, network reduction and steady-state setup.

A case is a JSON document (see ``cases/case.schema.json``). Generation at
pv/slack buses is encoded as negative ``p_load``; positive loads sit on pq
buses and are folded into the admittance matrix as constant shunts at the
solved voltage before Kron reduction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.optimize

from . import _machine
from .errors import (
    CaseParseError,
    CaseValidationError,
    PowerFlowNotConvergedError,
    SingularBranchError,
    SingularEliminationError,
    SingularJacobianError,
)

BUS_KINDS = ("slack", "pv", "pq")
MODEL_ORDERS = ("second", "fourth")


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    p_load: float = 0.0
    q_load: float = 0.0
    v_setpoint: float = 1.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    status: bool = True


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    model_order: str
    h: float
    k_d: float
    x_d: float
    x_q: float
    x_d_prime: float
    x_q_prime: float
    t_d0_prime: float
    t_q0_prime: float


@dataclass(frozen=True)
class PowerSystemCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    frequency_hz: float = 60.0

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def g(self):
        return len(self.generators)

    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    def bus_index(self, bus_id):
        try:
            return self.bus_ids.index(bus_id)
        except ValueError:
            raise CaseValidationError(f"unknown bus id {bus_id}") from None

    @property
    def load_bus_ids(self):
        """Ids of pq buses carrying load, sorted ascending."""
        return sorted(
            b.id for b in self.buses if b.kind == "pq" and (b.p_load or b.q_load)
        )

    @property
    def generator_bus_ids(self):
        return {gen.bus for gen in self.generators}

    def generators_sorted(self):
        return sorted(self.generators, key=lambda gen: gen.id)

    def to_dict(self):
        return {
            "base_mva": self.base_mva,
            "frequency_hz": self.frequency_hz,
            "buses": [vars(b).copy() for b in self.buses],
            "branches": [
                {
                    "from": br.from_bus,
                    "to": br.to_bus,
                    "r": br.r,
                    "x": br.x,
                    "b_charging": br.b_charging,
                    "status": br.status,
                }
                for br in self.branches
            ],
            "generators": [
                {
                    "id": gen.id,
                    "bus": gen.bus,
                    "model_order": gen.model_order,
                    "H": gen.h,
                    "K_D": gen.k_d,
                    "x_d": gen.x_d,
                    "x_q": gen.x_q,
                    "x_d_prime": gen.x_d_prime,
                    "x_q_prime": gen.x_q_prime,
                    "T_d0_prime": gen.t_d0_prime,
                    "T_q0_prime": gen.t_q0_prime,
                }
                for gen in self.generators
            ],
        }


@dataclass(frozen=True)
class PowerFlowSolution:
    v_mag: np.ndarray
    v_ang: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float

    def voltage(self):
        return self.v_mag * np.exp(1j * self.v_ang)


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Generator-internal-node network plus everything dynamics needs.

    ``x0`` is a true equilibrium of the selected model: the derivative at
    ``x0`` with the stored constant inputs vanishes to ~1e-10.
    """

    model_order: str
    y_reduced: np.ndarray
    e_mag: np.ndarray
    t_m: np.ndarray
    e_fd: np.ndarray
    x0: np.ndarray
    omega0: float
    gen_ids: tuple[int, ...]
    h: np.ndarray
    k_d: np.ndarray
    x_d: np.ndarray
    x_q: np.ndarray
    x_d_prime: np.ndarray
    x_q_prime: np.ndarray
    t_d0: np.ndarray
    t_q0: np.ndarray
    is_fourth: np.ndarray
    eq_frozen: np.ndarray
    ed_frozen: np.ndarray

    @property
    def g(self):
        return len(self.gen_ids)

    @property
    def idx_fourth(self):
        return np.flatnonzero(self.is_fourth)

    @property
    def n(self):
        if self.model_order == "second":
            return 2 * self.g
        return 2 * self.g + 2 * int(self.is_fourth.sum())

    def with_network(self, y_reduced, x0=None):
        """Same machines and inputs on a different reduced network."""
        return replace(
            self, y_reduced=y_reduced, x0=self.x0 if x0 is None else np.asarray(x0)
        )


# --- case loading -----------------------------------------------------------


def _field(record, key, kind, index, cast=float, default=None):
    if key not in record:
        if default is not None:
            return default
        raise CaseParseError(f"{kind}[{index}]: missing field '{key}'")
    try:
        return cast(record[key])
    except (TypeError, ValueError):
        raise CaseParseError(
            f"{kind}[{index}]: field '{key}' has invalid value {record[key]!r}"
        ) from None


def case_from_dict(doc) -> PowerSystemCase:
    if not isinstance(doc, dict):
        raise CaseParseError("case document must be a JSON object")
    for key in ("base_mva", "buses", "branches", "generators"):
        if key not in doc:
            raise CaseParseError(f"missing top-level key '{key}'")

    buses = []
    for i, rec in enumerate(doc["buses"]):
        kind = _field(rec, "kind", "buses", i, cast=str)
        if kind not in BUS_KINDS:
            raise CaseParseError(f"buses[{i}]: unknown kind '{kind}'")
        buses.append(
            Bus(
                id=_field(rec, "id", "buses", i, cast=int),
                kind=kind,
                p_load=_field(rec, "p_load", "buses", i, default=0.0),
                q_load=_field(rec, "q_load", "buses", i, default=0.0),
                v_setpoint=_field(rec, "v_setpoint", "buses", i, default=1.0),
                shunt_g=_field(rec, "shunt_g", "buses", i, default=0.0),
                shunt_b=_field(rec, "shunt_b", "buses", i, default=0.0),
            )
        )
    branches = []
    for i, rec in enumerate(doc["branches"]):
        branches.append(
            Branch(
                from_bus=_field(rec, "from", "branches", i, cast=int),
                to_bus=_field(rec, "to", "branches", i, cast=int),
                r=_field(rec, "r", "branches", i),
                x=_field(rec, "x", "branches", i),
                b_charging=_field(rec, "b_charging", "branches", i, default=0.0),
                status=_field(rec, "status", "branches", i, cast=bool, default=True),
            )
        )
    generators = []
    for i, rec in enumerate(doc["generators"]):
        order = _field(rec, "model_order", "generators", i, cast=str)
        if order not in MODEL_ORDERS:
            raise CaseParseError(f"generators[{i}]: unknown model_order '{order}'")
        generators.append(
            Generator(
                id=_field(rec, "id", "generators", i, cast=int),
                bus=_field(rec, "bus", "generators", i, cast=int),
                model_order=order,
                h=_field(rec, "H", "generators", i),
                k_d=_field(rec, "K_D", "generators", i, default=0.0),
                x_d=_field(rec, "x_d", "generators", i),
                x_q=_field(rec, "x_q", "generators", i),
                x_d_prime=_field(rec, "x_d_prime", "generators", i),
                x_q_prime=_field(rec, "x_q_prime", "generators", i),
                t_d0_prime=_field(rec, "T_d0_prime", "generators", i),
                t_q0_prime=_field(rec, "T_q0_prime", "generators", i),
            )
        )
    case = PowerSystemCase(
        base_mva=_field(doc, "base_mva", "case", 0),
        buses=tuple(buses),
        branches=tuple(sorted(branches, key=lambda b: (b.from_bus, b.to_bus))),
        generators=tuple(sorted(generators, key=lambda gen: gen.id)),
        frequency_hz=doc.get("frequency_hz", 60.0),
    )
    validate_case(case)
    return case


def validate_case(case: PowerSystemCase):
    ids = case.bus_ids
    if len(set(ids)) != len(ids):
        raise CaseValidationError("duplicate bus ids")
    slacks = [b.id for b in case.buses if b.kind == "slack"]
    if len(slacks) != 1:
        raise CaseValidationError(
            f"exactly one slack bus required, found {len(slacks)}"
        )
    known = set(ids)
    for br in case.branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise CaseValidationError(
                f"branch {br.from_bus}-{br.to_bus} references unknown bus"
            )
    if not case.generators:
        raise CaseValidationError("case has no generators")
    gen_ids = sorted(gen.id for gen in case.generators)
    if gen_ids != list(range(1, len(gen_ids) + 1)):
        raise CaseValidationError(
            f"generator ids must be 1..g with no gaps, got {gen_ids}"
        )
    seen_buses = set()
    for gen in case.generators:
        if gen.bus not in known:
            raise CaseValidationError(f"generator {gen.id} on unknown bus {gen.bus}")
        kind = case.buses[case.bus_index(gen.bus)].kind
        if kind == "pq":
            raise CaseValidationError(
                f"generator {gen.id} must sit on a pv or slack bus, bus {gen.bus} is pq"
            )
        if gen.bus in seen_buses:
            raise CaseValidationError(f"more than one generator on bus {gen.bus}")
        seen_buses.add(gen.bus)
        if gen.h <= 0:
            raise CaseValidationError(f"generator {gen.id}: H must be positive")
        if gen.x_d_prime <= 0:
            raise CaseValidationError(f"generator {gen.id}: x_d_prime must be positive")
        if gen.model_order == "fourth" and (gen.t_d0_prime <= 0 or gen.t_q0_prime <= 0):
            raise CaseValidationError(
                f"generator {gen.id}: open-circuit time constants must be positive"
            )


def load_case(path) -> PowerSystemCase:
    """Load and validate a case file."""
    path = Path(path)
    if not path.exists():
        raise CaseParseError(f"case file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return case_from_dict(doc)


# --- admittance assembly ----------------------------------------------------


def build_ybus(case: PowerSystemCase) -> np.ndarray:
    """Bus admittance matrix; out-of-service branches contribute nothing."""
    n = case.n_bus
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if not br.status:
            continue
        if br.r == 0.0 and br.x == 0.0:
            raise SingularBranchError(
                f"branch {br.from_bus}-{br.to_bus} has zero series impedance"
            )
        i = case.bus_index(br.from_bus)
        j = case.bus_index(br.to_bus)
        y_series = 1.0 / complex(br.r, br.x)
        y_half_chg = 0.5j * br.b_charging
        y[i, j] -= y_series
        y[j, i] -= y_series
        y[i, i] += y_series + y_half_chg
        y[j, j] += y_series + y_half_chg
    for k, bus in enumerate(case.buses):
        y[k, k] += complex(bus.shunt_g, bus.shunt_b)
    return y


def kron_reduce(y_aug: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Eliminate all nodes not in ``keep``: Y_kk - Y_ke Y_ee^-1 Y_ek."""
    y_aug = np.asarray(y_aug)
    m = y_aug.shape[0]
    keep = list(keep)
    drop = [i for i in range(m) if i not in set(keep)]
    if not drop:
        return y_aug[np.ix_(keep, keep)].copy()
    y_kk = y_aug[np.ix_(keep, keep)]
    y_ke = y_aug[np.ix_(keep, drop)]
    y_ek = y_aug[np.ix_(drop, keep)]
    y_ee = y_aug[np.ix_(drop, drop)]
    try:
        sol = np.linalg.solve(y_ee, y_ek)
    except np.linalg.LinAlgError:
        raise SingularEliminationError(drop) from None
    if not np.all(np.isfinite(sol)):
        raise SingularEliminationError(drop)
    return y_kk - y_ke @ sol


def load_admittances(case: PowerSystemCase, pf: PowerFlowSolution) -> dict[int, complex]:
    """Constant-impedance conversion of pq-bus loads at the solved voltage."""
    out = {}
    for bus in case.buses:
        if bus.kind != "pq" or (bus.p_load == 0.0 and bus.q_load == 0.0):
            continue
        v = pf.v_mag[case.bus_index(bus.id)]
        out[bus.id] = complex(bus.p_load, -bus.q_load) / v**2
    return out


def reduced_generator_admittance(
    case: PowerSystemCase,
    pf: PowerFlowSolution,
    *,
    extra_shunts: Mapping[int, complex] | None = None,
    exclude_branches: Iterable[tuple[int, int]] | None = None,
    extra_nodes: Sequence[tuple[Sequence[tuple[int, complex]], complex]] = (),
) -> np.ndarray:
    """Reduce the network to the generator internal nodes.

    Loads become constant shunts at the solved voltage, each generator gets an
    internal node behind x'_d, then every physical bus (and any extra fault
    node) is eliminated. ``extra_nodes`` entries are (connections, shunt)
    where connections is a list of (bus_id, series admittance).
    """
    excluded = {frozenset(p) for p in (exclude_branches or ())}
    if excluded:
        branches = tuple(
            br
            for br in case.branches
            if frozenset((br.from_bus, br.to_bus)) not in excluded
        )
        case = replace(case, branches=branches)
    y_bus = build_ybus(case)

    for bus_id, y_load in load_admittances(case, pf).items():
        k = case.bus_index(bus_id)
        y_bus[k, k] += y_load
    for bus_id, y_extra in (extra_shunts or {}).items():
        k = case.bus_index(bus_id)
        y_bus[k, k] += y_extra

    n = case.n_bus
    gens = case.generators_sorted()
    n_extra = len(extra_nodes)
    m = n + n_extra + len(gens)
    y = np.zeros((m, m), dtype=complex)
    y[:n, :n] = y_bus
    for e, (connections, shunt) in enumerate(extra_nodes):
        node = n + e
        y[node, node] += shunt
        for bus_id, y_series in connections:
            k = case.bus_index(bus_id)
            y[node, node] += y_series
            y[k, k] += y_series
            y[node, k] -= y_series
            y[k, node] -= y_series
    for idx, gen in enumerate(gens):
        node = n + n_extra + idx
        k = case.bus_index(gen.bus)
        y_gen = 1.0 / complex(0.0, gen.x_d_prime)
        y[node, node] += y_gen
        y[k, k] += y_gen
        y[node, k] -= y_gen
        y[k, node] -= y_gen
    keep = list(range(n + n_extra, m))
    return kron_reduce(y, keep)


# --- power flow -------------------------------------------------------------


def solve_power_flow(
    case: PowerSystemCase, tol: float = 1e-8, max_iter: int = 30
) -> PowerFlowSolution:
    """Full-Newton power flow in polar coordinates, flat start.

    Non-convergence is reported through ``converged=False``; only a singular
    Jacobian raises.
    """
    y = build_ybus(case)
    n = case.n_bus
    kinds = [b.kind for b in case.buses]
    slack = kinds.index("slack")
    pv = [i for i, k in enumerate(kinds) if k == "pv"]
    pq = [i for i, k in enumerate(kinds) if k == "pq"]
    pvpq = pv + pq

    p_spec = np.array([-b.p_load for b in case.buses])
    q_spec = np.array([-b.q_load for b in case.buses])
    v_mag = np.array(
        [b.v_setpoint if b.kind in ("slack", "pv") else 1.0 for b in case.buses]
    )
    v_ang = np.zeros(n)

    def injections(vm, va):
        v = vm * np.exp(1j * va)
        return v * np.conj(y @ v)

    def mismatch(vm, va):
        s = injections(vm, va)
        dp = p_spec[pvpq] - s.real[pvpq]
        dq = q_spec[pq] - s.imag[pq]
        return np.concatenate([dp, dq])

    iterations = 0
    mis = mismatch(v_mag, v_ang)
    max_mis = float(np.max(np.abs(mis))) if mis.size else 0.0
    while max_mis > tol and iterations < max_iter:
        v = v_mag * np.exp(1j * v_ang)
        i_bus = y @ v
        dv = np.diag(v)
        # complex power-injection partials (polar form)
        ds_dva = 1j * dv @ np.conj(np.diag(i_bus) - y @ dv)
        dv_norm = np.diag(v / v_mag)
        ds_dvm = dv @ np.conj(y @ dv_norm) + np.conj(np.diag(i_bus)) @ dv_norm
        j11 = ds_dva.real[np.ix_(pvpq, pvpq)]
        j12 = ds_dvm.real[np.ix_(pvpq, pq)]
        j21 = ds_dva.imag[np.ix_(pq, pvpq)]
        j22 = ds_dvm.imag[np.ix_(pq, pq)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, mis)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(
                f"singular power-flow Jacobian at iteration {iterations}"
            ) from None
        if not np.all(np.isfinite(dx)):
            raise SingularJacobianError(
                f"non-finite Newton step at iteration {iterations}"
            )
        n_ang = len(pvpq)
        v_ang[pvpq] += dx[:n_ang]
        v_mag[pq] += dx[n_ang:]
        iterations += 1
        mis = mismatch(v_mag, v_ang)
        max_mis = float(np.max(np.abs(mis))) if mis.size else 0.0

    s = injections(v_mag, v_ang)
    v_ang = v_ang - v_ang[slack]
    return PowerFlowSolution(
        v_mag=v_mag,
        v_ang=v_ang,
        p_inj=s.real,
        q_inj=s.imag,
        converged=bool(max_mis <= tol),
        iterations=iterations,
        max_mismatch=max_mis,
    )


# --- steady-state initialization --------------------------------------------


def _machine_arrays(case: PowerSystemCase, model_order: str):
    gens = case.generators_sorted()
    arr = lambda f: np.array([f(gen) for gen in gens])
    if model_order == "second":
        is_fourth = np.zeros(len(gens), dtype=bool)
    else:
        is_fourth = np.array([gen.model_order == "fourth" for gen in gens])
    return {
        "gen_ids": tuple(gen.id for gen in gens),
        "h": arr(lambda gen: gen.h),
        "k_d": arr(lambda gen: gen.k_d),
        "x_d": arr(lambda gen: gen.x_d),
        "x_q": arr(lambda gen: gen.x_q),
        "x_d_prime": arr(lambda gen: gen.x_d_prime),
        "x_q_prime": arr(lambda gen: gen.x_q_prime),
        "t_d0": arr(lambda gen: gen.t_d0_prime),
        "t_q0": arr(lambda gen: gen.t_q0_prime),
        "is_fourth": is_fourth,
    }


def init_steady_state(
    case: PowerSystemCase, pf: PowerFlowSolution, model_order: str
) -> ReducedModel:
    """Build the reduced model and its equilibrium from a solved power flow."""
    if model_order not in MODEL_ORDERS:
        raise CaseValidationError(f"unknown model order '{model_order}'")
    if not pf.converged:
        raise PowerFlowNotConvergedError(
            "steady-state initialization requires a converged power flow"
        )
    omega0 = 2.0 * math.pi * case.frequency_hz
    gens = case.generators_sorted()
    g = len(gens)
    v = pf.voltage()
    v_t = np.array([v[case.bus_index(gen.bus)] for gen in gens])
    s_gen = np.array(
        [
            complex(pf.p_inj[case.bus_index(gen.bus)], pf.q_inj[case.bus_index(gen.bus)])
            for gen in gens
        ]
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        i_t = np.where(np.abs(v_t) > 0, np.conj(s_gen / v_t), 0.0)
    x_dp = np.array([gen.x_d_prime for gen in gens])
    y_red = reduced_generator_admittance(case, pf)
    params = _machine_arrays(case, model_order)

    if model_order == "second":
        e_src = v_t + 1j * x_dp * i_t
        delta0 = np.angle(e_src)
        e_mag = np.abs(e_src)
        x0 = np.concatenate([delta0, np.full(g, omega0)])
        model = ReducedModel(
            model_order="second",
            y_reduced=y_red,
            e_mag=e_mag,
            t_m=np.zeros(g),
            e_fd=np.zeros(g),
            x0=x0,
            omega0=omega0,
            eq_frozen=e_mag.copy(),
            ed_frozen=np.zeros(g),
            **params,
        )
        t_m = _machine.torque_m1(delta0[None, :], model)[0]
        return replace(model, t_m=t_m)

    is_fourth = params["is_fourth"]
    x_q = params["x_q"]
    x_qp = params["x_q_prime"]
    x_d = params["x_d"]
    # analytic seed: q-axis locus for two-axis machines, x'_d locus for
    # classical members whose transient voltages stay frozen
    locus = np.where(is_fourth, v_t + 1j * x_q * i_t, v_t + 1j * x_dp * i_t)
    delta0 = np.angle(locus)
    sin_d, cos_d = np.sin(delta0), np.cos(delta0)
    i_r, i_i = i_t.real, i_t.imag
    i_q0 = i_i * sin_d + i_r * cos_d
    i_d0 = i_r * sin_d - i_i * cos_d
    v_r, v_i = v_t.real, v_t.imag
    v_q0 = v_i * sin_d + v_r * cos_d
    v_d0 = v_r * sin_d - v_i * cos_d
    eq0 = np.where(is_fourth, v_q0 + x_dp * i_d0, np.abs(locus))
    ed0 = np.where(is_fourth, v_d0 - x_qp * i_q0, 0.0)

    model = ReducedModel(
        model_order="fourth",
        y_reduced=y_red,
        e_mag=np.abs(locus),
        t_m=np.zeros(g),
        e_fd=np.zeros(g),
        x0=np.zeros(2 * g + 2 * int(is_fourth.sum())),
        omega0=omega0,
        eq_frozen=eq0.copy(),
        ed_frozen=ed0.copy(),
        **params,
    )
    idx4 = model.idx_fourth
    g4 = idx4.size

    if g4:
        # The network interface links every machine through x'_d while the
        # terminal algebra keeps q-axis salience, so the analytic seed is not
        # an exact fixed point; polish it against the implemented algebra.
        def residual(u):
            delta = delta0.copy()
            eq = eq0.copy()
            ed = ed0.copy()
            delta[idx4] = u[:g4]
            eq[idx4] = u[g4 : 2 * g4]
            ed[idx4] = u[2 * g4 :]
            e_r, e_i, _, _, _, i_q, *_ = _machine.m2_terminal(
                delta[None, :], eq[None, :], ed[None, :], model
            )
            r_v = e_r[0, idx4] - v_t.real[idx4]
            r_w = e_i[0, idx4] - v_t.imag[idx4]
            r_d = -ed[idx4] + (x_q[idx4] - x_qp[idx4]) * i_q[0, idx4]
            return np.concatenate([r_v, r_w, r_d])

        seed = np.concatenate([delta0[idx4], eq0[idx4], ed0[idx4]])
        sol = scipy.optimize.root(residual, seed, method="hybr", tol=1e-13)
        if not sol.success or np.max(np.abs(sol.fun)) > 1e-9:
            raise PowerFlowNotConvergedError(
                f"two-axis equilibrium polish failed: {sol.message}"
            )
        delta0 = delta0.copy()
        eq0 = eq0.copy()
        ed0 = ed0.copy()
        delta0[idx4] = sol.x[:g4]
        eq0[idx4] = sol.x[g4 : 2 * g4]
        ed0[idx4] = sol.x[2 * g4 :]
        model = replace(model, eq_frozen=eq0.copy(), ed_frozen=ed0.copy())

    x0 = np.concatenate(
        [delta0, np.full(g, omega0), eq0[idx4], ed0[idx4]]
    )
    _, _, _, _, i_d_eq, i_q_eq, _, _, t_e = _machine.m2_terminal(
        delta0[None, :], eq0[None, :], ed0[None, :], model
    )
    t_m = t_e[0]
    e_fd = eq0 + (x_d - x_dp) * i_d_eq[0]
    return replace(model, t_m=t_m, e_fd=e_fd, x0=x0)


def apply_load_scaling(
    case: PowerSystemCase, alpha: Sequence[float]
) -> PowerSystemCase:
    """Scale P and Q at every load bus by its entry of ``alpha``.

    ``alpha`` aligns with ``case.load_bus_ids`` (sorted ascending).
    """
    load_ids = case.load_bus_ids
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (len(load_ids),):
        raise CaseValidationError(
            f"alpha must have one entry per load bus ({len(load_ids)}), got {alpha.shape}"
        )
    if np.any(alpha <= 0):
        raise CaseValidationError("alpha entries must be positive")
    factor = dict(zip(load_ids, alpha))
    buses = tuple(
        replace(b, p_load=b.p_load * factor[b.id], q_load=b.q_load * factor[b.id])
        if b.id in factor
        else b
        for b in case.buses
    )
    return replace(case, buses=buses)
