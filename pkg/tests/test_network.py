import json
import math

import numpy as np
import pytest

from pmuplace import _machine
from pmuplace.cases import load_wscc9, synthetic_ring_case, wscc9_path
from pmuplace.errors import (
    CaseParseError,
    CaseValidationError,
    PowerFlowNotConvergedError,
    SingularBranchError,
    SingularEliminationError,
)
from pmuplace.network import (
    apply_load_scaling,
    build_ybus,
    case_from_dict,
    init_steady_state,
    kron_reduce,
    load_case,
    solve_power_flow,
)


def tiny_case(**overrides):
    doc = {
        "base_mva": 100.0,
        "buses": [
            {"id": 1, "kind": "slack", "v_setpoint": 1.0},
            {"id": 2, "kind": "pq", "p_load": 0.0, "q_load": 0.0},
        ],
        "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 0.1}],
        "generators": [
            {
                "id": 1, "bus": 1, "model_order": "second",
                "H": 5.0, "K_D": 0.0, "x_d": 1.0, "x_q": 0.9,
                "x_d_prime": 0.3, "x_q_prime": 0.3,
                "T_d0_prime": 6.0, "T_q0_prime": 0.5,
            }
        ],
    }
    doc.update(overrides)
    return doc


# --- load_case ----------------------------------------------------------------


def test_load_wscc9_counts():
    case = load_case(wscc9_path())
    assert len(case.buses) == 9
    assert len(case.branches) == 9
    assert len(case.generators) == 3


def test_two_slack_buses_rejected():
    doc = tiny_case()
    doc["buses"][1] = {"id": 2, "kind": "slack", "v_setpoint": 1.0}
    with pytest.raises(CaseValidationError, match="slack"):
        case_from_dict(doc)


def test_generator_on_unknown_bus_rejected():
    doc = tiny_case()
    doc["generators"][0]["bus"] = 99
    with pytest.raises(CaseValidationError, match="unknown bus"):
        case_from_dict(doc)


def test_missing_field_names_location():
    doc = tiny_case()
    del doc["branches"][0]["x"]
    with pytest.raises(CaseParseError, match=r"branches\[0\].*'x'"):
        case_from_dict(doc)


def test_missing_file():
    with pytest.raises(CaseParseError, match="not found"):
        load_case("/nonexistent/case.json")


def test_bad_json_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"base_mva": 100,\n  "buses": [}')
    with pytest.raises(CaseParseError, match="line 2"):
        load_case(path)


def test_gap_in_generator_ids_rejected():
    doc = tiny_case()
    doc["generators"][0]["id"] = 2
    with pytest.raises(CaseValidationError, match="1..g"):
        case_from_dict(doc)


def test_nonpositive_inertia_rejected():
    doc = tiny_case()
    doc["generators"][0]["H"] = 0.0
    with pytest.raises(CaseValidationError, match="H must be positive"):
        case_from_dict(doc)


# --- build_ybus -----------------------------------------------------------------


def test_ybus_single_branch_formula():
    case = case_from_dict(tiny_case())
    y = build_ybus(case)
    assert y[0, 1] == pytest.approx(-1.0 / 0.1j)
    assert y[0, 0] == pytest.approx(1.0 / 0.1j)
    assert np.allclose(y, y.T)


def test_ybus_out_of_service_branch():
    doc = tiny_case()
    doc["branches"].append({"from": 1, "to": 2, "r": 0.05, "x": 0.2, "status": False})
    case = case_from_dict(doc)
    base = build_ybus(case_from_dict(tiny_case()))
    assert np.allclose(build_ybus(case), base)


def test_ybus_zero_impedance_branch():
    doc = tiny_case()
    doc["branches"][0]["x"] = 0.0
    with pytest.raises(SingularBranchError):
        build_ybus(case_from_dict(doc))


def test_wscc_ybus_matches_hand_assembly(wscc):
    """Independent assembly straight from the branch table."""
    data = json.loads(wscc9_path().read_text())
    n = 9
    ref = np.zeros((n, n), dtype=complex)
    for br in data["branches"]:
        i, j = br["from"] - 1, br["to"] - 1
        ys = 1.0 / complex(br["r"], br["x"])
        ref[i, j] -= ys
        ref[j, i] -= ys
        ref[i, i] += ys + 0.5j * br["b_charging"]
        ref[j, j] += ys + 0.5j * br["b_charging"]
    y = build_ybus(wscc)
    assert np.allclose(y, ref, atol=1e-12)
    # row sums reduce to the charging terms (series parts cancel)
    chg = ref.sum(axis=1)
    assert np.allclose(y.sum(axis=1), chg, atol=1e-12)


# --- power flow -----------------------------------------------------------------


def test_flat_case_zero_injection():
    pf = solve_power_flow(case_from_dict(tiny_case()))
    assert pf.converged
    assert np.allclose(pf.v_mag, 1.0)
    assert np.allclose(pf.v_ang, 0.0)


def test_wscc_power_flow_convergence(wscc_pf):
    assert wscc_pf.converged
    assert wscc_pf.iterations <= 10
    assert wscc_pf.max_mismatch <= 1e-8
    assert wscc_pf.v_ang[0] == 0.0


def test_wscc_against_gauss_seidel_oracle(wscc, wscc_pf):
    """Independent fixed-point power flow on the same fixture."""
    y = build_ybus(wscc)
    kinds = [b.kind for b in wscc.buses]
    p_spec = np.array([-b.p_load for b in wscc.buses])
    q_spec = np.array([-b.q_load for b in wscc.buses])
    v = np.array(
        [b.v_setpoint if b.kind in ("slack", "pv") else 1.0 for b in wscc.buses],
        dtype=complex,
    )
    for _ in range(8000):
        for i, kind in enumerate(kinds):
            if kind == "slack":
                continue
            if kind == "pv":
                q_i = (v[i] * np.conj(y[i] @ v)).imag
                s = complex(p_spec[i], q_i)
            else:
                s = complex(p_spec[i], q_spec[i])
            total = y[i] @ v - y[i, i] * v[i]
            v_new = (np.conj(s / v[i]) - total) / y[i, i]
            if kind == "pv":
                v_new = v_new / abs(v_new) * wscc.buses[i].v_setpoint
            v[i] = v_new
    assert np.allclose(np.abs(v), wscc_pf.v_mag, atol=1e-6)
    ang = np.angle(v) - np.angle(v[0])
    assert np.allclose(ang, wscc_pf.v_ang, atol=1e-6)


def test_wscc_power_balance(wscc, wscc_pf):
    for i, bus in enumerate(wscc.buses):
        if bus.kind == "slack":
            continue
        assert wscc_pf.p_inj[i] + bus.p_load == pytest.approx(0.0, abs=1e-8)
        if bus.kind == "pq":
            assert wscc_pf.q_inj[i] + bus.q_load == pytest.approx(0.0, abs=1e-8)


def test_isolated_bus_gives_singular_jacobian():
    from pmuplace.errors import SingularJacobianError

    doc = tiny_case()
    doc["buses"].append({"id": 3, "kind": "pq", "p_load": 0.1, "q_load": 0.05})
    with pytest.raises(SingularJacobianError):
        solve_power_flow(case_from_dict(doc))


def test_overloaded_case_reports_nonconvergence(wscc):
    load_ids = wscc.load_bus_ids
    heavy = apply_load_scaling(wscc, [100.0] * len(load_ids))
    pf = solve_power_flow(heavy)
    assert not pf.converged


# --- kron reduction ---------------------------------------------------------------


def test_kron_keep_all_identity():
    rng = np.random.default_rng(1)
    y = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    y = y + y.T
    assert np.array_equal(kron_reduce(y, [0, 1, 2, 3]), y)


def test_kron_two_node_chain():
    y_series = 1.0 / 0.2j
    y_load = 0.5 - 0.3j
    y = np.array(
        [[y_series, -y_series], [-y_series, y_series + y_load]], dtype=complex
    )
    reduced = kron_reduce(y, [0])
    expected = y_series - y_series**2 / (y_series + y_load)
    assert reduced[0, 0] == pytest.approx(expected)


def test_kron_matches_gaussian_elimination(wscc, wscc_pf):
    from pmuplace.network import load_admittances

    n = wscc.n_bus
    g = wscc.g
    y = np.zeros((n + g, n + g), dtype=complex)
    y[:n, :n] = build_ybus(wscc)
    for bus_id, y_load in load_admittances(wscc, wscc_pf).items():
        k = wscc.bus_index(bus_id)
        y[k, k] += y_load
    for idx, gen in enumerate(wscc.generators_sorted()):
        node = n + idx
        k = wscc.bus_index(gen.bus)
        yg = 1.0 / (1j * gen.x_d_prime)
        y[node, node] += yg
        y[k, k] += yg
        y[node, k] -= yg
        y[k, node] -= yg
    # brute-force: eliminate bus nodes one at a time by Gaussian elimination
    work = y.copy()
    for _ in range(n):
        last = work.shape[0]
        w = work[1:, 1:] - np.outer(work[1:, 0], work[0, 1:]) / work[0, 0]
        work = w
    reduced = kron_reduce(y, list(range(n, n + g)))
    assert np.allclose(work, reduced, atol=1e-10)


def test_kron_two_stage_consistency():
    rng = np.random.default_rng(7)
    for _ in range(5):
        m = 8
        y = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        y = y + y.T + 3j * np.eye(m)
        once = kron_reduce(y, [0, 1, 2])
        stage = kron_reduce(y, [0, 1, 2, 3, 4])
        twice = kron_reduce(stage, [0, 1, 2])
        denom = np.linalg.norm(once)
        assert np.linalg.norm(once - twice) / denom < 1e-10


def test_kron_singular_block():
    y = np.zeros((3, 3), dtype=complex)
    y[0, 0] = 1.0
    y[0, 1] = y[1, 0] = -0.5
    with pytest.raises(SingularEliminationError):
        kron_reduce(y, [0])


# --- init_steady_state -------------------------------------------------------------


def test_smib_equilibrium():
    doc = {
        "base_mva": 100.0,
        "buses": [
            {"id": 1, "kind": "slack", "v_setpoint": 1.0},
            {"id": 2, "kind": "pv", "p_load": -0.8, "v_setpoint": 1.02},
        ],
        "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.2, "b_charging": 0.05}],
        "generators": [
            {"id": 1, "bus": 1, "model_order": "second", "H": 1000.0, "K_D": 0.0,
             "x_d": 0.5, "x_q": 0.45, "x_d_prime": 0.15, "x_q_prime": 0.15,
             "T_d0_prime": 8.0, "T_q0_prime": 0.5},
            {"id": 2, "bus": 2, "model_order": "fourth", "H": 4.0, "K_D": 1.0,
             "x_d": 1.2, "x_q": 1.1, "x_d_prime": 0.25, "x_q_prime": 0.35,
             "T_d0_prime": 6.0, "T_q0_prime": 0.6},
        ],
    }
    case = case_from_dict(doc)
    pf = solve_power_flow(case)
    for order in ("second", "fourth"):
        model = init_steady_state(case, pf, order)
        f = _machine.derivative(model.x0[None, :], model)[0]
        assert np.max(np.abs(f)) < 1e-8


def test_zero_dispatch_generator_initializes():
    """A machine with no output still gets a valid equilibrium (zero
    torque, internal voltage equal to the terminal voltage)."""
    doc = {
        "base_mva": 100.0,
        "buses": [
            {"id": 1, "kind": "slack", "v_setpoint": 1.0},
            {"id": 2, "kind": "pv", "p_load": 0.0, "v_setpoint": 1.0},
        ],
        "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 0.1}],
        "generators": [
            {"id": 1, "bus": 1, "model_order": "second", "H": 5.0, "K_D": 0.0,
             "x_d": 1.0, "x_q": 0.9, "x_d_prime": 0.3, "x_q_prime": 0.3,
             "T_d0_prime": 6.0, "T_q0_prime": 0.5},
            {"id": 2, "bus": 2, "model_order": "second", "H": 3.0, "K_D": 0.0,
             "x_d": 1.0, "x_q": 0.9, "x_d_prime": 0.3, "x_q_prime": 0.3,
             "T_d0_prime": 6.0, "T_q0_prime": 0.5},
        ],
    }
    case = case_from_dict(doc)
    pf = solve_power_flow(case)
    model = init_steady_state(case, pf, "second")
    assert np.all(np.isfinite(model.x0))
    assert model.t_m[1] == pytest.approx(0.0, abs=1e-10)
    f = _machine.derivative(model.x0[None, :], model)[0]
    assert np.max(np.abs(f)) < 1e-8


def test_wscc_m1_rated_speed(model_m1):
    assert np.allclose(model_m1.x0[3:], model_m1.omega0)
    assert model_m1.n == 6


def test_wscc_m1_equilibrium(model_m1):
    f = _machine.derivative(model_m1.x0[None, :], model_m1)[0]
    assert np.max(np.abs(f)) < 1e-8


def test_wscc_m2_equilibrium(model_m2):
    f = _machine.derivative(model_m2.x0[None, :], model_m2)[0]
    assert np.max(np.abs(f)) < 1e-8
    assert model_m2.n == 12


def test_wscc_m1_angles_match_hand_initialization(wscc, wscc_pf, model_m1):
    """Classical internal angles recomputed with explicit real arithmetic."""
    deltas = []
    for gen in wscc.generators_sorted():
        k = wscc.bus_index(gen.bus)
        vm, va = wscc_pf.v_mag[k], wscc_pf.v_ang[k]
        p, q = wscc_pf.p_inj[k], wscc_pf.q_inj[k]
        # I = conj(S/V); E = V + jx' I, expanded in rectangular coordinates
        vr, vi = vm * math.cos(va), vm * math.sin(va)
        ir = (p * vr + q * vi) / vm**2
        ii = (p * vi - q * vr) / vm**2
        er = vr - gen.x_d_prime * ii
        ei = vi + gen.x_d_prime * ir
        deltas.append(math.atan2(ei, er))
    assert np.allclose(model_m1.x0[:3], deltas, atol=1e-12)
    # frozen fixture values, degrees
    assert np.allclose(np.degrees(model_m1.x0[:3]), [2.2716, 19.7316, 13.1664], atol=1e-3)


def test_init_requires_converged_flow(wscc):
    bad = solve_power_flow(apply_load_scaling(wscc, [100.0] * 3))
    with pytest.raises(PowerFlowNotConvergedError):
        init_steady_state(wscc, bad, "second")


def test_synthetic_case_equilibria():
    case = synthetic_ring_case(8, seed=5, fourth_order_fraction=0.5)
    pf = solve_power_flow(case)
    assert pf.converged
    for order in ("second", "fourth"):
        model = init_steady_state(case, pf, order)
        f = _machine.derivative(model.x0[None, :], model)[0]
        assert np.max(np.abs(f)) < 1e-8


# --- apply_load_scaling -------------------------------------------------------------


def test_load_scaling_identity(wscc):
    same = apply_load_scaling(wscc, [1.0, 1.0, 1.0])
    assert same == wscc


def test_load_scaling_pointwise(wscc):
    scaled = apply_load_scaling(wscc, [1.05, 1.0, 1.0])
    by_id = {b.id: b for b in scaled.buses}
    assert by_id[5].p_load == pytest.approx(1.25 * 1.05)
    assert by_id[5].q_load == pytest.approx(0.5 * 1.05)
    assert by_id[6].p_load == 0.9
    assert by_id[8].q_load == 0.35


def test_load_scaling_seeded_reproducible(wscc):
    rng1 = np.random.default_rng(7)
    rng2 = np.random.default_rng(7)
    a1 = rng1.uniform(0.95, 1.05, 3)
    a2 = rng2.uniform(0.95, 1.05, 3)
    c1 = apply_load_scaling(wscc, a1)
    c2 = apply_load_scaling(wscc, a2)
    assert c1 == c2


def test_load_scaling_identity_preserves_power_flow(wscc, wscc_pf):
    pf2 = solve_power_flow(apply_load_scaling(wscc, [1.0] * 3))
    assert np.array_equal(pf2.v_mag, wscc_pf.v_mag)
    assert np.array_equal(pf2.v_ang, wscc_pf.v_ang)


def test_load_scaling_validation(wscc):
    with pytest.raises(CaseValidationError):
        apply_load_scaling(wscc, [1.0, 1.0])
    with pytest.raises(CaseValidationError):
        apply_load_scaling(wscc, [1.0, -0.5, 1.0])
