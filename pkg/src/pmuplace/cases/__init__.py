"""Bundled and synthetic test systems.

The WSCC 3-machine 9-bus fixture uses the classical Anderson-Fouad network
and machine parameters (100 MVA base, 60 Hz). Synthetic ring systems provide
seeded multi-machine cases of arbitrary size for scaling studies.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from ..network import PowerSystemCase, case_from_dict, load_case


def wscc9_path() -> Path:
    return Path(resources.files(__package__) / "wscc9.json")


def schema_path() -> Path:
    return Path(resources.files(__package__) / "case.schema.json")


def load_wscc9() -> PowerSystemCase:
    return load_case(wscc9_path())


def synthetic_ring_case(
    n_machines: int,
    seed: int = 0,
    fourth_order_fraction: float = 0.0,
    loading: float = 0.8,
) -> PowerSystemCase:
    """Seeded g-machine ring system that solves from a flat start.

    Load buses form a ring; each generator hangs off its own load bus through
    a short tie. ``fourth_order_fraction`` of the machines (rounded down,
    taken from the high ids) are marked fourth-order.
    """
    if n_machines < 2:
        raise ValueError("need at least 2 machines")
    rng = np.random.default_rng(seed)
    g = n_machines
    p_gen = rng.uniform(0.6, 1.1, size=g) * loading
    total = float(np.sum(p_gen))
    p_load = total / g * rng.uniform(0.9, 1.1, size=g)
    p_load *= total * 0.98 / np.sum(p_load)
    q_load = p_load * rng.uniform(0.25, 0.4, size=g)

    buses = []
    for i in range(g):
        kind = "slack" if i == 0 else "pv"
        buses.append(
            {
                "id": i + 1,
                "kind": kind,
                "p_load": 0.0 if i == 0 else -float(p_gen[i]),
                "v_setpoint": float(rng.uniform(1.0, 1.04)),
            }
        )
    for i in range(g):
        buses.append(
            {
                "id": g + i + 1,
                "kind": "pq",
                "p_load": float(p_load[i]),
                "q_load": float(q_load[i]),
            }
        )

    branches = []
    for i in range(g):
        branches.append(
            {
                "from": i + 1,
                "to": g + i + 1,
                "r": 0.0,
                "x": float(rng.uniform(0.05, 0.08)),
                "b_charging": 0.0,
            }
        )
        branches.append(
            {
                "from": g + i + 1,
                "to": g + (i + 1) % g + 1,
                "r": float(rng.uniform(0.005, 0.015)),
                "x": float(rng.uniform(0.05, 0.11)),
                "b_charging": float(rng.uniform(0.1, 0.25)),
            }
        )
    if g >= 6:
        # a few chords so the ring is not the only path
        for _ in range(g // 3):
            a, b = rng.choice(g, size=2, replace=False)
            if a == b:
                continue
            branches.append(
                {
                    "from": g + int(a) + 1,
                    "to": g + int(b) + 1,
                    "r": float(rng.uniform(0.01, 0.02)),
                    "x": float(rng.uniform(0.1, 0.2)),
                    "b_charging": float(rng.uniform(0.1, 0.3)),
                }
            )

    n_fourth = int(np.floor(fourth_order_fraction * g))
    generators = []
    for i in range(g):
        fourth = i >= g - n_fourth
        x_d = float(rng.uniform(0.8, 1.6))
        x_dp = float(rng.uniform(0.15, 0.3))
        x_q = x_d * float(rng.uniform(0.9, 0.98))
        x_qp = float(rng.uniform(1.05, 1.6)) * x_dp if fourth else x_dp
        x_qp = min(x_qp, 0.9 * x_q)
        generators.append(
            {
                "id": i + 1,
                "bus": i + 1,
                "model_order": "fourth" if fourth else "second",
                "H": float(rng.uniform(3.0, 8.0)),
                "K_D": float(rng.uniform(0.0, 2.0)) if fourth else 0.0,
                "x_d": x_d,
                "x_q": x_q,
                "x_d_prime": x_dp,
                "x_q_prime": x_qp,
                "T_d0_prime": float(rng.uniform(5.0, 9.0)),
                "T_q0_prime": float(rng.uniform(0.4, 1.0)),
            }
        )

    return case_from_dict(
        {
            "base_mva": 100.0,
            "frequency_hz": 60.0,
            "buses": buses,
            "branches": branches,
            "generators": generators,
        }
    )
