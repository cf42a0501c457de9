import numpy as np
import pytest

from pmuplace.errors import CaseValidationError
from pmuplace.gramian import (
    Gramian,
    GramianConfig,
    LinearOutputSystem,
    empirical_gramian,
    linear_gramian_oracle,
    logdet,
    min_max_eigenvalue,
)

# published observability measures for this classic test system:
# (logdet, sigma_max, sigma_min) per instrumented generator set
WSCC_REFERENCE = {
    (1,): (8.54, 1.14e3, 0.0082),
    (2,): (19.61, 1.16e3, 0.43),
    (3,): (22.33, 1.23e3, 0.57),
    (1, 2): (21.34, 2.30e3, 0.44),
    (1, 3): (24.40, 2.37e3, 0.82),
    (2, 3): (26.47, 2.40e3, 2.15),
}


# --- config validation ------------------------------------------------------


def test_config_rejects_bad_sizes():
    with pytest.raises(CaseValidationError):
        GramianConfig(sizes=(0.5, -1.0))
    with pytest.raises(CaseValidationError):
        GramianConfig(t_f=-1.0)


def test_config_rejects_nonorthogonal_direction():
    t = np.array([[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(CaseValidationError, match="orthogonal"):
        GramianConfig(directions=(t,))


def test_default_directions_are_pm_identity():
    cfg = GramianConfig()
    dirs = cfg.materialized_directions(4)
    assert np.array_equal(dirs[0], np.eye(4))
    assert np.array_equal(dirs[1], -np.eye(4))


# --- scalar and linear oracles ------------------------------------------------


def test_scalar_lti_analytic_gramian():
    """dx=-x, y=x has W = 1/2; discretization error stays below 1%."""
    sys = LinearOutputSystem(a=[[-1.0]], c=[[1.0]])
    cfg = GramianConfig(t_f=10.0, dt=1.0 / 120.0, x_ref=np.zeros(1))
    w = empirical_gramian(sys, cfg=cfg)
    assert abs(w.matrix[0, 0] - 0.5) / 0.5 < 0.01


def test_linear_oracle_scalar():
    w = linear_gramian_oracle([[-1.0]], [[1.0]], horizon=10.0, dt=1.0 / 120.0)
    assert abs(w[0, 0] - 0.5) / 0.5 < 0.01


def test_linear_oracle_zero_output():
    w = linear_gramian_oracle([[-1.0, 0.0], [0.0, -2.0]], [[0.0, 0.0]], 5.0, 0.01)
    assert np.array_equal(w, np.zeros((2, 2)))


def _random_stable_system(seed, n=4, p=2):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    a = a - (np.max(np.real(np.linalg.eigvals(a))) + 0.5) * np.eye(n)
    c = rng.standard_normal((p, n))
    return a, c


def test_empirical_matches_linear_oracle():
    a, c = _random_stable_system(42)
    cfg = GramianConfig(t_f=10.0, dt=1.0 / 120.0, x_ref=np.zeros(4))
    w_emp = empirical_gramian(LinearOutputSystem(a, c), cfg=cfg).matrix
    w_lin = linear_gramian_oracle(a, c, horizon=10.0, dt=1.0 / 120.0)
    rel = np.linalg.norm(w_emp - w_lin) / np.linalg.norm(w_lin)
    assert rel < 0.01


def test_size_invariance_for_linear_system():
    a, c = _random_stable_system(7)
    base = None
    for size in (0.25, 1.0, 3.0):
        cfg = GramianConfig(sizes=(size,), t_f=8.0, dt=0.01, x_ref=np.zeros(4))
        w = empirical_gramian(LinearOutputSystem(a, c), cfg=cfg).matrix
        if base is None:
            base = w
        else:
            assert np.linalg.norm(w - base) / np.linalg.norm(base) < 1e-6


# --- WSCC fixture values -------------------------------------------------------


def test_wscc_m1_logdet_matches_paper(bank_m1):
    for ids, (ld_ref, smax_ref, smin_ref) in WSCC_REFERENCE.items():
        w = bank_m1.joint(ids)
        assert logdet(w) == pytest.approx(ld_ref, rel=0.01)
        smin, smax = min_max_eigenvalue(w)
        assert smax == pytest.approx(smax_ref, rel=0.02)
        assert smin == pytest.approx(smin_ref, rel=0.05)


def test_wscc_single_sensor_ranking(bank_m1):
    lds = {i: logdet(bank_m1.joint([i])) for i in (1, 2, 3)}
    assert lds[3] > lds[1]
    assert lds[3] > lds[2] > lds[1]


def test_empty_instrumented_rejected(model_m1):
    with pytest.raises(CaseValidationError):
        empirical_gramian(model_m1, [], GramianConfig())


def test_bank_shape(bank_m1):
    assert bank_m1.gen_ids == (1, 2, 3)
    for w in bank_m1.per_generator.values():
        assert w.matrix.shape == (6, 6)


# --- additivity and structure ---------------------------------------------------


@pytest.mark.parametrize("fixture_name", ["m1", "m2"])
def test_additivity_identity(request, fixture_name, model_m1, model_m2, bank_m1, bank_m2):
    model = {"m1": model_m1, "m2": model_m2}[fixture_name]
    bank = {"m1": bank_m1, "m2": bank_m2}[fixture_name]
    cfg = GramianConfig()
    for ids in [(1,), (1, 3), (1, 2, 3)]:
        joint = empirical_gramian(model, ids, cfg).matrix
        summed = bank.joint(ids)
        rel = np.linalg.norm(joint - summed) / np.linalg.norm(joint)
        assert rel < 1e-8


@pytest.mark.parametrize("fixture_name", ["m1", "m2"])
def test_symmetry_and_psd(request, fixture_name, bank_m1, bank_m2):
    bank = {"m1": bank_m1, "m2": bank_m2}[fixture_name]
    for w in bank.per_generator.values():
        m = w.matrix
        assert np.max(np.abs(m - m.T)) <= 1e-10 * max(1.0, np.max(np.abs(m)))
        smin, smax = min_max_eigenvalue(m)
        assert smin >= -1e-8 * smax


def test_direction_swap_bit_identical(model_m1):
    n = model_m1.n
    cfg_a = GramianConfig(directions=(np.eye(n), -np.eye(n)))
    cfg_b = GramianConfig(directions=(-np.eye(n), np.eye(n)))
    w_a = empirical_gramian(model_m1, [2], cfg_a).matrix
    w_b = empirical_gramian(model_m1, [2], cfg_b).matrix
    assert np.array_equal(w_a, w_b)


def test_logdet_monotone_in_instrumented_set(bank_m1):
    for base in [(1,), (2,), (1, 3)]:
        ld_base = logdet(bank_m1.joint(base))
        for extra in (1, 2, 3):
            if extra in base:
                continue
            ld_more = logdet(bank_m1.joint(base + (extra,)))
            assert ld_more >= ld_base - 1e-9


# --- scalar measures -------------------------------------------------------------


def test_logdet_identity():
    assert logdet(np.eye(6)) == 0.0


def test_logdet_diagonal_closed_form():
    assert logdet(np.diag([2.0, 3.0])) == pytest.approx(np.log(6.0), rel=1e-12)


def test_logdet_singular_sentinel():
    assert logdet(np.diag([1.0, 0.0])) == -np.inf


def test_logdet_asymmetric_rejected():
    with pytest.raises(CaseValidationError, match="symmetric"):
        logdet(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_min_max_eigenvalue_examples():
    assert min_max_eigenvalue(np.eye(3)) == (1.0, 1.0)
    smin, smax = min_max_eigenvalue(np.diag([0.0082, 1140.0]))
    assert smin == pytest.approx(0.0082)
    assert smax == pytest.approx(1140.0)


def test_fingerprint_distinguishes_configs(model_m1):
    a = GramianConfig().fingerprint(model_m1)
    b = GramianConfig(dt=1.0 / 60.0).fingerprint(model_m1)
    assert a != b
    assert GramianConfig().fingerprint(model_m1) == a
