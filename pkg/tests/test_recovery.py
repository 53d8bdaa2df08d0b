import numpy as np
import pytest

from bilinear_cs.bilinear_ops import (CIRCULAR_CONVOLUTION, POINTWISE,
                                      UNITARY_PRODUCT, BilinearMapSpec,
                                      apply_map, dft_unitary)
from bilinear_cs.recovery import (BilinearModel, PhaseCell, RecoveryProblem,
                                  iht, model_sparsity, oracle_least_squares,
                                  phase_transition, simulate_problem)
from bilinear_cs.sensing import GAUSSIAN, _draw, orthonormal_rows
from bilinear_cs.sparse_model import (SUBSPACE, ConeSpec, support_from_indices)


def conv_model(n, i_idx, j_idx, kind=SUBSPACE):
    return BilinearModel(BilinearMapSpec(CIRCULAR_CONVOLUTION, n),
                         ConeSpec(support_from_indices(i_idx, n), kind),
                         ConeSpec(support_from_indices(j_idx, n), kind))


def spearman(x, y):
    """Rank correlation with average ranks on ties; numpy only."""
    def ranks(v):
        sv = np.asarray(v, dtype=float)
        order = np.argsort(sv, kind="stable")
        r = np.empty(len(sv))
        i = 0
        while i < len(sv):
            j = i
            while j + 1 < len(sv) and sv[order[j + 1]] == sv[order[i]]:
                j += 1
            r[order[i:j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return r
    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def test_model_validation_and_json():
    with pytest.raises(ValueError):
        BilinearModel(BilinearMapSpec(CIRCULAR_CONVOLUTION, 8),
                      ConeSpec(support_from_indices([0], 8), SUBSPACE),
                      ConeSpec(support_from_indices([0], 16), SUBSPACE))
    model = conv_model(8, [0, 1], [0, 4])
    j = model.to_json()
    assert j["map_kind"] == CIRCULAR_CONVOLUTION
    assert j["cone_x"]["indices"] == [0, 1]


def test_model_sparsity_budgets():
    n = 8
    pw = BilinearModel(BilinearMapSpec(POINTWISE, n),
                       ConeSpec(support_from_indices([0, 1, 2], n), SUBSPACE),
                       ConeSpec(support_from_indices([1, 2], n), SUBSPACE))
    assert model_sparsity(pw) == 2
    assert model_sparsity(conv_model(8, [0, 1], [0, 4])) == 4
    # aligned modular supports collapse the sumset
    assert model_sparsity(conv_model(8, [0, 4], [0, 4])) == 2
    uni = BilinearModel(BilinearMapSpec(UNITARY_PRODUCT, n, unitary=dft_unitary(n)),
                        ConeSpec(support_from_indices([0, 1], n), SUBSPACE),
                        ConeSpec(support_from_indices([0, 4], n), SUBSPACE))
    with pytest.raises(ValueError):
        model_sparsity(uni)


def test_problem_validation():
    model = conv_model(8, [0, 1], [0, 4])
    phi = np.zeros((4, 8))
    with pytest.raises(ValueError):
        RecoveryProblem(phi=phi, y=np.zeros(5), model=model)
    with pytest.raises(ValueError):
        RecoveryProblem(phi=np.zeros((4, 9)), y=np.zeros(4), model=model)
    with pytest.raises(ValueError):
        RecoveryProblem(phi=phi, y=np.zeros(4), model=model, noise_sigma=-0.1)


def test_oracle_exact_on_noiseless_data():
    model = conv_model(32, [0, 1], [0, 8])
    phi = _draw(GAUSSIAN, 16, 32, np.random.default_rng(3))
    prob = simulate_problem(model, phi, seed=11)
    sup = support_from_indices([0, 1, 8, 9], 32)
    out = oracle_least_squares(prob, sup)
    assert out.relative_error < 1e-9
    assert out.residual < 1e-9
    assert out.converged and out.iterations == 1
    assert not out.rank_deficient
    assert set(out.support_hat.indices) <= set(sup.indices)


def test_oracle_zero_measurements_give_zero_estimate():
    model = conv_model(8, [0, 1], [0, 4])
    phi = _draw(GAUSSIAN, 6, 8, np.random.default_rng(0))
    prob = RecoveryProblem(phi=phi, y=np.zeros(6), model=model)
    out = oracle_least_squares(prob, support_from_indices([0, 1, 4, 5], 8))
    assert np.array_equal(out.z_hat, np.zeros(8))
    assert out.support_hat is None
    assert out.relative_error is None


def test_oracle_rejects_underdetermined_support():
    model = conv_model(8, [0, 1], [0, 4])
    phi = _draw(GAUSSIAN, 3, 8, np.random.default_rng(0))
    prob = RecoveryProblem(phi=phi, y=np.zeros(3), model=model)
    with pytest.raises(ValueError):
        oracle_least_squares(prob, support_from_indices([0, 1, 4, 5], 8))


def test_oracle_error_linear_in_noise():
    # same seed reuses the same noise direction, so the restricted
    # least-squares error scales exactly with sigma
    model = conv_model(32, [0, 1], [0, 8])
    phi = _draw(GAUSSIAN, 16, 32, np.random.default_rng(3))
    sup = support_from_indices([0, 1, 8, 9], 32)
    errs = []
    for sigma in (1e-3, 1e-2, 1e-1):
        prob = simulate_problem(model, phi, noise_sigma=sigma, seed=11)
        errs.append(oracle_least_squares(prob, sup).relative_error)
    assert errs[1] / errs[0] == pytest.approx(10.0, rel=1e-9)
    assert errs[2] / errs[1] == pytest.approx(10.0, rel=1e-9)


def test_oracle_flags_rank_deficiency():
    model = conv_model(16, [0, 1], [0, 4])
    phi = _draw(GAUSSIAN, 8, 16, np.random.default_rng(1)).copy()
    phi[:, 1] = phi[:, 0]  # restricted system loses a rank
    y = phi @ np.eye(16)[0]
    prob = RecoveryProblem(phi=phi, y=y, model=model)
    out = oracle_least_squares(prob, support_from_indices([0, 1], 16))
    assert out.rank_deficient
    assert out.residual < 1e-9  # min-norm solution still fits


def test_iht_validation():
    model = conv_model(8, [0, 1], [0, 4])
    phi = _draw(GAUSSIAN, 4, 8, np.random.default_rng(0))
    prob = RecoveryProblem(phi=phi, y=np.zeros(4), model=model)
    with pytest.raises(ValueError):
        iht(prob, 0)
    with pytest.raises(ValueError):
        iht(prob, 9)
    with pytest.raises(ValueError):
        iht(prob, 5)  # k > m
    with pytest.raises(ValueError):
        iht(prob, 2, step=-1.0)


def test_iht_identity_matrix_recovers_in_two_steps():
    model = conv_model(16, [0, 1], [0, 4])
    phi = np.eye(16)
    prob = simulate_problem(model, phi, seed=4)
    out = iht(prob, 4)
    assert out.relative_error < 1e-12
    assert out.converged and not out.diverged
    assert out.iterations <= 3


def test_iht_gaussian_instance_recovers():
    # frozen known-good draw: 24 of 32 measurements, image sparsity 4
    model = conv_model(32, [0, 1], [0, 8])
    phi = _draw(GAUSSIAN, 24, 32, np.random.default_rng(2))
    prob = simulate_problem(model, phi, seed=5)
    out = iht(prob, model_sparsity(model), max_iters=1000)
    assert out.relative_error < 1e-6
    assert out.converged


def test_iht_output_is_k_sparse():
    model = conv_model(32, [0, 1], [0, 8])
    for t in range(5):
        phi = _draw(GAUSSIAN, 12, 32, np.random.default_rng(50 + t))
        prob = simulate_problem(model, phi, seed=t)
        for k in (1, 2, 4):
            out = iht(prob, k, max_iters=60)
            assert np.count_nonzero(out.z_hat) <= k


def test_iht_flags_divergence_with_oversized_step():
    model = conv_model(32, [0, 1], [0, 8])
    phi = _draw(GAUSSIAN, 24, 32, np.random.default_rng(2))
    prob = simulate_problem(model, phi, seed=5)
    out = iht(prob, 4, step=10.0)
    assert out.diverged
    assert not out.converged


def test_iht_breaks_ties_toward_low_indices():
    model = conv_model(4, [0, 1], [0, 2])
    phi = np.eye(4)
    y = np.ones(4)
    prob = RecoveryProblem(phi=phi, y=y, model=model)
    out = iht(prob, 2)
    assert np.array_equal(out.z_hat, np.array([1.0, 1.0, 0.0, 0.0]))
    assert out.support_hat.indices == (0, 1)


def test_simulate_problem_deterministic_and_faithful():
    model = conv_model(16, [0, 1], [0, 4])
    phi = orthonormal_rows(12, 16, 8)
    a = simulate_problem(model, phi, seed=21)
    b = simulate_problem(model, phi, seed=21)
    assert np.array_equal(a.y, b.y)
    s, h, z = a.truth
    assert abs(np.linalg.norm(s) - 1.0) < 1e-12
    assert abs(np.linalg.norm(h) - 1.0) < 1e-12
    assert np.allclose(z, apply_map(model.map_spec, s, h), atol=1e-14)
    assert np.array_equal(a.y, phi @ z)


def test_pointwise_success_lands_on_the_intersection():
    # the true image lives on I ∩ J; the sparsity budget min(S, F) leaves
    # room for stray entries, but any strays a converged run keeps are
    # below tolerance scale
    n = 32
    i_idx = list(range(6))
    j_idx = list(range(3, 9))
    model = BilinearModel(BilinearMapSpec(POINTWISE, n),
                          ConeSpec(support_from_indices(i_idx, n), SUBSPACE),
                          ConeSpec(support_from_indices(j_idx, n), SUBSPACE))
    k = model_sparsity(model)
    intersection = set(i_idx) & set(j_idx)
    successes = 0
    for t in range(20):
        phi = _draw(GAUSSIAN, 16, n, np.random.default_rng(100 + t))
        prob = simulate_problem(model, phi, seed=200 + t)
        out = iht(prob, k, max_iters=1000)
        if out.relative_error is not None and out.relative_error <= 1e-3:
            successes += 1
            big = np.flatnonzero(np.abs(out.z_hat) > 1e-6 * np.abs(out.z_hat).max())
            assert set(int(i) for i in big) <= intersection
    assert successes >= 10


def test_phase_cell_rate():
    c = PhaseCell(m=8, trials=10, successes=7)
    assert c.rate == 0.7
    assert c.to_json() == {"m": 8, "trials": 10, "successes": 7, "rate": 0.7}


def test_phase_transition_validation():
    spec = BilinearMapSpec(CIRCULAR_CONVOLUTION, 16)
    with pytest.raises(ValueError):
        phase_transition(spec, 32, 2, 2, SUBSPACE, (4,), 5)  # dim mismatch
    with pytest.raises(ValueError):
        phase_transition(spec, 16, 2, 2, "cone", (4,), 5)
    with pytest.raises(ValueError):
        phase_transition(spec, 16, 2, 2, SUBSPACE, (), 5)
    with pytest.raises(ValueError):
        phase_transition(spec, 16, 2, 2, SUBSPACE, (17,), 5)
    with pytest.raises(ValueError):
        phase_transition(spec, 16, 2, 2, SUBSPACE, (4,), 0)
    with pytest.raises(ValueError):
        phase_transition(spec, 16, 2, 17, SUBSPACE, (4,), 5)


def test_phase_transition_deterministic():
    spec = BilinearMapSpec(CIRCULAR_CONVOLUTION, 16)
    a = phase_transition(spec, 16, 2, 2, SUBSPACE, (8, 16), 5, seed=3)
    b = phase_transition(spec, 16, 2, 2, SUBSPACE, (8, 16), 5, seed=3)
    assert [c.successes for c in a.cells] == [c.successes for c in b.cells]
    assert np.all(a.rates() >= 0.0) and np.all(a.rates() <= 1.0)


def test_phase_transition_references_and_json():
    spec = BilinearMapSpec(CIRCULAR_CONVOLUTION, 16)
    res = phase_transition(spec, 16, 2, 3, SUBSPACE, (8,), 2, seed=0)
    assert res.reference_additive == pytest.approx(5 * np.log(16))
    assert res.reference_multiplicative == pytest.approx(6 * np.log(16))
    j = res.to_json()
    assert j["cells"][0]["m"] == 8
    assert j["map_kind"] == CIRCULAR_CONVOLUTION


def test_phase_transition_undersampled_budget_counts_as_failure():
    # the sumset of two 4-sets has at least 4 elements, so M = 3 can
    # never carry the restricted model: the rate must be exactly zero
    spec = BilinearMapSpec(CIRCULAR_CONVOLUTION, 32)
    res = phase_transition(spec, 32, 4, 4, SUBSPACE, (3,), 4, seed=0)
    assert res.rates()[0] == 0.0


def test_phase_transition_rate_climbs_with_m():
    # frozen sweep: rates (0, 0, 0.25, 0.9) at seed 1, rank correlation 0.9487
    spec = BilinearMapSpec(CIRCULAR_CONVOLUTION, 32)
    res = phase_transition(spec, 32, 2, 2, SUBSPACE, (4, 8, 16, 32), 20, seed=1)
    rates = res.rates()
    assert rates[-1] >= 0.7
    assert spearman([4, 8, 16, 32], rates) >= 0.9


def test_phase_transition_full_measurement_rate():
    # even at M = N plain hard thresholding on a square gaussian matrix
    # stalls on a fraction of draws; the rate is high but not 1
    spec = BilinearMapSpec(CIRCULAR_CONVOLUTION, 32)
    res = phase_transition(spec, 32, 2, 2, SUBSPACE, (32,), 30, seed=0)
    assert res.rates()[0] >= 0.6
