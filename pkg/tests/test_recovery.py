import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockcs import blocks, coherence, linops, sampling
from blockcs.recovery import (
    RankDeficientError,
    RecoveryError,
    RecoveryProblem,
    basis_pursuit,
    check_inexact_duality,
    exact_recovery,
    golfing_certificate,
    golfing_levels,
    sign,
    soft_threshold,
)

from oracles import l1_lp, random_orthogonal


def sparse(n, s, rng, complex_=False):
    x = np.zeros(n, complex if complex_ else float)
    S = rng.choice(n, s, replace=False)
    x[S] = rng.standard_normal(s)
    if complex_:
        x[S] += 1j * rng.standard_normal(s)
    return x, np.sort(S)


def test_sign_of_zero():
    assert sign(np.array([0.0, -2.0, 3.0])).tolist() == [0.0, -1.0, 1.0]
    z = sign(np.array([0j, 3 + 4j]))
    assert z[0] == 0 and np.isclose(z[1], 0.6 + 0.8j)


def test_soft_threshold_complex_modulus():
    out = soft_threshold(np.array([3 + 4j, 0.1]), 1.0)
    assert np.allclose(out, [(3 + 4j) * 4 / 5, 0.0])


def test_full_orthogonal_draw_recovers():
    rng = np.random.default_rng(2)
    d = blocks.isolated_dictionary(linops.dft1d(32))
    A = sampling.full_draw(d)
    x, _ = sparse(32, 6, rng, complex_=True)
    res = basis_pursuit(RecoveryProblem.synthetic(A, x))
    assert res.status == "optimal"
    assert exact_recovery(x, res.x)


def test_identity_rows_separable():
    # rows e_k for k in S: the minimizer copies y into S and is zero elsewhere
    n, S = 16, [3, 7, 11]
    d = blocks.isolated_dictionary(linops.identity(n))
    pi = np.zeros(n)
    pi[S] = 1 / 3
    A = sampling.assemble(d, sampling.draw_bernoulli(d, np.where(pi > 0, 1.0, 0.0), seed=0))
    x = np.zeros(n)
    x[S] = [1.5, -2.0, 0.25]
    res = basis_pursuit(RecoveryProblem.synthetic(A, x))
    assert np.allclose(res.x, x, atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_matches_lp_oracle(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((12, 24)) / np.sqrt(12)
    x, _ = sparse(24, 3, rng)
    y = A @ x
    _, fun = l1_lp(A, y)
    res = basis_pursuit(RecoveryProblem(A, y, field="real"))
    assert res.status == "optimal"
    assert abs(res.objective - fun) <= 1e-6 * max(1, fun)
    assert np.linalg.norm(A @ res.x - y) <= 1e-8 * np.linalg.norm(y)


def test_exact_recovery_boundary():
    x = np.zeros(8)
    x[0] = 1.0
    assert not exact_recovery(x, x + np.r_[2e-5, np.zeros(7)])
    assert exact_recovery(x, x + np.r_[5e-6, np.zeros(7)])


def test_exact_recovery_length_mismatch():
    with pytest.raises(RecoveryError):
        exact_recovery(np.zeros(3), np.zeros(4))


def test_zero_measurements_give_zero():
    A = np.random.default_rng(0).standard_normal((5, 10))
    res = basis_pursuit(RecoveryProblem(A, np.zeros(5)))
    assert np.array_equal(res.x, np.zeros(10))
    assert res.status == "optimal"


def test_inconsistent_duplicates_raise():
    d = blocks.custom_dictionary(linops.identity(4), [[0, 1], [2, 3]])
    rec = sampling.DrawRecord("iid", 0, np.array([0, 0]), np.array([0.5, 0.5]), 2)
    A = sampling.assemble(d, rec)
    y = np.array([1.0, 0.0, 2.0, 0.0])
    # the same row measured twice with different values
    with pytest.raises(RankDeficientError):
        basis_pursuit(RecoveryProblem(A, y))


def test_consistent_duplicates_proceed():
    d = blocks.custom_dictionary(linops.identity(4), [[0, 1], [2, 3]])
    rec = sampling.DrawRecord("iid", 0, np.array([0, 0]), np.array([0.5, 0.5]), 2)
    A = sampling.assemble(d, rec)
    x = np.array([1.0, -1.0, 0.0, 0.0])
    res = basis_pursuit(RecoveryProblem.synthetic(A, x))
    assert exact_recovery(x, res.x)


def test_bad_y_shape():
    with pytest.raises(RecoveryError):
        RecoveryProblem(np.eye(3), np.zeros(2))


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 1000))
def test_homogeneity(c, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((10, 20))
    x, _ = sparse(20, 2, rng)
    y = A @ x
    r1 = basis_pursuit(RecoveryProblem(A, y, field="real"))
    r2 = basis_pursuit(RecoveryProblem(A, c * y, field="real"))
    assert np.allclose(r2.x, c * r1.x, atol=1e-6 * c * max(1, np.abs(r1.x).max()))


def test_global_phase_rotates_solution():
    rng = np.random.default_rng(5)
    d = blocks.isolated_dictionary(linops.dft1d(32))
    A = sampling.assemble(d, sampling.draw_iid(d, coherence.uniform_pi(32), 24, seed=1))
    x, _ = sparse(32, 3, rng, complex_=True)
    y = A.matvec(x)
    phase = np.exp(0.7j)
    r1 = basis_pursuit(RecoveryProblem(A, y))
    r2 = basis_pursuit(RecoveryProblem(A, phase * y))
    assert np.allclose(r2.x, phase * r1.x, atol=1e-6)


def test_real_field_on_complex_operator():
    rng = np.random.default_rng(1)
    d = blocks.isolated_dictionary(linops.dft1d(16))
    A = sampling.assemble(d, sampling.draw_iid(d, coherence.uniform_pi(16), 10, seed=3))
    x, _ = sparse(16, 2, rng)
    res = basis_pursuit(RecoveryProblem.synthetic(A, x, field="real"))
    assert not np.iscomplexobj(res.x)
    assert exact_recovery(x, res.x)


def test_gap_certifies_optimum():
    rng = np.random.default_rng(9)
    A = random_orthogonal(20, rng)[:10]
    x, _ = sparse(20, 2, rng)
    res = basis_pursuit(RecoveryProblem(A, A @ x, field="real"))
    _, fun = l1_lp(A, A @ x)
    assert res.gap >= -1e-9
    assert res.objective - fun <= res.gap + 1e-9


# certificates ----------------------------------------------------------------

@pytest.mark.parametrize("s,L", [(1, 2), (2, 3), (4, 3), (5, 4), (16, 4), (17, 5), (64, 5)])
def test_golfing_levels(s, L):
    assert golfing_levels(s) == L


def test_idealized_golfing_is_exact():
    rng = np.random.default_rng(0)
    n, S = 12, np.array([1, 4, 9])
    signs = np.array([1.0, -1.0, 1.0])
    views = [random_orthogonal(n, rng) for _ in range(2)]
    rep = golfing_certificate(views, S, signs)
    assert rep.w_norms[1] <= 1e-12
    assert np.allclose(rep.v[S], signs, atol=1e-12)
    assert np.abs(np.delete(rep.v, S)).max() <= 1e-12
    assert rep.passed and rep.contraction_held


def test_golfing_rejects_bad_signs():
    with pytest.raises(RecoveryError):
        golfing_certificate([np.eye(4)], [0, 1], [1.0, 0.5])


def test_golfing_identity_base_passes():
    n, s = 256, 16
    d = blocks.isolated_dictionary(linops.identity(n))
    S = blocks.draw_support(blocks.SupportModel.uniform_random(n, s), 11)
    pi = np.zeros(n)
    pi[S] = 1 / s
    m = coherence.empirical_m(s, s, n)
    A = sampling.assemble(d, sampling.draw_iid(d, pi, m, seed=11))
    L = golfing_levels(s)
    rep = golfing_certificate(sampling.partition_for_golfing(A, L), S, np.ones(s))
    assert rep.L == 4 and sum(rep.sizes) == m
    assert rep.passed
    again = check_inexact_duality(A, S, np.where(np.isin(np.arange(n), S), 1.0, 0.0), rep.v)
    assert again.passed == rep.passed


def test_duality_full_orthogonal():
    rng = np.random.default_rng(3)
    Q = random_orthogonal(10, rng)
    x = np.zeros(10)
    x[[2, 5]] = [3.0, -1.0]
    v = np.zeros(10)
    v[[2, 5]] = [1.0, -1.0]
    rep = check_inexact_duality(Q, [2, 5], x, v)
    assert rep.inv_norm == pytest.approx(1.0)
    assert rep.offsupp_max <= 1e-12
    assert rep.dist_sign <= 1e-12 and rep.passed


def test_duality_rank_deficient():
    A = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    rep = check_inexact_duality(A, [0, 1], np.array([1.0, 1.0, 0]), np.array([1.0, 0, 0]))
    assert rep.inv_norm == np.inf
    assert not rep.passed and "rank deficient" in rep.reason


def test_duality_rowspace_violation():
    A = np.eye(4)[:2]
    with pytest.raises(RecoveryError, match="row space"):
        check_inexact_duality(A, [0], np.array([1.0, 0, 0, 0]), np.array([1.0, 0, 0.5, 0]))


def test_report_record_is_stable():
    rep = golfing_certificate([np.eye(4), np.eye(4)], [0], [1.0])
    assert rep.to_record() == golfing_certificate([np.eye(4), np.eye(4)], [0], [1.0]).to_record()
    assert "pass=1" in rep.to_record()
