import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import pairs, random_pairs, unit_rows
from locicp.constraints import (
    ConstraintRow,
    ConstraintSet,
    Subspace,
    build_constraints,
    resample_pairs,
    solve_kkt,
    solve_partial_constraint,
)
from locicp.errors import EmptySelection, IllConditioned, SingularKKT
from locicp.localizability import (
    Branch,
    Category,
    ContributionTables,
    EigenBasis,
    LocalizabilityReport,
)
from locicp.registration import linearize, solve_unconstrained


def tables(I_f, I_s):
    return ContributionTables(I_f, I_f, I_s, I_f.sum(0), I_s.sum(0), np.zeros(0, dtype=int))


def full_rank_problem(rng, count=200):
    return linearize(random_pairs(rng, count, noise=0.05))


def test_resample_strong_branch():
    rng = np.random.default_rng(0)
    m = random_pairs(rng, 100)
    I_s = np.zeros((100, 6))
    chosen = rng.choice(100, 40, replace=False)
    I_s[chosen, 3] = rng.uniform(0.71, 1.0, 40)
    sel = resample_pairs(m, tables(I_s.copy(), I_s), 3, Branch.LS_KAPPA3)
    assert len(sel) == 40
    assert set(sel.index_reading) == set(chosen)
    vals = I_s[sel.index_reading, 3]
    assert np.all(np.diff(vals) <= 0)


def test_resample_branches_agree_when_all_filtered_are_strong():
    rng = np.random.default_rng(1)
    m = random_pairs(rng, 50)
    I = np.where(rng.random((50, 6)) < 0.3, rng.uniform(0.8, 1.0, (50, 6)), 0.0)
    t = tables(I, I)
    a = resample_pairs(m, t, 4, Branch.LC_KAPPA2)
    b = resample_pairs(m, t, 4, Branch.LS_KAPPA3)
    np.testing.assert_array_equal(a.index_reading, b.index_reading)


def test_resample_matches_exhaustive_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        m = random_pairs(rng, 80)
        I_f = np.where(rng.random((80, 6)) < 0.5, np.round(rng.uniform(0.17, 1.0, (80, 6)), 2), 0.0)
        I_s = np.where(I_f >= 0.7071, I_f, 0.0)
        col = int(rng.integers(6))
        for branch, src in ((Branch.LC_KAPPA2, I_f), (Branch.LS_KAPPA3, I_s)):
            expect = [i for i in range(80) if src[i, col] > 0]
            expect.sort(key=lambda i: (-src[i, col], i))
            if not expect:
                with pytest.raises(EmptySelection):
                    resample_pairs(m, tables(I_f, I_s), col, branch)
                continue
            got = resample_pairs(m, tables(I_f, I_s), col, branch)
            assert list(got.index_reading) == expect


def test_resample_empty():
    m = random_pairs(np.random.default_rng(3), 10)
    z = np.zeros((10, 6))
    with pytest.raises(EmptySelection):
        resample_pairs(m, tables(z, z), 0, Branch.LC_KAPPA2)


def test_partial_translation_one_dimensional():
    n = np.tile([1.0, 0, 0], (20, 1))
    p = np.random.default_rng(4).normal(size=(20, 3))
    t0 = solve_partial_constraint(pairs(p, p + 0.2 * n, n), Subspace.TRANSLATION)
    assert t0[0] == pytest.approx(0.2, abs=1e-6)
    np.testing.assert_allclose(t0[1:], 0, atol=1e-12)


def test_partial_zero_residual():
    m = random_pairs(np.random.default_rng(5), 30)
    m = pairs(m.p, m.p, m.n)
    for sub in Subspace:
        np.testing.assert_array_equal(solve_partial_constraint(m, sub), 0)


def test_partial_matches_pseudo_inverse_oracle():
    rng = np.random.default_rng(6)
    for _ in range(20):
        m = random_pairs(rng, 50, noise=0.05)
        res = np.einsum("ij,ij->i", m.n, m.q - m.p)
        for sub, rows in ((Subspace.TRANSLATION, m.n), (Subspace.ROTATION, np.cross(m.p, m.n))):
            oracle = np.linalg.pinv(rows) @ res
            np.testing.assert_allclose(solve_partial_constraint(m, sub), oracle, atol=1e-8)


def test_partial_needs_three_pairs():
    m = random_pairs(np.random.default_rng(7), 6).subset(np.arange(2))
    with pytest.raises(IllConditioned):
        solve_partial_constraint(m, Subspace.TRANSLATION)


def report_with(eta, branches=None, V_t=np.eye(3), V_r=np.eye(3), tab=None):
    branches = branches or tuple(Branch.NONE for _ in range(6))
    basis = EigenBasis(V_t, V_r, np.ones(3), np.ones(3))
    tab = tab or tables(np.zeros((1, 6)), np.zeros((1, 6)))
    return LocalizabilityReport(basis, tab, tuple(eta), tuple(branches))


F, P, N = Category.FULL, Category.PARTIAL, Category.NONE


def test_all_full_gives_no_rows():
    cs = build_constraints(report_with([F] * 6), random_pairs(np.random.default_rng(0), 6))
    assert len(cs) == 0
    assert cs.C.shape == (0, 6)


def test_none_translation_row():
    cs = build_constraints(report_with([F, F, F, N, F, F]), random_pairs(np.random.default_rng(0), 6), np.eye(3))
    np.testing.assert_array_equal(cs.C, [[0, 0, 0, 1, 0, 0]])
    np.testing.assert_array_equal(cs.d, [0.0])


def test_rows_rotated_to_map_and_rotation_first():
    R = np.array([[0, -1.0, 0], [1.0, 0, 0], [0, 0, 1.0]])
    cs = build_constraints(report_with([F, F, N, N, F, F]), random_pairs(np.random.default_rng(0), 6), R)
    assert [r.subspace for r in cs.rows] == [Subspace.ROTATION, Subspace.TRANSLATION]
    np.testing.assert_allclose(cs.C, [[0, 0, 1, 0, 0, 0], [0, 0, 0, 0, 1, 0]], atol=1e-15)


def test_partial_row_uses_resampled_solution():
    n = np.tile([1.0, 0, 0], (20, 1))
    p = np.random.default_rng(8).normal(size=(20, 3))
    m = pairs(p, p + 0.2 * n, n)
    I = np.zeros((20, 6))
    I[:, 3] = 1.0
    v = np.array([0.8, 0.6, 0.0])
    V_t = np.c_[v, [-0.6, 0.8, 0.0], [0, 0, 1.0]]
    rep = report_with([F, F, F, P, F, F], [Branch.NONE] * 3 + [Branch.LS_KAPPA3, Branch.NONE, Branch.NONE],
                      V_t=V_t, tab=tables(I, I))
    cs = build_constraints(rep, m, np.eye(3))
    assert cs.rows[0].value == pytest.approx(0.2 * 0.8, abs=1e-6)


def test_partial_demoted_on_empty_selection():
    rep = report_with([F, F, F, P, F, F], [Branch.NONE] * 3 + [Branch.LC_KAPPA2, Branch.NONE, Branch.NONE])
    cs = build_constraints(rep, random_pairs(np.random.default_rng(0), 6).subset([0]), np.eye(3))
    assert cs.demoted == (3,)
    assert cs.rows[0].value == 0.0


def test_kkt_without_constraints_is_unconstrained_solve():
    rng = np.random.default_rng(9)
    for _ in range(20):
        prob = full_rank_problem(rng)
        x, lam = solve_kkt(prob, ConstraintSet())
        np.testing.assert_array_equal(x.as_vector(), solve_unconstrained(prob).as_vector())
        assert lam.size == 0


def six_rows(values=(0.0,) * 6):
    rows = [ConstraintRow(e, Subspace.ROTATION, values[i], i) for i, e in enumerate(np.eye(3))]
    rows += [ConstraintRow(e, Subspace.TRANSLATION, values[3 + i], 3 + i) for i, e in enumerate(np.eye(3))]
    return ConstraintSet(tuple(rows))


def test_kkt_fully_pinned():
    prob = full_rank_problem(np.random.default_rng(10))
    x, _ = solve_kkt(prob, six_rows())
    np.testing.assert_allclose(x.as_vector(), 0, atol=1e-14)


def test_kkt_matches_elimination_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        prob = full_rank_problem(rng)
        v = unit_rows(rng, 1)[0]
        cs = ConstraintSet((ConstraintRow(v, Subspace.TRANSLATION, 0.2, 3),))
        x, _ = solve_kkt(prob, cs)
        # x = x_p + N y with C x_p = d, N spanning the null space of C
        C = np.r_[np.zeros(3), v][None]
        x_p = np.r_[np.zeros(3), 0.2 * v]
        N = np.linalg.svd(C)[2][1:].T
        y = np.linalg.lstsq(prob.jacobian @ N, prob.residuals - prob.jacobian @ x_p, rcond=None)[0]
        np.testing.assert_allclose(x.as_vector(), x_p + N @ y, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_constraint_satisfaction(seed, c):
    rng = np.random.default_rng(seed)
    prob = full_rank_problem(rng, 100)
    rows = []
    cols = rng.choice(6, c, replace=False)
    Vr, Vt = np.linalg.qr(rng.normal(size=(3, 3)))[0], np.linalg.qr(rng.normal(size=(3, 3)))[0]
    for j in sorted(cols):
        sub = Subspace.ROTATION if j < 3 else Subspace.TRANSLATION
        v = Vr[:, j] if j < 3 else Vt[:, j - 3]
        rows.append(ConstraintRow(v, sub, float(rng.normal() * 0.1), int(j)))
    cs = ConstraintSet(tuple(rows))
    x, _ = solve_kkt(prob, cs)
    assert cs.violation(x.as_vector()) < 1e-8


def tunnel_problem(rng, noise=0.01):
    theta = rng.uniform(0, 2 * np.pi, 400)
    n = np.c_[np.zeros(400), np.cos(theta), np.sin(theta)]
    p = np.c_[rng.uniform(-5, 5, 400), -3 * np.cos(theta), -3 * np.sin(theta)]
    p += rng.normal(size=(400, 3)) * 0.5 * np.c_[np.ones(400), np.zeros((400, 2))]
    q = p + rng.normal(size=(400, 1)) * noise * n
    return linearize(pairs(p, q, n))


def test_complementarity_on_exact_null_directions():
    rng = np.random.default_rng(12)
    prob = tunnel_problem(rng)
    w, V = np.linalg.eigh(prob.hessian)
    # rotation about and translation along the tunnel axis are exact null directions
    assert w[1] < 1e-9 * w[-1]
    np.testing.assert_allclose(np.abs(V[:, :2]).sum(axis=1), [1, 0, 0, 1, 0, 0], atol=1e-9)
    e = np.array([1.0, 0, 0])
    cs = ConstraintSet((ConstraintRow(e, Subspace.ROTATION, 0.0, 0),
                        ConstraintRow(e, Subspace.TRANSLATION, 0.0, 3)))
    x, lam = solve_kkt(prob, cs)
    x_unc = solve_unconstrained(prob).as_vector()
    others = V[:, 2:]
    np.testing.assert_allclose(others.T @ x.as_vector(), others.T @ x_unc, atol=1e-8)
    assert abs(x.as_vector()[0]) < 1e-12 and abs(x.as_vector()[3]) < 1e-12


def test_unconstrained_null_direction_raises():
    prob = tunnel_problem(np.random.default_rng(13))
    cs = ConstraintSet((ConstraintRow(np.array([1.0, 0, 0]), Subspace.ROTATION, 0.0, 0),))
    with pytest.raises(SingularKKT) as err:
        solve_kkt(prob, cs)
    assert err.value.eigenvalue < 1e-6


def test_inactive_constraint_has_zero_multiplier():
    rng = np.random.default_rng(14)
    for _ in range(20):
        prob = full_rank_problem(rng)
        x_unc = solve_unconstrained(prob).as_vector()
        v = unit_rows(rng, 1)[0]
        cs = ConstraintSet((ConstraintRow(v, Subspace.ROTATION, float(v @ x_unc[:3]), 0),))
        x, lam = solve_kkt(prob, cs)
        assert abs(lam[0]) < 1e-8
        np.testing.assert_allclose(x.as_vector(), x_unc, atol=1e-8)
