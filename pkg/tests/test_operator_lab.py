"""Structural checks for the finite-dimensional duality toolbox.

The statistical 100-instance suites live in the selftest module; these
tests pin down the individual contracts with small, targeted instances.
"""
import numpy as np
import pytest

from dpg_goal import operator_lab as lab


def _spd(rng, n):
    W = rng.standard_normal((n, n))
    return W @ W.T + n * np.eye(n)


def test_riesz_and_dual_norm_agree():
    rng = np.random.default_rng(3)
    for _ in range(25):
        n = int(rng.integers(2, 30))
        G = _spd(rng, n)
        f = rng.standard_normal(n)
        r = lab.riesz_rep(G, f)
        assert np.allclose(G @ r, f, atol=1e-10 * np.abs(f).max())
        assert lab.dual_norm(G, f) ** 2 == pytest.approx(f @ r, rel=1e-12)


def test_gram_cholesky_rejects_asymmetry():
    rng = np.random.default_rng(0)
    G = _spd(rng, 6)
    L = lab.gram_cholesky(G)
    assert np.allclose(L @ L.T, G, atol=1e-12 * np.abs(G).max())
    bad = G.copy()
    bad[0, 1] += 1e-3
    with pytest.raises(ValueError):
        lab.gram_cholesky(bad)
    with pytest.raises(np.linalg.LinAlgError):
        lab.gram_cholesky(-G)


def test_split_dual_norm_additivity_and_exhaustion():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(3, 25))
        G = _spd(rng, n)
        f = rng.standard_normal(n)
        k = int(rng.integers(1, n))
        tot, p0, p1 = lab.split_dual_norm(G, f, rng.standard_normal((n, k)))
        assert tot == pytest.approx(p0 + p1, rel=1e-11)
        assert p0 >= -1e-14 and p1 >= -1e-14
    # a full basis captures everything: the complement part vanishes
    G = _spd(rng, 8)
    f = rng.standard_normal(8)
    tot, p0, p1 = lab.split_dual_norm(G, f, np.eye(8))
    assert p0 == pytest.approx(tot, rel=1e-12)
    assert abs(p1) <= 1e-12 * tot


def test_energy_residual_identity_matches_direct_norm():
    rng = np.random.default_rng(17)
    for _ in range(25):
        m = int(rng.integers(4, 25))
        n = int(rng.integers(1, m))
        B = rng.standard_normal((m, n))
        G = _spd(rng, m)
        ell = rng.standard_normal(m)
        uh = rng.standard_normal(n)
        T = rng.standard_normal((m, int(rng.integers(1, m))))
        full, rem, lift = lab.energy_residual_identity(B, G, ell, uh, T)
        assert full == pytest.approx(rem + lift, rel=1e-11)
        direct = lab.dual_norm(G, ell - B @ uh) ** 2
        assert full == pytest.approx(direct, rel=1e-11)


def test_idealized_primal_recovers_attainable_load():
    rng = np.random.default_rng(23)
    for _ in range(10):
        n, m = 5, 9
        B = rng.standard_normal((m, n))
        G = _spd(rng, m)
        w = rng.standard_normal(n)
        sol = lab.solve_idealized_primal(B, G, B @ w)
        assert np.allclose(sol.trial, w, atol=1e-9)
        assert np.abs(sol.test).max() <= 1e-9  # lifted residual vanishes


def test_practical_equals_idealized_on_full_test_space():
    rng = np.random.default_rng(29)
    n, m = 4, 7
    B = rng.standard_normal((m, n))
    G = _spd(rng, m)
    ell = rng.standard_normal(m)
    U = rng.standard_normal((n, 3))
    ideal = lab.solve_idealized_primal(B, G, ell, trial_sub=U)
    practical = lab.solve_practical_primal(B, G, ell, U, np.eye(m))
    assert np.allclose(ideal.trial, practical.trial, atol=1e-10)


def test_duality_gap_sides_mean_what_they_say():
    # primal side = goal error of the subspace solve, dual side = load
    # applied to the influence-function error; recompute both by hand
    rng = np.random.default_rng(31)
    n, m, k, r = 6, 10, 3, 7
    B = rng.standard_normal((m, n))
    G = _spd(rng, m)
    ell = B @ rng.standard_normal(n)
    g = rng.standard_normal(n)
    U = rng.standard_normal((n, k))
    T = rng.standard_normal((m, r))
    out = lab.qoi_duality_gap(B, G, ell, g, U, T)
    u_star = lab.solve_idealized_primal(B, G, ell).trial
    u_h = lab.solve_practical_primal(B, G, ell, U, T).trial
    assert out.primal_side == pytest.approx(g @ (u_star - u_h), rel=1e-10)
    assert out.gap <= 1e-10 * out.scale


def test_qoi_product_bound_fields():
    rng = np.random.default_rng(37)
    for _ in range(15):
        n = int(rng.integers(3, 10))
        m = n + int(rng.integers(2, 8))
        B = rng.standard_normal((m, n))
        G = _spd(rng, m)
        ell = B @ rng.standard_normal(n)
        g = rng.standard_normal(n)
        k = int(rng.integers(1, n))
        U = rng.standard_normal((n, k))
        T = rng.standard_normal((m, int(rng.integers(k + 1, m + 1))))
        out = lab.qoi_error_bound_check(B, G, ell, g, U, T)
        assert out.gamma > 0
        assert out.bound == pytest.approx(
            out.primal_residual * out.dual_residual / out.gamma, rel=1e-12)
        assert out.qoi_error <= out.bound * (1 + 1e-9)


def test_inf_sup_constants_order_and_rank_check():
    rng = np.random.default_rng(41)
    B = rng.standard_normal((8, 5))
    G = _spd(rng, 8)
    gamma, M = lab.inf_sup_constants(B, G)
    assert 0 < gamma <= M
    rank_deficient = B.copy()
    rank_deficient[:, 4] = rank_deficient[:, 0]
    with pytest.raises(ValueError, match="rank deficient"):
        lab.inf_sup_constants(rank_deficient, G)


def test_oblique_projection_range_and_null():
    rng = np.random.default_rng(43)
    n, k = 9, 4
    R = rng.standard_normal((n, k))
    N = rng.standard_normal((n, n - k))
    P = lab.oblique_projection(R, N)
    assert np.allclose(P @ P, P, atol=1e-10)
    assert np.allclose(P @ R, R, atol=1e-10)
    assert np.abs(P @ N).max() <= 1e-10
    with pytest.raises(ValueError):
        # dimensions that cannot split the ambient space are rejected
        lab.oblique_projection(R, N[:, :-1])


def test_projection_identities_orthogonal_case():
    # for the G-orthogonal projection the norm is 1 and the defect is 0
    rng = np.random.default_rng(47)
    n, k = 10, 4
    G = _spd(rng, n)
    R = rng.standard_normal((n, k))
    P = R @ np.linalg.solve(R.T @ G @ R, R.T @ G)
    norm_p, norm_c, norm_diff = lab.projection_identities(P, G)
    assert norm_p == pytest.approx(1.0, abs=1e-9)
    assert norm_c == pytest.approx(1.0, abs=1e-9)
    assert abs(norm_diff) <= 1e-6


def test_projection_identities_oblique_case():
    rng = np.random.default_rng(53)
    for _ in range(20):
        n = int(rng.integers(3, 20))
        k = int(rng.integers(1, n))
        G = _spd(rng, n)
        P = lab.oblique_projection(
            rng.standard_normal((n, k)), rng.standard_normal((n, n - k)))
        norm_p, norm_c, norm_diff = lab.projection_identities(P, G)
        assert norm_p == pytest.approx(norm_c, rel=1e-8)
        assert norm_p**2 == pytest.approx(1.0 + norm_diff**2, rel=1e-8)


def test_fortin_projection_structure():
    rng = np.random.default_rng(59)
    for _ in range(15):
        n = int(rng.integers(2, 9))
        m = n + int(rng.integers(2, 9))
        B = rng.standard_normal((m, n))
        G = _spd(rng, m)
        k = int(rng.integers(1, n))
        U = rng.standard_normal((n, k))
        extra = int(rng.integers(0, m - k))
        P = lab.build_fortin_projection(B, G, U, extra, rng)
        assert np.allclose(P @ P, P, atol=1e-8)
        # compatibility: the complement annihilates B over the trial subspace
        assert np.abs((np.eye(m) - P).T @ (B @ U)).max() <= 1e-8


def test_reliability_report_validates_projection():
    rng = np.random.default_rng(61)
    n, m, k = 4, 9, 2
    B = rng.standard_normal((m, n))
    G = _spd(rng, m)
    ell = B @ rng.standard_normal(n)
    U = rng.standard_normal((n, k))
    P = lab.build_fortin_projection(B, G, U, 2, rng)
    uh = U @ rng.standard_normal(k)
    rep = lab.reliability_report(B, G, ell, uh, P, U)
    assert rep.reliability_lhs <= rep.reliability_rhs * (1 + 1e-9)
    assert rep.residual_efficiency_lhs <= rep.residual_efficiency_rhs * (1 + 1e-9)
    assert rep.oscillation_efficiency_lhs <= rep.oscillation_efficiency_rhs * (1 + 1e-9)
    assert rep.eta >= 0 and rep.osc >= 0
    # a non-idempotent matrix is not a projection: must be rejected
    with pytest.raises(ValueError):
        lab.reliability_report(B, G, ell, uh, P + 0.1, U)


def test_reliability_report_rejects_unattainable_load():
    rng = np.random.default_rng(67)
    n, m, k = 3, 8, 2
    B = rng.standard_normal((m, n))
    G = _spd(rng, m)
    U = rng.standard_normal((n, k))
    P = lab.build_fortin_projection(B, G, U, 1, rng)
    uh = U @ rng.standard_normal(k)
    # a generic load in R^m is not in the range of B (m > n)
    with pytest.raises(ValueError):
        lab.reliability_report(B, G, rng.standard_normal(m), uh, P, U)
