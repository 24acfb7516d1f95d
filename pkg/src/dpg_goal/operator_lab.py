"""Finite-dimensional laboratory for residual/duality identities.

Everything in this module is exact dense linear algebra on small matrices.
A "trial space" is R^n with the Euclidean inner product, a "test space" is
R^m equipped with a symmetric positive definite Gram matrix G, an operator
is an m-by-n matrix B understood as mapping a trial vector u to the test
functional v -> v^T B u, and functionals are coefficient vectors paired by
the ordinary dot product.

In this setting the objects of goal-oriented error control - dual norms,
Riesz representatives, ideal and practical residual-minimizing solves, the
influence function of a quantity of interest, Fortin-style oblique test
projections - are all computable in closed form, so the structural
identities the adaptive solver relies on can be verified to floating-point
accuracy instead of being trusted.  The `selftest` module drives these
functions over seeded random instances.

Conventions: `b_op` is B (test dim x trial dim), `gram_v` is G, `load` and
`goal` are functional coefficient vectors on the test and trial space, and
subspaces are given by full-column-rank basis matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2D array, got shape {a.shape}")
    return a


def _as_vector(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1D array, got shape {a.shape}")
    return a


def gram_cholesky(gram) -> np.ndarray:
    """Lower Cholesky factor of a Gram matrix, with SPD validation.

    Raises ValueError on shape/symmetry problems and LinAlgError (with the
    offending leading minor named by LAPACK) if the matrix is not positive
    definite.
    """
    G = _as_matrix(gram, "gram")
    if G.shape[0] != G.shape[1]:
        raise ValueError(f"gram must be square, got shape {G.shape}")
    scale = np.abs(G).max() if G.size else 0.0
    if not np.allclose(G, G.T, atol=1e-12 * max(scale, 1.0)):
        raise ValueError("gram matrix is not symmetric")
    try:
        return sla.cholesky(G, lower=True)
    except sla.LinAlgError as exc:
        raise sla.LinAlgError(f"gram matrix is not positive definite: {exc}") from exc


def _check_rank(basis: np.ndarray, name: str) -> None:
    if basis.shape[1] == 0:
        raise ValueError(f"{name} must have at least one column")
    if basis.shape[1] > basis.shape[0]:
        raise ValueError(
            f"{name} has more columns than rows ({basis.shape}); not a subspace basis"
        )
    s = np.linalg.svd(basis, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise ValueError(f"{name} is rank deficient (singular values {s[0]:.3e}..{s[-1]:.3e})")


def dual_norm(gram, f) -> float:
    """Norm of the functional f in the dual of (R^m, gram): sqrt(f^T G^-1 f)."""
    G = _as_matrix(gram, "gram")
    fv = _as_vector(f, "f")
    if fv.shape[0] != G.shape[0]:
        raise ValueError(
            f"functional length {fv.shape[0]} does not match gram dimension {G.shape[0]}"
        )
    L = gram_cholesky(G)
    y = sla.solve_triangular(L, fv, lower=True)
    return float(np.sqrt(y @ y))


def riesz_rep(gram, f) -> np.ndarray:
    """Riesz representative r with (r, v)_G = f(v) for all v, i.e. G r = f."""
    G = _as_matrix(gram, "gram")
    fv = _as_vector(f, "f")
    if fv.shape[0] != G.shape[0]:
        raise ValueError(
            f"functional length {fv.shape[0]} does not match gram dimension {G.shape[0]}"
        )
    L = gram_cholesky(G)
    return sla.cho_solve((L, True), fv)


def split_dual_norm(gram, f, w0) -> tuple[float, float, float]:
    """Split ||f||^2 in the dual norm across a subspace and its G-complement.

    `w0` is a basis of a subspace W0 of the test space.  Returns
    (total_sq, part0_sq, part1_sq), where part0 is the dual norm of f
    restricted to W0 (with the induced Gram), and part1 the dual norm of f
    restricted to the G-orthogonal complement of W0, each computed on an
    explicit basis.  For any f these satisfy total = part0 + part1; the
    three numbers are computed independently so that the additivity is a
    check, not a tautology.
    """
    G = _as_matrix(gram, "gram")
    fv = _as_vector(f, "f")
    W0 = _as_matrix(w0, "w0")
    if W0.shape[0] != G.shape[0]:
        raise ValueError("w0 row dimension does not match gram dimension")
    _check_rank(W0, "w0")
    L = gram_cholesky(G)

    y = sla.solve_triangular(L, fv, lower=True)
    total_sq = float(y @ y)

    G0 = W0.T @ G @ W0
    f0 = W0.T @ fv
    part0_sq = float(f0 @ sla.cho_solve(sla.cho_factor(G0), f0))

    if W0.shape[1] == W0.shape[0]:
        part1_sq = 0.0
    else:
        comp = sla.null_space(W0.T @ G)
        G1 = comp.T @ G @ comp
        f1 = comp.T @ fv
        part1_sq = float(f1 @ sla.cho_solve(sla.cho_factor(G1), f1))
    return total_sq, part0_sq, part1_sq


@dataclass
class MixedSolution:
    """Solution pair of a residual-minimizing mixed system.

    `trial` is the solution in ambient trial coordinates; `test` is the
    companion test-space vector: the Riesz-lifted residual (error
    representation) for a primal solve, the lifted influence function for a
    dual solve.
    """

    trial: np.ndarray
    test: np.ndarray


def _compat(b_op, gram_v, trial_sub):
    B = _as_matrix(b_op, "b_op")
    G = _as_matrix(gram_v, "gram_v")
    if G.shape[0] != B.shape[0]:
        raise ValueError(
            f"gram dimension {G.shape[0]} does not match operator test dimension {B.shape[0]}"
        )
    if trial_sub is None:
        U = np.eye(B.shape[1])
    else:
        U = _as_matrix(trial_sub, "trial_sub")
        if U.shape[0] != B.shape[1]:
            raise ValueError(
                f"trial_sub row dimension {U.shape[0]} does not match operator trial "
                f"dimension {B.shape[1]}"
            )
        _check_rank(U, "trial_sub")
    return B, G, U


def solve_idealized_primal(b_op, gram_v, load, trial_sub=None) -> MixedSolution:
    """Residual-minimizing solve with the *full* test space.

    Finds u in span(trial_sub) minimizing the dual norm of (B u - load);
    equivalently the mixed system for (psi, u) with psi the Riesz-lifted
    residual.  When the load is attainable over the subspace the lifted
    residual psi vanishes.
    """
    B, G, U = _compat(b_op, gram_v, trial_sub)
    ell = _as_vector(load, "load")
    if ell.shape[0] != B.shape[0]:
        raise ValueError("load length does not match operator test dimension")
    L = gram_cholesky(G)
    BU = B @ U
    Bt = sla.solve_triangular(L, BU, lower=True)   # L^-1 B U
    lt = sla.solve_triangular(L, ell, lower=True)  # L^-1 load
    A = Bt.T @ Bt
    try:
        cA = sla.cho_factor(A)
    except sla.LinAlgError as exc:
        raise sla.LinAlgError(
            "normal-equation matrix is singular; b_op is rank deficient on trial_sub"
        ) from exc
    uc = sla.cho_solve(cA, Bt.T @ lt)
    u = U @ uc
    psi = sla.cho_solve((L, True), BU @ uc - ell)
    return MixedSolution(trial=u, test=psi)


def solve_idealized_dual(b_op, gram_v, goal, trial_sub=None) -> MixedSolution:
    """Influence-function solve with the *full* test space.

    Finds omega in span(trial_sub) and its lifted test companion
    v = G^-1 B omega such that b(w, v) = goal(w) for all w in the trial
    subspace.  By construction v is G-orthogonal to the null space of the
    adjoint B'.
    """
    B, G, U = _compat(b_op, gram_v, trial_sub)
    g = _as_vector(goal, "goal")
    if g.shape[0] != B.shape[1]:
        raise ValueError("goal length does not match operator trial dimension")
    L = gram_cholesky(G)
    BU = B @ U
    Bt = sla.solve_triangular(L, BU, lower=True)
    A = Bt.T @ Bt
    try:
        cA = sla.cho_factor(A)
    except sla.LinAlgError as exc:
        raise sla.LinAlgError(
            "normal-equation matrix is singular; b_op is rank deficient on trial_sub"
        ) from exc
    wc = sla.cho_solve(cA, U.T @ g)
    omega = U @ wc
    v = sla.cho_solve((L, True), BU @ wc)
    return MixedSolution(trial=omega, test=v)


def _practical_core(B, G, U, T):
    """Shared pieces of the practical (restricted test space) solves."""
    Tb = _as_matrix(T, "test_sub")
    if Tb.shape[0] != B.shape[0]:
        raise ValueError("test_sub row dimension does not match operator test dimension")
    _check_rank(Tb, "test_sub")
    Gr = Tb.T @ G @ Tb
    cGr = sla.cho_factor(Gr)
    C = Tb.T @ (B @ U)  # restricted pairing, test_sub x trial_sub
    A = C.T @ sla.cho_solve(cGr, C)
    try:
        cA = sla.cho_factor(A)
    except sla.LinAlgError as exc:
        raise sla.LinAlgError(
            "practical trial/test pairing is singular; the test subspace is too poor "
            "for this trial subspace"
        ) from exc
    return Tb, cGr, C, cA


def solve_practical_primal(b_op, gram_v, load, trial_sub, test_sub) -> MixedSolution:
    """Residual-minimizing solve with the test space restricted to a subspace.

    This is the computable method: optimal test functions are sought only in
    span(test_sub), and the returned `test` vector is the Riesz lift of the
    residual within that subspace (the error-indicator source).
    """
    B, G, U = _compat(b_op, gram_v, trial_sub)
    ell = _as_vector(load, "load")
    if ell.shape[0] != B.shape[0]:
        raise ValueError("load length does not match operator test dimension")
    T, cGr, C, cA = _practical_core(B, G, U, test_sub)
    rhs = C.T @ sla.cho_solve(cGr, T.T @ ell)
    uc = sla.cho_solve(cA, rhs)
    u = U @ uc
    psi = T @ sla.cho_solve(cGr, T.T @ (B @ u - ell))
    return MixedSolution(trial=u, test=psi)


def solve_practical_dual(b_op, gram_v, goal, trial_sub, test_sub) -> MixedSolution:
    """Influence-function solve with the test space restricted to a subspace.

    Returns omega (the discrete influence coefficients) and its lifted test
    companion, which is the image of omega under the restricted trial-to-test
    map; both reuse the same normal-equation matrix as the primal solve.
    """
    B, G, U = _compat(b_op, gram_v, trial_sub)
    g = _as_vector(goal, "goal")
    if g.shape[0] != B.shape[1]:
        raise ValueError("goal length does not match operator trial dimension")
    T, cGr, C, cA = _practical_core(B, G, U, test_sub)
    wc = sla.cho_solve(cA, U.T @ g)
    omega = U @ wc
    v = T @ sla.cho_solve(cGr, C @ wc)
    return MixedSolution(trial=omega, test=v)


def _exact_primal(B, G, load):
    """Least-squares u* with B u* = load, verifying attainability."""
    u_star, *_ = np.linalg.lstsq(B, load, rcond=None)
    resid = np.linalg.norm(B @ u_star - load)
    if resid > 1e-8 * max(1.0, np.linalg.norm(load)):
        raise ValueError(
            "load is not attainable: it lies outside the range of b_op "
            f"(defect {resid:.3e})"
        )
    return u_star


def inf_sup_constants(b_op, gram_v) -> tuple[float, float]:
    """Bottom and top inf-sup constants (gamma, M) of B : trial -> test'.

    gamma = min, M = max of ||B u||_{V'} / |u| over trial vectors, computed
    as the extreme singular values of L^-1 B where G = L L^T.  Raises if B
    is rank deficient (gamma would be zero).
    """
    B = _as_matrix(b_op, "b_op")
    G = _as_matrix(gram_v, "gram_v")
    if G.shape[0] != B.shape[0]:
        raise ValueError("gram dimension does not match operator test dimension")
    if B.shape[0] < B.shape[1]:
        raise ValueError(
            f"operator with shape {B.shape} cannot be injective (test dim < trial dim)"
        )
    L = gram_cholesky(G)
    Bt = sla.solve_triangular(L, B, lower=True)
    s = np.linalg.svd(Bt, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise ValueError("b_op is rank deficient; inf-sup constant is zero")
    return float(s[-1]), float(s[0])


@dataclass
class DualityGapResult:
    """Both sides of the goal/load duality identity and their mismatch.

    primal_side = goal(u* - u_h), dual_side = load(v* - v_h); for compatible
    exact solutions and matched practical solves the two agree exactly, and
    `gap` = |primal_side - dual_side|.  `scale` is a magnitude reference for
    relative comparisons.
    """

    primal_side: float
    dual_side: float
    gap: float
    scale: float


def qoi_duality_gap(b_op, gram_v, load, goal, trial_sub, test_sub) -> DualityGapResult:
    """Evaluate goal(u*-u_h) and load(v*-v_h) independently and compare.

    u*, v* are full-space exact solutions (the load must be attainable);
    u_h, v_h are the practical pair on (trial_sub, test_sub).  The identity
    between the two sides is the foundation of goal-driven marking.
    """
    B, G, U = _compat(b_op, gram_v, trial_sub)
    ell = _as_vector(load, "load")
    g = _as_vector(goal, "goal")
    u_star = _exact_primal(B, G, ell)
    exact_dual = solve_idealized_dual(B, G, g)
    primal = solve_practical_primal(B, G, ell, U, test_sub)
    dual = solve_practical_dual(B, G, g, U, test_sub)
    primal_side = float(g @ (u_star - primal.trial))
    dual_side = float(ell @ (exact_dual.test - dual.test))
    scale = max(
        1.0,
        abs(float(g @ u_star)),
        abs(float(ell @ exact_dual.test)),
        abs(primal_side),
    )
    return DualityGapResult(
        primal_side=primal_side,
        dual_side=dual_side,
        gap=abs(primal_side - dual_side),
        scale=scale,
    )


@dataclass
class QoiBoundResult:
    """Pieces of the residual-product bound on the goal error.

    qoi_error <= bound must hold, where bound combines the primal residual
    dual norm, the dual residual norm, and the reciprocal of the bottom
    inf-sup constant gamma.
    """

    qoi_error: float
    bound: float
    gamma: float
    continuity: float
    primal_residual: float
    dual_residual: float


def qoi_error_bound_check(b_op, gram_v, load, goal, trial_sub, test_sub) -> QoiBoundResult:
    """Check |goal error| <= gamma^-1 * ||primal residual|| * ||dual residual||."""
    B, G, U = _compat(b_op, gram_v, trial_sub)
    ell = _as_vector(load, "load")
    g = _as_vector(goal, "goal")
    gamma, M = inf_sup_constants(B, G)
    u_star = _exact_primal(B, G, ell)
    primal = solve_practical_primal(B, G, ell, U, test_sub)
    dual = solve_practical_dual(B, G, g, U, test_sub)
    qoi_error = abs(float(g @ (u_star - primal.trial)))
    primal_residual = dual_norm(G, B @ primal.trial - ell)
    dual_residual = float(np.linalg.norm(B.T @ dual.test - g))
    bound = primal_residual * dual_residual / gamma
    return QoiBoundResult(
        qoi_error=qoi_error,
        bound=bound,
        gamma=gamma,
        continuity=M,
        primal_residual=primal_residual,
        dual_residual=dual_residual,
    )


def _gram_metric_norm(A: np.ndarray, L: np.ndarray) -> float:
    """Operator norm of A on (R^m, G) with G = L L^T, via L^T A L^-T."""
    # solve X L^T = A L^T is awkward; use (L^-1 A^T L)^T = L^T A L^-T
    Y = sla.solve_triangular(L, A.T @ L, lower=True)
    return float(np.linalg.svd(Y.T, compute_uv=False)[0])


def projection_identities(proj, gram) -> tuple[float, float, float]:
    """Gram-metric norms of a projection, its complement, and its defect.

    Returns (norm_p, norm_complement, norm_p_minus_orth) where the last is
    the norm of (proj - P) with P the G-orthogonal projection onto
    Range(proj).  For any idempotent proj with nontrivial proper range these
    satisfy norm_p = norm_complement and norm_p_minus_orth^2 + 1 = norm_p^2.
    """
    P = _as_matrix(proj, "proj")
    G = _as_matrix(gram, "gram")
    if P.shape[0] != P.shape[1]:
        raise ValueError(f"proj must be square, got {P.shape}")
    if G.shape[0] != P.shape[0]:
        raise ValueError("gram dimension does not match proj dimension")
    scale = max(1.0, float(np.abs(P).max()))
    defect = np.linalg.norm(P @ P - P)
    if defect > 1e-10 * scale * P.shape[0]:
        raise ValueError(f"proj is not idempotent (||P^2 - P|| = {defect:.3e})")
    L = gram_cholesky(G)

    norm_p = _gram_metric_norm(P, L)
    norm_c = _gram_metric_norm(np.eye(P.shape[0]) - P, L)

    # G-orthogonal projection onto Range(proj)
    u, s, _ = np.linalg.svd(P)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1.0)))
    if rank == 0 or rank == P.shape[0]:
        raise ValueError("proj must have nontrivial, proper range")
    R = u[:, :rank]
    Portho = R @ np.linalg.solve(R.T @ G @ R, R.T @ G)
    norm_diff = _gram_metric_norm(P - Portho, L)
    return norm_p, norm_c, norm_diff


def energy_residual_identity(b_op, gram_v, load, u_h, test_sub) -> tuple[float, float, float]:
    """Split the squared residual dual norm around a restricted Riesz lift.

    Returns (full_sq, remainder_sq, lifted_sq): the full dual norm of
    (B u_h - load) squared; the dual norm squared of the defect functional
    left after subtracting the Gram image of the restricted lift; and the
    test-space norm squared of the lift itself.  The three are computed by
    separate routes and satisfy full = remainder + lifted.
    """
    B, G, _ = _compat(b_op, gram_v, None)
    ell = _as_vector(load, "load")
    uh = _as_vector(u_h, "u_h")
    if uh.shape[0] != B.shape[1]:
        raise ValueError("u_h length does not match operator trial dimension")
    T = _as_matrix(test_sub, "test_sub")
    if T.shape[0] != B.shape[0]:
        raise ValueError("test_sub row dimension does not match operator test dimension")
    _check_rank(T, "test_sub")

    r = B @ uh - ell
    full = dual_norm(G, r)
    Gr = T.T @ G @ T
    theta = sla.cho_solve(sla.cho_factor(Gr), T.T @ r)
    psi = T @ theta
    lifted_sq = float(psi @ G @ psi)
    remainder = dual_norm(G, G @ psi - r)
    return full * full, remainder * remainder, lifted_sq


def oblique_projection(range_basis, null_basis) -> np.ndarray:
    """Projection with prescribed range and null space (bases as columns)."""
    R = _as_matrix(range_basis, "range_basis")
    N = _as_matrix(null_basis, "null_basis")
    if R.shape[0] != N.shape[0]:
        raise ValueError("range and null space bases must share the ambient dimension")
    if R.shape[1] + N.shape[1] != R.shape[0]:
        raise ValueError(
            f"range dim {R.shape[1]} + null dim {N.shape[1]} must equal ambient "
            f"dimension {R.shape[0]}"
        )
    W = sla.null_space(N.T)  # orthonormal basis of the annihilator of N
    M = W.T @ R
    try:
        coeff = np.linalg.solve(M, W.T)
    except np.linalg.LinAlgError as exc:
        raise ValueError("range and null space do not split the ambient space") from exc
    return R @ coeff


def build_fortin_projection(b_op, gram_v, trial_sub, extra_dim, rng) -> np.ndarray:
    """Oblique test projection compatible with a trial subspace.

    The range contains the lifted images G^-1 B u of every trial subspace
    basis vector plus `extra_dim` random directions; the null space is drawn
    inside the annihilator of B(trial_sub).  The result is an idempotent,
    generally non-orthogonal projection satisfying the orthogonality
    condition b(u_h, v - P v) = 0 for all u_h in the trial subspace - the
    structural requirements of the reliability analysis.
    """
    B, G, U = _compat(b_op, gram_v, trial_sub)
    m = B.shape[0]
    k = U.shape[1]
    r = k + int(extra_dim)
    if r >= m:
        raise ValueError(
            f"requested projection rank {r} must be smaller than the test dimension {m}"
        )
    BU = B @ U
    lifted = np.linalg.solve(G, BU)
    for _ in range(50):
        R = np.column_stack([lifted, rng.standard_normal((m, r - k))]) if r > k else lifted
        Z = sla.null_space(BU.T)  # dim m-k >= m-r
        N = Z @ rng.standard_normal((Z.shape[1], m - r))
        try:
            _check_rank(R, "range")
            _check_rank(N, "null")
            P = oblique_projection(R, N)
        except ValueError:
            continue
        return P
    raise ValueError("failed to draw a well-posed oblique projection")


@dataclass
class ReliabilityReport:
    """All the quantities entering the reliability/efficiency inequalities.

    reliability_lhs <= reliability_rhs is the reliability bound for the
    restricted residual estimator `eta` with data-oscillation term `osc` and
    test-projection norm `fortin_norm`; the two efficiency pairs bound eta
    and osc from above by the true error (times the continuity constant).
    """

    eta: float
    osc: float
    fortin_norm: float
    gamma: float
    continuity: float
    error: float
    best_error: float
    reliability_lhs: float
    reliability_rhs: float
    residual_efficiency_lhs: float
    residual_efficiency_rhs: float
    oscillation_efficiency_lhs: float
    oscillation_efficiency_rhs: float


def reliability_report(b_op, gram_v, load, u_h, fortin, trial_sub=None) -> ReliabilityReport:
    """Evaluate the reliability and efficiency inequalities for one instance.

    `fortin` must be an idempotent test projection whose complement
    annihilates B(trial_sub); both structural assumptions are verified
    before any quantity is computed, and violations raise ValueError naming
    the failed assumption.  The load must be attainable so that the exact
    solution (and hence the true error) exists.
    """
    B, G, U = _compat(b_op, gram_v, trial_sub)
    ell = _as_vector(load, "load")
    uh = _as_vector(u_h, "u_h")
    if uh.shape[0] != B.shape[1]:
        raise ValueError("u_h length does not match operator trial dimension")
    P = _as_matrix(fortin, "fortin")
    if P.shape != (B.shape[0], B.shape[0]):
        raise ValueError("fortin projection shape does not match the test dimension")

    scale = max(1.0, float(np.abs(P).max()))
    defect = np.linalg.norm(P @ P - P)
    if defect > 1e-10 * scale * P.shape[0]:
        raise ValueError(
            f"fortin violates the idempotency assumption (||P^2-P|| = {defect:.3e})"
        )
    BU = B @ U
    ortho_defect = np.linalg.norm((np.eye(P.shape[0]) - P).T @ BU)
    if ortho_defect > 1e-10 * max(1.0, np.linalg.norm(BU)):
        raise ValueError(
            "fortin violates the trial-orthogonality assumption "
            f"(||(1-P)' B U|| = {ortho_defect:.3e})"
        )

    L = gram_cholesky(G)
    gamma, M = inf_sup_constants(B, G)
    u_star = _exact_primal(B, G, ell)

    # restricted residual estimator on Range(fortin)
    u_svd, s, _ = np.linalg.svd(P)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1.0)))
    if rank == 0 or rank == P.shape[0]:
        raise ValueError("fortin must have nontrivial, proper range")
    R = u_svd[:, :rank]
    rr = R.T @ (ell - B @ uh)
    eta_sq = float(rr @ sla.cho_solve(sla.cho_factor(R.T @ G @ R), rr))
    eta = float(np.sqrt(max(eta_sq, 0.0)))

    osc = dual_norm(G, (np.eye(P.shape[0]) - P).T @ ell)
    fortin_norm = _gram_metric_norm(P, L)

    err = float(np.linalg.norm(u_star - uh))
    u_best = U @ np.linalg.lstsq(U, u_star, rcond=None)[0]
    best_err = float(np.linalg.norm(u_star - u_best))

    excess = float(np.sqrt(max(fortin_norm**2 - 1.0, 0.0)))
    return ReliabilityReport(
        eta=eta,
        osc=osc,
        fortin_norm=fortin_norm,
        gamma=gamma,
        continuity=M,
        error=err,
        best_error=best_err,
        reliability_lhs=gamma**2 * err**2,
        reliability_rhs=eta_sq + (eta * excess + osc) ** 2,
        residual_efficiency_lhs=eta,
        residual_efficiency_rhs=M * err,
        oscillation_efficiency_lhs=osc,
        oscillation_efficiency_rhs=M * fortin_norm * best_err,
    )
