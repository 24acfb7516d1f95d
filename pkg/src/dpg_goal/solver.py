"""Element-local systems, normal-equation assembly, and the two global solves.

The method is a least-squares / minimum-residual scheme: per element the
test-space Gram matrix G_K of the adjoint graph inner product

    ((v, tau), (dv, dt))_V = (div tau, div dt) + (tau + grad v, dt + grad dv)
                             + alpha^2 [(v, dv) + (tau, dt)]

is factored once, the rectangular element form B_K (test x trial) is
condensed to A_K = B_K^T G_K^{-1} B_K, and the global SPD system
A u = F = sum_K B_K^T G_K^{-1} l_K is solved with a sparse direct
factorization (optionally CG with diagonal preconditioning).  The adjoint
(influence-function) problem shares the same matrix and factorization with
the goal vector as right-hand side.

Local residual and dual test representations are recovered per element:
psi_K = G_K^{-1}(B_K u_K - l_K) and v_K = G_K^{-1} B_K omega_K.  Canonical
local matrices depend only on (element size, orders, alpha) and are cached;
constraints and orientation signs enter through each element's gather
matrix, so elements of equal size share all dense local work.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import basis
from .mesh import SIDES, QuadMesh
from .spaces import TestSpace, TrialSpace, local_layout

# instrumentation: how many primal/dual solves have run (mode-separation
# checks in the driver tests read and reset these)
SOLVE_COUNTS = {"primal": 0, "dual": 0}


def reset_solve_counts() -> None:
    SOLVE_COUNTS["primal"] = 0
    SOLVE_COUNTS["dual"] = 0


_SIDE_NORMALS = {"south": (0.0, -1.0), "east": (1.0, 0.0),
                 "north": (0.0, 1.0), "west": (-1.0, 0.0)}


@lru_cache(maxsize=512)
def _canonical_gram(w: float, h: float, q: int, alpha: float, nq: int):
    """Graph-norm Gram matrix and its Cholesky factor on a w x h element."""
    rule = basis.quadrature_rule(nq)
    tab = basis.tensor_tables(q, nq)
    jac = w * h / 4.0
    wq = rule.w2 * jac
    dx = tab.dxi * (2.0 / w)
    dy = tab.deta * (2.0 / h)
    V = tab.vals
    M = V.T @ (wq[:, None] * V)
    Kx = dx.T @ (wq[:, None] * dx)
    Ky = dy.T @ (wq[:, None] * dy)
    Kxy = dx.T @ (wq[:, None] * dy)
    Ex = V.T @ (wq[:, None] * dx)  # Ex[i, j] = (phi_i, dx phi_j)
    Ey = V.T @ (wq[:, None] * dy)
    m1 = (q + 1) ** 2
    a2 = alpha * alpha
    G = np.zeros((3 * m1, 3 * m1))
    sv, sx, sy = slice(0, m1), slice(m1, 2 * m1), slice(2 * m1, 3 * m1)
    G[sv, sv] = Kx + Ky + a2 * M
    G[sx, sx] = Kx + (1.0 + a2) * M
    G[sy, sy] = Ky + (1.0 + a2) * M
    G[sv, sx] = Ex.T
    G[sx, sv] = Ex
    G[sv, sy] = Ey.T
    G[sy, sv] = Ey
    G[sx, sy] = Kxy
    G[sy, sx] = Kxy.T
    G = 0.5 * (G + G.T)
    try:
        L = sla.cholesky(G, lower=True)
    except sla.LinAlgError as exc:
        raise RuntimeError(
            f"graph-norm Gram matrix is not positive definite on a {w} x {h} "
            f"element (order {q}, alpha {alpha}): {exc}"
        ) from exc
    return G, L


def _side_test_matrix(q: int, side: str, x1: np.ndarray) -> np.ndarray:
    """Scalar test basis evaluated along one side, (npts, (q+1)^2)."""
    V1 = basis.legendre_vals(x1, q)
    ends = np.ones(q + 1)
    alt = (-1.0) ** np.arange(q + 1)
    if side == "south":  # eta = -1, param = xi
        S = V1[:, :, None] * alt[None, None, :]
    elif side == "north":
        S = V1[:, :, None] * ends[None, None, :]
    elif side == "east":  # xi = +1, param = eta
        S = ends[None, :, None] * V1[:, None, :]
    else:  # west, xi = -1
        S = alt[None, :, None] * V1[:, None, :]
    return S.reshape(len(x1), (q + 1) ** 2)


@lru_cache(maxsize=512)
def _canonical_b(w: float, h: float, p: int, dp: int, nq: int) -> np.ndarray:
    """Element form matrix over the canonical local trial layout.

    Rows are broken test dofs [v | tau_x | tau_y] of order q = p + dp; the
    flux-trace columns act in the element-outward orientation.
    """
    q = p + dp
    lay = local_layout(p)
    rule = basis.quadrature_rule(nq)
    ttab = basis.tensor_tables(p, nq)
    vtab = basis.tensor_tables(q, nq)
    jac = w * h / 4.0
    wq = rule.w2 * jac
    dxq = vtab.dxi * (2.0 / w)
    dyq = vtab.deta * (2.0 / h)
    m1 = (q + 1) ** 2
    sv, sx, sy = slice(0, m1), slice(m1, 2 * m1), slice(2 * m1, 3 * m1)
    B = np.zeros((3 * m1, lay.n_loc))
    # (u, div tau) and (sigma, tau + grad v)
    B[sx, lay.u] = dxq.T @ (wq[:, None] * ttab.vals)
    B[sy, lay.u] = dyq.T @ (wq[:, None] * ttab.vals)
    mass = vtab.vals.T @ (wq[:, None] * ttab.vals)
    B[sx, lay.sx] = mass
    B[sy, lay.sy] = mass
    B[sv, lay.sx] = dxq.T @ (wq[:, None] * ttab.vals)
    B[sv, lay.sy] = dyq.T @ (wq[:, None] * ttab.vals)
    # -<uhat, tau . n> and -<sighat, v> over the four sides
    x1, w1 = rule.x1, rule.w1
    nodes = np.array(basis.lobatto_nodes(p))
    N1 = basis.lagrange_matrix(nodes, x1)
    V1p = basis.legendre_vals(x1, p - 1)
    for si, side in enumerate(SIDES):
        nx, ny = _SIDE_NORMALS[side]
        half = (w if side in ("south", "north") else h) / 2.0
        S = _side_test_matrix(q, side, x1)
        SW = S.T * w1[None, :]
        ucols = lay.uhat_side_nodal(si)
        if nx != 0.0:
            B[sx.start + np.arange(m1)[:, None], ucols[None, :]] -= nx * half * (SW @ N1)
        if ny != 0.0:
            B[sy.start + np.arange(m1)[:, None], ucols[None, :]] -= ny * half * (SW @ N1)
        B[np.arange(m1)[:, None], lay.sighat[si][None, :]] -= half * (SW @ V1p)
    return B


@dataclass
class LocalSystem:
    """One element's test Gram, constrained form matrix, and load."""

    gram: np.ndarray
    gram_chol: np.ndarray
    b_local: np.ndarray  # (n_test, len(gids)): canonical B @ gather matrix
    load_local: np.ndarray
    gids: np.ndarray


@dataclass
class GlobalSystem:
    stiffness: sp.csc_matrix
    primal_rhs: np.ndarray
    factor: object  # callable vec -> vec
    load_dual_norm_sq: float  # sum_K ||l_K||^2 in the local dual norms
    method: str


@dataclass
class SolveState:
    """Primal and dual discrete solutions plus per-element test-space data."""

    mesh: QuadMesh
    trial: TrialSpace
    test: TestSpace
    alpha: float
    system: GlobalSystem
    u_coeffs: np.ndarray | None = None
    omega_coeffs: np.ndarray | None = None
    psi_coeffs: dict[int, np.ndarray] = field(default_factory=dict)
    v_coeffs: dict[int, np.ndarray] = field(default_factory=dict)
    energy_sq: dict[int, float] = field(default_factory=dict)

    @property
    def dof_count(self) -> int:
        return self.trial.n_dofs


def element_gram(mesh: QuadMesh, eid: int, test: TestSpace, alpha: float):
    _, _, w, h = mesh.element_box(eid)
    return _canonical_gram(w, h, test.q, alpha, test.quad_n)


def local_gram(mesh: QuadMesh, eid: int, test: TestSpace, alpha: float) -> np.ndarray:
    if alpha <= 0:
        raise ValueError(f"graph-norm parameter alpha must be positive, got {alpha}")
    return element_gram(mesh, eid, test, alpha)[0]


def local_b(mesh: QuadMesh, eid: int, trial: TrialSpace, test: TestSpace) -> np.ndarray:
    """Constrained element form matrix; columns follow trial.edofs[eid].gids."""
    _, _, w, h = mesh.element_box(eid)
    B = _canonical_b(w, h, trial.p, test.dp, trial.quad_n)
    return B @ trial.edofs[eid].W


def local_load(mesh: QuadMesh, eid: int, test: TestSpace, source,
               neumann_flux=None) -> np.ndarray:
    """Element load: (f, v)_K plus prescribed-flux boundary terms.

    A nonzero prescribed outward flux g on a Neumann side enters as
    +<g, v> once the known flux trace moves to the right-hand side.
    """
    rule = basis.quadrature_rule(test.quad_n)
    vtab = basis.tensor_tables(test.q, test.quad_n)
    x0, y0, w, h = mesh.element_box(eid)
    X = x0 + (rule.xi + 1.0) * w / 2.0
    Y = y0 + (rule.eta + 1.0) * h / 2.0
    fv = np.asarray(source(X, Y), dtype=float)
    ell = np.zeros(test.n_loc)
    m1 = test.n_scalar
    ell[:m1] = vtab.vals.T @ (rule.w2 * (w * h / 4.0) * fv)
    if neumann_flux is not None:
        topo = mesh.topology()
        for si, side in enumerate(SIDES):
            sv = topo[eid][side]
            if sv.kind != "boundary" or sv.bc != "neumann":
                continue
            nx, ny = _SIDE_NORMALS[side]
            x1 = rule.x1
            if side in ("south", "north"):
                PX = x0 + (x1 + 1.0) * w / 2.0
                PY = np.full_like(PX, y0 if side == "south" else y0 + h)
                half = w / 2.0
            else:
                PY = y0 + (x1 + 1.0) * h / 2.0
                PX = np.full_like(PY, x0 if side == "west" else x0 + w)
                half = h / 2.0
            g = np.asarray(neumann_flux(PX, PY, nx, ny), dtype=float)
            S = _side_test_matrix(test.q, side, x1)
            ell[:m1] += half * (S.T @ (rule.w1 * g))
    return ell


def build_local_system(mesh: QuadMesh, eid: int, trial: TrialSpace, test: TestSpace,
                       alpha: float, source, neumann_flux=None) -> LocalSystem:
    G, L = element_gram(mesh, eid, test, alpha)
    return LocalSystem(
        gram=G,
        gram_chol=L,
        b_local=local_b(mesh, eid, trial, test),
        load_local=local_load(mesh, eid, test, source, neumann_flux),
        gids=trial.edofs[eid].gids,
    )


def condense_element(local: LocalSystem):
    """Element normal-equation block A_K = B^T G^{-1} B and rhs B^T G^{-1} l."""
    C = sla.solve_triangular(local.gram_chol, local.b_local, lower=True)
    s = sla.solve_triangular(local.gram_chol, local.load_local, lower=True)
    return C.T @ C, C.T @ s


def _factorize(A: sp.csc_matrix, method: str):
    if method == "direct":
        # symmetric mode with diagonal pivoting keeps row order, so the U
        # diagonal carries the pivots and a sign check is a valid
        # positive-definiteness test (a Cholesky-success stand-in)
        lu = spla.splu(A, diag_pivot_thresh=0.0, permc_spec="MMD_AT_PLUS_A",
                       options={"SymmetricMode": True})
        if np.any(lu.U.diagonal() <= 0.0):
            raise RuntimeError(
                "global normal-equation matrix is not positive definite; "
                "this signals an assembly or constraint bug"
            )
        return lu.solve
    if method == "cg":
        dinv = 1.0 / A.diagonal()
        M = spla.LinearOperator(A.shape, matvec=lambda x: dinv * x)

        def solve(b):
            x, info = spla.cg(A, b, rtol=1e-12, atol=0.0, maxiter=20000, M=M)
            if info != 0:
                raise RuntimeError(f"conjugate-gradient solve failed (info={info})")
            return x

        return solve
    raise ValueError(f"unknown solver method '{method}'")


def solve_primal(mesh: QuadMesh, trial: TrialSpace, test: TestSpace, source,
                 alpha: float = 1.0, neumann_flux=None, method: str = "direct",
                 dump_matrix: str | None = None) -> SolveState:
    """Assemble and solve the primal normal equations; recover psi per element."""
    if alpha <= 0:
        raise ValueError(f"graph-norm parameter alpha must be positive, got {alpha}")
    n = trial.n_dofs
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    locals_cache: list[tuple[int, LocalSystem]] = []
    load_dual_sq = 0.0
    for el in mesh.active_elements:
        ls = build_local_system(mesh, el.id, trial, test, alpha, source, neumann_flux)
        A_K, f_K = condense_element(ls)
        g = ls.gids
        rows.append(np.repeat(g, len(g)))
        cols.append(np.tile(g, len(g)))
        vals.append(A_K.ravel())
        rhs[g] += f_K
        s = sla.solve_triangular(ls.gram_chol, ls.load_local, lower=True)
        load_dual_sq += float(s @ s)
        locals_cache.append((el.id, ls))
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsc()
    asym = abs(A - A.T).max()
    scale = abs(A).max()
    if asym > 1e-12 * max(scale, 1.0):
        raise RuntimeError(
            f"assembled stiffness is asymmetric: |A - A^T| = {asym:.3e} vs scale {scale:.3e}"
        )
    A = (A + A.T) * 0.5
    if dump_matrix is not None:
        from scipy.io import mmwrite

        mmwrite(dump_matrix, A)
    factor = _factorize(A, method)
    u = factor(rhs)
    res = np.linalg.norm(A @ u - rhs)
    if res > 1e-10 * max(np.linalg.norm(rhs), 1e-30):
        raise RuntimeError(
            f"primal solve residual {res:.3e} exceeds tolerance "
            f"(rhs norm {np.linalg.norm(rhs):.3e})"
        )
    system = GlobalSystem(
        stiffness=A, primal_rhs=rhs, factor=factor,
        load_dual_norm_sq=load_dual_sq, method=method,
    )
    state = SolveState(mesh=mesh, trial=trial, test=test, alpha=alpha, system=system,
                       u_coeffs=u)
    for eid, ls in locals_cache:
        r = ls.b_local @ u[ls.gids] - ls.load_local
        s = sla.solve_triangular(ls.gram_chol, r, lower=True)
        state.energy_sq[eid] = float(s @ s)
        state.psi_coeffs[eid] = sla.solve_triangular(ls.gram_chol.T, s, lower=False)
    SOLVE_COUNTS["primal"] += 1
    return state


def solve_dual(trial: TrialSpace, test: TestSpace, goal, alpha: float,
               reuse: SolveState) -> SolveState:
    """Solve the adjoint problem with the primal factorization; recover v_K.

    `goal` may be a GoalSpec (assembled here) or a precomputed functional
    vector over the free trial dofs.
    """
    if reuse.trial is not trial or reuse.test is not test:
        raise ValueError("dual solve must reuse the primal solve's spaces")
    if reuse.alpha != alpha:
        raise ValueError(
            f"dual solve alpha {alpha} differs from primal alpha {reuse.alpha}"
        )
    if isinstance(goal, np.ndarray):
        gvec = np.asarray(goal, dtype=float)
        if gvec.shape != (trial.n_dofs,):
            raise ValueError(
                f"goal vector has shape {gvec.shape}, expected ({trial.n_dofs},)"
            )
    else:
        from .goals import goal_load_vector

        gvec = goal_load_vector(goal, trial)
    omega = reuse.system.factor(gvec)
    res = np.linalg.norm(reuse.system.stiffness @ omega - gvec)
    if res > 1e-10 * max(np.linalg.norm(gvec), 1e-30):
        raise RuntimeError(f"dual solve residual {res:.3e} exceeds tolerance")
    reuse.omega_coeffs = omega
    mesh = reuse.mesh
    for el in mesh.active_elements:
        _, L = element_gram(mesh, el.id, test, alpha)
        Bw = local_b(mesh, el.id, trial, test)
        r = Bw @ omega[trial.edofs[el.id].gids]
        s = sla.solve_triangular(L, r, lower=True)
        reuse.v_coeffs[el.id] = sla.solve_triangular(L.T, s, lower=False)
    SOLVE_COUNTS["dual"] += 1
    return reuse


def dense_system(mesh: QuadMesh, trial: TrialSpace, test: TestSpace, alpha: float,
                 source, neumann_flux=None):
    """Monolithic dense (B, G, l) over stacked broken test dofs.

    For small meshes only: the returned triple feeds saddle-point or
    normal-equation oracles that bypass the sparse element-loop path.
    """
    els = mesh.active_elements
    nt = test.n_loc * len(els)
    B = np.zeros((nt, trial.n_dofs))
    G = np.zeros((nt, nt))
    ell = np.zeros(nt)
    offsets = {}
    for k, el in enumerate(els):
        r0 = k * test.n_loc
        offsets[el.id] = r0
        sl = slice(r0, r0 + test.n_loc)
        Gk, _ = element_gram(mesh, el.id, test, alpha)
        G[sl, sl] = Gk
        B[sl, trial.edofs[el.id].gids] = local_b(mesh, el.id, trial, test)
        ell[sl] = local_load(mesh, el.id, test, source, neumann_flux)
    return B, G, ell, offsets
