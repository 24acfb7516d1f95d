"""Element refinement indicators: primal energy and the three adjoint families.

The primal (energy) indicator is the local dual norm of the residual,
available for free from the solve.  The adjoint indicators measure the
error of the influence-function approximation in three ways:

* explicit: strong-form residuals of the adjoint system evaluated from the
  lifted dual test function (v, tau) — volume terms ||div tau - g1||_K and
  ||tau + grad v - g2||_K plus h_K-weighted squared face jumps of the
  normal flux and of the trace value (the latter with its tangential
  derivative), with boundary data folded into the boundary faces;
* implicit: enriched element-local adjoint solves with the trace unknown
  suppressed (artificial homogeneous condition that removes the local
  kernel; the enrichment raises the field order by one and the test order
  with it);
* ad hoc: the plain L2 distance between the volumetric goal densities and
  the computed influence fields, meaningful only for volume goals — it
  does not tend to zero under refinement and is used as a marker, not an
  estimate.

Interior faces contribute to both owners, each weighted by its own element
size; on refined interfaces the integration runs over the fine (child)
edges with the coarse side's polynomial evaluated at mapped coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from . import basis, goals
from .mesh import SIDES, QuadMesh
from .solver import _canonical_b, _canonical_gram, SolveState
from .spaces import local_layout


@dataclass(frozen=True)
class IndicatorField:
    """Nonnegative per-element indicator values, aligned with `ids`."""

    ids: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if len(self.ids) != len(self.values):
            raise ValueError("indicator ids and values length mismatch")
        if np.any(np.asarray(self.values) < 0.0):
            raise ValueError("indicator values must be nonnegative")

    @property
    def total(self) -> float:
        return float(np.sqrt(np.sum(np.asarray(self.values) ** 2)))

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self.ids, self.values)}


def _field(state: SolveState, acc: dict[int, float], kind: str) -> IndicatorField:
    ids = np.array([el.id for el in state.mesh.active_elements], dtype=int)
    vals = np.sqrt(np.maximum([acc[i] for i in ids], 0.0))
    return IndicatorField(ids=ids, values=vals, kind=kind)


def energy_indicators(state: SolveState) -> IndicatorField:
    """Local dual-norm residuals psi_K^T G_K psi_K of the primal solve."""
    if state.u_coeffs is None:
        raise ValueError("energy indicators require a completed primal solve")
    return _field(state, state.energy_sq, "energy")


# -- explicit adjoint indicators ---------------------------------------------


def _test_eval(state: SolveState, eid: int, px: np.ndarray, py: np.ndarray):
    """Dual test function (v, tau) and grad v at physical points of element."""
    q = state.test.q
    m1 = (q + 1) ** 2
    x0, y0, w, h = state.mesh.element_box(eid)
    xi = 2.0 * (px - x0) / w - 1.0
    eta = 2.0 * (py - y0) / h - 1.0
    c = state.v_coeffs[eid]
    v = basis.tensor_eval(q, c[:m1], xi, eta)
    gxi, geta = basis.tensor_eval_grad(q, c[:m1], xi, eta)
    tx = basis.tensor_eval(q, c[m1:2 * m1], xi, eta)
    ty = basis.tensor_eval(q, c[2 * m1:], xi, eta)
    return v, tx, ty, gxi * 2.0 / w, geta * 2.0 / h


def _edge_points(mesh: QuadMesh, edge_id: int, t: np.ndarray):
    e = mesh.edges[edge_id]
    p0 = np.array(mesh.vertices[e.v0])
    p1 = np.array(mesh.vertices[e.v1])
    pts = p0[None, :] + (t[:, None] + 1.0) / 2.0 * (p1 - p0)[None, :]
    length = float(np.hypot(*(p1 - p0)))
    vertical = abs(p1[0] - p0[0]) < abs(p1[1] - p0[1])
    tangent = (0.0, 1.0) if vertical else (1.0, 0.0)
    return pts[:, 0], pts[:, 1], length, tangent


def _g4_tangential(goal: goals.GoalSpec, px, py, tangent):
    """Tangential derivative of the flux weight (analytic if provided)."""
    dt_fn = getattr(goal, "g4_hat_dt", None)
    if dt_fn is not None:
        return np.asarray(dt_fn(px, py), dtype=float)
    eps = 1e-7
    f = goal.g4_hat
    return (
        np.asarray(f(px + eps * tangent[0], py + eps * tangent[1]), dtype=float)
        - np.asarray(f(px - eps * tangent[0], py - eps * tangent[1]), dtype=float)
    ) / (2.0 * eps)


def explicit_star_indicators(state: SolveState, goal: goals.GoalSpec) -> IndicatorField:
    """Strong-form adjoint residual indicators from the lifted dual solution."""
    if state.omega_coeffs is None:
        raise ValueError("explicit adjoint indicators require a completed dual solve")
    mesh, test = state.mesh, state.test
    rule = basis.quadrature_rule(test.quad_n)
    vtab = basis.tensor_tables(test.q, test.quad_n)
    m1 = test.n_scalar
    # composite 2-panel edge rule: boundary weights may kink mid-edge
    xc = np.concatenate(((rule.x1 - 1.0) / 2.0, (rule.x1 + 1.0) / 2.0))
    wc = np.concatenate((rule.w1 / 2.0, rule.w1 / 2.0))

    acc = {el.id: 0.0 for el in mesh.active_elements}
    diam = {el.id: mesh.element_diameter(el.id) for el in mesh.active_elements}

    # volume residuals of the adjoint first-order system
    for el in mesh.active_elements:
        x0, y0, w, h = mesh.element_box(el.id)
        X = x0 + (rule.xi + 1.0) * w / 2.0
        Y = y0 + (rule.eta + 1.0) * h / 2.0
        jac = w * h / 4.0
        c = state.v_coeffs[el.id]
        dx = vtab.dxi * (2.0 / w)
        dy = vtab.deta * (2.0 / h)
        div_tau = dx @ c[m1:2 * m1] + dy @ c[2 * m1:]
        r1 = div_tau
        g1 = goals.density_values(goal.g1, el.id, X, Y)
        if g1 is not None:
            r1 = r1 - g1
        r2x = vtab.vals @ c[m1:2 * m1] + dx @ c[:m1]
        g2x = goals.density_values(goal.g2x, el.id, X, Y)
        if g2x is not None:
            r2x = r2x - g2x
        r2y = vtab.vals @ c[2 * m1:] + dy @ c[:m1]
        g2y = goals.density_values(goal.g2y, el.id, X, Y)
        if g2y is not None:
            r2y = r2y - g2y
        acc[el.id] += jac * float(rule.w2 @ (r1 ** 2 + r2x ** 2 + r2y ** 2))

    # face jumps, each interface visited once and credited to both owners
    topo = mesh.topology()
    for el in mesh.active_elements:
        for side, sv in topo[el.id].items():
            nx, ny = {"south": (0, -1), "east": (1, 0),
                      "north": (0, 1), "west": (-1, 0)}[side]
            if sv.kind == "boundary":
                px, py, length, tangent = _edge_points(mesh, sv.edge, xc)
                v, tx, ty, gx, gy = _test_eval(state, el.id, px, py)
                if sv.bc == "neumann":
                    jn = tx * nx + ty * ny
                    if goal.g3_hat is not None:
                        jn = jn + np.asarray(goal.g3_hat(px, py), dtype=float)
                    acc[el.id] += diam[el.id] * length / 2.0 * float(wc @ jn ** 2)
                else:
                    jd = v.copy()
                    jdt = gx * tangent[0] + gy * tangent[1]
                    if goal.g4_hat is not None:
                        jd = jd + np.asarray(goal.g4_hat(px, py), dtype=float)
                        jdt = jdt + _g4_tangential(goal, px, py, tangent)
                    acc[el.id] += diam[el.id] * length / 2.0 * float(
                        wc @ (jd ** 2 + jdt ** 2))
                continue
            if sv.kind == "slave":
                continue  # handled from the coarse (master) owner
            if sv.kind == "conforming" and sv.neighbor < el.id:
                continue  # handled from the lower-id owner
            pairs = (
                [(sv.edge, sv.neighbor)]
                if sv.kind == "conforming"
                else list(zip(sv.child_edges, sv.child_neighbors))
            )
            for edge_id, nb in pairs:
                px, py, length, tangent = _edge_points(mesh, edge_id, xc)
                v1, tx1, ty1, gx1, gy1 = _test_eval(state, el.id, px, py)
                v2, tx2, ty2, gx2, gy2 = _test_eval(state, nb, px, py)
                jn = (tx1 - tx2) * nx + (ty1 - ty2) * ny
                jd = v1 - v2
                jdt = (gx1 - gx2) * tangent[0] + (gy1 - gy2) * tangent[1]
                face = length / 2.0 * float(wc @ (jn ** 2 + jd ** 2 + jdt ** 2))
                acc[el.id] += diam[el.id] * face
                acc[nb] += diam[nb] * face
    return _field(state, acc, "star_explicit")


# -- implicit adjoint indicators ---------------------------------------------


@lru_cache(maxsize=512)
def _enriched_local(w: float, h: float, P: int, dp: int, alpha: float,
                    neumann_sides: frozenset):
    """Cached enriched local adjoint system with the trace kernel removed.

    Keeps field and flux-trace columns (minus flux columns on genuine
    Neumann sides); all nodal-trace columns are dropped, which pins the
    local harmonic kernel.
    """
    nq = P + dp + 2
    Q = P + dp
    _, L = _canonical_gram(w, h, Q, alpha, nq)
    B = _canonical_b(w, h, P, dp, nq)
    lay = local_layout(P)
    keep = list(range(3 * lay.n1))
    for si in range(4):
        if si not in neumann_sides:
            keep.extend(lay.sighat[si].tolist())
    keep = np.array(keep, dtype=int)
    Bk = B[:, keep]
    C = sla.solve_triangular(L, Bk, lower=True)
    A = C.T @ C
    try:
        cho = sla.cho_factor(A)
    except sla.LinAlgError:
        # last-resort regularization: pin the mean of the local field mode
        pin = np.zeros(len(keep))
        pin[0] = 1.0  # constant mode of the u block is the first column
        rho = np.trace(A) / len(keep)
        try:
            cho = sla.cho_factor(A + rho * np.outer(pin, pin))
        except sla.LinAlgError as exc:
            raise RuntimeError(
                f"enriched local adjoint system singular on a {w} x {h} "
                f"element even after kernel removal and mean pinning: {exc}"
            ) from exc
    return L, Bk, cho, keep, lay


def _local_goal_vector(goal: goals.GoalSpec, mesh: QuadMesh, eid: int, P: int,
                       nq: int, views) -> np.ndarray:
    """Goal functional on the enriched canonical local layout.

    Nodal-trace data cannot act once that block is suppressed, so a nonzero
    g3_hat silently drops here (an accepted pollution of the local
    estimate); the flux-trace weight enters on genuine Dirichlet sides.
    """
    lay = local_layout(P)
    rule = basis.quadrature_rule(nq)
    tab = basis.tensor_tables(P, nq)
    x0, y0, w, h = mesh.element_box(eid)
    X = x0 + (rule.xi + 1.0) * w / 2.0
    Y = y0 + (rule.eta + 1.0) * h / 2.0
    jac = w * h / 4.0
    loc = np.zeros(lay.n_loc)
    for density, block in ((goal.g1, lay.u), (goal.g2x, lay.sx), (goal.g2y, lay.sy)):
        gv = goals.density_values(density, eid, X, Y)
        if gv is not None:
            loc[block] = jac * (tab.vals.T @ (rule.w2 * gv))
    if goal.g4_hat is not None:
        xc = np.concatenate(((rule.x1 - 1.0) / 2.0, (rule.x1 + 1.0) / 2.0))
        wc = np.concatenate((rule.w1 / 2.0, rule.w1 / 2.0))
        V1 = basis.legendre_vals(xc, P - 1)
        for si, side in enumerate(SIDES):
            sv = views[side]
            if sv.kind != "boundary" or sv.bc != "dirichlet":
                continue
            px, py, length, _ = _edge_points(mesh, sv.edge, xc)
            gv = np.asarray(goal.g4_hat(px, py), dtype=float)
            loc[lay.sighat[si]] += length / 2.0 * (V1.T @ (wc * gv))
    return loc


def _neighbor_trace_pairing(state: SolveState, eid: int, views, P: int,
                            nq: int) -> dict[int, np.ndarray]:
    """Edge moments of the neighboring v against this element's flux traces.

    A flux-trace unknown on an interior face belongs to both neighbors; the
    residual restricted to it therefore pairs against the jump of v, not
    against this element's v alone.  Returns, per local side index, the
    integrals (|F|/2) int P_j(t) v_neighbor for subtraction from the local
    right-hand side (the own-element half comes out of the B matrix).
    """
    mesh = state.mesh
    rule = basis.quadrature_rule(nq)
    xc = np.concatenate(((rule.x1 - 1.0) / 2.0, (rule.x1 + 1.0) / 2.0))
    wc = np.concatenate((rule.w1 / 2.0, rule.w1 / 2.0))
    out: dict[int, np.ndarray] = {}
    for si, side in enumerate(SIDES):
        sv = views[side]
        if sv.kind == "boundary":
            continue
        if sv.kind == "master":
            # children cover the side; map child params into the parent's
            moments = np.zeros(P)
            for c, (edge_id, nb) in enumerate(zip(sv.child_edges,
                                                  sv.child_neighbors)):
                px, py, length, _ = _edge_points(mesh, edge_id, xc)
                vn = _test_eval(state, nb, px, py)[0]
                tpar = (xc + (2 * c - 1)) / 2.0
                V1 = basis.legendre_vals(tpar, P - 1)
                moments += length / 2.0 * (V1.T @ (wc * vn))
            out[si] = moments
            continue
        edge_id = sv.edge
        nb = sv.neighbor
        px, py, length, _ = _edge_points(mesh, edge_id, xc)
        vn = _test_eval(state, nb, px, py)[0]
        V1 = basis.legendre_vals(xc, P - 1)
        out[si] = length / 2.0 * (V1.T @ (wc * vn))
    return out


def implicit_star_indicators(state: SolveState, goal: goals.GoalSpec,
                             P: int | None = None,
                             dp: int | None = None) -> IndicatorField:
    """Enriched element-local adjoint residual solves."""
    if state.omega_coeffs is None:
        raise ValueError("implicit adjoint indicators require a completed dual solve")
    mesh, trial, test = state.mesh, state.trial, state.test
    P = trial.p + 1 if P is None else P
    dp = trial.dp if dp is None else dp
    Q = P + dp
    nq = P + dp + 2
    q = test.q
    emb = basis.embed_tensor(q, Q)
    m1_small = (q + 1) ** 2
    m1_big = (Q + 1) ** 2
    topo = mesh.topology()
    acc: dict[int, float] = {}
    for el in mesh.active_elements:
        views = topo[el.id]
        nmask = frozenset(
            si for si, side in enumerate(SIDES)
            if views[side].kind == "boundary" and views[side].bc == "neumann"
        )
        _, _, w, h = mesh.element_box(el.id)
        try:
            L, Bk, cho, keep, lay = _enriched_local(w, h, P, dp, state.alpha, nmask)
        except RuntimeError as exc:
            raise RuntimeError(f"element {el.id}: {exc}") from exc
        v_small = state.v_coeffs[el.id]
        v_big = np.zeros(3 * m1_big)
        for blk in range(3):
            v_big[blk * m1_big + emb] = v_small[blk * m1_small:(blk + 1) * m1_small]
        rhs = _local_goal_vector(goal, mesh, el.id, P, nq, views)[keep] - Bk.T @ v_big
        pos = {li: ki for ki, li in enumerate(keep)}
        for si, moments in _neighbor_trace_pairing(state, el.id, views, P, nq).items():
            idx = [pos[li] for li in lay.sighat[si]]
            rhs[idx] -= moments
        eps = sla.cho_solve(cho, rhs)
        acc[el.id] = max(float(eps @ rhs), 0.0)
    return _field(state, acc, "star_implicit")


# -- ad hoc adjoint indicators -----------------------------------------------


def adhoc_star_indicators(state: SolveState, goal: goals.GoalSpec) -> IndicatorField:
    """L2 distance between the volume goal densities and the influence fields."""
    if state.omega_coeffs is None:
        raise ValueError("ad hoc adjoint indicators require a completed dual solve")
    if goal.g3_hat is not None or goal.g4_hat is not None:
        raise ValueError(
            f"goal '{goal.name}' has boundary-trace data; the ad hoc indicator "
            "is only meaningful for volume densities — switch to the goal's "
            "mesh-dependent volumetric companion (see goals.mesh_dependent_update)"
        )
    mesh, trial = state.mesh, state.trial
    lay = trial.layout
    rule = basis.quadrature_rule(trial.quad_n)
    ttab = basis.tensor_tables(trial.p, trial.quad_n)
    acc: dict[int, float] = {}
    for el in mesh.active_elements:
        x0, y0, w, h = mesh.element_box(el.id)
        X = x0 + (rule.xi + 1.0) * w / 2.0
        Y = y0 + (rule.eta + 1.0) * h / 2.0
        jac = w * h / 4.0
        loc = trial.gather(el.id, state.omega_coeffs)
        total = 0.0
        for density, block in ((goal.g1, lay.u), (goal.g2x, lay.sx),
                               (goal.g2y, lay.sy)):
            om = ttab.vals @ loc[block]
            gv = goals.density_values(density, el.id, X, Y)
            diff = om if gv is None else om - gv
            total += jac * float(rule.w2 @ diff ** 2)
        acc[el.id] = total
    return _field(state, acc, "star_adhoc")


def product_indicators(primal: IndicatorField, dual: IndicatorField) -> IndicatorField:
    """Elementwise product of primal and adjoint indicators (marking weights)."""
    if len(primal.ids) != len(dual.ids) or not np.array_equal(primal.ids, dual.ids):
        raise ValueError("indicator fields live on different element sets")
    return IndicatorField(
        ids=primal.ids.copy(),
        values=np.asarray(primal.values) * np.asarray(dual.values),
        kind="product",
    )
