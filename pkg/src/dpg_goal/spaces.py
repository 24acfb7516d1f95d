"""Trial and broken test spaces on 1-irregular rectangle meshes.

The trial space has four components per the first-order system reformulation:

* field u: discontinuous tensor-Legendre polynomials of order p per element;
* field sigma: two such components (the gradient variable);
* trace uhat: continuous piecewise order-p polynomials on the mesh skeleton
  (nodal on Gauss-Lobatto points; vertex values shared, Dirichlet values
  eliminated);
* trace sighat: per-edge Legendre polynomials of order p-1 carrying the
  normal flux in the edge's global orientation (Neumann values eliminated).

On a 1-irregular mesh the trace dofs of a refined interface live on the
coarse (parent) edge; the fine side's local dofs are slaved to them.  A
slaved nodal value is the parent shape functions evaluated at the node's
position inside the parent edge (midpoint weights (1/2, 1/2) for p = 1), and
a slaved flux expansion is the exact polynomial restriction of the parent
expansion to the half edge.  Because vertices may hang on edges whose own
endpoints hang on still coarser edges, constraint resolution is recursive
(the chain always moves to coarser levels, so it terminates).

Each element gets a gather matrix W with local_coeffs = W @ global_coeffs,
in the canonical local ordering [u | sigma_x | sigma_y | uhat | sighat];
assembly scatters through W^T, which folds constraints and the per-side
orientation signs of sighat in one place.

The broken test space is the order p+dp tensor-Legendre space (a scalar test
function and a two-component vector one per element) and carries no global
coupling at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import basis
from .mesh import SIDE_ORIENTATION_SIGN, SIDES, QuadMesh


@dataclass(frozen=True)
class LocalLayout:
    """Index bookkeeping for the canonical element-local trial vector."""

    p: int
    n1: int  # scalar field block size (p+1)^2
    n_loc: int
    u: slice
    sx: slice
    sy: slice
    corners: tuple[int, int, int, int]  # SW, SE, NE, NW
    uhat_interior: tuple[np.ndarray, ...]  # per side, (p-1) indices
    sighat: tuple[np.ndarray, ...]  # per side, p indices

    def uhat_side_nodal(self, side_idx: int) -> np.ndarray:
        """Local indices of the side's nodal trace dofs in edge order."""
        first_last = ((0, 1), (1, 2), (3, 2), (0, 3))[side_idx]
        c = self.corners
        return np.concatenate(
            (
                [c[first_last[0]]],
                self.uhat_interior[side_idx],
                [c[first_last[1]]],
            )
        ).astype(int)


@lru_cache(maxsize=None)
def local_layout(p: int) -> LocalLayout:
    if p < 1:
        raise ValueError(f"polynomial order p must be >= 1, got {p}")
    n1 = (p + 1) ** 2
    off = 3 * n1
    corners = (off, off + 1, off + 2, off + 3)
    off += 4
    uhat_int = []
    for _ in SIDES:
        uhat_int.append(np.arange(off, off + (p - 1)))
        off += p - 1
    sighat = []
    for _ in SIDES:
        sighat.append(np.arange(off, off + p))
        off += p
    return LocalLayout(
        p=p,
        n1=n1,
        n_loc=off,
        u=slice(0, n1),
        sx=slice(n1, 2 * n1),
        sy=slice(2 * n1, 3 * n1),
        corners=corners,
        uhat_interior=tuple(uhat_int),
        sighat=tuple(sighat),
    )


@lru_cache(maxsize=None)
def sighat_restriction(p: int, child: int) -> np.ndarray:
    """Legendre coefficients of a parent-edge flux restricted to one half.

    Row j, column k holds the P_j coefficient (on the child edge) of the
    parent basis polynomial P_k; exact because restriction does not raise
    the degree.
    """
    x, w = basis.gauss_points(p + 2)
    parent_coord = (x + (2 * child - 1)) / 2.0
    Vc = basis.legendre_vals(x, p - 1)
    Vp = basis.legendre_vals(parent_coord, p - 1)
    scale = (2.0 * np.arange(p) + 1.0) / 2.0
    return scale[:, None] * ((Vc * w[:, None]).T @ Vp)


def _combine(entry_lists, weights) -> list[tuple[int, float]]:
    acc: dict[int, float] = {}
    for ents, w in zip(entry_lists, weights):
        if w == 0.0:
            continue
        for g, c in ents:
            acc[g] = acc.get(g, 0.0) + w * c
    return [(g, c) for g, c in sorted(acc.items()) if abs(c) > 1e-14]


@dataclass
class ElementTrialDofs:
    """Scatter/gather data of one active element.

    `gids` are the distinct global dofs the element touches and `W` maps
    them to the canonical local vector (constraints and sighat orientation
    signs folded in).  `entries` keeps the per-local-dof constraint lists
    for inspection.
    """

    gids: np.ndarray
    W: np.ndarray
    entries: list[list[tuple[int, float]]]


class TrialSpace:
    """Global dof map for the four-component trial space on a mesh."""

    def __init__(self, mesh: QuadMesh, p: int, dp: int = 1):
        if p < 1:
            raise ValueError(f"polynomial order p must be >= 1, got {p}")
        if dp < 1:
            raise ValueError(f"test enrichment dp must be >= 1, got {dp}")
        self.mesh = mesh
        self.p = p
        self.dp = dp
        self.quad_n = p + dp + 2
        self.layout = local_layout(p)
        self._build()

    # The construction walks the topology once, numbers field dofs per
    # element and trace dofs per master entity, then resolves constraint
    # entries for every element-local trace dof.
    def _build(self):
        mesh, p = self.mesh, self.p
        topo = mesh.topology()
        active = mesh.active_elements
        n1 = self.layout.n1

        gid = 0
        self.u_gids: dict[int, np.ndarray] = {}
        self.sigma_gids: dict[int, np.ndarray] = {}
        for el in active:
            self.u_gids[el.id] = np.arange(gid, gid + n1)
            gid += n1
            self.sigma_gids[el.id] = np.arange(gid, gid + 2 * n1)
            gid += 2 * n1
        self.n_field_dofs = gid

        master_bc: dict[int, str] = {}
        hanging: dict[int, int] = {}  # hanging vertex -> parent edge
        for views in topo.values():
            for sv in views.values():
                if sv.kind != "slave":
                    master_bc[sv.edge] = sv.bc
                if sv.kind == "master":
                    hanging[mesh.edges[sv.child_edges[0]].v1] = sv.edge

        dirichlet_v: set[int] = set()
        for views in topo.values():
            for sv in views.values():
                if sv.kind == "boundary" and sv.bc == "dirichlet":
                    e = mesh.edges[sv.edge]
                    dirichlet_v.update((e.v0, e.v1))

        used_vertices = sorted({v for el in active for v in el.vertices})
        self.vertex_gid: dict[int, int] = {}
        for v in used_vertices:
            if v not in hanging and v not in dirichlet_v:
                self.vertex_gid[v] = gid
                gid += 1

        self.uhat_edge_gids: dict[int, np.ndarray] = {}
        if p >= 2:
            for eid in sorted(master_bc):
                if master_bc[eid] != "dirichlet":
                    self.uhat_edge_gids[eid] = np.arange(gid, gid + (p - 1))
                    gid += p - 1
        self.n_uhat_dofs = gid - self.n_field_dofs

        self.sighat_edge_gids: dict[int, np.ndarray] = {}
        for eid in sorted(master_bc):
            if master_bc[eid] != "neumann":
                self.sighat_edge_gids[eid] = np.arange(gid, gid + p)
                gid += p
        self.n_sighat_dofs = gid - self.n_field_dofs - self.n_uhat_dofs
        self.n_dofs = gid

        nodes = np.array(basis.lobatto_nodes(p))
        mid_weights = basis.lagrange_matrix(nodes, np.array([0.0]))[0]

        vertex_memo: dict[int, list[tuple[int, float]]] = {}

        def vertex_entry(v: int) -> list[tuple[int, float]]:
            if v in vertex_memo:
                return vertex_memo[v]
            if v in dirichlet_v:
                val: list[tuple[int, float]] = []
            elif v in hanging:
                val = _combine(edge_nodal_entries(hanging[v]), mid_weights)
            else:
                val = [(self.vertex_gid[v], 1.0)]
            vertex_memo[v] = val
            return val

        def edge_nodal_entries(eid: int) -> list[list[tuple[int, float]]]:
            """Entries of a master edge's p+1 nodal dofs, in edge order."""
            e = mesh.edges[eid]
            if eid in self.uhat_edge_gids:
                interior = [[(g, 1.0)] for g in self.uhat_edge_gids[eid]]
            else:
                interior = [[] for _ in range(p - 1)]
            return [vertex_entry(e.v0)] + interior + [vertex_entry(e.v1)]

        self._edge_nodal_entries = edge_nodal_entries
        self._vertex_entry = vertex_entry

        interior_nodes = nodes[1:-1]
        self.edofs: dict[int, ElementTrialDofs] = {}
        for el in active:
            entries: list[list[tuple[int, float]]] = []
            for g in self.u_gids[el.id]:
                entries.append([(int(g), 1.0)])
            for g in self.sigma_gids[el.id]:
                entries.append([(int(g), 1.0)])
            for v in el.vertices:
                entries.append(vertex_entry(v))
            views = topo[el.id]
            for side in SIDES:
                sv = views[side]
                if sv.kind != "slave":
                    entries.extend(edge_nodal_entries(sv.edge)[1:-1])
                else:
                    parent = mesh.edges[sv.edge].parent
                    pe = edge_nodal_entries(parent)
                    shift = 2 * sv.slave_position - 1
                    for xi in interior_nodes:
                        w = basis.lagrange_matrix(nodes, np.array([(xi + shift) / 2.0]))[0]
                        entries.append(_combine(pe, w))
            for side in SIDES:
                sv = views[side]
                sign = SIDE_ORIENTATION_SIGN[side]
                if sv.kind != "slave":
                    gids = self.sighat_edge_gids.get(sv.edge)
                    if gids is None:
                        entries.extend([[] for _ in range(p)])
                    else:
                        entries.extend([[(int(g), sign)] for g in gids])
                else:
                    parent = mesh.edges[sv.edge].parent
                    pgids = self.sighat_edge_gids.get(parent)
                    if pgids is None:
                        entries.extend([[] for _ in range(p)])
                    else:
                        M = sighat_restriction(p, sv.slave_position)
                        for j in range(p):
                            row = [(int(pgids[k]), sign * M[j, k]) for k in range(p)
                                   if abs(M[j, k]) > 1e-14]
                            entries.append(row)

            touched = sorted({g for ent in entries for g, _ in ent})
            pos = {g: i for i, g in enumerate(touched)}
            W = np.zeros((self.layout.n_loc, len(touched)))
            for i, ent in enumerate(entries):
                for g, w in ent:
                    W[i, pos[g]] += w
            self.edofs[el.id] = ElementTrialDofs(
                gids=np.array(touched, dtype=int), W=W, entries=entries
            )

    def gather(self, eid: int, coeffs: np.ndarray) -> np.ndarray:
        """Element-local coefficients (canonical layout) of a global vector."""
        ed = self.edofs[eid]
        return ed.W @ coeffs[ed.gids]

    def dof_counts(self) -> dict[str, int]:
        return {
            "field": self.n_field_dofs,
            "uhat": self.n_uhat_dofs,
            "sighat": self.n_sighat_dofs,
            "total": self.n_dofs,
        }


@dataclass(frozen=True)
class TestSpace:
    """Broken tensor-Legendre test space of order p+dp (no global dofs)."""

    p: int
    dp: int

    @property
    def q(self) -> int:
        return self.p + self.dp

    @property
    def n_scalar(self) -> int:
        return (self.q + 1) ** 2

    @property
    def n_loc(self) -> int:
        return 3 * self.n_scalar

    @property
    def quad_n(self) -> int:
        return self.p + self.dp + 2


def build_trial_space(mesh: QuadMesh, p: int, dp: int = 1) -> TrialSpace:
    return TrialSpace(mesh, p, dp)


def build_test_space(mesh: QuadMesh, p: int, dp: int = 1) -> TestSpace:
    if dp < 1:
        raise ValueError(f"test enrichment dp must be >= 1, got {dp}")
    return TestSpace(p=p, dp=dp)


# -- interpolation ----------------------------------------------------------


def _edge_axis(mesh: QuadMesh, eid: int) -> tuple[bool, np.ndarray, np.ndarray]:
    """(is_vertical, start point, direction vector) of an edge."""
    e = mesh.edges[eid]
    p0 = np.array(mesh.vertices[e.v0])
    p1 = np.array(mesh.vertices[e.v1])
    return bool(abs(p1[0] - p0[0]) < abs(p1[1] - p0[1])), p0, p1 - p0


def interpolate_manufactured(trial: TrialSpace, exact) -> np.ndarray:
    """Projection of an exact solution onto the free dofs of the trial space.

    `exact` provides callables u(x, y) and grad(x, y) (the latter returning
    a pair of arrays).  Fields are L2-projected elementwise, the nodal trace
    takes vertex values plus a constrained edgewise L2 fit, and the flux
    trace is the edgewise Legendre projection of grad u . n in the edge's
    orientation.
    """
    mesh, p = trial.mesh, trial.p
    vec = np.zeros(trial.n_dofs)
    rule = basis.quadrature_rule(trial.quad_n)
    tab = basis.tensor_tables(p, trial.quad_n)
    leg_scale_1d = (2.0 * np.arange(p + 1) + 1.0) / 2.0
    scale2 = np.outer(leg_scale_1d, leg_scale_1d).ravel()

    for el in mesh.active_elements:
        x0, y0, w, h = mesh.element_box(el.id)
        X = x0 + (rule.xi + 1.0) * w / 2.0
        Y = y0 + (rule.eta + 1.0) * h / 2.0
        uv = np.asarray(exact.u(X, Y), dtype=float)
        gx, gy = exact.grad(X, Y)
        vec[trial.u_gids[el.id]] = scale2 * (tab.vals.T @ (rule.w2 * uv))
        n1 = trial.layout.n1
        vec[trial.sigma_gids[el.id][:n1]] = scale2 * (tab.vals.T @ (rule.w2 * np.asarray(gx)))
        vec[trial.sigma_gids[el.id][n1:]] = scale2 * (tab.vals.T @ (rule.w2 * np.asarray(gy)))

    for v, g in trial.vertex_gid.items():
        vec[g] = float(exact.u(*mesh.vertices[v]))

    nodes = np.array(basis.lobatto_nodes(p))
    x1, w1 = rule.x1, rule.w1
    N = basis.lagrange_matrix(nodes, x1)  # (nq, p+1)
    M_full = (N * w1[:, None]).T @ N
    for eid, gids in trial.uhat_edge_gids.items():
        _, p0, d = _edge_axis(mesh, eid)
        pts = p0[None, :] + (x1[:, None] + 1.0) / 2.0 * d[None, :]
        fvals = np.asarray(exact.u(pts[:, 0], pts[:, 1]), dtype=float)
        bvec = N.T @ (w1 * fvals)
        e = mesh.edges[eid]
        cE = np.array([float(exact.u(*mesh.vertices[e.v0])),
                       float(exact.u(*mesh.vertices[e.v1]))])
        II = slice(1, p)
        rhs = bvec[II] - M_full[II, 0] * cE[0] - M_full[II, p] * cE[1]
        vec[gids] = np.linalg.solve(M_full[II, II.start:II.stop], rhs)

    Vleg = basis.legendre_vals(x1, p - 1)
    scale1 = (2.0 * np.arange(p) + 1.0) / 2.0
    for eid, gids in trial.sighat_edge_gids.items():
        vertical, p0, d = _edge_axis(mesh, eid)
        pts = p0[None, :] + (x1[:, None] + 1.0) / 2.0 * d[None, :]
        gx, gy = exact.grad(pts[:, 0], pts[:, 1])
        flux = np.asarray(gx if vertical else gy, dtype=float)
        vec[gids] = scale1 * (Vleg.T @ (w1 * flux))
    return vec
