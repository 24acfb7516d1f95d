"""Goal functionals, the manufactured solution, and reference QoI values.

A linear quantity of interest acts on the four solution components as

    G(w) = (g1, u) + (g2, sigma) + <g3_hat, uhat>_GN + <g4_hat, sighat>_GD,

where the flux-trace pairing uses the outward orientation of sighat.  The
catalog holds the five named quantities of interest driven by the config
file.  Some of them need companions:

* a mesh-dependent volumetric surrogate for the ad hoc indicator, which is
  only derived for volume goals (density 1/h_{K,x} on the band of elements
  touching the boundary segment, so that the functional limits to the
  boundary average as the band thins);
* a mollified ramp for the boundary-flux goal, because the raw indicator
  weight is discontinuous and not an admissible dual load, while the
  reported QoI remains the plain flux average through the segment.

The manufactured solution is u(x, y) = f(x/4) f(y) on [0,4] x [0,1] with
f(t) = t (1 - t) (t/4 + (1 - 4t)^2); it vanishes on the whole boundary, and
its normal derivative on x = 0 is nonzero, so mixed-condition runs impose
the matching inhomogeneous flux data rather than a homogeneous one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import basis
from .mesh import SIDES, BoundarySpec, QuadMesh
from .spaces import TrialSpace

# f(t) = t - (35/4) t^2 + (95/4) t^3 - 16 t^4, expanded; all coefficients
# are exact in binary floating point.
_F = (0.0, 1.0, -8.75, 23.75, -16.0)
_FP = (1.0, -17.5, 71.25, -64.0)
_FPP = (-17.5, 142.5, -192.0)


def _horner(coeffs, t):
    acc = np.zeros_like(t)
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


class ManufacturedSolution:
    """Closed-form reference solution of -lap(u) = source on [0,4] x [0,1]."""

    domain = ((0.0, 4.0), (0.0, 1.0))

    def profile(self, t):
        return _horner(_F, np.asarray(t, dtype=float))

    def profile_d1(self, t):
        return _horner(_FP, np.asarray(t, dtype=float))

    def profile_d2(self, t):
        return _horner(_FPP, np.asarray(t, dtype=float))

    def u(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.profile(x / 4.0) * self.profile(y)

    def grad(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (
            0.25 * self.profile_d1(x / 4.0) * self.profile(y),
            self.profile(x / 4.0) * self.profile_d1(y),
        )

    def laplacian(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (
            self.profile_d2(x / 4.0) / 16.0 * self.profile(y)
            + self.profile(x / 4.0) * self.profile_d2(y)
        )

    def source(self, x, y):
        return -self.laplacian(x, y)

    def neumann_flux(self, x, y, nx, ny):
        """Outward flux grad(u) . n of the reference solution."""
        gx, gy = self.grad(x, y)
        return gx * nx + gy * ny


@dataclass(frozen=True)
class ElementConstant:
    """Piecewise-per-element density; elements not listed carry zero."""

    values: tuple  # tuple of (element id, value) pairs for hashability

    def lookup(self) -> dict[int, float]:
        return dict(self.values)


@dataclass(frozen=True)
class MeshRegion:
    """Region descriptor for mesh-dependent goal densities."""

    kind: str  # "boundary_band" or "point"
    segment: str | None = None  # e.g. "x=0"
    point: tuple[float, float] | None = None
    component: str = "g1"  # which density carries the weight: g1 or g2x


@dataclass(frozen=True)
class GoalSpec:
    """One concrete linear functional on the trial space.

    Densities may be callables of (x, y) arrays or ElementConstant tables;
    g2 is a pair of scalar densities.  g4_hat, when nonzero, must be
    continuous along the Dirichlet boundary and vanish where the Dirichlet
    part meets the Neumann part (discontinuous flux weights are not bounded
    on the trace space and must be mollified first).
    """

    name: str
    g1: object = None
    g2x: object = None
    g2y: object = None
    g3_hat: object = None
    g4_hat: object = None
    mesh_dependent: bool = False
    region: MeshRegion | None = None

    def is_zero(self) -> bool:
        return all(
            d is None for d in (self.g1, self.g2x, self.g2y, self.g3_hat, self.g4_hat)
        )


@dataclass(frozen=True)
class NamedGoal:
    """A catalog entry: the measured QoI plus its solver-facing companions."""

    name: str
    bc: BoundarySpec
    qoi: GoalSpec
    dual: GoalSpec  # load of the adjoint solve and the explicit/implicit indicators
    adhoc: GoalSpec  # volumetric companion for the ad hoc indicator
    exact: float  # reference value of the measured QoI on the manufactured solution
    normalize_by_initial: bool  # reference value 0 -> scale errors by the first iterate
    qoi_mode: str = "functional"  # or "flux_average"


def _chi_left(x, y):
    return np.where(np.asarray(x, dtype=float) <= 1.0 + 1e-12, 1.0, 0.0)


def _ones_edge(x, y):
    return np.ones_like(np.asarray(x, dtype=float))


def _ramp_hat(x, y):
    """Mollified flux weight on the segment x = 0: hat in y peaking at 1/2.

    Ramp width 1/2 = half the segment (one initial-mesh edge spans the whole
    segment, so the half-length cap binds); continuous on the boundary loop,
    vanishing at the segment corners and identically zero off the segment.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hat = np.maximum(0.0, 1.0 - 2.0 * np.abs(y - 0.5))
    return np.where(np.abs(x) < 1e-12, hat, 0.0)


def _panel_gauss_2d(fn, domain, panels, order) -> float:
    (x0, x1), (y0, y1) = domain
    g, w = basis.gauss_points(order)
    xs = np.linspace(x0, x1, panels + 1)
    ys = np.linspace(y0, y1, panels + 1)
    total = 0.0
    for i in range(panels):
        hx = xs[i + 1] - xs[i]
        X = xs[i] + (g + 1.0) * hx / 2.0
        for j in range(panels):
            hy = ys[j + 1] - ys[j]
            Y = ys[j] + (g + 1.0) * hy / 2.0
            vals = fn(X[:, None], Y[None, :])
            total += hx * hy / 4.0 * (w[:, None] * w[None, :] * vals).sum()
    return total


def _panel_gauss_1d(fn, a, b, panels, order) -> float:
    g, w = basis.gauss_points(order)
    ts = np.linspace(a, b, panels + 1)
    total = 0.0
    for i in range(panels):
        h = ts[i + 1] - ts[i]
        T = ts[i] + (g + 1.0) * h / 2.0
        total += h / 2.0 * (w * fn(T)).sum()
    return total


_MS = ManufacturedSolution()


def catalog() -> dict[str, NamedGoal]:
    """The five named quantities of interest, keyed by config name."""
    all_dirichlet = BoundarySpec(neumann=None)
    left_neumann = BoundarySpec(neumann="x=0")

    sub_t = GoalSpec(name="subdomain_temperature", g1=_chi_left)
    sub_f = GoalSpec(name="subdomain_flux_x", g2x=_chi_left)
    bnd_t = GoalSpec(name="boundary_temperature", g3_hat=_ones_edge)
    bnd_t_adhoc = GoalSpec(
        name="boundary_temperature_adhoc",
        mesh_dependent=True,
        region=MeshRegion(kind="boundary_band", segment="x=0", component="g1"),
    )
    bnd_f_dual = GoalSpec(name="boundary_flux_ramp", g4_hat=_ramp_hat)
    bnd_f_adhoc = GoalSpec(
        name="boundary_flux_adhoc",
        mesh_dependent=True,
        region=MeshRegion(kind="boundary_band", segment="x=0", component="g2x"),
    )
    point_t = GoalSpec(
        name="point_temperature",
        mesh_dependent=True,
        region=MeshRegion(kind="point", point=(0.3, 0.3)),
    )

    return {
        "subdomain_temperature": NamedGoal(
            name="subdomain_temperature",
            bc=all_dirichlet,
            qoi=sub_t,
            dual=sub_t,
            adhoc=sub_t,
            exact=exact_qoi(sub_t, _MS),
            normalize_by_initial=False,
        ),
        "subdomain_flux_x": NamedGoal(
            name="subdomain_flux_x",
            bc=all_dirichlet,
            qoi=sub_f,
            dual=sub_f,
            adhoc=sub_f,
            exact=exact_qoi(sub_f, _MS),
            normalize_by_initial=False,
        ),
        "boundary_temperature": NamedGoal(
            name="boundary_temperature",
            bc=left_neumann,
            qoi=bnd_t,
            dual=bnd_t,
            adhoc=bnd_t_adhoc,
            exact=0.0,
            normalize_by_initial=True,
        ),
        "boundary_flux": NamedGoal(
            name="boundary_flux",
            bc=all_dirichlet,
            qoi=bnd_f_dual,  # placeholder; measurement uses qoi_mode
            dual=bnd_f_dual,
            adhoc=bnd_f_adhoc,
            exact=_panel_gauss_1d(
                lambda t: -0.25 * _MS.profile_d1(0.0) * _MS.profile(t), 0.0, 1.0, 16, 8
            ),
            normalize_by_initial=False,
            qoi_mode="flux_average",
        ),
        "point_temperature": NamedGoal(
            name="point_temperature",
            bc=all_dirichlet,
            qoi=point_t,
            dual=point_t,
            adhoc=point_t,
            exact=float(_MS.u(0.3, 0.3)),
            normalize_by_initial=False,
        ),
    }


def density_values(density, eid, X, Y):
    """Evaluate a g1/g2-style density at element quadrature points."""
    if density is None:
        return None
    if isinstance(density, ElementConstant):
        v = density.lookup().get(eid)
        if v is None or v == 0.0:
            return None
        return np.full_like(np.asarray(X, dtype=float), v)
    return np.asarray(density(X, Y), dtype=float)


def _side_quadrature(mesh, eid, side, x1):
    """Physical points, length and outward normal of an element side."""
    x0, y0, w, h = mesh.element_box(eid)
    t = np.asarray(x1, dtype=float)
    if side == "south":
        return x0 + (t + 1) * w / 2, np.full_like(t, y0), w, (0.0, -1.0)
    if side == "north":
        return x0 + (t + 1) * w / 2, np.full_like(t, y0 + h), w, (0.0, 1.0)
    if side == "east":
        return np.full_like(t, x0 + w), y0 + (t + 1) * h / 2, h, (1.0, 0.0)
    return np.full_like(t, x0), y0 + (t + 1) * h / 2, h, (-1.0, 0.0)


def _validate_g4(goal: GoalSpec, mesh: QuadMesh) -> None:
    """Continuity screen for a nonzero flux weight on the Dirichlet boundary.

    Samples the weight at every vertex where two Dirichlet boundary edges
    meet (values from both edges must agree) and where a Dirichlet edge meets
    a Neumann one (the weight must vanish: the pairing has no flux unknown
    beyond that point).
    """
    # sample one-sided limits slightly inside each edge so that a jump at a
    # shared corner (weight 1 on one edge, 0 on the next) is caught
    eps = 1e-9
    vertex_vals: dict[int, list[float]] = {}
    neumann_endpoints: set[int] = set()
    for views in mesh.topology().values():
        for sv in views.values():
            if sv.kind != "boundary":
                continue
            e = mesh.edges[sv.edge]
            if sv.bc == "neumann":
                neumann_endpoints.update((e.v0, e.v1))
                continue
            p0 = np.array(mesh.vertices[e.v0])
            p1 = np.array(mesh.vertices[e.v1])
            for v, inset in ((e.v0, p0 + eps * (p1 - p0)), (e.v1, p1 + eps * (p0 - p1))):
                vertex_vals.setdefault(v, []).append(float(goal.g4_hat(*inset)))
    for v, vals in vertex_vals.items():
        if max(vals) - min(vals) > 1e-6:
            raise ValueError(
                "flux-trace goal weight is discontinuous along the Dirichlet "
                "boundary; such a weight is not a bounded functional on the "
                "trace space and must be mollified (e.g. a ramp) first"
            )
        if v in neumann_endpoints and abs(vals[0]) > 1e-6:
            raise ValueError(
                "flux-trace goal weight must vanish where the Dirichlet part "
                "of the boundary meets the Neumann part"
            )


def goal_load_vector(goal: GoalSpec, trial: TrialSpace) -> np.ndarray:
    """The functional's coefficient vector over the free trial dofs."""
    mesh = trial.mesh
    if goal.mesh_dependent and not any(
        isinstance(d, ElementConstant) for d in (goal.g1, goal.g2x, goal.g2y)
    ):
        raise ValueError(
            f"goal '{goal.name}' is mesh dependent and must be refreshed via "
            "mesh_dependent_update before assembly"
        )
    if goal.g4_hat is not None:
        _validate_g4(goal, mesh)

    lay = trial.layout
    rule = basis.quadrature_rule(trial.quad_n)
    tab = basis.tensor_tables(trial.p, trial.quad_n)
    nodes = np.array(basis.lobatto_nodes(trial.p))
    # composite 2-panel rule for the trace terms: boundary weights may have
    # a kink at an edge midpoint (the mollified ramp does on the first mesh)
    xc = np.concatenate(((rule.x1 - 1.0) / 2.0, (rule.x1 + 1.0) / 2.0))
    wc = np.concatenate((rule.w1 / 2.0, rule.w1 / 2.0))
    N1 = basis.lagrange_matrix(nodes, xc)
    V1 = basis.legendre_vals(xc, trial.p - 1)

    vec = np.zeros(trial.n_dofs)
    topo = mesh.topology()
    for el in mesh.active_elements:
        ed = trial.edofs[el.id]
        loc = np.zeros(lay.n_loc)
        x0, y0, w, h = mesh.element_box(el.id)
        X = x0 + (rule.xi + 1.0) * w / 2.0
        Y = y0 + (rule.eta + 1.0) * h / 2.0
        jac = w * h / 4.0
        for density, block in ((goal.g1, lay.u), (goal.g2x, lay.sx), (goal.g2y, lay.sy)):
            gv = density_values(density, el.id, X, Y)
            if gv is not None:
                loc[block] = jac * (tab.vals.T @ (rule.w2 * gv))
        if goal.g3_hat is not None or goal.g4_hat is not None:
            for si, side in enumerate(SIDES):
                sv = topo[el.id][side]
                if sv.kind != "boundary":
                    continue
                PX, PY, length, _ = _side_quadrature(mesh, el.id, side, xc)
                if goal.g3_hat is not None and sv.bc == "neumann":
                    gv = np.asarray(goal.g3_hat(PX, PY), dtype=float)
                    loc[lay.uhat_side_nodal(si)] += length / 2.0 * (N1.T @ (wc * gv))
                if goal.g4_hat is not None and sv.bc == "dirichlet":
                    gv = np.asarray(goal.g4_hat(PX, PY), dtype=float)
                    loc[lay.sighat[si]] += length / 2.0 * (V1.T @ (wc * gv))
        if np.any(loc):
            vec[ed.gids] += ed.W.T @ loc
    return vec


def evaluate_qoi(goal: GoalSpec, trial: TrialSpace, coeffs: np.ndarray,
                 vec: np.ndarray | None = None) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (trial.n_dofs,):
        raise ValueError(
            f"coefficient vector has shape {coeffs.shape}, expected ({trial.n_dofs},)"
        )
    if vec is None:
        vec = goal_load_vector(goal, trial)
    return float(vec @ coeffs)


def flux_average(trial: TrialSpace, coeffs: np.ndarray, segment: str = "x=0") -> float:
    """Integral of the outward-oriented flux trace over a boundary segment.

    This is the measured QoI of the boundary-flux experiment; it is kept
    separate from goal_load_vector because its natural weight (the constant
    1 on the segment) is exactly the discontinuous functional the goal
    catalog replaces with a ramp for adaptation purposes.
    """
    mesh = trial.mesh
    if segment != "x=0":
        raise ValueError(f"unsupported boundary segment '{segment}'")
    xmin = mesh.domain[0][0]
    total = 0.0
    for views in mesh.topology().values():
        for side, sv in views.items():
            if sv.kind != "boundary" or side != "west":
                continue
            e = mesh.edges[sv.edge]
            if abs(mesh.vertices[e.v0][0] - xmin) > 1e-12:
                continue
            gids = trial.sighat_edge_gids.get(sv.edge)
            if gids is None:
                continue
            # outward normal is -x while the stored orientation is +x; only
            # the constant mode contributes to the integral
            total += -coeffs[gids[0]] * mesh.edge_length(sv.edge)
    return total


def exact_qoi(goal: GoalSpec, exact: ManufacturedSolution, mesh: QuadMesh | None = None,
              panels: int = 48) -> float:
    """Reference QoI value via paneled Gauss quadrature at two resolutions."""

    def run(pn: int) -> float:
        total = 0.0
        dom = exact.domain
        if goal.g1 is not None or goal.g2x is not None or goal.g2y is not None:
            if any(isinstance(d, ElementConstant)
                   for d in (goal.g1, goal.g2x, goal.g2y)):
                if mesh is None:
                    raise ValueError(
                        f"goal '{goal.name}' has per-element densities; a mesh "
                        "is required to evaluate the reference QoI"
                    )
                total += _exact_qoi_element_tables(goal, exact, mesh)
            else:
                if goal.g1 is not None:
                    total += _panel_gauss_2d(
                        lambda X, Y: goal.g1(X, Y) * exact.u(X, Y), dom, pn, 8)
                if goal.g2x is not None:
                    total += _panel_gauss_2d(
                        lambda X, Y: goal.g2x(X, Y) * exact.grad(X, Y)[0], dom, pn, 8)
                if goal.g2y is not None:
                    total += _panel_gauss_2d(
                        lambda X, Y: goal.g2y(X, Y) * exact.grad(X, Y)[1], dom, pn, 8)
        if goal.g3_hat is not None:
            # catalog boundary goals live on the segment x = 0
            total += _panel_gauss_1d(
                lambda T: goal.g3_hat(np.zeros_like(T), T) * exact.u(np.zeros_like(T), T),
                dom[1][0], dom[1][1], pn, 8)
        if goal.g4_hat is not None:
            total += _panel_gauss_1d(
                lambda T: goal.g4_hat(np.zeros_like(T), T)
                * (-exact.grad(np.zeros_like(T), T)[0]),
                dom[1][0], dom[1][1], pn, 8)
        return total

    coarse, fine = run(panels // 2), run(panels)
    if abs(fine - coarse) > 1e-12 * max(1.0, abs(fine)):
        raise ValueError(
            f"reference quadrature for goal '{goal.name}' did not settle: "
            f"{coarse!r} vs {fine!r}"
        )
    return fine


def _exact_qoi_element_tables(goal: GoalSpec, exact, mesh: QuadMesh) -> float:
    g, w = basis.gauss_points(8)
    total = 0.0
    for density, comp in ((goal.g1, "u"), (goal.g2x, "gx"), (goal.g2y, "gy")):
        if not isinstance(density, ElementConstant):
            continue
        for eid, val in density.lookup().items():
            x0, y0, wd, h = mesh.element_box(eid)
            X = x0 + (g + 1.0) * wd / 2.0
            Y = y0 + (g + 1.0) * h / 2.0
            if comp == "u":
                F = exact.u(X[:, None], Y[None, :])
            else:
                F = exact.grad(X[:, None], Y[None, :])[0 if comp == "gx" else 1]
            total += val * wd * h / 4.0 * (w[:, None] * w[None, :] * F).sum()
    return total


def mesh_dependent_update(goal: GoalSpec, mesh: QuadMesh) -> GoalSpec:
    """Refresh a mesh-dependent goal's per-element density tables."""
    if not goal.mesh_dependent or goal.region is None:
        return goal
    reg = goal.region
    if reg.kind == "boundary_band":
        if reg.segment != "x=0":
            raise ValueError(f"unsupported boundary segment '{reg.segment}'")
        xmin = mesh.domain[0][0]
        table = []
        for el in mesh.active_elements:
            x0, _, w, _ = mesh.element_box(el.id)
            if abs(x0 - xmin) < 1e-12:
                table.append((el.id, 1.0 / w))
        if not table:
            raise ValueError(
                f"no active element touches the segment '{reg.segment}'"
            )
        density = ElementConstant(values=tuple(table))
        if reg.component == "g1":
            return replace(goal, g1=density)
        return replace(goal, g2x=density)
    if reg.kind == "point":
        px, py = reg.point
        (ax0, ax1), (ay0, ay1) = mesh.domain
        if not (ax0 <= px <= ax1 and ay0 <= py <= ay1):
            raise ValueError(f"goal point {reg.point} lies outside the domain")
        hits = []
        for el in mesh.active_elements:
            x0, y0, w, h = mesh.element_box(el.id)
            if x0 - 1e-12 <= px <= x0 + w + 1e-12 and y0 - 1e-12 <= py <= y0 + h + 1e-12:
                hits.append((el.id, w * h))
        if not hits:
            raise ValueError(f"goal point {reg.point} not covered by any element")
        vol = sum(a for _, a in hits)
        density = ElementConstant(values=tuple((eid, 1.0 / vol) for eid, _ in hits))
        return replace(goal, g1=density)
    raise ValueError(f"unknown mesh-dependent region kind '{reg.kind}'")
