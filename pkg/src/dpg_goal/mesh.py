"""1-irregular quadrilateral meshes on an axis-aligned rectangle.

Elements are axis-aligned rectangles refined by isotropic 4-splits.  At most
one hanging vertex per edge is allowed (1-irregularity); refining an element
next to an already-refined neighbor triggers closure refinement of the
coarser neighbor, never coarsening.  Element and edge histories are kept:
refined entities stay in the arrays with `children` set, so parent lookups
and deterministic re-numbering are trivial.

Edge endpoints are always stored in lexicographic coordinate order
(horizontal edges run left to right, vertical edges bottom to top), which
fixes a global orientation for every edge: the orientation normal is +x for
vertical and +y for horizontal edges.  An element therefore sees a side's
orientation normal as outward on its east/north sides and inward on its
west/south sides, which is all the flux-trace sign bookkeeping needed
downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SIDES = ("south", "east", "north", "west")

# outward unit normal per side and the sign of the side's global orientation
# normal relative to outward
SIDE_NORMALS = {"south": (0.0, -1.0), "east": (1.0, 0.0), "north": (0.0, 1.0), "west": (-1.0, 0.0)}
SIDE_ORIENTATION_SIGN = {"south": -1.0, "east": 1.0, "north": 1.0, "west": -1.0}


@dataclass
class Element:
    id: int
    vertices: tuple[int, int, int, int]  # SW, SE, NE, NW (counterclockwise)
    level: int
    parent: int | None = None
    children: tuple[int, int, int, int] | None = None

    @property
    def active(self) -> bool:
        return self.children is None


@dataclass
class Edge:
    id: int
    v0: int  # endpoints in lexicographic coordinate order
    v1: int
    bc: str  # 'interior' | 'dirichlet' | 'neumann'
    parent: int | None = None
    children: tuple[int, int] | None = None


@dataclass(frozen=True)
class BoundarySpec:
    """Which part of the rectangle boundary carries the flux condition.

    `neumann` is None (entire boundary is Dirichlet) or a string "x=c" /
    "y=c" naming one side of the rectangle; the trace condition there is the
    homogeneous Neumann one.
    """

    neumann: str | None = None

    def classify(self, midpoint: tuple[float, float]) -> str:
        if self.neumann is None:
            return "dirichlet"
        axis, _, value = self.neumann.partition("=")
        axis = axis.strip()
        if axis not in ("x", "y") or not value.strip():
            raise ValueError(f"malformed boundary descriptor {self.neumann!r}")
        target = float(value)
        coord = midpoint[0] if axis == "x" else midpoint[1]
        return "neumann" if abs(coord - target) <= 1e-12 * max(1.0, abs(target)) else "dirichlet"


@dataclass
class SideView:
    """How one side of an active element meets the rest of the mesh."""

    side: str
    edge: int
    bc: str
    kind: str  # 'boundary' | 'conforming' | 'master' | 'slave'
    neighbor: int | None = None  # conforming partner, or the coarse element for a slave side
    child_edges: tuple[int, int] | None = None  # master only
    child_neighbors: tuple[int, int] | None = None  # master only
    slave_position: int | None = None  # slave only: 0 = lower-lex half of the parent edge


class QuadMesh:
    """Rectangle mesh with element genealogy and hanging-edge bookkeeping."""

    SCHEMA = "dpg-goal-mesh/1"

    def __init__(self, domain, bc: BoundarySpec | None = None):
        (x0, x1), (y0, y1) = domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate domain {domain}")
        self.domain = ((float(x0), float(x1)), (float(y0), float(y1)))
        self.bc = bc or BoundarySpec()
        self.vertices: list[tuple[float, float]] = []
        self.elements: list[Element] = []
        self.edges: list[Edge] = []
        self._edge_lookup: dict[tuple[int, int], int] = {}
        self._topo: dict[int, dict[str, SideView]] | None = None

    # -- construction -----------------------------------------------------

    def _add_vertex(self, x: float, y: float) -> int:
        self.vertices.append((float(x), float(y)))
        return len(self.vertices) - 1

    def _get_edge(self, va: int, vb: int) -> int:
        key = self._edge_key(va, vb)
        return self._edge_lookup[key]

    def _edge_key(self, va: int, vb: int) -> tuple[int, int]:
        pa, pb = self.vertices[va], self.vertices[vb]
        return (va, vb) if pa <= pb else (vb, va)

    def _add_edge(self, va: int, vb: int, bc: str, parent: int | None = None) -> int:
        key = self._edge_key(va, vb)
        if key in self._edge_lookup:
            return self._edge_lookup[key]
        eid = len(self.edges)
        self.edges.append(Edge(id=eid, v0=key[0], v1=key[1], bc=bc, parent=parent))
        self._edge_lookup[key] = eid
        return eid

    # -- queries -----------------------------------------------------------

    @property
    def active_elements(self) -> list[Element]:
        return [e for e in self.elements if e.active]

    def element_box(self, eid: int) -> tuple[float, float, float, float]:
        """(x0, y0, width, height) of the element rectangle."""
        el = self.elements[eid]
        sw = self.vertices[el.vertices[0]]
        ne = self.vertices[el.vertices[2]]
        return sw[0], sw[1], ne[0] - sw[0], ne[1] - sw[1]

    def element_diameter(self, eid: int) -> float:
        _, _, w, h = self.element_box(eid)
        return float(np.hypot(w, h))

    def element_side_edge(self, eid: int, side: str) -> int:
        el = self.elements[eid]
        sw, se, ne, nw = el.vertices
        pair = {"south": (sw, se), "east": (se, ne), "north": (nw, ne), "west": (sw, nw)}[side]
        return self._get_edge(*pair)

    def edge_midpoint(self, edge_id: int) -> tuple[float, float]:
        e = self.edges[edge_id]
        p0, p1 = self.vertices[e.v0], self.vertices[e.v1]
        return ((p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0)

    def edge_length(self, edge_id: int) -> float:
        e = self.edges[edge_id]
        p0, p1 = self.vertices[e.v0], self.vertices[e.v1]
        return float(np.hypot(p1[0] - p0[0], p1[1] - p0[1]))

    def hanging_vertices(self) -> set[int]:
        """Midpoint vertices of split edges that still face a coarse side."""
        topo = self.topology()
        out: set[int] = set()
        for views in topo.values():
            for sv in views.values():
                if sv.kind == "master":
                    child0 = self.edges[sv.child_edges[0]]
                    out.add(child0.v1)  # shared midpoint of the two children
        return out

    # -- topology ----------------------------------------------------------

    def topology(self) -> dict[int, dict[str, SideView]]:
        """Side views of every active element, rebuilt after refinement."""
        if self._topo is not None:
            return self._topo
        owners: dict[int, list[int]] = {}
        side_edges: dict[int, dict[str, int]] = {}
        for el in self.active_elements:
            side_edges[el.id] = {}
            for side in SIDES:
                eid = self.element_side_edge(el.id, side)
                side_edges[el.id][side] = eid
                owners.setdefault(eid, []).append(el.id)

        topo: dict[int, dict[str, SideView]] = {}
        for el in self.active_elements:
            views: dict[str, SideView] = {}
            for side in SIDES:
                eid = side_edges[el.id][side]
                edge = self.edges[eid]
                own = owners.get(eid, [])
                if edge.bc != "interior":
                    views[side] = SideView(side=side, edge=eid, bc=edge.bc, kind="boundary")
                elif len(own) == 2:
                    other = own[0] if own[1] == el.id else own[1]
                    views[side] = SideView(
                        side=side, edge=eid, bc=edge.bc, kind="conforming", neighbor=other
                    )
                elif edge.children is not None:
                    kids = edge.children
                    kid_own = []
                    for k in kids:
                        ko = owners.get(k, [])
                        if len(ko) != 1:
                            raise RuntimeError(
                                f"mesh is not 1-irregular at edge {eid} (child {k} owners {ko})"
                            )
                        kid_own.append(ko[0])
                    views[side] = SideView(
                        side=side,
                        edge=eid,
                        bc=edge.bc,
                        kind="master",
                        child_edges=kids,
                        child_neighbors=(kid_own[0], kid_own[1]),
                    )
                elif edge.parent is not None:
                    parent = self.edges[edge.parent]
                    pown = owners.get(parent.id, [])
                    if len(pown) != 1:
                        raise RuntimeError(
                            f"dangling slave edge {eid}: parent owners {pown}"
                        )
                    views[side] = SideView(
                        side=side,
                        edge=eid,
                        bc=edge.bc,
                        kind="slave",
                        neighbor=pown[0],
                        slave_position=0 if parent.children[0] == eid else 1,
                    )
                else:
                    raise RuntimeError(f"inconsistent topology at element {el.id} side {side}")
            topo[el.id] = views
        self._topo = topo
        return topo

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": self.SCHEMA,
            "domain": [list(self.domain[0]), list(self.domain[1])],
            "neumann": self.bc.neumann,
            "vertices": [list(v) for v in self.vertices],
            "elements": [
                {
                    "id": e.id,
                    "vertices": list(e.vertices),
                    "level": e.level,
                    "parent": e.parent,
                    "children": list(e.children) if e.children else None,
                }
                for e in self.elements
            ],
            "edges": [
                {
                    "id": e.id,
                    "v0": e.v0,
                    "v1": e.v1,
                    "bc": e.bc,
                    "parent": e.parent,
                    "children": list(e.children) if e.children else None,
                }
                for e in self.edges
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "QuadMesh":
        if data.get("schema") != cls.SCHEMA:
            raise ValueError(f"unknown mesh schema {data.get('schema')!r}")
        dom = data["domain"]
        m = cls(((dom[0][0], dom[0][1]), (dom[1][0], dom[1][1])), BoundarySpec(data["neumann"]))
        m.vertices = [tuple(v) for v in data["vertices"]]
        m.elements = [
            Element(
                id=e["id"],
                vertices=tuple(e["vertices"]),
                level=e["level"],
                parent=e["parent"],
                children=tuple(e["children"]) if e["children"] else None,
            )
            for e in data["elements"]
        ]
        m.edges = [
            Edge(
                id=e["id"],
                v0=e["v0"],
                v1=e["v1"],
                bc=e["bc"],
                parent=e["parent"],
                children=tuple(e["children"]) if e["children"] else None,
            )
            for e in data["edges"]
        ]
        m._edge_lookup = {m._edge_key(e.v0, e.v1): e.id for e in m.edges}
        return m

    @classmethod
    def from_json(cls, text: str) -> "QuadMesh":
        return cls.from_dict(json.loads(text))


def build_rect_mesh(nx: int, ny: int, domain=((0.0, 4.0), (0.0, 1.0)),
                    bc: BoundarySpec | None = None) -> QuadMesh:
    """Tensor grid of nx-by-ny rectangles with classified boundary edges."""
    if nx < 1 or ny < 1:
        raise ValueError(f"grid must have at least one element per direction, got {nx}x{ny}")
    mesh = QuadMesh(domain, bc)
    (x0, x1), (y0, y1) = mesh.domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    vid = {}
    for i in range(nx + 1):
        for j in range(ny + 1):
            vid[(i, j)] = mesh._add_vertex(xs[i], ys[j])

    def boundary_class(i0, j0, i1, j1):
        mx = (xs[i0] + xs[i1]) / 2.0
        my = (ys[j0] + ys[j1]) / 2.0
        horizontal = j0 == j1
        if horizontal and (j0 == 0 or j0 == ny):
            return mesh.bc.classify((mx, my))
        if not horizontal and (i0 == 0 or i0 == nx):
            return mesh.bc.classify((mx, my))
        return "interior"

    for i in range(nx):
        for j in range(ny + 1):
            mesh._add_edge(vid[(i, j)], vid[(i + 1, j)], boundary_class(i, j, i + 1, j))
    for i in range(nx + 1):
        for j in range(ny):
            mesh._add_edge(vid[(i, j)], vid[(i, j + 1)], boundary_class(i, j, i, j + 1))

    for i in range(nx):
        for j in range(ny):
            el = Element(
                id=len(mesh.elements),
                vertices=(vid[(i, j)], vid[(i + 1, j)], vid[(i + 1, j + 1)], vid[(i, j + 1)]),
                level=0,
            )
            mesh.elements.append(el)
    return mesh


def _split_edge(mesh: QuadMesh, eid: int) -> int:
    """Split an edge at its midpoint (idempotent); returns the midpoint vertex."""
    edge = mesh.edges[eid]
    if edge.children is not None:
        return mesh.edges[edge.children[0]].v1
    p0, p1 = mesh.vertices[edge.v0], mesh.vertices[edge.v1]
    mid = mesh._add_vertex((p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0)
    c0 = mesh._add_edge(edge.v0, mid, edge.bc, parent=eid)
    c1 = mesh._add_edge(mid, edge.v1, edge.bc, parent=eid)
    edge.children = (c0, c1)
    return mid


def _split_element(mesh: QuadMesh, eid: int) -> None:
    el = mesh.elements[eid]
    if not el.active:
        raise ValueError(f"element {eid} is already refined")
    sw, se, ne, nw = el.vertices
    ms = _split_edge(mesh, mesh._get_edge(sw, se))
    me = _split_edge(mesh, mesh._get_edge(se, ne))
    mn = _split_edge(mesh, mesh._get_edge(nw, ne))
    mw = _split_edge(mesh, mesh._get_edge(sw, nw))
    psw = mesh.vertices[sw]
    pne = mesh.vertices[ne]
    center = mesh._add_vertex((psw[0] + pne[0]) / 2.0, (psw[1] + pne[1]) / 2.0)

    for a, b in ((ms, center), (center, mn), (mw, center), (center, me)):
        mesh._add_edge(a, b, "interior")

    kids = []
    for corners in (
        (sw, ms, center, mw),
        (ms, se, me, center),
        (center, me, ne, mn),
        (mw, center, mn, nw),
    ):
        kid = Element(
            id=len(mesh.elements),
            vertices=corners,
            level=el.level + 1,
            parent=el.id,
        )
        mesh.elements.append(kid)
        kids.append(kid.id)
    el.children = tuple(kids)


def _needs_closure(mesh: QuadMesh, el: Element) -> bool:
    """True if some neighbor across a side is two or more levels finer."""
    for side in SIDES:
        edge = mesh.edges[mesh.element_side_edge(el.id, side)]
        if edge.children is None:
            continue
        for cid in edge.children:
            if mesh.edges[cid].children is not None:
                return True
    return False


def refine(mesh: QuadMesh, marked) -> QuadMesh:
    """Split the marked active elements into 4, then restore 1-irregularity.

    Closure refinements are applied to the coarser neighbor (never by
    coarsening) and processed in ascending element id so the result is
    reproducible.  The mesh is updated in place and returned.
    """
    ids = sorted(set(int(i) for i in marked))
    for eid in ids:
        if eid < 0 or eid >= len(mesh.elements):
            raise ValueError(f"marked element {eid} does not exist")
        if not mesh.elements[eid].active:
            raise ValueError(f"marked element {eid} is not active")
    for eid in ids:
        _split_element(mesh, eid)
    while True:
        violated = sorted(el.id for el in mesh.active_elements if _needs_closure(mesh, el))
        if not violated:
            break
        for eid in violated:
            _split_element(mesh, eid)
    mesh._topo = None
    return mesh


def mark_greedy(indicators, theta: float) -> list[int]:
    """Greedy bulk marking: every element within theta of the worst one.

    `indicators` maps active element ids to nonnegative indicator values
    (a dict, or anything with an `as_dict` method).  Returns the sorted ids
    with value >= theta * max value; an all-zero field marks nothing.
    """
    if hasattr(indicators, "as_dict"):
        indicators = indicators.as_dict()
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"marking fraction theta must be in (0, 1], got {theta}")
    if not indicators:
        return []
    vals = np.array([float(v) for v in indicators.values()])
    if np.any(vals < 0.0):
        raise ValueError("indicator values must be nonnegative")
    vmax = vals.max()
    if vmax == 0.0:
        return []
    cut = theta * vmax
    return sorted(int(k) for k, v in indicators.items() if float(v) >= cut)
