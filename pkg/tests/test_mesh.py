"""Mesh construction, refinement, topology and marking."""
import json

import numpy as np
import pytest

from dpg_goal.mesh import (
    BoundarySpec,
    QuadMesh,
    build_rect_mesh,
    mark_greedy,
    refine,
)


def test_rect_mesh_counts():
    m = build_rect_mesh(4, 1)
    assert len(m.active_elements) == 4
    assert len(m.vertices) == 10
    assert len(m.edges) == 13  # 4*2 horizontal + 5 vertical
    xs = [v[0] for v in m.vertices]
    ys = [v[1] for v in m.vertices]
    assert min(xs) == 0.0 and max(xs) == 4.0
    assert min(ys) == 0.0 and max(ys) == 1.0


def test_rect_mesh_rejects_bad_grid():
    with pytest.raises(ValueError):
        build_rect_mesh(0, 1)
    with pytest.raises(ValueError):
        build_rect_mesh(2, 1, domain=((0.0, 0.0), (0.0, 1.0)))


def test_element_geometry_helpers():
    m = build_rect_mesh(4, 1)
    el = m.active_elements[0]
    x0, y0, w, h = m.element_box(el.id)
    assert (x0, y0, w, h) == (0.0, 0.0, 1.0, 1.0)
    assert m.element_diameter(el.id) == pytest.approx(np.sqrt(2.0))


def test_edges_are_lex_ordered():
    # every edge stores its endpoints sorted lexicographically; side
    # parametrizations in the rest of the code lean on this
    m = refine(build_rect_mesh(3, 2), [0, 4])
    for e in m.edges:
        assert tuple(m.vertices[e.v0]) <= tuple(m.vertices[e.v1])


def test_boundary_spec_classification():
    bc = BoundarySpec(neumann="x=0")
    m = build_rect_mesh(2, 1, bc=bc)
    kinds = {}
    for views in m.topology().values():
        for side, sv in views.items():
            if sv.kind == "boundary":
                kinds.setdefault(sv.bc, []).append(side)
    assert set(kinds) == {"neumann", "dirichlet"}
    assert kinds["neumann"] == ["west"]
    with pytest.raises(ValueError):
        build_rect_mesh(2, 1, bc=BoundarySpec(neumann="z=0"))


def test_topology_conforming_neighbors():
    m = build_rect_mesh(2, 1)
    topo = m.topology()
    e0, e1 = sorted(topo)
    assert topo[e0]["east"].kind == "conforming"
    assert topo[e0]["east"].neighbor == e1
    assert topo[e1]["west"].neighbor == e0
    assert topo[e0]["west"].kind == "boundary"
    assert topo[e0]["west"].neighbor is None


def test_refine_produces_four_children():
    m = build_rect_mesh(2, 1)
    m2 = refine(m, [0])
    assert len(m2.active_elements) == 5
    kids = m2.elements[0].children
    assert len(kids) == 4
    assert all(m2.elements[k].level == 1 for k in kids)
    assert all(m2.elements[k].parent == 0 for k in kids)
    # areas add up
    total = 0.0
    for el in m2.active_elements:
        _, _, w, h = m2.element_box(el.id)
        total += w * h
    assert total == pytest.approx(4.0 * 1.0)  # default domain is (0,4)x(0,1)


def test_refine_rejects_bad_marks():
    m = build_rect_mesh(2, 1)
    with pytest.raises(ValueError):
        refine(m, [99])
    m2 = refine(m, [0])
    with pytest.raises(ValueError):
        refine(m2, [0])  # no longer active


def test_hanging_topology_views():
    m = refine(build_rect_mesh(2, 1), [0])
    topo = m.topology()
    master = topo[1]["west"]
    assert master.kind == "master"
    assert len(master.child_edges) == 2
    assert len(master.child_neighbors) == 2
    for nb in master.child_neighbors:
        sv = topo[nb]["east"]
        assert sv.kind == "slave"
        assert sv.neighbor == 1
        assert sv.slave_position in (0, 1)
    # slave ordering matches the parent edge parametrization: child 0 covers
    # the lower-coordinate half
    lo = topo[master.child_neighbors[0]]["east"]
    hi = topo[master.child_neighbors[1]]["east"]
    assert lo.slave_position == 0 and hi.slave_position == 1
    y_lo = m.edge_midpoint(lo.edge)[1]
    y_hi = m.edge_midpoint(hi.edge)[1]
    assert y_lo < y_hi


def test_hanging_vertex_is_edge_midpoint():
    m = refine(build_rect_mesh(2, 1), [0])
    hv = m.hanging_vertices()
    assert len(hv) == 1
    (vid,) = hv
    master = m.topology()[1]["west"]
    assert np.allclose(m.vertices[vid], m.edge_midpoint(master.edge))


def test_refinement_closure_keeps_one_level_jump():
    # refining a child adjacent to a coarse neighbor must drag that
    # neighbor along; afterwards no edge sees a level difference above 1
    m = refine(build_rect_mesh(2, 1), [0])
    se_child = m.elements[0].children[1]
    m = refine(m, [se_child])
    assert 1 not in {el.id for el in m.active_elements}
    for views in m.topology().values():
        for sv in views.values():
            if sv.kind == "master":
                lvl = m.elements[sv.neighbor].level if sv.neighbor else None
                for nb in sv.child_neighbors:
                    assert m.elements[nb].level <= m.elements[sv.child_neighbors[0]].level


def test_levels_after_cascading_refinement():
    m = build_rect_mesh(2, 1)
    rng = np.random.default_rng(7)
    for _ in range(4):
        ids = [el.id for el in m.active_elements]
        pick = rng.choice(ids, size=max(1, len(ids) // 4), replace=False)
        m = refine(m, [int(i) for i in pick])
    # one-level rule: every master side's children are exactly one level
    # finer than the master element itself
    topo = m.topology()
    for eid, views in topo.items():
        for sv in views.values():
            if sv.kind == "master":
                for nb in sv.child_neighbors:
                    assert m.elements[nb].level == m.elements[eid].level + 1


def test_mark_greedy_threshold():
    ind = {0: 1.0, 1: 0.6, 2: 0.49, 3: 0.0}
    assert mark_greedy(ind, 0.5) == [0, 1]
    assert mark_greedy(ind, 1.0) == [0]
    assert mark_greedy({k: 0.0 for k in ind}, 0.5) == []


def test_mark_greedy_validates_inputs():
    with pytest.raises(ValueError):
        mark_greedy({0: 1.0}, 0.0)
    with pytest.raises(ValueError):
        mark_greedy({0: 1.0}, 1.5)
    with pytest.raises(ValueError):
        mark_greedy({0: -0.1}, 0.5)


def test_serialization_roundtrip():
    m = refine(build_rect_mesh(3, 2, bc=BoundarySpec(neumann="x=0")), [1, 3])
    text = m.to_json()
    data = json.loads(text)
    assert data["schema"] == QuadMesh.SCHEMA
    m2 = QuadMesh.from_json(text)
    assert sorted(el.id for el in m2.active_elements) == sorted(
        el.id for el in m.active_elements
    )
    assert m2.to_json() == text
    assert m2.bc.neumann == "x=0"
    data["schema"] = "something-else"
    with pytest.raises(ValueError):
        QuadMesh.from_dict(data)
