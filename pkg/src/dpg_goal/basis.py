"""Polynomial bases and quadrature rules on the reference element.

Everything here lives on the reference interval [-1, 1] or the reference
square [-1, 1]^2.  Physical elements are axis-aligned rectangles, so maps
are diagonal affine and all metric factors reduce to per-direction scalings.

Three 1D bases are used throughout:

* Legendre polynomials P_0..P_q: modal basis for the discontinuous field
  variables and for the broken test spaces (diagonal mass matrices, trivial
  embedding of order q into order q+1).
* Lagrange polynomials on Gauss-Lobatto nodes: nodal basis for the
  continuous skeleton trace (endpoint values are the vertex dofs, so
  continuity across elements is plain dof sharing).
* Legendre again, per edge, for the flux trace (orthogonal, order p-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg


def gauss_points(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1, 1]; exact through degree 2n-1."""
    if n < 1:
        raise ValueError(f"quadrature order must be >= 1, got {n}")
    return npleg.leggauss(n)


def legendre_vals(x: np.ndarray, deg: int) -> np.ndarray:
    """Values of P_0..P_deg at x, shape (len(x), deg+1)."""
    return npleg.legvander(np.asarray(x, dtype=float), deg)


def legendre_ders(x: np.ndarray, deg: int) -> np.ndarray:
    """First derivatives of P_0..P_deg at x, shape (len(x), deg+1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((x.size, deg + 1))
    for k in range(1, deg + 1):
        c = np.zeros(k + 1)
        c[k] = 1.0
        out[:, k] = npleg.legval(x, npleg.legder(c))
    return out


@lru_cache(maxsize=None)
def lobatto_nodes(p: int) -> tuple[float, ...]:
    """p+1 Gauss-Lobatto nodes on [-1, 1] (endpoints included), ascending."""
    if p < 1:
        raise ValueError(f"trace order must be >= 1, got {p}")
    if p == 1:
        return (-1.0, 1.0)
    # interior nodes are the roots of P_p'
    c = np.zeros(p + 1)
    c[p] = 1.0
    interior = npleg.legroots(npleg.legder(c))
    return tuple([-1.0] + [float(t) for t in np.sort(interior)] + [1.0])


def lagrange_matrix(nodes, x) -> np.ndarray:
    """Values of the nodal (Lagrange) basis on `nodes` at points x.

    Returns shape (len(x), len(nodes)); column j is the shape function that
    is 1 at nodes[j] and 0 at the other nodes.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = nodes.size
    V = np.vander(nodes, n, increasing=True)
    # V @ C = I, so column j of C holds the monomial coefficients (increasing
    # powers) of the shape function attached to nodes[j].
    coeffs = np.linalg.solve(V, np.eye(n))
    P = np.vander(x, n, increasing=True)
    return P @ coeffs


def lagrange_der_matrix(nodes, x) -> np.ndarray:
    """First derivatives of the nodal basis on `nodes` at points x."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = nodes.size
    V = np.vander(nodes, n, increasing=True)
    coeffs = np.linalg.solve(V, np.eye(n))
    if n == 1:
        return np.zeros((x.size, 1))
    dP = np.vander(x, n - 1, increasing=True) * np.arange(1, n)
    return dP @ coeffs[1:, :]


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on the reference square [-1, 1]^2.

    `xi`, `eta`, `w2` are the flattened tensor points/weights (row-major in
    the xi index); `x1`, `w1` are the underlying 1D rule used for edges.
    A rule with n points per direction integrates degree 2n-1 exactly in
    each variable.
    """

    n: int
    xi: np.ndarray
    eta: np.ndarray
    w2: np.ndarray
    x1: np.ndarray
    w1: np.ndarray

    @property
    def npts(self) -> int:
        return self.n * self.n


@lru_cache(maxsize=None)
def quadrature_rule(n: int) -> QuadratureRule:
    x, w = gauss_points(n)
    XI, ETA = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return QuadratureRule(
        n=n,
        xi=XI.ravel(),
        eta=ETA.ravel(),
        w2=W.ravel(),
        x1=x,
        w1=w,
    )


@dataclass(frozen=True)
class TensorBasisTables:
    """Tensor-Legendre scalar basis of order q tabulated at a 2D rule.

    vals[k, i] is basis function i = a*(q+1)+b (P_a(xi) P_b(eta)) at
    quadrature point k; dxi/deta are reference-coordinate derivatives.
    """

    q: int
    vals: np.ndarray
    dxi: np.ndarray
    deta: np.ndarray


@lru_cache(maxsize=None)
def tensor_tables(q: int, nquad: int) -> TensorBasisTables:
    rule = quadrature_rule(nquad)
    Vx = legendre_vals(rule.xi, q)
    Vy = legendre_vals(rule.eta, q)
    Dx = legendre_ders(rule.xi, q)
    Dy = legendre_ders(rule.eta, q)
    npts = rule.npts
    ndof = (q + 1) ** 2
    vals = np.empty((npts, ndof))
    dxi = np.empty((npts, ndof))
    deta = np.empty((npts, ndof))
    for a in range(q + 1):
        for b in range(q + 1):
            i = a * (q + 1) + b
            vals[:, i] = Vx[:, a] * Vy[:, b]
            dxi[:, i] = Dx[:, a] * Vy[:, b]
            deta[:, i] = Vx[:, a] * Dy[:, b]
    return TensorBasisTables(q=q, vals=vals, dxi=dxi, deta=deta)


def tensor_eval(q: int, coeffs: np.ndarray, xi, eta) -> np.ndarray:
    """Evaluate a tensor-Legendre order-q expansion at arbitrary ref points."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    Vx = legendre_vals(xi, q)
    Vy = legendre_vals(eta, q)
    C = np.asarray(coeffs, dtype=float).reshape(q + 1, q + 1)
    return np.einsum("ka,ab,kb->k", Vx, C, Vy)


def tensor_eval_grad(q: int, coeffs: np.ndarray, xi, eta) -> tuple[np.ndarray, np.ndarray]:
    """Reference-coordinate gradient of a tensor-Legendre expansion."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    Vx = legendre_vals(xi, q)
    Vy = legendre_vals(eta, q)
    Dx = legendre_ders(xi, q)
    Dy = legendre_ders(eta, q)
    C = np.asarray(coeffs, dtype=float).reshape(q + 1, q + 1)
    return (
        np.einsum("ka,ab,kb->k", Dx, C, Vy),
        np.einsum("ka,ab,kb->k", Vx, C, Dy),
    )


def embed_tensor(q_from: int, q_to: int) -> np.ndarray:
    """Index map embedding order-q_from tensor coefficients into order q_to.

    Returns an integer array `idx` of length (q_from+1)^2 with the positions
    of the shared basis functions, so `big[idx] = small` zero-pads correctly.
    """
    if q_to < q_from:
        raise ValueError("embedding target order must be >= source order")
    idx = np.empty((q_from + 1) ** 2, dtype=int)
    for a in range(q_from + 1):
        for b in range(q_from + 1):
            idx[a * (q_from + 1) + b] = a * (q_to + 1) + b
    return idx
