"""Seeded property suites over the finite-dimensional operator laboratory.

Each suite draws 100 random instances and checks one exact identity or
bound from the duality toolbox.  The report lists pass counts and the
worst observed violation per suite; with a fixed seed both are bit-stable
across runs.

`inject_fault="skip-gram-symmetrization"` disables the symmetrization step
in the first suite's Gram construction — a negative control proving the
checks actually look at the numbers (the suite must then fail).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import operator_lab as lab

N_INSTANCES = 100
_TINY = 1e-300


@dataclass
class SuiteResult:
    name: str
    tol: float
    violations: list[float] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def instances(self) -> int:
        return len(self.violations) + len(self.errors)

    @property
    def passes(self) -> int:
        return sum(1 for v in self.violations if v <= self.tol)

    @property
    def worst(self) -> float:
        return max(self.violations) if self.violations else float("inf")

    @property
    def ok(self) -> bool:
        return not self.errors and self.passes == self.instances


def _spd(rng: np.random.Generator, n: int, fault: str | None = None) -> np.ndarray:
    """Random well-conditioned Gram; the raw draw needs symmetrization."""
    W = rng.standard_normal((n, n))
    raw = W @ W.T + n * np.eye(n)
    raw = raw + 1e-6 * rng.standard_normal((n, n))  # assembly-like noise
    if fault == "skip-gram-symmetrization":
        return raw
    return (raw + raw.T) / 2.0


def _suite_dual_norm_splitting(rng, fault=None) -> SuiteResult:
    res = SuiteResult(name="dual-norm-splitting", tol=1e-10)
    for _ in range(N_INSTANCES):
        n = int(rng.integers(2, 41))
        G = _spd(rng, n, fault)
        f = rng.standard_normal(n)
        k = int(rng.integers(1, n))
        W0 = rng.standard_normal((n, k))
        try:
            tot, p0, p1 = lab.split_dual_norm(G, f, W0)
        except (ValueError, np.linalg.LinAlgError) as exc:
            res.errors.append(str(exc))
            continue
        res.violations.append(abs(tot - p0 - p1) / max(tot, _TINY))
    return res


def _suite_residual_decomposition(rng, fault=None) -> SuiteResult:
    res = SuiteResult(name="residual-decomposition", tol=1e-10)
    for _ in range(N_INSTANCES):
        m = int(rng.integers(3, 41))
        n = int(rng.integers(1, m))
        B = rng.standard_normal((m, n))
        G = _spd(rng, m)
        ell = rng.standard_normal(m)
        uh = rng.standard_normal(n)
        r = int(rng.integers(1, m))
        T = rng.standard_normal((m, r))
        full, rem, lift = lab.energy_residual_identity(B, G, ell, uh, T)
        res.violations.append(abs(full - rem - lift) / max(full, _TINY))
    return res


def _random_mixed_instance(rng):
    """Shapes with a strictly richer test space: dim V > dim U >= dim U_h."""
    n = int(rng.integers(2, 13))
    m = n + int(rng.integers(1, 9))
    B = rng.standard_normal((m, n))
    G = _spd(rng, m)
    ell = B @ rng.standard_normal(n)  # attainable by construction
    g = rng.standard_normal(n)
    k = int(rng.integers(1, n))
    U = rng.standard_normal((n, k))
    r = int(rng.integers(k + 1, m + 1))
    T = rng.standard_normal((m, r))
    return B, G, ell, g, U, T


def _suite_qoi_duality_gap(rng, fault=None) -> SuiteResult:
    res = SuiteResult(name="qoi-duality-gap", tol=1e-10)
    for _ in range(N_INSTANCES):
        B, G, ell, g, U, T = _random_mixed_instance(rng)
        out = lab.qoi_duality_gap(B, G, ell, g, U, T)
        res.violations.append(out.gap / out.scale)
    return res


def _suite_qoi_product_bound(rng, fault=None) -> SuiteResult:
    res = SuiteResult(name="qoi-residual-product-bound", tol=1e-9)
    for _ in range(N_INSTANCES):
        B, G, ell, g, U, T = _random_mixed_instance(rng)
        out = lab.qoi_error_bound_check(B, G, ell, g, U, T)
        res.violations.append(
            max(0.0, out.qoi_error - out.bound) / max(out.bound, _TINY))
    return res


def _random_projection(rng):
    n = int(rng.integers(2, 41))
    k = int(rng.integers(1, n))
    G = _spd(rng, n)
    for _ in range(20):
        try:
            P = lab.oblique_projection(
                rng.standard_normal((n, k)), rng.standard_normal((n, n - k)))
            return P, G
        except ValueError:
            continue
    raise RuntimeError("could not draw a split projection in 20 attempts")


def _suite_projection_norms(rng, fault=None) -> SuiteResult:
    res = SuiteResult(name="complementary-projection-norms", tol=1e-8)
    for _ in range(N_INSTANCES):
        P, G = _random_projection(rng)
        np_, nc, _ = lab.projection_identities(P, G)
        res.violations.append(abs(np_ - nc) / max(np_, _TINY))
    return res


def _suite_projection_pythagoras(rng, fault=None) -> SuiteResult:
    res = SuiteResult(name="oblique-projection-pythagoras", tol=1e-8)
    for _ in range(N_INSTANCES):
        P, G = _random_projection(rng)
        np_, _, nd = lab.projection_identities(P, G)
        res.violations.append(abs(nd * nd + 1.0 - np_ * np_) / max(np_ * np_, _TINY))
    return res


def _suite_reliability(rng, fault=None) -> SuiteResult:
    res = SuiteResult(name="reliability-oscillation-bounds", tol=1e-9)
    for _ in range(N_INSTANCES):
        n = int(rng.integers(2, 13))
        m = n + int(rng.integers(2, 13))
        B = rng.standard_normal((m, n))
        G = _spd(rng, m)
        ell = B @ rng.standard_normal(n)
        k = int(rng.integers(1, n))
        U = rng.standard_normal((n, k))
        extra = int(rng.integers(0, m - k))
        P = lab.build_fortin_projection(B, G, U, extra, rng)
        uh = U @ rng.standard_normal(k)
        rep = lab.reliability_report(B, G, ell, uh, P, U)
        worst = max(
            (rep.reliability_lhs - rep.reliability_rhs)
            / max(rep.reliability_rhs, _TINY),
            (rep.residual_efficiency_lhs - rep.residual_efficiency_rhs)
            / max(rep.residual_efficiency_rhs, _TINY),
            (rep.oscillation_efficiency_lhs - rep.oscillation_efficiency_rhs)
            / max(rep.oscillation_efficiency_rhs, _TINY),
        )
        res.violations.append(max(0.0, worst))
    return res


_SUITES = (
    _suite_dual_norm_splitting,
    _suite_residual_decomposition,
    _suite_qoi_duality_gap,
    _suite_qoi_product_bound,
    _suite_projection_norms,
    _suite_projection_pythagoras,
    _suite_reliability,
)


def run_selftest(seed: int = 0, inject_fault: str | None = None) -> list[SuiteResult]:
    if inject_fault not in (None, "skip-gram-symmetrization"):
        raise ValueError(f"unknown fault {inject_fault!r}")
    results = []
    for idx, suite in enumerate(_SUITES):
        rng = np.random.default_rng(seed + 1000 * idx)
        results.append(suite(rng, fault=inject_fault))
    return results


def format_report(results: list[SuiteResult]) -> str:
    lines = []
    for r in results:
        status = "pass" if r.ok else "FAIL"
        worst = f"{r.worst:.6e}" if r.violations else "n/a"
        lines.append(
            f"{r.name:<34} {r.passes:>3}/{r.instances:<3} {status}   "
            f"worst {worst}  tol {r.tol:.0e}"
            + (f"  [{len(r.errors)} errored]" if r.errors else "")
        )
    lines.append("overall: " + ("PASS" if all(r.ok for r in results) else "FAIL"))
    return "\n".join(lines)
