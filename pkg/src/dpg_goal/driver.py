"""Adaptive refinement loop: solve, estimate, mark, refine.

One iteration is: primal solve; (for goal-driven modes) dual solve plus an
adjoint indicator family; greedy marking on the chosen indicator; refine
with 1-irregular closure.  Modes:

* uniform      — refine every element (convergence-rate baselines);
* smr          — solution-driven, marks on the energy indicator alone (no
                 dual solve is ever issued);
* gmr_explicit — marks on energy x explicit adjoint indicator;
* gmr_implicit — marks on energy x implicit adjoint indicator;
* gmr_adhoc    — marks on energy x ad hoc indicator, using the goal's
                 volumetric companion when the measured goal has boundary
                 data.

The loop never starts an iteration once the dof budget is met, so the
final solve exceeds `max_dof` by at most one refinement round.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field, replace

try:
    import tomllib  # python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import estimators, goals
from .mesh import build_rect_mesh, mark_greedy, refine
from .report import ConvergenceLog, IterationRecord, emit_report
from .solver import solve_dual, solve_primal
from .spaces import build_test_space, build_trial_space

MODES = ("uniform", "smr", "gmr_explicit", "gmr_implicit", "gmr_adhoc")


@dataclass
class RunConfig:
    nx: int = 4
    ny: int = 1
    domain: tuple = ((0.0, 4.0), (0.0, 1.0))
    p: int = 2
    dp: int = 1
    alpha: float = 1.0
    theta: float = 0.5
    mode: str = "gmr_explicit"
    goal: str = "subdomain_temperature"
    max_dof: int = 20000
    max_iters: int = 12
    seed: int = 0
    method: str = "direct"
    output_dir: str | None = None
    label: str | None = None

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"marking fraction theta must lie in (0, 1), got {self.theta}")
        if self.p < 1:
            raise ValueError(f"trial order p must be >= 1, got {self.p}")
        if self.dp < 1:
            raise ValueError(f"test enrichment dp must be >= 1, got {self.dp}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose one of {MODES}")
        if self.goal not in goals.catalog():
            raise ValueError(
                f"unknown goal {self.goal!r}; choose one of {sorted(goals.catalog())}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")

    def run_label(self) -> str:
        return self.label or f"{self.mode}-{self.goal}"

    def as_dict(self) -> dict:
        return {
            "nx": self.nx, "ny": self.ny, "domain": list(map(list, self.domain)),
            "p": self.p, "dp": self.dp, "alpha": self.alpha, "theta": self.theta,
            "mode": self.mode, "goal": self.goal, "max_dof": self.max_dof,
            "max_iters": self.max_iters, "seed": self.seed, "method": self.method,
        }


_CONFIG_KEYS = {
    "mesh": ("nx", "ny", "domain"),
    "discretization": ("p", "dp", "alpha"),
    "adaptivity": ("mode", "goal", "theta", "max_dof", "max_iters"),
    "run": ("seed", "method", "output_dir", "label"),
}


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a TOML run configuration; `overrides` wins over file values."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    kwargs = {}
    for section, keys in _CONFIG_KEYS.items():
        body = raw.pop(section, {})
        if not isinstance(body, dict):
            raise ValueError(f"config section [{section}] must be a table")
        for key in list(body):
            if key not in keys:
                raise ValueError(
                    f"unknown key {key!r} in [{section}]; expected {keys}")
            kwargs[key] = body.pop(key)
    if raw:
        raise ValueError(f"unknown config sections: {sorted(raw)}")
    if "domain" in kwargs:
        (ax, bx), (ay, by) = kwargs["domain"]
        kwargs["domain"] = ((float(ax), float(bx)), (float(ay), float(by)))
    for key, val in (overrides or {}).items():
        if val is not None:
            kwargs[key] = val
    return RunConfig(**kwargs)


def _refreshed(spec: goals.GoalSpec, mesh) -> goals.GoalSpec:
    return goals.mesh_dependent_update(spec, mesh) if spec.mesh_dependent else spec


def _measure_qoi(named: goals.NamedGoal, trial, coeffs, mesh) -> float:
    if named.qoi_mode == "flux_average":
        return goals.flux_average(trial, coeffs)
    return goals.evaluate_qoi(_refreshed(named.qoi, mesh), trial, coeffs)


def run_amr(config: RunConfig) -> ConvergenceLog:
    """Algorithm: loop (solve, estimate, mark, refine) until the budget."""
    named = goals.catalog()[config.goal]
    manufactured = goals.ManufacturedSolution()
    mesh = build_rect_mesh(config.nx, config.ny, domain=config.domain, bc=named.bc)
    neumann = manufactured.neumann_flux if named.bc.neumann is not None else None
    log = ConvergenceLog(label=config.run_label(), config=config.as_dict())
    initial_qoi: float | None = None

    for it in range(config.max_iters):
        tic = time.perf_counter()
        trial = build_trial_space(mesh, config.p, config.dp)
        test = build_test_space(mesh, config.p, config.dp)
        if it == 0 and trial.n_dofs >= config.max_dof:
            raise ValueError(
                f"max_dof = {config.max_dof} does not exceed the initial mesh's "
                f"{trial.n_dofs} dofs; nothing to adapt")
        try:
            state = solve_primal(mesh, trial, test, source=manufactured.source,
                                 alpha=config.alpha, neumann_flux=neumann,
                                 method=config.method)
        except (RuntimeError, ValueError) as exc:
            raise RuntimeError(f"iteration {it}: primal solve failed: {exc}") from exc

        energy = estimators.energy_indicators(state)
        qoi = _measure_qoi(named, trial, state.u_coeffs, mesh)
        if initial_qoi is None:
            initial_qoi = qoi
        if named.normalize_by_initial:
            scale = abs(initial_qoi)
            rel = abs(qoi) / scale if scale > 0 else abs(qoi)
        else:
            rel = abs(qoi - named.exact) / abs(named.exact)

        if config.mode.startswith("gmr"):
            dual_spec = _refreshed(
                named.adhoc if config.mode == "gmr_adhoc" else named.dual, mesh)
            try:
                state = solve_dual(trial, test, dual_spec, config.alpha, state)
            except (RuntimeError, ValueError) as exc:
                raise RuntimeError(
                    f"iteration {it}: dual solve failed: {exc}") from exc
            if config.mode == "gmr_explicit":
                star = estimators.explicit_star_indicators(state, dual_spec)
            elif config.mode == "gmr_implicit":
                star = estimators.implicit_star_indicators(state, dual_spec)
            else:
                star = estimators.adhoc_star_indicators(state, dual_spec)
            marking = estimators.product_indicators(energy, star)
            eta_star = star.total
        else:
            marking = energy
            eta_star = 0.0

        out_of_budget = trial.n_dofs >= config.max_dof
        last_round = it == config.max_iters - 1
        converged = float(marking.values.max()) <= 1e-14
        if out_of_budget or last_round or converged:
            marked = []
        elif config.mode == "uniform":
            marked = [el.id for el in mesh.active_elements]
        else:
            marked = mark_greedy(marking.as_dict(), config.theta)

        log.append(IterationRecord(
            iteration=it,
            dofs=trial.n_dofs,
            elements=len(mesh.active_elements),
            eta=energy.total,
            eta_star=eta_star,
            qoi=qoi,
            qoi_rel_err=rel,
            marked=len(marked),
            wall_ms=(time.perf_counter() - tic) * 1000.0,
        ))
        if not marked:
            break
        mesh = refine(mesh, marked)
    return log


def run_and_report(config: RunConfig) -> ConvergenceLog:
    log = run_amr(config)
    if config.output_dir:
        emit_report(log, config.output_dir)
    return log
