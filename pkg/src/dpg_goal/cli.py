"""Command-line front end: run an adaptive study, self-test, or compare runs.

Exit codes: 0 on success, 1 on usage/configuration errors, 2 on numerical
failures (solver breakdown or a failed self-test suite).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
import scipy.linalg as sla

from .driver import MODES, RunConfig, load_config, run_amr
from .report import compare_logs, emit_report
from .selftest import format_report, run_selftest


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; keep 2 for numerics
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dpg-goal",
                     description="goal-driven adaptive DPG refinement studies")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one adaptive refinement study")
    run.add_argument("--config", help="TOML configuration file")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--goal")
    run.add_argument("--theta", type=float)
    run.add_argument("--alpha", type=float)
    run.add_argument("--p", type=int)
    run.add_argument("--dp", type=int)
    run.add_argument("--max-dof", type=int, dest="max_dof")
    run.add_argument("--max-iters", type=int, dest="max_iters")
    run.add_argument("--label")
    run.add_argument("--out", dest="output_dir")

    st = sub.add_parser("selftest", help="run the seeded operator property suites")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--inject-fault", dest="inject_fault",
                    choices=["skip-gram-symmetrization"],
                    help="negative control: sabotage one suite's inputs")

    cmp_ = sub.add_parser("compare", help="merge convergence csv logs")
    cmp_.add_argument("--out", dest="output_dir", required=True)
    cmp_.add_argument("logs", nargs="+", help="two or more convergence.csv files")
    return parser


def _cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in
                 ("mode", "goal", "theta", "alpha", "p", "dp",
                  "max_dof", "max_iters", "label", "output_dir")}
    if args.config:
        config = load_config(args.config, overrides)
    else:
        config = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    log = run_amr(config)
    out_dir = config.output_dir or "."
    paths = emit_report(log, out_dir)
    last = log.final
    print(f"{config.run_label()}: {len(log.records)} iterations, "
          f"{last.dofs} dofs, eta {last.eta:.4e}, "
          f"qoi_rel_err {last.qoi_rel_err:.4e}")
    print(f"wrote {paths['csv']}")
    return 0


def _cmd_selftest(args) -> int:
    results = run_selftest(seed=args.seed, inject_fault=args.inject_fault)
    print(format_report(results))
    return 0 if all(r.ok for r in results) else 2


def _cmd_compare(args) -> int:
    paths = compare_logs(args.logs, args.output_dir)
    print(f"wrote {paths['csv']} and {paths['svg']}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "selftest": _cmd_selftest,
               "compare": _cmd_compare}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError) as exc:
        print(f"dpg-goal: error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, sla.LinAlgError, np.linalg.LinAlgError) as exc:
        print(f"dpg-goal: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
