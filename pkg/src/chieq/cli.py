"""Command-line interface.

    chieq run --config FILE [--seed N] [--out DIR]
    chieq converge --config FILE [--out DIR]
    chieq verify [--quick | --full]
    chieq init-config --preset NAME [--out FILE]

Exit codes: 0 success, 1 usage or configuration error, 2 solver failure,
3 verification failure.
"""

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, PRESETS, format_config, load_config, preset
from .convergence import run_convergence
from .runner import SolverFailure, run_simulation
from .verify import run_verification

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with code 2 by default, which is reserved for
        # solver failures here
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser():
    parser = _Parser(prog="chieq",
                     description="Pseudo-spectral phase-field solver with "
                                 "energy-stable quadratized time stepping")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one simulation from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None,
                     help="override the config's random seed")
    run.add_argument("--out", default=None,
                     help="output directory for energy.csv and snapshots")

    conv = sub.add_parser("converge",
                          help="temporal convergence study (grid, parameters "
                               "and tolerances from the config file)")
    conv.add_argument("--config", required=True)
    conv.add_argument("--out", default=None, help="write the report here")

    ver = sub.add_parser("verify", help="run the invariant verification suite")
    lvl = ver.add_mutually_exclusive_group()
    lvl.add_argument("--quick", action="store_true", default=True)
    lvl.add_argument("--full", dest="quick", action="store_false")

    ini = sub.add_parser("init-config", help="emit a named preset config")
    ini.add_argument("--preset", required=True,
                     help="one of: " + ", ".join(sorted(PRESETS)))
    ini.add_argument("--out", default=None, help="write to a file instead of stdout")
    return parser


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    n = cfg.n_steps
    every = max(1, n // 20)

    def progress(step, n_steps, rec):
        if step % every == 0 or step == n_steps:
            print(f"step {step}/{n_steps}  t={rec.time:.6g}  "
                  f"E={rec.e_modified:.9g}  mass={rec.mass:.12g}",
                  file=sys.stderr)

    state, records = run_simulation(cfg, out_dir=args.out, progress=progress)
    last = records[-1]
    print(f"done: {last.step} steps to t = {last.time:g}; "
          f"energy {records[0].e_modified:.9g} -> {last.e_modified:.9g}")
    if args.out:
        print(f"energy log and snapshots in {args.out}")
    return EXIT_OK


def _cmd_converge(args):
    cfg = load_config(args.config)
    report = run_convergence(grid=cfg.grid, params=cfg.params, cfg=cfg.solver,
                             progress=lambda msg: print(msg, file=sys.stderr))
    text = report.format()
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    return EXIT_OK


def _cmd_verify(args):
    level = "quick" if args.quick else "full"
    report = run_verification(level)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_VERIFY


def _cmd_init_config(args):
    text = format_config(preset(args.preset))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "converge":
            return _cmd_converge(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_init_config(args)
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
