"""Command-line front end.

    emff run <scenario> [--seed N] [--out DIR] [--dt X] [--duration T] [--mode direct|dipole]
    emff check <scenario> [--samples N] [--seed N] [--out FILE]
    emff sweep <scenario> --seeds a..b [--out DIR] [--workers N]

<scenario> is a YAML path or the name of a bundled scenario.
Exit codes: 0 success, 2 validation error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import EmffError, ScenarioError
from .scenario import load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("emff")


def _seed_range(text):
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError("seeds must look like a..b, e.g. 0..9")
    a, b = int(m.group(1)), int(m.group(2))
    if b < a:
        raise argparse.ArgumentTypeError("seed range is empty")
    return range(a, b + 1)


def _positive(kind):
    def parse(text):
        val = kind(text)
        if val <= 0:
            raise argparse.ArgumentTypeError("must be positive")
        return val
    return parse


def build_parser():
    p = argparse.ArgumentParser(prog="emff", description="EMFF swarm simulation and analysis")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("scenario", help="scenario YAML path or bundled name")
        sp.add_argument("--dt", type=_positive(float), help="integration step [s]")
        sp.add_argument("--duration", type=_positive(float), help="horizon [s]")
        sp.add_argument("--mode", choices=("direct", "dipole"), help="control mode")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    r = sub.add_parser("run", help="simulate one closed-loop trajectory")
    run_opts(r)
    r.add_argument("--seed", type=int, help="initial-condition seed")
    r.add_argument("--out", type=Path, help="output directory")

    c = sub.add_parser("check", help="controllability report at sampled states")
    c.add_argument("scenario")
    c.add_argument("--samples", type=_positive(int), default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", type=Path, help="report file (default: stdout)")

    s = sub.add_parser("sweep", help="run a range of seeds concurrently")
    run_opts(s)
    s.add_argument("--seeds", type=_seed_range, required=True, help="inclusive range a..b")
    s.add_argument("--out", type=Path, help="output directory")
    s.add_argument("--workers", type=_positive(int), default=None)
    return p


def _run_one(scenario, seed, out_dir, dt, duration, mode, figures):
    from .output import write_run_outputs
    from .simulate import simulate

    scn = load_scenario(scenario).with_overrides(seed=seed, dt=dt, duration=duration, mode=mode)
    result = simulate(scn)
    write_run_outputs(result, scn.swarm, out_dir, figures=figures)
    return result.summary()


def _default_out(scenario, seed):
    return Path("runs") / f"{Path(str(scenario)).stem}_seed{seed}"


def cmd_run(args):
    scn = load_scenario(args.scenario)
    seed = scn.initial.seed if args.seed is None else args.seed
    out = args.out or _default_out(args.scenario, seed)
    summary = _run_one(args.scenario, seed, out, args.dt, args.duration, args.mode,
                       not args.no_figures)
    for k, v in summary.items():
        print(f"{k}: {v}")
    print(f"output: {out}")
    return EXIT_OK if summary["status"] == "ok" else EXIT_NUMERICAL


def cmd_check(args):
    from .report import report_controllability

    scn = load_scenario(args.scenario)
    text = report_controllability(scn, args.samples, args.seed)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
        print(f"report: {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args):
    load_scenario(args.scenario)
    out = args.out or Path("runs") / f"{Path(str(args.scenario)).stem}_sweep"
    out.mkdir(parents=True, exist_ok=True)
    jobs = {}
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        for seed in args.seeds:
            jobs[seed] = pool.submit(_run_one, args.scenario, seed, out / f"seed_{seed}",
                                     args.dt, args.duration, args.mode, not args.no_figures)
        rows = []
        for seed, fut in jobs.items():
            s = fut.result()
            rows.append((seed, s["status"], s["initial_error_norm"], s["final_error_norm"],
                         s["error_ratio"], s["error_ratio"] <= 0.1 and s["status"] == "ok"))
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "status", "initial_error_norm", "final_error_norm",
                    "error_ratio", "converged"])
        w.writerows(rows)
    for row in rows:
        print(f"seed {row[0]}: {row[1]} ratio={row[4]:.4g} converged={row[5]}")
    print(f"converged: {sum(r[5] for r in rows)}/{len(rows)}")
    print(f"output: {out}")
    return EXIT_OK if all(r[1] == "ok" for r in rows) else EXIT_NUMERICAL


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "check": cmd_check, "sweep": cmd_sweep}[args.command]
    try:
        return handler(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EmffError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
