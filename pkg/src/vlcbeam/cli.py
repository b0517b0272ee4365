"""Command-line entry point.

Subcommands:
  solve     one max-min-fair design from a config, JSON solution to --out
  sweep     run the configured sweep, CSV results to --out (+ user sidecar)
  validate  Monte-Carlo re-check of a stored solution against its config
  oracle    exhaustive small-instance reference value from a config
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench, driver, rates, scene
from .sigdist import solve_distribution


def _read_config(path):
    with open(path) as fh:
        return fh.read()


def _load(args):
    scenario, sweep = bench.load_scenario(_read_config(args.config))
    return scenario, sweep


def _solution_dict(sol):
    return {
        "common_beam": sol.common_beam.tolist(),
        "private_beams": [p.tolist() for p in sol.private_beams],
        "common_shares": sol.common_shares.tolist(),
        "mmf_value": sol.mmf_value,
        "per_user_private": sol.per_user_private.tolist(),
        "common_bound": sol.common_bound,
        "outer_iters": sol.diagnostics["outer_iters"],
        "converged": sol.diagnostics["converged"],
        "scheme": sol.diagnostics["scheme"],
    }


def _write_out(payload, out):
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args):
    scenario, _ = _load(args)
    config = driver.DriverConfig(seed=args.seed, verbose=args.verbose)
    sol = driver.run_mmf(scenario, config)
    _write_out(_solution_dict(sol), args.out)
    return 0


def cmd_sweep(args):
    scenario, sweep = _load(args)
    if not sweep.get("values"):
        print("error: config has no [sweep] values", file=sys.stderr)
        return 2
    spec = bench.SweepSpec(
        axis=sweep["axis"],
        values=sweep["values"],
        base_scenario=scenario,
        schemes=sweep["schemes"],
        seed=args.seed,
        snr_db=sweep["snr_db"],
        samples=args.samples,
        config=driver.DriverConfig(seed=args.seed, verbose=args.verbose),
    )
    rows = bench.run_sweep(spec)
    if args.out:
        bench.emit_csv(rows, args.out)
        # sidecar with the user geometry the sweep actually used
        with open(args.out + ".users.csv", "w") as fh:
            fh.write("user,x,y,z\n")
            for k, c in enumerate(scenario.user_centers):
                fh.write(f"{k},{c[0]:.6g},{c[1]:.6g},{c[2]:.6g}\n")
    else:
        bench.emit_csv(rows, sys.stdout)
    return 0


def cmd_validate(args):
    scenario, _ = _load(args)
    with open(args.solution) as fh:
        data = json.load(fh)
    sol = rates.BeamformingSolution(
        common_beam=np.asarray(data["common_beam"], dtype=float),
        private_beams=[np.asarray(p, dtype=float) for p in data["private_beams"]],
        common_shares=np.asarray(data["common_shares"], dtype=float),
        mmf_value=float(data["mmf_value"]),
        per_user_private=np.asarray(data["per_user_private"], dtype=float),
        common_bound=float(data["common_bound"]),
        diagnostics={},
    )
    ests = [scene.estimate_csit(scenario, k) for k in range(scenario.num_users)]
    d = solve_distribution(scenario.params.amplitude, scenario.params.variance)
    rep = rates.worst_case_validate(
        ests, sol, [d] * (scenario.num_users + 1),
        scenario.params.noise_power, samples=args.samples, seed=args.seed,
    )
    payload = {
        "private_margin": rep.private_margin,
        "common_margin": rep.common_margin,
        "samples": rep.samples,
        "passed": bool(min(rep.private_margin, rep.common_margin) >= -1e-6),
    }
    _write_out(payload, args.out)
    return 0 if payload["passed"] else 1


def cmd_oracle(args):
    scenario, _ = _load(args)
    if scenario.num_leds > 2 or scenario.num_users != 1:
        print("error: oracle needs at most 2 LEDs and exactly 1 user",
              file=sys.stderr)
        return 2
    est = scene.estimate_csit(scenario, 0)
    d = solve_distribution(scenario.params.amplitude, scenario.params.variance)
    value = driver.brute_force_oracle(
        est.h_hat, [d, d], scenario.params.noise_power,
        scenario.total_power, scenario.params.optical_limit,
        grid_points=args.grid_points,
    )
    _write_out({"oracle_value": value}, args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vlcbeam",
        description="Robust max-min-fair beamforming for LED downlinks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--samples", type=int, default=500,
                       help="Monte-Carlo validation samples")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("solve", help="single max-min-fair design")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run the configured parameter sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="re-check a stored solution")
    common(p)
    p.add_argument("--solution", required=True, help="JSON solution file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="exhaustive small-instance reference")
    common(p)
    p.add_argument("--grid-points", type=int, default=60)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
