"""``polariton-echo`` command line.

Exit codes: 0 ok, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from polariton_echo.fitting import FitError
from polariton_echo.pulses import pulse_propagator
from polariton_echo.quantities import TWO_PI, ConfigError, tomllib
from polariton_echo.scenarios import SCENARIOS, RunOptions, run

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="override the Monte Carlo master seed")
    p.add_argument("--no-decay", action="store_true", help="disable Rydberg radiative decay")
    p.add_argument("--ideal-pulses", action="store_true", help="perfect pulses with first-order phases")
    p.add_argument("--points", type=int, default=None, help="number of grid points")
    p.add_argument("--tmin", type=float, default=None, help="grid start (us; sweep: file units)")
    p.add_argument("--tmax", type=float, default=None, help="grid stop (us; sweep: file units)")
    p.add_argument("--od-map", choices=("saturating", "linear"), default="saturating")
    p.add_argument("--weighted", action="store_true", help="weight fits by 1/sigma^2")
    p.add_argument("--no-mc", action="store_true", help="skip Monte Carlo curves")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $POLARITON_ECHO_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polariton-echo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("input", help="dataset CSV" if name == "fit" else "config TOML")
        _add_run_flags(p)
        if name == "fit":
            p.add_argument("--model", choices=("M1", "M2", "M3"), default="M1")
        if name == "sweep":
            p.add_argument("--param", required=True, help="config file key to scan, e.g. temperature_uK")

    prop = sub.add_parser("propagator", help="print one pulse propagator (debug)")
    prop.add_argument("--omega-r", type=float, required=True, help="Rabi frequency (MHz)")
    prop.add_argument("--detuning", type=float, default=0.0, help="detuning (MHz)")
    prop.add_argument("--duration", type=float, required=True, help="pulse duration (us)")
    prop.add_argument("--chi", type=float, default=0.0, help="spatial phase (rad)")
    return parser


def _propagator(args) -> int:
    u = pulse_propagator(TWO_PI * args.omega_r * 1e6, TWO_PI * args.detuning * 1e6, args.duration * 1e-6, args.chi)
    for (i, j), value in np.ndenumerate(u.matrix):
        print(f"U{i + 1}{j + 1} = {value.real:+.12e} {value.imag:+.12e}j")
    print(f"transfer_probability = {u.transfer_probability:.12e}")
    print(f"unitarity_error = {u.unitarity_error():.3e}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.scenario == "propagator":
        return _propagator(args)

    scale = 1.0 if args.scenario == "sweep" else 1e-6
    opts = RunOptions(
        seed=args.seed,
        decay=not args.no_decay,
        ideal_pulses=args.ideal_pulses,
        points=args.points,
        tmin=None if args.tmin is None else args.tmin * scale,
        tmax=None if args.tmax is None else args.tmax * scale,
        od_map=args.od_map,
        weighted=args.weighted,
        model=getattr(args, "model", "M1"),
        threads=args.threads,
        param=getattr(args, "param", None),
        mc=not args.no_mc,
    )
    try:
        manifest = run(args.scenario, args.input, args.out, opts)
    except (ConfigError, tomllib.TOMLDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.scenario == "fit":
        print((Path(args.out) / "fit.txt").read_text(), end="")
    else:
        for entry in manifest.outputs:
            print(Path(args.out) / entry["file"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
