"""``drio`` command-line interface.

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 64 usage error.
Files use nanoseconds and rad/ns.  A JSON ``--config`` file may preset any
option, globally or under a per-command section; explicit flags win.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .control import WaveformError, load_waveform, save_waveform
from .digitize import SubpulseTrain, TimescaleError, TrainError, digitize, taylor_phase_correction, validate
from .optimizer import DetuningAnsatz, InfeasibleError, RobustnessConstraints, optimize
from .propagate import PropagationError, propagate
from .protocols import NAMES, UnknownProtocol, profile_tag, protocol_control, protocol_train
from .robustness import FitError, ScanError, default_grid, profiles_to_csv, scan, summary
from .schedule import DEFAULT_DT_NS, ScheduleError, export_schedule, parse_schedule

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_USAGE = 0, 2, 3, 64
SYNTH_PROTOCOL = {3: "drio3", 5: "drio5"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def frequency_note(rabi):
    """Rabi frequency in rad/ns, with the 'Omega in rad/us read as MHz' convention alongside."""
    return (f"Omega = {rabi:.6g} rad/ns (= {rabi * 1e3:.3g} rad/us, quoted as '{rabi * 1e3:.3g} MHz' "
            f"in the rad/us-as-MHz convention; Omega/2pi = {rabi * 1e3 / (2 * math.pi):.4g} MHz)")


# --- subject resolution -------------------------------------------------------------------

def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise WaveformError(f"cannot read {path}: {exc}") from None


def load_subject(spec, model, args):
    """Protocol name, train file, waveform file or schedule file -> train or control."""
    if spec in NAMES:
        if model == "effective":
            return protocol_control(spec, args.rabi, args.duration), profile_tag(spec)
        return (protocol_train(spec, args.rabi, args.duration, args.n_pulses, args.tau_over_sigma),
                profile_tag(spec))
    doc = _read_json(spec)
    if "pulses" in doc:
        return SubpulseTrain.from_dict(doc), "custom"
    if "instructions" in doc:
        return parse_schedule(doc), "custom"
    control = load_waveform(doc)
    if model == "effective":
        return control, "custom"
    return digitize(control, args.n_pulses, args.tau_over_sigma), "custom"


def _model(text):
    if text in ("delta", "full", "effective"):
        return text
    if text.startswith("modes:") and text[6:].isdigit():
        return text
    raise argparse.ArgumentTypeError(f"unknown model tag {text!r} (delta, full, effective, modes:<k>)")


def _grid(text):
    if text == "default":
        return default_grid()
    if text.startswith("uniform:"):
        parts = text.split(":")[1:]
        try:
            n = int(parts[0])
            lo, hi = (float(parts[1]), float(parts[2])) if len(parts) == 3 else (-1.0, 1.0)
        except (ValueError, IndexError):
            raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
        grid = np.linspace(lo, hi, n)
    else:
        try:
            grid = np.array([float(v) for v in text.split(",")])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if grid.size == 0 or np.any(np.abs(grid) > 1.0):
        raise argparse.ArgumentTypeError("alpha grid must lie within [-1, 1]")
    return grid


def _window(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window {text!r}; use lo,hi") from None
    return lo, hi


# --- commands -------------------------------------------------------------------------------

def cmd_synth(args):
    if (args.rabi is None) == (args.duration is None):
        raise UsageError("give exactly one of --rabi or --duration")
    name = args.protocol or SYNTH_PROTOCOL[args.order]
    control = protocol_control(name, args.rabi, args.duration)
    save_waveform(control, args.out, n_samples=args.samples)
    print(f"{name}: T = {control.duration:.6g} ns, T*Omega = {control.area_multiple:.6g} pi")
    print(frequency_note(control.rabi_amplitude))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_digitize(args):
    control = load_waveform(args.waveform)
    train = digitize(control, args.n_pulses, args.tau_over_sigma, args.shape)
    train = taylor_phase_correction(train, control, order=args.taylor_correction)
    report = validate(train, args.threshold)
    train.save(args.out)
    sys.stdout.write(_dump({"train": args.out, "sigma_ns": train.sigma, "tau_ns": train.tau,
                            "total_area_over_pi": train.total_area / math.pi, "validity": report.to_dict()}))
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_simulate(args):
    subject, _ = load_subject(args.subject, args.model, args)
    traj = propagate(subject, args.model, args.tolerance)
    _emit(traj.to_csv(), args.out)
    print(f"final population |2>: {traj.final_population:.12g} (infidelity {1 - traj.final_population:.3e})",
          file=sys.stderr)
    return EXIT_OK


def cmd_scan(args):
    if not args.subjects:
        raise UsageError("give at least one subject")
    profiles = []
    for spec in args.subjects:
        subject, tag = load_subject(spec, args.model, args)
        if tag == "custom":
            tag = spec if spec in NAMES else Path(spec).stem
        profiles.append(scan(subject, args.grid, args.model, tag, args.tolerance, args.workers))
    _emit(profiles_to_csv(profiles), args.out)
    text = _dump(summary(profiles, window=args.window))
    if args.summary:
        Path(args.summary).write_text(text)
    else:
        sys.stderr.write(text)
    return EXIT_OK


def cmd_optimize(args):
    ansatz = DetuningAnsatz(args.n_coeffs, args.basis, args.delta_cap, not args.asymmetric)
    constraints = RobustnessConstraints(args.order, args.derivative_tolerance)
    duration = None if args.duration_over_pi is None else args.duration_over_pi * math.pi / args.rabi
    control, report = optimize(args.order, args.rabi, ansatz, seed=args.seed, n_starts=args.starts,
                               duration=duration, constraints=constraints, max_workers=args.workers)
    save_waveform(control, args.out, n_samples=args.samples)
    doc = report.to_dict()
    if args.report:
        Path(args.report).write_text(_dump(doc))
    print(f"order {args.order}: T*Omega = {report.T_times_omega_over_pi:.8f} pi, "
          f"max residual {max(abs(r) for r in report.residuals):.3e}, accepted={report.accepted}, "
          f"{report.wall_time:.1f} s")
    return EXIT_OK if report.accepted else EXIT_INVALID


def cmd_export(args):
    doc = _read_json(args.train)
    train = parse_schedule(doc) if "instructions" in doc else SubpulseTrain.from_dict(doc)
    schedule = export_schedule(train, args.dt, args.max_rabi, args.channel)
    _emit(schedule.to_json(), args.out)
    return EXIT_OK


def cmd_validate(args):
    doc = _read_json(args.train)
    train = parse_schedule(doc) if "instructions" in doc else SubpulseTrain.from_dict(doc)
    report = validate(train, args.threshold)
    sys.stdout.write(_dump(report.to_dict()))
    return EXIT_OK if report.passed else EXIT_INVALID


# --- parser ----------------------------------------------------------------------------------

def _add_geometry(p):
    p.add_argument("--rabi", type=float, help="Rabi amplitude for named protocols (rad/ns)")
    p.add_argument("--duration", type=float, help="total duration for named protocols (ns)")
    p.add_argument("--n-pulses", type=int, default=15)
    p.add_argument("--tau-over-sigma", type=float, default=6.0)


def build_parser():
    parser = Parser(prog="drio", description="Digital robust inverse-optimised qubit control.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file presetting options")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {}

    p = cmds["synth"] = sub.add_parser("synth", help="write a continuous waveform file")
    p.add_argument("--order", type=int, choices=(3, 5), default=3)
    p.add_argument("--protocol", choices=NAMES, help="named protocol instead of --order")
    p.add_argument("--rabi", type=float, help="Rabi amplitude (rad/ns)")
    p.add_argument("--duration", type=float, help="duration (ns)")
    p.add_argument("--samples", type=int, default=1001)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = cmds["digitize"] = sub.add_parser("digitize", help="waveform -> Gaussian subpulse train")
    p.add_argument("waveform")
    p.add_argument("--n-pulses", type=int, default=15)
    p.add_argument("--tau-over-sigma", type=float, default=6.0)
    p.add_argument("--shape", choices=("gaussian", "square"), default="gaussian")
    p.add_argument("--taylor-correction", type=int, choices=(0, 1), default=0)
    p.add_argument("--threshold", type=float, default=5.0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_digitize)

    p = cmds["simulate"] = sub.add_parser("simulate", help="trajectory CSV")
    p.add_argument("subject", help=f"train/waveform/schedule file or one of {', '.join(NAMES)}")
    p.add_argument("--model", type=_model, default="delta")
    p.add_argument("--tolerance", type=float, default=1e-10)
    _add_geometry(p)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_simulate)

    p = cmds["scan"] = sub.add_parser("scan", help="robustness profiles and fitted orders")
    p.add_argument("subjects", nargs="*")
    p.add_argument("--grid", type=_grid, default="default",
                   help="'default', 'uniform:N[:lo:hi]' or comma-separated alphas")
    p.add_argument("--model", type=_model, default="delta")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--window", type=_window, default=(0.01, 0.05))
    p.add_argument("--workers", type=int, default=1)
    _add_geometry(p)
    p.add_argument("-o", "--out")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_scan)

    p = cmds["optimize"] = sub.add_parser("optimize", help="time-optimal robust waveform")
    p.add_argument("--order", type=int, choices=(3, 5), default=3)
    p.add_argument("--rabi", type=float, default=1.0)
    p.add_argument("--n-coeffs", type=int, default=8)
    p.add_argument("--basis", choices=("fourier", "chebyshev"), default="fourier")
    p.add_argument("--delta-cap", type=float, default=3.0)
    p.add_argument("--asymmetric", action="store_true", help="drop the odd-symmetry restriction")
    p.add_argument("--derivative-tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts", type=int, default=16)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--duration-over-pi", type=float,
                   help="pin T*Omega/pi instead of minimising it")
    p.add_argument("--samples", type=int, default=1001)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_optimize)

    p = cmds["export"] = sub.add_parser("export", help="train -> pulse schedule JSON")
    p.add_argument("train")
    p.add_argument("--dt", type=float, default=DEFAULT_DT_NS)
    p.add_argument("--max-rabi", type=float)
    p.add_argument("--channel", default="d0")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_export)

    p = cmds["validate"] = sub.add_parser("validate", help="second-RWA and timescale checks")
    p.add_argument("train")
    p.add_argument("--threshold", type=float, default=5.0)
    p.set_defaults(func=cmd_validate)
    return parser, cmds


def _apply_config(parser, cmds, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        config = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(config, dict):
        parser.error("config must be a JSON object")
    shared = {k: v for k, v in config.items() if k not in cmds}
    for name, p in cmds.items():
        dests = {a.dest: a for a in p._actions}
        section = config.get(name, {})
        values = {**{k: v for k, v in shared.items() if k in dests}, **section}
        unknown = [k for k in section if k not in dests]
        if unknown:
            parser.error(f"unknown option(s) {unknown} in config section {name!r}")
        for key, value in values.items():
            action = dests[key]
            if action.type is not None and isinstance(value, str):
                value = action.type(value)
            elif isinstance(value, list) and key in ("grid",):
                value = _grid(",".join(str(v) for v in value))
            elif isinstance(value, list) and key == "window":
                value = tuple(value)
            values[key] = value
        p.set_defaults(**values)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, cmds = build_parser()
    _apply_config(parser, cmds, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        cmds[args.command].print_usage(sys.stderr)
        print(f"drio {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TimescaleError, TrainError, WaveformError, ScheduleError, UnknownProtocol, FitError) as exc:
        print(f"drio {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (PropagationError, ScanError, InfeasibleError) as exc:
        print(f"drio {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"drio {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
