"""Command-line front end: ``dtirc <command> [options]``.

Exit codes: 0 success or acceptance, 2 certification rejection,
3 input or format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .discretize import (
    DEMO_SAMPLE_PERIOD,
    DEMO_ZETA,
    ModalSpec,
    build_modal_plant,
    demo_spec,
    zoh_sample,
)
from .errors import (
    AssumptionError,
    DefinitenessError,
    DimensionError,
    FormatError,
    PoleEvaluationError,
    UnitEigenvalueError,
)
from .interconnect import certify_closed_loop, closed_loop_system
from .irc_design import IrcParams, build_irc, synthesize_params
from .ni_cert import find_certificate, load_certificate, verify_candidate
from .sim_analysis import (
    Signal,
    closed_loop_frf,
    damping_report,
    frf,
    frf_csv,
    gamma_sweep,
    log_grid,
    simulate,
    trajectory_csv,
)
from .state_space import DiscreteStateSpace, as_matrix, dc_gain

EXIT_OK = 0
EXIT_REJECTED = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

REFERENCE_REDUCTION_DB = 14.4  # hardware measurement; plant parameters unpublished

DEFAULTS = {
    "ts": DEMO_SAMPLE_PERIOD,
    "band": [1e3, 1e5],
    "out": ".",
    "tol": 1e-9,
    "seed": 0,
    "beta": 0.5,
    "steps": 20000,
    "signal": "step",
    "amplitude": 1.0,
    "points_per_decade": 2000,
    "zeta": DEMO_ZETA,
    "gammas": [0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0],
    "gamma": 0.01,
    "d": -3.0,
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# --- input helpers -----------------------------------------------------------


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"{what} file not found: {path}") from None
    except IsADirectoryError:
        raise FormatError(f"{what} path is a directory: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def _json_or_file(text, what):
    """Literal JSON if it parses, else a path to a JSON file."""
    try:
        return json.loads(text)
    except (json.JSONDecodeError, TypeError):
        return _read_json(text, what)


def load_plant(path, ts):
    """A discrete model file, or a modal spec file sampled with ZOH at ``ts``."""
    data = _read_json(path, "model")
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a JSON object")
    if "modes" in data:
        return zoh_sample(build_modal_plant(ModalSpec.from_dict(data)), ts)
    return DiscreteStateSpace.from_dict(data)


def _load_params(args):
    if args.params is None:
        raise FormatError("--params is required")
    return IrcParams.from_dict(_json_or_file(args.params, "params"))


def _require_model(args):
    if args.model is None:
        raise FormatError("--model is required")
    return load_plant(args.model, args.ts)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_outputs(out_dir, files):
    """Write every file only after all computation succeeded; each via rename."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, out / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    return [out / n for n in files]


def _plant_certificate(plant, args):
    if getattr(args, "P", None):
        return verify_candidate(plant, load_certificate(args.P), args.tol)
    return find_certificate(plant, tol=args.tol)


# --- commands ----------------------------------------------------------------


def cmd_design(args):
    if (args.model is None) == (args.g1 is None):
        raise FormatError("give exactly one of --model or --g1")
    if args.g1 is not None:
        G1 = as_matrix(_json_or_file(args.g1, "G1"), "G1")
        source = "literal G1"
    else:
        plant = _require_model(args)
        G1 = dc_gain(plant)
        source = f"dc gain of {args.model}"
    params = synthesize_params(G1, args.delta, args.beta)
    G1s = 0.5 * (G1 + G1.T)
    m_low = params.sani_margin
    m_high = float(np.linalg.eigvalsh(-params.D - G1s)[0])
    print(f"G(1) from {source}: eigenvalues {np.linalg.eigvalsh(G1s).tolist()}")
    print(f"D     = {params.D.tolist()}")
    print(f"Gamma = {params.Gamma.tolist()}")
    print(f"margin D > -2 Gamma^-1 : {m_low:.6g}")
    print(f"margin D < -G(1)       : {m_high:.6g}")
    write_outputs(args.out, {"params.json": _dump(params.to_dict())})
    return EXIT_OK


def cmd_verify_ni(args):
    plant = _require_model(args)
    cert = _plant_certificate(plant, args)
    write_outputs(args.out, {"certificate.json": _dump(cert.to_dict())})
    if cert.accepted:
        how = "verified" if args.P else f"found after {cert.iterations} iterations"
        print(f"NI certificate {how}")
        print(f"min eig P = {cert.min_eig_P:.6g}, max eig A'PA-P = {cert.max_eig_lyap:.6g}, "
              f"equality residual = {cert.equality_residual:.3g}")
        return EXIT_OK
    print("NI certificate REJECTED")
    detail = getattr(cert, "failures", None) or (getattr(cert, "reason", ""),)
    for line in detail:
        print(f"  {line}")
    if not args.P:
        print("  (search result is advisory; it does not prove the plant is not NI)")
    return EXIT_REJECTED


def cmd_verify_cl(args):
    plant = _require_model(args)
    params = _load_params(args)
    cert = _plant_certificate(plant, args)
    P = cert.P if cert.accepted else getattr(cert, "P", getattr(cert, "P_last", None))
    cl = certify_closed_loop(plant, P, params, args.tol)
    print(cl.table())
    write_outputs(args.out, {"closed_loop_certificate.json": _dump(cl.to_dict())})
    return EXIT_OK if cl.accepted else EXIT_REJECTED


def _signal(args):
    if args.signal == "sine":
        return Signal("sine", args.amplitude, args.freq)
    return Signal(args.signal, args.amplitude)


def cmd_simulate(args):
    plant = _require_model(args)
    rng = np.random.default_rng(args.seed)
    files = {}
    sig = _signal(args)
    x0 = None
    if args.random_x0:
        x0 = rng.standard_normal(plant.n)
    files["trajectory_open.csv"] = trajectory_csv(simulate(plant, sig, x0, args.steps))
    if args.params is not None:
        params = _load_params(args)
        cl = closed_loop_system(plant, build_irc(params, plant.sample_period))
        z0 = None if x0 is None else np.concatenate([x0, np.zeros(plant.p)])
        files["trajectory_closed.csv"] = trajectory_csv(simulate(cl, sig, z0, args.steps))
    for p in write_outputs(args.out, files):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_frf(args):
    plant = _require_model(args)
    grid = log_grid(*args.band, args.points_per_decade)
    files = {"frf_open.csv": frf_csv(frf(plant, grid))}
    if args.params is not None:
        ctrl = build_irc(_load_params(args), plant.sample_period)
        files["frf_closed.csv"] = frf_csv(closed_loop_frf(plant, ctrl, grid))
    for p in write_outputs(args.out, files):
        print(f"wrote {p}")
    return EXIT_OK


def _print_report(rep):
    print(f"open-loop peak   {rep.open_peak_db:8.3f} dB at {rep.open_peak_hz:.3f} Hz")
    print(f"closed-loop peak {rep.closed_peak_db:8.3f} dB at {rep.closed_peak_hz:.3f} Hz")
    print(f"reduction        {rep.reduction_db:8.3f} dB")


def cmd_report(args):
    plant = _require_model(args)
    ctrl = build_irc(_load_params(args), plant.sample_period)
    rep = damping_report(plant, ctrl, args.band, args.points_per_decade)
    _print_report(rep)
    write_outputs(args.out, {"damping.json": _dump(rep.to_dict())})
    return EXIT_OK


def cmd_sweep(args):
    plant = _require_model(args)
    P = None
    if args.P:
        P = load_certificate(args.P)
    entries = gamma_sweep(plant, args.d, args.gammas, args.band, P, args.points_per_decade)
    for e in entries:
        g = e.gamma.ravel()[0] if e.gamma.size == 1 else e.gamma.tolist()
        if e.admissible:
            status = "certified" if e.certified else "NOT certified"
            print(f"Gamma={g}: {status}, rho={e.spectral_radius:.8f}, "
                  f"reduction={e.report.reduction_db:.3f} dB")
        else:
            print(f"Gamma={g}: inadmissible ({e.reason})")
    write_outputs(args.out, {"sweep.json": _dump([e.to_dict() for e in entries])})
    return EXIT_OK


def cmd_demo(args):
    """Synthetic single-mode stage, IRC with Gamma=0.01, D=-3, full artifact bundle."""
    ts = args.ts
    if args.model is not None:
        plant = load_plant(args.model, ts)
        spec_note = f"plant from {args.model}"
    else:
        spec = demo_spec(args.zeta)
        plant = zoh_sample(build_modal_plant(spec), ts)
        spec_note = "synthetic modal plant (damping ratio and G(0)=1 are assumed values)"
    params = IrcParams(args.gamma, args.d) if args.params is None else _load_params(args)
    ctrl = build_irc(params, ts)

    cert = find_certificate(plant, tol=args.tol)
    if not cert.accepted:
        raise CliError(f"no NI certificate for the plant: {cert.reason}", EXIT_REJECTED)
    cl = certify_closed_loop(plant, cert, params, args.tol)
    grid = log_grid(*args.band, args.points_per_decade)
    open_curve = frf(plant, grid)
    closed_curve = closed_loop_frf(plant, ctrl, grid)
    rep = damping_report(plant, ctrl, args.band, args.points_per_decade)
    step_open = simulate(plant, "step", None, args.steps)
    step_closed = simulate(closed_loop_system(plant, ctrl), "step", None, args.steps)

    summary = {
        "scenario": spec_note,
        "sample_period": ts,
        "params": params.to_dict(),
        "G1": dc_gain(plant).tolist(),
        "ni_certificate": {
            "accepted": cert.accepted,
            "iterations": cert.iterations,
            "min_eig_P": cert.min_eig_P,
            "max_eig_lyap": cert.max_eig_lyap,
            "equality_residual": cert.equality_residual,
        },
        "closed_loop": {
            "accepted": cl.accepted,
            "spectral_radius": cl.spectral_radius,
            "min_eig_Q": cl.min_eig_Q,
            "max_eig_decrement": cl.max_eig_decrement,
            "margins": {c.name: c.margin for c in cl.conditions_report},
        },
        "damping": rep.to_dict(),
        "reference_reduction_db": REFERENCE_REDUCTION_DB,
    }
    files = {
        "plant.json": _dump(plant.to_dict()),
        "params.json": _dump(params.to_dict()),
        "certificate.json": _dump(cert.to_dict()),
        "closed_loop_certificate.json": _dump(cl.to_dict()),
        "frf_open.csv": frf_csv(open_curve),
        "frf_closed.csv": frf_csv(closed_curve),
        "step_open.csv": trajectory_csv(step_open),
        "step_closed.csv": trajectory_csv(step_closed),
        "damping.json": _dump(rep.to_dict()),
        "summary.json": _dump(summary),
    }
    write_outputs(args.out, files)

    print(spec_note)
    print(cl.table())
    _print_report(rep)
    print(f"computed reduction {rep.reduction_db:.2f} dB | "
          f"reference hardware reduction {REFERENCE_REDUCTION_DB:.1f} dB "
          "(not reproducible: hardware plant parameters unpublished)")
    print(f"wrote {len(files)} files to {args.out}")
    return EXIT_OK if cl.accepted else EXIT_REJECTED


COMMANDS = {
    "design": cmd_design,
    "verify-ni": cmd_verify_ni,
    "verify-cl": cmd_verify_cl,
    "simulate": cmd_simulate,
    "frf": cmd_frf,
    "report": cmd_report,
    "sweep": cmd_sweep,
    "demo": cmd_demo,
}


# --- argument parsing --------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file supplying any option; command line wins")
    common.add_argument("--model", help="discrete model JSON or modal spec JSON")
    common.add_argument("--params", help="IRC params JSON file or literal JSON")
    common.add_argument("--P", help="storage matrix / certificate JSON (skips the search)")
    common.add_argument("--ts", type=float, help="sample period for modal specs [s]")
    common.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"), help="band [Hz]")
    common.add_argument("--points-per-decade", dest="points_per_decade", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--tol", type=float)
    common.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(
        prog="dtirc",
        description="Discrete-time IRC design and NI stability certification.",
        epilog="exit codes: 0 ok, 2 rejected, 3 input error, 4 numerical failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], argument_default=argparse.SUPPRESS, help="synthesize Gamma and D")
    p.add_argument("--g1", help="G(1) as literal JSON or a JSON file")
    p.add_argument("--delta", type=float)
    p.add_argument("--beta", type=float)

    sub.add_parser("verify-ni", parents=[common], argument_default=argparse.SUPPRESS, help="check or search an NI certificate")
    sub.add_parser("verify-cl", parents=[common], argument_default=argparse.SUPPRESS, help="certify closed-loop stability")

    p = sub.add_parser("simulate", parents=[common], argument_default=argparse.SUPPRESS, help="time-domain simulation to CSV")
    p.add_argument("--signal", choices=["zero", "step", "impulse", "sine"])
    p.add_argument("--amplitude", type=float)
    p.add_argument("--freq", type=float, help="sine frequency [Hz]")
    p.add_argument("--steps", type=int)
    p.add_argument("--random-x0", dest="random_x0", action="store_true", default=argparse.SUPPRESS,
                   help="random initial plant state drawn with --seed")

    sub.add_parser("frf", parents=[common], argument_default=argparse.SUPPRESS, help="frequency responses to CSV")
    sub.add_parser("report", parents=[common], argument_default=argparse.SUPPRESS, help="damping report")

    p = sub.add_parser("sweep", parents=[common], argument_default=argparse.SUPPRESS, help="damping versus Gamma at fixed D")
    p.add_argument("--d", type=float)
    p.add_argument("--gammas", type=float, nargs="+")

    p = sub.add_parser("demo", parents=[common], argument_default=argparse.SUPPRESS, help="single-mode stage scenario")
    p.add_argument("--zeta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--steps", type=int)
    return parser


_NONE_DEFAULTS = ("config", "model", "params", "P", "g1", "delta", "freq")


def resolve_args(argv=None):
    args = build_parser().parse_args(argv)
    given = vars(args)
    if given.get("config"):
        config = _read_json(given["config"], "config")
        if not isinstance(config, dict):
            raise FormatError("config must be a JSON object")
        for key, value in config.items():
            key = key.replace("-", "_")
            given.setdefault(key, value)
    for key, value in DEFAULTS.items():
        given.setdefault(key, value)
    for key in _NONE_DEFAULTS:
        given.setdefault(key, None)
    given.setdefault("random_x0", False)
    if given.get("signal") == "sine" and given.get("freq") is None:
        raise FormatError("--signal sine needs --freq")
    return argparse.Namespace(**given)


def main(argv=None):
    try:
        args = resolve_args(argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FormatError, DimensionError, DefinitenessError, FileNotFoundError, ValueError) as exc:
        if isinstance(exc, AssumptionError):
            print(f"rejected: {exc}", file=sys.stderr)
            return EXIT_REJECTED
        if isinstance(exc, (UnitEigenvalueError, PoleEvaluationError)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
