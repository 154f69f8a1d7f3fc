"""Command-line front end: ``fastmc synth | complete | bench``.

Exit codes: 0 success, 2 bad flags or arguments, 3 file-system or format
failure, 4 non-finite numbers during a solve.
"""

import argparse
import contextlib
import csv
import dataclasses
import datetime
import io
import json
import math
import os
import platform
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .completion import CompletionConfig, complete, sample_omega, sample_omega_with_replacement
from .errors import FormatError, NonFinite
from .linalg import write_dmat
from .observed import read_omega, write_omega
from .solver import SolverConfig
from .synth import gen_incoherent, load_ground_truth, save_ground_truth

REPORT_SCHEMA = "report v1"
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NONFINITE = 0, 2, 3, 4

# report fields that depend on the clock, excluded from determinism checks
VOLATILE_KEYS = ("wall_time_ms", "wall_time_ms_total", "wall_time_ms_multireg",
                 "started", "finished")


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    """Everything needed to rerun a command and audit its output."""

    command: str
    argv: list
    config: dict
    seed: int
    paths: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def to_json(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


def _versions():
    import scipy

    return {
        "fastmc": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _manifest(command, argv, config, seed, paths):
    return RunManifest(command, list(argv), config, int(seed), paths, _versions(),
                       {"started": _now()})


def strip_volatile(obj):
    """Copy of a report with the clock-dependent fields removed."""
    if isinstance(obj, dict):
        return {k: strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [strip_volatile(v) for v in obj]
    return obj


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


# ------------------------------------------------------------------ parsers --


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _unit_interval(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1], got {text}")
    return value


def _open_unit(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("sweep values must be positive")
    return vals


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("sweep values must be positive")
    return vals


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _add_problem_flags(p):
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--mu", type=float, default=3.0, help="incoherence target")


def build_parser():
    parser = argparse.ArgumentParser(prog="fastmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fastmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a ground truth and an observation file")
    _add_problem_flags(p)
    p.add_argument("--k", type=_positive_int, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--p", type=_unit_interval, help="Bernoulli sampling probability")
    group.add_argument("--nnz-target", type=_nonneg_int,
                       help="number of uniform draws with replacement")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("complete", help="complete an observed matrix")
    p.add_argument("--omega", required=True, help="'omega v1' file")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--delta", type=_open_unit, default=0.01)
    p.add_argument("--rounds", type=_nonneg_int, default=0, help="0 picks from --eps")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--mu", type=float, default=3.0)
    p.add_argument("--ground-truth", help="directory written by 'fastmc synth'")
    p.add_argument("--force-sketch", action="store_true")
    p.add_argument("--tau-denominator", choices=("n", "m"), default="n")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--factors-dir", help="also write u_hat.dmat and v_ortho.dmat here")
    p.add_argument("--out", default="-", help="report path ('-' for stdout)")

    p = sub.add_parser("bench", help="time completion over an nnz/k sweep")
    _add_problem_flags(p)
    p.add_argument("--k", type=_int_list, required=True, help="comma-separated ranks")
    p.add_argument("--nnz-mult", type=_float_list, required=True,
                   help="comma-separated multipliers c of nnz = c n k ln n")
    p.add_argument("--rounds", type=_positive_int, default=8)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    return parser


# ----------------------------------------------------------------- commands --


def _thread_limit(threads):
    if threads is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def cmd_synth(args, argv=()):
    if args.k > min(args.m, args.n):
        raise UsageError(f"--k {args.k} exceeds min(m, n) = {min(args.m, args.n)}")
    try:
        gt = gen_incoherent(args.m, args.n, args.k, args.kappa, args.mu, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    from .prng import derive_seed

    sample_seed = derive_seed(args.seed, 7)
    if args.p is not None:
        omega = sample_omega(args.m, args.n, args.p, sample_seed, gt)
    else:
        omega = sample_omega_with_replacement(args.m, args.n, args.nnz_target, sample_seed, gt)
    save_ground_truth(gt, args.out_dir)
    omega_path = os.path.join(args.out_dir, "omega.txt")
    write_omega(omega_path, omega)
    config = {k: v for k, v in vars(args).items() if k not in ("command", "out_dir")}
    man = _manifest("synth", argv, config, args.seed,
                    {"out_dir": args.out_dir, "omega": omega_path})
    man.timestamps["finished"] = _now()
    meta = {"schema": "synth v1", "manifest": man.to_json(), "nnz": omega.nnz,
            "n_samples": omega.n_samples, "mu_actual": gt.mu_actual}
    _write_text(os.path.join(args.out_dir, "manifest.json"), dumps(meta))
    return EXIT_OK


def _completion_config(args):
    try:
        return CompletionConfig(
            k=args.k, eps=args.eps, delta=args.delta, t_rounds=args.rounds, mu=args.mu,
            seed=args.seed, tau_denominator=args.tau_denominator,
            force_sketch=args.force_sketch, solver=SolverConfig(),
            workers=args.threads or 1,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def run_complete(args, argv=()):
    """Run the ``complete`` command and return the report as a dict."""
    cfg = _completion_config(args)
    omega = read_omega(args.omega)
    gt = load_ground_truth(args.ground_truth) if args.ground_truth else None
    if cfg.k > min(omega.shape):
        raise UsageError(f"--k {cfg.k} exceeds min(m, n) = {min(omega.shape)}")
    if gt is not None and (gt.shape != omega.shape or gt.k < 1):
        raise UsageError(f"ground truth shape {gt.shape} does not match omega {omega.shape}")
    paths = {"omega": os.path.abspath(args.omega), "out": args.out}
    if args.ground_truth:
        paths["ground_truth"] = os.path.abspath(args.ground_truth)
    man = _manifest("complete", argv, _config_echo(cfg), cfg.seed, paths)
    with _thread_limit(args.threads):
        factors, report = complete(omega, cfg, gt)
    if args.factors_dir:
        os.makedirs(args.factors_dir, exist_ok=True)
        write_dmat(os.path.join(args.factors_dir, "u_hat.dmat"), factors.u_hat)
        write_dmat(os.path.join(args.factors_dir, "v_ortho.dmat"), factors.v_ortho)
    man.timestamps["finished"] = _now()
    body = report.to_json()
    body.update({"schema": REPORT_SCHEMA, "manifest": man.to_json(), "config": _config_echo(cfg),
                 "shape": list(omega.shape), "nnz": omega.nnz})
    return body


def _config_echo(cfg):
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def cmd_complete(args, argv=()):
    body = run_complete(args, argv)
    _write_text(args.out, dumps(body))
    return EXIT_OK


BENCH_COLUMNS = ["m", "n", "k", "nnz", "wall_ms_total", "wall_ms_multireg", "rounds", "final_error"]


def bench_rows(m, n, ks, mults, rounds=8, eps=1e-6, kappa=2.0, mu=3.0, seed=0):
    """One row per ``(k, multiplier)``, ordered by ``k`` then multiplier.

    ``nnz`` counts the draws ``round(c n k ln n)``; ``final_error`` is the
    relative Frobenius error against the generated ground truth.
    """
    if not ks or not mults:
        raise UsageError("empty sweep: need at least one k and one nnz multiplier")
    rows = []
    for k in sorted(ks):
        if k > min(m, n):
            raise UsageError(f"k={k} exceeds min(m, n) = {min(m, n)}")
        gt = gen_incoherent(m, n, k, kappa, mu, seed)
        for c in sorted(mults):
            draws = int(round(c * n * k * math.log(n)))
            omega = sample_omega_with_replacement(m, n, draws, seed + 1, gt)
            cfg = CompletionConfig(k=k, eps=eps, t_rounds=rounds, mu=mu, seed=seed)
            _, rep = complete(omega, cfg, gt)
            rows.append({
                "m": m, "n": n, "k": k, "nnz": draws,
                "wall_ms_total": round(1e3 * rep.total_wall_time, 3),
                "wall_ms_multireg": round(1e3 * rep.multireg_wall_time, 3),
                "rounds": rep.rounds,
                "final_error": rep.final_rel_frob_error,
            })
    return rows


def cmd_bench(args, argv=()):
    with _thread_limit(args.threads):
        rows = bench_rows(args.m, args.n, args.k, args.nnz_mult, args.rounds, args.eps,
                          args.kappa, args.mu, args.seed)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _write_text(args.out, buf.getvalue())
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "complete": cmd_complete, "bench": cmd_bench}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"fastmc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError) as exc:
        print(f"fastmc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonFinite as exc:
        print(f"fastmc: non-finite values: {exc}", file=sys.stderr)
        return EXIT_NONFINITE


if __name__ == "__main__":
    sys.exit(main())
