"""Command-line front end: ``tdfdr <subcommand> ...``.

Subcommands
-----------
compete    two-group CSV -> ``index,label,score``
knockoff   design + response CSVs -> ``index,label,score`` (optionally W stats)
fdr        ``index,label,score`` -> ``index,label,score,fdr,selected_at_q``
select     selected indices from a label/score CSV or knockoff statistics
simulate   JSON config -> metrics.csv, summary.csv, pi0_scatter.csv
pi0        null proportion estimates of a label/score CSV as JSON

Every run writes a JSON manifest next to its output. Exit codes: 0 success,
2 input or configuration error, 3 statistical precondition failure, 1
internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .core import CompetitionResult, format_float, make_rng
from .estimator import DEFAULT_EPSILON, DEFAULT_L_MAX, fit_fdr, select_at, estimate_pi0, estimate_pi0t
from .exceptions import ConfigError, InputError, PreconditionError, TdfdrError
from .knockoff import DEFAULT_GRID_SIZE, construct_knockoffs, knockoff_select, knockoff_stats, to_competition
from .simulation import SimulationConfig, run_experiment, write_outputs
from .two_group import TwoGroupData, compete, td_select

SEED_ENV = "TDFDR_SEED"

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_PRECONDITION = 3


# -- input parsing ----------------------------------------------------------

def _open_text(path, flag):
    try:
        with open(path, newline="") as fh:
            return fh.read()
    except FileNotFoundError:
        raise InputError(f"{flag}: file not found: {path}") from None
    except OSError as exc:
        raise InputError(f"{flag}: cannot read {path}: {exc.strerror}") from None


def read_matrix(text, name="input"):
    """Numeric CSV with a header row -> (header, float matrix).

    Errors name the file and the offending line.
    """
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise InputError(f"{name}: line 1: empty file, expected a header row") from None
    width = len(header)
    data = []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise InputError(f"{name}: line {lineno}: expected {width} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise InputError(f"{name}: line {lineno}: not a number: {bad!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{name}: line {lineno}: non-finite value")
        data.append(vals)
    if not data:
        raise InputError(f"{name}: no data rows")
    return header, np.array(data, dtype=np.float64)


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_vector(text, name="response"):
    """Single-column numeric CSV; a non-numeric first line is a header."""
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if lines and not _is_float(lines[0][1]):
        lines = lines[1:]
    vals = []
    for lineno, ln in lines:
        if "," in ln:
            raise InputError(f"{name}: line {lineno}: expected a single column")
        if not _is_float(ln):
            raise InputError(f"{name}: line {lineno}: not a number: {ln!r}")
        v = float(ln)
        if not math.isfinite(v):
            raise InputError(f"{name}: line {lineno}: non-finite value")
        vals.append(v)
    if not vals:
        raise InputError(f"{name}: no data rows")
    return np.array(vals, dtype=np.float64)


def read_groups(text, name="--groups"):
    """Single-column file of ``control``/``case`` entries (optional header)."""
    lines = [(i, ln.strip().lower()) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if lines and lines[0][1] not in ("control", "case"):
        lines = lines[1:]
    out = []
    for lineno, ln in lines:
        if ln not in ("control", "case"):
            raise InputError(f"{name}: line {lineno}: expected 'control' or 'case', got {ln!r}")
        out.append(ln == "control")
    return np.array(out, dtype=bool)


def read_stats(text, name="--stats"):
    """``index,z,z_tilde,w`` CSV -> W vector ordered by index."""
    header, mat = read_matrix(text, name)
    cols = [h.strip().lower() for h in header]
    if "index" not in cols or "w" not in cols:
        raise InputError(f"{name}: line 1: header must contain index and w")
    idx = mat[:, cols.index("index")].astype(np.int64)
    if not np.array_equal(np.sort(idx), np.arange(idx.size)):
        raise InputError(f"{name}: indices must be 0..m-1")
    w = np.empty(idx.size)
    w[idx] = mat[:, cols.index("w")]
    return w


# -- output helpers -----------------------------------------------------------

class _Run:
    """Collects manifest fields while a subcommand executes."""

    def __init__(self, args, seed):
        self.args = args
        self.seed = seed
        self.inputs = {}

    def read(self, path, flag):
        text = _open_text(path, flag)
        self.inputs[path] = hashlib.sha256(text.encode()).hexdigest()
        return text

    def manifest(self):
        flags = {k: v for k, v in vars(self.args).items() if k not in ("func", "command")}
        return {
            "subcommand": self.args.command,
            "flags": flags,
            "seed": self.seed,
            "inputs": self.inputs,
            "version": __version__,
        }


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _manifest_path(args, default_name):
    if getattr(args, "manifest", None):
        return args.manifest
    out = getattr(args, "out", None)
    if out and out != "-":
        return out + ".manifest.json"
    return default_name


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def resolve_seed(value):
    """``--seed``, else ``$TDFDR_SEED``, else 0."""
    if value is None:
        env = os.environ.get(SEED_ENV)
        if env is None or not env.strip():
            return 0
        try:
            value = int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV}: not an integer: {env!r}") from None
    if not 0 <= value < 2**64:
        raise InputError(f"--seed: must be a 64-bit unsigned integer, got {value}")
    return int(value)


# -- subcommands ----------------------------------------------------------------

def cmd_compete(args, run):
    header, mat = read_matrix(run.read(args.input, "input"), args.input)
    if (args.n_control is None) == (args.groups is None):
        raise InputError("give exactly one of --n-control or --groups")
    if args.groups is not None:
        is_control = read_groups(run.read(args.groups, "--groups"))
        if is_control.size != mat.shape[0]:
            raise InputError(f"--groups: {is_control.size} entries for {mat.shape[0]} samples")
        mat = np.vstack([mat[is_control], mat[~is_control]])
        n_control = int(is_control.sum())
    else:
        n_control = args.n_control
    data = TwoGroupData(mat, n_control)
    result = compete(data, args.n_perm, make_rng(run.seed), two_sided=args.two_sided,
                     threads=args.threads)
    _write(args.out, result.to_csv())
    if result.meta.get("n_excluded", "0") != "0":
        print(f"excluded {result.meta['n_excluded']} degenerate variable(s): "
              f"{result.meta['excluded']}", file=sys.stderr)
    return result


def cmd_knockoff(args, run):
    _, design = read_matrix(run.read(args.design, "design"), args.design)
    response = read_vector(run.read(args.response, "response"), args.response)
    if response.size != design.shape[0]:
        raise InputError(f"response has {response.size} rows, design has {design.shape[0]}")
    rng = make_rng(run.seed)
    model = construct_knockoffs(design, rng.child(0))
    stats = knockoff_stats(model, response, args.grid_size)
    if args.emit_stats:
        buf = io.StringIO()
        buf.write("index,z,z_tilde,w\n")
        for j, (z, zt, w) in enumerate(zip(stats.z, stats.z_tilde, stats.w)):
            buf.write(f"{j},{format_float(z)},{format_float(zt)},{format_float(w)}\n")
        _write(args.emit_stats, buf.getvalue())
    result = to_competition(stats, rng.child(1))
    _write(args.out, result.to_csv())
    return result


def _check_q(q):
    if not 0 < q < 1:
        raise InputError(f"--q: must lie in (0, 1), got {q}")


def cmd_fdr(args, run):
    _check_q(args.q)
    result = CompetitionResult.from_csv(run.read(args.input, "input"))
    fit = fit_fdr(result, args.epsilon, args.l_max, make_rng(run.seed))
    selected = set(select_at(fit, result, args.q).tolist())
    fdr = fit.fdr_map()
    buf = io.StringIO()
    buf.write("index,label,score,fdr,selected_at_q\n")
    for i, t, s in zip(result.indices, result.is_target, result.scores):
        i = int(i)
        f = fdr[i] if t else 1.0
        buf.write(f"{i},{'T' if t else 'D'},{format_float(s)},{format_float(f)},"
                  f"{1 if i in selected else 0}\n")
    _write(args.out, buf.getvalue())
    diag = fit.diagnostics()
    diag["seed"] = run.seed
    diag_path = args.diagnostics or (
        args.out + ".diagnostics.json" if args.out and args.out != "-" else "fdr.diagnostics.json")
    _write_json(diag_path, diag)
    return fit


def cmd_select(args, run):
    _check_q(args.q)
    if args.method == "knockoff":
        if not args.stats:
            raise InputError("--stats: required with --method knockoff")
        chosen = knockoff_select(read_stats(run.read(args.stats, "--stats"), args.stats), args.q)
    else:
        if not args.input:
            raise InputError(f"input: a label/score CSV is required with --method {args.method}")
        result = CompetitionResult.from_csv(run.read(args.input, "input"))
        if args.method == "td":
            chosen = td_select(result, args.q)
        else:
            fit = fit_fdr(result, args.epsilon, args.l_max, make_rng(run.seed))
            chosen = select_at(fit, result, args.q)
    _write(args.out, "index\n" + "".join(f"{int(i)}\n" for i in chosen))
    return chosen


def cmd_simulate(args, run):
    text = run.read(args.config, "config")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.config}: line {exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if args.seed is not None or "seed" not in raw:
        raw["seed"] = run.seed
    cfg = SimulationConfig.from_dict(raw)
    run.seed = cfg.seed
    report = run_experiment(cfg, threads=args.threads)
    write_outputs(report, args.outdir)
    return report


def cmd_pi0(args, run):
    result = CompetitionResult.from_csv(run.read(args.input, "input"))
    summary = {
        "pi0t": estimate_pi0t(result),
        "pi0": estimate_pi0(result),
        "n_target": result.n_target,
        "n_decoy": result.n_decoy,
    }
    _write(args.out, json.dumps(summary, sort_keys=True) + "\n")
    return summary


# -- parser ---------------------------------------------------------------------

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed_int(text):
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdfdr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed_int, default=None,
                        help=f"RNG seed (default: ${SEED_ENV}, else 0)")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: all cores); output does not depend on it")
    common.add_argument("-o", "--out", default="-", help="output file (default: stdout)")
    common.add_argument("--manifest", default=None,
                        help="manifest path (default: OUT.manifest.json)")

    fit_opts = argparse.ArgumentParser(add_help=False)
    fit_opts.add_argument("--q", type=float, default=0.05, help="nominal FDR level")
    fit_opts.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    fit_opts.add_argument("--l-max", type=_positive_int, default=DEFAULT_L_MAX)

    p = sub.add_parser("compete", parents=[common], help="decoy-permutation competition")
    p.add_argument("input", help="samples x variables CSV with a header row")
    p.add_argument("--n-control", type=_positive_int, default=None,
                   help="the first N rows are controls")
    p.add_argument("--groups", default=None, help="file of control/case entries, one per row")
    p.add_argument("--n-perm", type=_positive_int, default=19)
    p.add_argument("--two-sided", action="store_true", help="score |t| instead of t")
    p.set_defaults(func=cmd_compete)

    p = sub.add_parser("knockoff", parents=[common], help="fixed-X knockoff competition")
    p.add_argument("design", help="samples x variables CSV with a header row")
    p.add_argument("response", help="single-column response CSV")
    p.add_argument("--grid-size", type=_positive_int, default=DEFAULT_GRID_SIZE)
    p.add_argument("--emit-stats", default=None, help="write index,z,z_tilde,w here")
    p.set_defaults(func=cmd_knockoff)

    p = sub.add_parser("fdr", parents=[common, fit_opts], help="estimate target fdr")
    p.add_argument("input", help="index,label,score CSV")
    p.add_argument("--diagnostics", default=None,
                   help="diagnostics JSON path (default: OUT.diagnostics.json)")
    p.set_defaults(func=cmd_fdr)

    p = sub.add_parser("select", parents=[common, fit_opts], help="select variables at level q")
    p.add_argument("input", nargs="?", default=None, help="index,label,score CSV")
    p.add_argument("--method", choices=("tdfdr", "td", "knockoff"), default="tdfdr")
    p.add_argument("--stats", default=None, help="index,z,z_tilde,w CSV for --method knockoff")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation study")
    p.add_argument("config", help="JSON simulation config")
    p.add_argument("--outdir", default=".", help="directory for the metric CSVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pi0", parents=[common], help="null proportion estimates")
    p.add_argument("input", help="index,label,score CSV")
    p.set_defaults(func=cmd_pi0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = _Run(args, resolve_seed(args.seed))
        args.func(args, run)
        if args.command == "simulate":
            path = args.manifest or os.path.join(args.outdir, "manifest.json")
        else:
            path = _manifest_path(args, f"{args.command}.manifest.json")
        _write_json(path, run.manifest())
    except InputError as exc:
        print(f"tdfdr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PreconditionError as exc:
        print(f"tdfdr {args.command}: precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except TdfdrError as exc:
        print(f"tdfdr {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"tdfdr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"tdfdr {args.command}: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK
