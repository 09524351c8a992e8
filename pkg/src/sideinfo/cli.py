"""Command-line interface: read a JSON problem spec, run a solver, print a
report and optionally append CSV rows.

Spec files name every array's axis order explicitly::

    {"kind": "channel", "name": "bsc",
     "alphabets": {"x": 2, "y": 2, "s1": 1, "s2": 1},
     "state_joint": {"axes": ["s1", "s2"], "values": [[1.0]]},
     "channel": {"axes": ["x", "s1", "s2", "y"], "values": [...]},
     "defaults": {"u_size": 2, "seed": 0, "epsilon": 0.1}}

Sources use ``source_joint`` over (x, s1, s2) and ``distortion`` over
(x, xhat).  Exit codes: 0 ok, 1 check failed, 2 parse error, 3 validation
error, 4 infeasible target, 5 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ascent import BudgetError, SolverOptions
from .binning import DEFAULT_MAX_SYMBOLS, TypicalityParams, simulate
from .capacity import solve_capacity
from .oracle import GridSpec, oracle_capacity
from .prob import InvalidDistribution
from .problems import ChannelProblem, SourceProblem
from .ratedist import (InfeasibleDistortion, cardinality_gap, check_curve, default_lambda_grid, solve_rd_point,
                       sweep_rd_curve)
from .special import (PATTERNS, PATTERN_MAP, ROLE_MAP, SYMBOL_ROLES, SolverFailure, dual_template_of,
                      verify_reduction)

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 1, 2, 3, 4, 5
SEED_ENV = "SIDEINFO_SEED"
U_GAP_FLAG = 1e-4  # value change at u_size + 1 that marks u_size as too small

CSV_COLUMNS = {
    "capacity": ("instance", "u_size", "value_bits", "oracle_bits", "diff"),
    "rd": ("instance", "D", "R_bits", "lambda"),
    "simulate": ("n", "metric", "ci", "e1", "e2", "e3"),
}

AXES = {
    "channel": {"state_joint": ("s1", "s2"), "channel": ("x", "s1", "s2", "y")},
    "source": {"source_joint": ("x", "s1", "s2"), "distortion": ("x", "xhat")},
}


class SpecError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class Spec:
    name: str
    kind: str
    problem: ChannelProblem | SourceProblem
    defaults: dict


def fmt(v: float | None) -> str:
    if v is None:
        return ""
    # avoid printing -0.000000
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


# ---------------------------------------------------------------------------
# spec files

def _invalid(msg: str) -> SpecError:
    return SpecError(msg, EXIT_INVALID)


def _array(doc: dict, key: str, names: tuple[str, ...], sizes: dict) -> np.ndarray:
    block = doc.get(key)
    if not isinstance(block, dict):
        raise _invalid(f"{key}: expected an object with 'axes' and 'values'")
    axes = block.get("axes")
    if not isinstance(axes, list) or sorted(axes) != sorted(names):
        raise _invalid(f"{key}.axes: expected a permutation of {list(names)}, got {axes}")
    try:
        values = np.array(block.get("values"), dtype=float)
    except (TypeError, ValueError):
        raise _invalid(f"{key}.values: not a rectangular numeric array") from None
    want = tuple(sizes[a] for a in axes)
    if values.shape != want:
        raise _invalid(f"{key}.values: shape {values.shape} does not match axes {axes} with sizes {want}")
    return np.transpose(values, [axes.index(n) for n in names])


def parse_spec(text: str, name: str = "spec") -> Spec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"malformed JSON: {exc}", EXIT_PARSE) from None
    if not isinstance(doc, dict):
        raise SpecError("top level must be a JSON object", EXIT_PARSE)
    kind = doc.get("kind")
    if kind not in AXES:
        raise _invalid(f"kind: expected 'channel' or 'source', got {kind!r}")
    alph = doc.get("alphabets")
    needed = sorted({a for names in AXES[kind].values() for a in names})
    if not isinstance(alph, dict):
        raise _invalid("alphabets: expected an object of named sizes")
    sizes = {}
    for a in needed:
        v = alph.get(a)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise _invalid(f"alphabets.{a}: expected a positive integer, got {v!r}")
        sizes[a] = v
    arrays = {key: _array(doc, key, names, sizes) for key, names in AXES[kind].items()}
    try:
        if kind == "channel":
            prob = ChannelProblem.from_arrays(arrays["state_joint"], arrays["channel"])
        else:
            prob = SourceProblem.from_arrays(arrays["source_joint"], arrays["distortion"])
    except (InvalidDistribution, ValueError) as exc:
        key = "state_joint" if kind == "channel" else "source_joint"
        if "kernel" in str(exc):
            key = "channel"
        elif "distortion" in str(exc):
            key = "distortion"
        raise _invalid(f"{key}: {exc}") from None
    defaults = doc.get("defaults", {})
    if not isinstance(defaults, dict):
        raise _invalid("defaults: expected an object")
    for k in defaults:
        if k not in ("u_size", "epsilon", "seed"):
            raise _invalid(f"defaults.{k}: unknown field")
    return Spec(str(doc.get("name", name)), kind, prob, defaults)


def load_spec(path: str) -> Spec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}", EXIT_PARSE) from None
    return parse_spec(text, Path(path).stem)


def problem_to_spec(prob: ChannelProblem | SourceProblem, name: str, defaults: dict | None = None) -> dict:
    """JSON-ready spec for ``prob`` in the canonical axis order."""
    if isinstance(prob, ChannelProblem):
        doc = {
            "kind": "channel", "name": name,
            "alphabets": {"x": prob.x_alpha.size, "y": prob.y_alpha.size,
                          "s1": prob.s1_alpha.size, "s2": prob.s2_alpha.size},
            "state_joint": {"axes": ["s1", "s2"], "values": prob.p_s1s2.tolist()},
            "channel": {"axes": ["x", "s1", "s2", "y"], "values": prob.kernel.tolist()},
        }
    else:
        doc = {
            "kind": "source", "name": name,
            "alphabets": {"x": prob.x_alpha.size, "xhat": prob.xhat_alpha.size,
                          "s1": prob.s1_alpha.size, "s2": prob.s2_alpha.size},
            "source_joint": {"axes": ["x", "s1", "s2"], "values": prob.p_xs1s2.tolist()},
            "distortion": {"axes": ["x", "xhat"], "values": np.asarray(prob.distortion).tolist()},
        }
    if defaults:
        doc["defaults"] = dict(defaults)
    return doc


def dump_spec(doc: dict) -> str:
    """Spec JSON with one top-level field per line and compact arrays."""
    lines = [f"  {json.dumps(k)}: {json.dumps(v)}" for k, v in doc.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


# ---------------------------------------------------------------------------
# helpers

def _need_kind(spec: Spec, kind: str, command: str) -> None:
    if spec.kind != kind:
        raise _invalid(f"{command} needs a {kind} spec, got kind={spec.kind!r}")


def _seed(args, spec: Spec) -> int:
    if args.seed is not None:
        return args.seed
    if os.environ.get(SEED_ENV):
        try:
            return int(os.environ[SEED_ENV])
        except ValueError:
            raise _invalid(f"{SEED_ENV} must be an integer") from None
    return int(spec.defaults.get("seed", 0))


def _u_size(args, spec: Spec) -> int | None:
    u = args.u_size if args.u_size is not None else spec.defaults.get("u_size")
    if u is not None and (not isinstance(u, int) or u < 1):
        raise _invalid(f"u_size must be a positive integer, got {u!r}")
    return u


def _opts(args, spec: Spec) -> SolverOptions:
    return SolverOptions(restarts=args.restarts, seed=_seed(args, spec))


def _write_csv(path: str | None, command: str, rows: list[tuple]) -> None:
    if not path:
        return
    p = Path(path)
    fresh = not p.exists() or p.stat().st_size == 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if fresh:
        w.writerow(CSV_COLUMNS[command])
    w.writerows(rows)
    with p.open("a", newline="") as fh:
        fh.write(buf.getvalue())


def _float_list(text: str, what: str, cast=float) -> list:
    try:
        vals = [cast(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise _invalid(f"{what}: expected a comma-separated list, got {text!r}") from None
    if not vals:
        raise _invalid(f"{what}: empty list")
    return vals


def _table(rows: np.ndarray, row_label: str, col_label: str) -> list[str]:
    lines = [f"  {row_label:>6} | " + " ".join(f"{col_label}={j:<8}" for j in range(rows.shape[1]))]
    for i, r in enumerate(rows):
        lines.append(f"  {i:>6} | " + " ".join(f"{fmt(v):<10}" for v in r))
    return lines


# ---------------------------------------------------------------------------
# commands

def _u_flag(gap: float, u_size: int) -> str:
    """One line reporting the value change when U gains a symbol."""
    if gap > U_GAP_FLAG:
        by = "makes the target reachable" if np.isinf(gap) else f"improves the value by {fmt(gap)} bits"
        return f"warning: u_size={u_size + 1} {by}; u_size may be too small"
    return f"u_size check: u_size={u_size + 1} changes the value by {fmt(max(gap, 0.0))} bits"


def cmd_capacity(args) -> int:
    spec = load_spec(args.spec)
    _need_kind(spec, "channel", "capacity")
    prob = spec.problem
    u = _u_size(args, spec)
    opts = _opts(args, spec)
    res = solve_capacity(prob, u, opts)
    out = [f"instance: {spec.name}",
           f"capacity: {fmt(res.value)} bits (u_size={res.u_size})",
           "p(u|s1):"]
    out += _table(res.u_given_s1.rows, "s1", "u")
    out.append("x = f(u, s1):")
    out += [f"  u={i}: " + " ".join(str(int(x)) for x in row) for i, row in enumerate(res.x_map.table)]
    oracle_v = diff = None
    if args.oracle:
        orc = oracle_capacity(prob, res.u_size, GridSpec(args.delta))
        oracle_v, diff = orc.value, abs(orc.value - res.value)
        out.append(f"oracle: {fmt(oracle_v)} bits (delta={args.delta}, grid bound {fmt(orc.bound)})")
        out.append(f"|diff|: {fmt(diff)}")
    if args.u_check:
        gap = solve_capacity(prob, res.u_size + 1, opts).value - res.value
        out.append(_u_flag(gap, res.u_size))
    print("\n".join(out))
    _write_csv(args.csv, "capacity", [(spec.name, res.u_size, fmt(res.value), fmt(oracle_v), fmt(diff))])
    return EXIT_OK


def cmd_rd(args) -> int:
    spec = load_spec(args.spec)
    _need_kind(spec, "source", "rd")
    prob = spec.problem
    u = _u_size(args, spec)
    opts = _opts(args, spec)
    if args.d is not None:
        pt = solve_rd_point(prob, args.d, u, opts)
        lam = pt.lam
        print(f"instance: {spec.name}")
        print(f"R({fmt(args.d)}) = {fmt(pt.rate)} bits (achieved D = {fmt(pt.achieved_d)}, "
              f"u_size={pt.u_given_xs1.to_axis.size})")
        size = pt.u_given_xs1.to_axis.size
        if not pt.diagnostics.get("feasible", True):
            print(f"warning: D = {fmt(args.d)} not reached with u_size={size}; the point shown has the "
                  "least distortion found")
        if args.u_check:
            print(_u_flag(cardinality_gap(prob, args.d, size, opts), size))
        rows = [(spec.name, fmt(args.d), fmt(pt.rate), fmt(lam))]
    else:
        grid = default_lambda_grid() if args.sweep == "default" else _float_list(args.sweep, "--sweep")
        try:
            curve = sweep_rd_curve(prob, u, grid, opts)
        except ValueError as exc:
            raise _invalid(str(exc)) from None
        print(f"instance: {spec.name}")
        print(f"{'D':>10} {'R_bits':>10} {'lambda':>12}")
        rows = []
        for p in curve.points:
            print(f"{fmt(p.achieved_d):>10} {fmt(p.rate):>10} {fmt(p.lam):>12}")
            rows.append((spec.name, fmt(p.achieved_d), fmt(p.rate), fmt(p.lam)))
        chk = check_curve(curve)
        if not chk.monotone:
            print(f"warning: curve rises by {chk.worst_rise:.3g} bits between consecutive points")
        if not chk.convex:
            print(f"warning: convexity violated by {chk.worst_excess:.3g} bits")
    _write_csv(args.csv, "rd", rows)
    return EXIT_OK


def cmd_reduce(args) -> int:
    spec = load_spec(args.spec)
    if spec.kind == "source" and args.d is None:
        raise _invalid("source reductions need --d")
    rep = verify_reduction(spec.problem, args.pattern, args.d if spec.kind == "source" else None,
                           u_size=_u_size(args, spec), opts=_opts(args, spec))
    what = "C" if spec.kind == "channel" else "R"
    tail = f"({fmt(args.d)})" if spec.kind == "source" else ""
    print(f"instance: {spec.name}  pattern: {rep.pattern}")
    print(f"general   {what}_{rep.pattern}{tail} = {fmt(rep.general)} bits")
    print(f"dedicated {what}_{rep.pattern}{tail} = {fmt(rep.dedicated)} bits")
    print(f"diff = {fmt(rep.diff)}  tol = {rep.tol:g}  {'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_simulate(args) -> int:
    spec = load_spec(args.spec)
    prob = spec.problem
    n_list = _float_list(args.n, "--n", int)
    if any(n < 1 for n in n_list):
        raise _invalid("--n values must be >= 1")
    if args.trials < 1:
        raise _invalid("--trials must be >= 1")
    eps = args.epsilon if args.epsilon is not None else spec.defaults.get("epsilon", 0.1)
    try:
        params = TypicalityParams(float(eps))
    except ValueError as exc:
        raise _invalid(str(exc)) from None
    seed = _seed(args, spec)
    u = _u_size(args, spec)
    opts = SolverOptions(restarts=args.restarts, seed=seed)
    if spec.kind == "channel":
        if args.rate is None:
            raise _invalid("channel simulations need --rate")
        point = solve_capacity(prob, u, opts)
        reports = simulate("channel", prob, point, n_list, args.rate, args.trials, params, seed,
                           max_symbols=args.max_symbols)
        print(f"instance: {spec.name}  rate {fmt(args.rate)}  capacity {fmt(point.value)}")
    else:
        if args.d is None:
            raise _invalid("source simulations need --d")
        point = solve_rd_point(prob, args.d, u, opts)
        reports = simulate("source", prob, point, n_list, args.d, args.trials, params, seed,
                           bin_rate=args.bin_rate, max_symbols=args.max_symbols)
        print(f"instance: {spec.name}  target D {fmt(args.d)}  R(D) {fmt(point.rate)}")
    metric = "error_rate" if spec.kind == "channel" else "mean_distortion"
    print(f"{'n':>4} {metric:>16} {'ci':>10} {'codewords':>10} {'bins':>6} {'e1':>6} {'e2':>6} {'e3':>6}")
    rows = []
    for r in reports:
        f = r.failures
        print(f"{r.n:>4} {fmt(r.metric):>16} {fmt(r.half_width):>10} {r.num_codewords:>10} "
              f"{r.num_bins:>6} {f['E1']:>6} {f['E2']:>6} {f['E3']:>6}")
        rows.append((r.n, fmt(r.metric), fmt(r.half_width), f["E1"], f["E2"], f["E3"]))
    _write_csv(args.csv, "simulate", rows)
    return EXIT_OK


def cmd_duality(args) -> int:
    t = dual_template_of(args.kind)
    other = "source" if args.kind == "channel" else "channel"
    print(f"{'channel':<24} {'source':<24}")
    for a, ra, b, rb in SYMBOL_ROLES:
        print(f"{a + ' (' + ra + ')':<24} {b + ' (' + rb + ')':<24}")
    print("role map: " + ", ".join(f"{a} <-> {b}" for a, b in ROLE_MAP))
    print("patterns: " + ", ".join(f"C_{a} <-> R_{b}" for a, b in PATTERN_MAP.items()))
    print(f"template: {t.formula()}")
    print(f"dual:     {t.dual().formula()}")
    ok = t.dual().dual() == t and t.dual() == dual_template_of(other)
    print(f"involution: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sideinfo", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, u=True):
        p.add_argument("spec", help="JSON problem spec")
        if u:
            p.add_argument("--u-size", type=int, default=None)
        p.add_argument("--restarts", type=int, default=16)
        p.add_argument("--seed", type=int, default=None, help=f"overrides ${SEED_ENV} and the spec default")

    p = sub.add_parser("capacity", help="capacity of a channel spec")
    common(p)
    p.add_argument("--no-u-check", dest="u_check", action="store_false",
                   help="skip the re-solve at u_size + 1")
    p.add_argument("--oracle", action="store_true", help="also run the grid oracle")
    p.add_argument("--delta", type=float, default=0.02, help="oracle grid step")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("rd", help="rate distortion of a source spec")
    common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--d", type=float, help="target distortion")
    g.add_argument("--sweep", nargs="?", const="default",
                   help="comma-separated multipliers (default: 0 and 19 values up to 100)")
    p.add_argument("--no-u-check", dest="u_check", action="store_false",
                   help="skip the re-solve at u_size + 1 (--d only)")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_rd)

    p = sub.add_parser("reduce", help="general formula vs the dedicated special-case formula")
    common(p)
    p.add_argument("--pattern", required=True, choices=PATTERNS)
    p.add_argument("--d", type=float)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("simulate", help="Monte Carlo run of the binning construction")
    common(p)
    p.add_argument("--n", required=True, help="comma-separated blocklengths")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--rate", type=float, help="channel operating rate")
    g.add_argument("--d", type=float, help="source target distortion")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--bin-rate", type=float, help="source bin rate in bits (default from the construction)")
    p.add_argument("--max-symbols", type=int, default=DEFAULT_MAX_SYMBOLS)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("duality", help="channel/source role table")
    p.add_argument("--kind", choices=("channel", "source"), default="channel")
    p.set_defaults(func=cmd_duality)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleDistortion as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except SolverFailure as exc:
        if isinstance(exc.cause, InfeasibleDistortion):
            print(f"error: {exc.cause}", file=sys.stderr)
            return EXIT_INFEASIBLE
        raise
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
