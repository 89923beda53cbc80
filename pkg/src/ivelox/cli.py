"""Command line front end.

Subcommands map one-to-one onto the library layers: ``iv``, ``ee``, and
``bounds`` are thin wrappers over the closed forms, ``simulate`` runs a
single tandem trace, ``sweep`` executes the parameter grids described in
a scenario file's ``sweep`` section, and ``validate`` runs the built-in
check suite.

Output contract: human-readable summaries go to stdout; ``--out FILE``
writes CSV with full round-trip float precision (17 significant
digits), UTF-8, LF line endings.  Exit codes: 0 success, 1 validation
suite failure, 2 usage or configuration error.

Sweep files extend scenario JSON with::

    "sweep":  {"variable": "alpha", "values": [...] or
               {"start": 0.5, "stop": 1.0, "count": 26},
               "outputs": ["pe_empirical", "pe_exact"], "alpha": 0.96},
    "series": [{"profile": {"r": 20}}, {"profile": {"r": 100}}, ...]

Each series entry overlays the base scenario (profile and arrivals
merge key-by-key, everything else replaces).  Sweeping ``alpha`` at
fixed ``r`` derives the budget as ``N = round(r/alpha)``; sweeping
``N`` with a fixed sweep-level ``alpha`` derives ``r = round(alpha*N)``.
Analytic outputs (``iv``, ``ee_*``) use the requested alpha itself; the
``pe_*`` family uses the integer budget.  A ``series`` column is
emitted only when series carry labels; otherwise the varying field
(``r`` or ``p``) identifies the curve.

Seed precedence: ``--seed`` flag, then the scenario file, then the
``IVELOX_SEED`` environment variable, then 0.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from fractions import Fraction

import numpy as np

from . import validate as validation
from .analytic import (
    AnalyticError,
    UnstableLambda,
    exact_failure_prob,
    exponent_report,
    failure_prob_bounds,
    information_velocity,
)
from .model import (
    Explicit,
    Geometric,
    Homogeneous,
    LinkMode,
    Scenario,
    ScenarioError,
    SinglePacket,
    arrival_rate,
    scenario_from_dict,
    validate_scenario,
)
from .sim import SimError, TraceStats, empirical_failure_ratio, simulate_tandem, single_packet_delays

OUTPUT_NAMES = (
    "iv",
    "ee_chernoff",
    "ee_types",
    "pe_exact",
    "pe_lower",
    "pe_chernoff",
    "pe_sum",
    "pe_empirical",
)

PAPER_SCALE_PACKETS = 1_000_000
PAPER_SCALE_WARMUP = 100_000


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def write_rows(fh, columns: list[str], rows: list[dict]) -> None:
    fh.write(",".join(columns) + "\n")
    for row in rows:
        fh.write(",".join(format_value(row[c]) for c in columns) + "\n")


def emit_csv(rows: list[dict], path: str, columns: list[str] | None = None) -> None:
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_rows(fh, columns, rows)


def _load_doc(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh, parse_float=Fraction)
    if not isinstance(doc, dict) or "profile" not in doc:
        raise ScenarioError(f"{path}: not a scenario file (missing 'profile')")
    return doc


def resolve_seed(flag_seed: int | None, doc: dict | None) -> int:
    if flag_seed is not None:
        return flag_seed
    if doc is not None and "seed" in doc:
        return int(doc["seed"])
    env = os.environ.get("IVELOX_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ScenarioError(f"IVELOX_SEED must be an integer, got {env!r}") from None
    return 0


def _apply_overrides(doc: dict, args) -> dict:
    out = dict(doc)
    if getattr(args, "paper_scale", False):
        out["num_packets"] = PAPER_SCALE_PACKETS
        out["warmup_packets"] = PAPER_SCALE_WARMUP
    if getattr(args, "packets", None) is not None:
        out["num_packets"] = args.packets
        out.pop("warmup_packets", None)
    if getattr(args, "warmup", None) is not None:
        out["warmup_packets"] = args.warmup
    if getattr(args, "mode", None):
        out["mode"] = args.mode
    out["seed"] = resolve_seed(getattr(args, "seed", None), doc)
    return out


def _scenario_from_args(args) -> Scenario | None:
    if not getattr(args, "scenario", None):
        return None
    doc = _apply_overrides(_load_doc(args.scenario), args)
    return validate_scenario(scenario_from_dict(doc))


def _profile_r(profile) -> int:
    if isinstance(profile, Explicit):
        return len(profile.p_seq)
    return profile.r


def _analysis_inputs(args, need_r: bool = True):
    """Resolve (profile, lam, mode) from flags, falling back to a scenario file."""
    sc = _scenario_from_args(args)
    if sc is not None:
        profile = sc.profile
        lam = arrival_rate(sc.arrivals)
        mode = sc.mode
        if args.p is not None:
            if not isinstance(profile, Homogeneous):
                raise ScenarioError("--p override requires a homogeneous profile")
            profile = replace(profile, p=args.p)
        if args.r is not None and not isinstance(profile, Explicit):
            profile = replace(profile, r=args.r)
    else:
        if args.p is None:
            raise ScenarioError("provide --scenario FILE or an explicit --p")
        if need_r and args.r is None:
            raise ScenarioError("--r is required when no scenario file is given")
        profile = Homogeneous(args.p, args.r if args.r is not None else 1)
        mode = LinkMode.DELAYED
        lam = 0.0
    if args.lam is not None:
        lam = args.lam
    if getattr(args, "mode", None):
        mode = LinkMode(args.mode)
    return profile, float(lam), mode


def _homogeneous_p_eff(profile, lam: float) -> float:
    if not isinstance(profile, Homogeneous):
        raise ScenarioError("closed-form failure probabilities need a homogeneous profile")
    if not 0.0 <= lam < 1.0:
        raise ScenarioError(f"arrival rate must be in [0, 1), got {lam!r}")
    p_eff = profile.p / (1.0 - lam)
    if p_eff >= 1.0:
        raise UnstableLambda(
            f"effective erasure probability {p_eff:.6g} at lambda = {lam:.6g} is not below 1"
        )
    return p_eff


def cmd_iv(args) -> int:
    profile, lam, mode = _analysis_inputs(args, need_r=False)
    iv = information_velocity(profile, lam, mode)
    print(format_value(iv))
    if args.out:
        emit_csv([{"lambda": lam, "iv": iv}], args.out, ["lambda", "iv"])
    return 0


def cmd_ee(args) -> int:
    profile, lam, mode = _analysis_inputs(args)
    chernoff = exponent_report(profile, args.alpha, lam, mode, form="chernoff")
    types = exponent_report(profile, args.alpha, lam, mode, form="types")
    print(f"alpha        {format_value(args.alpha)}")
    print(f"iv           {format_value(chernoff.iv)}")
    print(f"ee_chernoff  {format_value(chernoff.ee)}")
    print(f"ee_types     {format_value(types.ee)}")
    if chernoff.dual_x is not None:
        print(f"dual_x       {format_value(chernoff.dual_x)}")
    if args.out:
        row = {
            "alpha": args.alpha,
            "iv": chernoff.iv,
            "ee_chernoff": chernoff.ee,
            "ee_types": types.ee,
        }
        emit_csv([row], args.out, ["alpha", "iv", "ee_chernoff", "ee_types"])
    return 0


BOUNDS_COLUMNS = ["r", "N", "p_eff", "pe_lower", "pe_exact", "pe_chernoff", "pe_sum"]


def cmd_bounds(args) -> int:
    profile, lam, _mode = _analysis_inputs(args)
    if args.N is None:
        raise ScenarioError("--N is required for bounds")
    if not isinstance(profile, Homogeneous):
        raise ScenarioError("bounds are defined for homogeneous profiles")
    report = failure_prob_bounds(profile.r, args.N, profile.p, lam)
    row = {
        "r": profile.r,
        "N": args.N,
        "p_eff": report.p_eff,
        "pe_lower": report.lower,
        "pe_exact": report.exact,
        "pe_chernoff": report.chernoff_upper,
        "pe_sum": report.sum_upper,
    }
    for name in BOUNDS_COLUMNS:
        print(f"{name:<12} {format_value(row[name])}")
    if args.out:
        emit_csv([row], args.out, BOUNDS_COLUMNS)
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario_from_args(args)
    if sc is None:
        raise ScenarioError("simulate requires --scenario FILE")
    stats = simulate_tandem(sc, collect_waits=False)
    delays = stats.delays
    print(f"packets       {len(stats.packet_records)}")
    print(f"mode          {sc.mode.value}")
    print(f"arrival rate  {format_value(arrival_rate(sc.arrivals))}")
    print(f"horizon       {stats.horizon_slots}")
    print(f"mean delay    {format_value(float(delays.mean()))}")
    print(f"delay p50     {int(np.percentile(delays, 50))}")
    print(f"delay p99     {int(np.percentile(delays, 99))}")
    print(f"max delay     {int(delays.max())}")
    if args.out:
        first = sc.warmup_packets if sc.warmup_packets is not None else 0
        rows = [
            {"packet_index": first + i, "A": int(a), "B": int(b)}
            for i, (a, b) in enumerate(stats.packet_records)
        ]
        emit_csv(rows, args.out, ["packet_index", "A", "B"])
        print(f"trace         {args.out}")
    return 0


def _sweep_values(spec) -> list[float]:
    if isinstance(spec, dict):
        try:
            return [
                float(v)
                for v in np.linspace(
                    float(spec["start"]), float(spec["stop"]), int(spec["count"])
                )
            ]
        except KeyError as missing:
            raise ScenarioError(f"sweep values grid is missing {missing}") from None
    if isinstance(spec, list) and spec:
        return [float(v) for v in spec]
    raise ScenarioError("sweep values must be a nonempty list or a {start, stop, count} grid")


def _merge_series(doc: dict, sdoc: dict) -> dict:
    merged = {
        k: doc[k]
        for k in ("profile", "arrivals", "mode", "num_packets", "warmup_packets", "seed")
        if k in doc
    }
    for key, val in sdoc.items():
        if key == "label":
            continue
        if key in ("profile", "arrivals") and isinstance(val, dict) and key in merged:
            merged[key] = {**merged[key], **val}
        else:
            merged[key] = val
    return merged


def _steady_stats(sc: Scenario, cache: dict) -> TraceStats:
    if sc not in cache:
        if isinstance(sc.arrivals, SinglePacket):
            delays = single_packet_delays(sc.profile, sc.mode, sc.num_packets, sc.seed)
            records = np.column_stack([np.zeros_like(delays), delays])
            cache[sc] = TraceStats(records, (), int(delays.max()), 0)
        else:
            cache[sc] = simulate_tandem(sc, collect_waits=False)
    return cache[sc]


def _row_value(name, row, sc, profile, alpha, N, r, lam, cache) -> None:
    if name == "iv":
        row["iv"] = information_velocity(profile, lam, sc.mode)
        return
    if name in ("ee_chernoff", "ee_types"):
        if alpha is None:
            raise ScenarioError("exponent outputs need the sweep to define an alpha")
        form = "chernoff" if name == "ee_chernoff" else "types"
        row[name] = exponent_report(profile, alpha, lam, sc.mode, form).ee
        return
    if N is None:
        raise ScenarioError(f"{name} needs a slot budget; sweep N or alpha instead")
    if name == "pe_empirical":
        stats = _steady_stats(sc, cache)
        ratio, (lo, hi) = empirical_failure_ratio(stats, N)
        row["pe_empirical"] = ratio
        row["ci_lo"] = lo
        row["ci_hi"] = hi
        return
    # remaining outputs are the closed forms, valid for Bernoulli (or
    # single-packet) arrivals into a homogeneous cascade
    if not isinstance(sc.arrivals, (Geometric, SinglePacket)):
        raise ScenarioError(
            f"{name} applies to geometric or single-packet arrivals; "
            "use pe_empirical for other processes"
        )
    if name == "pe_exact":
        p_eff = _homogeneous_p_eff(profile, lam)
        budget = N + r if sc.mode is LinkMode.INSTANTANEOUS else N
        row["pe_exact"] = exact_failure_prob(r, budget, p_eff)
        return
    if sc.mode is not LinkMode.DELAYED:
        raise ScenarioError(f"{name} is defined for delayed forwarding only")
    if not isinstance(profile, Homogeneous):
        raise ScenarioError("closed-form failure probabilities need a homogeneous profile")
    report = failure_prob_bounds(r, N, profile.p, lam)
    row[name] = {
        "pe_lower": report.lower,
        "pe_chernoff": report.chernoff_upper,
        "pe_sum": report.sum_upper,
    }[name]


def _series_rows(sc, variable, values, outputs, alpha_fixed, label, cache) -> list[dict]:
    rows = []
    base_lam = float(arrival_rate(sc.arrivals))
    for v in values:
        profile, lam = sc.profile, base_lam
        row_sc = sc
        if variable == "alpha":
            alpha = float(v)
            if alpha <= 0.0:
                raise ScenarioError(f"alpha values must be positive, got {alpha!r}")
            r = _profile_r(profile)
            N = int(round(r / alpha))
            row = {"alpha": alpha, "N": N, "r": r}
        elif variable == "N":
            N = int(v)
            if N < 1:
                raise ScenarioError(f"N values must be positive, got {v!r}")
            if alpha_fixed is not None:
                if isinstance(profile, Explicit):
                    raise ScenarioError("cannot derive r from alpha for an explicit profile")
                r = max(1, int(round(alpha_fixed * N)))
                profile = replace(profile, r=r)
                row_sc = validate_scenario(replace(sc, profile=profile))
            else:
                r = _profile_r(profile)
            alpha = r / N
            row = {"r": r, "N": N}
            if isinstance(profile, Homogeneous):
                row["p_eff"] = _homogeneous_p_eff(profile, lam)
        else:
            lam = float(v)
            if not 0.0 <= lam < 1.0:
                raise ScenarioError(f"lambda values must lie in [0, 1), got {lam!r}")
            if "pe_empirical" in outputs:
                if not isinstance(sc.arrivals, (Geometric, SinglePacket)):
                    raise ScenarioError("lambda sweeps need geometric arrivals")
                row_sc = validate_scenario(replace(sc, arrivals=Geometric(lam)))
            r = _profile_r(profile)
            N = None
            alpha = alpha_fixed
            row = {"lambda": lam}
            if isinstance(profile, Homogeneous):
                row["p"] = profile.p
        if label is not None:
            row["series"] = label
        for name in outputs:
            _row_value(name, row, row_sc, profile, alpha, N, r, lam, cache)
        rows.append(row)
    return rows


def _sweep_columns(variable, outputs, labeled, all_homogeneous) -> list[str]:
    if variable == "alpha":
        keys = ["alpha", "N", "r"]
    elif variable == "N":
        keys = ["r", "N"] + (["p_eff"] if all_homogeneous else [])
    else:
        keys = ["lambda"] + (["p"] if all_homogeneous else [])
    if labeled:
        keys = ["series"] + keys
    for name in outputs:
        keys.extend(["pe_empirical", "ci_lo", "ci_hi"] if name == "pe_empirical" else [name])
    return keys


def cmd_sweep(args) -> int:
    if not args.scenario:
        raise ScenarioError("sweep requires --scenario FILE")
    doc = _load_doc(args.scenario)
    sweep = doc.get("sweep")
    if not isinstance(sweep, dict):
        raise ScenarioError(f"{args.scenario}: no 'sweep' section")
    variable = str(sweep.get("variable", ""))
    if variable not in ("N", "alpha", "lambda"):
        raise ScenarioError(
            f"sweep variable must be 'N', 'alpha', or 'lambda', got {sweep.get('variable')!r}"
        )
    values = _sweep_values(sweep.get("values"))
    if args.outputs:
        outputs = [s.strip() for s in args.outputs.split(",") if s.strip()]
    else:
        outputs = [str(s) for s in sweep.get("outputs", [])]
    if not outputs:
        raise ScenarioError("sweep outputs list is empty")
    for name in outputs:
        if name not in OUTPUT_NAMES:
            raise ScenarioError(f"unknown sweep output {name!r}")
    alpha_fixed = sweep.get("alpha")
    alpha_fixed = None if alpha_fixed is None else float(alpha_fixed)
    series = doc.get("series") or [{}]
    if not isinstance(series, list) or not all(isinstance(s, dict) for s in series):
        raise ScenarioError("'series' must be a list of override objects")

    plans = []
    for sdoc in series:
        merged = _apply_overrides(_merge_series(doc, sdoc), args)
        sc = validate_scenario(scenario_from_dict(merged))
        plans.append((sc, sdoc.get("label")))
    labeled = any(lbl is not None for _, lbl in plans)
    all_homogeneous = all(isinstance(sc.profile, Homogeneous) for sc, _ in plans)

    cache: dict = {}
    rows = []
    for sc, lbl in plans:
        rows.extend(
            _series_rows(sc, variable, values, outputs, alpha_fixed, lbl if labeled else None, cache)
        )
    columns = _sweep_columns(variable, outputs, labeled, all_homogeneous)
    if args.out:
        emit_csv(rows, args.out, columns)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        write_rows(sys.stdout, columns, rows)
    return 0


def cmd_validate(args) -> int:
    results = validation.run_checks(args.level)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failures += 0 if r.passed else 1
        print(f"{status}  {r.name:<{width}}  {r.detail}  [{r.elapsed:.2f}s]")
    if failures:
        print(f"{failures} of {len(results)} checks failed at level {args.level}")
        return 1
    print(f"all {len(results)} checks passed at level {args.level}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivelox",
        description="Velocity, exponent, and failure-probability analysis "
        "of erasure cascades with retransmission, with a matching simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, seeded=False):
        p.add_argument("--scenario", metavar="FILE", help="scenario JSON file")
        p.add_argument("--r", type=int, help="number of links")
        p.add_argument("--N", type=int, help="slot budget")
        p.add_argument("--p", type=float, help="homogeneous erasure probability")
        p.add_argument("--lambda", dest="lam", type=float, help="arrival rate")
        p.add_argument("--mode", choices=["delayed", "instantaneous"], help="forwarding mode")
        p.add_argument("--out", metavar="FILE", help="write CSV here")
        if seeded:
            p.add_argument("--seed", type=int, help="base RNG seed")
            p.add_argument("--packets", type=int, help="total packets to simulate")
            p.add_argument("--warmup", type=int, help="packets discarded before statistics")
            p.add_argument(
                "--paper-scale",
                action="store_true",
                help=f"simulate {PAPER_SCALE_PACKETS} packets instead of the desk-scale default",
            )

    p_iv = sub.add_parser("iv", help="information velocity of a cascade")
    add_common(p_iv)
    p_iv.set_defaults(handler=cmd_iv)

    p_ee = sub.add_parser("ee", help="error exponent at a links-per-slot ratio")
    add_common(p_ee)
    p_ee.add_argument("--alpha", type=float, required=True, help="links-per-slot ratio r/N")
    p_ee.set_defaults(handler=cmd_ee)

    p_bounds = sub.add_parser("bounds", help="failure probability with sandwich bounds")
    add_common(p_bounds)
    p_bounds.set_defaults(handler=cmd_bounds)

    p_sim = sub.add_parser("simulate", help="run one tandem simulation")
    add_common(p_sim, seeded=True)
    p_sim.set_defaults(handler=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run the parameter sweep from a scenario file")
    add_common(p_sweep, seeded=True)
    p_sweep.add_argument(
        "--outputs", metavar="LIST", help="comma-separated output columns, overriding the file"
    )
    p_sweep.set_defaults(handler=cmd_sweep)

    p_val = sub.add_parser("validate", help="run the built-in check suite")
    p_val.add_argument("--level", choices=["fast", "full"], default="fast")
    p_val.set_defaults(handler=cmd_validate)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.handler(args)
    except (ScenarioError, AnalyticError, SimError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv: list[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
