"""Command-line entry point: ``entloc {sweep,stage,oracle-check,tomo}``.

Exit codes: 0 success, 1 failed check, 2 usage error, 3 degenerate input.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import formulas
from .errors import DegenerateOutcomeError, EntlocError, InvalidArgumentError, ModelInconsistencyError
from .fockoracle import OracleConfig, mach_zehnder_transmissivity, oracle_stage_states
from .metrics import concurrence, fidelity, report
from .pipeline import CouplingConfig, FilterConfig, closed_form_state, run_protocol, stage_measure
from .qstate import PSI_IN, SINGLET, DensityMatrix
from .tomolab import (
    monte_carlo_uncertainty,
    reconstruct,
    records_to_csv,
    simulate_counts,
    standard_settings,
    subtract_accidentals,
)

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DEGENERATE = 0, 1, 2, 3
ORACLE_TOLERANCE = 1e-10
NUMBER_FORMAT = ".12g"

_DEFAULT_OUTPUTS = {
    "ind": "C_I,C_II,C_III,B_I,B_III,P_I,P_II,P_III",
    "dis": "C_I,C_II,C_III,B_I,B_III,P_I,P_II,P_III",
    "partial": "C,C_I_meas,C_III,C_III_limit,B,B_III,B_III_limit,P,P_II,P_III",
    "polarizing": "C_I,C_II,C_III,P_I,P_II,P_III",
}
_DEFAULTS = {
    "regime": "ind",
    "T": None,
    "tv": None,
    "th": None,
    "p": None,
    "eps": 1.0,
    "outcome": "H",
    "photons": "ind",
    "jobs": 1,
    "source": "formulas",
    "rate": 8000.0,
    "duration": 5.0,
    "accidentals": 0.0,
    "trials": 100,
    "state": "singlet",
}


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    return format(float(x), NUMBER_FORMAT)


def parse_grid(text: str) -> tuple[str, list[float]]:
    """``axis=start:stop:step`` with an inclusive stop, or ``axis=v1,v2,...``."""
    if "=" not in text:
        raise UsageError(f"grid {text!r} is not of the form axis=start:stop:step")
    axis, rng = text.split("=", 1)
    axis = axis.strip()
    try:
        if ":" in rng:
            start, stop, step = (float(v) for v in rng.split(":"))
            if step <= 0 or stop < start:
                raise UsageError(f"grid {text!r} has a nonpositive step or reversed bounds")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + i * step, 12) for i in range(n)]
        else:
            values = [float(v) for v in rng.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"grid {text!r} has non-numeric entries") from None
    if not values:
        raise UsageError(f"grid {text!r} is empty")
    return axis, values


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ENTLOC_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"ENTLOC_SEED={env!r} is not an integer") from None


def _merge_config(args) -> argparse.Namespace:
    """Fill unset flags from ``--config`` and then from built-in defaults."""
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config!r}: {exc}") from None
    for key, default in _DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg.get(key, default))
    for key in ("grid", "gains", "outputs", "seed"):
        if getattr(args, key, None) in (None, []) and key in cfg:
            setattr(args, key, cfg[key])
    return args


# -- point evaluation ------------------------------------------------------------


def _formula_point(regime: str, point: dict, photons: str) -> dict:
    if regime == "ind":
        return formulas.indistinguishable_suite(point["T"], point["eps"])
    if regime == "dis":
        return formulas.distinguishable_suite(point["T"], point["eps"])
    if regime == "partial":
        out = formulas.partial_suite(point["p"], point["T"], point["eps"])
        out["eps_lo"], out["eps_hi"] = out.pop("eps_window")
        return out
    return formulas.polarizing_suite(point["tv"], point["th"], point["eps"], photons)


def _coupling(regime: str, point: dict, photons: str = "ind", input_state: str = "singlet") -> CouplingConfig:
    if regime == "polarizing":
        return CouplingConfig(photons, tv=point["tv"], th=point["th"], input_state=input_state)
    if regime == "partial":
        return CouplingConfig("partial", T=point["T"], p=point["p"], input_state=input_state)
    return CouplingConfig(regime, T=point["T"], input_state=input_state)


def _pipeline_point(regime: str, point: dict, photons: str, outcome: str, gains) -> dict:
    cfg = _coupling(regime, point, photons)
    try:
        stages = run_protocol(cfg, FilterConfig(eps=point["eps"], explicit_gains=gains), outcome)
    except DegenerateOutcomeError:
        return {}
    out = {}
    for s in stages:
        out[f"C_{s.stage}"] = s.metrics.concurrence
        out[f"B_{s.stage}"] = s.metrics.bell_max
        out[f"S_{s.stage}"] = s.metrics.linear_entropy
        out[f"P_{s.stage}"] = s.cumulative_probability
    return out


def _grid_points(args) -> tuple[list[str], list[dict]]:
    fixed = {k: getattr(args, k) for k in ("T", "tv", "th", "p", "eps")}
    grids = [parse_grid(g) for g in (args.grid or [])]
    axes = [a for a, _ in grids]
    for a in axes:
        if a not in fixed:
            raise UsageError(f"unknown grid axis {a!r}; use T, tv, th, p or eps")
    if len(set(axes)) != len(axes):
        raise UsageError("grid axes must be distinct")
    points = []
    for combo in itertools.product(*(v for _, v in grids)):
        pt = dict(fixed)
        pt.update(zip(axes, combo))
        points.append(pt)
    return axes, points


def _check_point(regime: str, pt: dict) -> None:
    need = {"ind": ("T",), "dis": ("T",), "partial": ("T", "p"), "polarizing": ("tv", "th")}[regime]
    for k in need:
        if pt[k] is None:
            raise UsageError(f"regime {regime} needs --{k} or a grid over {k}")
        if not 0.0 <= pt[k] <= 1.0:
            raise UsageError(f"{k}={pt[k]!r} outside [0, 1]")
    if not 0.0 < pt["eps"] <= 1.0:
        raise UsageError(f"eps={pt['eps']!r} outside (0, 1]")


# -- commands ------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    axes, points = _grid_points(args)
    if not axes:
        raise UsageError("sweep needs at least one --grid axis=start:stop:step")
    for pt in points:
        _check_point(args.regime, pt)
    outputs = [o for o in (args.outputs or _DEFAULT_OUTPUTS[args.regime]).split(",") if o]

    def evaluate(pt):
        if args.source == "pipeline":
            return _pipeline_point(args.regime, pt, args.photons, args.outcome, _gains(args))
        try:
            return _formula_point(args.regime, pt, args.photons)
        except DegenerateOutcomeError:
            return {}

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(evaluate, points))
    if rows and args.source == "formulas":
        known = set().union(*(r.keys() for r in rows))
        bad = [o for o in outputs if o not in known]
        if bad:
            raise UsageError(f"unknown outputs {bad}; available: {sorted(known)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(axes + outputs)
    for pt, row in zip(points, rows):
        w.writerow([_fmt(pt[a]) for a in axes] + [_fmt(row.get(o, math.nan)) for o in outputs])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _gains(args):
    if not args.gains:
        return None
    try:
        gains = json.loads(args.gains) if isinstance(args.gains, str) else args.gains
    except json.JSONDecodeError as exc:
        raise UsageError(f"--gains is not valid JSON: {exc}") from None
    return gains


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_stage(args) -> int:
    pt = {k: getattr(args, k) for k in ("T", "tv", "th", "p", "eps")}
    _check_point(args.regime, pt)
    cfg = _coupling(args.regime, pt, args.photons, args.input_state)
    filt = FilterConfig(eps=args.eps, balance=args.balance, explicit_gains=_gains(args), merge_arms=args.merge)
    stages = run_protocol(cfg, filt, args.outcome)
    if args.json:
        _emit(json.dumps([s.to_dict() for s in stages], indent=2) + "\n", args.out)
        return EXIT_OK
    lines = []
    for s in stages:
        m = s.metrics
        lines.append(
            f"stage {s.stage}: C={m.concurrence:.6f} B={m.bell_max:.6f} S_L={m.linear_entropy:.6f} "
            f"P_stage={s.success_probability:.6f} P_total={s.cumulative_probability:.6f}"
        )
        for f in s.filters:
            lines.append(f"  filter {f.side}: gain_H={f.gain_h:.6f} gain_V={f.gain_v:.6f}")
        for row in s.rho.data:
            lines.append("  " + " ".join(f"{z.real:+.4f}{z.imag:+.4f}j" for z in row))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _oracle_grid(args) -> tuple[list[float], list[float], list[float]]:
    T = [round(0.05 * k, 12) for k in range(1, 20)]
    p = [0.0, 0.25, 0.5, 0.85, 1.0]
    amps = [round(0.3 + 0.05 * k, 12) for k in range(14)]
    for text in args.grid or []:
        axis, values = parse_grid(text)
        if axis == "T":
            T = values
        elif axis == "p":
            p = values
        elif axis in ("tv", "th", "t"):
            amps = values
        else:
            raise UsageError(f"oracle-check grids accept T, p or t, not {axis!r}")
    return T, p, amps


def oracle_deviations(T_grid, p_grid, amp_grid) -> list[tuple[float, str]]:
    """Largest deviation between the oracle and the other layers, per grid point."""
    results = []
    for T, p in itertools.product(T_grid, p_grid):
        res = oracle_stage_states(OracleConfig.isotropic(T, p))
        cfg = CouplingConfig("partial", T=T, p=p)
        suite = formulas.partial_suite(p, T)
        m, P = closed_form_state(cfg, "I")
        dev = max(np.abs(m - res.rho_I.data).max(), abs(P - res.P_I), abs(suite["P"] - res.P_I))
        for o in ("H", "V"):
            num = stage_measure(cfg, o)
            m, P = closed_form_state(cfg, "II", o)
            ref = res.rho_II[o].data
            dev = max(
                dev,
                np.abs(m - ref).max(),
                np.abs(num.rho.data - ref).max(),
                abs(P - res.P_II[o]),
                abs(num.cumulative_probability - res.P_II[o]),
                abs(suite["P_II"] - res.P_II[o]),
                abs(suite["C_I_meas"] - concurrence(ref)),
            )
        results.append((float(dev), f"T={T:g} p={p:g}"))
    for tv, th in itertools.product(amp_grid, amp_grid):
        for photons, p in (("ind", 1.0), ("dis", 0.0)):
            res = oracle_stage_states(OracleConfig(tv=tv, th=th, p=p), outcomes=("V",))
            suite = formulas.polarizing_suite(tv, th, 1.0, photons)
            cfg = CouplingConfig(photons, tv=tv, th=th)
            m, _ = closed_form_state(cfg, "II", "V")
            dev = max(
                abs(suite["P_I"] - res.P_I),
                abs(suite["P_II"] - res.P_II["V"]),
                abs(suite["C_I"] - concurrence(res.rho_I)),
                abs(suite["C_II"] - concurrence(res.rho_II["V"])),
                np.abs(m - res.rho_II["V"].data).max(),
            )
            results.append((float(dev), f"tv={tv:g} th={th:g} {photons}"))
    return results


def cmd_oracle_check(args) -> int:
    start = time.perf_counter()
    results = oracle_deviations(*_oracle_grid(args))
    worst, where = max(results)
    lines = [
        f"grid points: {len(results)}",
        f"max deviation: {worst:.3e} at {where}",
        f"elapsed: {time.perf_counter() - start:.2f} s",
        "known discrepancy (not a failure): printed vs composed effective transmissivity",
    ]
    for T1, T2, phi in ((0.5, 0.5, 0.0), (0.5, 0.5, math.pi / 4), (0.3, 0.6, 0.4)):
        try:
            printed = f"{formulas.effective_transmissivity(T1, T2, phi):.6f}"
        except ModelInconsistencyError:
            printed = "out of range"
        composed = mach_zehnder_transmissivity(T1, T2, phi)
        lines.append(f"  T1={T1:g} T2={T2:g} phi={phi:.4f}: printed={printed} composed={composed:.6f}")
    ok = worst < ORACLE_TOLERANCE
    lines.append("PASS" if ok else f"FAIL: deviation {worst:.3e} >= {ORACLE_TOLERANCE:g} at {where}")
    if args.json:
        payload = {"max_deviation": worst, "worst_point": where, "points": len(results), "pass": ok}
        _emit(json.dumps(payload) + "\n", args.out)
    else:
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if ok else EXIT_CHECK


def _tomo_state(args):
    text = args.state
    if text == "singlet":
        return SINGLET.dm()
    if text == "experimental":
        return PSI_IN.dm()
    if text.startswith("werner:"):
        F = float(text.split(":", 1)[1])
        if not 0.0 <= F <= 1.0:
            raise UsageError("Werner fidelity must lie in [0, 1]")
        return DensityMatrix(F * SINGLET.projector() + (1 - F) * (np.eye(4) - SINGLET.projector()) / 3)
    if text == "stage":
        pt = {k: getattr(args, k) for k in ("T", "tv", "th", "p", "eps")}
        _check_point(args.regime, pt)
        return stage_measure(_coupling(args.regime, pt, args.photons), args.outcome).rho
    raise UsageError(f"unknown state {text!r}; use singlet, experimental, werner:F or stage")


def cmd_tomo(args) -> int:
    truth = _tomo_state(args)
    settings = standard_settings()
    seed = _seed(args)
    records = simulate_counts(truth, settings, args.rate, args.duration, args.accidentals, seed)
    if args.counts_out:
        _emit(records_to_csv(records), args.counts_out)
    corrected = subtract_accidentals(records)
    result = reconstruct(corrected, settings)
    sigma = monte_carlo_uncertainty(records, settings, args.trials, seed)
    payload = {
        "seed": seed,
        "rho_hat": result.rho_hat.to_dict(),
        "metrics": result.metrics.to_dict(),
        "uncertainties": sigma,
        "true_metrics": report(truth).to_dict(),
        "fidelity_with_truth": fidelity(result.rho_hat, truth),
        "total_counts": sum(r.coincidences for r in records),
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--regime", choices=["ind", "dis", "partial", "polarizing"])
    common.add_argument("--photons", choices=["ind", "dis"], help="photon statistics for the polarizing regime")
    common.add_argument("--T", type=float)
    common.add_argument("--tv", type=float)
    common.add_argument("--th", type=float)
    common.add_argument("--p", type=float)
    common.add_argument("--eps", type=float)
    common.add_argument("--outcome", choices=["H", "V"])
    common.add_argument("--grid", action="append", metavar="AXIS=START:STOP:STEP")
    common.add_argument("--gains", help='explicit intensity transmissions, e.g. \'{"A": {"V": 0.33}}\'')
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--json", action="store_true")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--config", metavar="JSON", help="defaults for any flag; flags take precedence")

    parser = argparse.ArgumentParser(prog="entloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", parents=[common], help="evaluate a parameter grid to CSV")
    sweep.add_argument("--outputs", help="comma-separated output columns")
    sweep.add_argument("--source", choices=["formulas", "pipeline"])
    sweep.set_defaults(func=cmd_sweep)

    stage = sub.add_parser("stage", parents=[common], help="run the three protocol stages at one point")
    stage.add_argument("--balance", default="auto", choices=["auto", "on_A", "on_B", "none"])
    stage.add_argument("--merge", action="store_true", help="fuse filters per arm")
    stage.add_argument("--input-state", default="singlet", choices=["singlet", "experimental"])
    stage.set_defaults(func=cmd_stage)

    check = sub.add_parser("oracle-check", parents=[common], help="compare the Fock oracle with the pipeline")
    check.set_defaults(func=cmd_oracle_check)

    tomo = sub.add_parser("tomo", parents=[common], help="simulate counts and reconstruct a state")
    tomo.add_argument("--state", help="singlet, experimental, werner:F or stage")
    tomo.add_argument("--rate", type=float, help="coincidences per second")
    tomo.add_argument("--duration", type=float, help="seconds per setting")
    tomo.add_argument("--accidentals", type=float, help="accidental coincidences per second")
    tomo.add_argument("--trials", type=int)
    tomo.add_argument("--counts-out", metavar="PATH")
    tomo.set_defaults(func=cmd_tomo)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"entloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgumentError as exc:
        print(f"entloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateOutcomeError as exc:
        print(f"entloc: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except EntlocError as exc:
        print(f"entloc: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
