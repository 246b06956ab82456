"""Command-line entry point: one pipeline per subcommand, one report per run.

Every run writes ``report.json`` (schema ``nsiweak.report/1``) to ``--out``
plus plot-ready CSVs. Exit status is 0 when every certification passed, 1
when one failed (the report is still written) and 2 on configuration or
I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CertificationError, NSIError, PreconditionError
from .report import Report

SCHEMA = "nsiweak.report/1"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    """Bad command-line input or unusable output path (exit status 2)."""


# ---------------------------------------------------------------------------
# serialization


def fmt_float(x: float) -> str:
    """17 significant digits; non-finite values as JSON strings."""
    x = float(x)
    if math.isfinite(x):
        s = format(x, ".17g")
        return s if any(ch in s for ch in ".en") else s + ".0"
    return json.dumps(str(x))


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, Fraction):
        return json.dumps(str(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, str, type(None))) for v in obj):
            return "[" + ", ".join(to_json(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


@dataclass
class RunConfig:
    """Parsed command: name, inputs as given, output directory and seed."""

    command: str
    inputs: dict
    out: str
    seed: int = 0


@dataclass
class RunResult:
    report: Report
    constants: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)  # name -> text

    @property
    def passed(self) -> bool:
        return self.report.passed


def emit_report(cfg: RunConfig, res: RunResult) -> list:
    """Write ``report.json`` and the CSV/JSON artifacts; returns the paths."""
    doc = {
        "schema": SCHEMA,
        "command": cfg.command,
        "inputs": cfg.inputs,
        "seed": cfg.seed,
        "passed": res.passed,
        "constants": res.constants,
        "checks": [c.to_dict() for c in res.report.checks],
    }
    files = {"report.json": to_json(doc) + "\n", **res.files}
    try:
        os.makedirs(cfg.out, exist_ok=True)
        paths = []
        for name, text in files.items():
            path = os.path.join(cfg.out, name)
            with open(path, "w", newline="") as fh:
                fh.write(text)
            paths.append(path)
    except OSError as exc:
        raise ConfigError(f"cannot write to {cfg.out!r}: {exc}") from exc
    return paths


# ---------------------------------------------------------------------------
# argument parsing helpers


def _floats(text: str, n: int, what: str) -> list:
    try:
        vals = [float(Fraction(v.strip())) for v in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse {what} {text!r}") from None
    if len(vals) != n:
        raise ConfigError(f"{what} needs {n} comma-separated numbers")
    return vals


def _rect(text: str):
    from .fields import Rect
    a1, b1, a2, b2 = _floats(text, 4, "rectangle")
    try:
        return Rect(a1, b1, a2, b2)
    except (NSIError, ValueError) as exc:
        raise ConfigError(f"bad rectangle {text!r}: {exc}") from None


def _box(text: str):
    from .cantor import Box3
    try:
        v = [Fraction(s.strip()) for s in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse box {text!r}") from None
    if len(v) != 6:
        raise ConfigError("box needs lo1,hi1,lo2,hi2,lo3,hi3")
    return Box3((v[0], v[2], v[4]), (v[1], v[3], v[5]))


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot read {text!r} as a rational (use p/q or a decimal)") from None


def _profile(spec: str, T: float):
    from .energy import EnergyProfile
    try:
        e = EnergyProfile.parse(spec, T)
        e.validate()
    except (PreconditionError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    return e


def _energy_csv(energy: dict) -> str:
    rows = zip(*(np.asarray(energy[k], dtype=float) for k in ("t", "norm", "target", "deviation")))
    return csv_text(["t", "norm", "target", "deviation"], rows)


# ---------------------------------------------------------------------------
# pipelines


def run_cutoff(args) -> RunResult:
    from .cutoff import build_cutoff
    rect = _rect(args.rect)
    cut = build_cutoff(rect, args.eta, args.a, grid=args.grid, raise_on_fail=False)
    lf = [c.margin for c in cut.report.checks if c.name.startswith("Lf_positive")]
    consts = dict(cut.summary())
    consts.update({"c": cut.c, "c_prime": cut.c_prime, "worst_Lf_margin": min(lf)})
    return RunResult(cut.report, consts)


def run_structure(args) -> RunResult:
    from .cutoff import build_structure_recipe
    rect = _rect(args.rect)
    st = build_structure_recipe(rect, args.eta, args.a, grid=args.grid)
    cut = st.cutoffs[0]
    consts = {"rect": rect.as_list(), "eta": args.eta, "band": st.band, "c_prime_cert": cut.c_prime_cert,
              "c_cert": cut.c_cert, "plateau_support": st.phi.support.as_list()}
    return RunResult(st.report, consts)


def _synth(inputs: dict, seed: int):
    from .energy import synthesize
    rect = _rect(inputs["rect"])
    e = _profile(inputs["profile"], inputs["T"])
    return synthesize(rect, inputs["eps"], inputs["T"], e, p=inputs["p"], scheme=inputs["scheme"],
                      n_times=inputs["times"], nsi_samples=inputs["nsi_samples"], seed=seed)


def run_synth(args) -> RunResult:
    inputs = {"rect": args.rect, "profile": args.profile, "T": args.T, "eps": args.eps, "p": args.p,
              "scheme": args.scheme, "times": args.times, "nsi_samples": args.nsi_samples}
    if not (args.eps > 0 and args.T > 0 and args.p >= 1):
        raise ConfigError("need eps > 0, T > 0 and p >= 1")
    res = _synth(inputs, args.seed)
    consts = {k: v for k, v in res.constants.items()}
    consts["max_deviation"] = float(np.max(res.energy["deviation"]))
    return RunResult(res.report, consts, {"energy.csv": _energy_csv(res.energy)})


def run_verify(args) -> RunResult:
    """Rebuild a synth run from its manifest and re-run the NSI and LEI checks."""
    from .cutoff import cutoff_field
    from .energy import _nsi_sampling
    from .report import Check
    from .verify import TestFunction, lei_check
    try:
        with open(args.manifest) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from None
    if doc.get("schema") != SCHEMA or doc.get("command") != "synth":
        raise ConfigError("manifest must be a synth report.json")
    inputs = dict(doc["inputs"])
    res = _synth(inputs, doc.get("seed", 0))
    sol = res.solution
    stages = [s for s in sol.stages if hasattr(s, "E_power")]
    rect = _rect(inputs["rect"])
    T = float(inputs["T"])
    rep = Report()
    rep.add(Check("rebuild_matches", "artifact: rebuilt constants equal the manifest",
                  _same_constants(doc.get("constants", {}), res.constants), 0.0, None))
    nu0 = float(res.constants["nu0"])
    if stages:
        rep.extend(_nsi_sampling(sol, stages, rect, T, nu0, args.nsi_samples, args.seed))
    psi = cutoff_field(rect, 0.1 * rect.min_side)
    # the first two stages and the last two that start before T
    starts = [s.t_start for s in stages if s.t_start < T]
    windows = [(0.0, starts[2] if len(starts) > 2 else T)]
    if len(starts) > 2:
        windows.append((starts[-2], T))
    for S, Sp in windows:
        if not Sp > S:
            continue
        for nu in (0.0, nu0):
            r = lei_check(sol, TestFunction(psi), S, Sp, nu=nu, n_time=4, tol=1e-7)
            rep.add(Check(f"lei[{S:.4g},{Sp:.4g}],nu={nu:.3g}", "Section 2: local energy inequality on [S, S']",
                          r.passed, r.slack, (S, Sp), r.to_dict()))
    return RunResult(rep, {"nu0": nu0, "K": res.constants["K"], "manifest": args.manifest})


def _same_constants(a: dict, b: dict) -> bool:
    for k in ("K", "eta", "nu0", "zeta"):
        if k in a and k in b and not math.isclose(float(a[k]), float(b[k]), rel_tol=1e-12, abs_tol=0.0):
            return False
    return True


def _cantor_params(args):
    from .cantor import CantorParams
    z = [_fraction(s) for s in args.z.split(",")]
    if len(z) == 2:
        z.append(Fraction(0))
    try:
        return CantorParams(_fraction(args.tau), int(args.M), _fraction(args.xi), tuple(z), _fraction(args.X),
                            _box(args.G), None if args.zeta is None else _fraction(args.zeta))
    except NSIError as exc:
        raise ConfigError(str(exc)) from None


def run_cantor(args) -> RunResult:
    from .cantor import box_dimension, level_boxes, switching_schedule, validate_params
    from .report import Check
    p = _cantor_params(args)
    rep = Report()
    val = validate_params(p)
    rep.extend(val, "params.")
    consts = {"params": p.to_dict(), **val.meta}
    files = {}
    geometric = all(c.passed for c in val.checks if c.name not in ("tau_xi_M", "xi_in_unit_interval"))
    if geometric:
        levels = []
        for j in range(args.levels + 1):
            L = level_boxes(p, j, check_params=False)
            rep.extend(L.report, f"level_{j}.")
            levels.append(L.to_dict())
        files["boxes.json"] = to_json({"params": p.to_dict(), "levels": levels}) + "\n"
        deep = level_boxes(p, args.depth, check_params=False)
        scales = [p.tau ** k for k in range(1, args.depth + 1)]
        fit = box_dimension(deep.boxes, scales)
        rep.add(Check("box_dimension", "Section 5: box dimension of the level set near -log M / log tau",
                      abs(fit.dimension - p.ifs_dimension) <= 0.05, 0.05 - abs(fit.dimension - p.ifs_dimension),
                      None, {"estimate": fit.dimension, "r2": fit.r2}))
        consts.update({"dimension_estimate": fit.dimension, "dimension_r2": fit.r2, "depth": args.depth})
        files["dimension.csv"] = csv_text(["log_inv_scale", "log_count"], fit.rows())
    T = _fraction(args.T)
    times, T0 = switching_schedule(T, p.tau, args.levels)
    ok = all(T0 - t == T * p.tau ** (2 * j) / (1 - p.tau ** 2) for j, t in enumerate(times))
    rep.add(Check("schedule", "Section 3: T_0 - t_j = T tau^2j / (1 - tau^2)", ok, 0.0, None))
    consts["schedule"] = {"times": [str(t) for t in times], "T0": str(T0), "T0_float": float(T0)}
    if args.tower and geometric:
        from .cantor import placeholder_base, rescale_tower
        base = placeholder_base(T=float(T))
        tw = rescale_tower(base, p, j_max=args.tower_levels)
        rep.extend(tw.report, "tower.")
        consts["tower_assumptions"] = [c.to_dict() for c in tw.assumptions.checks]
    return RunResult(rep, consts, files)


def run_compose(args) -> RunResult:
    from .cantor import compose_with_profile, placeholder_base, placeholder_params, rescale_tower
    e = _profile(args.profile, args.T)
    W = _box(args.W)
    base = placeholder_base()
    tw = rescale_tower(base, placeholder_params(), j_max=1)
    try:
        plan = compose_with_profile(e, tw, W, args.eps, args.T)
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from None
    rep = Report()
    rep.extend(tw.report, "tower.")
    rep.extend(plan.report)
    consts = plan.to_dict()
    consts["tower_assumptions"] = [c.to_dict() for c in tw.assumptions.checks]
    files = {"energy.csv": _energy_csv(plan.energy), "plan.json": to_json(plan.to_dict()) + "\n"}
    return RunResult(rep, consts, files)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsiweak", description="Constructive solutions of the Navier-Stokes inequality")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default="nsiweak-out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("cutoff", help="build and certify the cutoff of a rectangle")
    sp.add_argument("--rect", required=True, help="a1,b1,a2,b2")
    sp.add_argument("--eta", type=float, required=True)
    sp.add_argument("--a", type=float, default=None)
    sp.add_argument("--grid", type=int, default=200)
    common(sp)

    sp = sub.add_parser("structure", help="build and verify the recipe structure")
    sp.add_argument("--rect", required=True)
    sp.add_argument("--eta", type=float, required=True)
    sp.add_argument("--a", type=float, default=None)
    sp.add_argument("--grid", type=int, default=200)
    common(sp)

    sp = sub.add_parser("synth", help="solution with a prescribed energy profile")
    sp.add_argument("--rect", required=True)
    sp.add_argument("--profile", required=True, help="linear:e0,eT | const:e0 | csv:path")
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--scheme", choices=("power", "square"), default="power")
    sp.add_argument("--times", type=int, default=100)
    sp.add_argument("--nsi-samples", type=int, default=500)
    common(sp)

    sp = sub.add_parser("verify", help="re-run the NSI and LEI checks of a synth manifest")
    sp.add_argument("--manifest", required=True, help="report.json of a synth run")
    sp.add_argument("--nsi-samples", type=int, default=200)
    common(sp)

    sp = sub.add_parser("cantor", help="Cantor parameters, level boxes, schedule and dimension fit")
    sp.add_argument("--tau", default="1/3")
    sp.add_argument("--M", type=int, default=2)
    sp.add_argument("--xi", default="3/5")
    sp.add_argument("--X", default="2/3")
    sp.add_argument("--z", default="0,0", help="z1,z2")
    sp.add_argument("--G", default="0,1,-1,1,-1,1", help="lo1,hi1,lo2,hi2,lo3,hi3")
    sp.add_argument("--zeta", default=None, help="required separation (rational)")
    sp.add_argument("--levels", type=int, default=6)
    sp.add_argument("--depth", type=int, default=8)
    sp.add_argument("--T", default="1")
    sp.add_argument("--tower", action="store_true", help="also rescale the placeholder base and certify")
    sp.add_argument("--tower-levels", type=int, default=2)
    common(sp)

    sp = sub.add_parser("compose", help="splice a profile solution with the placeholder tower")
    sp.add_argument("--profile", required=True)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--W", default="-1,2,-1,1,-1,1", help="lo1,hi1,lo2,hi2,lo3,hi3")
    common(sp)
    return ap


PIPELINES = {"cutoff": run_cutoff, "structure": run_structure, "synth": run_synth, "verify": run_verify,
             "cantor": run_cantor, "compose": run_compose}


def run_command(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    inputs = {k: v for k, v in vars(args).items() if k not in ("command", "out", "seed")}
    cfg = RunConfig(args.command, inputs, args.out, args.seed)
    t0 = time.perf_counter()
    try:
        try:
            res = PIPELINES[args.command](args)
        except CertificationError as exc:
            from .report import Check
            rep = Report()
            rep.add(Check(str(exc.clause), "construction aborted by a failed certification", False,
                          float(exc.margin), exc.witness, {"message": str(exc)}))
            res = RunResult(rep)
        emit_report(cfg, res)
    except ConfigError as exc:
        print(f"nsiweak {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NSIError as exc:
        print(f"nsiweak {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = "passed" if res.passed else f"FAILED ({res.report.first_failure().name})"
    print(f"nsiweak {args.command}: {status} in {time.perf_counter() - t0:.1f} s; "
          f"report in {os.path.join(cfg.out, 'report.json')}")
    return EXIT_OK if res.passed else EXIT_FAIL


def main(argv=None) -> None:
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
