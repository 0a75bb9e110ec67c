"""Command-line entry point: ``aperion <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .cocycle import eigen_split, lyapunov_estimate
from .config import config_hash, elliptic_from, jacobi_from, load_config
from .elliptic_bridge import from_jacobi, to_jacobi
from .errors import AperionError, ResonanceError
from .groundstate import METHODS, RESIDUAL_WINDOW, ground_state, ground_state_elliptic
from .homogenize import gaussian, homogenize, run_convergence
from .kpp_sim import check_almost_periodicity, steady_state
from .reducibility import diagonalize, perturb_to_reducible, reduce_full

RESIDUAL_TOL = 1e-8


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _clean(x):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)) and not math.isfinite(float(x)):
        return None
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, default=_json_default)


def _write_text(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _emit(obj, path=None):
    text = dumps(obj) + "\n"
    if path:
        _write_text(path, text)
    else:
        sys.stdout.write(text)


def _write_csv(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in row])


class RunManifest:
    """Provenance record of one command invocation."""

    def __init__(self, args):
        self.command = args.command
        self.argv = list(sys.argv[1:])
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.config_sha256 = None
        self.tolerances: dict = {}
        self.checks: list = []
        self.outputs: list = []
        self.seed = getattr(args, "seed", 0)

    def check(self, name, value, threshold, relation="<="):
        ok = {"<=": lambda: value <= threshold, "<": lambda: value < threshold,
              ">": lambda: value > threshold, ">=": lambda: value >= threshold,
              "==": lambda: value == threshold}[relation]()
        self.checks.append({"name": name, "value": value, "threshold": threshold,
                            "relation": relation, "passed": bool(ok)})

    def to_json_dict(self) -> dict:
        return {
            "command": self.command,
            "argv": self.argv,
            "version": __version__,
            "config_sha256": self.config_sha256,
            "seed": self.seed,
            "threads": os.environ.get("APERION_THREADS"),
            "started": self.started,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "tolerances": self.tolerances,
            "checks": self.checks,
            "all_passed": all(c["passed"] for c in self.checks),
            "outputs": self.outputs,
        }


def _manifest_path(args):
    if args.manifest:
        return args.manifest
    for name in ("out", "report"):
        p = getattr(args, name, None)
        if p:
            return str(Path(p).with_suffix("")) + ".manifest.json"
    return None


def _load(args, kind):
    path = getattr(args, kind)
    cfg = load_config(path)
    build = jacobi_from if kind in ("op", "jacobi") else elliptic_from
    return build(cfg, args.omega, args.regime), config_hash(cfg)


def parse_eps_list(text: str) -> list:
    return [float(Fraction(s.strip())) for s in text.split(",") if s.strip()]


def parse_phi(text: str):
    """'gaussian', 'gaussian:1.5', 'gaussian:sigma=1.5' or 'gaussian:σ=1.5'."""
    name, _, rest = text.partition(":")
    if name.strip().lower() != "gaussian":
        raise argparse.ArgumentTypeError(f"unknown initial profile {name!r} (only 'gaussian')")
    value = rest.split("=", 1)[-1].strip() if rest else "1"
    sigma = float(value)
    if sigma <= 0:
        raise argparse.ArgumentTypeError("gaussian width must be positive")
    return gaussian(sigma)


# ------------------------------------------------------------- commands
def cmd_ground_state(args, man: RunManifest):
    if args.op:
        op, man.config_sha256 = _load(args, "op")
        gs = ground_state(op, adjoint=args.adjoint, N=args.window, method=args.method)
    else:
        e, man.config_sha256 = _load(args, "elliptic")
        gs = ground_state_elliptic(e, adjoint=args.adjoint, N=args.window, method=args.method)
    man.tolerances = {"residual": RESIDUAL_TOL, "window": args.window}
    man.check("forward residual", gs.residual_forward, RESIDUAL_TOL)
    man.check("forward positivity margin", gs.positivity_margin, 0.0, ">")
    if gs.residual_adjoint is not None:
        man.check("adjoint residual", gs.residual_adjoint, RESIDUAL_TOL)
        man.check("adjoint positivity margin", gs.positivity_margin_adjoint, 0.0, ">")
    _emit(gs.to_json_dict(), args.report)
    if args.report:
        man.outputs.append(args.report)


def cmd_reduce(args, man: RunManifest):
    op, man.config_sha256 = _load(args, "op")
    if args.perturb:
        res = perturb_to_reducible(op, args.E, K=args.K, eps_target=args.eps_target, full_output=True)
        out = {"E": args.E, "distance": res.distance, "within_target": res.within_target,
               "eps_target": args.eps_target, "K": args.K, "truncated_mass": res.truncated_mass,
               "contraction": res.contraction, "history": res.history,
               "constants": [np.real(c) for c in np.diag(res.constants)],
               "V_perturbed": res.V.to_json_dict(), "conjugacy": res.conjugacy.to_json_dict()}
        man.tolerances = {"eps_target": args.eps_target}
        man.check("distance to reducible potential", res.distance, args.eps_target)
    else:
        conj, D, diag = reduce_full(op, args.E, full_output=True)
        err = conj.reconstruction_error(op, args.E, D)
        out = {"E": args.E, "constants": [float(np.real(D[0, 0])), float(np.real(D[1, 1]))],
               "reconstruction_error": err, "gate": conj.gate(), "gate_ok": conj.gate_ok(),
               "conjugacy": conj.to_json_dict()}
        man.tolerances = {"reconstruction": RESIDUAL_TOL}
        man.check("conjugacy reconstruction error", err, RESIDUAL_TOL)
    _emit(out, args.out)
    if args.out:
        man.outputs.append(args.out)


def cmd_convert(args, man: RunManifest):
    if args.elliptic:
        e, man.config_sha256 = _load(args, "elliptic")
        op, h = to_jacobi(e)
        out = {"jacobi": op.to_json_dict(), "h": h}
    else:
        op, man.config_sha256 = _load(args, "jacobi")
        out = {"elliptic": from_jacobi(op).to_json_dict()}
    _emit(out, args.out)
    if args.out:
        man.outputs.append(args.out)


def cmd_cocycle(args, man: RunManifest):
    op, man.config_sha256 = _load(args, "op")
    cp = eigen_split(args.E / op.scale, op.g)
    out = {"constant_part": cp.to_json_dict(),
           "lyapunov_estimate": lyapunov_estimate(op, args.E, args.n, seed=args.seed),
           "lyapunov_constant": math.log(cp.mu), "perturbation_size": op.perturbation_size()}
    if args.diag:
        diag = diagonalize(op, args.E)
        lam, mu = diag.diagonal_constants()
        out["diagonalized"] = {"lambda": float(np.real(lam)), "mu": float(np.real(mu)),
                               "reconstruction_error": diag.reconstruction_error(op), "notes": diag.notes}
    _emit(out, args.out)
    if args.out:
        man.outputs.append(args.out)


def cmd_kpp_steady(args, man: RunManifest):
    e, man.config_sha256 = _load(args, "elliptic")
    gs = ground_state_elliptic(e, adjoint=False, method=args.method)
    ss = steady_state(e, gs.E0, gs.P, M=args.M, N=args.window, tol=args.tol, check_window=not args.no_window_check)
    per = check_almost_periodicity(ss, e)
    sites, vals = ss.interior_values()
    _write_csv(args.out, ["n", "u0"], zip(sites.tolist(), vals.tolist()))
    man.outputs.append(args.out)
    man.tolerances = {"gap": 1e-6, "residual": RESIDUAL_TOL, "window_defect": RESIDUAL_TOL, "step_tol": args.tol}
    man.check("sandwich gap", ss.gap, 1e-6)
    man.check("steady residual", ss.residual, RESIDUAL_TOL)
    if ss.window_defect is not None:
        man.check("window-doubling change", ss.window_defect, RESIDUAL_TOL)
    man.check("monotonicity violations", ss.monotone_violations, 0, "==")
    report = {"E0": gs.E0, "M": ss.M, "eps": ss.eps, "window": args.window, "interior": ss.interior,
              "gap": ss.gap, "residual": ss.residual, "window_defect": ss.window_defect,
              "sandwich_ok": ss.sandwich_ok, "monotone_violations": ss.monotone_violations,
              "steps": ss.steps, "dt": ss.notes.get("dt"), "u0_min": float(vals.min()), "u0_max": float(vals.max()),
              "near_periods": per.shifts, "coefficient_defects": per.coefficient_defects,
              "solution_defects": per.solution_defects, "modulus": per.modulus,
              "fourier_fit_error": per.fourier_error, "fourier_modes": per.fourier_modes,
              "ground_state_method": gs.notes.get("method")}
    if args.report:
        _emit(report, args.report)
        man.outputs.append(args.report)
    else:
        _emit(report)


def cmd_homogenize(args, man: RunManifest):
    e, man.config_sha256 = _load(args, "elliptic")
    gs = ground_state_elliptic(e, adjoint=True, method=args.method)
    cd = homogenize(e, gs)
    tab = run_convergence(cd, args.phi, args.T, args.eps, Z=args.Z, window_check=not args.no_window_check)
    _write_csv(args.out, ["eps", "error", "ratio", "a_bar", "c_bar", "l", "c0"],
               ([r["eps"], r["error"], r["ratio"], r["a_bar"], r["c_bar"], r["l"], r["c0"]] for r in tab.rows))
    man.outputs.append(args.out)
    man.tolerances = {"window_change": 0.1, "Z": args.Z}
    man.check("errors strictly decreasing", int(tab.decreasing()), 1, "==")
    for i, ch in enumerate(tab.window_changes):
        man.check(f"window-doubling change at eps={tab.rows[i]['eps']:g}", ch, 0.1)
    report = {"cell": cd.to_json_dict(), "rows": tab.rows, "ratios": tab.ratios(),
              "window_changes": tab.window_changes, "T": args.T, "Z": args.Z, "sigma": args.phi.sigma}
    if args.report:
        _emit(report, args.report)
        man.outputs.append(args.report)
    else:
        _emit(report)


def cmd_selftest(args, man: RunManifest):
    from .selftest import run_suite

    numbers = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_suite(quick=args.quick, numbers=numbers, echo=print, seed=args.seed)
    for r in results:
        for c in r.checks:
            man.checks.append({"criterion": r.number, **c.to_json_dict()})
        if r.error:
            man.checks.append({"criterion": r.number, "name": "exception", "passed": False,
                               "value": r.first_failure(), "threshold": None, "relation": None})
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if args.report:
        _emit([r.to_json_dict() for r in results], args.report)
        man.outputs.append(args.report)
    if failed:
        print(f"first failure: criterion {failed[0].number}: {failed[0].first_failure()}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--omega", help="frequency override: decimal, golden, silver, sqrt:N or a JSON vector")
    common.add_argument("--regime", help="class-p, independent or dc-infinity:gamma,tau")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--manifest", help="run manifest path (default: next to the main output)")

    p = argparse.ArgumentParser(prog="aperion", description=__doc__)
    p.add_argument("--version", action="version", version=f"aperion {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ground-state", parents=[common], help="ground energy and positive eigenfunctions")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--op", help="Jacobi operator file (TOML or JSON)")
    src.add_argument("--elliptic", help="elliptic operator file (TOML or JSON)")
    s.add_argument("--adjoint", action="store_true", help="also solve the adjoint problem")
    s.add_argument("--method", choices=METHODS, default="auto")
    s.add_argument("--window", type=int, default=RESIDUAL_WINDOW, help="residual window half-width")
    s.add_argument("--report")
    s.set_defaults(func=cmd_ground_state)

    s = sub.add_parser("reduce", parents=[common], help="reducing conjugacy at energy E")
    s.add_argument("--op", required=True)
    s.add_argument("--E", type=float, required=True)
    s.add_argument("--perturb", action="store_true", help="perturb the potential to a reducible one")
    s.add_argument("--K", type=int, default=16)
    s.add_argument("--eps-target", type=float, default=1e-4)
    s.add_argument("--out")
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("convert", parents=[common], help="elliptic <-> Jacobi coefficients")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--elliptic")
    src.add_argument("--jacobi")
    s.add_argument("--out")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("cocycle", parents=[common], help="transfer-cocycle constants at energy E")
    s.add_argument("--op", required=True)
    s.add_argument("--E", type=float, required=True)
    s.add_argument("--diag", action="store_true", help="diagonalize the full cocycle")
    s.add_argument("--n", type=int, default=20_000, help="orbit length for the Lyapunov estimate")
    s.add_argument("--out")
    s.set_defaults(func=cmd_cocycle)

    s = sub.add_parser("kpp-steady", parents=[common], help="positive lattice KPP steady state")
    s.add_argument("--elliptic", required=True)
    s.add_argument("--window", type=int, default=2048)
    s.add_argument("--M", type=float, help="supersolution level (default sup c + 0.5)")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--method", choices=METHODS, default="auto")
    s.add_argument("--no-window-check", action="store_true")
    s.add_argument("--out", default="steady.csv")
    s.add_argument("--report")
    s.set_defaults(func=cmd_kpp_steady)

    s = sub.add_parser("homogenize", parents=[common], help="diffusive-limit convergence table")
    s.add_argument("--elliptic", required=True)
    s.add_argument("--phi", type=parse_phi, default=gaussian(1.0), help="initial profile, e.g. gaussian:sigma=1")
    s.add_argument("--T", type=float, default=0.5)
    s.add_argument("--eps", type=parse_eps_list, default=parse_eps_list("1/16,1/32,1/64"))
    s.add_argument("--Z", type=float, default=8.0, help="comoving window length")
    s.add_argument("--method", choices=METHODS, default="auto")
    s.add_argument("--no-window-check", action="store_true")
    s.add_argument("--out", default="conv.csv")
    s.add_argument("--report")
    s.set_defaults(func=cmd_homogenize)

    s = sub.add_parser("selftest", parents=[common], help="run the acceptance criteria")
    s.add_argument("--quick", action="store_true")
    s.add_argument("--only", help="comma-separated criterion numbers")
    s.add_argument("--report")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    man = RunManifest(args)
    code = 0
    try:
        code = args.func(args, man) or 0
    except ResonanceError as exc:
        print(f"aperion: resonance: {exc}", file=sys.stderr)
        code = 3
    except (AperionError, ValueError, OSError) as exc:
        print(f"aperion: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 2
    if code == 0 and man.checks and not all(c["passed"] for c in man.checks):
        failed = next(c for c in man.checks if not c["passed"])
        print(f"aperion: check failed: {failed['name']}", file=sys.stderr)
        code = 1
    path = _manifest_path(args)
    if path:
        _write_text(path, dumps(man.to_json_dict()) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
