"""Command-line front end: solve, convergence, continue, compare.

Every command writes CSV files (one header line, floats with 17 significant
digits) plus ``manifest.json`` into ``--out``. Exit codes: 0 success,
1 usage or configuration error, 2 numerical non-convergence.
"""

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import CATALOG, default_omega, initial_guess, linear_part, make_system
from .continuation import ContinuationConfig, branch_to_records, continue_branch
from .errors import (
    BlowUpError,
    BranchStalledError,
    ConvergenceError,
    NotSettledError,
    ParameterError,
    PfimError,
)
from .pfim import PfimConfig, pfim_solve
from .reference import (
    HbmConfig,
    ShootingConfig,
    hbm_linear_guess,
    hbm_solve,
    shooting_solve,
    shooting_trajectory,
    steady_state_reference,
)
from .studies import convergence_study, grid_error, one_step_order, reference_solution
from .system import TWO_PI

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# artifacts


def fmt(value):
    """17 significant digits for floats; plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@dataclass
class RunManifest:
    command: str
    system: str
    parameters: dict
    config: dict
    version: str = __version__
    timings_ms: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def write(self, out):
        Path(out, "manifest.json").write_text(self.to_json() + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite(x):
    """JSON has no NaN; map non-finite floats to None."""
    return float(x) if x is not None and math.isfinite(x) else None


class _Timer:
    def __init__(self, store, key):
        self.store, self.key = store, key

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.store[self.key] = 1e3 * (time.perf_counter() - self.t0)


# ---------------------------------------------------------------------------
# argument handling


def _params(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--param {key}: {value!r} is not a number") from None
    return out


def _omega_range(text):
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--omega-range expects a:b, got {text!r}") from None
    return a, b


def _runs(text):
    runs = []
    for item in text.split(","):
        try:
            method, res = item.split(":")
            runs.append((method.strip(), int(res)))
        except ValueError:
            raise UsageError(f"--runs expects method:resolution[,...], got {item!r}") from None
        if method not in ("pfim", "hbm"):
            raise UsageError(f"--runs: unknown method {method!r}")
    return runs


def _common(p, n_p_default):
    p.add_argument("--system", required=True)
    p.add_argument("--np", dest="n_p", type=int, default=n_p_default)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--tol-a", type=float, default=1e-10)
    p.add_argument("--tol-r", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", default="pfim-out")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="pfim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="periodic solution of one system")
    _common(p, 4096)
    p.add_argument("--method", choices=("pfim", "hbm", "shooting"), default="pfim")
    p.add_argument("--harmonics", type=int, default=10)
    p.add_argument("--steps", type=int, default=2**14, help="RK4 steps per period (shooting)")

    p = sub.add_parser("convergence", help="per-iteration error study against a reference")
    _common(p, 4096)
    p.add_argument("--ref", choices=("shooting", "steady"), default="shooting")
    p.add_argument("--steps", type=int, default=2**14, help="RK4 steps per period (reference)")
    p.add_argument("--order-seeds", type=int, default=8, help="directions for the one-step order (0 skips)")

    p = sub.add_parser("continue", help="pseudo-arclength sweep in omega")
    _common(p, 1024)
    p.add_argument("--omega-range", required=True)
    p.add_argument("--ds", type=float, default=0.02)
    p.add_argument("--ds-min", type=float, default=1e-4)
    p.add_argument("--ds-max", type=float, default=0.1)
    p.add_argument("--max-points", type=int, default=2000)
    p.add_argument("--amplitude-state", type=int, default=None)
    p.add_argument("--steps", type=int, default=4096, help="RK4 steps per period (steady seed)")

    p = sub.add_parser("compare", help="error and wall time of several methods")
    _common(p, 4096)
    p.add_argument("--runs", required=True, help="e.g. pfim:256,pfim:1024,hbm:10")
    p.add_argument("--ref", choices=("shooting", "steady"), default="shooting")
    p.add_argument("--steps", type=int, default=2**14, help="RK4 steps per period (reference)")
    return parser


def _setup(args):
    if args.system not in CATALOG:
        raise UsageError(f"unknown system {args.system!r}; choose from {sorted(CATALOG)}")
    try:
        params = _params(args.param)
        if args.omega is not None:
            params["omega"] = args.omega
        sys_ = make_system(args.system, params)
        omega = default_omega(args.system, params)
        cfg = PfimConfig(n_p=args.n_p, tol_a=args.tol_a, tol_r=args.tol_r, max_iter=args.max_iter)
    except (ParameterError, PfimError) as exc:
        raise UsageError(str(exc)) from None
    return sys_, params, omega, cfg


def _resolved(args, params):
    entry = CATALOG[args.system]
    out = dict(entry.defaults)
    out.update(params)
    return out


def _state_header(dim):
    return [f"x{i + 1}" for i in range(dim)]


def _write_solution(out, traj):
    rows = ([t] + list(x) for t, x in zip(traj.tau, traj.samples))
    write_csv(Path(out, "solution.csv"), ["tau"] + _state_header(traj.dim), rows)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args):
    sys_, params, omega, cfg = _setup(args)
    out = Path(args.out)
    timings, results = {}, {}
    config = {"method": args.method, "n_p": args.n_p, "tol_a": args.tol_a, "tol_r": args.tol_r,
              "max_iter": args.max_iter}
    converged = False
    if args.method == "pfim":
        guess = initial_guess(args.system, args.n_p, params, omega)
        phase = "autonomous" if sys_.autonomous else "forced"
        with _Timer(timings, "solve"):
            res = pfim_solve(sys_, guess, phase, cfg)
        traj = res.trajectory
        history = [(h.iteration, h.e_a, h.e_r, h.omega) for h in res.history]
        converged = res.converged
        results.update(iterations=res.iterations, message=res.message, omega=traj.omega)
    elif args.method == "hbm":
        config.update(harmonics=args.harmonics)
        if args.harmonics < 1:
            raise UsageError("--harmonics must be positive")
        if sys_.autonomous:
            raise UsageError("--method hbm handles forced systems only")
        hcfg = HbmConfig(max_iter=args.max_iter)
        with _Timer(timings, "solve"):
            guess = hbm_linear_guess(linear_part(args.system, params), args.harmonics, omega)
            try:
                sol = hbm_solve(sys_, args.harmonics, omega, guess, hcfg)
                converged = True
            except ConvergenceError as exc:
                sol = exc.partial
                results["message"] = str(exc)
        traj = sol.trajectory(args.n_p)
        history = [(it, r, e, omega) for it, r, e in sol.history]
        rows = ([i + 1] + list(c) for i, c in enumerate(sol.coeffs))
        k = range(1, args.harmonics + 1)
        header = ["state", "a0"] + [f"a{j}" for j in k] + [f"b{j}" for j in k]
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "coefficients.csv", header, rows)
        results.update(iterations=sol.iterations, residual=sol.residual, omega=omega)
    else:
        config.update(steps=args.steps)
        guess = initial_guess(args.system, 64, params, omega)
        scfg = ShootingConfig(n_s=args.steps, max_iter=args.max_iter)
        with _Timer(timings, "solve"):
            try:
                sol = shooting_solve(sys_, guess.x0, TWO_PI / omega, scfg,
                                     None if sys_.autonomous else omega)
                converged = True
            except ConvergenceError as exc:
                sol = exc.partial
                results["message"] = str(exc)
        w = sol.omega if sys_.autonomous else omega
        traj = shooting_trajectory(sys_, sol, args.n_p, omega=None if sys_.autonomous else omega)
        history = [(it, r, e, w) for it, r, e in sol.history]
        results.update(iterations=sol.iterations, residual=sol.residual, omega=w)
    out.mkdir(parents=True, exist_ok=True)
    _write_solution(out, traj)
    write_csv(out / "history.csv", ["iteration", "e_a", "e_r", "omega"], history)
    results["converged"] = converged
    RunManifest("solve", args.system, _resolved(args, params), config, timings_ms=timings,
                results=results).write(out)
    return EXIT_OK if converged else EXIT_NUMERIC


def cmd_convergence(args):
    sys_, params, omega, cfg = _setup(args)
    out = Path(args.out)
    timings = {}
    guess = initial_guess(args.system, args.n_p, params, omega)
    try:
        with _Timer(timings, "study"):
            study = convergence_study(sys_, guess, None, cfg, reference=args.ref, n_s=args.steps)
    except (ConvergenceError, NotSettledError, BlowUpError) as exc:
        out.mkdir(parents=True, exist_ok=True)
        RunManifest("convergence", args.system, _resolved(args, params), vars_config(args),
                    timings_ms=timings, results={"error": str(exc)}).write(out)
        print(f"reference failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    step_order = float("nan")
    if args.order_seeds > 0:
        with _Timer(timings, "one_step"):
            step_order = one_step_order(sys_, study.reference, seed=args.seed, n_seeds=args.order_seeds)[0]
    order = study.order if math.isfinite(study.order) else step_order
    out.mkdir(parents=True, exist_ok=True)
    rows = ((r.iteration, r.error, r.omega_error, r.e_a, r.e_r, r.residual) for r in study.records)
    write_csv(out / "convergence.csv", ["iteration", "error", "omega_error", "e_a", "e_r", "residual"], rows)
    results = {
        "order": _finite(order),
        "order_iterations": _finite(study.order),
        "order_one_step": _finite(step_order),
        "plateau": _finite(study.plateau),
        "plateau_iteration": study.plateau_iteration,
        "converged": study.converged,
        "message": study.message,
        "omega": study.omega,
    }
    RunManifest("convergence", args.system, _resolved(args, params), vars_config(args),
                timings_ms=timings, results=results).write(out)
    return EXIT_OK


def vars_config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "param", "out", "system")}


def _steady_seed(sys_, omega, n_p, steps):
    n_s = steps
    while True:
        try:
            return steady_state_reference(sys_, omega, n_p, settle_periods=100, n_s=n_s)
        except BlowUpError:
            if n_s >= 2**16:
                raise
            n_s *= 2


def cmd_continue(args):
    sys_, params, _, pcfg = _setup(args)
    if sys_.autonomous:
        raise UsageError("continuation needs a forced system")
    a, b = _omega_range(args.omega_range)
    try:
        ccfg = ContinuationConfig(a, b, ds=args.ds, ds_min=args.ds_min, ds_max=args.ds_max,
                                  max_points=args.max_points, pfim=pcfg)
    except PfimError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    timings, results = {}, {}
    status = EXIT_OK
    with _Timer(timings, "sweep"):
        guess = initial_guess(args.system, args.n_p, params, a)
        try:
            branch = continue_branch(sys_, ccfg, guess, args.amplitude_state)
        except BranchStalledError as exc:
            branch = exc.branch
            if not branch:
                # the seed did not converge from the linear guess: settle first
                results["seed"] = "steady"
                try:
                    guess = _steady_seed(sys_, a, args.n_p, args.steps)
                    branch = continue_branch(sys_, ccfg, guess, args.amplitude_state)
                except (BranchStalledError, NotSettledError, BlowUpError) as exc2:
                    branch = getattr(exc2, "branch", [])
                    results["message"] = str(exc2)
                    status = EXIT_NUMERIC
            else:
                results["message"] = str(exc)
                status = EXIT_NUMERIC
    out.mkdir(parents=True, exist_ok=True)
    recs = branch_to_records(branch)
    cols = ["omega", "amplitude", "stable", "max_multiplier_abs", "iterations"]
    write_csv(out / "branch.csv", cols, ([r[c] for c in cols] for r in recs))
    results.update(points=len(branch), stable_changes=sum(
        r0["stable"] != r1["stable"] for r0, r1 in zip(recs, recs[1:])))
    RunManifest("continue", args.system, _resolved(args, params), vars_config(args),
                timings_ms=timings, results=results).write(out)
    return status


def cmd_compare(args):
    sys_, params, omega, cfg = _setup(args)
    if sys_.autonomous:
        raise UsageError("compare handles forced systems only")
    runs = _runs(args.runs)
    out = Path(args.out)
    timings, rows = {}, []
    # reference: shooting seeded from a converged PFIM solution
    try:
        with _Timer(timings, "reference"):
            seed = pfim_solve(sys_, initial_guess(args.system, args.n_p, params, omega), "forced", cfg)
            x0 = seed.trajectory.x0
            refs = {}

            def ref_on(n_p):
                if n_p not in refs:
                    refs[n_p] = reference_solution(sys_, n_p, omega, x0, args.ref, args.steps)[0]
                return refs[n_p]

            ref_on(args.n_p)
    except (ConvergenceError, NotSettledError, BlowUpError) as exc:
        print(f"reference failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    linear = linear_part(args.system, params)
    for method, res in runs:
        row = {"method": method, "resolution": res, "error": float("nan"), "time_ms": float("nan"),
               "iterations": -1, "status": "ok"}
        try:
            if method == "pfim":
                guess = initial_guess(args.system, res, params, omega)
                c = PfimConfig(n_p=res, tol_a=args.tol_a, tol_r=args.tol_r, max_iter=args.max_iter)
                t0 = time.perf_counter()
                r = pfim_solve(sys_, guess, "forced", c)
                row["time_ms"] = 1e3 * (time.perf_counter() - t0)
                row["iterations"] = r.iterations
                row["error"] = grid_error(r.trajectory, ref_on(res), sys_.observed)
                if not r.converged:
                    row["status"] = r.message.split(";")[0]
            else:
                hc = HbmConfig(max_iter=args.max_iter)
                t0 = time.perf_counter()
                g = hbm_linear_guess(linear, res, omega)
                sol = hbm_solve(sys_, res, omega, g, hc)
                row["time_ms"] = 1e3 * (time.perf_counter() - t0)
                row["iterations"] = sol.iterations
                row["error"] = grid_error(sol.trajectory(args.n_p), ref_on(args.n_p), sys_.observed)
        except PfimError as exc:
            row["status"] = type(exc).__name__
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["method", "resolution", "error", "time_ms", "iterations", "status"]
    write_csv(out / "compare.csv", cols, ([r[c] for c in cols] for r in rows))
    timings.update({f"{r['method']}:{r['resolution']}": r["time_ms"] for r in rows})
    RunManifest("compare", args.system, _resolved(args, params), vars_config(args),
                timings_ms=timings, results={"rows": len(rows)}).write(out)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "continue": cmd_continue,
    "compare": cmd_compare,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"pfim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
