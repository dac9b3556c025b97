"""Command-line front end.

Each subcommand writes sample-level CSV data, a ``summary.json`` and a
``manifest.json`` (config echo, version, timestamp, sha256 of the data files)
into ``--out``.  Data files depend only on the config, never on ``--workers``.

Exit codes: 0 ok, 1 invariant violation or internal error, 2 usage error,
3 budget exhausted (partial outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import __version__
from . import analysis as A
from . import scaling as S
from .domination import coupled_domination_run, minimal_l0
from .errors import BudgetExhaustedError, DrainageError, InvalidArgumentError
from .exploration import run_until_regenerations
from .field import FieldParams
from .successor import iterate_path

WORKERS_ENV = "DRAINAGE_WORKERS"

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


class InvariantViolation(DrainageError):
    pass


class Outputs:
    """Collects data files and the summary for one run directory."""

    def __init__(self, out: Path):
        self.out = out
        self.files: List[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows):
        path = self.out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        self.files.append(name)

    def json(self, name: str, obj):
        with open(self.out / name, "w", encoding="utf-8") as fh:
            json.dump(_plain(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(name)

    def manifest(self, config: Dict, status: str):
        sums = {}
        for name in sorted(self.files):
            sums[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
        doc = {"config": config, "version": __version__, "status": status,
               "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(), "checksums": sums}
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(_plain(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- per-replica workers (module level so they pickle) -----------------------

def _regen_rows(params, sep, j, step_cap):
    starts = [(0,) * params.d] if sep is None else [(0,) * params.d, (sep,) + (0,) * (params.d - 1)]
    try:
        recs, ok = run_until_regenerations(params, starts, j, step_cap), True
    except BudgetExhaustedError as exc:
        recs, ok = exc.partial, False
    return [(r.j, r.tau_steps, r.T_time, r.width) for r in recs], ok


def _domination_row(params, steps, l0):
    run = coupled_domination_run(params, [(0,) * params.d, (1,) + (0,) * (params.d - 1)], steps, l0)
    return run.violations, run.tau, run.tau_M, int(run.L.max()), int(run.M.max())


def _census_row(params, extent, horizon, box_dims, n_checkpoints):
    c = A.forest_census(params, None, extent, horizon, n_checkpoints, box_dims)
    return c.checkpoints.tolist(), c.components.tolist()


def _martingale_row(params, sep, j):
    return A._regen_first_coords(params, sep, j).tolist()


# -- subcommands -------------------------------------------------------------

def cmd_path(args, params, out: Outputs):
    rec = iterate_path(params, tuple(args.start) if args.start else (0,) * params.d, args.steps)
    radii = [0] + rec.step_radii
    rows = [(i,) + tuple(v) + (r,) for i, (v, r) in enumerate(zip(rec.steps, radii))]
    out.csv("path.csv", ["step"] + [f"x{i + 1}" for i in range(params.d)] + ["radius"], rows)
    out.json("summary.json", {"steps": args.steps, "end": rec.end})


def cmd_regen(args, params, out: Outputs):
    res = A.run_replicas(_regen_rows, params, args.replicas, args.workers, sep=args.sep, j=args.j,
                         step_cap=args.step_cap)
    rows = [(r,) + row for r, (recs, _) in enumerate(res) for row in recs]
    out.csv("regen.csv", ["replica", "j", "tau_steps", "T_time", "width"], rows)
    tau = np.array([row[2] for row in rows], dtype=float)
    incomplete = [r for r, (_, ok) in enumerate(res) if not ok]
    summary = {"records": len(rows), "incomplete_replicas": incomplete}
    if tau.size:
        summary.update(mean_tau=float(tau.mean()),
                       mean_T=float(np.mean([row[3] for row in rows])))
    out.json("summary.json", summary)
    if incomplete:
        raise BudgetExhaustedError(f"step cap hit in {len(incomplete)} replicas", rows)


def cmd_coalesce(args, params, out: Outputs):
    samples = A.coalescence_experiment(params, args.sep, args.replicas, args.cap, workers=args.workers)
    out.csv("coalesce.csv", ["replica", "T_nu", "nu", "censored"],
            [(r, s.T_nu, s.nu, int(s.censored)) for r, s in enumerate(samples)])
    T = np.array([s.T_nu for s in samples])
    cens = np.array([s.censored for s in samples])
    summary = {"replicas": len(samples), "censored_fraction": float(cens.mean())}
    if args.fit_min and args.fit_max:
        try:
            fit = A.power_tail_fit(T, args.fit_min, args.fit_max, censored=cens)
            summary["power_fit"] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}
        except DrainageError as exc:
            summary["power_fit"] = {"error": str(exc)}
    out.json("summary.json", summary)


def cmd_census(args, params, out: Outputs):
    res = A.run_replicas(_census_row, params, args.replicas, args.workers, extent=args.extent,
                         horizon=args.horizon, box_dims=args.box_dims, n_checkpoints=args.checkpoints)
    rows = [(r, lev, c) for r, (levs, comps) in enumerate(res) for lev, c in zip(levs, comps)]
    out.csv("census.csv", ["replica", "level", "components"], rows)
    finals = [comps[-1] for _, comps in res]
    bad = [r for r, (_, comps) in enumerate(res) if any(b > a for a, b in zip(comps, comps[1:]))]
    out.json("summary.json", {"replicas": args.replicas, "final_components": finals,
                              "single_component": sum(f == 1 for f in finals),
                              "multiple_components": sum(f > 1 for f in finals)})
    if bad:
        raise InvariantViolation(f"component count increased in replicas {bad}")


def cmd_martingale(args, params, out: Outputs):
    sep = None if args.sep is None else args.sep
    inc = np.array(A.run_replicas(_martingale_row, params, args.replicas, args.workers, sep=sep, j=args.j))
    out.csv("martingale.csv", ["replica", "j", "increment"],
            [(r, j + 1, int(inc[r, j])) for r in range(inc.shape[0]) for j in range(inc.shape[1])])
    means = inc.mean(axis=0)
    ses = inc.std(axis=0, ddof=1) / np.sqrt(inc.shape[0])
    out.json("summary.json", {"j": list(range(1, args.j + 1)), "mean": means, "se": ses,
                              "within_3se": np.abs(means) < 3 * ses})


def cmd_lyapunov(args, params, out: Outputs):
    rows = A.lyapunov_increments(params, args.x, args.replicas, args.workers)
    res = A.lyapunov_summary(rows, args.level, not args.raw)
    out.csv("lyapunov.csv", ["replica", "increment", "dz1", "dz2"],
            [(r, float(v[0]), int(v[1]), int(v[2])) for r, v in enumerate(rows)])
    out.json("summary.json", res._asdict())


def cmd_domination(args, params, out: Outputs):
    l0 = args.l0 if args.l0 is not None else minimal_l0(params.p)
    rows = A.run_replicas(_domination_row, params, args.replicas, args.workers, steps=args.steps, l0=l0)
    out.csv("domination.csv", ["replica", "violations", "tau", "tau_M", "max_L", "max_M"],
            [(r,) + tuple(v) for r, v in enumerate(rows)])
    violations = sum(v[0] for v in rows)
    out.json("summary.json", {"l0": l0, "replicas": args.replicas, "steps": args.steps,
                              "violations": violations})
    if violations:
        raise InvariantViolation(f"L exceeded M {violations} times")


def cmd_scaling(args, params, out: Outputs):
    dT, dX = S.regeneration_increments(params, args.replicas, args.j)
    out.csv("increments.csv", ["replica", "j", "dT", "dX"],
            [(r, j + 1, int(dT[r, j]), int(dX[r, j])) for r in range(dT.shape[0]) for j in range(dT.shape[1])])
    c = S.estimate_constants(params, args.replicas, args.j)
    out.json("summary.json", c.__dict__)


def _constants(args, params):
    if args.gamma0 and args.sigma0:
        return S.ScalingConstants(args.gamma0, args.sigma0, params.p, params.d)
    return S.estimate_constants(params.with_seed(params.seed ^ 0x5CA1E), args.const_replicas, 100)


def cmd_web_b1(args, params, out: Outputs):
    c = _constants(args, params)
    tab = S.b1_diagnostic(params, args.n, args.t, args.eps, args.replicas, c, tuple(args.grid), args.workers)
    na, nt = tab.grid_shape
    rows = []
    for i in range(nt):
        for j in range(na):
            for k, e in enumerate(tab.epsilons):
                rows.append((float(e), j / na, i / nt, float(tab.probs[i, j, k])))
    out.csv("b1.csv", ["eps", "a", "t0", "prob"], rows)
    out.json("summary.json", {"gamma0": c.gamma0, "sigma0": c.sigma0, "eps": tab.epsilons,
                              "grid_sup": tab.grid_sup, "se": tab.se, "argmax": tab.argmax,
                              "grid": list(tab.grid_shape), "note": "sup over a finite (a, t0) grid"})


def cmd_web_e1(args, params, out: Outputs):
    c = _constants(args, params)
    res = S.e1_diagnostic(params, args.n, c, args.t, args.a, args.b, args.replicas, args.t0,
                          workers=args.workers)
    out.csv("e1.csv", ["replica", "eta_hat"], [(r, int(v)) for r, v in enumerate(res.counts)])
    out.json("summary.json", {"gamma0": c.gamma0, "sigma0": c.sigma0, "mean": res.mean, "se": res.se,
                              "target": res.target, "snapped_levels": list(res.levels)})


def cmd_density(args, params, out: Outputs):
    dens = A.point_density_curve(params, args.L, args.t)
    out.csv("density.csv", ["t", "density"], [(int(t), float(v)) for t, v in zip(args.t, dens)])
    out.json("summary.json", {"L": args.L, "t": args.t, "density": dens,
                              "density_sqrt_t": dens * np.sqrt(np.asarray(args.t, dtype=float))})


COMMANDS = {
    "path": cmd_path, "regen": cmd_regen, "coalesce": cmd_coalesce, "census": cmd_census,
    "martingale": cmd_martingale, "lyapunov": cmd_lyapunov, "domination": cmd_domination,
    "scaling": cmd_scaling, "web-b1": cmd_web_b1, "web-e1": cmd_web_e1, "density": cmd_density,
}


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--d", type=int, default=2, help="lattice dimension (default 2)")
    common.add_argument("--p", type=float, default=0.5, help="open probability (default 0.5)")
    common.add_argument("--seed", type=int, default=0, help="environment seed (default 0)")
    common.add_argument("--out", type=Path, default=None, help="output directory (default runs/<command>)")
    common.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default ${WORKERS_ENV} or 1)")

    parser = argparse.ArgumentParser(prog="drainage", description="Drainage network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("path", parents=[common], help="iterate a single path")
    p.add_argument("--start", type=int, nargs="+")
    p.add_argument("--steps", type=int, default=100)

    p = sub.add_parser("regen", parents=[common], help="regeneration records")
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--j", type=int, default=10, help="regenerations per replica")
    p.add_argument("--sep", type=int, default=None, help="second walker at this separation")
    p.add_argument("--step-cap", type=int, default=10**6)

    p = sub.add_parser("coalesce", parents=[common], help="coalescence times of a pair")
    p.add_argument("--sep", type=int, default=1)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--cap", type=int, default=10**5, help="level cap (censoring)")
    p.add_argument("--fit-min", type=float, default=100.0)
    p.add_argument("--fit-max", type=float, default=1e4)

    p = sub.add_parser("census", parents=[common], help="forest component census")
    p.add_argument("--replicas", type=int, default=10)
    p.add_argument("--extent", type=int, default=40)
    p.add_argument("--horizon", type=int, default=10**5)
    p.add_argument("--box-dims", type=int, default=1)
    p.add_argument("--checkpoints", type=int, default=11)

    p = sub.add_parser("martingale", parents=[common], help="regeneration increments of the first walker")
    p.add_argument("--sep", type=int, default=None, help="omit for a single walker")
    p.add_argument("--j", type=int, default=5)
    p.add_argument("--replicas", type=int, default=1000)

    p = sub.add_parser("lyapunov", parents=[common], help="Lyapunov drift of the difference walk (d=3)")
    p.add_argument("--x", type=int, nargs=2, default=[80, 0])
    p.add_argument("--replicas", type=int, default=10**4)
    p.add_argument("--level", type=float, default=0.99)
    p.add_argument("--raw", action="store_true", help="plain mean without the control variate")

    p = sub.add_parser("domination", parents=[common], help="L <= M coupling check")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--l0", type=int, default=None, help="default: minimal l0 for p")

    p = sub.add_parser("scaling", parents=[common], help="estimate gamma0 and sigma0")
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--j", type=int, default=100)

    for name, helptext in (("web-b1", "B1 counting diagnostic"), ("web-e1", "E1 counting diagnostic")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--n", type=int, default=100)
        p.add_argument("--t", type=float, default=1.0)
        p.add_argument("--replicas", type=int, default=100)
        p.add_argument("--gamma0", type=float, default=None)
        p.add_argument("--sigma0", type=float, default=None)
        p.add_argument("--const-replicas", type=int, default=200)
        if name == "web-b1":
            p.add_argument("--eps", type=float, nargs="+", default=[0.05, 0.2, 0.8])
            p.add_argument("--grid", type=int, nargs=2, default=[20, 20], metavar=("NA", "NT0"))
        else:
            p.add_argument("--a", type=float, default=0.0)
            p.add_argument("--b", type=float, default=1.0)
            p.add_argument("--t0", type=float, default=0.0)

    p = sub.add_parser("density", parents=[common], help="point density of the forest")
    p.add_argument("--L", type=int, default=5000)
    p.add_argument("--t", type=int, nargs="+", default=[100, 1000, 10000])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers is None:
        args.workers = _default_workers()
    out = Outputs(args.out if args.out is not None else Path("runs") / args.command)
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    try:
        params = FieldParams(args.d, args.p, args.seed)
        COMMANDS[args.command](args, params, out)
    except InvalidArgumentError as exc:
        print(f"drainage: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExhaustedError as exc:
        print(f"drainage: budget exhausted: {exc}", file=sys.stderr)
        out.manifest(config, "budget_exhausted")
        return EXIT_BUDGET
    except InvariantViolation as exc:
        print(f"drainage: invariant violated: {exc}", file=sys.stderr)
        out.manifest(config, "invariant_violation")
        return EXIT_INVARIANT
    except DrainageError as exc:
        print(f"drainage: {exc}", file=sys.stderr)
        out.manifest(config, "error")
        return EXIT_INVARIANT
    out.manifest(config, "ok")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
