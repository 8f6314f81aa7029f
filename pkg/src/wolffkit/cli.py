"""Command-line front end for reproducible experiments.

Subcommands: wolff, solve, capacity, verify, check-good.  Every run writes a
manifest JSON (content hashes of all inputs, output paths, seed, wall time)
before exiting, including on failure paths; identical inputs and seed
reproduce bit-identical outputs.

Exit codes: 0 success/pass, 1 solver non-convergence or criterion fail,
2 invalid parameters or missing files, 3 inconclusive.

Infinity is spelled "inf" in flags; JSON reports encode it as null with an
"infinite": true companion key.  WOLFFKIT_THREADS bounds internal BLAS
parallelism (applied via threadpoolctl when available) and is recorded in
the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .absorption import AbsorptionSpec
from .capacity import (
    CapacityProblem,
    CriterionReport,
    OptimizerSettings,
    capacity_estimate,
    capacity_probe_atoms,
    cells_in_box,
    exp_threshold,
    power_capacity_indices,
    subcritical_integral,
    tail_integral_q,
)
from .grids import Domain, ParameterError, save_field_csv
from .lorentz import LorentzParams
from .measures import Measure, load_measure
from .pde import SolveConfig, pointwise_bound_check, solve_measure
from .potential import PotentialParams, eta_maximal_field, wolff_field
from .verify import (
    FitReport,
    exp_delta0,
    random_atomic_measures,
    verify_exp_integrability,
    verify_levelset_decay,
    verify_norm_equivalence,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARAMS = 2
EXIT_INCONCLUSIVE = 3


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class RunManifest:
    """Input hashes, outputs, seed, and wall time of one command run."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.data = {
            "schema": "wolffkit/1",
            "command": command,
            "argv": sys.argv[1:],
            "config": getattr(args, "config", None),
            "inputs": {},
            "outputs": [],
            "seed": getattr(args, "seed", None),
            "threads": os.environ.get("WOLFFKIT_THREADS"),
            "wall_time_s": None,
        }
        self._t0 = time.perf_counter()

    def add_input(self, path) -> None:
        p = Path(path)
        self.data["inputs"][str(p)] = _sha256(p)

    def add_output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def note(self, key, value) -> None:
        self.data[key] = value

    def write(self, out_path) -> None:
        self.data["wall_time_s"] = time.perf_counter() - self._t0
        Path(out_path).write_text(json.dumps(self.data, indent=2, sort_keys=True))


def _enc_inf(x):
    if x is None:
        return None
    if isinstance(x, float) and math.isinf(x):
        return {"infinite": True, "value": None}
    return x


def _parse_R(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    val = float(text)
    if val <= 0:
        raise ParameterError("R must be positive or 'inf'")
    return val


def _load_domain(path: str) -> Domain:
    return Domain.from_json(json.loads(Path(path).read_text()))


def _absorption_from_json(obj: dict) -> AbsorptionSpec:
    kind = obj.get("kind", "none")
    return AbsorptionSpec(
        kind=kind,
        q=float(obj.get("q", 0.0) or 0.0),
        beta=float(obj.get("beta", 0.0) or 0.0),
        tau=float(obj.get("tau", 0.0) or 0.0),
        lam=float(obj.get("lambda", obj.get("lam", 1.0)) or 1.0),
    )


def _limit_threads():
    n = os.environ.get("WOLFFKIT_THREADS")
    if not n:
        return None
    try:
        import threadpoolctl

        return threadpoolctl.threadpool_limits(limits=int(n))
    except Exception:
        return None


def cmd_wolff(args) -> int:
    manifest = RunManifest("wolff", args)
    manifest_path = args.out + ".manifest.json"
    try:
        try:
            mu = load_measure(args.measure)
            manifest.add_input(args.measure)
            grid = _load_domain(args.grid)
            manifest.add_input(args.grid)
            R = _parse_R(args.R)
            pp = PotentialParams(N=grid.dim, alpha=args.alpha, p=args.p, R=R)
        except FileNotFoundError as exc:
            print(f"error: missing input file: {exc}", file=sys.stderr)
            return EXIT_PARAMS
        except (ParameterError, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARAMS
        manifest.note("R", _enc_inf(R))
        field = wolff_field(mu, pp, grid)
        save_field_csv(args.out, field)
        manifest.add_output(args.out)
        return EXIT_OK
    finally:
        manifest.write(manifest_path)


def cmd_solve(args) -> int:
    manifest = RunManifest("solve", args)
    out_prefix = Path(args.out_prefix)
    manifest_path = str(out_prefix) + ".manifest.json"
    try:
        try:
            cfg_obj = json.loads(Path(args.config).read_text())
            manifest.add_input(args.config)
            mu = load_measure(args.measure)
            manifest.add_input(args.measure)
            dom = Domain.from_json(cfg_obj["domain"])
            g = _absorption_from_json(cfg_obj.get("absorption", {"kind": "none"}))
            keys = (
                "mask_ball_radius", "ladder_levels", "bandwidth0", "truncation0",
                "inset0", "max_newton", "grad_tol", "stable_tol",
                "divergence_growth_tol", "companion_bounds",
            )
            kw = {k: cfg_obj[k] for k in keys if k in cfg_obj}
            cfg = SolveConfig(p=float(cfg_obj["p"]), domain=dom, seed=args.seed, **kw)
        except FileNotFoundError as exc:
            print(f"error: missing input file: {exc}", file=sys.stderr)
            return EXIT_PARAMS
        except (ParameterError, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARAMS

        out_prefix.parent.mkdir(parents=True, exist_ok=True)
        bundle = solve_measure(mu, g, cfg)
        save_field_csv(str(out_prefix) + ".u.csv", bundle.u)
        manifest.add_output(str(out_prefix) + ".u.csv")
        save_field_csv(str(out_prefix) + ".absorption.csv", bundle.absorption)
        manifest.add_output(str(out_prefix) + ".absorption.csv")
        report = {
            "schema": "wolffkit/1",
            "converged": bundle.converged,
            "message": bundle.message,
            "levels": bundle.levels,
            "residual": bundle.residual,
            "absorption_l1": bundle.absorption.abs_integral(),
        }
        report_path = str(out_prefix) + ".report.json"
        Path(report_path).write_text(json.dumps(report, indent=2, sort_keys=True))
        manifest.add_output(report_path)
        if not bundle.converged:
            print(f"solver did not converge: {bundle.message} (diagnostics: {report_path})",
                  file=sys.stderr)
            return EXIT_FAIL
        return EXIT_OK
    finally:
        manifest.write(manifest_path)


def cmd_capacity(args) -> int:
    manifest = RunManifest("capacity", args)
    manifest_path = args.out + ".manifest.json"
    try:
        try:
            grid = _load_domain(args.grid)
            manifest.add_input(args.grid)
            lo = [float(v) for v in args.target_lo.split(",")]
            hi = [float(v) for v in args.target_hi.split(",")]
            cells = cells_in_box(grid, lo, hi)
            lp = LorentzParams(args.s, args.q)
            settings = OptimizerSettings(max_iter=args.max_iter, seed=args.seed)
            prob = CapacityProblem(grid, cells, args.alpha, lp, settings)
        except FileNotFoundError as exc:
            print(f"error: missing input file: {exc}", file=sys.stderr)
            return EXIT_PARAMS
        except (ParameterError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARAMS
        est = capacity_estimate(prob)
        Path(args.out).write_text(json.dumps(est.to_json(), indent=2, sort_keys=True))
        manifest.add_output(args.out)
        if args.trace:
            np.savetxt(args.trace, est.trace, delimiter=",",
                       header="iteration,objective,feasibility_margin", comments="")
            manifest.add_output(args.trace)
        return EXIT_OK if not est.inconclusive else EXIT_INCONCLUSIVE
    finally:
        manifest.write(manifest_path)


def cmd_verify(args) -> int:
    manifest = RunManifest("verify", args)
    manifest_path = args.out + ".manifest.json"
    try:
        grid = Domain((-2.0,) * 3, (2.0,) * 3, (args.res,) * 3)
        pp = PotentialParams(N=3, alpha=1.0, p=args.p, R=_parse_R(args.R))
        if args.experiment == "norm-equivalence":
            mus = random_atomic_measures(args.count, grid, ball_radius=1.0, seed=args.seed)
            rep = verify_norm_equivalence(mus, pp, args.q, args.s, grid)
        elif args.experiment == "levelset":
            mu = Measure(grid, np.array([[0.0, 0.0, 0.0]]), np.array([1.0]))
            lambdas = [float(v) for v in args.lambdas.split(",")]
            eps = [float(v) for v in args.eps.split(",")]
            rep = verify_levelset_decay(mu, pp, lambdas, eps, grid, support_radius=0.5)
        elif args.experiment == "exp-integrability":
            ppe = pp.with_(eta=args.eta)
            mu = Measure(grid, np.array([[0.1, 0.05, 0.0]]), np.array([1.0]))
            d0 = exp_delta0(ppe)
            deltas = [f * d0 for f in (0.25, 0.5, 0.75, 0.9)]
            rep = verify_exp_integrability(mu, ppe, (0.0, 0.0, 0.0), 0.4, deltas, grid)
        else:
            print(f"error: unknown experiment {args.experiment}", file=sys.stderr)
            return EXIT_PARAMS
        Path(args.out).write_text(rep.dumps())
        manifest.add_output(args.out)
        if args.csv and rep.table:
            keys = sorted(rep.table[0])
            rows = [[row.get(k) if row.get(k) is not None else math.nan for k in keys] for row in rep.table]
            np.savetxt(args.csv, np.asarray(rows, dtype=float), delimiter=",",
                       header=",".join(keys), comments="")
            manifest.add_output(args.csv)
        return EXIT_OK if rep.passed else EXIT_FAIL
    finally:
        manifest.write(manifest_path)


def cmd_check_good(args) -> int:
    manifest = RunManifest("check-good", args)
    manifest_path = args.out + ".manifest.json"
    try:
        try:
            mu = load_measure(args.measure)
            manifest.add_input(args.measure)
            g = _absorption_from_json(json.loads(args.absorption))
            if g.kind not in ("power", "exponential"):
                raise ParameterError("check-good needs a power or exponential absorption")
            p = args.p
            dom = mu.domain
            if not (1.0 < p < dom.dim):
                raise ParameterError("need 1 < p < N")
        except FileNotFoundError as exc:
            print(f"error: missing input file: {exc}", file=sys.stderr)
            return EXIT_PARAMS
        except (ParameterError, ValueError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARAMS

        reports = []
        diam = dom.diameter()
        if g.kind == "exponential":
            eta = (p - 1.0) * (g.lam - 1.0) / g.lam
            pp = PotentialParams(N=dom.dim, alpha=1.0, p=p, R=2.0 * diam, eta=eta)
            measured = float(np.max(eta_maximal_field(mu, pp, dom).flat()))
            threshold = exp_threshold(dom.dim, p, g.tau, g.lam, args.cvalue)
            verdict = "pass" if measured < threshold else "fail"
            reports.append(CriterionReport(
                name="exponential-smallness",
                inputs={"p": p, "tau": g.tau, "lambda": g.lam, "c": args.cvalue,
                        "eta": eta, "R": 2.0 * diam, "mass": mu.mass()},
                threshold=threshold, measured=measured, verdict=verdict,
            ))
        else:
            alpha_c, s_c, q_c = power_capacity_indices(dom.dim, p, g.q, g.beta)
            sub = subcritical_integral(g, dom.dim)
            tail = tail_integral_q(g, g.q)
            reports.append(CriterionReport(
                name="power-capacity-indices",
                inputs={"p": p, "q": g.q, "beta": g.beta,
                        "capacity": {"alpha": alpha_c, "s": s_c, "q": q_c},
                        "subcritical_integral": {"finite": sub.finite, "value": sub.value},
                        "tail_integral": {"finite": tail.finite, "value": tail.value}},
                threshold=None, measured=None,
                verdict="pass" if sub.finite else "inconclusive",
            ))
            if args.probe_capacity and len(mu.atoms_x):
                probe = capacity_probe_atoms(
                    mu, alpha_c, LorentzParams(s_c, max(q_c, 1.0)), dom,
                    [0.5, 0.25, 0.125], OptimizerSettings(max_iter=args.max_iter, seed=args.seed))
                manifest.note("capacity_probe", probe)

        cfg = SolveConfig(p=p, domain=dom, ladder_levels=args.ladder_levels,
                          bandwidth0=args.bandwidth0, seed=args.seed)
        bundle = solve_measure(mu, g, cfg)
        solve_report = {
            "converged": bundle.converged,
            "message": bundle.message,
            "levels": bundle.levels,
            "absorption_l1": bundle.absorption.abs_integral(),
        }
        if args.pointwise_check:
            pp_w = PotentialParams(N=dom.dim, alpha=1.0, p=p, R=2.0 * diam)
            fit = pointwise_bound_check(bundle, mu, pp_w)
            solve_report["pointwise_bound"] = fit.to_json()

        criterion_failed = any(r.verdict == "fail" for r in reports)
        out = {
            "schema": "wolffkit/1",
            "criteria": [r.to_json() for r in reports],
            "solve": solve_report,
        }
        Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True))
        manifest.add_output(args.out)

        # pass needs a converged ladder and no failed criterion; a diverging
        # ladder is a fail; everything else cannot be decided at this grid
        if "diverging" in bundle.message:
            return EXIT_FAIL
        if bundle.converged and not criterion_failed:
            return EXIT_OK
        return EXIT_INCONCLUSIVE
    finally:
        manifest.write(manifest_path)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wolffkit",
                                 description="nonlinear potential theory toolkit on box grids")
    sub = ap.add_subparsers(dest="command", required=True)

    w = sub.add_parser("wolff", help="evaluate a truncated Wolff potential on a grid")
    w.add_argument("--measure", required=True)
    w.add_argument("--alpha", type=float, required=True)
    w.add_argument("--p", type=float, required=True)
    w.add_argument("--R", default="inf")
    w.add_argument("--grid", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--seed", type=int, default=0)
    w.set_defaults(fn=cmd_wolff)

    s = sub.add_parser("solve", help="approximation-ladder solve with measure data")
    s.add_argument("--measure", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out-prefix", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_solve)

    c = sub.add_parser("capacity", help="estimate the capacity of a grid box set")
    c.add_argument("--grid", required=True)
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--s", type=float, required=True)
    c.add_argument("--q", type=float, required=True)
    c.add_argument("--target-lo", required=True)
    c.add_argument("--target-hi", required=True)
    c.add_argument("--max-iter", type=int, default=3000)
    c.add_argument("--out", required=True)
    c.add_argument("--trace", default=None)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_capacity)

    v = sub.add_parser("verify", help="run a verification experiment suite")
    v.add_argument("experiment", choices=["norm-equivalence", "levelset", "exp-integrability"])
    v.add_argument("--res", type=int, default=48)
    v.add_argument("--p", type=float, default=2.0)
    v.add_argument("--R", default="1.0")
    v.add_argument("--q", type=float, default=2.0)
    v.add_argument("--s", type=float, default=2.0)
    v.add_argument("--eta", type=float, default=0.0)
    v.add_argument("--count", type=int, default=50)
    v.add_argument("--lambdas", default="2.5,4.0")
    v.add_argument("--eps", default="0.4,0.2,0.1")
    v.add_argument("--out", required=True)
    v.add_argument("--csv", default=None)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(fn=cmd_verify)

    g = sub.add_parser("check-good", help="good-measure criteria plus ladder solve")
    g.add_argument("--measure", required=True)
    g.add_argument("--absorption", required=True, help='JSON, e.g. {"kind":"power","q":1.5}')
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--cvalue", type=float, default=0.08,
                   help="pointwise-bound constant used by the exponential threshold")
    g.add_argument("--ladder-levels", type=int, default=4)
    g.add_argument("--bandwidth0", type=float, default=0.4)
    g.add_argument("--max-iter", type=int, default=1500)
    g.add_argument("--probe-capacity", action="store_true")
    g.add_argument("--pointwise-check", action="store_true")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_check_good)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads()  # process-lifetime cap; nothing to restore in a CLI
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
