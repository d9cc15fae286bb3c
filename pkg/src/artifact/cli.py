"""Command line entry point.

Every subcommand accepts ``--config FILE`` (a JSON object whose keys are the
long option names, with dashes or underscores) and ``--out FILE`` for the run
record.  Command line flags win over the config file; ``ARTIFACT_SEED``
overrides any seed.  Exit status: 0 success, 1 failed check, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ArtifactError, ConfigError

log = logging.getLogger("artifact")

RECORD_FORMAT = "run-record/1"
CSV_SCHEMA = "artifact-csv/1"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# records


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def config_hash(cfg: dict) -> str:
    blob = json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_record(experiment: str, cfg: dict, results: dict, checks: dict | None = None, seeds=()) -> dict:
    return {
        "format": RECORD_FORMAT,
        "experiment": experiment,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": _jsonable(cfg),
        "config_hash": config_hash(cfg),
        "code_version": __version__,
        "seeds": list(seeds),
        "results": _jsonable(results),
        "checks": _jsonable(checks or {}),
    }


def _emit(record: dict, out: str | None) -> None:
    text = json.dumps(record, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _status(record: dict) -> int:
    return 0 if all(c.get("passed", True) for c in record["checks"].values()) else 1


# ---------------------------------------------------------------------------
# config handling


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: top level must be a JSON object")
    return cfg


def _merge_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv: list) -> argparse.Namespace:
    """Fill options from ``--config`` unless given on the command line."""
    if getattr(args, "config", None):
        cfg = _load_config(args.config)
        given = {a.split("=")[0] for a in argv if a.startswith("--")}
        for key, val in cfg.items():
            dest = key.replace("-", "_")
            if not hasattr(args, dest) or dest in ("func", "config", "cmd", "sub"):
                raise UsageError(f"{args.config}: unknown field {key!r}")
            if f"--{dest.replace('_', '-')}" in given:
                continue
            setattr(args, dest, val)
    env = os.environ.get("ARTIFACT_SEED")
    if env is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env)
        except ValueError as e:
            raise UsageError(f"ARTIFACT_SEED must be an integer, got {env!r}") from e
    return args


def _cfg(args, *keys) -> dict:
    return {k: getattr(args, k) for k in keys}


def _pair(v) -> tuple:
    if isinstance(v, str):
        v = [int(t) for t in v.replace(",", " ").split()]
    v = tuple(int(t) for t in v)
    if len(v) != 2:
        raise UsageError(f"expected a pair of integers, got {v}")
    return v


def _floats(v) -> list:
    if isinstance(v, str):
        return [float(t) for t in v.replace(",", " ").split()]
    return [float(t) for t in np.atleast_1d(v)]


# ---------------------------------------------------------------------------
# frd


def cmd_frd_build(args):
    from .frd import build_frd

    st = build_frd(int(args.L), int(args.N), s=float(args.s), m2=float(args.m2), gamma=float(args.gamma),
                   delta=float(args.delta))
    st.save(args.stack)
    cfg = _cfg(args, "L", "N", "s", "m2", "gamma", "delta")
    return make_record("frd.build", cfg, {"stack": args.stack, "work_side": st.work_side,
                                          "diagonal": st.diagonal(), "t_N": st.t_N})


def cmd_frd_verify(args):
    from .frd import FrdStack, verify_frd

    st = FrdStack.load(args.stack)
    rep = verify_frd(st, seed=int(args.seed))
    cfg = {"stack": args.stack, "L": st.L, "N": st.N, "s": st.s, "m2": st.m2, "gamma": st.gamma, "seed": args.seed}
    return make_record("frd.verify", cfg, rep.to_dict(), {k: {"passed": v["passed"]} for k, v in rep.checks.items()},
                       [args.seed])


# ---------------------------------------------------------------------------
# flow


def _flow_spec(args, nonlinearity=None):
    from .flow import FlowSpec, trivial_nonlinearity

    return FlowSpec(L=int(args.L), beta=float(args.beta), gamma=float(args.gamma), J=int(args.J),
                    q_max=len(_floats(args.z0)), charge_power=float(args.charge_power),
                    nonlinearity=nonlinearity or trivial_nonlinearity)


def cmd_flow_run(args):
    from .flow import CouplingState, run_flow, toy_quadratic, write_trajectory_csv

    nl = toy_quadratic(float(args.toy_c)) if args.toy_c else None
    spec = _flow_spec(args, nl)
    res = run_flow(CouplingState(0, float(args.s0), _floats(args.z0)), spec, A=float(args.A))
    cfg = _cfg(args, "L", "beta", "gamma", "J", "z0", "s0", "A", "toy_c", "charge_power")
    if args.csv:
        write_trajectory_csv(res, args.csv, f"{CSV_SCHEMA} config_hash={config_hash(cfg)}")
    return make_record("flow.run", cfg, {"alpha_hat": res.alpha_hat, "diverged": res.diverged,
                                         "norms": res.norms, "s_final": res.trajectory[-1].s})


def cmd_flow_shoot(args):
    from .flow import stable_manifold_shoot, toy_critical_stiffness, toy_quadratic

    spec = _flow_spec(args, toy_quadratic(float(args.toy_c)))
    z0 = _floats(args.z0)
    s0 = stable_manifold_shoot(spec, z0, bracket=_floats(args.bracket), target=float(args.target))
    exact = toy_critical_stiffness(z0, spec, float(args.toy_c), float(args.target))
    cfg = _cfg(args, "L", "beta", "gamma", "J", "z0", "toy_c", "bracket", "target", "charge_power")
    return make_record("flow.shoot", cfg, {"s0": s0, "closed_form": exact},
                       {"closed_form": {"passed": abs(s0 - exact) <= 1e-10, "error": abs(s0 - exact)}})


# ---------------------------------------------------------------------------
# spectral


def cmd_spectral_two_point(args):
    from .spectral import infinite_volume_two_point, torus_two_point

    y = _pair(args.y)
    if args.side:
        val = torus_two_point(y, float(args.s), float(args.gamma), int(args.side))
    else:
        val = infinite_volume_two_point(y, float(args.s), float(args.gamma))
    cfg = _cfg(args, "y", "s", "gamma", "side")
    return make_record("spectral.two-point", cfg, {"value": val})


def cmd_spectral_green_fit(args):
    from .spectral import green_asymptotics_fit

    fit = green_asymptotics_fit(int(args.side))
    rel = abs(fit.slope * math.pi - 1.0)
    cfg = _cfg(args, "side")
    return make_record("spectral.green-fit", cfg,
                       {"slope": fit.slope, "const": fit.const, "y": fit.y, "values": fit.values},
                       {"slope_1_over_pi": {"passed": rel <= 0.01, "rel_error": rel}})


# ---------------------------------------------------------------------------
# montecarlo


def _mc_config(args):
    from .montecarlo import McConfig

    ys = args.y if args.y else [[1, 0], [2, 0], [3, 0], [4, 0]]
    return McConfig(beta=float(args.beta), m2=float(args.m2), side=int(args.side), n_burn=int(args.burn),
                    n_sweeps=int(args.sweeps), measure_every=int(args.measure_every), update=args.update,
                    window=int(args.window), seed=int(args.seed), y_list=[_pair(y) for y in ys],
                    etas=_floats(args.eta), zs=_floats(args.z) if args.z else [], gauge=args.gauge)


def cmd_mc_run(args):
    from dataclasses import asdict

    from .montecarlo import mcmc_run

    cfg = _mc_config(args)
    r = mcmc_run(cfg)
    res = {
        "y": r.y_list, "r": np.hypot(r.y_list[:, 0], r.y_list[:, 1]),
        "variance": [e.to_dict() for e in r.variance()],
        "cosine": {str(eta): [e.to_dict() for e in r.cosine(k)] for k, eta in enumerate(cfg.etas)},
        "mgf": {str(z): [e.to_dict() for e in r.mgf(k)] for k, z in enumerate(cfg.zs)},
        "acceptance": r.acceptance, "seconds": r.seconds,
    }
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            fh.write(f"# {CSV_SCHEMA} config_hash={config_hash(asdict(cfg))}\n")
            w.writerow(["y1", "y2", "var", "var_err", "tau_int"])
            for y, e in zip(r.y_list, r.variance()):
                w.writerow([int(y[0]), int(y[1]), repr(e.mean), repr(e.stderr), repr(e.tau_int)])
    return make_record("mc.run", asdict(cfg), res, seeds=[cfg.seed])


def cmd_mc_enumerate(args):
    from .montecarlo import exact_enumerate

    ys = [_pair(y) for y in (args.y or [[1, 0], [1, 1]])]
    zs = _floats(args.z)
    ex = exact_enumerate(float(args.beta), float(args.m2), int(args.nmax),
                         side=None if args.chain else int(args.torus), chain=int(args.chain) if args.chain else None,
                         y_list=ys, zs=zs, etas=_floats(args.eta))
    res = {
        "log_Z": ex.log_Z, "tail": ex.tail, "n_states": ex.n_states,
        "var": [{"y": list(k), "value": v} for k, v in ex.var.items()],
        "mgf": [{"z": k[0], "y": None if k[1] is None else list(k[1]), "value": v} for k, v in ex.mgf.items()],
        "cos": [{"eta": k[0], "y": list(k[1]), "value": v} for k, v in ex.cos.items()],
    }
    cfg = _cfg(args, "torus", "chain", "beta", "m2", "nmax", "y", "z", "eta")
    cfg["y"] = ys
    return make_record("mc.enumerate", cfg, res, {"tail_below_1e-10": {"passed": ex.tail < 1e-10, "tail": ex.tail}})


def cmd_mc_fit(args):
    from .montecarlo import cosine_correlation, estimate_variance_and_stiffness

    rec = json.loads(Path(args.input).read_text())
    if rec.get("experiment") != "mc.run":
        raise UsageError(f"{args.input} is not an mc.run record")
    res, cfg = rec["results"], rec["config"]
    r = np.asarray(res["r"], dtype=float)
    v = np.array([e["mean"] for e in res["variance"]])
    ve = np.array([e["stderr"] for e in res["variance"]])
    fit = estimate_variance_and_stiffness(r, v, ve, cfg["beta"], cfg["side"])
    out = {"variance_fit": fit.__dict__, "cosine_fits": {}}
    for eta, ests in res["cosine"].items():
        c = np.array([e["mean"] for e in ests])
        ce = np.array([e["stderr"] for e in ests])
        cf = cosine_correlation(r, c, ce, float(eta))
        pred = float(eta) ** 2 / (2 * math.pi * (1 + fit.s_hat))
        out["cosine_fits"][eta] = {**cf.__dict__, "predicted": pred}
    return make_record("mc.fit", {"input": args.input, "input_hash": rec.get("config_hash")}, out,
                       seeds=rec.get("seeds", []))


# ---------------------------------------------------------------------------
# regularize, geometry


def cmd_regularize_comb(args):
    from .regularize import comb_coeffs_quadrature, default_q_max, smoothed_comb_potential

    beta, gamma = float(args.beta), float(args.gamma)
    q = int(args.q_max) if args.q_max else default_q_max(beta, gamma)
    pot = smoothed_comb_potential(beta, gamma, q_max=q)
    quad = comb_coeffs_quadrature(beta, gamma, q)
    err = float(np.max(np.abs(pot.coeffs[1:] - quad[1:])))
    return make_record("regularize.comb", {"beta": beta, "gamma": gamma, "q_max": q},
                       {"const": pot.const, "z": pot.z, "quadrature": quad},
                       {"quadrature": {"passed": err <= 1e-10, "max_abs_error": err}})


def cmd_regularize_sg(args):
    from scipy.special import iv

    from .regularize import sg_activity_expansion

    z, q = float(args.z), int(args.q_max)
    c = sg_activity_expansion(z, q)
    ref = np.array([iv(0, z)] + [2 * iv(k, z) for k in range(1, q + 1)])
    err = float(np.max(np.abs(c.coeffs - ref)))
    return make_record("regularize.sg", {"z": z, "q_max": q}, {"coeffs": c.coeffs},
                       {"bessel": {"passed": err <= 1e-10, "max_abs_error": err}})


def cmd_geometry_coalescence(args):
    from .geometry import coalescence

    ys = [_pair(y) for y in args.y] if args.y else [(2**k, 0) for k in range(11)]
    rows = []
    for y in ys:
        c = coalescence(y, int(args.L))
        rows.append({"y": y, "j0y": c.j0y})
    ratios = [int(args.L) ** r["j0y"] / math.hypot(*r["y"]) for r in rows if any(r["y"])]
    C = max(max(ratios), 1 / min(ratios)) if ratios else math.nan
    return make_record("geometry.coalescence", {"L": args.L, "y": ys}, {"rows": rows, "C": C})


def cmd_geometry_reblock(args):
    from .geometry import fit_reblock_constants, reblock_shapes

    shapes = reblock_shapes(int(args.L))
    fit = fit_reblock_constants(int(args.L), tuple(_floats(args.A)), shapes)
    checks = {}
    for name, sums in fit.sums.items():
        size = shapes[name].size
        for A, val in zip(fit.A_grid, sums):
            b = fit.bound(size, A)
            checks[f"{name}@A={A:g}"] = {"passed": bool(val <= b * (1 + 1e-12)), "sum": val, "bound": b}
    checks["eta_positive"] = {"passed": fit.eta > 0, "eta": fit.eta}
    return make_record("geometry.reblock", {"L": args.L, "A": args.A}, {"C": fit.C, "eta": fit.eta}, checks)


# ---------------------------------------------------------------------------
# report


def cmd_report(args):
    recs = []
    for p in args.records:
        try:
            r = json.loads(Path(p).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read record {p}: {e}") from e
        if r.get("format") != RECORD_FORMAT:
            raise UsageError(f"{p} is not a run record")
        recs.append((p, r))
    versions = {r["code_version"] for _, r in recs}
    if len(versions) > 1 and not args.force:
        raise UsageError(f"records come from different code versions {sorted(versions)}; use --force")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"schema": CSV_SCHEMA, "code_versions": sorted(versions), "series": []}
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["record", "experiment", "config_hash", "code_version", "check", "passed"])
        for p, r in recs:
            checks = r.get("checks") or {"-": {"passed": True}}
            for name, c in checks.items():
                w.writerow([p, r["experiment"], r["config_hash"], r["code_version"], name, c.get("passed")])
    for p, r in recs:
        if r["experiment"] != "mc.run":
            continue
        res = r["results"]
        name = f"variance_{r['config_hash']}.dat"
        with open(out / name, "w") as fh:
            fh.write(f"# {CSV_SCHEMA} config_hash={r['config_hash']}\n# x y yerr\n")
            for x, e in zip(res["r"], res["variance"]):
                fh.write(f"{math.log(x)!r} {e['mean']!r} {e['stderr']!r}\n")
        manifest["series"].append({"file": name, "x": "log|y|", "y": "Var(sigma_0 - sigma_y)",
                                   "source": p, "config_hash": r["config_hash"]})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    rec = make_record("report", {"records": args.records, "force": args.force},
                      {"out_dir": str(out), "n_records": len(recs)})
    rec["checks"] = {p: {"passed": _status(r) == 0} for p, r in recs}
    return rec


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    top = p.add_subparsers(dest="cmd", required=True)

    def leaf(group, name, func, help_):
        sp = group.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file with option values")
        sp.add_argument("--out", help="write the run record here")
        sp.set_defaults(func=func)
        return sp

    g = top.add_parser("frd", help="finite range decomposition").add_subparsers(dest="sub", required=True)
    sp = leaf(g, "build", cmd_frd_build, "build and save a stack")
    sp.add_argument("--L", type=int, default=8)
    sp.add_argument("--N", type=int, default=5)
    sp.add_argument("--s", type=float, default=0.0)
    sp.add_argument("--m2", type=float, default=1e-6)
    sp.add_argument("--gamma", type=float, default=0.1)
    sp.add_argument("--delta", type=float, default=1e-2)
    sp.add_argument("--stack", required=True)
    sp = leaf(g, "verify", cmd_frd_verify, "verify a saved stack")
    sp.add_argument("--stack", required=True)
    sp.add_argument("--seed", type=int, default=0)

    g = top.add_parser("flow", help="coupling flow").add_subparsers(dest="sub", required=True)
    for name, func in (("run", cmd_flow_run), ("shoot", cmd_flow_shoot)):
        sp = leaf(g, name, func, f"flow {name}")
        sp.add_argument("--L", type=int, default=2)
        sp.add_argument("--beta", type=float, default=60.0)
        sp.add_argument("--gamma", type=float, default=0.25)
        sp.add_argument("--J", type=int, default=20)
        sp.add_argument("--z0", default="0.01")
        sp.add_argument("--charge-power", type=float, default=2.0)
        sp.add_argument("--toy-c", type=float, default=1.0 if name == "shoot" else 0.0)
    g.choices["run"].add_argument("--s0", type=float, default=0.0)
    g.choices["run"].add_argument("--A", type=float, default=1.0)
    g.choices["run"].add_argument("--csv")
    g.choices["shoot"].add_argument("--bracket", default="-1 1")
    g.choices["shoot"].add_argument("--target", type=float, default=0.0)

    g = top.add_parser("spectral", help="Fourier kernels").add_subparsers(dest="sub", required=True)
    sp = leaf(g, "two-point", cmd_spectral_two_point, "dipole two-point function")
    sp.add_argument("--y", default="1 0")
    sp.add_argument("--s", type=float, default=0.0)
    sp.add_argument("--gamma", type=float, default=0.1)
    sp.add_argument("--side", type=int, default=0, help="torus side (0: infinite volume)")
    sp = leaf(g, "green-fit", cmd_spectral_green_fit, "log fit of the dipole Green form")
    sp.add_argument("--side", type=int, default=2048)

    g = top.add_parser("mc", help="Monte Carlo and exact enumeration").add_subparsers(dest="sub", required=True)
    sp = leaf(g, "run", cmd_mc_run, "single-site Markov chain")
    sp.add_argument("--beta", type=float, default=16.0)
    sp.add_argument("--m2", type=float, default=0.0)
    sp.add_argument("--side", type=int, default=32)
    sp.add_argument("--burn", type=int, default=1000)
    sp.add_argument("--sweeps", type=int, default=10000)
    sp.add_argument("--measure-every", type=int, default=10)
    sp.add_argument("--update", choices=["heatbath", "metropolis"], default="heatbath")
    sp.add_argument("--window", type=int, default=1)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--y", nargs="*", type=_pair)
    sp.add_argument("--eta", default="0.5")
    sp.add_argument("--z", default="")
    sp.add_argument("--gauge", choices=["auto", "pinned", "free"], default="auto")
    sp.add_argument("--csv")
    sp = leaf(g, "enumerate", cmd_mc_enumerate, "exact height sums")
    sp.add_argument("--torus", type=int, default=2)
    sp.add_argument("--chain", type=int, default=0)
    sp.add_argument("--beta", type=float, default=6.0)
    sp.add_argument("--m2", type=float, default=0.5)
    sp.add_argument("--nmax", type=int, default=8)
    sp.add_argument("--y", nargs="*", type=_pair)
    sp.add_argument("--z", default="0.1 0.2")
    sp.add_argument("--eta", default="0.5")
    sp = leaf(g, "fit", cmd_mc_fit, "variance and cosine fits of an mc run record")
    sp.add_argument("--input", required=True)

    g = top.add_parser("regularize", help="periodic potentials").add_subparsers(dest="sub", required=True)
    sp = leaf(g, "comb", cmd_regularize_comb, "cosine coefficients of the smoothed comb")
    sp.add_argument("--beta", type=float, default=60.0)
    sp.add_argument("--gamma", type=float, default=0.25)
    sp.add_argument("--q-max", type=int, default=0)
    sp = leaf(g, "sg", cmd_regularize_sg, "cosine coefficients of exp(z cos)")
    sp.add_argument("--z", type=float, default=1.0)
    sp.add_argument("--q-max", type=int, default=8)

    g = top.add_parser("geometry", help="polymer geometry").add_subparsers(dest="sub", required=True)
    sp = leaf(g, "coalescence", cmd_geometry_coalescence, "coalescence scales")
    sp.add_argument("--L", type=int, default=8)
    sp.add_argument("--y", nargs="*", type=_pair)
    sp = leaf(g, "reblock", cmd_geometry_reblock, "reblocking bound fit")
    sp.add_argument("--L", type=int, default=4)
    sp.add_argument("--A", default="16 32 128 256")

    sp = top.add_parser("report", help="render CSV and plot data from run records")
    sp.add_argument("records", nargs="+")
    sp.add_argument("--out-dir", default="report")
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--config", help=argparse.SUPPRESS)
    sp.add_argument("--out", help="write the run record here")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _merge_config(parser, args, argv)
        record = args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except ArtifactError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    _emit(record, getattr(args, "out", None))
    return _status(record)


if __name__ == "__main__":
    sys.exit(main())
