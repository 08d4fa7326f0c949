"""Command-line front end: ``cnmc <command> [--config run.json] [overrides]``.

Every output file embeds the resolved configuration and a SHA-256 of its
own payload.  Errors are reported as a JSON object on stderr with a
non-zero exit status.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ModelParams, SymmetricField, read_json, unit_mode

SCHEMA = 1
log = logging.getLogger("cnmc")

DEFAULTS = {
    "params": {"N": 2, "alpha": 0.5},
    "spec": {},
    "kmax": 8,
    "seed": 0,
    "threads": None,
    "dispersion": {"R_min": 0.05, "R_max": 20.0, "n": 60},
    "lambda_star": {"tol": 1e-12, "method": "closed"},
    "eval": {"field": None, "constant": 1.0, "operator": "nmc", "epsilon": 0.0,
             "tau": 0.0, "direction": None, "points": None},
    "branch": {"tau": [0.0], "b_grid": [0.0, 1e-3, 2e-3, 5e-3, 1e-2],
               "tol": 1e-8, "max_iter": 10, "verify": True},
    "verify": {"input": None, "threshold": 1e-7, "refine": 2},
    "probe": {"point": None, "n": 16, "radius": 2.0, "epsilon": 0.0, "field": None},
    "selftest": {"criteria": None},
}

SPEC_FLAGS = {"trunc_radius": float, "radial_nodes": int, "q_cutoff": int,
              "z_nodes": int, "grid": int}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            cfg = _merge(cfg, read_json(args.config))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
    for name in SPEC_FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            cfg["spec"][name] = val
    if args.kmax is not None:
        cfg["kmax"] = args.kmax
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    return cfg


def build_objects(cfg):
    from .quadrature import QuadratureSpec

    try:
        params = ModelParams(int(cfg["params"]["N"]), float(cfg["params"]["alpha"]))
        spec = QuadratureSpec(**cfg["spec"])
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(str(e)) from e
    kmax = int(cfg["kmax"])
    if kmax < 1:
        raise ConfigError("kmax must be >= 1")
    return params, spec, kmax


def _check_tau(taus, params):
    from .spectrum import find_lambda_star

    ls = find_lambda_star(params.alpha, params.N)
    for t in taus:
        if t < 0 or t >= 1.0 / (6.0 * ls):
            raise ConfigError(f"tau={t} outside [0, 1/(6 lambda*)) = [0, {1 / (6 * ls):.4g})")


# ----------------------------------------------------------------- output

def _digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, default=_plain).encode()
    return hashlib.sha256(blob).hexdigest()


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(type(o).__name__)


def emit_json(path: Path, payload: dict, cfg: dict):
    body = {"schema": SCHEMA, "version": __version__, "config": cfg, **payload}
    body["sha256"] = _digest(body)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, default=_plain)
        fh.write("\n")
    log.info("wrote %s", path)
    return body


def emit_csv(path: Path, header, rows, cfg: dict):
    rows = [[f"{x:.17g}" if isinstance(x, (float, np.floating)) else x for x in r] for r in rows]
    digest = _digest({"header": list(header), "rows": rows})
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA}\n")
        fh.write(f"# config: {json.dumps(cfg, sort_keys=True, default=_plain)}\n")
        fh.write(f"# sha256: {digest}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    log.info("wrote %s", path)


def read_csv(path):
    """Rows of a CSV written by this tool (comment lines skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    r = csv.DictReader(lines)
    return list(r)


# --------------------------------------------------------------- commands

def cmd_dispersion(cfg, out: Path):
    from .spectrum import build_table

    params, spec, _ = build_objects(cfg)
    d = cfg["dispersion"]
    R = np.geomspace(float(d["R_min"]), float(d["R_max"]), int(d["n"]))
    tab = build_table(params.alpha, params.N, R_grid=R)
    emit_csv(out / "dispersion.csv", ["R", "nu"], tab.samples, cfg)
    emit_json(out / "dispersion.json", {"table": tab.to_dict()}, cfg)
    return 0


def cmd_lambda_star(cfg, out: Path):
    from .spectrum import build_table

    params, spec, _ = build_objects(cfg)
    ls = cfg["lambda_star"]
    tab = build_table(params.alpha, params.N, method=ls["method"], spec=spec,
                      tol=float(ls["tol"]))
    res = {}
    if ls["method"] == "quadrature":
        fine = build_table(params.alpha, params.N, "quadrature", spec.refined(2), tol=float(ls["tol"]))
        res = {"base": tab.lambda_star, "refined": fine.lambda_star,
               "drift": abs(tab.lambda_star - fine.lambda_star)}
    else:
        q = build_table(params.alpha, params.N, "quadrature", None, tol=1e-10)
        res = {"closed": tab.lambda_star, "quadrature": q.lambda_star,
               "drift": abs(tab.lambda_star - q.lambda_star)}
    tab.resolutions = res
    payload = {"lambda_star": tab.lambda_star, "nu_zero": tab.nu_zero, "A": tab.A,
               "bracket": list(tab.bracket), "resolutions": res}
    emit_json(out / "lambda_star.json", payload, cfg)
    print(json.dumps(payload, indent=2))
    return 0


def _field_from_cfg(section, params, kmax):
    d = params.dim
    if section.get("field"):
        f = section["field"]
        return SymmetricField.from_dict(f if "dim" in f else {"dim": d, "kmax": kmax, **f})
    return SymmetricField.constant(d, kmax, float(section.get("constant", 1.0)))


def cmd_eval(cfg, out: Path):
    from . import nmc_operator as op

    params, spec, kmax = build_objects(cfg)
    e = cfg["eval"]
    u = _field_from_cfg(e, params, kmax)
    pts = None if e.get("points") is None else np.asarray(e["points"], dtype=float)
    name = e["operator"]
    tau = float(e.get("tau", 0.0))
    if tau:
        _check_tau([tau], params)
    v = None
    if e.get("direction"):
        v = SymmetricField.from_dict(e["direction"])
    if name == "nmc":
        r = op.nmc_graph(u, params, spec, pts)
    elif name == "regularized":
        r = op.nmc_graph_regularized(u, params, spec, float(e["epsilon"]), pts)
    elif name == "linearized":
        r = op.linearized_nmc(u, v or SymmetricField.mode(params.dim, kmax, unit_mode(params.dim)),
                              params, spec, pts)
    elif name == "lattice":
        r = op.lattice_correction(u, tau, params, spec, pts)
    elif name == "multiperiodic":
        r = op.nmc_multiperiodic(u, tau, params, spec, pts)
    else:
        raise ConfigError(f"unknown operator {name!r}")
    d = params.dim
    header = [f"s{i + 1}" for i in range(d)] + ["value"]
    emit_csv(out / "eval.csv", header,
             [list(map(float, p)) + [float(x)] for p, x in zip(r.points, r.values)], cfg)
    return 0


def cmd_branch(cfg, out: Path):
    from .bifurcation import continue_branch

    params, spec, kmax = build_objects(cfg)
    b = cfg["branch"]
    taus = b["tau"] if isinstance(b["tau"], list) else [b["tau"]]
    _check_tau(taus, params)
    rows, status = [], {}
    vspec = spec.refined(2) if b.get("verify", True) else None
    lead = [(0,) * (params.dim - 1) + (k,) for k in (0, 2, 3)]
    for tau in taus:
        pts, st = continue_branch(float(tau), b["b_grid"], params, spec, kmax,
                                  float(b["tol"]), int(b["max_iter"]), vspec)
        status[str(tau)] = st
        for i, p in enumerate(pts):
            emit_json(out / f"point_tau{tau:g}_{i:03d}.json", {"point": p.to_dict(),
                                                              "params": params.to_dict()}, cfg)
            rows.append([float(tau), p.b, p.lam, p.residual_norm, p.cnmc_deviation,
                         p.newton_iters] + [p.v.get(k) for k in lead])
    header = ["tau", "b", "lambda", "residual", "cnmc_deviation", "newton_iters"] + \
        ["v_" + "_".join(map(str, k)) for k in lead]
    emit_csv(out / "branch.csv", header, rows, cfg)
    emit_json(out / "branch.json", {"status": status, "n_points": len(rows)}, cfg)
    return 0 if all(s["error"] is None for s in status.values()) else 3


def cmd_verify(cfg, out: Path):
    from .bifurcation import BranchPoint, verify_cnmc

    params, spec, kmax = build_objects(cfg)
    vc = cfg["verify"]
    if not vc.get("input"):
        raise ConfigError("verify.input (a point JSON written by 'branch') is required")
    doc = read_json(vc["input"])
    pt = BranchPoint.from_dict(doc.get("point", doc))
    if "params" in doc:
        params = ModelParams(**doc["params"])
    rep = verify_cnmc(pt, params, spec.refined(int(vc["refine"])), threshold=float(vc["threshold"]))
    emit_json(out / "verify.json", {"report": rep}, cfg)
    print(json.dumps({k: rep[k] for k in ("relative_deviation", "cnmc_deviation", "passed")}))
    return 0 if rep["passed"] else 4


def cmd_probe_kernel(cfg, out: Path):
    from . import kernels as K

    params, _, kmax = build_objects(cfg)
    pr = cfg["probe"]
    rng = np.random.default_rng(int(cfg["seed"]))
    d = params.dim
    u = _field_from_cfg(pr, params, kmax) if pr.get("field") else (
        SymmetricField.constant(d, kmax, 0.6) + SymmetricField.mode(d, kmax, unit_mode(d)) * 0.05)
    ctx = K.KernelContext(u, params)
    s = np.asarray(pr["point"] if pr.get("point") is not None else rng.uniform(-np.pi, np.pi, d))
    t = rng.normal(size=(int(pr["n"]), d))
    t *= (rng.uniform(0, 1, len(t)) * float(pr["radius"]) / np.linalg.norm(t, axis=1))[:, None]
    eps = float(pr["epsilon"])
    cols = {
        "lambda1": K.lambda1(ctx, s, t), "lambda2": K.lambda2(ctx, s, t),
        "lambda3": K.lambda3(ctx, s, t), "lambda4": K.lambda4(ctx, s, t),
        "K": K.kernel_K(params.alpha, eps, ctx, s, t),
        "Kbar": K.kernel_Kbar(params.alpha, eps, ctx, s, t),
        "M": K.integrand_M(eps, ctx, s, t), "Mbar": K.integrand_Mbar(eps, ctx, s, t),
    }
    header = [f"t{i + 1}" for i in range(d)] + list(cols)
    rows = [list(map(float, t[i])) + [float(c[i]) for c in cols.values()] for i in range(len(t))]
    emit_csv(out / "probe_kernel.csv", header, rows, cfg)
    return 0


def cmd_selftest(cfg, out: Path):
    from .acceptance import run

    sel = cfg["selftest"].get("criteria")
    checks = run(sel)
    emit_json(out / "selftest.json", {"checks": [
        {"criterion": c.number, "title": c.title, "passed": c.passed, "detail": c.detail,
         "seconds": c.seconds} for c in checks]}, cfg)
    return 0 if all(c.passed for c in checks) else 1


COMMANDS = {
    "dispersion": cmd_dispersion,
    "lambda-star": cmd_lambda_star,
    "eval": cmd_eval,
    "branch": cmd_branch,
    "verify": cmd_verify,
    "probe-kernel": cmd_probe_kernel,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cnmc", description="Fractional mean curvature of periodic "
                                "graphs, dispersion relation and bifurcation branches.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", default="cnmc-out", help="output directory")
    common.add_argument("--threads", type=int, metavar="K", help="cap on worker threads")
    common.add_argument("--seed", type=int, metavar="S")
    common.add_argument("--kmax", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    for name, typ in SPEC_FLAGS.items():
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.get("threads"):
            from . import _accel
            _accel.set_threads(int(cfg["threads"]))
        np.random.seed(int(cfg["seed"]))
        return COMMANDS[args.command](cfg, Path(args.out))
    except ConfigError as e:
        err = {"error": "ConfigError", "message": str(e), "origin": "cnmc.cli"}
        code = 2
    except Exception as e:  # surface module errors with their origin
        tb = e.__traceback__
        while tb.tb_next is not None:
            tb = tb.tb_next
        err = {"error": type(e).__name__, "message": str(e),
               "origin": tb.tb_frame.f_globals.get("__name__", "?")}
        code = 1
    json.dump(err, sys.stderr)
    sys.stderr.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
