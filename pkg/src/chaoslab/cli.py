"""chaoslab command-line driver.

Exit status: 0 on success, 1 on usage or configuration errors, 2 when a
checked invariant fails.  A manifest.json is written to the output
directory on every run that gets far enough to have one.
"""
import argparse
import json
import math
import os
import platform
import sys
import time
import traceback
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from . import experiments as E
from . import hierarchy as H
from .io import sha256, to_jsonable, write_csv, write_json
from .noise import parse_spec
from .psd import NotPSDError

COMMANDS = ("verify-lemmas", "embed-test", "run-coupling", "scaling-study",
            "gmc-figure", "hierarchy", "rn-ratio")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ints(text):
    return [int(v) for v in str(text).split(",") if v != ""]


def _floats(text):
    return [float(v) for v in str(text).split(",") if v != ""]


def _strs(text):
    return [v for v in str(text).split(",") if v != ""]


# name: (type, default, help)
PARAMS = {
    "verify-lemmas": {
        "instances": (int, 1000, "random PSD pairs per campaign"),
        "dims": (_ints, [2, 50], "dimension range lo,hi"),
        "bern_n": (int, 2000, "vectors in the Bernstein check"),
        "bern_d": (int, 10, "dimension in the Bernstein check"),
        "bern_trials": (int, 1000, "Bernstein trials"),
        "bern_s": (float, 1.0, "time s for A_s"),
        "spec": (str, "rademacher", "noise law"),
    },
    "embed-test": {
        "specs": (_strs, list(E.DEFAULT_SPECS), "comma-separated noise laws"),
        "samples": (int, 100_000, "embeddings per law"),
        "dt": (float, 1e-3, "time step"),
        "horizon": (float, 50.0, "truncation time"),
    },
    "run-coupling": {
        "system": (str, "dft_sub", "dft_sub, hartley, identity or constant"),
        "n": (int, 256, "number of vectors"),
        "d": (int, 8, "dimension"),
        "spec": (str, "rademacher", "noise law"),
        "trials": (int, 100, "independent couplings"),
        "dt": (float, 1e-2, "time step"),
        "replay": (int, 1, "replay logged runs (0 or 1)"),
    },
    "scaling-study": {
        "d": (int, 16, "dimension of the DFT subcolumn systems"),
        "log2n": (_ints, [8, 9, 10, 11, 12, 13, 14], "log2 of n per cell"),
        "trials": (int, 200, "trials per cell"),
        "hartley": (_ints, [16, 32, 64], "sizes of the d = n counterexample"),
        "spec": (str, "rademacher", "noise law"),
        "dt": (float, 1e-2, "time step"),
    },
    "gmc-figure": {
        "gammas": (_floats, [0.3, 1.0, 1.9], "inverse temperatures"),
        "log2n": (_ints, [8, 10, 12], "log2 of the truncation n"),
        "grid": (int, 1 << 14, "grid points on [0, 1)"),
        "spec": (str, "gaussian", "coefficient law"),
    },
    "hierarchy": {
        "depth": (int, 12, "tree depth"),
        "gamma": (float, 2.0 / 3.0, "gamma"),
        "delta": (float, None, "delta (default gamma / 10)"),
        "spec": (str, "rademacher", "noise law"),
        "mesh_power": (int, 0, "f(l) = l^power"),
        "seeds": (int, 1, "number of seeds"),
        "dt": (float, H.HIER_DT, "coupling time step"),
        "vnorm_c": (float, 10.0, "constant c in ||V|| <= c n^4"),
    },
    "rn-ratio": {
        "depth": (int, 10, "tree depth"),
        "gamma": (float, 2.0 / 3.0, "gamma"),
        "delta": (float, None, "delta (default gamma / 10)"),
        "spec": (str, "rademacher", "noise law"),
        "mesh_power": (int, 0, "f(l) = l^power"),
        "seeds": (int, 1, "number of seeds"),
        "dt": (float, H.HIER_DT, "coupling time step"),
    },
}


def _global_flags(defaults):
    g = argparse.ArgumentParser(add_help=False)
    kw = {} if defaults else {"default": argparse.SUPPRESS}
    g.add_argument("--config", type=Path, help="JSON run configuration", **kw)
    g.add_argument("--seed", type=int, help="seed (overrides config and CHAOS_SEED)", **kw)
    g.add_argument("--out", type=Path, help="output directory", **kw)
    g.add_argument("--threads", type=int, help="worker processes, 0 = auto", **kw)
    g.add_argument("--quiet", action="store_true", **kw)
    return g


def build_parser():
    p = _Parser(prog="chaoslab", description="Chaos-measure invariance experiments",
                parents=[_global_flags(True)])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, parents=[_global_flags(False)])
        for name, (typ, default, text) in PARAMS[cmd].items():
            sp.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None,
                            help=f"{text} (default {default})")
    return p


def load_schema():
    return json.loads(resources.files("chaoslab").joinpath("schemas/run_config.json").read_text())


def validate_config(cfg):
    import jsonschema

    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        raise UsageError(f"config: {exc.message}") from None


def resolve(args):
    """Merge defaults, config file and command line into one run config."""
    cfg = {}
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        validate_config(cfg)
    command = args.command or cfg.get("command")
    if command is None:
        raise UsageError("no command given")
    if args.command and cfg.get("command") and cfg["command"] != args.command:
        raise UsageError("command differs from the one in the config file")
    params = {k: v[1] for k, v in PARAMS[command].items()}
    unknown = set(cfg.get("params", {})) - set(params)
    if unknown:
        raise UsageError(f"unknown params for {command}: {sorted(unknown)}")
    params.update(cfg.get("params", {}))
    for k in PARAMS[command]:
        v = getattr(args, k, None)
        if v is not None:
            params[k] = v
    if args.seed is not None:
        seed = args.seed
    elif "seed" in cfg:
        seed = cfg["seed"]
    elif os.environ.get("CHAOS_SEED"):
        try:
            seed = int(os.environ["CHAOS_SEED"])
        except ValueError:
            raise UsageError("CHAOS_SEED must be an integer") from None
    else:
        seed = 0
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    out = args.out or Path(cfg.get("output_dir", f"chaoslab-{command}"))
    threads = args.threads if args.threads is not None else cfg.get("threads", 1)
    if threads == 0:
        threads = os.cpu_count() or 1
    full = {"command": command, "seed": int(seed), "params": params, "output_dir": str(out),
            "threads": int(threads)}
    validate_config(full)
    return full


# commands: each returns (summary, ok)


def cmd_verify_lemmas(p, seed, out, threads, log):
    r = E.verify_lemmas(p["instances"], seed, tuple(p["dims"]), p["bern_n"], p["bern_d"],
                        p["bern_trials"], p["bern_s"], p["spec"])
    write_json(out / "lemmas.json", r)
    log(f"max sqrt-gap ratio {r['sqrt_gap']['max_ratio']:.4f}; monotone min eig "
        f"{r['monotone']['min_eigenvalue']:.2e}; bernstein {'ok' if r['bernstein']['pass'] else 'FAIL'}")
    return r, r["pass"]


def cmd_embed_test(p, seed, out, threads, log):
    reps = [E.embed_report(s, p["samples"], seed, p["dt"], p["horizon"]) for s in p["specs"]]
    cols = ["spec", "samples", "dt", "ks", "mean_tau", "stderr", "z", "truncated", "pass"]
    write_csv(out / "embed.csv", cols, reps)
    for r in reps:
        log(f"{r['spec']}: KS {r['ks']:.4f}, mean tau {r['mean_tau']:.4f} (z={r['z']:+.2f})")
    return {"laws": reps}, True


def cmd_run_coupling(p, seed, out, threads, log):
    from . import coupling as C
    from .rng import stream

    system = C.make_system(p["system"], p["n"], p["d"])
    spec = parse_spec(p["spec"])
    b = C.run_coupling_batch(system, spec, p["dt"], None, stream(seed, "run-coupling"),
                             p["trials"], log=bool(p["replay"]))
    rows = []
    qv_err = 0.0
    worst = 0.0
    for i in range(b.trials):
        row = {"trial": i, "gap": b.gap[i], "tau_max": b.tau_max[i],
               "truncation": b.truncation_mass[i], "qv_max": b.qv[i].max()}
        if p["replay"]:
            qv, w = C.replay_log(system, b, i)
            e = float(np.abs(qv - b.qv[i]).max())
            row.update(qv_replay_err=e, gap_ratio=w)
            qv_err, worst = max(qv_err, e), max(worst, w)
        rows.append(row)
    cols = ["trial", "gap", "tau_max", "truncation", "qv_max"]
    if p["replay"]:
        cols += ["qv_replay_err", "gap_ratio"]
    write_csv(out / "coupling.csv", cols, rows)
    summary = {"system": system.label, "norm_U": system.norm_U, "trials": b.trials,
               "median_gap": float(np.median(b.gap)),
               "bound": C.theoretical_gap_bound(system.n, system.d, system.norm_U, spec.beta),
               "qv_replay_max_err": qv_err, "worst_gap_ratio": worst}
    write_json(out / "coupling.json", summary)
    log(f"{system.label}: median gap {summary['median_gap']:.4f}")
    ok = (not p["replay"]) or (qv_err <= 1e-8 and worst <= 1.0)
    return summary, ok


def cmd_scaling_study(p, seed, out, threads, log):
    r = E.scaling(p["d"], p["log2n"], p["trials"], p["hartley"], seed, p["dt"], p["spec"], threads)
    cols = ["n", "d", "kind", "spec", "norm_U", "trials", "median_gap", "p90_gap",
            "bound_value", "truncated_frac"]
    write_csv(out / "scaling.csv", cols, r["rows"] + r["hartley_rows"])
    summary = {k: r[k] for k in ("slope_d_over_n", "hartley_slope_n", "decreasing", "pass")}
    write_json(out / "scaling.json", summary)
    log(f"slope vs d/n {r['slope_d_over_n']:.3f}; d=n slope vs n {r['hartley_slope_n']:.3f}")
    return summary, True


def cmd_gmc_figure(p, seed, out, threads, log):
    t, cells = E.figure_cells(p["gammas"], p["log2n"], p["grid"], p["spec"], seed)
    info = []
    for (g, n), m in sorted(cells.items()):
        name = f"cell_gamma{g:g}_n{n}.csv"
        write_csv(out / name, ["t", "density"], zip(t, m.density))
        info.append({"file": name, "gamma": g, "n": n, "seed": seed, "z_mode": m.normalizer_mode,
                     "mass": m.mass(), "top1pct": m.top_fraction(0.01),
                     "participation_ratio": m.participation_ratio()})
    write_json(out / "figure.json", {"axes": {"rows": "n", "columns": "gamma", "x": "t",
                                              "y": "density"}, "spec": p["spec"], "cells": info})
    log(f"{len(info)} cells written")
    return {"cells": len(info)}, True


def cmd_hierarchy(p, seed, out, threads, log):
    spec = parse_spec(p["spec"])
    tree = H.build_tree(p["depth"], p["mesh_power"])
    rows = []
    layer_dev = 0.0
    v_ok = True
    tele = 0.0
    for s in range(p["seeds"]):
        run = H.hierarchical_coupling(p["depth"], p["gamma"], p["delta"], spec, seed + s,
                                      tree=tree, dt=p["dt"], with_norm_V=True)
        for lev, (bv, K) in enumerate(zip(run.values, run.K), start=1):
            prev = run.values[lev - 2].S_a if lev > 1 else np.zeros(1)
            tele = max(tele, float(np.abs(bv.S_a - (prev[tree.parent(lev)] + bv.X_a)).max()))
            if K.size and K.size <= (1 << lev):
                layer_dev = max(layer_dev, H.layer_orthogonality(tree, K, lev)["max_dev"])
                rep = H.spectral_norm_V(tree, K, lev, c=p["vnorm_c"], exponent=4)
                v_ok &= rep.ok
        rows.extend(run.rows())
    cols = ["level", "size_K", "norm_U", "norm_V", "sup_gap", "bound", "bound_trivial",
            "truncated", "seed", "note"]
    write_csv(out / "hierarchy.csv", cols, rows)
    summary = {"depth": tree.depth, "mesh_power": tree.mesh_power,
               "nodes": [tree.size(l) for l in range(tree.depth + 1)],
               "branching_mean": [float(tree.branching(l).mean()) for l in range(tree.depth)],
               "branching_max": [int(tree.branching(l).max()) for l in range(tree.depth)],
               "layer_max_dev": layer_dev, "telescoping_max_err": tele, "norm_V_within": v_ok}
    write_json(out / "tree.json", summary)
    log(f"depth {tree.depth}: layer dev {layer_dev:.2e}, ||V|| within bound: {v_ok}")
    return summary, bool(layer_dev <= 1e-8 and tele == 0.0 and v_ok)


def cmd_rn_ratio(p, seed, out, threads, log):
    spec = parse_spec(p["spec"])
    tree = H.build_tree(p["depth"], p["mesh_power"])
    rows = []
    for s in range(p["seeds"]):
        run = H.hierarchical_coupling(p["depth"], p["gamma"], p["delta"], spec, seed + s,
                                      tree=tree, dt=p["dt"])
        lr = H.rn_ratio(tree, run.gamma, run.values, spec)
        inc = [math.nan] + H.rn_increments(tree, lr, run.K)
        for lev in range(1, p["depth"] + 1):
            K = run.K[lev - 1]
            med = float(np.median(lr[lev - 1][K])) if K.size else math.nan
            rows.append({"seed": seed + s, "level": lev, "size_K": K.size,
                         "median_log_R_on_K": med, "median_increment": inc[lev - 1]})
    write_csv(out / "rn_ratio.csv", ["seed", "level", "size_K", "median_log_R_on_K",
                                     "median_increment"], rows)
    log(f"{len(rows)} rows")
    return {"rows": len(rows)}, True


HANDLERS = {
    "verify-lemmas": cmd_verify_lemmas,
    "embed-test": cmd_embed_test,
    "run-coupling": cmd_run_coupling,
    "scaling-study": cmd_scaling_study,
    "gmc-figure": cmd_gmc_figure,
    "hierarchy": cmd_hierarchy,
    "rn-ratio": cmd_rn_ratio,
}


def versions():
    return {"chaoslab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "kernels": kernels.backend()}


def _error_record(exc):
    return {"type": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}


def dispatch(config, quiet=False):
    """Run one resolved config; returns the exit status."""
    out = Path(config["output_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"chaoslab: cannot write to {out}: {exc}", file=sys.stderr)
        return 1

    def log(msg):
        if not quiet:
            print(msg)

    manifest = {"config": config, "versions": versions(), "status": "running"}
    t0 = time.perf_counter()
    code = 0
    try:
        summary, ok = HANDLERS[config["command"]](config["params"], config["seed"], out,
                                                  config["threads"], log)
        manifest["summary"] = summary
        manifest["status"] = "ok" if ok else "check_failed"
        code = 0 if ok else 2
    except (AssertionError, ArithmeticError, NotPSDError) as exc:
        manifest["status"] = "check_failed"
        manifest["error"] = _error_record(exc)
        print(f"chaoslab: invariant violated: {exc}", file=sys.stderr)
        code = 2
    except Exception as exc:  # noqa: BLE001 - recorded in the manifest
        manifest["status"] = "error"
        manifest["error"] = _error_record(exc)
        print(f"chaoslab: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 1
    manifest["wall_time_s"] = time.perf_counter() - t0
    manifest["outputs"] = {f.name: sha256(f) for f in sorted(out.iterdir())
                           if f.is_file() and f.name != "manifest.json"}
    manifest["exit_code"] = code
    write_json(out / "manifest.json", to_jsonable(manifest))
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = resolve(args)
    except UsageError as exc:
        print(f"chaoslab: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    return dispatch(config, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
