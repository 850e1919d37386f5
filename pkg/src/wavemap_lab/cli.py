"""Command-line interface: ``python3 -m wavemap_lab {run,converge,sweep,norms,harness}``."""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import analysis, lab
from .fields import read_field_dump


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _write_report(path, report):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2)
    return path


def _load(path):
    cfg = lab.RunConfig.load(path)
    if cfg.output_dir is None:
        cfg = cfg.replace(output_dir=cfg.name)
    return cfg


def cmd_run(args):
    cfg = _load(args.config)
    rec = lab.run(cfg)
    print(f"{rec.status}: {len(rec.rows)} rows in {rec.wall_clock:.1f}s -> {rec.output_dir}")
    if rec.message:
        print(rec.message, file=sys.stderr)
    return 0 if rec.status == "completed" else 1


def cmd_converge(args):
    cfg = _load(args.config)
    table = lab.convergence_study(cfg, args.levels)
    path = _write_report(os.path.join(lab.resolve_output_dir(cfg), "convergence.json"), table)
    for key, entry in table["orders"].items():
        print(f"{key:20s} order {entry['order']:7.3f}  R^2 {entry['r2']:6.3f}")
    print(f"report -> {path}")
    return 0


def cmd_sweep(args):
    cfg = _load(args.config)
    amps = [float(a) for a in args.amplitudes.split(",") if a.strip()]
    table = lab.smalldata_sweep(cfg, amps)
    path = _write_report(os.path.join(lab.resolve_output_dir(cfg), "sweep.json"), table)
    for row in table["rows"]:
        print(f"eps0 {row['eps0']:.4g}  sup H1 {row['sup_du_H1']:.4g}  ratio {row['ratio']:.3f}  "
              f"bounded {row['bounded']}")
    print(f"report -> {path}")
    return 0 if all(r["status"] == "completed" for r in table["rows"]) else 1


def cmd_norms(args):
    data, header, grid = read_field_dump(args.fielddump)
    lead = data.ndim - grid.d
    mag = np.sqrt(np.sum(data ** 2, axis=tuple(range(lead)))) if lead else np.abs(data)
    w = np.full(grid.shape, grid.cell_volume)
    report = {"field": os.fspath(args.fielddump), "shape": list(data.shape)}
    for p in (2, 4, 8):
        report[f"L{p}"] = analysis.lp_norm(mag, p, w)
    for p, r in ((8, 2), (4, 1), (4, 2)):
        report[f"L{p},{r}"] = analysis.lorentz_norm_weighted(mag, analysis.LorentzSpec(p, r), w)
    report["Linf"] = float(np.max(mag))
    print(json.dumps(_jsonable(report), indent=2))
    if args.output:
        _write_report(args.output, report)
    return 0


def cmd_harness(args):
    report = analysis.lorentz_inequality_harness(args.trials, args.seed)
    path = _write_report(args.output or os.path.join(lab.output_root(), "harness.json"), report)
    for name, entry in report["inequalities"].items():
        print(f"{name:10s} max ratio {entry['max_ratio']:.4f}  bound {entry['bound']:.4f}  "
              f"{'ok' if entry['ok'] else 'VIOLATED'}")
    print(f"report -> {path}")
    return 0 if all(e["ok"] for e in report["inequalities"].values()) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="wavemap_lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="evolve one configuration and write its CSV")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("converge", help="grid-refinement study with fitted orders")
    c.add_argument("config")
    c.add_argument("--levels", type=int, default=3)
    c.set_defaults(func=cmd_converge)
    s = sub.add_parser("sweep", help="small-data sweep over eps0")
    s.add_argument("config")
    s.add_argument("--amplitudes", required=True, help="comma separated, ascending")
    s.set_defaults(func=cmd_sweep)
    n = sub.add_parser("norms", help="Lebesgue and Lorentz norms of a field dump")
    n.add_argument("fielddump")
    n.add_argument("--output")
    n.set_defaults(func=cmd_norms)
    h = sub.add_parser("harness", help="Lorentz-space inequality harness")
    h.add_argument("--trials", type=int, default=1000)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--output")
    h.set_defaults(func=cmd_harness)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
