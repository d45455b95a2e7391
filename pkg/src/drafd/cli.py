"""Command line: ``drafd design|evaluate|bound|roi|tv``.

Exit status is 0 on success, 1 for invalid input (config, schedule or
numeric arguments) and 2 for failures while running.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ambiguity import build_roi
from .config import PROFILES, ConfigError, load_config
from .diagnose import decide_sequential, evaluate_schedule
from .distfit import MomentPdf, tv_density
from .inputdesign import run_procedure
from .sysmodel import InputSchedule
from .worstcase import total_bound

log = logging.getLogger(__name__)

OUT_ENV = "DRAFD_OUT"


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_schedule(path, schedule):
    ends = np.concatenate([schedule.breakpoints[1:], [schedule.horizon]])
    header = ["t_start", "t_end"] + [f"u{i + 1}" for i in range(schedule.values.shape[1])]
    rows = [[a, b, *u] for a, b, u in zip(schedule.breakpoints, ends, schedule.values)]
    return write_table(path, header, rows)


def read_schedule(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0][:2] != ["t_start", "t_end"]:
        raise ConfigError(f"schedule: {path} is not a schedule table")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None
    try:
        return InputSchedule(data[:, 0], data[:, 2:], horizon=float(data[-1, 1]))
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, cfg, files, started):
    manifest = {
        "tool": "drafd",
        "version": __version__,
        "config_sha256": cfg.digest(),
        "seed": int(cfg.seed),
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "files": {Path(p).name: _sha256(p) for p in files},
    }
    path = Path(out) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args, cfg, default):
    root = args.out or cfg.output_dir or os.path.join(os.environ.get(OUT_ENV, "runs"), default)
    Path(root).mkdir(parents=True, exist_ok=True)
    return Path(root)


def _config(args):
    mc = args.mc if args.mc is not None else PROFILES[args.profile]["mc_count"] if args.profile else None
    return load_config(args.config, seed=args.seed, mc_count=mc)


def cmd_design(args):
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    cfg = _config(args)
    bank = cfg.build_bank()
    opts = cfg.design_options()
    out = _out_dir(args, cfg, "design")
    schedule, record = run_procedure(bank, cfg.horizon, cfg.times(), opts)

    files = []
    if schedule is not None:
        files.append(write_schedule(out / "schedule.csv", schedule))
    n_u = bank.n_u
    ledger, pdf_rows, roi_rows = [], [], []
    for rec in record.intervals:
        t0, t1 = rec.interval
        for ev in rec.candidates:
            ledger.append([rec.index, t0, t1, *ev.u, ev.objective, ev.nominal_area, ev.bound, ev.feasible,
                           ev is rec.chosen])
        ch = rec.chosen
        for j, (p, b) in enumerate(zip(ch.pdfs, ch.boxes)):
            pdf_rows.append([rec.index, t1, j, p.family, p.mu, p.sigma])
            roi_rows.append([rec.index, t1, j, b.radius, b.alpha, b.beta, b.gamma, b.delta, b.corner_tv,
                             ch.solution.mu[j], ch.solution.sigma[j]])
    u_cols = [f"u{i + 1}" for i in range(n_u)]
    files.append(write_table(out / "design_ledger.csv",
                             ["interval", "t_start", "t_end", *u_cols, "worst_case_area", "nominal_area",
                              "bound", "feasible", "chosen"], ledger))
    files.append(write_table(out / "pdfs.csv", ["interval", "t_m", "model", "family", "mu", "sigma"], pdf_rows))
    files.append(write_table(out / "roi.csv",
                             ["interval", "t_m", "model", "radius", "mu_lo", "mu_hi", "sigma_lo", "sigma_hi",
                              "corner_tv", "mu_worst", "sigma_worst"], roi_rows))
    write_manifest(out, cfg, files, started)
    if record.failure:
        print(f"design incomplete: {record.failure}", file=sys.stderr)
        return 2
    print(out / "schedule.csv")
    return 0


def cmd_evaluate(args):
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    cfg = _config(args)
    bank = cfg.build_bank(cfg.evaluation_table)
    if cfg.realization is not None and cfg.realization >= len(bank):
        raise ConfigError(f"realization: index {cfg.realization} but the bank has {len(bank)} models")
    schedule = read_schedule(args.schedule)
    try:
        schedule.check_box(bank.input_box)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None
    out = _out_dir(args, cfg, "evaluate")
    times = np.concatenate([schedule.breakpoints[1:], [schedule.horizon]])
    report = evaluate_schedule(bank, schedule, int(cfg.mc_count), int(cfg.seed), times=times, dt=cfg.dt,
                               family=cfg.family, realization=cfg.realization)
    pair_cols = [f"area_{i}_{j}" for i, j in report.pairs]
    files = [write_table(out / "areas.csv", ["t_m", *pair_cols, "total"],
                         [[t, *pa, tot] for t, pa, tot in zip(report.times, report.pair_areas, report.total_areas)])]
    files.append(write_table(out / "pdfs_true.csv", ["t_m", "model", "family", "mu", "sigma"],
                             [[t, j, p.family, p.mu, p.sigma] for t, ps in zip(report.times, report.pdfs)
                              for j, p in enumerate(ps)]))
    if report.observations.size:
        rows = []
        for k, (t, y, d) in enumerate(zip(report.times, report.observations, report.decisions)):
            if cfg.decision == "sequential":
                d = decide_sequential(report, report.observations[:k + 1], report.times[:k + 1])
            rows.append([t, y, *report.likelihoods(y, t), d])
        files.append(write_table(out / "decisions.csv",
                                 ["t_m", "observation", *[f"lik_{j}" for j in range(report.n_models)], "decision"],
                                 rows))
    files += _plots(out, report, schedule)
    write_manifest(out, cfg, files, started)
    print(f"final total common area: {fmt(report.final_total_area)}")
    return 0


def _plots(out, report, schedule):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    meta = {"Date": None, "Creator": None}
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for (i, j), series in zip(report.pairs, report.pair_areas.T):
        ax.plot(report.times, series, marker=".", label=f"models {i}-{j}")
    ax.plot(report.times, report.total_areas, "k-", lw=2, label="total")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("common area")
    ax.legend()
    fig.tight_layout()
    p1 = out / "areas.svg"
    fig.savefig(p1, metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    final = report.pdfs[-1]
    lo = min(p.mu - 4 * p.sigma for p in final)
    hi = max(p.mu + 4 * p.sigma for p in final)
    y = np.linspace(lo, hi, 400)
    for j, p in enumerate(final):
        ax.plot(y, p.pdf(y), label=f"model {j}")
    ax.set_xlabel("output")
    ax.set_ylabel("density")
    ax.set_title(f"t = {report.times[-1]:g} s")
    ax.legend()
    fig.tight_layout()
    p2 = out / "pdfs_final.svg"
    fig.savefig(p2, metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    t = np.append(schedule.breakpoints, schedule.horizon)
    for i in range(schedule.values.shape[1]):
        ax.step(t, np.append(schedule.values[:, i], schedule.values[-1, i]), where="post", label=f"u{i + 1}")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("input")
    ax.legend()
    fig.tight_layout()
    p3 = out / "schedule.svg"
    fig.savefig(p3, metadata=meta)
    plt.close(fig)
    return [p1, p2, p3]


def _pairs(values, n_per):
    if len(values) % n_per or len(values) < 2 * n_per:
        raise ConfigError(f"expected groups of {n_per} numbers for at least two models")
    return [tuple(values[i:i + n_per]) for i in range(0, len(values), n_per)]


def cmd_bound(args):
    print(fmt(total_bound(_pairs(args.values, 2))))
    return 0


def cmd_tv(args):
    (m1, s1), (m2, s2) = _pairs(args.values, 2)[:2]
    print(fmt(tv_density(MomentPdf(args.family, m1, s1), MomentPdf(args.family, m2, s2))))
    return 0


def cmd_roi(args):
    box = build_roi(MomentPdf(args.family, args.mu, args.sigma), args.radius, tuple(args.box))
    print(" ".join(fmt(v) for v in (box.alpha, box.beta, box.gamma, box.delta)))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="drafd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mc", type=int)
        sp.add_argument("--profile", choices=sorted(PROFILES))

    d = sub.add_parser("design", help="design a robust input schedule")
    scenario(d)
    d.set_defaults(func=cmd_design)
    e = sub.add_parser("evaluate", help="apply a schedule to the evaluation bank")
    scenario(e)
    e.add_argument("--schedule", required=True)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bound", help="common-area upper bound: MU SIGMA MU SIGMA ...")
    b.add_argument("values", nargs="+", type=float)
    b.set_defaults(func=cmd_bound)
    t = sub.add_parser("tv", help="TV distance: MU1 SIGMA1 MU2 SIGMA2")
    t.add_argument("values", nargs=4, type=float)
    t.add_argument("--family", default="normal", choices=["normal", "gamma", "beta"])
    t.set_defaults(func=cmd_tv)
    r = sub.add_parser("roi", help="region of interest: MU SIGMA R")
    r.add_argument("mu", type=float)
    r.add_argument("sigma", type=float)
    r.add_argument("radius", type=float)
    r.add_argument("--box", nargs=2, type=float, default=[0.0, 0.75], metavar=("LO", "HI"))
    r.add_argument("--family", default="normal", choices=["normal", "gamma", "beta"])
    r.set_defaults(func=cmd_roi)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
