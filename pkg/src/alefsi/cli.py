"""Command-line interface: ``alefsi run``, ``alefsi verify`` and ``alefsi presets``.

Exit codes: 0 success, 1 configuration or run error, 2 failed check.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from alefsi import __version__

log = logging.getLogger("alefsi")

TIMESERIES_COLUMNS = ("t", "N", "D", "E_cum", "flatness", "volume_err", "energy_residual", "q_gamma_mean",
                      "picard_iters", "crucial_lhs", "crucial_rhs", "crucial_ratio", "energy", "dissipation",
                      "v_H2_fluid", "vt_H1_fluid", "vh_H1_solid", "etah_H2_solid", "low_order")

EQ_TOL = 1e-8


def resolve_scenario_path(arg: str) -> Path:
    """A file path, or the name of a shipped preset (``perturbed``, ``presets/perturbed.cfg``)."""
    from alefsi.scenario import list_presets, preset_path

    p = Path(arg)
    if p.is_file():
        return p
    stem = p.stem if p.suffix == ".cfg" else p.name
    if (p.parent == Path("presets") or p.parent == Path(".")) and stem in list_presets():
        return preset_path(stem)
    raise FileNotFoundError(f"scenario file {arg} not found (shipped presets: {', '.join(list_presets())})")


def _fmt(x):
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_timeseries(records, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMESERIES_COLUMNS)
        for r in records:
            d = r.as_dict()
            w.writerow([_fmt(d[c]) for c in TIMESERIES_COLUMNS])
    return path


def run_checks(traj) -> list:
    """Per-run pass/fail checks recorded in the manifest."""
    from alefsi.diagnostics import C_MAX

    recs = traj.records
    out = []
    drift = max(r.volume_err for r in recs)
    out.append(dict(name="volume drift", value=drift, threshold=1e-6, passed=drift <= 1e-6))
    sup = max(r.crucial_ratio for r in recs)
    out.append(dict(name="crucial ratio bounded", value=sup, threshold=C_MAX, passed=sup <= C_MAX))
    if traj.energy_steps:
        inc = max(dE for _, dE, _ in traj.energy_steps)
        out.append(dict(name="energy non-increasing", value=inc, threshold=1e-12, passed=inc <= 1e-12))
    if traj.scenario.kind in ("equilibrium", "h-shift-equilibrium"):
        maxN = max(r.N for r in recs)
        out.append(dict(name="equilibrium max N", value=maxN, threshold=EQ_TOL, passed=maxN <= EQ_TOL))
    return out


def cmd_run(args) -> int:
    from alefsi.scenario import load_scenario, run, with_overrides

    try:
        path = resolve_scenario_path(args.scenario)
        text = path.read_text()
        sc = with_overrides(load_scenario(path), t_end=args.t_end, dt=args.dt, snapshot_every=args.snapshot_every,
                            seed=args.seed, diag_every=args.diag_every)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.output_dir or Path("runs") / sc.name)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    progress = None
    if args.verbose:
        def progress(state, rec):
            log.info("t=%.4f N=%.3e D=%.3e flatness=%.3e sweeps=%d", rec.t, rec.N, rec.D, rec.flatness, rec.picard_iters)
    traj = run(sc, callback=progress)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = [write_timeseries(traj.records, out / "timeseries.csv")]
        if sc.snapshot_every or sc.checkpoints:
            from alefsi.snapshots import write_state

            for snap in traj.snapshots:
                files += write_state(out / "snapshots", snap, traj.grid)
        if not args.no_plots:
            from alefsi.plotting import plot_run

            files += plot_run(traj.records, out)
        conv = None
        done = [c for c in sc.checkpoints if c <= traj.final.t + 0.5 * traj.dt]
        if done and traj.status == "ok":
            from alefsi.asymptotics import convergence_report

            rep, samples = convergence_report(traj, done)
            files.append(rep.to_json(out / "convergence_report.json"))
            files += rep.write_profiles(out, samples)
            conv = dict(tail_mean_v3={str(n): rep.mismatch[n]["tail_mean_v3"] for n in done},
                        pairwise_h1=rep.pairwise_h1)
        from alefsi.diagnostics import report_summary

        checks = run_checks(traj)
        manifest = dict(
            scenario=sc.name,
            kind=sc.kind,
            scenario_file=str(path),
            scenario_hash=hashlib.sha256(text.encode() + repr((args.t_end, args.dt, args.seed)).encode()).hexdigest(),
            config={k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(sc.config).items()},
            params=sc.params,
            seed=sc.seed,
            code_version=__version__,
            started=started,
            finished=_dt.datetime.now(_dt.timezone.utc).isoformat(),
            wall_time=traj.wall_time,
            status=traj.status,
            error=traj.error,
            last_valid_time=traj.final.t,
            summary=report_summary(traj.records),
            convergence=conv,
            checks=checks,
        )
        report = out / "report.json"
        files.append(report)
        manifest["outputs"] = sorted(str(p.relative_to(out)) for p in files)
        report.write_text(json.dumps(manifest, indent=1, default=float))
    except OSError as exc:
        print(f"error writing outputs: {exc}", file=sys.stderr)
        return 1
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']:.4g} (threshold {c['threshold']:.4g})")
    print(f"wrote {len(files)} files to {out}")
    if traj.status != "ok":
        print(f"run stopped early at t={traj.final.t:.6g}: {traj.error}", file=sys.stderr)
        return 1
    return 0 if all(c["passed"] for c in checks) else 2


def cmd_verify(args) -> int:
    from alefsi.verification import run_suite

    try:
        results = run_suite(args.suite)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ok = True
    for group, checks in results.items():
        for c in checks:
            print(f"[{group}] {c.line()}")
            ok &= c.passed
    return 0 if ok else 2


def cmd_presets(args) -> int:
    from alefsi.scenario import list_presets, preset_path

    for name in list_presets():
        print(f"{name:22s} {preset_path(name)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    from alefsi.verification import SUITES

    p = argparse.ArgumentParser(prog="alefsi", description="Fluid-elastic channel simulator in ALE variables")
    p.add_argument("--version", action="version", version=f"alefsi {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file or shipped preset")
    r.add_argument("scenario")
    r.add_argument("--t-end", type=float)
    r.add_argument("--dt", type=float)
    r.add_argument("--output-dir")
    r.add_argument("--snapshot-every", type=int, help="steps between snapshots (0 disables)")
    r.add_argument("--diag-every", type=int, help="steps between diagnostics records")
    r.add_argument("--seed", type=int, help="seed for randomized perturbations (mode = random)")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("verify", help="run an acceptance suite")
    v.add_argument("suite", choices=SUITES)
    v.set_defaults(func=cmd_verify)
    pr = sub.add_parser("presets", help="list shipped presets")
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
