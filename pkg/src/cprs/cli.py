"""Command-line surface: simulate, sweep, critical, meanfield, quenched,
selftest.

Every command writes its outputs plus a ``manifest.json`` whose seed and
parameters reproduce the run bit-exactly on the same build. Exit codes:
0 success, 2 usage error, 3 model-assumption violation, 4 numerical
instability.

A flat ``key = value`` config file can hold defaults; precedence is
command line > config file > built-in defaults. The output directory
comes from --out-dir or the CPRS_OUT_DIR environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, graphical, meanfield, montecarlo, quenched
from .dynamics import simulate
from .errors import ModelAssumptionError, NumericalInstabilityError
from .lattice import BoxGeometry, Configuration, wild_set
from .manifest import RunManifest
from .params import Params
from .selftest import run_selftest

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MODEL_ASSUMPTION = 3
EXIT_NUMERICAL = 4


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line without '=': {raw.strip()}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _merge_config(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill argparse ``None`` values from the config file, then from the
    built-in defaults."""
    config = {}
    if args.config:
        config = parse_config_file(args.config)
    for key, hard in defaults.items():
        if getattr(args, key, None) is None:
            if key in config:
                raw = config[key]
                caster = type(hard) if hard is not None else str
                if caster is bool:
                    value = raw.lower() in ("1", "true", "yes", "on")
                else:
                    value = caster(raw)
            else:
                value = hard
            setattr(args, key, value)
    return args


def _out_dir(args) -> Path:
    root = args.out_dir or os.environ.get("CPRS_OUT_DIR") or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _box(args) -> BoxGeometry:
    return BoxGeometry(args.d, args.box_side, args.boundary)


def _params(args, variant=None) -> Params:
    return Params(
        args.lambda1, args.lambda2, args.r, args.d,
        variant or getattr(args, "variant", "symmetric"),
    )


def _manifest(args, command) -> RunManifest:
    parameters = {
        k: v for k, v in vars(args).items() if k not in ("func", "config")
    }
    return RunManifest(
        command=command, parameters=parameters,
        seed=getattr(args, "seed", None), code_version=__version__,
    ).start()


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=str)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

_SIM_DEFAULTS = dict(
    d=1, lambda1=4.0, lambda2=0.5, r=1.0, variant="symmetric", tmax=50.0,
    box_side=200, boundary="periodic", backend="gillespie", out_dir=None,
)


def cmd_simulate(args) -> int:
    args = _merge_config(args, _SIM_DEFAULTS)
    manifest = _manifest(args, "simulate")
    p = _params(args)
    box = _box(args)
    out = _out_dir(args)
    initial = montecarlo.default_initial(box)
    rng = montecarlo.trial_generator(args.seed, 0)
    if args.backend == "graphical" or args.crosscheck:
        sched = graphical.sample_schedule(box, p, args.tmax, rng, seed=args.seed)
        traj = graphical.apply_schedule(initial, sched, p.variant)
        if args.crosscheck:
            reach = graphical.active_paths(
                wild_set(initial), sched, p.variant, args.tmax
            )
            agreed = reach == wild_set(traj.terminal)
            report = {
                "schedule_events": sched.n_events,
                "wild_set_forward": sorted(wild_set(traj.terminal)),
                "wild_set_paths": sorted(reach),
                "agreed": agreed,
            }
            _write_json(out / "crosscheck.json", report)
            manifest.add_output(out / "crosscheck.json")
            print(f"crosscheck: {'agree' if agreed else 'MISMATCH'}")
        if args.backend == "gillespie":
            traj = simulate(initial, p, args.tmax, rng, seed=args.seed)
    else:
        traj = simulate(initial, p, args.tmax, rng, seed=args.seed)
    traj.to_csv(out / "trajectory.csv")
    traj.summary_json(out / "summary.json")
    manifest.add_output(out / "trajectory.csv")
    manifest.add_output(out / "summary.json")
    manifest.write(out / "manifest.json")
    print(
        f"simulated to t={traj.terminal_time:g}: {traj.times.size} events, "
        f"wild count {traj.terminal.wild_count()}"
    )
    return EXIT_OK


_SWEEP_DEFAULTS = dict(
    d=1, lambda1=4.0, lambda2=0.5, r=1.0, variant="symmetric", tmax=100.0,
    box_side=200, boundary="periodic", trials=200, axis="r", out_dir=None,
    coupled=True,
)


def cmd_sweep(args) -> int:
    args = _merge_config(args, _SWEEP_DEFAULTS)
    grid = [float(v) for v in args.grid.split(",") if v.strip() != ""]
    if not grid:
        raise SystemExit(EXIT_USAGE)
    manifest = _manifest(args, "sweep")
    p = _params(args)
    out = _out_dir(args)
    result = montecarlo.sweep(
        args.axis, grid, p, _box(args), args.tmax, args.trials, args.seed,
        coupled=args.coupled,
    )
    result.to_csv(out / "sweep.csv")
    manifest.add_output(out / "sweep.csv")
    manifest.write(out / "manifest.json")
    for value, est in zip(result.grid, result.estimates):
        print(f"{args.axis}={value:g}: p_hat={est.p_hat:.4f} "
              f"[{est.ci_low:.4f}, {est.ci_high:.4f}]")
    return EXIT_OK


_CRITICAL_DEFAULTS = dict(
    d=1, lambda1=4.0, lambda2=0.5, r=0.0, variant="symmetric", tmax=100.0,
    box_side=200, boundary="periodic", trials=200, resolution=0.25,
    out_dir=None, both_variants=False,
)


def cmd_critical(args) -> int:
    args = _merge_config(args, _CRITICAL_DEFAULTS)
    manifest = _manifest(args, "critical")
    out = _out_dir(args)
    box = _box(args)
    if args.both_variants:
        both = montecarlo.estimate_rc_both_variants(
            args.lambda1, args.lambda2, box, args.tmax, args.trials,
            args.resolution, args.seed,
        )
        payload = {v: ce.as_dict() for v, ce in both.items()}
        for v, ce in both.items():
            print(f"{v}: bracket [{ce.r_low:g}, {ce.r_high:g}]"
                  + (f" flag={ce.flag}" if ce.flag else ""))
    else:
        ce = montecarlo.estimate_rc(
            args.lambda1, args.lambda2, args.variant, box, args.tmax,
            args.trials, args.resolution, args.seed,
        )
        payload = ce.as_dict()
        print(f"{args.variant}: bracket [{ce.r_low:g}, {ce.r_high:g}]"
              + (f" flag={ce.flag}" if ce.flag else ""))
    _write_json(out / "critical.json", payload)
    manifest.add_output(out / "critical.json")
    manifest.write(out / "manifest.json")
    return EXIT_OK


_MF_DEFAULTS = dict(
    d=1, lambda1=2.0, lambda2=0.25, r=1.0, system="u_sym", out_dir=None,
    bounds=False,
)


def cmd_meanfield(args) -> int:
    args = _merge_config(args, _MF_DEFAULTS)
    manifest = _manifest(args, "meanfield")
    p = Params(args.lambda1, args.lambda2, args.r, args.d)
    out = _out_dir(args)
    report = meanfield.meanfield_report(p)
    _write_json(out / "meanfield.json", report)
    manifest.add_output(out / "meanfield.json")
    manifest.write(out / "manifest.json")
    system = report["systems"][args.system]
    for cand in system[meanfield.CORRECTED]["candidates"]:
        print(
            f"{args.system} {cand['name']}: state="
            f"{[round(c, 6) for c in cand['state']]} "
            f"residual={cand['residual']:.3e} admissible={cand['admissible']}"
        )
    if args.bounds:
        for name, bound in report["bounds"].items():
            print(f"bound {name}: value={bound['value']} "
                  f"applicable={bound['applicable']} {bound['note']}")
    return EXIT_OK


_Q_DEFAULTS = dict(
    d=1, lambda1=4.0, lambda2=0.5, r=1.0, tmax=100.0, box_side=200,
    boundary="periodic", trials=200, env_form="vertex", out_dir=None,
    paper_table=False, simulate=False, env_seed=None,
)


def cmd_quenched(args) -> int:
    args = _merge_config(args, _Q_DEFAULTS)
    manifest = _manifest(args, "quenched")
    out = _out_dir(args)
    if args.paper_table:
        csv = quenched.bounds_table_csv()
        (out / "quenched-bounds.csv").write_text(csv)
        report = quenched.bounds_verification_report()
        _write_json(out / "quenched-verification.json", report)
        manifest.add_output(out / "quenched-bounds.csv")
        manifest.add_output(out / "quenched-verification.json")
        manifest.write(out / "manifest.json")
        for row in quenched.phase_bounds_table():
            lo, hi = row.display()
            print(f"lambda1={row.lambda1:g} lambda2={row.lambda2:g}: "
                  f"[{lo}, {hi})")
        for cell in report["discrepancies"]:
            print(
                f"discrepancy: ({cell['lambda1']:g}, {cell['lambda2']:g}) "
                f"{cell['bound']} computed {cell['display']} vs reference "
                f"{cell['reference']}"
            )
        return EXIT_OK
    if args.check:
        kv = dict(item.split("=", 1) for item in args.check)
        lam1 = float(kv.get("lambda1", args.lambda1))
        lam2 = float(kv.get("lambda2", args.lambda2))
        r = float(kv.get("r", args.r))
        verdicts = {
            "extinct_vertex": vars(quenched.cpre_extinct_vertex(lam1, lam2, r)),
            "extinct_edge": vars(quenched.cpre_extinct_edge(lam1, lam2, r)),
            "survive_edge": vars(quenched.cpre_survive_edge(lam1, lam2, r)),
        }
        _write_json(out / "quenched-check.json", verdicts)
        manifest.add_output(out / "quenched-check.json")
        manifest.write(out / "manifest.json")
        for name, v in verdicts.items():
            print(f"{name}: applicable={v['applicable']} "
                  f"satisfied={v['satisfied']} threshold={v['threshold']}")
        return EXIT_OK
    if args.simulate:
        env_seed = args.env_seed if args.env_seed is not None else args.seed
        env_rng = np.random.default_rng(
            montecarlo.trial_seed_sequence(env_seed, 101)
        )
        box = _box(args)
        if args.env_form == "vertex":
            env = quenched.sample_environment(box.n_sites, args.r, env_rng)
            rates = quenched.vertex_rates(env, args.lambda1, args.lambda2)
        else:
            env_l = quenched.sample_environment(box.n_sites, args.r, env_rng)
            env_r = quenched.sample_environment(box.n_sites, args.r, env_rng)
            rates = quenched.edge_rates(env_l, env_r, args.lambda1, args.lambda2)
        est = quenched.simulate_cpre(rates, box, args.tmax, args.trials, args.seed)
        _write_json(out / "quenched-survival.json", est.as_dict())
        manifest.add_output(out / "quenched-survival.json")
        manifest.write(out / "manifest.json")
        print(f"p_hat={est.p_hat:.4f} [{est.ci_low:.4f}, {est.ci_high:.4f}]")
        return EXIT_OK
    print("nothing to do: pass --paper-table, --check, or --simulate",
          file=sys.stderr)
    return EXIT_USAGE


def cmd_selftest(args) -> int:
    ok = run_selftest(
        quick=args.quick, inject_projection_typo=args.inject_typo
    )
    return EXIT_OK if ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(sub, seed_required=True):
    sub.add_argument("--config", default=None, help="flat key=value config file")
    sub.add_argument("--out-dir", dest="out_dir", default=None)
    sub.add_argument("--seed", type=int, required=seed_required)
    sub.add_argument("--threads", type=int, default=None,
                     help="cap on parallel trials (default: serial)")


def _add_model(sub):
    sub.add_argument("--d", type=int, default=None)
    sub.add_argument("--lambda1", type=float, default=None)
    sub.add_argument("--lambda2", type=float, default=None)
    sub.add_argument("--r", type=float, default=None)
    sub.add_argument("--box-side", dest="box_side", type=int, default=None)
    sub.add_argument("--boundary", choices=("periodic", "empty-exterior"),
                     default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cprs",
        description="Simulation and phase-diagram toolkit for a contact "
                    "process with sterile-release slowdowns",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run one trajectory")
    _add_common(sim)
    _add_model(sim)
    sim.add_argument("--variant", choices=("symmetric", "asymmetric"),
                     default=None)
    sim.add_argument("--tmax", type=float, default=None)
    sim.add_argument("--backend", choices=("gillespie", "graphical"),
                     default=None)
    sim.add_argument("--crosscheck", action="store_true",
                     help="also run the path-reachability backend and compare")
    sim.set_defaults(func=cmd_simulate)

    sw = subs.add_parser("sweep", help="survival estimates over a grid")
    _add_common(sw)
    _add_model(sw)
    sw.add_argument("--variant", choices=("symmetric", "asymmetric"),
                    default=None)
    sw.add_argument("--axis", choices=montecarlo.SWEEP_AXES, default=None)
    sw.add_argument("--grid", required=True,
                    help="comma-separated grid values")
    sw.add_argument("--tmax", type=float, default=None)
    sw.add_argument("--trials", type=int, default=None)
    sw.add_argument("--coupled", dest="coupled", action="store_true",
                    default=None, help="share schedules across the grid")
    sw.add_argument("--uncoupled", dest="coupled", action="store_false")
    sw.set_defaults(func=cmd_sweep)

    cr = subs.add_parser("critical", help="bracket the critical release rate")
    _add_common(cr)
    _add_model(cr)
    cr.add_argument("--variant", choices=("symmetric", "asymmetric"),
                    default=None)
    cr.add_argument("--tmax", type=float, default=None)
    cr.add_argument("--trials", type=int, default=None)
    cr.add_argument("--resolution", type=float, default=None)
    cr.add_argument("--both-variants", dest="both_variants",
                    action="store_true", default=None)
    cr.set_defaults(func=cmd_critical)

    mf = subs.add_parser("meanfield", help="equilibrium survey and bounds")
    _add_common(mf, seed_required=False)
    mf.add_argument("--d", type=int, default=None)
    mf.add_argument("--lambda1", type=float, default=None)
    mf.add_argument("--lambda2", type=float, default=None)
    mf.add_argument("--r", type=float, default=None)
    mf.add_argument("--system", choices=meanfield.SYSTEMS, default=None)
    mf.add_argument("--bounds", action="store_true", default=None)
    mf.set_defaults(func=cmd_meanfield)

    q = subs.add_parser("quenched", help="quenched-environment bounds and runs")
    _add_common(q)
    _add_model(q)
    q.add_argument("--paper-table", dest="paper_table", action="store_true",
                   default=None,
                   help="emit the reference bound table and verification report")
    q.add_argument("--check", nargs="*", default=None,
                   help="evaluate criteria, e.g. lambda1=10 lambda2=0.8 r=20")
    q.add_argument("--simulate", action="store_true", default=None)
    q.add_argument("--env-form", dest="env_form", choices=("vertex", "edge"),
                   default=None)
    q.add_argument("--env-seed", dest="env_seed", type=int, default=None)
    q.add_argument("--tmax", type=float, default=None)
    q.add_argument("--trials", type=int, default=None)
    q.set_defaults(func=cmd_quenched)

    st = subs.add_parser("selftest", help="run the invariant suite")
    st.add_argument("--quick", action="store_true")
    st.add_argument("--inject-typo", dest="inject_typo", action="store_true",
                    help="corrupt one coupling row to demonstrate detection")
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelAssumptionError as exc:
        print(f"model assumption violated: {exc}", file=sys.stderr)
        return EXIT_MODEL_ASSUMPTION
    except NumericalInstabilityError as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
