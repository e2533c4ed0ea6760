"""Command-line entry point.

Exit status: 0 when every enabled check passes, 1 when a check fails, 2 for
configuration errors, 3 when a run aborts on a violated invariant.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness, micro, netfv
from . import flux as flux_mod
from .config import MODES, PRESETS, ScenarioConfig, load_config, parse_config, preset, with_mode
from .errors import JunctionFlowError, ScenarioError
from .germ import GermParams, brute_force_equivalence, dissipation, generating_set
from .output import (CONVERGENCE_HEADER, ENTROPY_HEADER, SNAPSHOT_GRID_HEADER,
                     SNAPSHOT_MICRO_HEADER, TRACE_HEADER, TV_HEADER, VEHICLE_HEADER,
                     to_json, write_csv, write_json)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _times(cfg: ScenarioConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.t_end, cfg.snapshots)


# -- runners ------------------------------------------------------------------

def run_micro(cfg: ScenarioConfig, m, strict: bool):
    eps = cfg.epsilon
    light = micro.LightSchedule.from_scaled(cfg.scaled_period(), cfg.theta, eps)
    state = micro.init_from_density(cfg.profiles, eps, m)
    run = micro.simulate(m, state, light, eps, cfg.t_end, _times(cfg), cfg.dt, strict)
    return state, run


def run_grid(cfg: ScenarioConfig, m, model: str):
    g = cfg.grid
    grid = netfv.make_grid(m, cfg.profiles, g.dx, g.L, cfg.boundary.inflow, cfg.boundary.outflow)
    if model == "meso":
        mode = netfv.Switching(cfg.scaled_period(), cfg.theta)
    else:
        mode = netfv.Homogenized(GermParams(cfg.theta))
    return mode, netfv.solve(m, grid, mode, cfg.t_end, _times(cfg), g.cfl)


def _micro_rows(run: micro.MicroRun):
    for t, d in zip(run.times, run.densities):
        for k, pw in enumerate(d.branch):
            for a, b, v in zip(pw.edges[:-1], pw.edges[1:], pw.values):
                if b > a:
                    yield (t, k, a, b, v)


def _vehicle_rows(run: micro.MicroRun):
    for t, s in zip(run.times, run.states):
        x = run.epsilon * s.X
        for i in range(s.N):
            yield (t, i, x[i], int(s.r[i]))


def _grid_rows(sol: netfv.MacroSolution):
    for t, g in zip(sol.times, sol.snapshots):
        for k in range(3):
            for x, v in zip(g.centers(k), g.rho[k]):
                yield (t, k, x, v)


def _trace_rows(tr: netfv.JunctionTrace):
    return zip(tr.t, tr.p0, tr.p1, tr.p2, tr.F0, tr.F1, tr.F2)


def _micro_summary(cfg, state, run) -> dict:
    return {
        "N": state.N,
        "steps": run.steps,
        "vehicle_count_constant": run.vehicle_count_constant,
        "light": {"T": run.light.T, "T1": run.light.T1,
                  "switch_count": micro.switch_count(cfg.epsilon, run.light.T)},
        "alpha_in_regime": cfg.alpha_in_regime,
        "density_checks": run.checks.to_dict(),
        "tv_max": float(run.tv.max()) if run.tv.size else 0.0,
    }


def _write_micro(out: Path, run) -> None:
    write_csv(out / "snapshots.csv", SNAPSHOT_MICRO_HEADER, _micro_rows(run))
    write_csv(out / "vehicles.csv", VEHICLE_HEADER, _vehicle_rows(run))
    write_csv(out / "tv.csv", TV_HEADER, zip(run.times, run.green, run.tv))


def execute(cfg: ScenarioConfig, out: Path, strict: bool = False, timings: bool = False) -> tuple[int, dict]:
    """Run the configured mode, write its files into ``out`` and return ``(status, report)``."""
    out.mkdir(parents=True, exist_ok=True)
    m = flux_mod.from_dict(cfg.flux)
    report: dict = {"scenario": cfg.name, "mode": cfg.mode, "config": cfg.to_dict()}
    ok = True
    mode = cfg.mode

    if mode in ("micro", "tv-check", "entropy-check"):
        state, run = run_micro(cfg, m, strict)
        _write_micro(out, run)
        report["micro"] = _micro_summary(cfg, state, run)
        ok = run.checks.ok and run.vehicle_count_constant
        if mode == "tv-check":
            light = run.light
            tv = harness.tv_bound_check(run.times, run.tv, cfg.checks.tv_kind, m, cfg.checks.tv_tol,
                                        cfg.epsilon, light)
            report["tv_check"] = tv.to_dict()
            ok = ok and tv.passed
        if mode == "entropy-check":
            c = cfg.checks
            hat_t = c.hat_t or (0.0, cfg.t_end)
            hat_x = c.hat_x or (0.25, 2.75)
            hats = harness.hat_lattice(hat_t, hat_x, *c.hats)
            rho = [d.branch[c.entropy_branch] for d in run.densities]
            sup_tv = float(run.tv.max()) if run.tv.size else 0.0
            ent = harness.entropy_check(run.times, rho, m, cfg.epsilon, sup_tv, hats, c.entropy_k,
                                        c.entropy_slack)
            write_csv(out / "entropy.csv", ENTROPY_HEADER,
                      ((r.k, r.hat, hats[r.hat].tc, hats[r.hat].tw, hats[r.hat].xc, hats[r.hat].xw,
                        r.residual, r.bound, r.passed) for r in ent.rows))
            summary = ent.to_dict()
            summary.pop("rows")
            report["entropy_check"] = summary
            ok = ok and ent.all_pass

    elif mode in ("meso", "homog", "germ-check"):
        model = cfg.checks.trace_model if mode == "germ-check" else mode
        jmode, sol = run_grid(cfg, m, model)
        write_csv(out / "snapshots.csv", SNAPSHOT_GRID_HEADER, _grid_rows(sol))
        write_csv(out / "trace.csv", TRACE_HEADER, _trace_rows(sol.trace))
        report["macro"] = {
            "steps": sol.steps,
            "mass_initial": float(sol.mass[0]),
            "mass_final": float(sol.mass[-1]),
            "max_conservation_error": sol.max_conservation_error,
            "max_step_change": sol.max_step_change,
        }
        ok = sol.max_conservation_error <= netfv.CONSERVATION_RTOL
        if mode == "germ-check":
            c = cfg.checks
            period = jmode.period if isinstance(jmode, netfv.Switching) else None
            gt = harness.germ_trace_check(sol.trace, m, GermParams(cfg.theta), c.germ_tol, c.burn_in,
                                          period, cfg.t_end)
            report["germ_check"] = gt.to_dict()
            ok = ok and gt.pass_fraction >= c.pass_fraction
            if c.max_drift is not None:
                report["germ_check"]["max_drift"] = c.max_drift
                ok = ok and sol.max_step_change <= c.max_drift

    elif mode == "compare":
        c = cfg.compare
        setup = harness.StudySetup(
            flux=dict(cfg.flux), profiles=cfg.profiles, theta=cfg.theta,
            window=harness.Window(cfg.t_end, c.exclude, c.reach or float("inf"), cfg.snapshots),
            dx=cfg.grid.dx, L=cfg.grid.L, period=cfg.light.period, alpha=cfg.light.alpha,
            epsilon=cfg.epsilon, cfl=cfg.grid.cfl)
        rep = harness.convergence_study(setup, c.pair, c.sweep, c.values, cfg.name, c.workers)
        write_csv(out / "convergence.csv", CONVERGENCE_HEADER,
                  ((r.epsilon, r.period, r.N, r.l1_error, r.tv_max) for r in rep.rows))
        report["convergence"] = rep.to_dict(timings)
        report["alpha_in_regime"] = cfg.alpha_in_regime
        checks_ok = all(r.checks.get("ok", True) and r.checks.get("vehicle_count_constant", True)
                        and r.checks.get("max_conservation_error", 0.0) <= netfv.CONSERVATION_RTOL
                        for r in rep.rows)
        ok = rep.decreasing() and checks_ok

    elif mode == "germ-brute":
        c = cfg.checks
        g = GermParams(cfg.theta)
        eq = brute_force_equivalence(m, g, c.grid_step, c.gamma_samples)
        report["equivalence"] = eq.to_dict()
        ok = eq.consistent
        if c.random_pairs:
            E = generating_set(m, g, c.gamma_samples).points
            rng = np.random.default_rng(cfg.seed)
            i = rng.integers(0, E.shape[0], c.random_pairs)
            j = rng.integers(0, E.shape[0], c.random_pairs)
            D = np.asarray(dissipation(m, E[i], E[j]))
            report["dissipation"] = {"pairs": c.random_pairs, "min": float(D.min()),
                                     "passed": bool(D.min() >= -1e-10 * m.f_max)}
            ok = ok and report["dissipation"]["passed"]
    else:  # pragma: no cover - validated earlier
        raise ScenarioError("mode", f"unsupported mode {mode!r}")

    report["passed"] = bool(ok)
    write_json(out / "report.json", report)
    return (EXIT_OK if ok else EXIT_CHECK), report


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="junctionflow",
        description="Traffic on a 2:1 junction: particle, switching and averaged junction models.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario JSON file")
    src.add_argument("--preset", help=f"bundled scenario ({', '.join(sorted(PRESETS))})")
    src.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    p.add_argument("--mode", choices=MODES, help="override the scenario's mode")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="override the scenario's seed")
    p.add_argument("--strict", action="store_true", help="abort at the first failed runtime check")
    p.add_argument("--timings", action="store_true", help="include wall-clock times in report.json")
    p.add_argument("--dump-config", action="store_true", help="print the resolved scenario and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_presets:
        print("\n".join(sorted(PRESETS)))
        return EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else preset(args.preset)
        if args.mode and args.mode != cfg.mode:
            cfg = with_mode(cfg, args.mode)
        if args.seed is not None:
            doc = cfg.to_dict()
            doc["seed"] = args.seed
            cfg = parse_config(doc)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(to_json(cfg.to_dict()))
        return EXIT_OK
    try:
        status, report = execute(cfg, args.out, args.strict, args.timings)
    except JunctionFlowError as exc:
        args.out.mkdir(parents=True, exist_ok=True)
        write_json(args.out / "failure.json", {"scenario": cfg.name, "mode": cfg.mode,
                                                "error": type(exc).__name__, "message": str(exc)})
        print(f"run aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    verdict = "passed" if status == EXIT_OK else "FAILED"
    print(f"{cfg.name} [{cfg.mode}]: {verdict}; outputs in {args.out}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
