"""End-to-end acceptance criteria A1-A12.

Each test records one PASS/FAIL line (shown with ``-s`` and repeated in the
terminal summary). Preset runs go through the command-line entry point once
and are shared between criteria.
"""
import csv
import json
import time

import numpy as np
import pytest

from junctionflow.cli import EXIT_OK, main
from junctionflow.config import JUNCTION_RIEMANN_DATA, PRESETS, preset, preset_document
from junctionflow.flux import make_quadratic
from junctionflow.germ import GermParams, brute_force_equivalence, dissipation, gamma_point, generating_set
from junctionflow.harness import tv_bound_check
from junctionflow.netfv import CONSERVATION_RTOL

JUNCTIONS = [f"junction-{n}" for n in JUNCTION_RIEMANN_DATA]
MICRO_PRESETS = ("free-line-riemann", "red-light-platoon")
MICRO_COMPARE = ("riemann-merge", "micro-homog-sweep")


class PresetRuns:
    """Runs each preset at most once per output root and keeps its report."""

    def __init__(self, root):
        self.root = root
        self.reports = {}
        self.runtime = {}

    def run(self, name, root=None):
        out = (root or self.root) / name
        start = time.perf_counter()
        status = main(["--preset", name, "--out", str(out)])
        return status, out, time.perf_counter() - start

    def report(self, name):
        if name not in self.reports:
            status, out, dt = self.run(name)
            assert status == EXIT_OK, f"{name} exited with {status}"
            self.reports[name] = json.loads((out / "report.json").read_text())
            self.runtime[name] = dt
        return self.reports[name]

    def path(self, name):
        self.report(name)
        return self.root / name


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return PresetRuns(tmp_path_factory.mktemp("presets"))


def _read_columns(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def _sweep_detail(rep, runtime):
    errs = ", ".join(f"{e:.4g}" for e in (r["l1_error"] for r in rep["rows"]))
    return f"errors [{errs}], ratio {rep['ratio']:.3f}, {runtime:.1f} s"


def test_A1_flux_algebra(verdict):
    start = time.perf_counter()
    worst = 0.0
    shape_ok = True
    for A, B in [(1, 1), (2, 1), (1, 3)]:
        m = make_quadratic(A, B)
        tol = 1e-10 * m.f_max
        r = np.linspace(0, m.rho_max, 1000)
        lam = np.linspace(0, m.f_max, 1000)
        f = m.f(r)
        fm, fp = m.f_minus(r), m.f_plus(r)
        worst = max(worst,
                    np.max(np.abs(m.f(m.inv_f_minus(lam)) - lam)),
                    np.max(np.abs(m.f(m.inv_f_plus(lam)) - lam)),
                    np.max(np.abs(np.minimum(fm, fp) - f)),
                    np.max(f - fm), np.max(f - fp))
        shape_ok &= bool(np.all(np.diff(fm) <= tol) and np.all(np.diff(fp) >= -tol))
        shape_ok &= bool(np.all(m.inv_f_minus(lam) >= m.rho_crit) and np.all(m.inv_f_plus(lam) <= m.rho_crit))
        shape_ok &= m.f(0.0) == 0.0 and m.f(m.rho_max) == 0.0
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 * 0.25 and shape_ok and elapsed < 1.0
    assert verdict("A1", ok, f"worst residual {worst:.2e}, monotone envelopes {shape_ok}, {elapsed:.2f} s")


def test_A2_germ_generation(verdict):
    m = make_quadratic(1, 1)
    details, ok = [], True
    for theta in (0.3, 0.5):
        start = time.perf_counter()
        rep = brute_force_equivalence(m, GermParams(theta), grid_step=0.01, gamma_count=200)
        elapsed = time.perf_counter() - start
        ok &= rep.consistent and rep.lattice_points == 101**3 and elapsed < 60
        ok &= rep.surface_in_direct > 0
        details.append(f"theta {theta}: {rep.lattice_points} points, {len(rep.witnesses)} mismatches, "
                       f"{rep.surface_in_direct} germ surface points, {elapsed:.1f} s")
    assert verdict("A2", ok, "; ".join(details))


def test_A3_dissipation(verdict):
    m = make_quadratic(1, 1)
    rng = np.random.default_rng(2024)
    worst, diag_ok = np.inf, True
    start = time.perf_counter()
    for theta in (0.3, 0.5):
        E = generating_set(m, GermParams(theta), 200).points
        assert E.shape[0] == 204
        i, j = rng.integers(0, E.shape[0], (2, 10_000))
        worst = min(worst, float(np.min(dissipation(m, E[i], E[j]))))
        diag_ok &= bool(np.all(np.asarray(dissipation(m, E, E)) == 0.0))
    elapsed = time.perf_counter() - start
    ok = worst >= -1e-10 * m.f_max and diag_ok and elapsed < 1.0
    assert verdict("A3", ok, f"min D {worst:.3e} over 2 x 10^4 pairs, D(P,P) = 0: {diag_ok}, {elapsed:.2f} s")


def test_A4_micro_vs_meso(runs, verdict):
    rep = runs.report("riemann-merge")["convergence"]
    assert rep["pair"] == ["micro", "meso"] and [r["epsilon"] for r in rep["rows"]] == [0.04, 0.02, 0.01, 0.005]
    ok = rep["decreasing"] and rep["ratio"] <= 0.5 and runs.runtime["riemann-merge"] < 300
    assert verdict("A4", ok, _sweep_detail(rep, runs.runtime["riemann-merge"]))


def test_A5_meso_vs_homog(runs, verdict):
    rep = runs.report("merge-homogenization")["convergence"]
    assert [r["period"] for r in rep["rows"]] == [0.4, 0.2, 0.1, 0.05]
    ok = rep["decreasing"] and rep["ratio"] <= 0.5 and runs.runtime["merge-homogenization"] < 120
    assert verdict("A5", ok, _sweep_detail(rep, runs.runtime["merge-homogenization"]))


def _generator_doc(theta, lam):
    m = make_quadratic(1, 1)
    P = gamma_point(m, GermParams(theta), lam)
    doc = preset_document("generator-steady")
    doc.update(theta=theta,
               profiles={"road0": [[0.0, 1.0, P.p0]], "road1": [[-1.0, 0.0, P.p1]], "road2": [[-1.0, 0.0, P.p2]]},
               boundary={"inflow": [m.f(P.p1), m.f(P.p2)], "outflow": m.f(P.p0)})
    return doc


def test_A6_germ_trace(runs, tmp_path, verdict):
    f_max = 0.25
    lines, ok = [], True
    for name in JUNCTIONS:
        cfg = preset(name)
        assert cfg.checks.trace_model == "homog" and cfg.checks.burn_in == 0.2 and cfg.t_end == 1.0
        gc = runs.report(name)["germ_check"]
        assert gc["tol"] == pytest.approx(1e-2 * f_max)
        ok &= gc["pass_fraction"] >= 0.95
        lines.append(f"{name.removeprefix('junction-')} {100 * gc['pass_fraction']:.1f}%")
    gen = runs.report("generator-steady")
    ok &= gen["germ_check"]["pass_fraction"] == 1.0 and gen["macro"]["max_step_change"] <= 1e-12
    worst_drift = gen["macro"]["max_step_change"]
    # the same check along the whole generator curve for two splits
    for theta in (0.3, 0.5):
        for lam in np.linspace(0, f_max, 5):
            cfg = tmp_path / f"gen-{theta}-{lam}.json"
            cfg.write_text(json.dumps(_generator_doc(theta, float(lam))))
            out = tmp_path / cfg.stem
            status = main(["--config", str(cfg), "--out", str(out)])
            rep = json.loads((out / "report.json").read_text())
            ok &= status == EXIT_OK and rep["germ_check"]["pass_fraction"] == 1.0
            worst_drift = max(worst_drift, rep["macro"]["max_step_change"])
    ok &= worst_drift <= 1e-12
    assert verdict("A6", ok, f"{', '.join(lines)}; generator states: 11 runs, max drift {worst_drift:.1e}")


def test_A7_free_line_tv(runs, verdict):
    rep = runs.report("free-line-riemann")
    tv = _read_columns(runs.path("free-line-riemann") / "tv.csv")
    m = make_quadratic(1, 1)
    check = tv_bound_check(tv["t"], tv["tv"], "free-line", m, 1e-3 * m.V_max)
    ok = rep["micro"]["N"] == 400 and tv["t"].size == 801 and check.passed
    assert verdict("A7", ok, f"N {rep['micro']['N']}, {tv['t'].size} snapshots, "
                             f"largest TV increase {check.worst_excess:.2e} (slack 1e-3)")


def test_A8_stopped_road_tv(runs, verdict):
    tc = runs.report("red-light-platoon")["tv_check"]
    ok = tc["kind"] == "stopped-line" and tc["tol"] == 0.05 and tc["tv_max"] <= tc["limit"] + tc["tol"]
    assert verdict("A8", ok, f"max TV {tc['tv_max']:.3f} <= TV(0) + 4 V_max = {tc['limit']:.3f} (+0.05)")


def test_A9_density_bounds(runs, verdict):
    checks = [runs.report(n)["micro"]["density_checks"] for n in MICRO_PRESETS]
    for n in MICRO_COMPARE:
        checks += [r["checks"] for r in runs.report(n)["convergence"]["rows"]]
    bad = sum(c["gap_violations"] + c["sup_violations"] + c["mass_violations"] for c in checks)
    worst_mass = max(c["max_window_mass"] for c in checks)
    ok = bad == 0 and all(c["ok"] for c in checks)
    assert verdict("A9", ok, f"{len(checks)} micro runs, {bad} violations, "
                             f"largest junction-window mass {worst_mass:.4f} (cap 3 eps)")


def test_A10_entropy_residual(runs, verdict):
    ent = runs.report("free-line-riemann")["entropy_check"]
    rows = _read_columns(runs.path("free-line-riemann") / "entropy.csv")
    ks = sorted(set(rows["k"].tolist()))
    margin_ok = bool(np.all(rows["residual"] >= rows["bound"] - 1e-2 * np.abs(rows["bound"])))
    ok = (rows["k"].size == 256 and len(set(rows["hat"].tolist())) == 64 and ks == [0.1, 0.25, 0.5, 0.75]
          and ent["all_pass"] and margin_ok and ent["slack"] == 1e-2)
    assert verdict("A10", ok, f"{rows['k'].size} residuals, worst margin {ent['worst_margin']:.2e}, "
                              f"bound magnitude <= {np.max(np.abs(rows['bound'])):.2e}")


def test_A11_conservation(runs, verdict):
    macro = [runs.report(n)["macro"]["max_conservation_error"] for n in JUNCTIONS + ["generator-steady"]]
    macro += [r["checks"]["max_conservation_error"] for r in runs.report("merge-homogenization")["convergence"]["rows"]]
    macro += [r["checks"]["max_conservation_error"] for r in runs.report("riemann-merge")["convergence"]["rows"]]
    counts = [runs.report(n)["micro"]["vehicle_count_constant"] for n in MICRO_PRESETS]
    for n in MICRO_COMPARE:
        counts += [r["checks"]["vehicle_count_constant"] for r in runs.report(n)["convergence"]["rows"]]
    ok = max(macro) <= CONSERVATION_RTOL and all(counts)
    assert verdict("A11", ok, f"{len(macro)} grid runs, worst relative step error {max(macro):.1e}; "
                              f"{len(counts)} particle runs keep their vehicle count: {all(counts)}")


def test_A12_determinism(runs, tmp_path, verdict):
    differing = []
    for name in sorted(PRESETS):
        first = runs.path(name)
        status, second, _ = runs.run(name, tmp_path)
        assert status == EXIT_OK
        files = sorted(p.name for p in first.iterdir())
        assert files == sorted(p.name for p in second.iterdir())
        differing += [f"{name}/{f}" for f in files if (first / f).read_bytes() != (second / f).read_bytes()]
    ok = not differing
    assert verdict("A12", ok, f"{len(PRESETS)} presets rerun, differing files: {differing or 'none'}")
