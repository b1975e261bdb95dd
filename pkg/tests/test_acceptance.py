"""Acceptance gate: every primary criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -s` to see one pass/fail line
per criterion. Wall-clock budgets are stated for 8 cores; on smaller
machines they are scaled by 8 / cpu_count.

The heavy shared state (the 200-trajectory Duffing benchmark: trained
models over five seeds, descriptor fields, divergences, sweeps) is built
once per session by fixtures and reused across criteria.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from ldbench import dataset as ds
from ldbench import density as dst
from ldbench import dynamics as dyn
from ldbench import flops as fa
from ldbench import geometry as geo
from ldbench import ld as ld_mod
from ldbench import pipeline as pl
from ldbench import reservoir as rc
from ldbench import sympnets as sn
from ldbench.cmaes import cmaes_minimize
from ldbench.integrate import integrate_reference, wrap_reference
from ldbench.kernels import BACKEND, default_threads

CORES = os.cpu_count() or 1
BUDGET_SCALE = max(1.0, 8.0 / CORES)
THREADS = default_threads()

DATASET_SEED = 1000
RERUN_SEEDS = (101, 202, 303, 404, 505)

DUFFING_GRID = ld_mod.GridSpec(axes=(("q", -1.5, 1.5, 400), ("p", -0.8, 0.8, 400)))
BASE_LD = ld_mod.LdConfig(tau=4.0, dt=0.1, c=0.7)
WEIGHT = dst.WeightFn.parse("1/x")


def report(name: str, ok: bool, detail: str):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _duffing_config() -> pl.Config:
    return pl.Config(
        {
            "seed": DATASET_SEED,
            "system": {"name": "duffing"},
            "dataset": {
                "n_traj": 200,
                "horizon": 100.0,
                "dt": 0.1,
                "split": [0.8, 0.1, 0.1],
                "distribution": "duffing_uniform_q0",
            },
            "train": {"epochs": 250, "lr": 1e-3, "batch_size": 256},
            "models": {
                "sympnet": {"l": 10, "m": 50},
                "henonnet": {"l": 10, "m": 50},
                "ghnn": {"l": 3, "m": 15},
                "reservoir": {
                    "N_h": 400, "mu": 0.006, "N_w": 50, "budget": 200,
                    "warm_refine": 2, "search_subset": 40,
                },
            },
            "ld": {"tau": 4.0, "dt": 0.1, "c": 0.7},
            "grid": {"axis1": ["q", -1.5, 1.5, 400], "axis2": ["p", -0.8, 0.8, 400],
                     "section": "duffing_qp"},
            "pdf": {"weight": "1/x"},
            "sweep": {"taus": [2.0, 4.0, 6.0, 10.0], "dts": [0.1, 0.2, 0.4],
                      "cs": [0.5, 0.7, 1.0], "weights": ["x", "1/x", "exp(-0.5x)"]},
        }
    )


@pytest.fixture(scope="session")
def duffing_dataset():
    cfg = _duffing_config()
    spec = pl.dataset_spec_from_config(cfg, seed=DATASET_SEED)
    return cfg, ds.generate(spec)


@pytest.fixture(scope="session")
def reference_field(duffing_dataset):
    """Reference Duffing descriptor field at the paper grid, timed."""
    cfg, _ = duffing_dataset
    op = wrap_reference(dyn.duffing(), BASE_LD.dt, threads=THREADS)
    t0 = time.perf_counter()
    field = ld_mod.ld_field(op, DUFFING_GRID, BASE_LD)
    elapsed = time.perf_counter() - t0
    return field, elapsed


@pytest.fixture(scope="session")
def baseline(duffing_dataset, reference_field):
    """Trained models and descriptor fields for the Table-2 reproduction.

    Seed RERUN_SEEDS[0] trains all four architectures; the remaining four
    seeds retrain the pair under statistical test (HenonNet vs reservoir).
    """
    cfg, splits = duffing_dataset
    ref_field, _ = reference_field
    ref_pdf = dst.ld_to_pdf(ref_field, WEIGHT)
    t_start = time.perf_counter()
    bundles = {}
    kls = {}
    timings = {}
    for i, seed in enumerate(RERUN_SEEDS):
        arches = pl.ALL_ARCHES if i == 0 else ("henonnet", "reservoir")
        for arch in arches:
            t0 = time.perf_counter()
            if arch == "reservoir":
                bundle, _ = pl.train_reservoir_arch(cfg, splits, seed)
            else:
                bundle, _ = pl.train_symplectic_arch(cfg, arch, splits, seed)
            t_train = time.perf_counter() - t0
            op = pl.operator_for(cfg, bundle, threads=THREADS, ld_dt=BASE_LD.dt)
            t0 = time.perf_counter()
            # a marginal seed may lose nodes to divergence; the KL decides quality
            field = ld_mod.ld_field(op, DUFFING_GRID, BASE_LD, max_missing_fraction=0.5)
            t_field = time.perf_counter() - t0
            kl = dst.kl_divergence(ref_pdf, dst.ld_to_pdf(field, WEIGHT))
            bundles[(seed, arch)] = bundle
            kls[(seed, arch)] = kl
            timings[(seed, arch)] = (t_train, t_field)
            print(f"\n  [baseline] seed={seed} {arch}: KL={kl:.3e} "
                  f"(train {t_train:.0f}s, field {t_field:.0f}s)")
    total = time.perf_counter() - t_start
    return {"cfg": cfg, "bundles": bundles, "kls": kls, "total_seconds": total,
            "ref_pdf": ref_pdf, "ref_field": ref_field}


class TestFlopTables:
    def test_flop_tables_exact(self):
        t0 = time.perf_counter()
        duffing = [fa.flops(s) for s, _ in fa.TABLE_DUFFING]
        nls = [fa.flops(s) for s, _ in fa.TABLE_NLS3]
        elapsed = time.perf_counter() - t0
        ok = duffing == [6000, 6020, 6120, 6318] and nls == [10000, 10040, 10800, 9996] \
            and elapsed < 1.0
        report("FLOP tables exact", ok,
               f"Duffing {duffing}, NLS {nls}, runtime {elapsed * 1e3:.1f} ms")


class TestParameterCounts:
    def test_parameter_counts(self):
        t1 = [
            sn.count_parameters(sn.init_params("sympnet", 10, 50, 1)),
            sn.count_parameters(sn.init_params("henonnet", 10, 50, 1)),
            sn.count_parameters(sn.init_params("ghnn", 3, 15, 1)),
            2 * 400,  # reservoir trainable readout N_u * N_h
        ]
        t3 = [
            sn.count_parameters(sn.init_params("sympnet", 10, 50, 2)),
            sn.count_parameters(sn.init_params("henonnet", 10, 50, 2)),
        ]
        ok = t1 == [3000, 755, 1710, 800] and t3 == [4000, 1010]
        report("Parameter counts exact", ok,
               f"Table 1 {t1}, Table 3 SympNet/HenonNet {t3} "
               "(GHNN/RC Table-3 counts are paper-inconsistent and excluded)")


class TestHarmonicOracle:
    def test_harmonic_ld_closed_form(self):
        t0 = time.perf_counter()
        tau = 100.0 * math.pi
        dt = tau / 3142
        op = wrap_reference(dyn.harmonic(1.0), dt, threads=THREADS)
        s0 = np.array([-1.0, 0.0])  # H = 1/2 at omega = 1

        def closed_form(c):
            return (8.0 * 2.0 ** (c / 2) / (c * math.sqrt(math.pi))
                    * math.gamma((c + 1) / 2) / math.gamma(c / 2) * 0.5 ** (c / 2))

        errs = {}
        for c in (1.0, 0.7):
            cfg = ld_mod.LdConfig(tau=tau, dt=dt, c=c)
            total, _, _ = ld_mod.ld_point(op, s0, cfg)
            target = closed_form(c)
            errs[c] = abs(total / tau - target) / target
        elapsed = time.perf_counter() - t0
        ok = errs[1.0] < 0.01 and errs[0.7] < 0.02 and elapsed < 10.0 * BUDGET_SCALE
        report("Harmonic-oscillator LD oracle", ok,
               f"relative errors c=1: {errs[1.0]:.2%} (<1%), c=0.7: {errs[0.7]:.2%} (<2%), "
               f"8/pi target, runtime {elapsed:.1f}s")


class TestConservation:
    def test_energy_and_power_drift(self):
        sys_d = dyn.duffing()
        traj = integrate_reference(sys_d, dyn.PhaseState.from_vector([1.2, 0.0]),
                                   (0.0, 100.0), 0.1)
        h = dyn.hamiltonian_batch(sys_d, traj.states)
        duffing_drift = float(np.max(np.abs(h - h[0])))
        sys_n = dyn.nls3(0.95)
        s0 = dyn.polar_to_cartesian(dyn.PolarState(0.4, 0.4))
        traj_n = integrate_reference(sys_n, s0, (0.0, 100.0), 0.1)
        power_drift = float(np.max(np.abs(np.sum(traj_n.states**2, axis=1) - 1.0)))
        ok = duffing_drift < 1e-8 and power_drift < 1e-9
        report("Conservation", ok,
               f"Duffing energy drift {duffing_drift:.2e} (<1e-8), "
               f"NLS power drift {power_drift:.2e} (<1e-9)")


class TestSymplecticStructure:
    def _models(self):
        rng = np.random.default_rng(77)
        models = []
        for arch, l, m in (("sympnet", 10, 50), ("henonnet", 10, 50), ("ghnn", 3, 15)):
            params = sn.init_params(arch, l, m, 1, seed=5)
            if arch != "henonnet":
                # sympnet/ghnn initialize at the exact identity (a = 0);
                # perturb so the symplecticity check is not vacuous. The
                # henon init already carries random a at a scale that keeps
                # the 20-map composition numerically tame.
                params.a[:] = rng.normal(0.0, 0.3, size=params.a.shape)
            models.append((f"random-{arch}", params))
        spec = ds.DatasetSpec(sys=dyn.duffing(), n_traj=8, horizon=10.0,
                              distribution="duffing_uniform_q0", seed=9)
        splits = ds.generate(spec)
        pairs = ds.to_pairs(splits["train"], seed=9)
        for arch, l, m in (("sympnet", 4, 12), ("henonnet", 4, 12), ("ghnn", 2, 8)):
            params = sn.init_params(arch, l, m, 1, seed=6)
            sn.train_symplectic(params, pairs, sn.TrainConfig(epochs=20, batch_size=256, seed=6))
            models.append((f"trained-{arch}", params))
        return models

    def test_invertibility_and_symplecticity(self):
        rng = np.random.default_rng(42)
        worst_rt = 0.0
        worst_res = 0.0
        for name, params in self._models():
            states = rng.normal(0.0, 1.0, size=(1000, 2))
            fwd = sn.forward_batch(params, states, +1)
            back = sn.forward_batch(params, fwd, -1)
            worst_rt = max(worst_rt, float(np.max(np.abs(back - states))))
            op = sn.SymplecticNetOperator(params, dt=0.1)
            for _ in range(100):
                s = dyn.PhaseState.from_vector(rng.normal(0.0, 1.0, size=2))
                worst_res = max(worst_res, sn.jacobian_symplecticity_residual(op, s))
        ok = worst_rt < 1e-12 and worst_res < 1e-6
        report("Symplectic structure", ok,
               f"max round-trip error {worst_rt:.2e} (<1e-12, 1000 states x 6 models), "
               f"max FD symplecticity residual {worst_res:.2e} (<1e-6, 100 states)")


class TestHomoclinicGeometry:
    def test_duffing_extraction(self, reference_field):
        field, elapsed = reference_field
        polys = geo.extract_homoclinic(field, "duffing")
        dq, dp = DUFFING_GRID.cell_sizes()
        qs = np.linspace(-math.sqrt(2), math.sqrt(2), 8001)
        ps = qs * np.sqrt(np.maximum(0.0, 1.0 - qs**2 / 2))
        analytic = [
            geo.Polyline(np.column_stack([qs / dq, ps / dp])),
            geo.Polyline(np.column_stack([qs / dq, -ps / dp])),
        ]
        scaled = [geo.Polyline(p.points / [dq, dp], p.closed) for p in polys]
        dist = float(geo._one_sided(scaled, analytic).max())
        budget = 600.0 * BUDGET_SCALE
        ok = dist < 2.0 and 1 <= len(polys) <= 2 and elapsed < budget
        report("Homoclinic geometry (Duffing)", ok,
               f"max vertex distance {dist:.2f} cells (<2), components {len(polys)}, "
               f"field runtime {elapsed:.0f}s (<{budget:.0f}s scaled)")

    def test_nls_polar_extraction(self):
        k = 0.95
        grid = ld_mod.GridSpec(
            axes=(("eta", 1.0 / 500, 1.0, 499), ("phi", -math.pi, math.pi, 200)),
            section_map="nls_eta_phi",
        )
        ev, pv = np.meshgrid(grid.axis_values(0), grid.axis_values(1), indexing="ij")
        h3 = dyn.nls3_reduced_hamiltonian_batch(ev, pv, k)
        polys = geo.extract_homoclinic((h3, grid), "nls3", method="level")
        de, dphi = grid.cell_sizes()
        etas = np.linspace(1e-6, 0.9999, 40001)
        c2 = (0.75 * etas**2 - 0.5 * (1 - k * k) * etas) / (etas * (1 - etas))
        mask = np.abs(c2) <= 1.0
        etas, c2 = etas[mask], c2[mask]
        phis = 0.5 * np.arccos(np.clip(c2, -1, 1))
        branches = []
        for sgn in (1, -1):
            for base in (0.0, math.pi, -math.pi):
                phi_b = sgn * phis + base
                m = (phi_b >= -math.pi) & (phi_b <= math.pi)
                if m.sum() > 1:
                    branches.append(
                        geo.Polyline(np.column_stack([etas[m] / de, phi_b[m] / dphi]))
                    )
        scaled = [geo.Polyline(p.points / [de, dphi], p.closed) for p in polys]
        dist = float(geo._one_sided(scaled, branches).max())
        ok = dist < 2.0
        report("Homoclinic geometry (NLS polar)", ok,
               f"max vertex distance {dist:.2f} cells (<2) against the cos(2phi) curve")


class TestDivergenceAxioms:
    def test_axioms_and_hand_example(self):
        grid = ld_mod.GridSpec(axes=(("a", 0.0, 1.0, 2), ("b", 0.0, 1.0, 2)))
        area = grid.cell_area()
        rng = np.random.default_rng(3)
        kl_min = np.inf
        js_max = 0.0
        sym_fail = 0
        for _ in range(1000):
            pa = rng.uniform(0.01, 1.0, (2, 2))
            pb = rng.uniform(0.01, 1.0, (2, 2))
            rho = dst.WeightedPdf(grid, pa / (pa.sum() * area), 1.0)
            rho_hat = dst.WeightedPdf(grid, pb / (pb.sum() * area), 1.0)
            kl_min = min(kl_min, dst.kl_divergence(rho, rho_hat))
            js = dst.js_divergence(rho, rho_hat)
            js_max = max(js_max, js)
            if dst.js_divergence(rho_hat, rho) != js:
                sym_fail += 1
            if dst.kl_divergence(rho, rho) != 0.0:
                sym_fail += 1
        p = dst.WeightedPdf(grid, np.array([[0.5, 0.5], [0.0, 0.0]]), 1.0)
        q = dst.WeightedPdf(grid, np.array([[0.25, 0.75], [0.0, 0.0]]), 1.0)
        hand = dst.kl_divergence(p, q)
        ok = (kl_min >= 0.0 and js_max <= math.log(2) + 1e-12 and sym_fail == 0
              and abs(hand - 0.14384) < 1e-5 and abs(hand - (0.5 * math.log(4 / 3))) < 1e-6)
        report("Divergence axioms", ok,
               f"min KL {kl_min:.2e} (>=0), max JS {js_max:.4f} (<=ln2), "
               f"symmetry/identity failures {sym_fail}, hand KL {hand:.6f} (0.143841 +- 1e-6)")


class TestTable2Reproduction:
    def test_desk_scale_table2(self, baseline):
        kls = baseline["kls"]
        seed0 = RERUN_SEEDS[0]
        first = {arch: kls[(seed0, arch)] for arch in pl.ALL_ARCHES}
        all_small = all(v < 5e-2 for v in first.values())
        wins = sum(
            1 for seed in RERUN_SEEDS if kls[(seed, "henonnet")] > kls[(seed, "reservoir")]
        )
        budget = 7200.0 * BUDGET_SCALE
        runtime_ok = baseline["total_seconds"] < budget
        ok = all_small and wins >= 4 and runtime_ok
        detail = (
            "KL(seed0): "
            + ", ".join(f"{a}={first[a]:.2e}" for a in pl.ALL_ARCHES)
            + f"; all < 5e-2: {all_small}; HenonNet > RC in {wins}/5 reruns (>=4); "
            + f"runtime {baseline['total_seconds']:.0f}s (<{budget:.0f}s scaled)"
        )
        report("Desk-scale Table 2 reproduction", ok, detail)


@pytest.fixture(scope="session")
def sensitivity_rows(baseline):
    cfg = baseline["cfg"]
    seed0 = RERUN_SEEDS[0]
    operators = {"reference": lambda dt: pl.operator_for(cfg, "reference", THREADS, dt)}
    for arch in pl.ALL_ARCHES:
        bundle = baseline["bundles"][(seed0, arch)]
        operators[arch] = (
            lambda dt, b=bundle: pl.operator_for(cfg, b, threads=THREADS, ld_dt=dt)
        )
    cases = pl.sensitivity_cases(cfg, operators, max_missing_fraction=0.5)
    return dst.sensitivity_sweep(cases)


class TestSensitivityRanking:
    def test_ranking_stability(self, sensitivity_rows):
        settings = {}
        for row in sensitivity_rows:
            settings.setdefault((row["parameter"], str(row["value"])), []).append(row)
        orders = {
            key: tuple(r["model"] for r in sorted(rows, key=lambda r: r["rank"]))
            for key, rows in settings.items()
        }
        baseline_order = orders[("tau", "4.0")]
        matches = sum(1 for order in orders.values() if order == baseline_order)
        total = len(orders)
        ok = matches >= math.ceil(0.9 * total)
        report("Sensitivity ranking stability", ok,
               f"baseline order {baseline_order}; identical in {matches}/{total} settings "
               f"(>= {math.ceil(0.9 * total)})")


class TestEchoStateProperty:
    def test_hidden_state_contraction(self):
        params = rc.ReservoirParams(rho=0.9)
        model = rc.ReservoirModel(params, 2)
        rng = np.random.default_rng(8)
        inputs = rng.uniform(-1.0, 1.0, size=(200, 2))
        xa = rng.normal(size=params.N_h)
        xb = rng.normal(size=params.N_h)
        for u in inputs:
            xa = rc.reservoir_step(model, xa, u)
            xb = rc.reservoir_step(model, xb, u)
        gap = float(np.linalg.norm(xa - xb))
        ok = gap < 1e-6
        report("RC echo-state property", ok,
               f"hidden-state distance after 200 shared inputs: {gap:.2e} (<1e-6, rho=0.9)")


class TestCmaesSelfTest:
    def test_quadratic_convergence(self):
        target = np.array([0.7, -1.3, 2.2, 0.05])

        def quadratic(x):
            return float(np.sum((x - target) ** 2))

        result = cmaes_minimize(quadratic, np.zeros(4), 1.0, budget=2000, seed=1)
        dist = float(np.linalg.norm(result.x_best - target))
        ok = dist < 1e-6 and result.n_evals <= 2000
        report("CMA-ES core self-test", ok,
               f"distance to optimum {dist:.2e} (<1e-6) in {result.n_evals} evaluations (<=2000)")


class TestSecondaryFigures:
    def test_render_all_from_baseline_artifacts(self, baseline, sensitivity_rows,
                                                tmp_path_factory):
        try:
            from ldbench_figs import render_all
        except ImportError:
            pytest.skip("figures package not installed")
        run_dir = tmp_path_factory.mktemp("run")
        cfg = baseline["cfg"]
        seed0 = RERUN_SEEDS[0]
        ref_field = baseline["ref_field"]

        (run_dir / "fields").mkdir()
        ref_field.write_csv(run_dir / "fields" / "reference.csv",
                            manifest_extra={"field_name": "reference"})
        (run_dir / "pdfs").mkdir()
        model_fields = {}
        for arch in pl.ALL_ARCHES:
            bundle = baseline["bundles"][(seed0, arch)]
            op = pl.operator_for(cfg, bundle, threads=THREADS, ld_dt=BASE_LD.dt)
            small_grid = ld_mod.GridSpec(
                axes=(("q", -1.5, 1.5, 120), ("p", -0.8, 0.8, 120))
            )
            model_fields[arch] = ld_mod.ld_field(op, small_grid, BASE_LD,
                                                 max_missing_fraction=0.5)
        small_ref = ld_mod.ld_field(
            wrap_reference(dyn.duffing(), BASE_LD.dt, threads=THREADS),
            ld_mod.GridSpec(axes=(("q", -1.5, 1.5, 120), ("p", -0.8, 0.8, 120))),
            BASE_LD,
        )
        for name, field in [("reference", small_ref)] + list(model_fields.items()):
            pdf = dst.ld_to_pdf(field, WEIGHT)
            coords = field.grid.node_coordinates()
            np.savetxt(run_dir / "pdfs" / f"{name}.csv",
                       np.column_stack([coords, pdf.density.ravel()]),
                       fmt="%.17g", delimiter=",", header="axis1,axis2,density",
                       comments="")
            (run_dir / "pdfs" / f"{name}.manifest.json").write_text(
                json.dumps({"kind": "pdf", "field_name": name}))
        # orbit overlays: reference from the analytic curve grid, models from fields
        polys = geo.extract_homoclinic(ref_field, "duffing")
        geo.write_polylines_csv(polys, run_dir / "orbit_reference.csv")
        (run_dir / "orbit_reference.manifest.json").write_text(
            json.dumps({"kind": "orbit", "field_name": "reference"}))
        for arch, field in model_fields.items():
            try:
                polys = geo.extract_homoclinic(field, "duffing")
            except Exception:
                polys = geo.extract_homoclinic(field, "duffing", method="level",
                                               min_component_length=4)
            geo.write_polylines_csv(polys, run_dir / f"orbit_{arch}.csv")
            (run_dir / f"orbit_{arch}.manifest.json").write_text(
                json.dumps({"kind": "orbit", "field_name": arch}))
        (run_dir / "models").mkdir()
        spec = ds.DatasetSpec(sys=dyn.duffing(), n_traj=6, horizon=5.0,
                              distribution="duffing_uniform_q0", seed=4)
        splits = ds.generate(spec)
        pairs = ds.to_pairs(splits["train"], seed=4)
        for arch in ("sympnet", "henonnet", "ghnn"):
            params = sn.init_params(arch, 2, 6, 1, seed=4)
            _, history = sn.train_symplectic(
                params, pairs, sn.TrainConfig(epochs=5, batch_size=64, seed=4),
                val_pairs=pairs)
            with open(run_dir / "models" / f"{arch}_loss.csv", "w") as fh:
                fh.write("epoch,train_mse,val_mse\n")
                for e, tr, va in history:
                    fh.write(f"{e},{tr:.17g},{va:.17g}\n")
        op = pl.operator_for(cfg, baseline["bundles"][(seed0, "sympnet")],
                             threads=THREADS, ld_dt=BASE_LD.dt)
        small = ld_mod.GridSpec(axes=(("q", -1.5, 1.5, 40), ("p", -0.8, 0.8, 30)))
        e_hat, e_norm, _ = ld_mod.error_field(
            op, wrap_reference(dyn.duffing(), BASE_LD.dt, threads=THREADS), small, BASE_LD)
        coords = small.node_coordinates()
        np.savetxt(run_dir / "fields" / "sympnet_error.csv",
                   np.column_stack([coords, e_hat.ravel(), e_norm.ravel()]),
                   fmt="%.17g", delimiter=",", header="axis1,axis2,e_hat,e_norm",
                   comments="")
        with open(run_dir / "study_sensitivity.csv", "w") as fh:
            fh.write("parameter,value,model,kl,rank\n")
            for row in sensitivity_rows:
                fh.write(f"{row['parameter']},{row['value']},{row['model']},"
                         f"{row['kl']:.17g},{row['rank']}\n")

        out_dir = tmp_path_factory.mktemp("figs")
        produced, warnings = render_all(run_dir, out_dir)
        names = {p.name for p in produced}
        expected = {"ld3d.png", "pdf_grid.png", "homoclinic_overlay.png",
                    "loss_curves.png", "error_map.png", "sensitivity_slices.png"}
        overlay_inputs = len(list(run_dir.glob("orbit_*.csv")))
        ok = expected <= names and not warnings and overlay_inputs == 5
        report("Figure regeneration (secondary)", ok,
               f"figures {sorted(names)}; warnings {warnings}; overlay curves {overlay_inputs}")
