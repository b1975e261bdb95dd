"""Experiment orchestration shared by the CLI subcommands.

A TOML config file describes the whole experiment (system, dataset
protocol, per-architecture model shapes, descriptor settings, grid,
weighting, sweep axes). The helpers here turn config sections into
datasets, trained bundles, descriptor fields, densities, and study
tables; studies cache intermediate artifacts keyed by a content hash of
the producing config section plus input hashes.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from . import dataset as ds
from . import density as dst
from . import dynamics as dyn
from . import flops as fa
from . import geometry as geo
from . import ld as ld_mod
from . import reservoir as rc
from . import sympnets as sn
from .bundles import ModelBundle, bundle_net, bundle_reservoir, operator_from_bundle
from .errors import ContractError
from .integrate import SubsampledOperator, wrap_reference
from .kernels import default_threads

SYMPLECTIC_ARCHES = ("sympnet", "henonnet", "ghnn")
ALL_ARCHES = SYMPLECTIC_ARCHES + ("reservoir",)


class Config:
    """Thin dict wrapper with required-key errors and an override hook."""

    def __init__(self, data: dict, path: str | None = None):
        self.data = data
        self.path = path

    @classmethod
    def load(cls, path) -> "Config":
        with open(path, "rb") as fh:
            return cls(tomllib.load(fh), str(path))

    def section(self, name: str, required: bool = True) -> dict:
        if name not in self.data:
            if required:
                raise ContractError(f"config is missing the [{name}] section")
            return {}
        return self.data[name]

    def get(self, key, default=None):
        return self.data.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))


def config_hash(*parts) -> str:
    text = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_manifest(path: Path, kind: str, cfg_hash: str, seed: int, extra: dict | None = None):
    manifest = {"kind": kind, "config_hash": cfg_hash, "seed": seed, "version": __version__}
    manifest.update(extra or {})
    path.write_text(json.dumps(manifest, indent=2))


# ---------------------------------------------------------------------------
# Config-section factories
# ---------------------------------------------------------------------------


def system_from_config(cfg: Config) -> dyn.SystemSpec:
    sec = cfg.section("system")
    name = sec["name"]
    if name == "nls3":
        return dyn.nls3(float(sec.get("k", 0.95)))
    if name == "harmonic":
        return dyn.harmonic(float(sec.get("omega", 1.0)))
    return dyn.duffing()


def dataset_spec_from_config(cfg: Config, seed: int | None = None, n_traj: int | None = None,
                             distribution: str | None = None) -> ds.DatasetSpec:
    sec = cfg.section("dataset")
    sys_spec = system_from_config(cfg)
    return ds.DatasetSpec(
        sys=sys_spec,
        n_traj=int(n_traj if n_traj is not None else sec["n_traj"]),
        distribution=distribution or sec["distribution"],
        horizon=float(sec.get("horizon", 100.0)),
        dt=float(sec.get("dt", 0.1)),
        split=tuple(sec.get("split", (0.8, 0.1, 0.1))),
        seed=cfg.seed if seed is None else seed,
    )


def ld_config_from_config(cfg: Config, **overrides) -> ld_mod.LdConfig:
    sec = dict(cfg.section("ld"))
    sec.update({k: v for k, v in overrides.items() if v is not None})
    return ld_mod.LdConfig(
        tau=float(sec.get("tau", 4.0)),
        dt=float(sec.get("dt", 0.1)),
        c=float(sec.get("c", 0.7)),
    )


def grid_from_config(cfg: Config) -> ld_mod.GridSpec:
    sec = cfg.section("grid")
    return ld_mod.GridSpec(
        axes=(tuple(sec["axis1"]), tuple(sec["axis2"])),
        section_map=sec.get("section", "duffing_qp"),
    )


def weight_from_config(cfg: Config) -> dst.WeightFn:
    return dst.WeightFn.parse(cfg.section("pdf", required=False).get("weight", "1/x"))


def train_config_from_config(cfg: Config, seed: int) -> sn.TrainConfig:
    sec = cfg.section("train", required=False)
    return sn.TrainConfig(
        lr=float(sec.get("lr", 1e-3)),
        beta1=float(sec.get("beta1", 0.9)),
        beta2=float(sec.get("beta2", 0.999)),
        epochs=int(sec.get("epochs", 250)),
        batch_size=int(sec.get("batch_size", 1024)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


def train_symplectic_arch(cfg: Config, arch: str, splits: dict, seed: int):
    """Train one symplectic architecture; returns (bundle, history)."""
    spec = cfg.section("models")[arch]
    sys_spec = system_from_config(cfg)
    params = sn.init_params(arch, int(spec["l"]), int(spec["m"]), sys_spec.n, seed=seed)
    pairs = ds.to_pairs(splits["train"], seed=seed)
    val_pairs = ds.to_pairs(splits["val"], seed=seed) if splits["val"] else None
    tc = train_config_from_config(cfg, seed)
    params, history = sn.train_symplectic(params, pairs, tc, val_pairs=val_pairs)
    dt = float(cfg.section("dataset").get("dt", 0.1))
    meta = {"system": sys_spec.name, "system_params": dict(sys_spec.params),
            "l": int(spec["l"]), "m": int(spec["m"]), "n_train": len(splits["train"])}
    return bundle_net(params, dt, seed=seed, extra_meta=meta), history


def train_reservoir_arch(cfg: Config, splits: dict, seed: int):
    """CMA-ES hyperparameter search plus final two-readout fit."""
    spec = dict(cfg.section("models").get("reservoir", {}))
    sys_spec = system_from_config(cfg)
    dt = float(cfg.section("dataset").get("dt", 0.1))
    base = rc.ReservoirParams(
        N_h=int(spec.get("N_h", 400)),
        mu=float(spec.get("mu", 0.006)),
        N_w=int(spec.get("N_w", 100)),
        seed=seed,
    )
    budget = int(spec.get("budget", 200))
    warm_refine = int(spec.get("warm_refine", 2))
    subset = int(spec.get("search_subset", 40))
    best, fitness, result = rc.cmaes_optimize(
        base,
        splits["train"],
        splits["val"],
        budget=budget,
        seed=seed,
        subset=subset,
        dt=dt,
        warm_refine=warm_refine,
    )
    model = rc.train_full_model(best, splits["train"])
    meta = {"system": sys_spec.name, "system_params": dict(sys_spec.params),
            "n_train": len(splits["train"]), "cmaes_fitness": fitness,
            "warm_refine": warm_refine}
    return bundle_reservoir(model, dt, seed=seed, extra_meta=meta), result


def operator_for(cfg: Config, bundle_or_ref, threads: int | None = None, ld_dt: float | None = None):
    """EvolutionOperator for a bundle, or the reference flow for 'reference'.

    When the requested descriptor stride is an integer multiple of the
    model's native stride, the model is wrapped to emit every k-th step
    (the model itself is unchanged, matching the sampling-stride sweep).
    """
    threads = threads or default_threads()
    if isinstance(bundle_or_ref, str) and bundle_or_ref == "reference":
        dt = ld_dt or float(cfg.section("ld", required=False).get("dt", 0.1))
        return wrap_reference(system_from_config(cfg), dt, threads=threads)
    bundle = bundle_or_ref
    warm = int(bundle.meta.get("warm_refine", 2)) if bundle.arch == "reservoir" else 2
    op = operator_from_bundle(bundle, threads=threads, warm_refine=warm)
    if ld_dt is None or abs(op.dt - ld_dt) <= 1e-12:
        return op
    ratio = ld_dt / op.dt
    every = int(round(ratio))
    if every >= 1 and abs(ratio - every) < 1e-9:
        return SubsampledOperator(op, every)
    raise ContractError(
        f"model stride {op.dt} cannot serve LD dt {ld_dt}; retrain or change dt"
    )


def compare_fields(reference_field, model_fields: dict, weight: dst.WeightFn):
    """KL/JS table rows against the reference density."""
    ref_pdf = dst.ld_to_pdf(reference_field, weight)
    rows = []
    for name in sorted(model_fields):
        pdf = dst.ld_to_pdf(model_fields[name], weight)
        kl, n_floored, floor_value = dst.kl_divergence_info(ref_pdf, pdf)
        js = dst.js_divergence(ref_pdf, pdf)
        n_train = ""
        field = model_fields[name]
        if hasattr(field, "n_train"):
            n_train = field.n_train
        rows.append({"model": name, "n_train": n_train, "kl": kl, "js": js,
                     "n_floored": n_floored})
    rows.sort(key=lambda r: (r["kl"], r["model"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return rows


def sensitivity_cases(cfg: Config, operators: dict, chunk: int = ld_mod.DEFAULT_CHUNK,
                      max_missing_fraction: float = 0.05):
    """All Table-4-style sweep cases from shared multi-(tau, c) rollouts.

    operators maps name -> EvolutionOperator factory taking the LD dt (the
    reference needs a fresh operator per dt; bundles are dt-bound and only
    participate when their stride matches).
    """
    sweep = cfg.section("sweep", required=False)
    base = ld_config_from_config(cfg)
    taus = [float(t) for t in sweep.get("taus", (2.0, 4.0, 6.0, 10.0))]
    dts = [float(d) for d in sweep.get("dts", (0.1, 0.2, 0.4))]
    cs = [float(c) for c in sweep.get("cs", (0.5, 0.7, 1.0))]
    weights = [dst.WeightFn.parse(w) for w in sweep.get("weights", ("x", "1/x", "exp(-0.5x)"))]
    base_weight = weight_from_config(cfg)
    grid = grid_from_config(cfg)

    needed_dts = sorted(set([base.dt] + dts))
    fields = {}  # (name, dt) -> {(tau, c): field}
    for name, op_factory in operators.items():
        for dt in needed_dts:
            tau_list = taus if dt == base.dt else [base.tau]
            c_list = cs if dt == base.dt else [base.c]
            tau_list = sorted(set(tau_list + [base.tau]))
            c_list = list(dict.fromkeys(c_list + [base.c]))
            fields[(name, dt)] = ld_mod.ld_field_multi(
                op_factory(dt), grid, dt, tau_list, c_list, chunk=chunk,
                max_missing_fraction=max_missing_fraction,
            )

    model_names = [n for n in operators if n != "reference"]

    def case(parameter, value, tau, dt, c, weight):
        ref = fields[("reference", dt)][(tau, c)]
        models = {n: fields[(n, dt)][(tau, c)] for n in model_names}
        return (parameter, value, ref, models, weight)

    cases = []
    for tau in taus:
        cases.append(case("tau", tau, tau, base.dt, base.c, base_weight))
    for dt in dts:
        cases.append(case("dt", dt, base.tau, dt, base.c, base_weight))
    for c in cs:
        cases.append(case("c", c, base.tau, base.dt, c, base_weight))
    for w in weights:
        cases.append(case("g", w.label, base.tau, base.dt, base.c, w))
    return cases


def flops_report(cfg: Config):
    sys_name = system_from_config(cfg).name
    table = fa.TABLE_NLS3 if sys_name == "nls3" else fa.TABLE_DUFFING
    return fa.audit_table(table)


def extract_orbit(field: ld_mod.LdField, system_name: str, method: str = "valley"):
    return geo.extract_homoclinic(field, system_name, method=method)


# ---------------------------------------------------------------------------
# Disk cache for study pipelines
# ---------------------------------------------------------------------------


class ArtifactCache:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, key: str, name: str) -> Path:
        sub = self.root / key
        sub.mkdir(parents=True, exist_ok=True)
        return sub / name

    def get_bundle(self, key: str) -> ModelBundle | None:
        path = self.root / key / "model.json"
        return ModelBundle.load(path) if path.exists() else None

    def put_bundle(self, key: str, bundle: ModelBundle):
        bundle.save(self.path(key, "model.json"))

    def get_field(self, key: str) -> ld_mod.LdField | None:
        path = self.root / key / "field.csv"
        return ld_mod.LdField.read_csv(path) if path.exists() else None

    def put_field(self, key: str, field: ld_mod.LdField):
        field.write_csv(self.path(key, "field.csv"))
