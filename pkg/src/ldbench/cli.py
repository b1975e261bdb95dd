"""Command-line pipeline: dataset generation through studies and audits.

    ldbench generate|train|ld|compare|study|flops|extract-orbit
            --config <file> [--threads N] [--seed S] [--out DIR] ...

Exit codes: 0 success, 2 contract/usage errors, 3 numerical failures.
All outputs are CSV files with JSON sidecar manifests carrying the config
hash, seed, and package version; reruns with identical config and seed
reproduce identical payloads.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import density as dst
from . import flops as fa
from . import geometry as geo
from . import ld as ld_mod
from . import pipeline as pl
from . import reservoir as rc
from .bundles import ModelBundle
from .errors import ContractError, LdbenchError, NumericalError
from .kernels import default_threads


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]):
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})


def _out_dir(cfg: pl.Config, args) -> Path:
    out = Path(args.out or cfg.get("out_dir", "runs/out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(cfg: pl.Config, args) -> int:
    return cfg.seed if args.seed is None else int(args.seed)


def _load_splits(cfg: pl.Config, args, out: Path):
    """Load the dataset directory, generating it first if absent."""
    data_dir = Path(getattr(args, "data", None) or out / "dataset")
    if not (data_dir / "manifest.json").exists():
        cmd_generate(cfg, args)
    splits, spec = ds.load_dataset(data_dir)
    return splits, spec


def cmd_generate(cfg: pl.Config, args) -> int:
    out = _out_dir(cfg, args)
    spec = pl.dataset_spec_from_config(cfg, seed=_seed(cfg, args))
    splits = ds.generate(spec)
    ds.save_dataset(splits, spec, out / "dataset")
    counts = {k: len(v) for k, v in splits.items()}
    print(f"dataset written to {out / 'dataset'} ({counts})")
    return 0


def cmd_train(cfg: pl.Config, args) -> int:
    out = _out_dir(cfg, args)
    arch = args.arch
    if arch not in pl.ALL_ARCHES:
        raise ContractError(f"unknown architecture {arch!r}")
    seed = _seed(cfg, args)
    splits, _ = _load_splits(cfg, args, out)
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)
    cfg_hash = pl.config_hash(cfg.section("models").get(arch, {}), cfg.section("dataset"), seed)
    if arch == "reservoir":
        bundle, result = pl.train_reservoir_arch(cfg, splits, seed)
        rows = [{"eval": e, "best_fitness": f} for e, f in result.history]
        _write_csv(models_dir / "reservoir_cmaes.csv", ["eval", "best_fitness"], rows)
    else:
        bundle, history = pl.train_symplectic_arch(cfg, arch, splits, seed)
        rows = [
            {"epoch": e, "train_mse": f"{tr:.17g}", "val_mse": f"{va:.17g}"}
            for e, tr, va in history
        ]
        _write_csv(models_dir / f"{arch}_loss.csv", ["epoch", "train_mse", "val_mse"], rows)
    bundle.save(models_dir / f"{arch}.json")
    pl.write_manifest(models_dir / f"{arch}.manifest.json", "model", cfg_hash, seed,
                      {"arch": arch})
    print(f"trained {arch} -> {models_dir / (arch + '.json')}")
    return 0


def cmd_ld(cfg: pl.Config, args) -> int:
    out = _out_dir(cfg, args)
    seed = _seed(cfg, args)
    threads = args.threads or default_threads()
    ld_cfg = pl.ld_config_from_config(cfg, tau=args.tau, dt=args.ld_dt, c=args.c)
    grid = pl.grid_from_config(cfg)
    fields_dir = out / "fields"
    fields_dir.mkdir(exist_ok=True)

    if args.model:
        bundle = ModelBundle.load(args.model)
        op = pl.operator_for(cfg, bundle, threads=threads, ld_dt=ld_cfg.dt)
        name = args.name or bundle.arch
        extra = {"n_train": bundle.meta.get("n_train", "")}
    else:
        op = pl.operator_for(cfg, "reference", threads=threads, ld_dt=ld_cfg.dt)
        name = args.name or "reference"
        extra = {}
    cfg_hash = pl.config_hash(ld_cfg.to_dict(), grid.to_dict(), name, seed)

    print(f"computing descriptor field for {name} "
          f"({grid.shape[0]}x{grid.shape[1]} nodes, tau={ld_cfg.tau}, threads={threads})")
    field = ld_mod.ld_field(op, grid, ld_cfg)
    path = fields_dir / f"{name}.csv"
    extra.update({"config_hash": cfg_hash, "seed": seed, "field_name": name})
    field.write_csv(path, manifest_extra=extra)

    if args.error_map:
        if not args.model:
            raise ContractError("--error-map needs --model (errors are against the reference)")
        ref_op = pl.operator_for(cfg, "reference", threads=threads, ld_dt=ld_cfg.dt)
        e_hat, e_norm, _ = ld_mod.error_field(op, ref_op, grid, ld_cfg)
        coords = grid.node_coordinates()
        data = np.column_stack([coords, e_hat.ravel(), e_norm.ravel()])
        err_path = fields_dir / f"{name}_error.csv"
        np.savetxt(err_path, data, fmt="%.17g", delimiter=",",
                   header="axis1,axis2,e_hat,e_norm", comments="")
        pl.write_manifest(err_path.with_suffix(".manifest.json"), "error_map",
                          cfg_hash, seed, {"grid": grid.to_dict(), "ld": ld_cfg.to_dict(),
                                           "field_name": name})
    print(f"field written to {path} (missing nodes: {field.n_missing})")
    return 0


def cmd_compare(cfg: pl.Config, args) -> int:
    out = _out_dir(cfg, args)
    seed = _seed(cfg, args)
    weight = pl.weight_from_config(cfg)
    ref_field = ld_mod.LdField.read_csv(args.reference)
    model_fields = {}
    n_train = {}
    import json as json_mod

    for path in args.models:
        path = Path(path)
        manifest = json_mod.loads(path.with_suffix(".manifest.json").read_text())
        name = manifest.get("field_name", path.stem)
        model_fields[name] = ld_mod.LdField.read_csv(path)
        n_train[name] = manifest.get("n_train", "")
    rows = pl.compare_fields(ref_field, model_fields, weight)
    for row in rows:
        row["n_train"] = n_train.get(row["model"], "")
    pdf_dir = out / "pdfs"
    pdf_dir.mkdir(exist_ok=True)
    for name, field in [("reference", ref_field)] + sorted(model_fields.items()):
        pdf = dst.ld_to_pdf(field, weight)
        coords = field.grid.node_coordinates()
        data = np.column_stack([coords, pdf.density.ravel()])
        pdf_path = pdf_dir / f"{name}.csv"
        np.savetxt(pdf_path, data, fmt="%.17g", delimiter=",",
                   header="axis1,axis2,density", comments="")
        pl.write_manifest(pdf_path.with_suffix(".manifest.json"), "pdf",
                          pl.config_hash(name, weight.label), seed,
                          {"field_name": name, "weight": weight.label,
                           "grid": field.grid.to_dict()})
    path = out / "compare.csv"
    _write_csv(path, ["model", "n_train", "kl", "js", "rank"], rows)
    pl.write_manifest(path.with_suffix(".manifest.json"), "compare",
                      pl.config_hash([str(p) for p in args.models], weight.label), seed,
                      {"weight": weight.label})
    for row in rows:
        print(f"{row['rank']}: {row['model']}  KL={row['kl']:.3e}  JS={row['js']:.3e}")
    return 0


def _trained_bundle(cfg, arch, splits, seed, cache, key_extra=""):
    key = "model-" + pl.config_hash(arch, cfg.section("models").get(arch, {}),
                                    cfg.section("train", required=False),
                                    len(splits["train"]), seed, key_extra)
    bundle = cache.get_bundle(key)
    if bundle is None:
        if arch == "reservoir":
            bundle, _ = pl.train_reservoir_arch(cfg, splits, seed)
        else:
            bundle, _ = pl.train_symplectic_arch(cfg, arch, splits, seed)
        cache.put_bundle(key, bundle)
    return bundle


def _field_for(cfg, name, op, grid, ld_cfg, cache, key_extra=""):
    key = "field-" + pl.config_hash(name, grid.to_dict(), ld_cfg.to_dict(), key_extra)
    field = cache.get_field(key)
    if field is None:
        field = ld_mod.ld_field(op, grid, ld_cfg)
        cache.put_field(key, field)
    return field


def cmd_study(cfg: pl.Config, args) -> int:
    out = _out_dir(cfg, args)
    seed = _seed(cfg, args)
    threads = args.threads or default_threads()
    axis = args.axis
    cache = pl.ArtifactCache(out / "cache")
    grid = pl.grid_from_config(cfg)
    ld_cfg = pl.ld_config_from_config(cfg)
    weight = pl.weight_from_config(cfg)
    study = cfg.section("study", required=False)

    if axis == "sensitivity":
        splits, _ = _load_splits(cfg, args, out)
        operators = {"reference": lambda dt: pl.operator_for(cfg, "reference", threads, dt)}
        for arch in _study_arches(cfg):
            bundle = _trained_bundle(cfg, arch, splits, seed, cache)
            operators[arch] = (
                lambda dt, b=bundle: pl.operator_for(cfg, b, threads=threads, ld_dt=dt)
            )
        cases = pl.sensitivity_cases(cfg, operators)
        rows = dst.sensitivity_sweep(cases)
        path = out / "study_sensitivity.csv"
        _write_csv(path, ["parameter", "value", "model", "kl", "rank"], rows)
    elif axis in ("data_size", "distribution"):
        sizes = [int(s) for s in study.get("data_sizes", (50, 200))]
        if axis == "distribution":
            distributions = list(study.get("distributions",
                                           ("nls_uniform", "nls_inside_only", "nls_outside_only")))
        else:
            distributions = [cfg.section("dataset")["distribution"]]
        ref_op = pl.operator_for(cfg, "reference", threads=threads, ld_dt=ld_cfg.dt)
        ref_field = _field_for(cfg, "reference", ref_op, grid, ld_cfg, cache)
        ref_pdf = dst.ld_to_pdf(ref_field, weight)
        rows = []
        for distribution in distributions:
            pool_spec = pl.dataset_spec_from_config(
                cfg, seed=seed, n_traj=max(sizes), distribution=distribution
            )
            pool = ds.generate(pool_spec)
            all_trajs = pool["train"] + pool["val"] + pool["test"]
            for size in sizes:
                chosen = ds.subsample(all_trajs, size, seed=seed)
                n_train, n_val, _ = ds.split_counts(size, pool_spec.split)
                splits = {
                    "train": chosen[:n_train],
                    "val": chosen[n_train : n_train + n_val],
                    "test": chosen[n_train + n_val :],
                }
                for arch in _study_arches(cfg):
                    key_extra = f"{distribution}-{size}"
                    bundle = _trained_bundle(cfg, arch, splits, seed, cache, key_extra)
                    op = pl.operator_for(cfg, bundle, threads=threads, ld_dt=ld_cfg.dt)
                    field = _field_for(cfg, arch, op, grid, ld_cfg, cache, key_extra)
                    kl = dst.kl_divergence(ref_pdf, dst.ld_to_pdf(field, weight))
                    rows.append({"distribution": distribution, "n_train": size,
                                 "model": arch, "kl": kl})
        for group in {(r["distribution"], r["n_train"]) for r in rows}:
            members = [r for r in rows if (r["distribution"], r["n_train"]) == group]
            members.sort(key=lambda r: (r["kl"], r["model"]))
            for rank, r in enumerate(members, start=1):
                r["rank"] = rank
        rows.sort(key=lambda r: (r["distribution"], r["n_train"], r["rank"]))
        path = out / f"study_{axis}.csv"
        _write_csv(path, ["distribution", "n_train", "model", "kl", "rank"], rows)
    else:
        raise ContractError(f"unknown study axis {axis!r}")
    pl.write_manifest(path.with_suffix(".manifest.json"), f"study_{axis}",
                      pl.config_hash(axis, study, seed), seed)
    print(f"study written to {path}")
    return 0


def _study_arches(cfg: pl.Config):
    return [a for a in pl.ALL_ARCHES if a in cfg.section("models")]


def cmd_flops(cfg: pl.Config, args) -> int:
    out = _out_dir(cfg, args)
    report = pl.flops_report(cfg)
    path = out / "flops.csv"
    fa.write_audit_csv(report, path)
    pl.write_manifest(path.with_suffix(".manifest.json"), "flops",
                      pl.config_hash("flops"), _seed(cfg, args))
    bad = [r for r in report if not r["match"]]
    for r in report:
        print(f"{r['arch']:10s} flops={r['flops']} expected={r['expected']} match={r['match']}")
    return 0 if not bad else 3


def cmd_extract_orbit(cfg: pl.Config, args) -> int:
    out = _out_dir(cfg, args)
    field = ld_mod.LdField.read_csv(args.field)
    system = pl.system_from_config(cfg).name
    polys = geo.extract_homoclinic(field, system, method=args.method)
    name = Path(args.field).stem
    path = out / f"orbit_{name}.csv"
    geo.write_polylines_csv(polys, path)
    pl.write_manifest(path.with_suffix(".manifest.json"), "orbit",
                      pl.config_hash(str(args.field), args.method), _seed(cfg, args),
                      {"components": len(polys), "field_name": name})
    print(f"extracted {len(polys)} component(s) -> {path}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "ld": cmd_ld,
    "compare": cmd_compare,
    "study": cmd_study,
    "flops": cmd_flops,
    "extract-orbit": cmd_extract_orbit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldbench",
        description="Lagrangian-descriptor benchmarking of learned Hamiltonian surrogates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")

    common(sub.add_parser("generate", help="generate and store the trajectory dataset"))

    p = sub.add_parser("train", help="train one architecture")
    common(p)
    p.add_argument("--arch", required=True, choices=pl.ALL_ARCHES)
    p.add_argument("--data", default=None, help="dataset directory (default <out>/dataset)")

    p = sub.add_parser("ld", help="compute a descriptor field")
    common(p)
    p.add_argument("--model", default=None, help="model bundle path (default: reference flow)")
    p.add_argument("--name", default=None, help="field name override")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--ld-dt", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--error-map", action="store_true",
                   help="also write the trajectory-error map against the reference")

    p = sub.add_parser("compare", help="divergence table between field CSVs")
    common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--models", nargs="+", required=True)

    p = sub.add_parser("study", help="data-size / distribution / sensitivity studies")
    common(p)
    p.add_argument("--axis", required=True, choices=["data_size", "distribution", "sensitivity"])
    p.add_argument("--data", default=None)

    common(sub.add_parser("flops", help="reproduce the published FLOP tables"))

    p = sub.add_parser("extract-orbit", help="extract the homoclinic orbit from a field CSV")
    common(p)
    p.add_argument("--field", required=True)
    p.add_argument("--method", default="valley", choices=["valley", "level"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = pl.Config.load(args.config)
        return COMMANDS[args.command](cfg, args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LdbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
