"""Figure recipes over the benchmark's documented CSV schemas.

Every recipe consumes CSV artifacts (plus their JSON manifests for
discovery) and renders one deterministic PNG: fixed DPI, fixed colormaps,
no timestamps, and no numeric re-interpretation beyond plotting
transforms (the color scales show the CSV values as they are).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150
MODEL_STYLES = {
    "reference": {"color": "#1f4e9c", "linestyle": "--"},
    "sympnet": {"color": "#c03028", "linestyle": ":"},
    "henonnet": {"color": "#2e7d32", "linestyle": "-."},
    "ghnn": {"color": "#6a1b9a", "linestyle": "-."},
    "reservoir": {"color": "#e07a1f", "linestyle": "--"},
}

RECIPES = ("ld3d", "pdf_grid", "homoclinic_overlay", "loss_curves", "error_map",
           "sensitivity_slices")


class SchemaError(ValueError):
    pass


@dataclass
class FigureRecipe:
    figure_id: str
    inputs: list
    out_path: Path
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.figure_id not in RECIPES:
            raise SchemaError(f"unknown recipe {self.figure_id!r}")
        self.inputs = [Path(p) for p in self.inputs]
        self.out_path = Path(self.out_path)


def _read_csv(path: Path, required: tuple) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing} (header {header})")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def _grid_arrays(cols):
    """Reshape flat axis1-major columns back into a (n1, n2) grid."""
    a1 = cols["axis1"]
    a2 = cols["axis2"]
    n2 = int(np.count_nonzero(a1 == a1[0]))
    n1 = a1.size // n2
    x = a1.reshape(n1, n2)
    y = a2.reshape(n1, n2)
    return x, y, (n1, n2)


def _name_of(path: Path) -> str:
    manifest = path.with_suffix(".manifest.json")
    if manifest.exists():
        info = json.loads(manifest.read_text())
        if "field_name" in info:
            return info["field_name"]
    return path.stem


def _style(name: str):
    return MODEL_STYLES.get(name, {"color": "k", "linestyle": "-"})


def _save(fig, out_path: Path):
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    return out_path


def _render_ld3d(recipe: FigureRecipe):
    cols = _read_csv(recipe.inputs[0], ("axis1", "axis2", "ld_total", "ld_fwd", "ld_bwd"))
    x, y, shape = _grid_arrays(cols)
    z = cols["ld_total"].reshape(shape)
    fig = plt.figure(figsize=(11, 4.5))
    ax3 = fig.add_subplot(1, 2, 1, projection="3d")
    stride = max(1, shape[0] // 120)
    ax3.plot_surface(x[::stride, ::stride], y[::stride, ::stride], z[::stride, ::stride],
                     cmap="viridis", linewidth=0, antialiased=False)
    ax3.set_xlabel("axis1")
    ax3.set_ylabel("axis2")
    ax3.set_title("descriptor field")
    ax2 = fig.add_subplot(1, 2, 2)
    im = ax2.pcolormesh(x, y, z, cmap="viridis", shading="auto")
    fig.colorbar(im, ax=ax2)
    ax2.set_xlabel("axis1")
    ax2.set_ylabel("axis2")
    ax2.set_title("projection")
    return _save(fig, recipe.out_path)


def _render_pdf_grid(recipe: FigureRecipe):
    panels = []
    for path in recipe.inputs:
        cols = _read_csv(path, ("axis1", "axis2", "density"))
        panels.append((_name_of(path), cols))
    ncols = min(3, len(panels))
    nrows = -(-len(panels) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.4 * nrows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for ax, (name, cols) in zip(axes.ravel(), panels):
        x, y, shape = _grid_arrays(cols)
        d = cols["density"].reshape(shape)
        ax.axis("on")
        im = ax.pcolormesh(x, y, d, cmap="magma", shading="auto", vmin=0.0, vmax=np.nanmax(d))
        fig.colorbar(im, ax=ax)
        ax.set_title(name)
    return _save(fig, recipe.out_path)


def _render_homoclinic_overlay(recipe: FigureRecipe):
    fig, ax = plt.subplots(figsize=(7, 5))
    drawn = 0
    for path in recipe.inputs:
        cols = _read_csv(path, ("component", "x", "y"))
        name = _name_of(path).replace("orbit_", "")
        style = _style(name)
        for comp in np.unique(cols["component"]):
            mask = cols["component"] == comp
            ax.plot(cols["x"][mask], cols["y"][mask],
                    label=name if comp == np.min(cols["component"]) else None,
                    linewidth=1.4, **style)
        drawn += 1
    if drawn == 0:
        raise SchemaError("homoclinic overlay needs at least one polyline CSV")
    ax.set_xlabel("axis1")
    ax.set_ylabel("axis2")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("homoclinic orbit comparison")
    return _save(fig, recipe.out_path)


def _render_loss_curves(recipe: FigureRecipe):
    fig, (ax_tr, ax_va) = plt.subplots(1, 2, figsize=(10, 4))
    for path in recipe.inputs:
        cols = _read_csv(path, ("epoch", "train_mse", "val_mse"))
        name = path.stem.replace("_loss", "")
        style = _style(name)
        ax_tr.semilogy(cols["epoch"], cols["train_mse"], label=name, **style)
        ax_va.semilogy(cols["epoch"], cols["val_mse"], label=name, **style)
    ax_tr.set_title("training loss")
    ax_va.set_title("validation loss")
    for ax in (ax_tr, ax_va):
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE")
        ax.legend(fontsize=8)
    return _save(fig, recipe.out_path)


def _render_error_map(recipe: FigureRecipe):
    cols = _read_csv(recipe.inputs[0], ("axis1", "axis2", "e_hat", "e_norm"))
    x, y, shape = _grid_arrays(cols)
    fig, axes = plt.subplots(1, 2, figsize=(10.5, 4))
    for ax, col, title in zip(axes, ("e_hat", "e_norm"), ("prediction error", "normalized error")):
        vals = cols[col].reshape(shape)
        im = ax.pcolormesh(x, y, vals, cmap="inferno", shading="auto")
        fig.colorbar(im, ax=ax)
        ax.set_title(title)
        ax.set_xlabel("axis1")
        ax.set_ylabel("axis2")
    return _save(fig, recipe.out_path)


def _render_sensitivity_slices(recipe: FigureRecipe):
    with open(recipe.inputs[0]) as fh:
        header = fh.readline().strip().split(",")
    required = ("parameter", "value", "model", "kl", "rank")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{recipe.inputs[0]}: missing columns {missing}")
    rows = []
    with open(recipe.inputs[0]) as fh:
        next(fh)
        for line in fh:
            parts = line.strip().split(",")
            rows.append(dict(zip(header, parts)))
    parameters = sorted({r["parameter"] for r in rows})
    fig, axes = plt.subplots(1, len(parameters), figsize=(4.0 * len(parameters), 3.6),
                             squeeze=False)
    for ax, parameter in zip(axes[0], parameters):
        sub = [r for r in rows if r["parameter"] == parameter]
        models = sorted({r["model"] for r in sub})
        for model in models:
            pts = [(r["value"], float(r["kl"])) for r in sub if r["model"] == model]
            xs = list(range(len(pts)))
            ax.semilogy(xs, [kl for _, kl in pts], marker="o", label=model,
                        **_style(model))
            ax.set_xticks(xs)
            ax.set_xticklabels([v for v, _ in pts], fontsize=7)
        ax.set_title(f"sweep over {parameter}")
        ax.set_ylabel("KL divergence")
        ax.legend(fontsize=7)
    return _save(fig, recipe.out_path)


_RENDERERS = {
    "ld3d": _render_ld3d,
    "pdf_grid": _render_pdf_grid,
    "homoclinic_overlay": _render_homoclinic_overlay,
    "loss_curves": _render_loss_curves,
    "error_map": _render_error_map,
    "sensitivity_slices": _render_sensitivity_slices,
}


def render(recipe: FigureRecipe) -> Path:
    """Render one recipe to its output path; returns the written file."""
    for path in recipe.inputs:
        if not Path(path).exists():
            raise SchemaError(f"missing input {path}")
    if not recipe.inputs:
        raise SchemaError("recipe has no inputs")
    return _RENDERERS[recipe.figure_id](recipe)


def discover_recipes(run_dir, out_dir) -> tuple[list, list]:
    """Build recipes from a run directory's manifests; returns (recipes, warnings)."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    recipes = []
    warnings = []

    fields = sorted((run_dir / "fields").glob("*.csv")) if (run_dir / "fields").exists() else []
    plain_fields = [p for p in fields if not p.name.endswith("_error.csv")]
    ref_fields = [p for p in plain_fields if _name_of(p) == "reference"]
    if ref_fields:
        recipes.append(FigureRecipe("ld3d", [ref_fields[0]], out_dir / "ld3d.png"))
    else:
        warnings.append("no reference field for ld3d")

    pdfs = sorted((run_dir / "pdfs").glob("*.csv")) if (run_dir / "pdfs").exists() else []
    if pdfs:
        ordered = sorted(pdfs, key=lambda p: (_name_of(p) != "reference", _name_of(p)))
        recipes.append(FigureRecipe("pdf_grid", ordered, out_dir / "pdf_grid.png"))
    else:
        warnings.append("no pdf CSVs for pdf_grid")

    orbits = sorted(run_dir.glob("orbit_*.csv"))
    if orbits:
        ordered = sorted(orbits, key=lambda p: (_name_of(p) != "reference", str(p)))
        recipes.append(
            FigureRecipe("homoclinic_overlay", ordered, out_dir / "homoclinic_overlay.png")
        )
    else:
        warnings.append("no orbit CSVs for homoclinic_overlay")

    losses = sorted((run_dir / "models").glob("*_loss.csv")) if (run_dir / "models").exists() else []
    if losses:
        recipes.append(FigureRecipe("loss_curves", losses, out_dir / "loss_curves.png"))
    else:
        warnings.append("no loss CSVs for loss_curves")

    errors = [p for p in fields if p.name.endswith("_error.csv")]
    if errors:
        recipes.append(FigureRecipe("error_map", [errors[0]], out_dir / "error_map.png"))
    else:
        warnings.append("no error-map CSVs for error_map")

    sens = run_dir / "study_sensitivity.csv"
    if sens.exists():
        recipes.append(
            FigureRecipe("sensitivity_slices", [sens], out_dir / "sensitivity_slices.png")
        )
    else:
        warnings.append("no sensitivity study CSV")
    return recipes, warnings


def render_all(run_dir, out_dir) -> tuple[list, list]:
    """Render every recipe discoverable in run_dir; returns (files, warnings)."""
    recipes, warnings = discover_recipes(run_dir, out_dir)
    produced = [render(recipe) for recipe in recipes]
    return produced, warnings
