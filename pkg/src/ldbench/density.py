"""LD-weighted probability densities and information-theoretic divergences.

A monotonic weighting g turns a descriptor field into a discrete density
rho = g(LD)/Z over the grid, normalized with uniform cell areas. Missing
(diverged) nodes are excluded and the mass renormalized; zero descriptors
are floored before 1/x or exp(-beta x) weighting so fixed points stay
finite. The Kullback-Leibler comparison floors empty model cells at
1e-12/Z to keep automated sweeps finite; Jensen-Shannon needs no floor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, EmptyFieldError
from .ld import GridSpec, LdField

LD_FLOOR_SCALE = 1e-9
KL_FLOOR = 1e-12


@dataclass(frozen=True)
class WeightFn:
    """Weighting kinds: power (x^m), inverse (1/x), exp (e^{-beta x})."""

    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "inverse", "exp"):
            raise ContractError(f"unknown weighting kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "power":
            return "x" if self.param == 1.0 else f"x^{self.param:g}"
        if self.kind == "inverse":
            return "1/x"
        return f"exp(-{self.param:g}x)"

    @property
    def needs_positive(self) -> bool:
        return self.kind != "power" or self.param < 0

    def apply(self, values: np.ndarray) -> np.ndarray:
        if self.kind == "power":
            return values**self.param
        if self.kind == "inverse":
            return 1.0 / values
        return np.exp(-self.param * values)

    @classmethod
    def parse(cls, text: str) -> "WeightFn":
        t = text.strip().replace(" ", "")
        if t == "x":
            return cls("power", 1.0)
        if t == "1/x":
            return cls("inverse")
        m = re.fullmatch(r"x\^(-?[0-9.]+)", t)
        if m:
            return cls("power", float(m.group(1)))
        m = re.fullmatch(r"exp\(-([0-9.]+)\*?x\)", t)
        if m:
            return cls("exp", float(m.group(1)))
        raise ContractError(f"cannot parse weighting function {text!r}")


@dataclass
class WeightedPdf:
    grid: GridSpec
    density: np.ndarray
    z: float

    def mass(self) -> float:
        return float(np.nansum(self.density) * self.grid.cell_area())


@dataclass(frozen=True)
class SweepSpec:
    taus: tuple = (2.0, 4.0, 6.0, 10.0)
    dts: tuple = (0.1, 0.2, 0.4)
    cs: tuple = (0.5, 0.7, 1.0)
    weights: tuple = ("x", "1/x", "exp(-0.5x)")
    baseline: dict = field(
        default_factory=lambda: {"tau": 4.0, "dt": 0.1, "c": 0.7, "g": "1/x"}
    )

    def __post_init__(self):
        if not (self.taus and self.dts and self.cs and self.weights):
            raise ContractError("sweep axes must be nonempty")


def ld_to_pdf(src: LdField, g: WeightFn) -> WeightedPdf:
    """Normalized weighted density over the field's grid.

    Invalid nodes get zero density (mass renormalized over the rest);
    descriptor values are floored at 1e-9 * median(LD) before weightings
    that blow up at zero.
    """
    values = src.values if isinstance(src, LdField) else np.asarray(src, dtype=float)
    grid = src.grid
    valid = np.isfinite(values)
    if not np.any(valid):
        raise EmptyFieldError("no valid descriptor values to weight")
    vals = values.copy()
    if g.needs_positive:
        floor = LD_FLOOR_SCALE * float(np.median(vals[valid]))
        if floor <= 0.0:
            floor = np.finfo(float).tiny
        vals[valid] = np.maximum(vals[valid], floor)
    w = np.zeros_like(vals)
    w[valid] = g.apply(vals[valid])
    z = float(np.sum(w[valid]) * grid.cell_area())
    if not np.isfinite(z) or z <= 0.0:
        raise EmptyFieldError("weighted field has no usable mass")
    return WeightedPdf(grid=grid, density=w / z, z=z)


def _check_same_grid(a: WeightedPdf, b: WeightedPdf):
    if a.grid != b.grid:
        raise ContractError("densities live on different grids")
    if a.density.shape != b.density.shape:
        raise ContractError("density shapes differ")


def kl_divergence(rho: WeightedPdf, rho_hat: WeightedPdf) -> float:
    return kl_divergence_info(rho, rho_hat)[0]


def kl_divergence_info(rho: WeightedPdf, rho_hat: WeightedPdf):
    """KL(rho || rho_hat) plus (floored-cell count, floor value) metadata."""
    _check_same_grid(rho, rho_hat)
    area = rho.grid.cell_area()
    p = rho.density
    q = rho_hat.density.copy()
    support = p > 0
    floor_value = KL_FLOOR / rho_hat.z
    floored = support & (q <= 0.0)
    q[floored] = floor_value
    kl = float(np.sum(p[support] * np.log(p[support] / q[support])) * area)
    return kl, int(np.count_nonzero(floored)), floor_value


def js_divergence(rho: WeightedPdf, rho_hat: WeightedPdf) -> float:
    """Jensen-Shannon divergence (natural log, bounded by ln 2)."""
    _check_same_grid(rho, rho_hat)
    area = rho.grid.cell_area()
    p = rho.density
    q = rho_hat.density
    m = 0.5 * (p + q)

    def half(a):
        s = a > 0
        return float(np.sum(a[s] * np.log(a[s] / m[s])) * area)

    return 0.5 * half(p) + 0.5 * half(q)


def rank_models(reference: WeightedPdf, model_pdfs: dict[str, WeightedPdf]):
    """Ascending-KL ranking with stable alphabetical tie-break."""
    rows = []
    for name in sorted(model_pdfs):
        kl, n_floored, floor_value = kl_divergence_info(reference, model_pdfs[name])
        rows.append({"model": name, "kl": kl, "n_floored": n_floored})
    rows.sort(key=lambda r: (r["kl"], r["model"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return rows


def sensitivity_sweep(cases) -> list[dict]:
    """Rank models across sweep settings.

    Each case is (parameter, value, reference LdField, {model: LdField},
    WeightFn); returns one row per (setting, model) with parameter, value,
    model, kl, rank columns.
    """
    out = []
    for parameter, value, ref_field, model_fields, g in cases:
        ref_pdf = ld_to_pdf(ref_field, g)
        pdfs = {name: ld_to_pdf(f, g) for name, f in model_fields.items()}
        for row in rank_models(ref_pdf, pdfs):
            out.append(
                {
                    "parameter": parameter,
                    "value": value,
                    "model": row["model"],
                    "kl": row["kl"],
                    "rank": row["rank"],
                }
            )
    return out
