"""Lagrangian-descriptor fields over phase-space grids for any operator.

The descriptor at u0 integrates M = sum_i |qdot_i|^c + |pdot_i|^c along the
trajectory over the symmetric window [-tau, tau]; velocities come from
forward differences of the dt-sampled rollout and the quadrature is a
left-Riemann sum at stride dt (so every operator, learned or reference, is
scored by the identical discrete recipe). The descriptor splits exactly
into forward + backward window halves. Grid evaluation streams node
chunks; diverging nodes are recorded as missing (NaN) values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import polar_to_cartesian_batch
from .errors import (
    ContractError,
    FieldQualityError,
    UndefinedNormalizationError,
)
from .integrate import EvolutionOperator

SECTION_MAPS = ("duffing_qp", "nls_eta_phi")
DEFAULT_CHUNK = 8192


@dataclass(frozen=True)
class LdConfig:
    """Window half-length tau, sampling stride dt, arc-length exponent c."""

    tau: float = 4.0
    dt: float = 0.1
    c: float = 0.7
    functional: str = "arc_length_p_norm"

    def __post_init__(self):
        if self.tau <= 0 or self.dt <= 0:
            raise ContractError("tau and dt must be positive")
        if not 0.0 < self.c <= 1.0:
            raise ContractError("exponent c must lie in (0, 1]")
        if self.functional != "arc_length_p_norm":
            raise ContractError(f"unknown LD functional {self.functional!r}")
        n = self.tau / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ContractError("tau must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.tau / self.dt))

    def to_dict(self) -> dict:
        return {"tau": self.tau, "dt": self.dt, "c": self.c, "functional": self.functional}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class GridSpec:
    """Two named axes spanning a section of phase space."""

    axes: tuple  # ((name, min, max, count), (name, min, max, count))
    section_map: str = "duffing_qp"

    def __post_init__(self):
        if len(self.axes) != 2:
            raise ContractError("grid needs exactly two axes")
        axes = tuple((str(n), float(lo), float(hi), int(c)) for n, lo, hi, c in self.axes)
        for name, lo, hi, count in axes:
            if count < 2:
                raise ContractError(f"axis {name}: count must be at least 2")
            if not lo < hi:
                raise ContractError(f"axis {name}: min must be below max")
        if self.section_map not in SECTION_MAPS:
            raise ContractError(f"unknown section map {self.section_map!r}")
        object.__setattr__(self, "axes", axes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axes[0][3], self.axes[1][3])

    def axis_values(self, i: int) -> np.ndarray:
        name, lo, hi, count = self.axes[i]
        return np.linspace(lo, hi, count)

    def cell_sizes(self) -> tuple[float, float]:
        return (
            (self.axes[0][2] - self.axes[0][1]) / (self.axes[0][3] - 1),
            (self.axes[1][2] - self.axes[1][1]) / (self.axes[1][3] - 1),
        )

    def cell_area(self) -> float:
        d1, d2 = self.cell_sizes()
        return d1 * d2

    def node_coordinates(self) -> np.ndarray:
        """(N, 2) array of (axis1, axis2) pairs, axis1-major order."""
        v1 = self.axis_values(0)
        v2 = self.axis_values(1)
        a, b = np.meshgrid(v1, v2, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])

    def node_states(self) -> np.ndarray:
        """Full flat phase states for every node, per the section map."""
        coords = self.node_coordinates()
        if self.section_map == "duffing_qp":
            return np.ascontiguousarray(coords)
        return np.ascontiguousarray(polar_to_cartesian_batch(coords[:, 0], coords[:, 1]))

    def to_dict(self) -> dict:
        return {"axes": [list(a) for a in self.axes], "section_map": self.section_map}

    @classmethod
    def from_dict(cls, d):
        return cls(axes=tuple(tuple(a) for a in d["axes"]), section_map=d["section_map"])


@dataclass
class LdField:
    """Total/forward/backward descriptor values on a grid (NaN = missing node)."""

    grid: GridSpec
    cfg: LdConfig
    values: np.ndarray
    fwd: np.ndarray
    bwd: np.ndarray
    operator_kind: str = "unknown"

    @property
    def n_missing(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.values)))

    def write_csv(self, path, manifest_extra: dict | None = None):
        path = Path(path)
        coords = self.grid.node_coordinates()
        data = np.column_stack(
            [coords, self.values.ravel(), self.fwd.ravel(), self.bwd.ravel()]
        )
        header = "axis1,axis2,ld_total,ld_fwd,ld_bwd"
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")
        manifest = {
            "kind": "ld_field",
            "grid": self.grid.to_dict(),
            "ld": self.cfg.to_dict(),
            "operator_kind": self.operator_kind,
            "n_missing": self.n_missing,
        }
        manifest.update(manifest_extra or {})
        path.with_suffix(".manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def read_csv(cls, path) -> "LdField":
        path = Path(path)
        manifest = json.loads(path.with_suffix(".manifest.json").read_text())
        grid = GridSpec.from_dict(manifest["grid"])
        cfg = LdConfig.from_dict(manifest["ld"])
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        shape = grid.shape
        return cls(
            grid=grid,
            cfg=cfg,
            values=data[:, 2].reshape(shape),
            fwd=data[:, 3].reshape(shape),
            bwd=data[:, 4].reshape(shape),
            operator_kind=manifest.get("operator_kind", "unknown"),
        )


def _accumulate_side(op, states0, cfg: LdConfig, direction):
    """One-sided LD sums for a batch of start states: returns (ld, valid)."""
    cur = op.start(states0, direction)
    n = states0.shape[0]
    acc = np.zeros(n)
    prev = cur.states.copy()
    weight = cfg.dt ** (1.0 - cfg.c)
    for _ in range(cfg.n_steps):
        cur.step()
        live = cur.active.astype(bool)
        delta = np.abs(cur.states - prev)
        acc[live] += weight * np.sum(delta[live] ** cfg.c, axis=1)
        acc[~live] = np.nan
        prev[:] = cur.states
    return acc, cur.active.astype(bool)


def ld_point(op: EvolutionOperator, u0, cfg: LdConfig):
    """Descriptor at a single state: returns (total, fwd, bwd)."""
    if abs(op.dt - cfg.dt) > 1e-12:
        raise ContractError("operator stride does not match the LD config dt")
    vec = u0.to_vector() if hasattr(u0, "to_vector") else np.asarray(u0, dtype=float)
    states = np.ascontiguousarray(vec[None, :])
    f, okf = _accumulate_side(op, states, cfg, +1)
    b, okb = _accumulate_side(op, states, cfg, -1)
    if not (okf[0] and okb[0]):
        raise FieldQualityError("rollout diverged while computing the descriptor")
    return float(f[0] + b[0]), float(f[0]), float(b[0])


def ld_field(
    op: EvolutionOperator,
    grid: GridSpec,
    cfg: LdConfig,
    chunk: int = DEFAULT_CHUNK,
    max_missing_fraction: float = 0.05,
) -> LdField:
    """Evaluate the descriptor at every grid node (chunked, order-stable)."""
    if abs(op.dt - cfg.dt) > 1e-12:
        raise ContractError("operator stride does not match the LD config dt")
    states = grid.node_states()
    n = states.shape[0]
    fwd = np.empty(n)
    bwd = np.empty(n)
    for lo in range(0, n, chunk):
        block = np.ascontiguousarray(states[lo : lo + chunk])
        f, _ = _accumulate_side(op, block, cfg, +1)
        b, _ = _accumulate_side(op, block, cfg, -1)
        fwd[lo : lo + chunk] = f
        bwd[lo : lo + chunk] = b
    total = fwd + bwd
    missing = np.count_nonzero(~np.isfinite(total))
    if missing > max_missing_fraction * n:
        raise FieldQualityError(
            f"{missing}/{n} grid nodes diverged (> {max_missing_fraction:.0%})"
        )
    shape = grid.shape
    return LdField(
        grid=grid,
        cfg=cfg,
        values=total.reshape(shape),
        fwd=fwd.reshape(shape),
        bwd=bwd.reshape(shape),
        operator_kind=op.kind,
    )


def ld_field_multi(
    op: EvolutionOperator,
    grid: GridSpec,
    dt: float,
    taus: list[float],
    cs: list[float],
    chunk: int = DEFAULT_CHUNK,
    max_missing_fraction: float = 0.05,
) -> dict:
    """Fields for every (tau, c) combination from one rollout pass per side.

    The tau variants are running-sum snapshots of the longest window and the
    c variants are parallel accumulators over the same trajectory, so a
    sensitivity sweep costs one rollout instead of len(taus) * len(cs).
    """
    taus = sorted(set(float(t) for t in taus))
    cs = list(dict.fromkeys(float(c) for c in cs))
    cfg_max = LdConfig(tau=max(taus), dt=dt, c=cs[0])
    tau_by_step = {LdConfig(tau=t, dt=dt, c=cs[0]).n_steps: t for t in taus}
    states = grid.node_states()
    n = states.shape[0]
    acc = {
        (t, c, side): np.empty(n) for t in taus for c in cs for side in ("f", "b")
    }
    for lo in range(0, n, chunk):
        block = np.ascontiguousarray(states[lo : lo + chunk])
        for side, direction in (("f", +1), ("b", -1)):
            rows = _multi_accumulate(op, block, cfg_max, direction, tau_by_step, cs)
            for (t, c), vals in rows.items():
                acc[(t, c, side)][lo : lo + chunk] = vals
    fields = {}
    shape = grid.shape
    for t in taus:
        for c in cs:
            f = acc[(t, c, "f")]
            b = acc[(t, c, "b")]
            total = f + b
            missing = np.count_nonzero(~np.isfinite(total))
            if missing > max_missing_fraction * n:
                raise FieldQualityError(
                    f"{missing}/{n} nodes diverged at tau={t}, c={c}"
                )
            fields[(t, c)] = LdField(
                grid=grid,
                cfg=LdConfig(tau=t, dt=dt, c=c),
                values=total.reshape(shape),
                fwd=f.reshape(shape),
                bwd=b.reshape(shape),
                operator_kind=op.kind,
            )
    return fields


def _multi_accumulate(op, states0, cfg_max, direction, tau_by_step, cs):
    cur = op.start(states0, direction)
    n = states0.shape[0]
    accs = {c: np.zeros(n) for c in cs}
    prev = cur.states.copy()
    out = {}
    for k in range(1, cfg_max.n_steps + 1):
        cur.step()
        live = cur.active.astype(bool)
        delta = np.abs(cur.states - prev)
        for c in cs:
            w = cfg_max.dt ** (1.0 - c)
            accs[c][live] += w * np.sum(delta[live] ** c, axis=1)
            accs[c][~live] = np.nan
        prev[:] = cur.states
        if k in tau_by_step:
            for c in cs:
                out[(tau_by_step[k], c)] = accs[c].copy()
    return out


def normalized_ld(field_or_value, tau: float | None = None):
    """Descriptor divided by the window half-length tau."""
    if isinstance(field_or_value, LdField):
        t = field_or_value.cfg.tau
        return LdField(
            grid=field_or_value.grid,
            cfg=field_or_value.cfg,
            values=field_or_value.values / t,
            fwd=field_or_value.fwd / t,
            bwd=field_or_value.bwd / t,
            operator_kind=field_or_value.operator_kind,
        )
    if tau is None:
        raise ContractError("tau required when normalizing a bare value")
    return np.asarray(field_or_value, dtype=float) / tau


def trajectory_error(op, ref_op, u0, cfg: LdConfig):
    """Descriptor-normalized trajectory discrepancy (e_hat, e) at u0.

    e_hat integrates sum_i |Delta q_i|^c + |Delta p_i|^c over [-tau, tau]
    (left-Riemann at stride dt); e divides by the reference descriptor.
    """
    vec = u0.to_vector() if hasattr(u0, "to_vector") else np.asarray(u0, dtype=float)
    states = np.ascontiguousarray(vec[None, :])
    e_hat = _error_batch(op, ref_op, states, cfg)[0]
    ld_ref = ld_point(ref_op, vec, cfg)[0]
    if ld_ref == 0.0:
        raise UndefinedNormalizationError("reference descriptor vanishes at a fixed point")
    return float(e_hat), float(e_hat / ld_ref)


def _error_batch(op, ref_op, states0, cfg: LdConfig):
    n = states0.shape[0]
    e_hat = np.zeros(n)
    for direction in (+1, -1):
        cur_a = op.start(states0, direction)
        cur_b = ref_op.start(states0, direction)
        # left endpoint of every dt interval, starting at u0 where Delta = 0
        diff = np.zeros_like(states0)
        valid = np.ones(n, dtype=bool)
        for _ in range(cfg.n_steps):
            e_hat[valid] += cfg.dt * np.sum(np.abs(diff[valid]) ** cfg.c, axis=1)
            cur_a.step()
            cur_b.step()
            valid &= cur_a.active.astype(bool) & cur_b.active.astype(bool)
            diff = cur_a.states - cur_b.states
        e_hat[~valid] = np.nan
    return e_hat


def error_field(op, ref_op, grid: GridSpec, cfg: LdConfig, chunk: int = DEFAULT_CHUNK):
    """(e_hat, e) arrays over the grid, NaN where either operator diverged."""
    ref_field = ld_field(ref_op, grid, cfg, chunk=chunk)
    states = grid.node_states()
    n = states.shape[0]
    e_hat = np.empty(n)
    for lo in range(0, n, chunk):
        block = np.ascontiguousarray(states[lo : lo + chunk])
        e_hat[lo : lo + chunk] = _error_batch(op, ref_op, block, cfg)
    e_hat = e_hat.reshape(grid.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_norm = e_hat / ref_field.values
    return e_hat, e_norm, ref_field
