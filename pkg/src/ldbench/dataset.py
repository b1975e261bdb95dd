"""Trajectory dataset generation under the benchmark sampling protocols.

Duffing initial conditions are (q, p) = (Q0, 0) with Q0 ~ U(-3, 3); NLS
initial conditions sample (eta, phi) uniformly on the polar section and map
to Cartesian coordinates, optionally restricted to one side of the
homoclinic orbit (sign of the reduced Hamiltonian, inside <=> H3p > 0).
Random streams are split per trajectory index, so generation is
reproducible and independent of any parallel execution order. Splits
assign whole trajectories; a trajectory never straddles train/val/test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from .errors import ContractError, GenerationError, IntegrationFailureError
from .integrate import DEFAULT_TOL, ReferenceOperator, Trajectory

DISTRIBUTIONS = (
    "duffing_uniform_q0",
    "nls_uniform",
    "nls_inside_only",
    "nls_outside_only",
)
SPLIT_NAMES = ("train", "val", "test")
_MAX_REJECTION_DRAWS = 100_000


@dataclass(frozen=True)
class DatasetSpec:
    sys: dyn.SystemSpec
    n_traj: int
    distribution: str
    horizon: float = 100.0
    dt: float = 0.1
    split: tuple = (0.8, 0.1, 0.1)
    seed: int = 0
    tol: tuple = DEFAULT_TOL

    def __post_init__(self):
        if self.n_traj < 1:
            raise ContractError("n_traj must be positive")
        if self.distribution not in DISTRIBUTIONS:
            raise ContractError(f"unknown distribution {self.distribution!r}")
        if self.distribution.startswith("duffing") != (self.sys.name == "duffing"):
            raise ContractError("distribution does not match the system")
        if abs(sum(self.split) - 1.0) > 1e-9 or len(self.split) != 3:
            raise ContractError("split fractions must sum to 1")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-6:
            raise ContractError("horizon must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def to_dict(self) -> dict:
        return {
            "system": self.sys.name,
            "params": dict(self.sys.params),
            "n_traj": self.n_traj,
            "distribution": self.distribution,
            "horizon": self.horizon,
            "dt": self.dt,
            "split": list(self.split),
            "seed": self.seed,
            "tol": list(self.tol),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(
            sys=dyn.SystemSpec(d["system"], dict(d.get("params", {}))),
            n_traj=int(d["n_traj"]),
            distribution=d["distribution"],
            horizon=float(d.get("horizon", 100.0)),
            dt=float(d.get("dt", 0.1)),
            split=tuple(d.get("split", (0.8, 0.1, 0.1))),
            seed=int(d.get("seed", 0)),
            tol=tuple(d.get("tol", DEFAULT_TOL)),
        )


@dataclass
class PairDataset:
    """One-step supervision pairs (state, next state) for MSE training."""

    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inputs.shape != self.targets.shape:
            raise ContractError("inputs/targets shape mismatch")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _traj_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0, index)))


def _sample_ic(spec: DatasetSpec, index: int) -> np.ndarray:
    rng = _traj_rng(spec.seed, index)
    if spec.distribution == "duffing_uniform_q0":
        return np.array([rng.uniform(-3.0, 3.0), 0.0])
    k = spec.sys.params["k"]
    want_inside = spec.distribution == "nls_inside_only"
    for _ in range(_MAX_REJECTION_DRAWS):
        eta = rng.uniform(0.0, 1.0)
        phi = rng.uniform(-np.pi, np.pi)
        if spec.distribution == "nls_uniform":
            break
        h3p = dyn.nls3_reduced_hamiltonian_batch(eta, phi, k)
        if (h3p > 0.0) == want_inside:
            break
    else:
        raise GenerationError(
            f"rejection sampling failed for {spec.distribution} after "
            f"{_MAX_REJECTION_DRAWS} draws"
        )
    return dyn.polar_to_cartesian_batch(eta, phi)


def sample_initial_conditions(spec: DatasetSpec) -> np.ndarray:
    return np.stack([_sample_ic(spec, i) for i in range(spec.n_traj)])


def _integrate_batch(spec: DatasetSpec, ics: np.ndarray) -> list[Trajectory]:
    op = ReferenceOperator(spec.sys, spec.dt, tol=spec.tol)
    cur = op.start(ics, +1)
    n_steps = spec.n_steps
    out = np.empty((ics.shape[0], n_steps + 1, ics.shape[1]))
    out[:, 0] = ics
    for k in range(n_steps):
        cur.step()
        if not np.all(cur.active):
            bad = int(np.flatnonzero(cur.active == 0)[0])
            raise IntegrationFailureError(
                f"reference integration diverged for trajectory {bad}",
                last_valid_time=k * spec.dt,
            )
        out[:, k + 1] = cur.states
    return [Trajectory(t0=0.0, dt=spec.dt, states=out[i]) for i in range(ics.shape[0])]


def split_counts(n: int, fractions) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def generate(spec: DatasetSpec) -> dict[str, list[Trajectory]]:
    """Generate, integrate, and split the trajectory set of a DatasetSpec."""
    ics = sample_initial_conditions(spec)
    trajectories = _integrate_batch(spec, ics)
    split_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(1,))
    )
    order = split_rng.permutation(spec.n_traj)
    n_train, n_val, _ = split_counts(spec.n_traj, spec.split)
    return {
        "train": [trajectories[i] for i in order[:n_train]],
        "val": [trajectories[i] for i in order[n_train : n_train + n_val]],
        "test": [trajectories[i] for i in order[n_train + n_val :]],
    }


def subsample(trajectories: list[Trajectory], size: int, seed: int) -> list[Trajectory]:
    """Seeded selection without replacement from a master pool (size studies)."""
    if size > len(trajectories):
        raise ContractError("subsample size exceeds the pool")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(3, size)))
    idx = rng.choice(len(trajectories), size=size, replace=False)
    return [trajectories[i] for i in idx]


def to_pairs(trajectories: list[Trajectory], seed: int = 0, meta: dict | None = None) -> PairDataset:
    """All consecutive one-step pairs from all trajectories, seed-shuffled."""
    inputs, targets = [], []
    for traj in trajectories:
        inputs.append(traj.states[:-1])
        targets.append(traj.states[1:])
    x = np.concatenate(inputs)
    y = np.concatenate(targets)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))
    order = rng.permutation(x.shape[0])
    return PairDataset(inputs=x[order], targets=y[order], meta=meta or {})


def ic_histogram(trajectories: list[Trajectory], bins: int, range=None):
    """Histogram of initial positions q(0) (the data-imbalance diagnostic)."""
    q0 = np.array([traj.states[0, 0] for traj in trajectories])
    return np.histogram(q0, bins=bins, range=range)


def save_dataset(splits: dict, spec: DatasetSpec, out_dir):
    out_dir = Path(out_dir)
    for name in SPLIT_NAMES:
        sub = out_dir / name
        sub.mkdir(parents=True, exist_ok=True)
        for i, traj in enumerate(splits[name]):
            traj.write_csv(sub / f"traj_{i}.csv")
    manifest = {"kind": "dataset", "spec": spec.to_dict()}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_dataset(in_dir) -> tuple[dict, DatasetSpec]:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "manifest.json").read_text())
    spec = DatasetSpec.from_dict(manifest["spec"])
    splits = {}
    for name in SPLIT_NAMES:
        sub = in_dir / name
        files = sorted(sub.glob("traj_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
        splits[name] = [Trajectory.read_csv(f) for f in files]
    return splits, spec
