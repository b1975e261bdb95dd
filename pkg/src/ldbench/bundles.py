"""Model bundle serialization: one JSON format for all four architectures.

A bundle stores the architecture tag, shape metadata, the training seed,
and named flat arrays in row-major order. JSON float round-tripping is
exact (shortest-repr doubles), so save/load is bit-exact. Reservoir
recurrent weights are stored as (row, col, value) sparse triplets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix

from .errors import ContractError
from .integrate import EvolutionOperator
from .reservoir import ReservoirModel, ReservoirOperator, ReservoirParams
from .sympnets import (
    GhnnParams,
    HenonNetParams,
    SymplecticNetOperator,
    SympNetParams,
)

FORMAT = "ldbench-model-bundle"
VERSION = 1


@dataclass
class ModelBundle:
    arch: str
    meta: dict
    arrays: dict
    seed: int = 0

    def to_json(self) -> str:
        payload = {
            "format": FORMAT,
            "version": VERSION,
            "arch": self.arch,
            "seed": self.seed,
            "meta": self.meta,
            "arrays": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in self.arrays.items()
            },
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "ModelBundle":
        payload = json.loads(text)
        if payload.get("format") != FORMAT:
            raise ContractError("not a model bundle")
        arrays = {
            name: np.array(spec["data"], dtype=float).reshape(spec["shape"])
            for name, spec in payload["arrays"].items()
        }
        return cls(
            arch=payload["arch"],
            meta=payload["meta"],
            arrays=arrays,
            seed=int(payload.get("seed", 0)),
        )

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ModelBundle":
        return cls.from_json(Path(path).read_text())


def bundle_net(params, dt: float, seed: int = 0, extra_meta: dict | None = None) -> ModelBundle:
    if isinstance(params, SympNetParams):
        arch, arrays = "sympnet", {"K": params.K, "a": params.a, "b": params.b}
    elif isinstance(params, HenonNetParams):
        arch, arrays = "henonnet", {
            "K": params.K, "a": params.a, "b": params.b, "eta": params.eta,
        }
    elif isinstance(params, GhnnParams):
        arch, arrays = "ghnn", {
            "W1": params.W1, "b1": params.b1, "W2": params.W2, "b2": params.b2,
            "a": params.a,
        }
    else:
        raise ContractError(f"cannot bundle {type(params)!r}")
    meta = {"dt": dt}
    meta.update(extra_meta or {})
    return ModelBundle(arch=arch, meta=meta, arrays={k: np.asarray(v) for k, v in arrays.items()}, seed=seed)


def bundle_reservoir(
    model: ReservoirModel, dt: float, seed: int = 0, extra_meta: dict | None = None
) -> ModelBundle:
    if model.W_fwd is None or model.W_bwd is None:
        raise ContractError("train both readouts before bundling the reservoir")
    coo = model.W_x.tocoo()
    p = model.params
    meta = {
        "dt": dt,
        "params": {
            "N_h": p.N_h, "mu": p.mu, "alpha": p.alpha, "rho": p.rho,
            "sigma_B": p.sigma_B, "beta_L": p.beta_L, "N_w": p.N_w, "seed": p.seed,
        },
        "n_u": model.n_u,
    }
    meta.update(extra_meta or {})
    arrays = {
        "W_x_row": coo.row.astype(float),
        "W_x_col": coo.col.astype(float),
        "W_x_val": coo.data.astype(float),
        "W_u": model.W_u,
        "W_fwd": model.W_fwd,
        "W_bwd": model.W_bwd,
    }
    return ModelBundle(arch="reservoir", meta=meta, arrays=arrays, seed=seed)


def params_from_bundle(bundle: ModelBundle):
    """Reconstruct the parameter object (net params or ReservoirModel)."""
    if bundle.arch == "sympnet":
        a = bundle.arrays
        return SympNetParams(K=a["K"], a=a["a"], b=a["b"])
    if bundle.arch == "henonnet":
        a = bundle.arrays
        return HenonNetParams(K=a["K"], a=a["a"], b=a["b"], eta=a["eta"])
    if bundle.arch == "ghnn":
        a = bundle.arrays
        return GhnnParams(W1=a["W1"], b1=a["b1"], W2=a["W2"], b2=a["b2"], a=a["a"])
    if bundle.arch == "reservoir":
        meta = bundle.meta
        params = ReservoirParams(**meta["params"])
        model = ReservoirModel.__new__(ReservoirModel)
        model.params = params
        model.n_u = int(meta["n_u"])
        arr = bundle.arrays
        model.W_x = csr_matrix(
            (arr["W_x_val"], (arr["W_x_row"].astype(int), arr["W_x_col"].astype(int))),
            shape=(params.N_h, params.N_h),
        )
        model.W_u = np.ascontiguousarray(arr["W_u"])
        model.W_fwd = np.ascontiguousarray(arr["W_fwd"])
        model.W_bwd = np.ascontiguousarray(arr["W_bwd"])
        return model
    raise ContractError(f"unknown architecture {bundle.arch!r}")


def operator_from_bundle(
    bundle: ModelBundle, threads: int | None = None, warm_refine: int = 2
) -> EvolutionOperator:
    dt = float(bundle.meta["dt"])
    obj = params_from_bundle(bundle)
    if bundle.arch == "reservoir":
        return ReservoirOperator(obj, dt, threads=threads, warm_refine=warm_refine)
    return SymplecticNetOperator(obj, dt, threads=threads)
