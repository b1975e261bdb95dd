"""Symplectic network architectures with exact inverses and Adam training.

Three families share the same building idea, shears by the gradient of a
learnable scalar potential, which makes every map exactly invertible and
symplectic by construction:

* SympNet: alternating upper/lower gradient modules,
  grad V(x) = K^T diag(a) tanh(Kx + b), composed per learned Hamiltonian.
* HenonNet: stacked layers, each the 4-fold composition of one Henon map
  (q, p) -> (p, -q + grad V(p) + eta) with a shared potential and bias.
  Each layer accounts for two learned Hamiltonians.
* GHNN: per-Hamiltonian pair of two-hidden-layer scalar nets (K_i acting
  on p, V_i acting on q) composed through symplectic-Euler shears with
  the step scale absorbed into the nets.

The activation is tanh with antiderivative log cosh throughout. Gradients
of the one-step MSE loss are analytic (hand-derived, kernel-implemented);
training is single-threaded and deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import PhaseState
from .errors import ContractError, TrainingDivergenceError
from .integrate import EvolutionOperator

ARCHES = ("sympnet", "henonnet", "ghnn")


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass
class GradientModuleParams:
    """One shear module: side 'upper' adds grad V(p) to q, 'lower' the converse."""

    K: np.ndarray
    a: np.ndarray
    b: np.ndarray
    side: str

    def __post_init__(self):
        if self.side not in ("upper", "lower"):
            raise ContractError(f"bad module side {self.side!r}")
        m, n = self.K.shape
        if self.a.shape != (m,) or self.b.shape != (m,):
            raise ContractError("gradient-module shapes inconsistent")


@dataclass
class SympNetParams:
    """Stacked gradient modules in application order [upper, lower, ...]."""

    K: np.ndarray  # (2l, m, n)
    a: np.ndarray  # (2l, m)
    b: np.ndarray  # (2l, m)

    def __post_init__(self):
        if self.K.ndim != 3 or self.K.shape[0] % 2:
            raise ContractError("SympNet needs an even module count (2 per Hamiltonian)")
        for arr_name in ("K", "a", "b"):
            setattr(self, arr_name, np.ascontiguousarray(getattr(self, arr_name), dtype=float))

    @property
    def l(self) -> int:
        return self.K.shape[0] // 2

    @property
    def m(self) -> int:
        return self.K.shape[1]

    @property
    def n(self) -> int:
        return self.K.shape[2]

    def modules(self) -> list[GradientModuleParams]:
        return [
            GradientModuleParams(
                self.K[j], self.a[j], self.b[j], "upper" if j % 2 == 0 else "lower"
            )
            for j in range(self.K.shape[0])
        ]


@dataclass
class HenonLayerParams:
    """Shared potential (K, a, b) and bias eta for four identical Henon maps."""

    K: np.ndarray
    a: np.ndarray
    b: np.ndarray
    eta_bias: np.ndarray


@dataclass
class HenonNetParams:
    K: np.ndarray  # (layers, m, n)
    a: np.ndarray
    b: np.ndarray
    eta: np.ndarray  # (layers, n)

    def __post_init__(self):
        for arr_name in ("K", "a", "b", "eta"):
            setattr(self, arr_name, np.ascontiguousarray(getattr(self, arr_name), dtype=float))

    @property
    def n_layers(self) -> int:
        return self.K.shape[0]

    @property
    def l(self) -> int:
        # two learned Hamiltonians per Henon layer
        return 2 * self.n_layers

    @property
    def m(self) -> int:
        return self.K.shape[1]

    @property
    def n(self) -> int:
        return self.K.shape[2]

    def layers(self) -> list[HenonLayerParams]:
        return [
            HenonLayerParams(self.K[j], self.a[j], self.b[j], self.eta[j])
            for j in range(self.n_layers)
        ]


@dataclass
class GhnnParams:
    """l Hamiltonians, each a (K_i, V_i) pair of two-hidden-layer scalar nets.

    Array index [i, 0] is the kinetic net acting on p, [i, 1] the potential
    net acting on q; hidden widths are (m, m).
    """

    W1: np.ndarray  # (l, 2, m, n)
    b1: np.ndarray  # (l, 2, m)
    W2: np.ndarray  # (l, 2, m, m)
    b2: np.ndarray  # (l, 2, m)
    a: np.ndarray  # (l, 2, m)

    def __post_init__(self):
        for arr_name in ("W1", "b1", "W2", "b2", "a"):
            setattr(self, arr_name, np.ascontiguousarray(getattr(self, arr_name), dtype=float))

    @property
    def l(self) -> int:
        return self.W1.shape[0]

    @property
    def m(self) -> int:
        return self.W1.shape[2]

    @property
    def n(self) -> int:
        return self.W1.shape[3]


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    epochs: int = 250
    batch_size: int | None = 1024
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.lr > 0):
            raise ContractError("Adam hyperparameters out of range")
        if self.epochs < 0:
            raise ContractError("epochs must be nonnegative")


# ---------------------------------------------------------------------------
# Initialization: identity-start (a = 0), weights ~ N(0, 1/sqrt(m))
# ---------------------------------------------------------------------------


def init_sympnet(l: int, m: int, n: int, seed: int = 0) -> SympNetParams:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(20,)))
    std = 1.0 / np.sqrt(m)
    return SympNetParams(
        K=rng.normal(0.0, std, size=(2 * l, m, n)),
        a=np.zeros((2 * l, m)),
        b=rng.normal(0.0, std, size=(2 * l, m)),
    )


def init_henon(l: int, m: int, n: int, seed: int = 0) -> HenonNetParams:
    """Near-identity Henon init with broken four-map symmetry.

    The exact identity start (a = 0) stalls: gradient contributions from
    the four identical maps of a layer largely cancel at the symmetric
    point. Unit-scale potential weights plus small a-noise keep the layer
    near the identity while letting training move.
    """
    if l % 2:
        raise ContractError("HenonNet needs an even Hamiltonian count (2 per layer)")
    layers = l // 2
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(21,)))
    return HenonNetParams(
        K=rng.normal(0.0, 1.0, size=(layers, m, n)),
        a=rng.normal(0.0, 1e-2, size=(layers, m)),
        b=rng.normal(0.0, 1.0, size=(layers, m)),
        eta=np.zeros((layers, n)),
    )


def init_ghnn(l: int, m: int, n: int, seed: int = 0) -> GhnnParams:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(22,)))
    std = 1.0 / np.sqrt(m)
    return GhnnParams(
        W1=rng.normal(0.0, std, size=(l, 2, m, n)),
        b1=rng.normal(0.0, std, size=(l, 2, m)),
        W2=rng.normal(0.0, std, size=(l, 2, m, m)),
        b2=rng.normal(0.0, std, size=(l, 2, m)),
        a=np.zeros((l, 2, m)),
    )


def init_params(arch: str, l: int, m: int, n: int, seed: int = 0):
    if arch == "sympnet":
        return init_sympnet(l, m, n, seed)
    if arch == "henonnet":
        return init_henon(l, m, n, seed)
    if arch == "ghnn":
        return init_ghnn(l, m, n, seed)
    raise ContractError(f"unknown architecture {arch!r}")


# ---------------------------------------------------------------------------
# Single-state module operations (the batch path lives in the kernels)
# ---------------------------------------------------------------------------


def grad_potential(K, a, b, x):
    """grad V(x) = K^T (a * tanh(Kx + b))."""
    return (a * np.tanh(x @ K.T + b)) @ K


def gradient_module_apply(gm: GradientModuleParams, s: PhaseState) -> PhaseState:
    if gm.K.shape[1] != s.n:
        raise ContractError("module dimension does not match the state")
    if gm.side == "upper":
        return PhaseState(s.q + grad_potential(gm.K, gm.a, gm.b, s.p), s.p.copy())
    return PhaseState(s.q.copy(), s.p + grad_potential(gm.K, gm.a, gm.b, s.q))


def gradient_module_inverse(gm: GradientModuleParams, s: PhaseState) -> PhaseState:
    if gm.side == "upper":
        return PhaseState(s.q - grad_potential(gm.K, gm.a, gm.b, s.p), s.p.copy())
    return PhaseState(s.q.copy(), s.p - grad_potential(gm.K, gm.a, gm.b, s.q))


def henon_map_apply(hl: HenonLayerParams, s: PhaseState) -> PhaseState:
    """One Henon map (q, p) -> (p, -q + grad V(p) + eta)."""
    g = grad_potential(hl.K, hl.a, hl.b, s.p)
    return PhaseState(s.p.copy(), -s.q + g + hl.eta_bias)


def henon_map_inverse(hl: HenonLayerParams, s: PhaseState) -> PhaseState:
    """Exact inverse (q', p') -> (grad V(q') + eta - p', q')."""
    g = grad_potential(hl.K, hl.a, hl.b, s.q)
    return PhaseState(g + hl.eta_bias - s.p, s.q.copy())


def henon_layer_apply(hl: HenonLayerParams, s: PhaseState) -> PhaseState:
    for _ in range(4):
        s = henon_map_apply(hl, s)
    return s


def _ghnn_grad(w1, c1, w2, c2, a, x):
    z1 = x @ w1.T + c1
    s1 = np.tanh(z1)
    h1 = np.abs(z1) + np.log1p(np.exp(-2.0 * np.abs(z1))) - np.log(2.0)
    s2 = np.tanh(h1 @ w2.T + c2)
    return (s1 * ((a * s2) @ w2)) @ w1


def ghnn_apply(g: GhnnParams, s: PhaseState) -> PhaseState:
    q, p = s.q.copy(), s.p.copy()
    for i in range(g.l):
        q = q + _ghnn_grad(g.W1[i, 0], g.b1[i, 0], g.W2[i, 0], g.b2[i, 0], g.a[i, 0], p)
        p = p - _ghnn_grad(g.W1[i, 1], g.b1[i, 1], g.W2[i, 1], g.b2[i, 1], g.a[i, 1], q)
    return PhaseState(q, p)


def ghnn_inverse(g: GhnnParams, s: PhaseState) -> PhaseState:
    q, p = s.q.copy(), s.p.copy()
    for i in range(g.l - 1, -1, -1):
        p = p + _ghnn_grad(g.W1[i, 1], g.b1[i, 1], g.W2[i, 1], g.b2[i, 1], g.a[i, 1], q)
        q = q - _ghnn_grad(g.W1[i, 0], g.b1[i, 0], g.W2[i, 0], g.b2[i, 0], g.a[i, 0], p)
    return PhaseState(q, p)


# ---------------------------------------------------------------------------
# Batch forward and evolution operators
# ---------------------------------------------------------------------------


def _stride_params(params, states, active, direction, threads):
    if isinstance(params, SympNetParams):
        kernels.sympnet_stride(params.K, params.a, params.b, states, active, direction, threads)
    elif isinstance(params, HenonNetParams):
        kernels.henon_stride(
            params.K, params.a, params.b, params.eta, states, active, direction, threads
        )
    elif isinstance(params, GhnnParams):
        kernels.ghnn_stride(
            params.W1, params.b1, params.W2, params.b2, params.a, states, active, direction, threads
        )
    else:
        raise ContractError(f"unknown parameter type {type(params)!r}")


def forward_batch(params, X: np.ndarray, direction: int = 1, threads: int = 1) -> np.ndarray:
    out = np.array(X, dtype=float, order="C", copy=True)
    active = np.ones(out.shape[0], dtype=np.uint8)
    _stride_params(params, out, active, direction, threads)
    return out


_KINDS = {SympNetParams: "sympnet", HenonNetParams: "henonnet", GhnnParams: "ghnn"}


class SymplecticNetOperator(EvolutionOperator):
    """Evolution operator backed by a symplectic net; backward is the exact inverse."""

    def __init__(self, params, dt: float, threads: int | None = None):
        super().__init__(dt)
        self.params = params
        self.kind = _KINDS[type(params)]
        self.threads = threads or 1

    def _stride(self, states, active, direction):
        _stride_params(self.params, states, active, direction, self.threads)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _param_arrays(params) -> list[np.ndarray]:
    if isinstance(params, SympNetParams):
        return [params.K, params.a, params.b]
    if isinstance(params, HenonNetParams):
        return [params.K, params.a, params.b, params.eta]
    return [params.W1, params.b1, params.W2, params.b2, params.a]


def _grads_call(params, X, Y, grads) -> float:
    if isinstance(params, SympNetParams):
        return kernels.sympnet_grads(params.K, params.a, params.b, X, Y, *grads)
    if isinstance(params, HenonNetParams):
        return kernels.henon_grads(params.K, params.a, params.b, params.eta, X, Y, *grads)
    return kernels.ghnn_grads(
        params.W1, params.b1, params.W2, params.b2, params.a, X, Y, *grads
    )


class _Adam:
    def __init__(self, arrays, cfg: TrainConfig):
        self.arrays = arrays
        self.cfg = cfg
        self.m = [np.zeros_like(x) for x in arrays]
        self.v = [np.zeros_like(x) for x in arrays]
        self.t = 0

    def step(self, grads):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for x, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            x -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps_adam)


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    d = pred - target
    return float(np.sum(d * d) / pred.shape[0])


def nmse(pred: np.ndarray, target: np.ndarray) -> float:
    """MSE normalized by the target variance (figure parity metric)."""
    d = pred - target
    centered = target - target.mean(axis=0)
    return float(np.sum(d * d) / np.sum(centered * centered))


def train_symplectic(params, pairs, cfg: TrainConfig, val_pairs=None):
    """Adam minimization of the one-step MSE; returns (params, history).

    params is modified in place and returned. History rows are
    (epoch, train_mse, val_mse) with the train entry averaged over the
    epoch's minibatches; raises TrainingDivergenceError on non-finite loss.
    """
    if len(pairs) == 0:
        raise ContractError("empty training set")
    X = np.ascontiguousarray(pairs.inputs)
    Y = np.ascontiguousarray(pairs.targets)
    n_samples = X.shape[0]
    batch = cfg.batch_size or n_samples
    batch = min(batch, n_samples)
    arrays = _param_arrays(params)
    grads = [np.zeros_like(x) for x in arrays]
    opt = _Adam(arrays, cfg)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(30,)))
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples) if batch < n_samples else np.arange(n_samples)
        total = 0.0
        for lo in range(0, n_samples, batch):
            idx = order[lo : lo + batch]
            xb = np.ascontiguousarray(X[idx])
            yb = np.ascontiguousarray(Y[idx])
            loss = _grads_call(params, xb, yb, grads)
            if not np.isfinite(loss):
                raise TrainingDivergenceError("non-finite training loss", epoch=epoch)
            opt.step(grads)
            total += loss * xb.shape[0]
        train_loss = total / n_samples
        if val_pairs is not None and len(val_pairs):
            val_loss = mse(forward_batch(params, val_pairs.inputs), val_pairs.targets)
        else:
            val_loss = np.nan
        history.append((epoch, train_loss, val_loss))
    return params, history


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def count_parameters(params) -> int:
    """Exact trainable-parameter count (sum of parameter array sizes)."""
    return int(sum(arr.size for arr in _param_arrays(params)))


def jacobian_symplecticity_residual(op: EvolutionOperator, s: PhaseState) -> float:
    """Max-abs entry of (DF)^T J (DF) - J with a central-difference Jacobian."""
    y0 = s.to_vector()
    d = y0.shape[0]
    n = d // 2
    h = 1e-6 * max(1.0, float(np.max(np.abs(y0))))
    probes = np.repeat(y0[None, :], 2 * d, axis=0)
    for j in range(d):
        probes[2 * j, j] += h
        probes[2 * j + 1, j] -= h
    active = np.ones(2 * d, dtype=np.uint8)
    out = np.ascontiguousarray(probes)
    op._stride(out, active, +1)
    jac = np.empty((d, d))
    for j in range(d):
        jac[:, j] = (out[2 * j] - out[2 * j + 1]) / (2.0 * h)
    J = np.zeros((d, d))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return float(np.max(np.abs(jac.T @ J @ jac - J)))
