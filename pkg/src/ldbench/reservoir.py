"""Leaky echo-state network with ridge readouts and CMA-ES hyperparameter search.

The recurrent weights W_x (sparse, rescaled to a target spectral radius) and
input weights W_u (uniform in [-sigma_B, sigma_B]) are frozen after
construction; training solves the Tikhonov normal equations for a linear
readout. A second readout trained on time-reversed trajectories over the
same frozen reservoir provides the backward operator required for
Lagrangian-descriptor computation. Autonomous evaluation at a phase-space
point warms the reservoir along a self-generated path from the
opposite-direction model (no reference data needed at inference).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import csr_matrix

from . import kernels
from .cmaes import cmaes_minimize
from .dynamics import PhaseState
from .errors import (
    ContractError,
    NumericalError,
    OptimizationFailureError,
    RankDeficiencyError,
)
from .integrate import EvolutionOperator, Trajectory

U_LIMIT = 1e6  # autonomous outputs beyond this are treated as diverged


@dataclass(frozen=True)
class ReservoirParams:
    N_h: int = 400
    mu: float = 0.006
    alpha: float = 0.5
    rho: float = 0.9
    sigma_B: float = 0.5
    beta_L: float = 1e-6
    N_w: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.N_h < 1 or self.N_w < 0:
            raise ContractError("N_h must be positive and N_w nonnegative")
        if not 0.0 < self.mu <= 1.0:
            raise ContractError("sparsity mu must lie in (0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ContractError("leak rate alpha must lie in (0, 1]")
        if self.rho <= 0.0 or self.sigma_B <= 0.0 or self.beta_L < 0.0:
            raise ContractError("rho, sigma_B must be positive and beta_L nonnegative")


class ReservoirModel:
    """Frozen reservoir (W_x, W_u) plus trained forward/backward readouts."""

    def __init__(self, params: ReservoirParams, n_u: int):
        self.params = params
        self.n_u = n_u
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=params.seed, spawn_key=(50,))
        )
        n_h = params.N_h
        nnz = int(round(params.mu * n_h * n_h))
        if nnz < 1:
            raise ContractError("sparsity too low: W_x would be empty")
        flat = rng.choice(n_h * n_h, size=nnz, replace=False)
        flat.sort()
        rows, cols = np.divmod(flat, n_h)
        vals = rng.uniform(-1.0, 1.0, size=nnz)
        wx = csr_matrix((vals, (rows, cols)), shape=(n_h, n_h))
        radius = _spectral_radius(wx)
        if radius == 0.0:
            raise NumericalError("drawn W_x has zero spectral radius")
        wx = wx * (params.rho / radius)
        self.W_x = wx.tocsr()
        self.W_u = rng.uniform(-params.sigma_B, params.sigma_B, size=(n_h, n_u))
        self.W_fwd: np.ndarray | None = None
        self.W_bwd: np.ndarray | None = None

    def spectral_radius(self) -> float:
        return _spectral_radius(self.W_x)

    def nnz(self) -> int:
        return int(self.W_x.nnz)

    def _csr_arrays(self):
        wx = self.W_x
        return (
            wx.indptr.astype(np.int64),
            wx.indices.astype(np.int64),
            wx.data.astype(np.float64),
        )


def _spectral_radius(wx) -> float:
    """Exact spectral radius via dense eigenvalues.

    Power iteration is unreliable here: the dominant eigenvalue of a random
    sparse matrix is usually a complex pair, so the vector iteration
    oscillates. The reservoir sizes in play make the dense solve cheap.
    """
    return float(np.max(np.abs(np.linalg.eigvals(wx.toarray()))))


def reservoir_step(model: ReservoirModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(1 - alpha) x + alpha tanh(W_x x + W_u u) for a single hidden state."""
    a = model.params.alpha
    pre = model.W_x @ x + model.W_u @ u
    return (1.0 - a) * x + a * np.tanh(pre)


def _collect_chunk(model: ReservoirModel, useqs: np.ndarray) -> np.ndarray:
    """Hidden states after each input for a (B, T, d) batch of sequences."""
    indptr, indices, data = model._csr_arrays()
    useqs = np.ascontiguousarray(useqs)
    B, T, _ = useqs.shape
    out = np.empty((B, T, model.params.N_h))
    x0 = np.zeros((B, model.params.N_h))
    kernels.reservoir_collect(
        indptr, indices, data, _wu_array(model), model.params.alpha, useqs, x0, out
    )
    return out


def _wu_array(model: ReservoirModel) -> np.ndarray:
    return np.ascontiguousarray(model.W_u)


def train_readout(
    model: ReservoirModel, trajectories: list[Trajectory], direction: str = "forward"
) -> np.ndarray:
    """Solve (H^T H + beta_L I) W^T = H^T Y over teacher-forced states.

    The first N_w collected states of every trajectory are discarded;
    'backward' reverses each trajectory in time first. W_x and W_u are
    never modified. Raises RankDeficiencyError if beta_L = 0 leaves the
    normal matrix singular.
    """
    if direction not in ("forward", "backward"):
        raise ContractError(f"bad direction {direction!r}")
    if not trajectories:
        raise ContractError("no training trajectories")
    p = model.params
    n_h = p.N_h
    gram = np.zeros((n_h, n_h))
    moment = np.zeros((n_h, model.n_u))
    chunk = max(1, int(2e8 / (8 * n_h * (len(trajectories[0]) if trajectories else 1))))
    groups: dict[int, list[np.ndarray]] = {}
    for traj in trajectories:
        states = traj.states if direction == "forward" else traj.states[::-1]
        if len(states) - 1 <= p.N_w:
            raise ContractError("trajectory shorter than the warm-up length")
        groups.setdefault(len(states), []).append(np.ascontiguousarray(states))
    for same_len in groups.values():
        for lo in range(0, len(same_len), chunk):
            batch = np.stack(same_len[lo : lo + chunk])
            h = _collect_chunk(model, batch[:, :-1])[:, p.N_w :]
            y = batch[:, 1 + p.N_w :]
            h2 = h.reshape(-1, n_h)
            y2 = y.reshape(-1, model.n_u)
            gram += h2.T @ h2
            moment += h2.T @ y2
    gram[np.diag_indices_from(gram)] += p.beta_L
    try:
        cho = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "normal matrix singular; increase beta_L or the data volume"
        ) from exc
    wt = _cho_solve(cho, moment)
    return np.ascontiguousarray(wt.T)


def _cho_solve(L, B):
    z = np.linalg.solve(L, B)
    return np.linalg.solve(L.T, z)


def readout_loss_gradient(model: ReservoirModel, W: np.ndarray, trajectories, direction):
    """Gradient of the regularized readout loss at W (stationarity check)."""
    p = model.params
    grad = 2.0 * p.beta_L * W.copy()
    for traj in trajectories:
        states = traj.states if direction == "forward" else traj.states[::-1]
        h = _collect_chunk(model, states[None, :-1])[0, p.N_w :]
        y = states[1 + p.N_w :]
        resid = h @ W.T - y
        grad += 2.0 * resid.T @ h
    return grad


class _ReservoirCursor:
    """Warm-started autonomous rollout over a batch of phase-space points.

    Warm-up is self-contained (no reference data at inference): the
    opposite-direction readout generates a path ending at u0, and the
    main-direction reservoir is teacher-forced along it. A cold-started
    generator emits an out-of-distribution transient, so the path is
    refined by ping-pong: alternately regenerate each direction's path
    with the hidden state warmed on the other's latest path. A couple of
    rounds contract the transient by orders of magnitude.
    """

    def __init__(self, op: "ReservoirOperator", states: np.ndarray, direction: int):
        self.op = op
        model = op.model
        p = model.params
        self.direction = 1 if direction >= 0 else -1
        u0 = np.array(states, dtype=float, order="C", copy=True)
        n, d = u0.shape
        self.active = np.ones(n, dtype=np.uint8)
        w_main = np.ascontiguousarray(
            model.W_fwd if self.direction > 0 else model.W_bwd
        )
        w_opp = np.ascontiguousarray(
            model.W_bwd if self.direction > 0 else model.W_fwd
        )
        self._w_main = w_main
        self._csr = model._csr_arrays()
        self._wu = _wu_array(model)
        self._alpha = p.alpha
        self._u0 = u0

        path_opp = self._generate(w_opp, None)
        for _ in range(op.warm_refine):
            x_main = self._force_reversed(path_opp)
            path_main = self._generate(w_main, x_main)
            x_opp = self._force_reversed(path_main)
            path_opp = self._generate(w_opp, x_opp)
        self.x = self._force_reversed(path_opp)
        self.states = u0
        self._mask_divergent(self.states)

    def _generate(self, w_read, x0):
        """Autonomous path [u0, u_1, ..., u_Nw] under the given readout."""
        p = self.op.model.params
        n, d = self._u0.shape
        indptr, indices, data = self._csr
        path = np.empty((n, p.N_w + 1, d))
        path[:, 0] = self._u0
        x = np.zeros((n, p.N_h)) if x0 is None else x0.copy()
        u = self._u0.copy()
        for t in range(p.N_w):
            kernels.reservoir_update(
                indptr, indices, data, self._wu, p.alpha, u, x, self.active, self.op.threads
            )
            kernels.reservoir_readout(w_read, x, u, self.active, self.op.threads)
            path[:, t + 1] = u
        bad = ~np.isfinite(path).all(axis=(1, 2)) | (
            np.nan_to_num(np.abs(path), nan=np.inf).max(axis=(1, 2)) > U_LIMIT
        )
        path[bad] = 0.0  # keep the arithmetic finite; nodes already flagged
        self.active[bad] = 0
        return path

    def _force_reversed(self, path):
        """Teacher-force over [u_Nw, ..., u_1] so the state arrives at u0."""
        p = self.op.model.params
        n = path.shape[0]
        indptr, indices, data = self._csr
        forcing = np.ascontiguousarray(path[:, :0:-1])
        out = np.empty((n, p.N_w, p.N_h))
        kernels.reservoir_collect(
            indptr, indices, data, self._wu, p.alpha, forcing, np.zeros((n, p.N_h)), out,
            self.op.threads,
        )
        return np.ascontiguousarray(out[:, -1])

    def _mask_divergent(self, rows):
        live = np.flatnonzero(self.active)
        if live.size:
            vals = rows[live]
            ok = np.all(np.isfinite(vals), axis=1) & (
                np.max(np.abs(vals), axis=1) < U_LIMIT
            )
            self.active[live[~ok]] = 0

    def step(self):
        indptr, indices, data = self._csr
        kernels.reservoir_update(
            indptr, indices, data, self._wu, self._alpha, self.states, self.x,
            self.active, self.op.threads,
        )
        kernels.reservoir_readout(self._w_main, self.x, self.states, self.active, self.op.threads)
        self._mask_divergent(self.states)


class ReservoirOperator(EvolutionOperator):
    kind = "reservoir"

    def __init__(
        self,
        model: ReservoirModel,
        dt: float,
        threads: int | None = None,
        warm_refine: int = 2,
    ):
        super().__init__(dt)
        if model.W_fwd is None or model.W_bwd is None:
            raise ContractError("both readouts must be trained before building the operator")
        if model.params.N_w < 1:
            raise ContractError("reservoir warm-up length N_w must be at least 1")
        self.model = model
        self.threads = threads or 1
        self.warm_refine = int(warm_refine)

    def start(self, states, direction):
        return _ReservoirCursor(self, states, direction)

    def _stride(self, states, active, direction):  # pragma: no cover - not used
        raise ContractError("reservoir stepping requires a warm-started cursor")

    def _step_single(self, s: PhaseState, direction: int) -> PhaseState:
        cur = self.start(s.to_vector()[None, :], direction)
        cur.step()
        if not cur.active[0]:
            raise NumericalError("reservoir step diverged")
        return PhaseState.from_vector(cur.states[0])


def autonomous_operator(
    model: ReservoirModel, dt: float, threads: int | None = None, warm_refine: int = 2
) -> ReservoirOperator:
    return ReservoirOperator(model, dt, threads, warm_refine)


# ---------------------------------------------------------------------------
# Multi-step validation fitness and CMA-ES hyperparameter search
# ---------------------------------------------------------------------------


def multi_step_fitness(
    op: ReservoirOperator,
    val_trajectories: list[Trajectory],
    n_starts: int = 20,
    horizon: int = 50,
    seed: int = 0,
) -> float:
    """Mean normalized error of self-warmed autonomous rollouts.

    Scores exactly the procedure the descriptor engine runs: each start
    point is warmed by the operator's own opposite-direction path, then
    rolled out `horizon` steps; the error is ||pred - truth||_F /
    ||truth||_F averaged over starts. Diverged rollouts contribute a large
    penalty instead of poisoning the mean.
    """
    p = op.model.params
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(51,)))
    starts = []
    for _ in range(n_starts):
        ti = int(rng.integers(0, len(val_trajectories)))
        traj = val_trajectories[ti].states
        lo = int(rng.integers(p.N_w, len(traj) - horizon - 1))
        starts.append((ti, lo))
    u0 = np.stack([val_trajectories[ti].states[lo] for ti, lo in starts])
    cur = op.start(u0, +1)
    preds = np.empty((n_starts, horizon, u0.shape[1]))
    for t in range(horizon):
        cur.step()
        preds[:, t] = cur.states
    errs = np.full(n_starts, 1e6)
    for i, (ti, lo) in enumerate(starts):
        truth = val_trajectories[ti].states[lo + 1 : lo + 1 + horizon]
        if cur.active[i] and np.all(np.isfinite(preds[i])):
            errs[i] = np.linalg.norm(preds[i] - truth) / max(np.linalg.norm(truth), 1e-300)
    return float(np.mean(errs))


SEARCH_SPACE = {
    "alpha": (0.05, 1.0),
    "rho": (0.3, 1.5),
    "sigma_B": (0.01, 2.0),
    "beta_L": (1e-10, 1e-2),
}


def cmaes_optimize(
    base: ReservoirParams,
    train_trajectories: list[Trajectory],
    val_trajectories: list[Trajectory],
    budget: int = 200,
    seed: int = 0,
    n_u: int | None = None,
    search_space: dict | None = None,
    subset: int | None = 40,
    dt: float = 0.1,
    warm_refine: int = 2,
):
    """CMA-ES over (alpha, rho, sigma_B, beta_L) in log coordinates.

    Every candidate builds a reservoir from the shared seed, trains fresh
    readouts (on a seeded training subset to keep the search affordable),
    and is scored by self-warmed multi-step validation error; returns
    (best ReservoirParams, best fitness, result). Raises
    OptimizationFailureError (carrying the best-so-far parameters) if every
    candidate diverged.
    """
    space = search_space or SEARCH_SPACE
    names = list(space.keys())
    lo = np.log(np.array([space[k][0] for k in names]))
    hi = np.log(np.array([space[k][1] for k in names]))
    if n_u is None:
        n_u = train_trajectories[0].dim
    if subset and len(train_trajectories) > subset:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(52,)))
        idx = rng.choice(len(train_trajectories), size=subset, replace=False)
        search_train = [train_trajectories[i] for i in idx]
    else:
        search_train = train_trajectories

    def build(z) -> ReservoirParams:
        vals = np.exp(np.clip(z, lo, hi))
        return replace(base, **{k: float(v) for k, v in zip(names, vals)})

    def objective(z) -> float:
        params = build(z)
        try:
            model = train_full_model(params, search_train, n_u)
            op = ReservoirOperator(model, dt, warm_refine=warm_refine)
            return multi_step_fitness(op, val_trajectories, seed=seed)
        except (NumericalError, np.linalg.LinAlgError):
            return 1e9

    x0 = 0.5 * (lo + hi)
    sigma0 = 0.3 * float(np.max(hi - lo))
    result = cmaes_minimize(
        objective, x0, sigma0, budget=budget, seed=seed, bounds=list(zip(lo, hi))
    )
    best = build(result.x_best)
    if not np.isfinite(result.f_best) or result.f_best >= 1e9:
        raise OptimizationFailureError("all CMA-ES candidates diverged", best=best)
    return best, result.f_best, result


def train_full_model(
    params: ReservoirParams,
    train_trajectories: list[Trajectory],
    n_u: int | None = None,
) -> ReservoirModel:
    """Build the reservoir and fit both direction readouts."""
    if n_u is None:
        n_u = train_trajectories[0].dim
    model = ReservoirModel(params, n_u)
    model.W_fwd = train_readout(model, train_trajectories, "forward")
    model.W_bwd = train_readout(model, train_trajectories, "backward")
    return model
