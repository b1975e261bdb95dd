"""Reference-flow integration and the uniform evolution-operator abstraction.

An EvolutionOperator advances flat states by a fixed output stride dt,
forward or backward. The reference flow wraps an embedded adaptive
Dormand-Prince 5(4) integrator (abs/rel tolerances default 1e-12, which
keeps conserved quantities to ~1e-10 over 100 time units); learned models
plug in through the same interface, so the Lagrangian descriptor engine
and error metrics treat every operator identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import SYSTEM_IDS, PhaseState, SystemSpec
from .errors import ContractError, IntegrationFailureError

DEFAULT_TOL = (1e-12, 1e-12)
STATE_LIMIT = 1e8


def _steps_from_span(span: float, dt: float) -> int:
    n = span / dt
    n_round = int(round(n))
    if n_round < 1 or abs(n - n_round) > 1e-6 * max(1.0, abs(n)):
        raise ContractError(f"span {span} is not an integer multiple of dt {dt}")
    return n_round


@dataclass
class Trajectory:
    """Uniformly sampled time series of flat states [q; p].

    dt is the signed sample spacing (negative for backward rollouts).
    """

    t0: float
    dt: float
    states: np.ndarray

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=float)
        if self.states.ndim != 2:
            raise ContractError("trajectory states must be a (T, 2n) array")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def state(self, i: int) -> PhaseState:
        return PhaseState.from_vector(self.states[i])

    def write_csv(self, path):
        n = self.dim // 2
        header = "t," + ",".join(f"q{j}" for j in range(n)) + "," + ",".join(
            f"p{j}" for j in range(n)
        )
        data = np.column_stack([self.times, self.states])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")

    @classmethod
    def read_csv(cls, path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        dt = t[1] - t[0] if len(t) > 1 else 0.0
        return cls(t0=float(t[0]), dt=float(dt), states=data[:, 1:])


class RolloutCursor:
    """Streaming rollout over a batch of states; nodes that blow up go inactive."""

    def __init__(self, op: "EvolutionOperator", states: np.ndarray, direction: int):
        self.op = op
        self.direction = 1 if direction >= 0 else -1
        self.states = np.array(states, dtype=float, order="C", copy=True)
        self.active = np.ones(self.states.shape[0], dtype=np.uint8)

    def step(self):
        self.op._stride(self.states, self.active, self.direction)
        live = np.flatnonzero(self.active)
        if live.size:
            rows = self.states[live]
            ok = np.all(np.isfinite(rows), axis=1) & (
                np.max(np.abs(rows), axis=1) < STATE_LIMIT
            )
            self.active[live[~ok]] = 0


class EvolutionOperator:
    """Base class: subclasses implement _stride (in-place batch advance by dt)."""

    kind = "abstract"

    def __init__(self, dt: float):
        if not dt > 0:
            raise ContractError("operator stride dt must be positive")
        self.dt = float(dt)

    def _stride(self, states: np.ndarray, active: np.ndarray, direction: int):
        raise NotImplementedError

    def start(self, states: np.ndarray, direction: int) -> RolloutCursor:
        return RolloutCursor(self, states, direction)

    def _step_single(self, s: PhaseState, direction: int) -> PhaseState:
        cur = self.start(s.to_vector()[None, :], direction)
        cur.step()
        if not cur.active[0]:
            raise IntegrationFailureError(
                f"{self.kind} step diverged", last_valid_time=0.0
            )
        return PhaseState.from_vector(cur.states[0])

    def step_forward(self, s: PhaseState) -> PhaseState:
        return self._step_single(s, +1)

    def step_backward(self, s: PhaseState) -> PhaseState:
        return self._step_single(s, -1)


class ReferenceOperator(EvolutionOperator):
    """Ground-truth flow sampled at stride dt via adaptive RK5(4).

    Backward steps integrate the negated vector field, so forward and
    backward share one code path with symmetric error behavior.
    """

    kind = "reference_flow"

    def __init__(self, sys: SystemSpec, dt: float, tol=DEFAULT_TOL, threads: int | None = None):
        super().__init__(dt)
        self.sys = sys
        self.rtol, self.atol = tol
        self.threads = threads or kernels.default_threads()
        self._sys_id = SYSTEM_IDS[sys.name]
        self._param = float(sys.param_vector()[0])

    def _stride(self, states, active, direction):
        kernels.reference_stride(
            self._sys_id,
            self._param,
            states,
            active,
            direction * self.dt,
            self.rtol,
            self.atol,
            self.threads,
        )


def wrap_reference(
    sys: SystemSpec, dt_out: float, tol=DEFAULT_TOL, threads: int | None = None
) -> ReferenceOperator:
    return ReferenceOperator(sys, dt_out, tol=tol, threads=threads)


class _SubsampledCursor:
    def __init__(self, inner, every: int):
        self._inner = inner
        self._every = every

    @property
    def states(self):
        return self._inner.states

    @property
    def active(self):
        return self._inner.active

    def step(self):
        for _ in range(self._every):
            self._inner.step()


class SubsampledOperator(EvolutionOperator):
    """Same dynamics, coarser output stride: one step = `every` base steps.

    Used by the sampling-stride sensitivity sweep, where the learned model
    is unchanged and only the descriptor sampling interval varies.
    """

    def __init__(self, base: EvolutionOperator, every: int):
        if every < 1:
            raise ContractError("subsampling factor must be a positive integer")
        super().__init__(base.dt * every)
        self.base = base
        self.every = int(every)
        self.kind = base.kind

    def start(self, states, direction):
        return _SubsampledCursor(self.base.start(states, direction), self.every)

    def _stride(self, states, active, direction):
        for _ in range(self.every):
            self.base._stride(states, active, direction)


def integrate_reference(
    sys: SystemSpec,
    s0: PhaseState,
    t_span: tuple[float, float],
    dt_out: float,
    tol=DEFAULT_TOL,
) -> Trajectory:
    """Integrate the named system over t_span, sampled every dt_out.

    Negative-time spans integrate the time-reversed field. Raises
    IntegrationFailureError (carrying the last valid time) if the adaptive
    stepper underflows or the state leaves the finite range.
    """
    if s0.n != sys.n:
        raise ContractError(f"state dimension {s0.n} does not match system n={sys.n}")
    t0, t1 = t_span
    if t1 == t0:
        raise ContractError("empty integration span")
    direction = 1 if t1 > t0 else -1
    n_steps = _steps_from_span(abs(t1 - t0), dt_out)
    op = ReferenceOperator(sys, dt_out, tol=tol)
    cur = op.start(s0.to_vector()[None, :], direction)
    out = np.empty((n_steps + 1, 2 * sys.n))
    out[0] = cur.states[0]
    for k in range(n_steps):
        cur.step()
        if not cur.active[0]:
            raise IntegrationFailureError(
                f"integration of {sys.name} failed",
                last_valid_time=t0 + direction * k * dt_out,
            )
        out[k + 1] = cur.states[0]
    return Trajectory(t0=t0, dt=direction * dt_out, states=out)


def rollout(op: EvolutionOperator, s0: PhaseState, n_steps: int) -> Trajectory:
    """Repeated stepping: n_steps > 0 forward, < 0 backward, 0 a single state."""
    direction = 1 if n_steps >= 0 else -1
    n_abs = abs(int(n_steps))
    cur = op.start(s0.to_vector()[None, :], direction)
    out = np.empty((n_abs + 1, s0.to_vector().shape[0]))
    out[0] = cur.states[0]
    for k in range(n_abs):
        cur.step()
        if not cur.active[0]:
            raise IntegrationFailureError(
                f"{op.kind} rollout diverged at step {k + 1}",
                last_valid_time=direction * k * op.dt,
            )
        out[k + 1] = cur.states[0]
    return Trajectory(t0=0.0, dt=direction * op.dt, states=out)
