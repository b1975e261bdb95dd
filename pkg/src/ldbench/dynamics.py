"""Benchmark Hamiltonian systems: Duffing, three-mode NLS truncation, harmonic.

State layout is a flat vector [q; p] with n degrees of freedom declared by
the system (Duffing/harmonic n=1, NLS n=2 with q=(q0,q1), p=(p0,p1)).
Hamilton's equations use the convention qdot = dH/dp, pdot = -dH/dq.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePhaseError, DimensionMismatchError, DomainError

SYSTEM_NAMES = ("duffing", "nls3", "harmonic")
SYSTEM_IDS = {"duffing": 0, "nls3": 1, "harmonic": 2}
_SYSTEM_NDOF = {"duffing": 1, "nls3": 2, "harmonic": 1}
_REQUIRED_PARAMS = {"duffing": (), "nls3": ("k",), "harmonic": ("omega",)}


@dataclass(frozen=True)
class PhaseState:
    """Canonical coordinates (q, p), each a real vector of dimension n."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise DimensionMismatchError(f"q/p shape mismatch: {q.shape} vs {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise DomainError("phase state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, v) -> "PhaseState":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.shape[0] % 2:
            raise DimensionMismatchError(f"flat state must have even length, got {v.shape}")
        n = v.shape[0] // 2
        return cls(v[:n].copy(), v[n:].copy())


@dataclass(frozen=True)
class SystemSpec:
    """One of the three named benchmark systems plus its parameters."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SYSTEM_NAMES:
            raise DomainError(f"unknown system {self.name!r}")
        required = _REQUIRED_PARAMS[self.name]
        if set(self.params) != set(required):
            raise DomainError(
                f"{self.name} requires params {set(required)}, got {set(self.params)}"
            )
        for key in required:
            if not self.params[key] > 0:
                raise DomainError(f"{self.name} parameter {key} must be positive")

    @property
    def n(self) -> int:
        return _SYSTEM_NDOF[self.name]

    @property
    def dim(self) -> int:
        return 2 * self.n

    def param_vector(self) -> np.ndarray:
        """Numeric parameter slot used by the batch kernels (k or omega)."""
        if self.name == "nls3":
            return np.array([self.params["k"]], dtype=float)
        if self.name == "harmonic":
            return np.array([self.params["omega"]], dtype=float)
        return np.zeros(1)


def duffing() -> SystemSpec:
    return SystemSpec("duffing")


def nls3(k: float = 0.95) -> SystemSpec:
    return SystemSpec("nls3", {"k": float(k)})


def harmonic(omega: float = 1.0) -> SystemSpec:
    return SystemSpec("harmonic", {"omega": float(omega)})


@dataclass(frozen=True)
class PolarState:
    """Reduced NLS coordinates: normalized mode-0 power eta and relative phase phi."""

    eta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta}")
        object.__setattr__(self, "phi", wrap_angle(self.phi))


def wrap_angle(phi: float) -> float:
    """Wrap to [-pi, pi)."""
    return float((phi + np.pi) % (2.0 * np.pi) - np.pi)


def _check_state(sys: SystemSpec, s: PhaseState):
    if s.n != sys.n:
        raise DimensionMismatchError(f"{sys.name} expects n={sys.n}, state has n={s.n}")


def rhs_batch(sys: SystemSpec, y: np.ndarray) -> np.ndarray:
    """Vector field on a batch of flat states, shape (N, 2n) -> (N, 2n)."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    if sys.name == "duffing":
        # pdot = -V'(q) with the double-well V(q) = -q^2/2 + q^4/4
        q, p = y[:, 0], y[:, 1]
        out[:, 0] = p
        out[:, 1] = q - q**3
    elif sys.name == "harmonic":
        w = sys.params["omega"]
        out[:, 0] = w * y[:, 1]
        out[:, 1] = -w * y[:, 0]
    else:
        k2 = sys.params["k"] ** 2
        q0, q1, p0, p1 = y[:, 0], y[:, 1], y[:, 2], y[:, 3]
        z0 = q0**2 + p0**2
        z1 = q1**2 + p1**2
        out[:, 0] = -z0 * p0 - 2.0 * q0 * q1 * p1 - p0 * (q1**2 + 3.0 * p1**2)
        out[:, 1] = (
            -0.5 * k2 * p1
            - 1.5 * p1 * z1
            - 2.0 * q0 * p0 * q1
            - p1 * (q0**2 + 3.0 * p0**2)
        )
        out[:, 2] = z0 * q0 + 2.0 * p0 * q1 * p1 + q0 * (3.0 * q1**2 + p1**2)
        out[:, 3] = (
            0.5 * k2 * q1
            + 1.5 * q1 * z1
            + 2.0 * q0 * p0 * p1
            + q1 * (3.0 * q0**2 + p0**2)
        )
    return out


def vector_field(sys: SystemSpec, s: PhaseState) -> PhaseState:
    """(qdot, pdot) of the named system at state s."""
    _check_state(sys, s)
    d = rhs_batch(sys, s.to_vector()[None, :])[0]
    return PhaseState(d[: sys.n], d[sys.n :])


def hamiltonian_batch(sys: SystemSpec, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if sys.name == "duffing":
        q, p = y[:, 0], y[:, 1]
        return 0.5 * p**2 - 0.5 * q**2 + 0.25 * q**4
    if sys.name == "harmonic":
        w = sys.params["omega"]
        return 0.5 * w * (y[:, 0] ** 2 + y[:, 1] ** 2)
    k2 = sys.params["k"] ** 2
    q0, q1, p0, p1 = y[:, 0], y[:, 1], y[:, 2], y[:, 3]
    z0 = q0**2 + p0**2
    z1 = q1**2 + p1**2
    return -(
        0.25 * z0**2
        + 0.375 * z1**2
        + 0.25 * k2 * z1
        + 2.0 * q0 * p0 * q1 * p1
        + 0.5 * q0**2 * (3.0 * q1**2 + p1**2)
        + 0.5 * p0**2 * (q1**2 + 3.0 * p1**2)
    )


def hamiltonian(sys: SystemSpec, s: PhaseState) -> float:
    """Energy of state s."""
    _check_state(sys, s)
    return float(hamiltonian_batch(sys, s.to_vector()[None, :])[0])


def total_power(s: PhaseState) -> float:
    """Conserved NLS total power: sum of q_j^2 + p_j^2 over both modes."""
    if s.n != 2:
        raise DimensionMismatchError("total_power expects the 4-dimensional NLS state")
    return float(np.dot(s.q, s.q) + np.dot(s.p, s.p))


def polar_to_cartesian(ps: PolarState) -> PhaseState:
    """Map the polar section (eta, phi) to the unit-power Cartesian state.

    q0 = sqrt(eta) cos(phi), p0 = -sqrt(eta) sin(phi),
    q1 = sqrt(1 - eta),      p1 = 0.
    """
    r0 = np.sqrt(ps.eta)
    q0 = r0 * np.cos(ps.phi)
    p0 = -r0 * np.sin(ps.phi)
    q1 = np.sqrt(1.0 - ps.eta)
    return PhaseState(np.array([q0, q1]), np.array([p0, 0.0]))


def polar_to_cartesian_batch(eta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(eta < 0.0) or np.any(eta > 1.0):
        raise DomainError("eta must lie in [0, 1]")
    r0 = np.sqrt(eta)
    out = np.empty(eta.shape + (4,))
    out[..., 0] = r0 * np.cos(phi)
    out[..., 1] = np.sqrt(1.0 - eta)
    out[..., 2] = -r0 * np.sin(phi)
    out[..., 3] = 0.0
    return out


def cartesian_to_polar(s: PhaseState) -> PolarState:
    """Exact inverse of polar_to_cartesian on the unit-power section.

    eta is the mode-0 power fraction; phi is recovered from the mode phases
    theta_j = atan2(q_j, p_j) of p_j + i q_j = zeta_j exp(i theta_j).
    Conventions at undefined phases: zeta_1 = 0 -> phi = 0,
    zeta_0 = 0 -> phi = pi/2 (such states are excluded from polar-grid work).
    """
    if s.n != 2:
        raise DimensionMismatchError("cartesian_to_polar expects the 4-dimensional NLS state")
    power = total_power(s)
    if power <= 0.0:
        raise DegeneratePhaseError("zero-power state has no polar representation")
    z0sq = s.q[0] ** 2 + s.p[0] ** 2
    z1sq = s.q[1] ** 2 + s.p[1] ** 2
    eta = z0sq / power
    if z0sq == 0.0:
        return PolarState(0.0, np.pi / 2.0)
    if z1sq == 0.0:
        return PolarState(min(eta, 1.0), 0.0)
    theta0 = np.arctan2(s.q[0], s.p[0])
    theta1 = np.arctan2(s.q[1], s.p[1])
    return PolarState(min(eta, 1.0), wrap_angle(theta0 - theta1))


def duffing_homoclinic(q: float) -> tuple[float, float]:
    """Signed momentum pair (+q sqrt(1 - q^2/2), -q sqrt(1 - q^2/2)) on the separatrix."""
    if abs(q) > np.sqrt(2.0) * (1.0 + 1e-15):
        raise DomainError(f"|q| must not exceed sqrt(2), got {q}")
    radicand = max(0.0, 1.0 - 0.5 * q * q)
    s = q * np.sqrt(radicand)
    return (float(s), float(-s))


def nls3_homoclinic_cos2phi(eta: float, k: float) -> float:
    """cos(2 phi) along the reduced NLS homoclinic orbit at mode-0 power eta.

    Valid for 0 < eta < 1; the caller rejects values outside [-1, 1] as
    off-orbit (the curve only spans part of the eta range).
    """
    if not 0.0 < eta < 1.0:
        raise DomainError("eta must lie strictly inside (0, 1) on the homoclinic curve")
    return (0.75 * eta * eta - 0.5 * (1.0 - k * k) * eta) / (eta * (1.0 - eta))


def nls3_reduced_hamiltonian(ps: PolarState, k: float) -> float:
    """Reduced Hamiltonian eta(1-eta)cos(2phi) + (1-k^2)eta/2 - 3eta^2/4.

    Zero on the homoclinic orbit; its sign separates inside from outside.
    """
    return nls3_reduced_hamiltonian_batch(ps.eta, ps.phi, k)


def nls3_reduced_hamiltonian_batch(eta, phi, k: float):
    eta = np.asarray(eta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    val = (
        eta * (1.0 - eta) * np.cos(2.0 * phi)
        + 0.5 * (1.0 - k * k) * eta
        - 0.75 * eta * eta
    )
    if val.ndim == 0:
        return float(val)
    return val
