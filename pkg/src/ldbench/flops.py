"""Closed-form inference FLOP accounting for the four architectures.

Conventions: a dense m x n matrix-vector product costs 2mn - m, vector
ops and elementwise products cost their length, one activation evaluation
costs one FLOP per element, and the sparse reservoir matrix costs its
nonzero count times two. The dynamic counter walks the actual forward
structure accumulating the same per-operation costs, as an independent
check of the closed forms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import ContractError

ARCH_NAMES = ("sympnet", "henonnet", "ghnn", "reservoir")


@dataclass(frozen=True)
class ArchShape:
    arch: str
    l: int = 0  # learned Hamiltonians
    m: int = 0  # hidden width
    n: int = 0  # q-dimension
    N_x: int = 0  # reservoir size
    N_u: int = 0  # reservoir io dimension
    mu: float = 0.0  # reservoir sparsity

    def __post_init__(self):
        if self.arch not in ARCH_NAMES:
            raise ContractError(f"unknown architecture {self.arch!r}")
        if self.arch == "reservoir":
            if not (self.N_x > 0 and self.N_u > 0 and 0 < self.mu <= 1):
                raise ContractError("reservoir shape needs positive N_x, N_u, mu")
        else:
            if not (self.l > 0 and self.m > 0 and self.n > 0):
                raise ContractError(f"{self.arch} shape needs positive l, m, n")
            if self.arch == "henonnet" and self.l % 2:
                raise ContractError("henonnet needs an even Hamiltonian count")


def flops(shape: ArchShape) -> int:
    """Closed-form FLOPs for one inference step."""
    l, m, n = shape.l, shape.m, shape.n
    if shape.arch == "sympnet":
        return 4 * l * m * (2 * n + 1)
    if shape.arch == "henonnet":
        return 2 * l * (4 * m * n + 2 * m + n)
    if shape.arch == "ghnn":
        return 8 * l * m * (m + n + 1)
    # sparse term = twice the realized nonzero count round(mu N_x^2)
    nx, nu = shape.N_x, shape.N_u
    return 2 * int(round(shape.mu * nx * nx)) + 4 * nx * nu + 3 * nx - nu


class _OpCounter:
    def __init__(self):
        self.total = 0

    def matvec(self, rows, cols):
        self.total += 2 * rows * cols - rows

    def affine(self, rows, cols):
        # published two-layer-net convention: product 2*rows*cols plus bias
        self.total += 2 * rows * cols + rows

    def vec(self, length, times=1):
        self.total += length * times

    def sparse_matvec(self, nnz, rows):
        self.total += 2 * nnz - rows


def dynamic_count(shape: ArchShape) -> int:
    """Walk one forward pass, tallying per-operation costs."""
    c = _OpCounter()
    l, m, n = shape.l, shape.m, shape.n
    if shape.arch == "sympnet":
        for _ in range(2 * l):  # two gradient modules per Hamiltonian
            c.matvec(m, n)  # K x
            c.vec(m)  # + b
            c.vec(m)  # activation
            c.vec(m)  # diag(a)
            c.matvec(n, m)  # K^T
            c.vec(n)  # shear add
    elif shape.arch == "henonnet":
        for _ in range(l // 2):  # layers
            for _ in range(4):  # identical maps per layer
                c.matvec(m, n)
                c.vec(m)
                c.vec(m)
                c.vec(m)
                c.matvec(n, m)
                c.vec(n, 2)  # -q + grad V + eta
    elif shape.arch == "ghnn":
        for _ in range(2 * l):  # kinetic and potential nets per Hamiltonian
            c.affine(m, n)  # W1 x + b1
            c.vec(m)  # first activation
            c.affine(m, m)  # W2 h + b2
            c.vec(m)  # second activation
            c.vec(m)  # diag(a)
            c.matvec(m, m)  # W2^T
            c.matvec(n, m)  # W1^T with the cached first activation fused in
            c.vec(n)  # shear add
    else:
        nx, nu = shape.N_x, shape.N_u
        nnz = int(round(shape.mu * nx * nx))
        c.sparse_matvec(nnz, nx)  # W_x x
        c.matvec(nx, nu)  # W_u u
        c.vec(nx)  # sum of the two
        c.vec(nx)  # tanh
        c.vec(nx)  # alpha scaling
        c.vec(nx)  # (1 - alpha) x
        c.vec(nx)  # leak add
        c.matvec(nu, nx)  # readout
    return c.total


TABLE_DUFFING = [
    (ArchShape("sympnet", l=10, m=50, n=1), 6000),
    (ArchShape("henonnet", l=10, m=50, n=1), 6020),
    (ArchShape("ghnn", l=3, m=15, n=1), 6120),
    (ArchShape("reservoir", N_x=400, N_u=2, mu=0.006), 6318),
]

TABLE_NLS3 = [
    (ArchShape("sympnet", l=10, m=50, n=2), 10000),
    (ArchShape("henonnet", l=10, m=50, n=2), 10040),
    (ArchShape("ghnn", l=5, m=15, n=2), 10800),
    (ArchShape("reservoir", N_x=400, N_u=4, mu=0.0075), 9996),
]


def audit_table(rows) -> list[dict]:
    """Evaluate (shape, expected) pairs; flags closed-form mismatches."""
    report = []
    for shape, expected in rows:
        got = flops(shape)
        report.append(
            {
                "arch": shape.arch,
                "l": shape.l or "",
                "m": shape.m or "",
                "n": shape.n or "",
                "flops": got,
                "expected": expected,
                "match": got == expected,
            }
        )
    return report


def write_audit_csv(report: list[dict], path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["arch", "l", "m", "n", "flops", "expected", "match"]
        )
        writer.writeheader()
        writer.writerows(report)
