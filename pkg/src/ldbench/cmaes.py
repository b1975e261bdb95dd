"""Covariance matrix adaptation evolution strategy, (mu/mu_w, lambda) flavor.

Plain implementation of the standard algorithm (rank-1 + rank-mu covariance
update, cumulative step-size adaptation) for low-dimensional black-box
minimization. Deterministic for a fixed seed; terminates on the evaluation
budget. Box constraints are handled by repair: candidates are clipped to
the box before evaluation and the clipped point is what gets stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass
class CmaResult:
    x_best: np.ndarray
    f_best: float
    n_evals: int
    history: list  # (eval_index, f_best_so_far)


def cmaes_minimize(
    f,
    x0,
    sigma0: float,
    budget: int,
    seed: int = 0,
    bounds=None,
    popsize: int | None = None,
) -> CmaResult:
    """Minimize f over R^n (optionally box-bounded) within a fixed eval budget."""
    if budget < 1:
        raise ContractError("budget must be positive")
    mean = np.array(x0, dtype=float)
    n = mean.shape[0]
    if bounds is not None:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
        mean = np.clip(mean, lo, hi)

    lam = popsize or 4 + int(3 * np.log(n))
    mu = lam // 2
    weights = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights /= weights.sum()
    mueff = 1.0 / np.sum(weights**2)

    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, np.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

    sigma = float(sigma0)
    pc = np.zeros(n)
    ps = np.zeros(n)
    C = np.eye(n)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(40,)))

    x_best = mean.copy()
    f_best = np.inf
    n_evals = 0
    history = []

    while n_evals < budget:
        eigvals, eigvecs = np.linalg.eigh(C)
        eigvals = np.maximum(eigvals, 1e-20)
        D = np.sqrt(eigvals)
        inv_sqrt_c = eigvecs @ np.diag(1.0 / D) @ eigvecs.T

        zs = rng.standard_normal((lam, n))
        ys = zs @ np.diag(D) @ eigvecs.T
        xs = mean + sigma * ys
        if bounds is not None:
            xs = np.clip(xs, lo, hi)

        n_gen = min(lam, budget - n_evals)
        fs = np.empty(n_gen)
        for i in range(n_gen):
            fs[i] = f(xs[i])
            n_evals += 1
            if np.isfinite(fs[i]) and fs[i] < f_best:
                f_best = float(fs[i])
                x_best = xs[i].copy()
            history.append((n_evals, f_best))
        if n_gen < lam:
            break  # partial last generation: keep the incumbent, no update

        order = np.argsort(fs, kind="stable")[:mu]
        sel_w = weights
        y_sel = (xs[order] - mean) / sigma
        y_w = sel_w @ y_sel

        mean = mean + sigma * y_w
        ps = (1 - cs) * ps + np.sqrt(cs * (2 - cs) * mueff) * (inv_sqrt_c @ y_w)
        h_sig = float(
            np.linalg.norm(ps) / np.sqrt(1 - (1 - cs) ** (2 * n_evals / lam)) / chi_n
            < 1.4 + 2 / (n + 1)
        )
        pc = (1 - cc) * pc + h_sig * np.sqrt(cc * (2 - cc) * mueff) * y_w
        rank_mu = (y_sel.T * sel_w) @ y_sel
        C = (
            (1 - c1 - cmu) * C
            + c1 * (np.outer(pc, pc) + (1 - h_sig) * cc * (2 - cc) * C)
            + cmu * rank_mu
        )
        sigma *= np.exp((cs / damps) * (np.linalg.norm(ps) / chi_n - 1))
        sigma = min(sigma, 1e8)

    return CmaResult(x_best=x_best, f_best=f_best, n_evals=n_evals, history=history)
