"""(mu/mu_w, lambda) CMA-ES with rejection of infeasible candidates.

Follows the standard parameter settings of Hansen's tutorial.  Candidates
for which ``feasible`` is false, or whose cost is not finite, are discarded
and redrawn until the generation is full.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NoFeasibleCandidate, RTBMError


def default_popsize(n: int) -> int:
    return 4 + int(math.floor(3 * math.log(n)))


class CMAES:
    def __init__(self, x0, sigma0: float, rng: np.random.Generator, popsize: int | None = None):
        x0 = np.asarray(x0, dtype=float)
        n = x0.size
        self.n = n
        self.rng = rng
        self.lam = popsize or default_popsize(n)
        self.mu = self.lam // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.mean = x0.copy()
        self.sigma = float(sigma0)
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.C = np.eye(n)
        self.generation = 0
        self._eigen_gen = 0

    def sample(self) -> np.ndarray:
        z = self.rng.standard_normal(self.n)
        return self.mean + self.sigma * (self.B @ (self.D * z))

    def tell(self, xs: np.ndarray, costs: np.ndarray) -> None:
        """Update from one full generation (``xs`` shape (lam, n))."""
        order = np.argsort(costs, kind="stable")
        sel = xs[order[: self.mu]]
        old = self.mean
        self.mean = self.weights @ sel
        y = (self.mean - old) / self.sigma
        c_inv_sqrt = self.B @ np.diag(1 / self.D) @ self.B.T
        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (c_inv_sqrt @ y)
        self.generation += 1
        hsig = (np.linalg.norm(self.ps) / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation))
                / self.chi_n) < 1.4 + 2 / (self.n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * y
        artmp = (sel - old) / self.sigma
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc) + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
                  + self.cmu * (artmp.T * self.weights) @ artmp)
        self.sigma *= math.exp((self.cs / self.damps) * (np.linalg.norm(self.ps) / self.chi_n - 1))
        if self.generation - self._eigen_gen > self.lam / (self.c1 + self.cmu) / self.n / 10:
            self._eigen_gen = self.generation
            self.C = np.triu(self.C) + np.triu(self.C, 1).T
            d2, self.B = np.linalg.eigh(self.C)
            self.D = np.sqrt(np.maximum(d2, 1e-300))


@dataclass
class TrainReport:
    final_cost: float
    iterations: int
    rejected_candidates: int
    cost_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "rejected_candidates": self.rejected_candidates,
            "cost_history": list(self.cost_history),
        }


def minimize(cost: Callable[[np.ndarray], float], x0, *, feasible: Callable[[np.ndarray], bool],
             sigma0: float, seed: int, max_iters: int, tol: float, popsize: int | None = None,
             max_resample: int = 200, window: int = 10, callback=None) -> tuple[np.ndarray, TrainReport]:
    """Minimise ``cost`` by CMA-ES, keeping the best feasible point seen.

    Stops when the best cost improved by less than ``tol`` over the last
    ``window`` generations and the costs within the current generation also
    span less than ``tol`` (the usual TolFun test), when the step size
    collapses, or after ``max_iters`` generations.
    """
    x0 = np.asarray(x0, dtype=float)
    es = CMAES(x0, sigma0, np.random.default_rng(seed), popsize)
    best_x = x0.copy()
    best = cost(x0)
    history = [float(best)]
    rejected = 0
    it = 0
    for it in range(1, max_iters + 1):
        xs = np.empty((es.lam, es.n))
        fs = np.empty(es.lam)
        for k in range(es.lam):
            for _attempt in range(max_resample):
                x = es.sample()
                if feasible(x):
                    try:
                        f = cost(x)
                    except (RTBMError, np.linalg.LinAlgError, FloatingPointError):
                        f = math.nan
                    if math.isfinite(f):
                        break
                rejected += 1
            else:
                raise NoFeasibleCandidate(f"no feasible candidate after {max_resample} draws")
            xs[k], fs[k] = x, f
        es.tell(xs, fs)
        i = int(np.argmin(fs))
        if fs[i] < best:
            best, best_x = float(fs[i]), xs[i].copy()
        history.append(best)
        if callback is not None:
            callback(it, best, es)
        if (len(history) > window and history[-window - 1] - history[-1] < tol
                and np.ptp(fs) < tol):
            break
        if es.sigma * np.max(es.D) < 1e-12:
            break
    return best_x, TrainReport(best, it, rejected, history)
