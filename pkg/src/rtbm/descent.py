"""First-order descent (Adam or plain gradient steps) with feasibility backoff."""

from __future__ import annotations

import math

import numpy as np

from .cmaes import TrainReport
from .errors import LineSearchFailed, RTBMError

__all__ = ["descend"]


def descend(fun, x0, feasible, lr, max_iters, tol, adam=True, bound=None, window=10):
    """Minimise ``fun`` from ``x0`` using its gradient.

    Parameters
    ----------
    fun : callable
        Maps a parameter vector to ``(cost, gradient)``. It may raise
        :class:`RTBMError` or return a non-finite cost for points it cannot
        evaluate; such points are treated as infeasible.
    x0 : ndarray
        Starting point; its cost must be finite.
    feasible : callable
        Cheap predicate run before ``fun`` on every candidate.
    lr : float
        Learning rate.
    max_iters, tol : int, float
        Stop after ``max_iters`` steps, or once the best cost has moved by
        less than ``tol`` over ``window`` steps and the last ``window`` costs
        lie within ``tol`` of each other. The second test keeps an oscillating
        optimiser from stopping while the best cost merely stalls.
    adam : bool
        Adam moments when true, plain gradient steps otherwise.
    bound : float, optional
        Box ``[-bound, bound]``; candidates are projected onto it by clipping
        before the feasibility test, so a parameter can rest on the box edge.
        Other constraints are handled by halving the step.

    Returns
    -------
    best_x : ndarray
    report : TrainReport

    Raises
    ------
    LineSearchFailed
        When a step is still infeasible after 20 halvings.
    """
    x = np.asarray(x0, dtype=float).copy()
    cost, grad = fun(x)
    best_x, best = x.copy(), cost
    history = [cost]
    recent = [cost]
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    rejected = 0
    it = 0
    for it in range(1, max_iters + 1):
        if adam:
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad**2
            step = lr * (m / (1 - b1**it)) / (np.sqrt(v / (1 - b2**it)) + eps)
        else:
            step = lr * grad
        for _ in range(21):
            cand = x - step
            if bound is not None:
                cand = np.clip(cand, -bound, bound)
            if feasible(cand):
                try:
                    new_cost, new_grad = fun(cand)
                except RTBMError:
                    new_cost = math.nan
                if math.isfinite(new_cost):
                    break
            rejected += 1
            step = 0.5 * step
        else:
            raise LineSearchFailed("no feasible step after 20 halvings")
        x, cost, grad = cand, new_cost, new_grad
        if cost < best:
            best, best_x = cost, x.copy()
        history.append(best)
        recent = (recent + [cost])[-window:]
        if len(history) > window and history[-window - 1] - history[-1] < tol and np.ptp(recent) < tol:
            break
    return best_x, TrainReport(best, it, rejected, history)
