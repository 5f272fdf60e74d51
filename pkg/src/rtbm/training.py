"""Maximum-likelihood training of RTBMs and RTBM mixtures."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import softmax

from . import core
from .cmaes import TrainReport, minimize
from .descent import descend
from .core import RtbmParams
from .errors import (
    DimensionMismatch,
    Diverged,
    EmptyData,
    InvalidConfig,
    NonDiagonalT,
    NonFiniteSample,
)
from .mixture import MixtureModel, log_likelihood, mixture_from_vector, mixture_param_vector

__all__ = ["Optimizer", "TrainConfig", "TrainReport", "centre_on_data", "nll_cost", "train_ml",
           "train_gradient"]


class Optimizer(str, enum.Enum):
    CMAES = "cmaes"
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Optimizer = Optimizer.CMAES
    bound: float = 50.0
    population: int | None = None
    max_iters: int = 1000
    tol: float = 1e-4
    seed: int = 0
    init_scale: float = 1.0
    sigma0: float = 1.0
    lr: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if not self.bound > 0:
            raise InvalidConfig("bound must be positive")
        if not self.tol > 0:
            raise InvalidConfig("tol must be positive")
        if self.max_iters < 0:
            raise InvalidConfig("max_iters must be non-negative")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def check_data(data, n_v: int) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise EmptyData("no samples")
    if data.ndim == 1:
        data = data[:, None] if n_v == 1 else data[None, :]
    if data.ndim != 2 or data.shape[1] != n_v:
        raise DimensionMismatch(f"data has shape {data.shape}, model expects {n_v} visible units")
    if not np.all(np.isfinite(data)):
        raise NonFiniteSample("data contains non-finite samples")
    return data


def nll_cost(model, data) -> float:
    """Negative log-likelihood -sum_i log P(x_i) (or log M(x_i))."""
    data = check_data(data, model.n_v)
    return float(-np.sum(log_likelihood(model, data)))


def centre_on_data(model, data):
    """Translate a model (every component of a mixture) to the sample mean.

    A random initial model sits at the origin; moving it onto the data first
    saves the optimiser from spending its budget on the location.
    """
    data = check_data(data, model.n_v)
    c = data.mean(axis=0)
    if isinstance(model, MixtureModel):
        return MixtureModel(tuple(core.translate(p, c) for p in model.components), model.omegas)
    return core.translate(model, c)


# ---------------------------------------------------------------------------
# vector views of a model


class _View:
    """Bijection between a model and a flat parameter vector."""

    def __init__(self, model, diagonal_t: bool = False):
        self.template = model
        self.diagonal_t = diagonal_t

    def to_vec(self, model) -> np.ndarray:
        if isinstance(model, MixtureModel):
            return mixture_param_vector(model, self.diagonal_t)
        return core.to_vector(model, self.diagonal_t)

    def from_vec(self, x):
        m = self.template
        if isinstance(m, MixtureModel):
            return mixture_from_vector(x, m, self.diagonal_t)
        return core.from_vector(x, m.n_v, m.n_h, m.phase, self.diagonal_t)


def train_ml(model, data, config: TrainConfig | None = None):
    """Fit by CMA-ES on the negative log-likelihood.

    Candidates outside the box ``[-bound, bound]`` or violating the
    positive-definiteness conditions are rejected and redrawn.
    Returns ``(best_model, TrainReport)``.
    """
    config = config or TrainConfig()
    data = check_data(data, model.n_v)
    model.validate()
    view = _View(model)
    x0 = view.to_vec(model)
    if np.any(np.abs(x0) > config.bound):
        raise InvalidConfig("initial model lies outside the parameter bound")

    def feasible(x):
        return bool(np.all(np.abs(x) <= config.bound)) and view.from_vec(x).is_valid()

    def cost(x):
        return nll_cost(view.from_vec(x), data)

    if not math.isfinite(cost(x0)):
        raise Diverged("initial cost is not finite")
    best, report = minimize(cost, x0, feasible=feasible, sigma0=config.sigma0, seed=config.seed,
                            max_iters=config.max_iters, tol=config.tol, popsize=config.population)
    return view.from_vec(best), report


# ---------------------------------------------------------------------------
# gradient training


def _rtbm_loglik_grad(params: RtbmParams, data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample log P and its gradient in the diagonal-T vector layout."""
    lp = np.atleast_1d(core.log_density(params, data))
    g = core.log_density_gradients(params, data, wrt_t=True)
    return lp, core.gradient_vector(g, params.n_v, params.n_h)


def nll_gradient(model, data) -> tuple[float, np.ndarray]:
    """Cost and gradient, parameters laid out with diagonal T."""
    if isinstance(model, MixtureModel):
        parts = [_rtbm_loglik_grad(c, data) for c in model.components]
        logs = np.stack([p[0] for p in parts])
        log_w = np.log(model.weights)
        joint = logs + log_w[:, None]
        top = joint.max(axis=0)
        lm = top + np.log(np.exp(joint - top).sum(axis=0))
        resp = np.exp(joint - lm)  # (N, B)
        grads = [-(resp[i][:, None] * parts[i][1]).sum(axis=0) for i in range(len(parts))]
        g_om = -(resp - model.weights[:, None]).sum(axis=1)
        return float(-lm.sum()), np.concatenate(grads + [g_om])
    lp, g = _rtbm_loglik_grad(model, data)
    return float(-lp.sum()), -g.sum(axis=0)


def _check_diagonal(model):
    comps = model.components if isinstance(model, MixtureModel) else (model,)
    for c in comps:
        if np.count_nonzero(c.t - np.diag(np.diag(c.t))):
            raise NonDiagonalT("gradient training requires diagonal T")


def train_gradient(model, data, config: TrainConfig | None = None):
    """Fit by Adam or plain gradient descent using the closed-form gradients.

    Steps are clipped to the parameter box; a step that breaks positive
    definiteness is halved up to 20 times before giving up with
    :class:`LineSearchFailed`. Stops when the best cost moves
    by less than ``tol`` over 10 iterations and the last 10 costs lie within
    ``tol`` of each other, or after ``max_iters`` steps.
    """
    config = config or TrainConfig(optimizer=Optimizer.ADAM)
    if config.optimizer not in (Optimizer.ADAM, Optimizer.SGD):
        raise InvalidConfig("train_gradient needs optimizer 'adam' or 'sgd'")
    data = check_data(data, model.n_v)
    model.validate()
    _check_diagonal(model)
    view = _View(model, diagonal_t=True)
    x = view.to_vec(model)
    if not math.isfinite(nll_cost(model, data)):
        raise Diverged("initial cost is not finite")

    def fun(vec):
        return nll_gradient(view.from_vec(vec), data)

    def feasible(vec):
        return bool(np.all(np.abs(vec) <= config.bound)) and view.from_vec(vec).is_valid()

    best_x, report = descend(fun, x, feasible, config.lr, config.max_iters, config.tol,
                             adam=config.optimizer == Optimizer.ADAM, bound=config.bound)
    return view.from_vec(best_x), report


def train(model, data, config: TrainConfig | None = None):
    """Dispatch on ``config.optimizer``."""
    config = config or TrainConfig()
    if config.optimizer == Optimizer.CMAES:
        return train_ml(model, data, config)
    return train_gradient(model, data, config)


def mixture_weights(model: MixtureModel) -> np.ndarray:
    return softmax(model.omegas)
