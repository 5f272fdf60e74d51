"""Theta neural networks and the RTBM feature-extraction classifier.

A theta layer maps an input ``v`` to the conditional expectations
``E(h | v)`` of an RTBM whose hidden argument is ``v^t W + b_h``.  With a
diagonal ``Q`` each unit is an independent one-dimensional Jacobi-theta
log-derivative (the ``E_d`` activation).  Theta layers can be stacked with
ordinary affine layers carrying a fixed nonlinearity.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, log_softmax, softmax

from . import theta as th
from .cmaes import TrainReport, minimize
from .core import Phase, RtbmParams
from .descent import descend
from .errors import (
    DegenerateData,
    Diverged,
    DimensionMismatch,
    EmptyData,
    InvalidConfig,
    InvalidParams,
    LengthMismatch,
    NonFiniteSample,
    NonPositiveDefiniteOmega,
    ShapeMismatch,
)

__all__ = [
    "ThetaLayer",
    "AffineLayer",
    "TnnNetwork",
    "Loss",
    "Activation",
    "layer_forward",
    "layer_backward",
    "network_forward",
    "network_loss",
    "network_loss_and_grad",
    "network_train",
    "parse_architecture",
    "build_network",
    "FeatureClassifier",
    "feature_classifier_fit",
]

PD_TOL = 1e-12


class Loss(str, enum.Enum):
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


class Activation(str, enum.Enum):
    TANH = "tanh"
    LINEAR = "linear"
    SIGMOID = "sigmoid"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# layers


@dataclass(frozen=True, eq=False)
class ThetaLayer:
    """Layer of expectation units.

    ``q`` is a vector of the diagonal entries when ``diagonal_q`` is true and
    a full symmetric matrix otherwise.  In phase II the stored ``w`` and
    ``b_h`` are the real magnitudes of the imaginary coupling and bias.
    """

    w: np.ndarray
    b_h: np.ndarray
    q: np.ndarray
    diagonal_q: bool = True
    phase: Phase = Phase.I

    def __post_init__(self):
        w = _frozen(np.atleast_2d(self.w))
        b = _frozen(np.atleast_1d(self.b_h))
        q = _frozen(self.q)
        out = w.shape[1]
        if b.shape != (out,):
            raise ShapeMismatch(f"b_h has shape {b.shape}, expected ({out},)")
        if self.diagonal_q:
            if q.ndim == 2:
                if np.count_nonzero(q - np.diag(np.diag(q))):
                    raise InvalidParams("diagonal_q layer has off-diagonal Q entries")
                q = _frozen(np.diag(q))
            if q.shape != (out,):
                raise ShapeMismatch(f"q has shape {q.shape}, expected ({out},)")
        elif q.shape != (out, out):
            raise ShapeMismatch(f"q has shape {q.shape}, expected ({out}, {out})")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b_h", b)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "phase", Phase(self.phase))

    @property
    def in_dim(self) -> int:
        return self.w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w.shape[1]

    @property
    def unit(self) -> complex:
        return 1.0 if self.phase == Phase.I else 1j

    def q_matrix(self) -> np.ndarray:
        return np.diag(self.q) if self.diagonal_q else np.array(self.q)

    def is_valid(self) -> bool:
        if not np.all(np.isfinite(self.q)):
            return False
        if self.diagonal_q:
            return bool(np.all(self.q > PD_TOL))
        if not np.allclose(self.q, self.q.T, rtol=0, atol=1e-12):
            return False
        return bool(np.linalg.eigvalsh(self.q)[0] > PD_TOL)

    def validate(self) -> None:
        if not self.is_valid():
            raise NonPositiveDefiniteOmega("theta layer Q must be symmetric positive definite")

    def n_params(self) -> int:
        o = self.out_dim
        return self.in_dim * o + o + (o if self.diagonal_q else o * (o + 1) // 2)

    def to_vector(self) -> np.ndarray:
        q = self.q if self.diagonal_q else self.q[np.triu_indices(self.out_dim)]
        return np.concatenate([self.w.ravel(), self.b_h, q])

    def from_vector(self, vec) -> "ThetaLayer":
        i, o = self.in_dim, self.out_dim
        w = vec[: i * o].reshape(i, o)
        b = vec[i * o: i * o + o]
        rest = vec[i * o + o:]
        if self.diagonal_q:
            q = rest
        else:
            q = np.zeros((o, o))
            q[np.triu_indices(o)] = rest
            q = q + np.triu(q, 1).T
        return ThetaLayer(w, b, q, self.diagonal_q, self.phase)

    def to_rtbm(self, t=None, b_v=None) -> RtbmParams:
        """The RTBM whose expectation this layer computes (T and B_v are irrelevant)."""
        t = np.eye(self.in_dim) if t is None else t
        b_v = np.zeros(self.in_dim) if b_v is None else b_v
        return RtbmParams(t, self.q_matrix(), self.w, b_v, self.b_h, self.phase)

    def to_dict(self) -> dict:
        return {"type": "theta", "w": self.w.tolist(), "b_h": self.b_h.tolist(), "q": self.q.tolist(),
                "diagonal_q": self.diagonal_q, "phase": int(self.phase)}


@dataclass(frozen=True, eq=False)
class AffineLayer:
    """Ordinary dense layer ``act(v W + b)``."""

    w: np.ndarray
    b: np.ndarray
    activation: Activation = Activation.LINEAR

    def __post_init__(self):
        w = _frozen(np.atleast_2d(self.w))
        b = _frozen(np.atleast_1d(self.b))
        if b.shape != (w.shape[1],):
            raise ShapeMismatch(f"b has shape {b.shape}, expected ({w.shape[1]},)")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def in_dim(self) -> int:
        return self.w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w.shape[1]

    def is_valid(self) -> bool:
        return True

    def n_params(self) -> int:
        return self.w.size + self.b.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.b])

    def from_vector(self, vec) -> "AffineLayer":
        k = self.w.size
        return AffineLayer(vec[:k].reshape(self.w.shape), vec[k:], self.activation)

    def to_dict(self) -> dict:
        return {"type": "affine", "w": self.w.tolist(), "b": self.b.tolist(),
                "activation": self.activation.value}


def layer_from_dict(d: dict):
    if d["type"] == "theta":
        return ThetaLayer(d["w"], d["b_h"], d["q"], d["diagonal_q"], Phase(d["phase"]))
    if d["type"] == "affine":
        return AffineLayer(d["w"], d["b"], Activation(d["activation"]))
    raise InvalidParams(f"unknown layer type {d['type']!r}")


# ---------------------------------------------------------------------------
# forward and backward passes of one layer


def _inputs(layer, v) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = np.atleast_2d(v)
    if V.ndim != 2 or V.shape[1] != layer.in_dim:
        raise DimensionMismatch(f"input has shape {v.shape}, layer expects {layer.in_dim} features")
    return V, single


def _theta_terms(layer: ThetaLayer, V: np.ndarray, order: int):
    """Activation and its derivatives with respect to the stored pre-activation.

    Returns ``(E, J, G)`` where ``J[b, i, j] = dE_i/dy_j`` (or just the
    diagonal ``J[b, i]`` on the diagonal path) and ``G`` holds the
    derivatives with respect to the free Q parameters:
    ``G[b, i, j, k] = dE_i/dQ_jk`` for the tied symmetric entry (or
    ``G[b, i] = dE_i/dq_i`` on the diagonal path).
    """
    y = V @ layer.w + layer.b_h
    if layer.diagonal_q:
        two = layer.phase == Phase.II
        l1, l2, l3 = th.jacobi_log_derivs(y, layer.q[None, :], two)
        E = -l1
        if order == 0:
            return E, None, None
        sign = -1.0 if two else 1.0
        return E, -l2, sign * 0.5 * (l3 + 2.0 * l1 * l2)
    u = layer.unit
    _, D, H, T3 = th.theta_ratios(u * y, layer.q, 3 if order else 1)
    E = np.real(-u * D)
    if order == 0:
        return E, None, None
    C = H - D[:, :, None] * D[:, None, :]
    J = np.real(-u * u * C)
    o = layer.out_dim
    factor = np.where(np.eye(o, dtype=bool), 0.5, 1.0)
    # dD_i/dQ_jk = -factor_jk (T3_ijk - D_i H_jk)
    G = np.real(u * factor * (T3 - D[:, :, None, None] * H[:, None, :, :]))
    return E, J, G


def _affine_act(act: Activation, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if act == Activation.TANH:
        out = np.tanh(a)
        return out, 1.0 - out * out
    if act == Activation.SIGMOID:
        out = expit(a)
        return out, out * (1.0 - out)
    return a, np.ones_like(a)


def layer_forward(layer, v) -> np.ndarray:
    """Layer output for one input vector or a batch (rows)."""
    V, single = _inputs(layer, v)
    if isinstance(layer, ThetaLayer):
        out = _theta_terms(layer, V, 0)[0]
    else:
        out = _affine_act(layer.activation, V @ layer.w + layer.b)[0]
    return out[0] if single else out


@dataclass(frozen=True)
class LayerGradients:
    """Gradients of ``sum_b upstream[b] . output[b]``.

    For theta layers ``q`` is the vector of diagonal derivatives on the
    diagonal path and a symmetric matrix otherwise (entry ``jk`` is the
    derivative with respect to the tied pair ``Q_jk = Q_kj``).
    """

    w: np.ndarray
    b: np.ndarray
    q: np.ndarray | None
    input: np.ndarray

    def __iter__(self):
        return iter((self.w, self.b, self.q, self.input))


def layer_backward(layer, v, upstream) -> LayerGradients:
    """Back-propagate ``upstream`` (shape like the output) through ``layer``."""
    V, single = _inputs(layer, v)
    U = np.atleast_2d(np.asarray(upstream, dtype=float))
    if U.shape != (V.shape[0], layer.out_dim):
        raise DimensionMismatch(f"upstream has shape {np.shape(upstream)}, expected output shape")
    gq = None
    if isinstance(layer, ThetaLayer):
        _, J, G = _theta_terms(layer, V, 1)
        if layer.diagonal_q:
            delta = U * J
            gq = (U * G).sum(axis=0)
        else:
            delta = np.einsum("bi,bij->bj", U, J)
            gq = np.einsum("bi,bijk->jk", U, G)
    else:
        _, dact = _affine_act(layer.activation, V @ layer.w + layer.b)
        delta = U * dact
    g_in = delta @ layer.w.T
    return LayerGradients(V.T @ delta, delta.sum(axis=0), gq, g_in[0] if single else g_in)


def _layer_grad_vector(layer, grads: LayerGradients) -> np.ndarray:
    if isinstance(layer, ThetaLayer):
        q = grads.q if layer.diagonal_q else grads.q[np.triu_indices(layer.out_dim)]
        return np.concatenate([grads.w.ravel(), grads.b, q])
    return np.concatenate([grads.w.ravel(), grads.b])


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True, eq=False)
class TnnNetwork:
    layers: tuple
    loss: Loss = Loss.MSE

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InvalidParams("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeMismatch(f"layer output {a.out_dim} does not match next input {b.in_dim}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "loss", Loss(self.loss))

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([layer.to_vector() for layer in self.layers])

    def from_vector(self, vec) -> "TnnNetwork":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params(),):
            raise LengthMismatch(f"expected {self.n_params()} parameters, got {vec.shape}")
        layers = []
        pos = 0
        for layer in self.layers:
            k = layer.n_params()
            layers.append(layer.from_vector(vec[pos:pos + k]))
            pos += k
        return TnnNetwork(tuple(layers), self.loss)

    def is_valid(self) -> bool:
        return all(layer.is_valid() for layer in self.layers)

    def to_dict(self) -> dict:
        return {"kind": "tnn", "loss": self.loss.value, "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "TnnNetwork":
        return cls(tuple(layer_from_dict(x) for x in d["layers"]), Loss(d["loss"]))


def network_forward(net: TnnNetwork, x) -> np.ndarray:
    out = np.asarray(x, dtype=float)
    for layer in net.layers:
        out = layer_forward(layer, out)
    return out


def _targets(net: TnnNetwork, x, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(x, dtype=float)
    Y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if net.in_dim == 1 else X[None, :]
    if Y.ndim == 1:
        Y = Y[:, None] if net.out_dim == 1 else Y[None, :]
    if X.shape[0] == 0:
        raise EmptyData("no samples")
    if X.ndim != 2 or X.shape[1] != net.in_dim or Y.shape != (X.shape[0], net.out_dim):
        raise ShapeMismatch(f"inputs {X.shape} and targets {Y.shape} do not fit a "
                            f"{net.in_dim}->{net.out_dim} network")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise NonFiniteSample("inputs or targets contain non-finite values")
    return X, Y


def _loss_value(loss: Loss, out: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and its derivative with respect to the network output."""
    n = out.shape[0]
    if loss == Loss.MSE:
        r = out - Y
        return float(np.mean(r * r)), 2.0 * r / r.size
    ls = log_softmax(out, axis=1)
    return float(-(Y * ls).sum() / n), (softmax(out, axis=1) * Y.sum(axis=1, keepdims=True) - Y) / n


def network_loss(net: TnnNetwork, x, y) -> float:
    """Mean squared error over all outputs, or mean softmax cross-entropy."""
    X, Y = _targets(net, x, y)
    return _loss_value(net.loss, network_forward(net, X), Y)[0]


def network_loss_and_grad(net: TnnNetwork, x, y) -> tuple[float, np.ndarray]:
    """Loss and its gradient in the :meth:`TnnNetwork.to_vector` layout."""
    X, Y = _targets(net, x, y)
    acts = [X]
    for layer in net.layers:
        acts.append(layer_forward(layer, acts[-1]))
    value, up = _loss_value(net.loss, acts[-1], Y)
    parts = []
    for layer, inp in zip(reversed(net.layers), reversed(acts[:-1])):
        g = layer_backward(layer, inp, up)
        parts.append(_layer_grad_vector(layer, g))
        up = g.input
    return value, np.concatenate(parts[::-1])


# ---------------------------------------------------------------------------
# construction


_SPEC = re.compile(r"^(\d+)([a-z]*)$")
_KINDS = {"": "theta", "d": "theta", "theta": "theta", "g": "theta_full", "tanh": "tanh",
          "sigmoid": "sigmoid", "linear": "linear"}


def parse_architecture(arch: str) -> list[tuple[int, str]]:
    """Parse ``"in:h1-h2-...:out"`` into ``[(in, 'input'), (h1, kind), ...]``.

    Every layer size may carry a suffix choosing its unit type: none or
    ``d`` for diagonal theta units, ``g`` for a theta layer with full Q,
    ``tanh``, ``sigmoid`` or ``linear`` for affine layers.  The hidden part
    may be omitted (``"4:3"``).
    """
    parts = arch.strip().split(":")
    if len(parts) not in (2, 3):
        raise InvalidConfig(f"architecture {arch!r} must look like 'in:h1-h2:out'")
    specs = [parts[0]] + (parts[1].split("-") if len(parts) == 3 else []) + [parts[-1]]
    out = []
    for i, s in enumerate(specs):
        m = _SPEC.match(s.strip())
        if not m or int(m.group(1)) < 1 or m.group(2) not in _KINDS:
            raise InvalidConfig(f"bad layer spec {s!r} in architecture {arch!r}")
        if i == 0 and m.group(2):
            raise InvalidConfig("the input size takes no unit type")
        out.append((int(m.group(1)), "input" if i == 0 else _KINDS[m.group(2)]))
    return out


def build_network(arch: str, seed: int = 0, phase: Phase = Phase.I, loss: Loss = Loss.MSE,
                  w_scale: float = 1.0, q_range: tuple[float, float] = (2.0, 18.0)) -> TnnNetwork:
    """Random network for an architecture string.

    Weights and biases are uniform in ``[-w_scale, w_scale]`` and the
    diagonal Q entries uniform in ``q_range``.  Full-Q theta layers start
    from a diagonal Q drawn the same way.
    """
    spec = parse_architecture(arch)
    rng = np.random.default_rng(seed)
    layers = []
    for (n_in, _), (n_out, kind) in zip(spec, spec[1:]):
        w = rng.uniform(-w_scale, w_scale, (n_in, n_out))
        b = rng.uniform(-w_scale, w_scale, n_out)
        if kind in ("theta", "theta_full"):
            q = rng.uniform(*q_range, n_out)
            if kind == "theta_full":
                q = np.diag(q)
            layers.append(ThetaLayer(w, b, q, kind == "theta", phase))
        else:
            layers.append(AffineLayer(w, b, Activation(kind)))
    return TnnNetwork(tuple(layers), loss)


# ---------------------------------------------------------------------------
# training


def network_train(net: TnnNetwork, x, y, config=None) -> tuple[TnnNetwork, TrainReport]:
    """Fit by CMA-ES (default) or by Adam/SGD back-propagation.

    CMA-ES rejects candidates outside the box bound or with a theta-layer Q
    that is not positive definite.  The gradient path clips steps to the box and
    halves any step that breaks positive definiteness, up to 20 times.
    """
    from .training import Optimizer, TrainConfig

    config = config or TrainConfig()
    X, Y = _targets(net, x, y)
    for layer in net.layers:
        if isinstance(layer, ThetaLayer):
            layer.validate()
    x0 = net.to_vector()
    if np.any(np.abs(x0) > config.bound):
        raise InvalidConfig("initial network lies outside the parameter bound")

    def feasible(p):
        return bool(np.all(np.abs(p) <= config.bound)) and net.from_vector(p).is_valid()

    def cost(p):
        return network_loss(net.from_vector(p), X, Y)

    if not math.isfinite(cost(x0)):
        raise Diverged("initial loss is not finite")
    if config.optimizer == Optimizer.CMAES:
        best, report = minimize(cost, x0, feasible=feasible, sigma0=config.sigma0, seed=config.seed,
                                max_iters=config.max_iters, tol=config.tol, popsize=config.population)
        return net.from_vector(best), report
    return _train_backprop(net, X, Y, config, feasible)


def _train_backprop(net, X, Y, config, feasible):
    from .training import Optimizer

    def fun(vec):
        return network_loss_and_grad(net.from_vector(vec), X, Y)

    best, report = descend(fun, net.to_vector(), feasible, config.lr, config.max_iters, config.tol,
                           adam=config.optimizer == Optimizer.ADAM, bound=config.bound)
    return net.from_vector(best), report


# ---------------------------------------------------------------------------
# feature-extraction classifier


@dataclass(frozen=True, eq=False)
class FeatureClassifier:
    """Patch RTBMs in expectation mode followed by logistic regression."""

    patches: tuple[tuple[int, ...], ...]
    models: tuple[RtbmParams, ...]
    classifier: object

    def features(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        cols = []
        for idx, model in zip(self.patches, self.models):
            e = np.asarray(_expectations(model, X[:, list(idx)]))
            cols.append(e.reshape(X.shape[0], model.n_h))
        return np.concatenate(cols, axis=1)

    def predict(self, x) -> np.ndarray:
        return self.classifier.predict(self.features(x))

    def score(self, x, labels) -> float:
        return float(np.mean(self.predict(x) == np.asarray(labels)))


def _expectations(model: RtbmParams, X: np.ndarray) -> np.ndarray:
    from .core import expectation

    return expectation(model, X if model.n_v > 1 else X[:, 0])


def feature_classifier_fit(x, labels, patches, n_h: int = 2, config=None, phase: Phase = Phase.I,
                           init_scale: float | None = None) -> FeatureClassifier:
    """Train one RTBM per patch as a density, then a logistic regression on
    the concatenated hidden expectations.

    ``patches`` is a list of column-index tuples selecting each patch.
    """
    from sklearn.linear_model import LogisticRegression

    from .core import init_random
    from .training import TrainConfig, train_ml

    config = config or TrainConfig()
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[0] == 0:
        raise EmptyData("no samples")
    if not np.all(np.isfinite(X)):
        raise NonFiniteSample("inputs contain non-finite values")
    patches = tuple(tuple(int(i) for i in np.atleast_1d(p)) for p in patches)
    sizes = {len(p) for p in patches}
    if len(sizes) != 1:
        raise DimensionMismatch("all patches must share dimensionality")
    models = []
    for k, idx in enumerate(patches):
        if max(idx) >= X.shape[1]:
            raise DimensionMismatch(f"patch {idx} indexes beyond {X.shape[1]} input columns")
        data = X[:, list(idx)]
        if np.any(np.std(data, axis=0) == 0):
            raise DegenerateData(f"patch {k} has zero-variance input")
        scale = config.init_scale if init_scale is None else init_scale
        model = init_random(len(idx), n_h, scale, config.seed + k, phase)
        trained, _ = train_ml(model, data, replace(config, seed=config.seed + k))
        models.append(trained)
    clf = FeatureClassifier(patches, tuple(models), None)
    feats = clf.features(X)
    lr = LogisticRegression(max_iter=1000).fit(feats, np.asarray(labels))
    return FeatureClassifier(patches, tuple(models), lr)
