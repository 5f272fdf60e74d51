"""Mixtures of RTBM densities with softmax weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from . import core
from .core import DensityValue, Phase, RtbmParams
from .errors import InvalidParams, LengthMismatch, MixedVisibleDims


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """M(v) = sum_i softmax(omegas)_i P_i(v)."""

    components: tuple[RtbmParams, ...]
    omegas: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidParams("a mixture needs at least one component")
        if len({c.n_v for c in comps}) != 1:
            raise MixedVisibleDims("all mixture components must share N_v")
        om = np.asarray(self.omegas, dtype=float).reshape(-1)
        if om.shape[0] != len(comps):
            raise LengthMismatch("one log-weight per component is required")
        om = om.copy()
        om.flags.writeable = False
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "omegas", om)

    @property
    def n_v(self) -> int:
        return self.components[0].n_v

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.omegas)

    def is_valid(self) -> bool:
        return all(c.is_valid() for c in self.components)

    def validate(self) -> None:
        for c in self.components:
            c.validate()

    def __eq__(self, other):
        if not isinstance(other, MixtureModel):
            return NotImplemented
        return (len(self.components) == len(other.components)
                and np.array_equal(self.omegas, other.omegas)
                and all(a == b for a, b in zip(self.components, other.components)))

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components], "omegas": self.omegas.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureModel":
        return cls(tuple(RtbmParams.from_dict(c) for c in d["components"]), d["omegas"])


def mixture_log_density(model: MixtureModel, v):
    parts = [core.log_density(c, v) for c in model.components]
    logs = np.stack([np.atleast_1d(p) for p in parts])
    log_w = model.omegas - logsumexp(model.omegas)
    out = logsumexp(logs + log_w[:, None], axis=0)
    return out.item() if np.ndim(parts[0]) == 0 else out


def mixture_density(model: MixtureModel, v) -> DensityValue:
    lp = mixture_log_density(model, v)
    return DensityValue(lp, np.exp(lp))


def mixture_moments(model: MixtureModel) -> tuple[np.ndarray, np.ndarray]:
    w = model.weights
    parts = [core.moments(c) for c in model.components]
    mean = sum(wi * m for wi, (m, _) in zip(w, parts))
    second = sum(wi * s for wi, (_, s) in zip(w, parts))
    return mean, second


def mixture_param_vector(model: MixtureModel, diagonal_t: bool = False) -> np.ndarray:
    """Component vectors (see :func:`rtbm.core.to_vector`) followed by the omegas."""
    return np.concatenate([core.to_vector(c, diagonal_t) for c in model.components] + [model.omegas])


def mixture_from_vector(vec, template: MixtureModel, diagonal_t: bool = False) -> MixtureModel:
    """Inverse of :func:`mixture_param_vector`; shapes and phases come from ``template``."""
    vec = np.asarray(vec, dtype=float)
    sizes = [core.n_free_params(c.n_v, c.n_h, diagonal_t) for c in template.components]
    n = len(sizes)
    if vec.shape != (sum(sizes) + n,):
        raise LengthMismatch(f"expected {sum(sizes) + n} parameters, got {vec.shape}")
    comps = []
    pos = 0
    for c, k in zip(template.components, sizes):
        comps.append(core.from_vector(vec[pos:pos + k], c.n_v, c.n_h, c.phase, diagonal_t))
        pos += k
    return MixtureModel(tuple(comps), vec[pos:])


def random_mixture(n_components: int, n_v: int, n_h: int, scale: float = 1.0, seed: int = 0,
                   phase: Phase = Phase.I) -> MixtureModel:
    """Independent random components with equal weights."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=n_components)
    comps = tuple(core.init_random(n_v, n_h, scale, int(s), phase) for s in seeds)
    return MixtureModel(comps, np.zeros(n_components))


def model_to_dict(model) -> dict:
    if isinstance(model, MixtureModel):
        return {"kind": "mixture", **model.to_dict()}
    return {"kind": "rtbm", **model.to_dict()}


def model_from_dict(d: dict):
    if d.get("kind") == "mixture" or "components" in d:
        return MixtureModel.from_dict(d)
    return RtbmParams.from_dict(d)


def log_likelihood(model, data) -> np.ndarray:
    """Per-sample log density for an RTBM or a mixture."""
    if isinstance(model, MixtureModel):
        return np.atleast_1d(mixture_log_density(model, data))
    return np.atleast_1d(core.log_density(model, data))
