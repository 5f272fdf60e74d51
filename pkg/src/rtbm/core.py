"""Riemann-Theta Boltzmann machine: parameters, density, expectations,
gradients and moments.

Energy of a joint state (v continuous, h integer)::

    E(v, h) = 1/2 v^t T v + 1/2 h^t Q h + v^t W h + B_v^t v + B_h^t h

In phase II the coupling and hidden bias are purely imaginary; they are
stored as real arrays ``w``, ``b_h`` and interpreted as ``i w``, ``i b_h``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import theta as th
from .errors import (
    DegenerateA,
    DimensionMismatch,
    InvalidParams,
    NonDiagonalT,
    NonFiniteInput,
    NonPositiveDefiniteSchur,
)

PD_TOL = 1e-12
LOG_2PI = math.log(2.0 * math.pi)


class Phase(enum.IntEnum):
    I = 1
    II = 2


@dataclass(frozen=True, eq=False)
class RtbmParams:
    t: np.ndarray
    q: np.ndarray
    w: np.ndarray
    b_v: np.ndarray
    b_h: np.ndarray
    phase: Phase = Phase.I

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.t, dtype=float))
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        n_v, n_h = t.shape[0], q.shape[0]
        w = np.asarray(self.w, dtype=float).reshape(n_v, n_h)
        b_v = np.asarray(self.b_v, dtype=float).reshape(n_v)
        b_h = np.asarray(self.b_h, dtype=float).reshape(n_h)
        if t.shape != (n_v, n_v) or q.shape != (n_h, n_h):
            raise DimensionMismatch("T and Q must be square")
        for name, arr in zip(("t", "q", "w", "b_v", "b_h"), (t, q, w, b_v, b_h)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "phase", Phase(self.phase))

    @property
    def n_v(self) -> int:
        return self.t.shape[0]

    @property
    def n_h(self) -> int:
        return self.q.shape[0]

    @property
    def unit(self) -> complex:
        """1 in phase I, i in phase II."""
        return 1.0 if self.phase == Phase.I else 1j

    def coupling(self):
        return self.w if self.phase == Phase.I else 1j * self.w

    def hidden_bias(self):
        return self.b_h if self.phase == Phase.I else 1j * self.b_h

    def replace(self, **changes) -> "RtbmParams":
        kw = dict(t=self.t, q=self.q, w=self.w, b_v=self.b_v, b_h=self.b_h, phase=self.phase)
        kw.update(changes)
        return RtbmParams(**kw)

    def a_matrix(self) -> np.ndarray:
        """Block matrix [[Q, W^t], [W, T]] (complex coupling in phase II)."""
        wc = self.coupling()
        return np.block([[self.q, wc.T], [wc, self.t]])

    def schur(self) -> np.ndarray:
        """Q - W^t T^-1 W with the phase-appropriate coupling (always real)."""
        tw = np.linalg.solve(self.t, self.w)
        s = self.w.T @ tw
        out = self.q - s if self.phase == Phase.I else self.q + s
        return 0.5 * (out + out.T)

    def validate(self) -> None:
        for name, m in (("T", self.t), ("Q", self.q)):
            if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise InvalidParams(f"{name} is not symmetric")
        arrays = (self.t, self.q, self.w, self.b_v, self.b_h)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidParams("parameters contain non-finite values")
        if _min_eig(self.t) <= PD_TOL:
            raise InvalidParams("T is not positive definite")
        if _min_eig(self.q) <= PD_TOL:
            raise InvalidParams("Q is not positive definite")
        if _min_eig(self.schur()) <= PD_TOL:
            raise NonPositiveDefiniteSchur("Schur complement Q - W^t T^-1 W is not positive definite")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except (InvalidParams, NonPositiveDefiniteSchur, np.linalg.LinAlgError):
            return False
        return True

    def __eq__(self, other):
        if not isinstance(other, RtbmParams):
            return NotImplemented
        return self.phase == other.phase and all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self._arrays(), other._arrays())
        )

    def _arrays(self):
        return (self.t, self.q, self.w, self.b_v, self.b_h)

    def to_dict(self) -> dict:
        return {
            "nv": self.n_v,
            "nh": self.n_h,
            "phase": int(self.phase),
            "t": self.t.tolist(),
            "q": self.q.tolist(),
            "w": self.w.tolist(),
            "bv": self.b_v.tolist(),
            "bh": self.b_h.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RtbmParams":
        try:
            p = cls(t=d["t"], q=d["q"], w=d["w"], b_v=d["bv"], b_h=d["bh"], phase=Phase(int(d["phase"])))
        except KeyError as exc:
            raise InvalidParams(f"model document is missing field {exc}") from None
        except ValueError as exc:
            raise DimensionMismatch(str(exc)) from None
        if p.n_v != int(d.get("nv", p.n_v)) or p.n_h != int(d.get("nh", p.n_h)):
            raise DimensionMismatch("nv/nh do not match the stored matrices")
        return p


@dataclass
class DensityValue:
    log_p: np.ndarray | float
    p: np.ndarray | float


@dataclass
class DensityGradients:
    """Gradients with respect to the stored (real) parameters.

    ``t`` holds the derivative with respect to the diagonal of T only; it is
    ``None`` when T-gradients were not requested.
    """

    b_h: np.ndarray
    b_v: np.ndarray
    q: np.ndarray
    w: np.ndarray
    t: np.ndarray | None

    def scaled(self, factor: np.ndarray) -> "DensityGradients":
        def mul(a):
            if a is None:
                return None
            return a * factor.reshape((-1,) + (1,) * (a.ndim - 1))
        return DensityGradients(mul(self.b_h), mul(self.b_v), mul(self.q), mul(self.w), mul(self.t))


def _min_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def _visible_batch(v, n_v: int) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim == 1:
        if v.shape[0] == n_v:
            out, single = v[None, :], True
        elif n_v == 1:
            out, single = v[:, None], False
        else:
            raise DimensionMismatch(f"visible vector has length {v.shape[0]}, model expects {n_v}")
    elif v.ndim == 2 and v.shape[1] == n_v:
        out, single = v, False
    else:
        raise DimensionMismatch(f"visible data has shape {v.shape}, model expects (..., {n_v})")
    if not np.all(np.isfinite(out)):
        raise NonFiniteInput("visible data contains non-finite values")
    return out, single


def _unbatch(x, single: bool):
    if single:
        x = x[0]
        return x.item() if np.ndim(x) == 0 else x
    return x


def _real(x, what: str):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        scale = np.maximum(np.abs(x), 1.0)
        if np.any(np.abs(x.imag) > 1e-8 * scale):
            raise InvalidParams(f"{what} has a non-vanishing imaginary part")
        return x.real
    return x


def _normaliser_arg(params: RtbmParams):
    """Argument and matrix of the theta function in the partition function."""
    tinv_bv = np.linalg.solve(params.t, params.b_v)
    z_b = params.hidden_bias() - params.coupling().T @ tinv_bv
    return z_b, params.schur()


def _hidden_arg(params: RtbmParams, V: np.ndarray):
    return V @ params.coupling() + params.hidden_bias()


# ---------------------------------------------------------------------------


def init_random(n_v: int, n_h: int, scale: float = 1.0, seed: int = 0, phase: Phase = Phase.I,
                diagonal_t: bool = False, max_retries: int = 100) -> RtbmParams:
    """Random valid parameters from A = X X^t with X uniform in [-scale, scale].

    T, Q and W are read off the blocks of A, so every positive-definiteness
    condition holds by construction.  With ``diagonal_t`` the off-diagonal
    part of T is dropped (needed for T-gradients); draws whose Schur
    complement then fails are resampled.
    """
    if n_v < 1 or n_h < 1:
        raise DimensionMismatch("n_v and n_h must be at least 1")
    rng = np.random.default_rng(seed)
    n = n_v + n_h
    for _ in range(max_retries):
        x = rng.uniform(-scale, scale, size=(n, n))
        a = x @ x.T
        if _min_eig(a) <= PD_TOL * max(1.0, np.abs(a).max()):
            continue
        q, w, t = a[:n_h, :n_h], a[n_h:, :n_h], a[n_h:, n_h:]
        if diagonal_t:
            t = np.diag(np.diag(t))
        p = RtbmParams(t=t, q=q, w=w, b_v=np.zeros(n_v), b_h=np.zeros(n_h), phase=phase)
        if p.is_valid():
            return p
    raise DegenerateA(f"no non-degenerate A found in {max_retries} draws")


def translate(params: RtbmParams, shift) -> RtbmParams:
    """Parameters whose density is ``P(v - shift)``.

    Substituting ``v - c`` into the energy only moves the biases,
    ``B_v -> B_v - T c`` and ``B_h -> B_h - W^t c``, plus a constant that
    the normalisation absorbs.  This holds in both phases, since the phase-II
    factor ``i`` multiplies ``W`` and ``B_h`` alike.
    """
    c = np.asarray(shift, dtype=float).reshape(-1)
    if c.shape != (params.n_v,):
        raise DimensionMismatch(f"shift has length {c.size}, model has {params.n_v} visible units")
    return params.replace(b_v=params.b_v - params.t @ c, b_h=params.b_h - params.w.T @ c)


def energy(params: RtbmParams, v, h):
    """E(v, h); complex in phase II."""
    v = np.asarray(v, dtype=float).reshape(-1)
    h = np.asarray(h).reshape(-1)
    if v.shape[0] != params.n_v or h.shape[0] != params.n_h:
        raise DimensionMismatch("state dimensions do not match the model")
    e = (0.5 * v @ params.t @ v + 0.5 * h @ params.q @ h + v @ params.coupling() @ h
         + params.b_v @ v + params.hidden_bias() @ h)
    return e.real.item() if params.phase == Phase.I else complex(e)


def free_energy(params: RtbmParams, v):
    """F(v) = 1/2 v^t T v + B_v^t v - log theta~(v^t W + B_h^t | Q)."""
    V, single = _visible_batch(v, params.n_v)
    z = _hidden_arg(params, V)
    logt = _real(th.log_theta_tilde_batch(z, params.q), "log theta~")
    f = 0.5 * np.einsum("bi,ij,bj->b", V, params.t, V) + V @ params.b_v - logt
    return _unbatch(f, single)


def log_z(params: RtbmParams) -> float:
    params.validate()
    z_b, q_b = _normaliser_arg(params)
    _, logdet_t = np.linalg.slogdet(params.t)
    tinv_bv = np.linalg.solve(params.t, params.b_v)
    logt = _real(th.log_theta_tilde(z_b, q_b), "log theta~")
    return float(0.5 * params.n_v * LOG_2PI - 0.5 * logdet_t + 0.5 * params.b_v @ tinv_bv + logt)


def log_density(params: RtbmParams, v):
    """log P(v) for one sample or a batch."""
    V, single = _visible_batch(v, params.n_v)
    params.validate()
    z_a = _hidden_arg(params, V)
    z_b, q_b = _normaliser_arg(params)
    _, logdet_t = np.linalg.slogdet(params.t)
    tinv_bv = np.linalg.solve(params.t, params.b_v)
    la = _real(th.log_theta_tilde_batch(z_a, params.q), "log theta~")
    lb = _real(th.log_theta_tilde(z_b, q_b), "log theta~")
    const = 0.5 * logdet_t - 0.5 * params.n_v * LOG_2PI - 0.5 * params.b_v @ tinv_bv - lb
    out = const - 0.5 * np.einsum("bi,ij,bj->b", V, params.t, V) - V @ params.b_v + la
    return _unbatch(out, single)


def density(params: RtbmParams, v) -> DensityValue:
    lp = log_density(params, v)
    return DensityValue(lp, np.exp(lp))


def conditional_density(params: RtbmParams, h, v):
    """P(h | v); independent of T and B_v.  Complex in phase II."""
    V, single = _visible_batch(v, params.n_v)
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != params.n_h:
        raise DimensionMismatch("hidden state has the wrong length")
    z = _hidden_arg(params, V)
    batch = th.theta_tilde_batch(z, params.q)
    expo = -0.5 * h @ params.q @ h - z @ h - batch.log_scale
    out = np.exp(expo) / batch.value
    if params.phase == Phase.I:
        out = out.real
    return _unbatch(out, single)


def expectation(params: RtbmParams, v):
    """Conditional expectation E(h | v), shape (N_h,) or (B, N_h).

    In phase II the raw expectation is purely imaginary and is rotated onto
    the real axis by multiplying with i, so that in both phases the result
    equals dF/d(b_h) for the stored hidden bias.
    """
    V, single = _visible_batch(v, params.n_v)
    z = _hidden_arg(params, V)
    _, D, _, _ = th.theta_ratios(z, params.q, 1)
    e = _real(-params.unit * D, "expectation")
    return _unbatch(e, single)


def _sym_factor(n: int) -> np.ndarray:
    return np.where(np.eye(n, dtype=bool), 0.5, 1.0)


def log_density_gradients(params: RtbmParams, v, wrt_t: bool = True) -> DensityGradients:
    """Gradient of log P(v) with respect to the stored parameters.

    Off-diagonal Q entries are treated as a single symmetric parameter, so
    ``q`` carries the factor (1 + delta_ij)^-1 and is symmetric.  The
    T-gradient requires a diagonal T.
    """
    V, single = _visible_batch(v, params.n_v)
    params.validate()
    if wrt_t and np.count_nonzero(params.t - np.diag(np.diag(params.t))):
        raise NonDiagonalT("T-gradients require a diagonal T")
    s = params.unit
    wc = params.coupling()
    z_a = _hidden_arg(params, V)
    z_b, q_b = _normaliser_arg(params)
    _, Da, Ha, _ = th.theta_ratios(z_a, params.q, 2)
    _, Db, Hb, _ = th.theta_ratios(z_b[None, :], q_b, 2)
    Db, Hb = Db[0], Hb[0]
    tinv = np.linalg.inv(params.t)
    tinv_bv = tinv @ params.b_v
    tinv_w = tinv @ wc

    g_bh = s * (Da - Db[None, :])
    g_bv = -V - tinv_bv[None, :] + (tinv_w @ Db)[None, :]
    g_q = -_sym_factor(params.n_h)[None] * (Ha - Hb[None])
    g_w = s * (V[:, :, None] * Da[:, None, :]
               + (np.outer(tinv_bv, Db) - tinv_w @ Hb)[None])
    g_t = None
    if wrt_t:
        td = np.diag(params.t)
        bv = params.b_v
        wdb = wc @ Db
        whw = np.einsum("ik,kl,il->i", wc, Hb, wc)
        g_t = (0.5 / td - 0.5 * V**2 + 0.5 * bv**2 / td**2
               - bv / td**2 * wdb + 0.5 * whw / td**2)
        g_t = _real(g_t, "T-gradient")
    grads = DensityGradients(
        _real(g_bh, "B_h-gradient"),
        _real(g_bv, "B_v-gradient"),
        _real(g_q, "Q-gradient"),
        _real(g_w, "W-gradient"),
        g_t,
    )
    if single:
        grads = DensityGradients(*(None if a is None else a[0] for a in
                                   (grads.b_h, grads.b_v, grads.q, grads.w, grads.t)))
    return grads


def density_gradients(params: RtbmParams, v, wrt_t: bool = True) -> DensityGradients:
    """Gradient of P(v) itself (= P(v) times the log-density gradient)."""
    V, single = _visible_batch(v, params.n_v)
    lg = log_density_gradients(params, V, wrt_t)
    p = np.exp(log_density(params, V))
    out = lg.scaled(p)
    if single:
        out = DensityGradients(*(None if a is None else a[0] for a in
                                 (out.b_h, out.b_v, out.q, out.w, out.t)))
    return out


def moments(params: RtbmParams) -> tuple[np.ndarray, np.ndarray]:
    """First moments <v_i> and second moments <v_i v_j> in closed form."""
    params.validate()
    z_b, q_b = _normaliser_arg(params)
    _, Db, Hb, _ = th.theta_ratios(z_b[None, :], q_b, 2)
    Db, Hb = Db[0], Hb[0]
    tinv = np.linalg.inv(params.t)
    tinv_w = tinv @ params.coupling()
    mean = _real(-tinv @ params.b_v + tinv_w @ Db, "mean")
    cov = tinv + tinv_w @ (Hb - np.outer(Db, Db)) @ tinv_w.T
    cov = _real(cov, "covariance")
    second = np.outer(mean, mean) + 0.5 * (cov + cov.T)
    return mean, second


def continuous_bm_density(params: RtbmParams, v) -> DensityValue:
    """Visible density of the machine with continuous hidden units.

    Integrating out real-valued h leaves a normal density with precision
    T - W Q^-1 W^t and mean (T - W Q^-1 W^t)^-1 (W Q^-1 B_h - B_v).
    """
    V, single = _visible_batch(v, params.n_v)
    wc = params.coupling()
    qinv_wt = np.linalg.solve(params.q, wc.T)
    prec = _real(params.t - wc @ qinv_wt, "precision")
    prec = 0.5 * (prec + prec.T)
    if _min_eig(params.q) <= PD_TOL or _min_eig(prec) <= PD_TOL:
        raise NonPositiveDefiniteSchur("T - W Q^-1 W^t is not positive definite")
    lin = _real(wc @ np.linalg.solve(params.q, params.hidden_bias()) - params.b_v, "linear term")
    mean = np.linalg.solve(prec, lin)
    _, logdet = np.linalg.slogdet(prec)
    d = V - mean
    lp = 0.5 * logdet - 0.5 * params.n_v * LOG_2PI - 0.5 * np.einsum("bi,ij,bj->b", d, prec, d)
    lp = _unbatch(lp, single)
    return DensityValue(lp, np.exp(lp))


# ---------------------------------------------------------------------------
# flat parameter vectors


def n_free_params(n_v: int, n_h: int, diagonal_t: bool = False) -> int:
    n_t = n_v if diagonal_t else n_v * (n_v + 1) // 2
    return n_v + n_h + n_v * n_h + n_t + n_h * (n_h + 1) // 2


def to_vector(params: RtbmParams, diagonal_t: bool = False) -> np.ndarray:
    """Flatten as [b_v, b_h, w (row-major), T upper triangle, Q upper triangle].

    With ``diagonal_t`` only the diagonal of T is stored.
    """
    iu_t = np.triu_indices(params.n_v)
    iu_q = np.triu_indices(params.n_h)
    t_part = np.diag(params.t) if diagonal_t else params.t[iu_t]
    return np.concatenate([params.b_v, params.b_h, params.w.ravel(), t_part, params.q[iu_q]])


def from_vector(vec, n_v: int, n_h: int, phase: Phase = Phase.I, diagonal_t: bool = False) -> RtbmParams:
    from .errors import LengthMismatch

    vec = np.asarray(vec, dtype=float)
    if vec.shape != (n_free_params(n_v, n_h, diagonal_t),):
        raise LengthMismatch(f"expected {n_free_params(n_v, n_h, diagonal_t)} parameters, got {vec.shape}")
    pos = 0

    def take(k):
        nonlocal pos
        out = vec[pos:pos + k]
        pos += k
        return out

    b_v = take(n_v)
    b_h = take(n_h)
    w = take(n_v * n_h).reshape(n_v, n_h)
    if diagonal_t:
        t = np.diag(take(n_v))
    else:
        t = _sym_from_triu(take(n_v * (n_v + 1) // 2), n_v)
    q = _sym_from_triu(take(n_h * (n_h + 1) // 2), n_h)
    return RtbmParams(t=t, q=q, w=w, b_v=b_v, b_h=b_h, phase=phase)


def _sym_from_triu(vals: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros((n, n))
    m[np.triu_indices(n)] = vals
    return m + np.triu(m, 1).T


def gradient_vector(grads: DensityGradients, n_v: int, n_h: int) -> np.ndarray:
    """Per-sample gradients laid out like :func:`to_vector` with diagonal T.

    Symmetric Q entries are already combined, so the upper triangle of
    ``grads.q`` is the derivative with respect to that vector entry.
    """
    B = grads.b_v.shape[0]
    iu_q = np.triu_indices(n_h)
    return np.concatenate([
        grads.b_v, grads.b_h, grads.w.reshape(B, -1), grads.t, grads.q[:, iu_q[0], iu_q[1]],
    ], axis=1)
