"""Riemann-Theta function in the rescaled convention used by the RTBM.

The rescaled theta is the lattice sum

    theta~(z | Q) = sum_{n in Z^g} exp(-1/2 n^t Q n + n^t z),

which equals the classical ``theta(z / 2 pi i | i Q / 2 pi)``. It is periodic
under ``z -> z + 2 pi i n`` and quasi-periodic under ``z -> z + Q n``.

Values are returned as ``value * exp(log_scale)`` so that real arguments of
any size can be handled; for a real argument ``theta~`` grows like
``exp(1/2 z^t Q^-1 z)``.

Derivatives are plain partial derivatives with respect to ``z``.  The
``nabla`` derivatives of the classical theta are related by
``nabla_i = 2 pi i * d/dz_i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .errors import (
    DimensionMismatch,
    InvalidConfig,
    InvalidDerivative,
    NonPositiveDefiniteOmega,
    NonSymmetricOmega,
    ThetaZeroEncountered,
    TruncationOverflow,
)

TWO_PI = 2.0 * np.pi

DerivativeSpec = Sequence[tuple[int, ...]]


@dataclass(frozen=True)
class EvalSettings:
    """Tolerances for theta evaluation.

    tol
        Bound on the truncated tail relative to the leading lattice term.
    max_points
        Cap on the number of lattice points summed for one evaluation.
    zero_tol
        ``|theta~|`` below ``zero_tol`` times the sum of term magnitudes is
        treated as a zero of the theta function.
    dual_below
        For purely imaginary arguments the Poisson-dual sum is used when the
        smallest eigenvalue of Q is below this value.  On the imaginary axis
        the dual sum has only positive terms, so it does not suffer from the
        cancellation the direct sum shows for small Q.  Other arguments use
        the dual sum when it needs fewer terms and Q is small enough that its
        terms cannot cancel.
    """

    tol: float = 1e-12
    symmetry_tol: float = 1e-12
    pd_tol: float = 1e-12
    max_points: int = 2_000_000
    zero_tol: float = 1e-13
    dual_below: float = TWO_PI
    chunk_elements: int = 4_000_000


DEFAULT_SETTINGS = EvalSettings()


@dataclass
class ThetaResult:
    """theta~ and its derivatives at one point, scaled by ``exp(-log_scale)``."""

    log_scale: float
    value: complex
    derivs: dict[tuple[int, ...], complex] = field(default_factory=dict)
    abs_sum: float = 1.0

    @property
    def theta(self):
        return self.value * math.exp(self.log_scale)

    def deriv(self, idx: tuple[int, ...]):
        return self.derivs[tuple(idx)] * math.exp(self.log_scale)

    def log_theta(self, zero_tol: float = DEFAULT_SETTINGS.zero_tol):
        return _log_value(np.atleast_1d(self.value), np.atleast_1d(self.log_scale),
                          np.atleast_1d(self.abs_sum), zero_tol)[0]


@dataclass
class ThetaBatch:
    """Vectorised counterpart of :class:`ThetaResult` (leading axis = batch)."""

    log_scale: np.ndarray
    value: np.ndarray
    derivs: dict[tuple[int, ...], np.ndarray]
    abs_sum: np.ndarray

    def __len__(self):
        return len(self.value)

    def __getitem__(self, i: int) -> ThetaResult:
        return ThetaResult(
            float(self.log_scale[i]),
            self.value[i],
            {k: v[i] for k, v in self.derivs.items()},
            float(self.abs_sum[i]),
        )

    def theta(self):
        return self.value * np.exp(self.log_scale)

    def log_theta(self, zero_tol: float = DEFAULT_SETTINGS.zero_tol):
        return _log_value(self.value, self.log_scale, self.abs_sum, zero_tol)

    def ratio(self, idx: tuple[int, ...]) -> np.ndarray:
        """``d^idx theta~ / theta~``; independent of the scaling."""
        return self.derivs[tuple(idx)] / self.value


def _log_value(value, log_scale, abs_sum, zero_tol):
    mag = np.abs(value)
    if np.any(~(mag > zero_tol * abs_sum)):
        raise ThetaZeroEncountered("theta~ vanishes (to working precision) at the requested argument")
    if np.iscomplexobj(value):
        if np.all(np.abs(value.imag) <= 1e-12 * mag) and np.all(value.real > 0):
            return np.log(value.real) + log_scale
        return np.log(value) + log_scale
    if np.any(value < 0):
        return np.log(value.astype(complex)) + log_scale
    return np.log(value) + log_scale


# ---------------------------------------------------------------------------
# validation


def _as_omega(omega, settings: EvalSettings) -> tuple[np.ndarray, np.ndarray, float]:
    omega = np.asarray(omega)
    if omega.ndim == 0:
        omega = omega.reshape(1, 1)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise DimensionMismatch(f"omega must be a square matrix, got shape {omega.shape}")
    if np.iscomplexobj(omega):
        if np.all(omega.imag == 0):
            omega = omega.real
    else:
        omega = omega.astype(float)
    scale = max(1.0, float(np.max(np.abs(omega))))
    if np.max(np.abs(omega - omega.T)) > settings.symmetry_tol * scale:
        raise NonSymmetricOmega("omega is not symmetric")
    omega = 0.5 * (omega + omega.T)
    re = np.ascontiguousarray(omega.real)
    eig = np.linalg.eigvalsh(re)
    if not np.all(np.isfinite(eig)) or eig[0] <= settings.pd_tol:
        raise NonPositiveDefiniteOmega(f"real part of omega is not positive definite (min eig {eig[0]:.3g})")
    return omega, re, float(eig[0])


def _as_z(z, g: int) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim == 0:
        z = z.reshape(1, 1)
    elif z.ndim == 1:
        z = z.reshape(1, -1) if g != 1 or z.shape[0] == 1 else z.reshape(-1, 1)
    if z.ndim != 2 or z.shape[1] != g:
        raise DimensionMismatch(f"argument has shape {z.shape}, expected (..., {g})")
    if not np.iscomplexobj(z):
        z = z.astype(float)
    return z


def _check_derivs(derivs: Iterable, g: int) -> list[tuple[int, ...]]:
    out = []
    for d in derivs:
        d = tuple(int(i) for i in d)
        if len(d) == 0 or len(d) > 3:
            raise InvalidDerivative(f"derivative order must be 1..3, got {d}")
        if any(i < 0 or i >= g for i in d):
            raise InvalidDerivative(f"derivative index out of range in {d} (g={g})")
        out.append(d)
    return out


# ---------------------------------------------------------------------------
# truncation


def _tail_log_bound(rho: float, g: int, r: float) -> float:
    """log of an upper bound for sum_{|y|>=rho} exp(-|y|^2/2) over a lattice
    whose points are at least 2r apart (shifted arbitrarily)."""
    a = rho - 2.0 * r
    if a < 0:
        return math.inf
    total = 0.0
    for k in range(g):
        s = (k + 1) / 2.0
        ik = 2.0 ** ((k - 1) / 2.0) * math.gamma(s) * special.gammaincc(s, a * a / 2.0)
        total += math.comb(g - 1, k) * r ** (g - 1 - k) * ik
    if total <= 0:
        # gammaincc underflowed; fall back to the asymptotic Gaussian tail
        return math.log(g) - g * math.log(r) + (g - 1) * math.log(a + r) - a * a / 2.0
    return math.log(g) - g * math.log(r) + math.log(total)


@lru_cache(maxsize=1024)
def _tail_radius(g: int, r: float, log_target: float, order: int, lam: float) -> float:
    def small_enough(rho):
        poly = order * math.log(2.0 + rho / math.sqrt(lam))
        return _tail_log_bound(rho, g, r) + poly <= log_target

    # the bound decreases with rho: bracket by doubling, then bisect
    lo = max(2.0 * r, 1.0)
    if small_enough(lo):
        return lo
    step = 1.0
    while not small_enough(lo + step):
        lo += step
        step *= 2.0
    hi = lo + step
    while hi - lo > 0.125:
        mid = 0.5 * (lo + hi)
        if small_enough(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _ellipsoid_points(gram: np.ndarray, rho: float, max_points: int) -> np.ndarray:
    """All integer n with n^t gram n <= rho^2 (Fincke-Pohst enumeration)."""
    g = gram.shape[0]
    R = np.linalg.cholesky(gram).T
    pts = np.zeros((1, 0), dtype=np.int64)
    partial = np.zeros(1)
    rho2 = rho * rho * (1.0 + 1e-12)
    for i in range(g - 1, -1, -1):
        off = pts @ R[i, i + 1:] if pts.shape[1] else np.zeros(len(pts))
        half = np.sqrt(np.maximum(rho2 - partial, 0.0)) / R[i, i]
        center = -off / R[i, i]
        lo = np.ceil(center - half).astype(np.int64)
        hi = np.floor(center + half).astype(np.int64)
        counts = np.maximum(hi - lo + 1, 0)
        total = int(counts.sum())
        if total > max_points:
            raise TruncationOverflow(
                f"lattice truncation needs more than {max_points} points; omega is too ill-conditioned"
            )
        rep = np.repeat(np.arange(len(pts)), counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        ni = lo[rep] + offsets
        partial = partial[rep] + (R[i, i] * ni + off[rep]) ** 2
        pts = np.column_stack([ni, pts[rep]])
    keep = partial <= rho2
    return pts[keep]


def _lattice_for(gram: np.ndarray, lam_min: float, order: int, centers: np.ndarray,
                 settings: EvalSettings) -> np.ndarray:
    """Points covering the truncation ellipsoid around every centre.

    ``centers`` are the continuous maximisers of each term's modulus, already
    reduced into the unit cube; the nearest lattice term is therefore at
    least exp(-1/2 c^t gram c), which sets the absolute tail target.
    """
    g = gram.shape[0]
    r = 0.5 * math.sqrt(lam_min)
    delta2 = float(np.max(np.einsum("bi,ij,bj->b", centers, gram, centers), initial=0.0))
    log_target = math.log(settings.tol) - 0.5 * delta2
    rho = _tail_radius(g, round(r, 14), round(log_target, 10), order, round(lam_min, 14))
    return _ellipsoid_points(gram, rho + math.sqrt(delta2), settings.max_points)


# ---------------------------------------------------------------------------
# evaluation kernels


def _chunks(n: int, k: int, settings: EvalSettings):
    step = max(1, settings.chunk_elements // max(k, 1))
    for s in range(0, n, step):
        yield slice(s, min(n, s + step))


def _direct(z, omega, re_omega, lam_min, derivs, settings) -> ThetaBatch:
    B, g = z.shape
    order = max((len(d) for d in derivs), default=0)
    c = np.linalg.solve(re_omega, z.real.T).T
    m = np.rint(c)
    pts = _lattice_for(re_omega, lam_min, order, c - m, settings)
    fpts = pts.astype(float)
    zs = z - m @ omega
    shift = np.sum(m * z, axis=1) - 0.5 * np.einsum("bi,ij,bj->b", m, omega, m)
    quad = -0.5 * np.einsum("ki,ij,kj->k", fpts, omega, fpts)

    cplx = np.iscomplexobj(zs) or np.iscomplexobj(quad)
    dtype = complex if cplx else float
    value = np.empty(B, dtype=dtype)
    abs_sum = np.empty(B)
    log_scale = np.empty(B)
    out = {d: np.empty(B, dtype=dtype) for d in derivs}
    for sl in _chunks(B, len(pts), settings):
        X = quad[None, :] + zs[sl] @ fpts.T
        M = X.real.max(axis=1)
        E = np.exp(X - M[:, None])
        value[sl] = E.sum(axis=1)
        abs_sum[sl] = np.abs(E).sum(axis=1)
        log_scale[sl] = M
        for d in derivs:
            w = E
            for i in d:
                w = w * (fpts[None, :, i] + m[sl, i, None])
            out[d][sl] = w.sum(axis=1)
    log_scale = log_scale + shift.real
    if np.iscomplexobj(shift):
        phase = np.exp(1j * shift.imag)
        if np.any(shift.imag != 0):
            value = value * phase
            out = {d: v * phase for d, v in out.items()}
    return ThetaBatch(log_scale, value, out, abs_sum)


def _dual(z, omega, derivs, settings) -> ThetaBatch:
    """Poisson-dual evaluation for real Q:

    theta~(z | Q) = (2 pi)^(g/2) det(Q)^(-1/2)
                    sum_k exp(1/2 (z - 2 pi i k)^t Q^-1 (z - 2 pi i k)).

    With z = x + i y each term has modulus exp(1/2 x^t P x - 1/2 u^t P u),
    u = y - 2 pi k, and phase exp(i x^t P u).  For purely imaginary z all
    terms are positive.
    """
    B, g = z.shape
    order = max((len(d) for d in derivs), default=0)
    P = np.linalg.inv(omega)
    P = 0.5 * (P + P.T)
    gram = TWO_PI**2 * P
    lam = float(np.linalg.eigvalsh(gram)[0])
    x = z.real
    y = z.imag - TWO_PI * np.rint(z.imag / TWO_PI) if np.iscomplexobj(z) else np.zeros_like(x)
    pts = _lattice_for(gram, lam, order, y / TWO_PI, settings).astype(float)
    imag_only = not np.any(x)
    _, logdet = np.linalg.slogdet(omega)
    pref = 0.5 * g * math.log(TWO_PI) - 0.5 * logdet
    xPx = np.einsum("bi,ij,bj->b", x, P, x)

    dtype = float if imag_only else complex
    value = np.empty(B, dtype=dtype)
    abs_sum = np.empty(B)
    log_scale = np.empty(B)
    raw = {d: np.empty(B, dtype=complex) for d in derivs}
    needed = sorted({s for d in derivs for r in range(1, len(d) + 1)
                     for s in itertools.combinations(d, r)}, key=len)
    # when every row shares one imaginary part (real z, say) the moduli are
    # common to the batch and only the phases vary
    shared = B > 1 and not np.any(y - y[:1])
    if shared:
        u0 = y[0] - TWO_PI * pts
        uP0 = u0 @ P
        X0 = -0.5 * np.einsum("ki,ki->k", uP0, u0)
        M0 = X0.max()
        E0 = np.exp(X0 - M0)
        real_sum = not imag_only and not derivs and not np.any(y[0])
        if real_sum:
            # terms k and -k are conjugate and the lattice is symmetric, so
            # the sum is real and half the lattice suffices
            nz = pts != 0
            first = np.where(nz.any(axis=1), pts[np.arange(len(pts)), nz.argmax(axis=1)], 0.0)
            keep = first >= 0
            E_half = np.where(first[keep] > 0, 2.0, 1.0) * E0[keep]
            uP_half = uP0[keep]
    for sl in _chunks(B, len(pts), settings):
        if shared:
            n = len(range(B)[sl])
            uP = np.broadcast_to(uP0, (n,) + uP0.shape)
            M = np.full(n, M0)
            E = np.broadcast_to(E0, (n, len(E0)))
            abs_sum[sl] = E0.sum()
            if not imag_only:
                if real_sum:
                    value[sl] = np.cos(x[sl] @ uP_half.T) @ E_half
                    log_scale[sl] = M + pref + 0.5 * xPx[sl]
                    continue
                E = E0 * np.exp(1j * (x[sl] @ uP0.T))
        else:
            u = y[sl, None, :] - TWO_PI * pts[None, :, :]
            uP = u @ P
            X = -0.5 * np.einsum("bki,bki->bk", uP, u)
            M = X.max(axis=1)
            E = np.exp(X - M[:, None])
            abs_sum[sl] = E.sum(axis=1)
            if not imag_only:
                E = E * np.exp(1j * np.einsum("bi,bki->bk", x[sl], uP))
        value[sl] = E.sum(axis=1)
        log_scale[sl] = M + pref + 0.5 * xPx[sl]
        # gradient of each term's exponent: P (z - 2 pi i k) = P x + i P u
        a = (x[sl] @ P)[:, None, :] + 1j * uP
        sums = {(): value[sl]}
        for s in needed:
            if s in sums:
                continue
            w = E
            for i in s:
                w = w * a[:, :, i]
            sums[s] = w.sum(axis=1)
        for d in derivs:
            if len(d) == 1:
                r = sums[d]
            elif len(d) == 2:
                i, j = d
                r = sums[d] + P[i, j] * sums[()]
            else:
                i, j, l = d
                r = (sums[d] + P[i, j] * sums[(l,)] + P[i, l] * sums[(j,)]
                     + P[j, l] * sums[(i,)])
            raw[d][sl] = r
    if imag_only:
        value = value.astype(complex)
    return ThetaBatch(log_scale, value, raw, abs_sum)


def _use_dual(z, omega, lam_min, settings) -> bool:
    if np.iscomplexobj(omega):
        return False
    if np.iscomplexobj(z) and not np.any(z.real):
        return lam_min < settings.dual_below
    g = omega.shape[0]
    lam_max = float(np.linalg.eigvalsh(omega)[-1])
    _, logdet = np.linalg.slogdet(omega)
    # dual terms stay below exp(-pi / 2) relative to the k = 0 term
    return lam_max <= 2 * TWO_PI and logdet < g * math.log(TWO_PI)


# ---------------------------------------------------------------------------
# public API


def theta_tilde_batch(z, omega, derivs: DerivativeSpec = (), settings: EvalSettings | None = None) -> ThetaBatch:
    """Evaluate theta~ for a batch of arguments ``z`` of shape (B, g)."""
    settings = settings or DEFAULT_SETTINGS
    omega, re_omega, lam_min = _as_omega(omega, settings)
    g = omega.shape[0]
    z = _as_z(z, g)
    derivs = _check_derivs(derivs, g)
    if not np.all(np.isfinite(z)):
        raise DimensionMismatch("theta argument contains non-finite entries")
    if _use_dual(z, omega, lam_min, settings):
        return _dual(z, omega, derivs, settings)
    return _direct(z, omega, re_omega, lam_min, derivs, settings)


def theta_tilde(z, omega, derivs: DerivativeSpec = (), settings: EvalSettings | None = None) -> ThetaResult:
    """theta~(z | omega) and the requested derivatives at a single point.

    Parameters
    ----------
    z : array_like, shape (g,)
        Argument; real, complex or purely imaginary.
    omega : array_like, shape (g, g)
        Symmetric matrix whose real part is positive definite.
    derivs : sequence of index tuples
        E.g. ``[(0,), (0, 1), (1, 1, 1)]`` for d/dz0, d2/dz0dz1, d3/dz1^3.

    Examples
    --------
    >>> r = theta_tilde([0.0], [[2 * np.pi]])
    >>> round(float(r.theta), 9)
    1.086434811
    """
    omega_arr = np.atleast_2d(np.asarray(omega))
    z = np.atleast_1d(np.asarray(z))
    if z.ndim != 1 or z.shape[0] != omega_arr.shape[-1]:
        raise DimensionMismatch(f"z has shape {z.shape}, omega has shape {omega_arr.shape}")
    return theta_tilde_batch(z[None, :], omega_arr, derivs, settings)[0]


def log_theta_tilde(z, omega, settings: EvalSettings | None = None):
    """Natural log of theta~, real whenever theta~ is real and positive."""
    settings = settings or DEFAULT_SETTINGS
    return theta_tilde(z, omega, (), settings).log_theta(settings.zero_tol)


def log_theta_tilde_batch(z, omega, settings: EvalSettings | None = None) -> np.ndarray:
    settings = settings or DEFAULT_SETTINGS
    return theta_tilde_batch(z, omega, (), settings).log_theta(settings.zero_tol)


def theta_ratios(z, omega, order: int, settings: EvalSettings | None = None):
    """log theta~ together with the normalised derivative tensors.

    Returns ``(log_theta, D, H, T3)`` with ``D[b, i] = d_i theta~ / theta~``,
    ``H[b, i, j] = d_i d_j theta~ / theta~`` and likewise for third order;
    tensors above ``order`` are ``None``.
    """
    settings = settings or DEFAULT_SETTINGS
    omega_arr = np.atleast_2d(np.asarray(omega))
    g = omega_arr.shape[0]
    derivs = []
    for k in range(1, order + 1):
        derivs.extend(itertools.combinations_with_replacement(range(g), k))
    batch = theta_tilde_batch(z, omega_arr, derivs, settings)
    logt = batch.log_theta(settings.zero_tol)
    B = len(batch)
    tensors = [None, None, None]
    for k in range(1, order + 1):
        dtype = np.result_type(batch.value, *(batch.derivs[d] for d in batch.derivs))
        t = np.empty((B,) + (g,) * k, dtype=dtype)
        for d in itertools.combinations_with_replacement(range(g), k):
            r = batch.derivs[d] / batch.value
            for p in set(itertools.permutations(d)):
                t[(slice(None),) + p] = r
        tensors[k - 1] = t
    return (logt, *tensors)


def theta_tilde_naive(z, omega, derivs: DerivativeSpec = (), radius: int = 10) -> ThetaResult:
    """Direct summation over the integer box ``[-radius, radius]^g``.

    Unscaled (``log_scale == 0``); intended as a test oracle for moderate
    arguments only.
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=complex))
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    g = omega.shape[0]
    if omega.shape != (g, g) or z.shape != (g,):
        raise DimensionMismatch(f"z has shape {z.shape}, omega has shape {omega.shape}")
    if g > 4 or not 0 <= radius <= 50:
        raise InvalidConfig("naive summation supports g <= 4 and radius <= 50")
    derivs = _check_derivs(derivs, g)
    axis = np.arange(-radius, radius + 1, dtype=float)
    grid = np.stack(np.meshgrid(*([axis] * g), indexing="ij"), axis=-1).reshape(-1, g)
    terms = np.exp(-0.5 * np.einsum("ki,ij,kj->k", grid, omega, grid) + grid @ z)
    out = {}
    for d in derivs:
        w = terms
        for i in d:
            w = w * grid[:, i]
        out[d] = complex(w.sum())
    return ThetaResult(0.0, complex(terms.sum()), out, float(np.abs(terms).sum()))


def riemann_theta(z, Omega, settings: EvalSettings | None = None) -> complex:
    """Classical Riemann theta sum_n exp(2 pi i (1/2 n^t Omega n + n^t z)).

    ``Omega`` must have positive definite imaginary part.
    """
    Omega = np.atleast_2d(np.asarray(Omega, dtype=complex))
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    return complex(theta_tilde(TWO_PI * 1j * z, -TWO_PI * 1j * Omega, (), settings).theta)


# ---------------------------------------------------------------------------
# one-dimensional fast path (diagonal Q)

_LOG_EPS = 40.0  # neglected terms are below exp(-40) of the largest one


def _cumulants(values: np.ndarray, logw: np.ndarray):
    """Mean, variance and third central moment along the last axis."""
    w = np.exp(logw - logw.max(axis=-1, keepdims=True))
    w /= w.sum(axis=-1, keepdims=True)
    mean = (w * values).sum(axis=-1)
    c = values - mean[..., None]
    var = (w * c * c).sum(axis=-1)
    k3 = (w * c * c * c).sum(axis=-1)
    return mean, var, k3


def _cos_series_logderivs(y: np.ndarray, a: np.ndarray, freq: np.ndarray):
    """Log-derivatives of phi(y) = sum_{n in Z} a_n cos(n freq y), a_n = a_{-n}.

    ``a`` has shape (..., N+1) holding a_0..a_N; ``y`` and ``freq`` broadcast
    against the leading shape.
    """
    n = np.arange(a.shape[-1], dtype=float)
    mult = np.where(n == 0, 1.0, 2.0) * a
    k = n * freq[..., None]
    arg = k * y[..., None]
    c, s = np.cos(arg), np.sin(arg)
    p0 = (mult * c).sum(axis=-1)
    p1 = -(mult * k * s).sum(axis=-1) / p0
    p2 = -(mult * k * k * c).sum(axis=-1) / p0
    p3 = (mult * k * k * k * s).sum(axis=-1) / p0
    l1 = p1
    l2 = p2 - p1 * p1
    l3 = p3 - 3.0 * p1 * p2 + 2.0 * p1**3
    return l1, l2, l3


def jacobi_log_derivs(y, q, phase_two: bool = False):
    """First three derivatives of ``l(y) = log theta~(u y | q)`` for g = 1.

    ``u`` is 1 (phase I, real argument) or ``i`` (phase II, imaginary
    argument); ``y`` is real in both cases so the hot path stays in real
    arithmetic.  ``y`` and ``q`` broadcast against each other and ``q`` must be
    positive.  Returns ``(l1, l2, l3)`` as real arrays.

    Phase I uses the quasi-periodic reduction for ``q >= 2 pi`` and the
    Poisson-dual cosine series otherwise.  Phase II uses the cosine series
    for ``q >= pi`` and the dual Gaussian sum otherwise (all of its terms
    are positive, so the value never vanishes).
    """
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    y, q = np.broadcast_arrays(y, q)
    if np.any(~(q > 0)):
        raise NonPositiveDefiniteOmega("diagonal Q entries must be positive")
    l1 = np.empty(y.shape)
    l2 = np.empty(y.shape)
    l3 = np.empty(y.shape)
    if not phase_two:
        big = q >= TWO_PI
        if np.any(big):
            yb, qb = y[big], q[big]
            m = np.rint(yb / qb)
            x = yb - qb * m
            nmax = int(math.ceil(0.5 + math.sqrt(2 * _LOG_EPS / qb.min())))
            n = np.arange(-nmax, nmax + 1, dtype=float)
            logw = -0.5 * qb[:, None] * n * n + n * x[:, None]
            mean, var, k3 = _cumulants(n, logw)
            l1[big], l2[big], l3[big] = mean + m, var, k3
        small = ~big
        if np.any(small):
            ys, qs = y[small], q[small]
            kmax = int(math.ceil(math.sqrt(_LOG_EPS * qs.max()) / (math.sqrt(2) * np.pi)))
            k = np.arange(kmax + 1, dtype=float)
            a = np.exp(-2 * np.pi**2 * k * k / qs[:, None])
            g1, g2, g3 = _cos_series_logderivs(ys, a, TWO_PI / qs)
            l1[small], l2[small], l3[small] = ys / qs + g1, 1.0 / qs + g2, g3
    else:
        big = q >= np.pi
        if np.any(big):
            yb, qb = y[big], q[big]
            nmax = int(math.ceil(math.sqrt(2 * _LOG_EPS / qb.min())))
            n = np.arange(nmax + 1, dtype=float)
            a = np.exp(-0.5 * qb[:, None] * n * n)
            l1[big], l2[big], l3[big] = _cos_series_logderivs(yb, a, np.ones_like(qb))
        small = ~big
        if np.any(small):
            ys, qs = y[small], q[small]
            yr = ys - TWO_PI * np.rint(ys / TWO_PI)
            kmax = int(math.ceil(0.5 + math.sqrt(2 * _LOG_EPS * qs.max()) / TWO_PI))
            k = np.arange(-kmax, kmax + 1, dtype=float)
            u = yr[:, None] - TWO_PI * k
            mean, var, k3 = _cumulants(u, -0.5 * u * u / qs[:, None])
            l1[small] = -mean / qs
            l2[small] = -1.0 / qs + var / qs**2
            l3[small] = -k3 / qs**3
    return l1, l2, l3
