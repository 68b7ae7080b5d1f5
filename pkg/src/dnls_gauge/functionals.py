"""Quartic functional F_N, its frequency split, divergence, Jacobian and LP statistics.

``F_N`` is the derivative at zero of ``alpha -> ||G_alpha P_N u||^2_{H^s dot}``:

    F_N = 2 Re sum |m1|^{2s} / (m1 - n1) u(n1) u(n2) conj(u(m1)) conj(u(m2))

over ``|n1|, |n2|, |m1|, |m2| <= N``, ``n1 + n2 = m1 + m2``, ``n1 != m1``.
:func:`f_n` evaluates this literally; :func:`f_n_batch` uses the equivalent
``2 Re <|D|^{2s} u, i P_N(I u)>`` and is what the Monte Carlo code calls.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import binom

from .flow import FlowOptions, divergence_weights, flow_batch, gauge_field
from .spectral import SpectralFunction, modes, num_shells, pad, shell_mask, sobolev_weights


class DivergenceMismatch(ArithmeticError):
    """The double-sum and closed-form divergences disagree (a logic fault)."""


class SeriesTruncationError(ArithmeticError):
    """The low-frequency series cannot reach the requested tolerance."""


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    split: tuple[float, float] | None = None
    truncation_error_bound: float = 0.0
    terms: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LPStats:
    x_blocks: tuple[float, ...]
    y_blocks: tuple[float, ...]
    x_total: float
    y_total: float
    l_stat: float

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def _low(u: SpectralFunction, N: int) -> np.ndarray:
    if N > u.cutoff:
        raise ValueError(f"N={N} exceeds u.cutoff={u.cutoff}")
    return u.coeffs[u.cutoff - N : u.cutoff + N + 1]


# ---------------------------------------------------------------------------
# F_N


def f_n_complex(u: SpectralFunction, N: int, s: float) -> complex:
    """Unsymmetrised quartic sum (F_N is twice its real part), O(N^3) with fsum."""
    c = _low(u, N)
    idx = modes(N)
    w1 = np.abs(idx).astype(float) ** (2 * s)
    re_parts, im_parts = [], []
    m1 = idx[:, None]
    n2 = idx[None, :]
    for n1 in idx:
        m2 = n1 + n2 - m1
        ok = (np.abs(m2) <= N) & (m1 != n1)
        if not ok.any():
            continue
        mm1, nn2 = np.broadcast_arrays(m1, n2)
        mm1, nn2, mm2 = mm1[ok], nn2[ok], m2[ok]
        t = (
            w1[mm1 + N] / (mm1 - n1)
            * c[n1 + N]
            * c[nn2 + N]
            * np.conj(c[mm1 + N])
            * np.conj(c[mm2 + N])
        )
        re_parts.append(t.real)
        im_parts.append(t.imag)
    if not re_parts:
        return 0j
    return complex(math.fsum(np.concatenate(re_parts)), math.fsum(np.concatenate(im_parts)))


def f_n(u: SpectralFunction, N: int, s: float) -> FunctionalValue:
    """F_N by direct enumeration of the quartic sum."""
    return FunctionalValue(2.0 * f_n_complex(u, N, s).real)


def f_n_batch(c: np.ndarray, N: int, s: float) -> np.ndarray:
    """F_N for a batch of coefficient arrays (last axis, cutoff >= N)."""
    c = pad(c, N)
    field = gauge_field(c, N)
    w = sobolev_weights(N, s)
    return 2.0 * np.sum(w * np.conj(c) * field, axis=-1).real


def _pair_data(c: np.ndarray, N: int):
    """Pairs (n1, m1) with the lag sum over (n2, m2) already done.

    ``sum_{n2} u(n2) conj(u(n2 - p))`` depends only on ``p = m1 - n1``.
    """
    ac = np.correlate(c, c, mode="full")  # lag p at index p + 2N
    idx = modes(N)
    n1, m1 = np.meshgrid(idx, idx, indexing="ij")
    n1, m1 = n1.ravel(), m1.ravel()
    keep = n1 != m1
    n1, m1 = n1[keep], m1[keep]
    prod = c[n1 + N] * np.conj(c[m1 + N]) * ac[(m1 - n1) + 2 * N]
    return n1, m1, prod


def f_split(u: SpectralFunction, N: int, s: float, tol: float = 1e-10, max_k: int = 64) -> FunctionalValue:
    """F_N = F^< + F^>= with the low part summed as a binomial series.

    On ``|n1 - m1| < min(|n1|, |m1|)`` the weight is expanded as
    ``|m1 n1|^s (1 + x)^s / (m1 - n1)`` with ``x = (m1 - n1)/n1``, ``|x| < 1``;
    the k = 0 term has vanishing real part and is dropped.  The series stops
    at the first order whose certified tail bound is below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    c = _low(u, N)
    n1, m1, prod = _pair_data(c, N)
    lo = np.abs(n1 - m1) < np.minimum(np.abs(n1), np.abs(m1))
    hi = ~lo

    w_hi = np.abs(m1[hi]).astype(float) ** (2 * s) / (m1[hi] - n1[hi])
    f_geq = 2.0 * math.fsum((w_hi * prod[hi]).real)

    a, b, q = n1[lo].astype(float), m1[lo].astype(float), prod[lo]
    if a.size == 0:
        return FunctionalValue(f_geq, (0.0, f_geq), 0.0, 0)
    x = (b - a) / a
    base = np.abs(a * b) ** s / (b - a)
    absx = np.abs(x)
    amp = 2.0 * np.abs(base * q)
    # |binom(s, k+1) / binom(s, k)| = |s - k| / (k + 1) <= 1 once k >= (s - 1)/2
    k_min = max(1, math.ceil(s))
    K, bound = None, math.inf
    for k in range(k_min, max_k + 1):
        ck = abs(binom(s, k + 1))
        bound = math.fsum(amp * ck * absx ** (k + 1) / (1.0 - absx))
        if bound <= tol:
            K = k
            break
    if K is None:
        raise SeriesTruncationError(f"tail bound {bound:.3e} > tol {tol:.3e} after {max_k} terms")
    parts = []
    for k in range(1, K + 1):
        parts.append((binom(s, k) * base * x**k * q).real)
    f_less = 2.0 * math.fsum(np.concatenate(parts))
    return FunctionalValue(f_less + f_geq, (f_less, f_geq), bound, K)


# ---------------------------------------------------------------------------
# divergence and Jacobian


def divergence_double_sum(u: SpectralFunction, N: int) -> float:
    """``2 sum_{|n|<=N} sum_{m != 0, |n-m| <= N} |u(n-m)|^2 / m``."""
    c = _low(u, N)
    p = np.abs(c) ** 2
    idx = modes(N)
    n, m = np.meshgrid(idx, np.arange(-2 * N, 2 * N + 1), indexing="ij")
    ok = (m != 0) & (np.abs(n - m) <= N)
    return 2.0 * math.fsum(p[(n - m)[ok] + N] / m[ok])


def divergence_closed(u: SpectralFunction, N: int) -> float:
    """``2 sum_{n=1}^N (|u(-n)|^2 - |u(n)|^2) sum_{m=N-n+1}^{N+n} 1/m``."""
    c = _low(u, N)
    if N == 0:
        return 0.0
    return math.fsum(divergence_weights(N) * np.abs(c) ** 2)


def divergence(u: SpectralFunction, N: int) -> float:
    """Divergence of ``i P_N(I[P_N u] P_N u)`` on E_N, cross-checked two ways.

    Agreement is required to 1e-12 relative to ``sum |w(n)| |u(n)|^2``, the
    natural magnitude of either sum.
    """
    a = divergence_double_sum(u, N)
    b = divergence_closed(u, N)
    if N:
        scale = math.fsum(np.abs(divergence_weights(N)) * np.abs(_low(u, N)) ** 2)
        if abs(a - b) > 1e-12 * scale:
            raise DivergenceMismatch(f"double sum {a!r} vs closed form {b!r}")
    return b


def jacobian_log_det(u: SpectralFunction, alpha: float, N: int, opts: FlowOptions | None = None) -> float:
    """log det D(P_N G^N_alpha)(u) as the integral of the divergence along the flow."""
    opts = opts or FlowOptions()
    _low(u, N)
    _, logdet, _ = flow_batch(u.coeffs, alpha, N, opts.step_count)
    return float(logdet)


# ---------------------------------------------------------------------------
# Littlewood-Paley statistics


def lp_stats(u: SpectralFunction, N: int, s: float, s_prime: float, n0: int) -> LPStats:
    if not 0 <= s_prime < s:
        raise ValueError("need 0 <= s_prime < s")
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    c = pad(u.coeffs, N)
    x, y = lp_blocks_batch(c, N, s)
    return LPStats(
        tuple(float(v) for v in x),
        tuple(float(v) for v in y),
        math.fsum(x),
        math.fsum(y),
        float(l_stat_batch(u.coeffs, s_prime, n0)),
    )


def lp_blocks_batch(c: np.ndarray, N: int, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-shell ``X_j`` and ``Y_j`` for a batch; shells on the last axis."""
    c = pad(c, N)
    a = np.abs(c)
    xs, ys = [], []
    for j in range(num_shells(N)):
        mask = shell_mask(N, j)
        xs.append(2.0 ** (j * (s - 0.5)) * np.sqrt(np.sum(a[..., mask] ** 2, axis=-1)))
        ys.append(np.sum(a[..., mask], axis=-1))
    return np.stack(xs, axis=-1), np.stack(ys, axis=-1)


def l_stat_batch(c: np.ndarray, s_prime: float, n0: int) -> np.ndarray:
    """``sup_{n >= n0} n^{s'} |u(n)|`` over the stored modes (0 if none)."""
    c = np.asarray(c)
    K = (c.shape[-1] - 1) // 2
    if n0 > K:
        return np.zeros(c.shape[:-1])
    n = np.arange(n0, K + 1)
    return np.max(n.astype(float) ** s_prime * np.abs(c[..., K + n0 :]), axis=-1)
