"""Truncated Fourier series on the circle.

A :class:`SpectralFunction` stores the coefficients ``u(n)`` for
``n = -N..N`` of ``u(x) = sum_n u(n) exp(i n x)`` in a dense array; index
``k`` of the array holds mode ``n = k - N``.  Norms follow the Plancherel
convention ``||u||_{L2}^2 = sum_n |u(n)|^2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np


class AliasingError(ValueError):
    """Raised when a grid is too coarse to represent a spectral function."""


def modes(cutoff: int) -> np.ndarray:
    """Integer frequencies ``-cutoff..cutoff`` in storage order."""
    return np.arange(-cutoff, cutoff + 1)


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError(f"cutoff must be >= 0, got {self.cutoff}")
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (2 * self.cutoff + 1,):
            raise ValueError(
                f"expected {2 * self.cutoff + 1} coefficients for cutoff {self.cutoff}, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, cutoff: int) -> "SpectralFunction":
        return cls(cutoff, np.zeros(2 * cutoff + 1, dtype=np.complex128))

    @classmethod
    def from_modes(cls, values: Mapping[int, complex], cutoff: int | None = None) -> "SpectralFunction":
        """Build from a sparse ``{n: u(n)}`` mapping."""
        if cutoff is None:
            cutoff = max((abs(n) for n in values), default=0)
        c = np.zeros(2 * cutoff + 1, dtype=np.complex128)
        for n, v in values.items():
            if abs(n) > cutoff:
                raise ValueError(f"mode {n} outside cutoff {cutoff}")
            c[n + cutoff] = v
        return cls(cutoff, c)

    def __getitem__(self, n: int) -> complex:
        if abs(n) > self.cutoff:
            return 0j
        return complex(self.coeffs[n + self.cutoff])

    def __iter__(self) -> Iterator[tuple[int, complex]]:
        for n, v in zip(modes(self.cutoff), self.coeffs):
            yield int(n), complex(v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpectralFunction):
            return NotImplemented
        return self.cutoff == other.cutoff and np.array_equal(self.coeffs, other.coeffs)

    def __sub__(self, other: "SpectralFunction") -> "SpectralFunction":
        K = max(self.cutoff, other.cutoff)
        return SpectralFunction(K, pad(self.coeffs, K) - pad(other.coeffs, K))

    def __add__(self, other: "SpectralFunction") -> "SpectralFunction":
        K = max(self.cutoff, other.cutoff)
        return SpectralFunction(K, pad(self.coeffs, K) + pad(other.coeffs, K))

    @property
    def modes(self) -> np.ndarray:
        return modes(self.cutoff)

    def to_dict(self) -> dict:
        return {"cutoff": self.cutoff, "coeffs": [[float(z.real), float(z.imag)] for z in self.coeffs]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SpectralFunction":
        try:
            cutoff = int(d["cutoff"])
            pairs = np.asarray(d["coeffs"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed SpectralFunction JSON: {exc}") from exc
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("coeffs must be a list of [re, im] pairs")
        return cls(cutoff, pairs[:, 0] + 1j * pairs[:, 1])

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "SpectralFunction":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "SpectralFunction":
        return cls.loads(Path(path).read_text())


def pad(coeffs: np.ndarray, cutoff: int) -> np.ndarray:
    """Zero-pad or truncate a (batch of) coefficient arrays to a new cutoff.

    Works on the last axis, so batches of shape ``(..., 2K+1)`` are fine.
    """
    coeffs = np.asarray(coeffs)
    K = (coeffs.shape[-1] - 1) // 2
    out = np.zeros(coeffs.shape[:-1] + (2 * cutoff + 1,), dtype=np.complex128)
    m = min(K, cutoff)
    out[..., cutoff - m : cutoff + m + 1] = coeffs[..., K - m : K + m + 1]
    return out


def project(u: SpectralFunction, M: int) -> SpectralFunction:
    """P_M u, returned with cutoff M."""
    if M < 0:
        raise ValueError("M must be >= 0")
    return SpectralFunction(M, pad(u.coeffs, M))


def shell_mask(cutoff: int, j: int) -> np.ndarray:
    """Boolean mask of the dyadic shell ``2^{j-1} < |n| <= 2^j`` (``|n| <= 1`` for j = 0)."""
    a = np.abs(modes(cutoff))
    if j == 0:
        return a <= 1
    return (a > 2 ** (j - 1)) & (a <= 2**j)


def num_shells(cutoff: int) -> int:
    """Number of dyadic shells needed to cover ``|n| <= cutoff``."""
    j = 0
    while 2**j < cutoff:
        j += 1
    return j + 1


def lp_block(u: SpectralFunction, j: int) -> SpectralFunction:
    """Littlewood-Paley block Delta_j u, same cutoff as ``u``."""
    if j < 0:
        raise ValueError("j must be >= 0")
    return SpectralFunction(u.cutoff, np.where(shell_mask(u.cutoff, j), u.coeffs, 0))


def l2_norm_sq(u: SpectralFunction) -> float:
    return float(np.sum(np.abs(u.coeffs) ** 2))


def sobolev_seminorm_sq(u: SpectralFunction, s: float) -> float:
    """sum over n != 0 of |n|^{2s} |u(n)|^2."""
    if s <= 0:
        raise ValueError("Sobolev index must be positive")
    return float(np.sum(sobolev_weights(u.cutoff, s) * np.abs(u.coeffs) ** 2))


def sobolev_norm_sq(u: SpectralFunction, s: float) -> float:
    return l2_norm_sq(u) + sobolev_seminorm_sq(u, s)


def sobolev_weights(cutoff: int, s: float) -> np.ndarray:
    """|n|^{2s} with the zero mode weighted 0."""
    a = np.abs(modes(cutoff)).astype(float)
    w = a ** (2 * s)
    w[cutoff] = 0.0
    return w


def autocorrelation(c: np.ndarray) -> np.ndarray:
    """Fourier coefficients of |u|^2 for ``u`` with coefficients ``c`` (cutoff N).

    Returns the array for m = -2N..2N of ``sum_l u(l) conj(u(l - m))`` by
    direct summation.
    """
    return np.correlate(c, c, mode="full")


def gauge_potential(u: SpectralFunction, N: int | None = None) -> SpectralFunction:
    """Zero-average primitive of |P_N u|^2, as a spectral function of cutoff 2N.

    ``I(0) = 0`` and ``I(m) = -(i/m) sum_l u(l) conj(u(l-m))`` for m != 0.
    """
    if N is None:
        N = u.cutoff
    c = pad(u.coeffs, N)
    ac = autocorrelation(c)
    m = modes(2 * N)
    out = np.zeros_like(ac)
    nz = m != 0
    out[nz] = -1j * ac[nz] / m[nz]
    return SpectralFunction(2 * N, out)


def evaluate(u: SpectralFunction, grid_size: int) -> np.ndarray:
    """Values of ``u`` at ``x_k = 2 pi k / grid_size``."""
    return evaluate_coeffs(u.coeffs, grid_size)


def evaluate_coeffs(coeffs: np.ndarray, grid_size: int) -> np.ndarray:
    """Batched :func:`evaluate` on raw coefficient arrays (last axis)."""
    K = (np.shape(coeffs)[-1] - 1) // 2
    if grid_size < 2 * K + 1:
        raise AliasingError(f"grid of size {grid_size} cannot resolve cutoff {K} (need >= {2 * K + 1})")
    buf = np.zeros(np.shape(coeffs)[:-1] + (grid_size,), dtype=np.complex128)
    buf[..., : K + 1] = coeffs[..., K:]
    if K:
        buf[..., -K:] = coeffs[..., :K]
    return np.fft.ifft(buf, axis=-1) * grid_size


def analyze(values: np.ndarray, cutoff: int) -> np.ndarray:
    """Discrete Fourier analysis of grid values back to modes ``-cutoff..cutoff``."""
    G = np.shape(values)[-1]
    if G < 2 * cutoff + 1:
        raise AliasingError(f"grid of size {G} cannot resolve cutoff {cutoff}")
    f = np.fft.fft(values, axis=-1) / G
    out = np.empty(np.shape(values)[:-1] + (2 * cutoff + 1,), dtype=np.complex128)
    out[..., cutoff:] = f[..., : cutoff + 1]
    if cutoff:
        out[..., :cutoff] = f[..., -cutoff:]
    return out
